import numpy as np
import pytest

from gmac_ldpc.channel import ChannelParams
from gmac_ldpc.degree import CodeEnsemble, DegreeDistribution
from gmac_ldpc.exit_chart import (
    CONVERGENCE_MI,
    exit_cv,
    exit_cv_inverse,
    exit_sv,
    exit_vc,
    exit_vs,
    f_mean,
    j_function,
    j_inverse,
    simulate_trajectory,
)

# ensembles from a finished (1.5, 1.0) design run, dc = (8, 6)
OPT1 = {
    2: 0.3023285738018107, 3: 0.2627598853507208, 13: 0.034720183306017144,
    14: 0.14379486296179456, 36: 0.02096192560838374, 37: 0.06829440945054872,
    100: 0.16714015952072434,
}
OPT2 = {
    2: 0.3244633808780845, 3: 0.2576488509463613, 11: 0.09874033975096032,
    12: 0.06033651157168288, 32: 0.09850621504378394, 100: 0.16030470180912704,
}


def opt_pair():
    return (
        CodeEnsemble(DegreeDistribution(OPT1), 8),
        CodeEnsemble(DegreeDistribution(OPT2), 6),
    )


def test_j_endpoints_and_monotonicity():
    assert j_function(0.0) == 0.0
    assert j_function(30.0) == pytest.approx(1.0, abs=1e-12)
    s = np.linspace(0.0, 14.0, 400)
    assert np.all(np.diff(j_function(s)) >= 0)
    assert np.all((j_function(s) >= 0) & (j_function(s) <= 1))


def test_j_matches_monte_carlo():
    # I = 1 - E[log2(1 + exp(-L))] with L ~ N(s^2/2, s^2)
    rng = np.random.default_rng(5)
    for sig in (0.8, 2.0, 4.0):
        l = sig**2 / 2 + sig * rng.normal(size=4_000_000)
        mc = 1 - np.logaddexp(0, -l).mean() / np.log(2)
        assert j_function(sig) == pytest.approx(mc, abs=2e-3)


def test_j_roundtrip_information_space():
    i = np.linspace(1e-6, 1 - 1e-6, 1000)
    assert np.abs(j_function(j_inverse(i)) - i).max() <= 1e-8


def test_j_roundtrip_sigma_space():
    # above sigma ~ 14 the float64 J is exactly 1 and has no inverse
    s = np.linspace(0.05, 12.0, 1000)
    assert np.abs(j_inverse(j_function(s)) - s).max() <= 1e-7


def test_j_inverse_domain():
    with pytest.raises(ValueError):
        j_inverse(1.0)
    with pytest.raises(ValueError):
        j_inverse(-0.1)
    assert j_inverse(0.0) == 0.0


def test_f_limits_reach_twice_target_power():
    for p1, p2 in ((1.5, 1.0), (3.0, 1.0)):
        cp = ChannelParams(p1, p2)
        for user, pt in ((1, p1), (2, p2)):
            for branch in (1, -1):
                assert abs(f_mean(1e4, cp, user, branch) - 2 * pt) <= 1e-2


def test_f_branches_monotone_toward_limit():
    # the +1 branch starts above 2P (aligned interference inflates the
    # mean before cancellation) and descends; the -1 branch ascends
    mu = np.linspace(0.0, 50.0, 200)
    for p1, p2 in ((1.5, 1.0), (3.0, 1.0)):
        cp = ChannelParams(p1, p2)
        for user in (1, 2):
            up = f_mean(mu, cp, user, -1)
            down = f_mean(mu, cp, user, 1)
            assert np.all(np.diff(up) >= -1e-12)
            assert np.all(np.diff(down) <= 1e-12)
            assert np.all(down >= up)


def test_f_weak_user_low_branch_starts_negative():
    # at (1.5, 1) the dominated user's -1 branch mean is negative until
    # the feedback is good enough; downstream consumers clamp at zero
    assert f_mean(0.0, ChannelParams(1.5, 1.0), 2, -1) < 0.0
    assert f_mean(20.0, ChannelParams(1.5, 1.0), 2, -1) > 0.0


def test_f_user_swap_symmetry():
    mu = np.linspace(0.0, 20.0, 50)
    a = f_mean(mu, ChannelParams(1.5, 1.0), 1, 1)
    b = f_mean(mu, ChannelParams(1.0, 1.5), 2, 1)
    assert np.allclose(a, b, atol=1e-13)


def test_f_no_interferer_is_flat():
    # with the other user powered off the message mean is 2P regardless
    # of the feedback quality
    mu = np.linspace(0.0, 100.0, 30)
    v = f_mean(mu, ChannelParams(1.5, 0.0), 1, 1)
    assert np.allclose(v, 3.0, atol=1e-12)


def test_f_input_validation():
    cp = ChannelParams(1.0, 1.0)
    with pytest.raises(ValueError):
        f_mean(1.0, cp, 3, 1)
    with pytest.raises(ValueError):
        f_mean(1.0, cp, 1, 0)
    with pytest.raises(ValueError):
        f_mean(-1.0, cp, 1, 1)


def test_exit_vc_matches_monte_carlo():
    lam = DegreeDistribution({2: 0.4, 3: 0.3, 10: 0.3})
    i_cv, i_sv = 0.55, 0.35
    sc, ss = j_inverse(i_cv), j_inverse(i_sv)
    rng = np.random.default_rng(9)
    n = 1_500_000
    deg = rng.choice(lam.degrees(), size=n, p=lam.weights())
    tot = np.zeros(n)
    for d in (2, 3, 10):
        m = deg == d
        k = int(m.sum())
        tot[m] = (
            sc**2 / 2 * (d - 1) + sc * rng.normal(size=(k, d - 1)).sum(1)
            + ss**2 / 2 + ss * rng.normal(size=k)
        )
    mc = 1 - np.logaddexp(0, -tot).mean() / np.log(2)
    assert exit_vc(lam, i_cv, i_sv) == pytest.approx(mc, abs=2e-3)


def test_exit_vc_endpoints():
    lam = DegreeDistribution({2: 0.5, 3: 0.5})
    assert exit_vc(lam, 0.0, 0.0) == 0.0
    assert exit_vc(lam, 1.0 - 1e-9, 0.5) > 0.999


def test_exit_vs_hand_computed():
    # lam(x) = x has all nodes at degree 2, one state message from two
    # check inputs
    lam = DegreeDistribution({2: 1.0})
    i_cv = 0.6
    expect = j_function(np.sqrt(2.0) * j_inverse(i_cv))
    assert exit_vs(lam, i_cv) == pytest.approx(expect, abs=1e-9)


def test_exit_vs_mixed_degrees_uses_node_perspective():
    lam = DegreeDistribution({2: 0.5, 4: 0.5})
    # node fractions 2/3 and 1/3
    i_cv = 0.4
    sc = j_inverse(i_cv)
    expect = 2 / 3 * j_function(np.sqrt(2) * sc) + 1 / 3 * j_function(2 * sc)
    assert exit_vs(lam, i_cv) == pytest.approx(expect, abs=1e-9)


def test_exit_cv_inverse_roundtrip():
    # round-trip through the check-output side; the other direction
    # saturates J in float64 for small i_vc at large dc
    y = np.linspace(0.01, 0.99, 99)
    for dc in (4, 8, 16):
        back = exit_cv(dc, exit_cv_inverse(dc, y))
        assert np.abs(back - y).max() < 1e-9


def test_exit_cv_monotone_and_bounded():
    x = np.linspace(0.0, 1.0, 101)
    v = exit_cv(8, x)
    assert np.all(np.diff(v) >= 0)
    assert v.min() >= 0 and v.max() <= 1


def test_exit_sv_no_interferer_matches_awgn():
    # interferer off: LLR is N(2P, 4P), so the MI is J(2*sqrt(P))
    p = 1.5
    v = exit_sv(0.0, ChannelParams(p, 0.0), 1)
    assert v == pytest.approx(j_function(2 * np.sqrt(p)), abs=1e-9)


def test_exit_sv_monotone_and_user_symmetric():
    cp = ChannelParams(1.0, 1.0)
    i = np.linspace(0.0, 1.0 - 1e-6, 50)
    v1 = np.array([exit_sv(x, cp, 1) for x in i])
    v2 = np.array([exit_sv(x, cp, 2) for x in i])
    assert np.allclose(v1, v2, atol=1e-13)
    assert np.all(np.diff(v1) >= -1e-12)


def test_exit_sv_increases_with_interference_cancellation():
    cp = ChannelParams(1.5, 1.0)
    lo = exit_sv(0.0, cp, 1)
    hi = exit_sv(1.0 - 1e-9, cp, 1)
    assert hi > lo
    # perfect feedback removes the interferer entirely
    assert hi == pytest.approx(j_function(2 * np.sqrt(1.5)), abs=1e-6)


def test_trajectory_optimized_pair_converges_under_both_couplings():
    e1, e2 = opt_pair()
    cp = ChannelParams(1.5, 1.0)
    lock = simulate_trajectory(e1, e2, cp, max_iters=5000, coupling="lockstep")
    joint = simulate_trajectory(e1, e2, cp, max_iters=5000, coupling="joint")
    for t in (lock, joint):
        assert t.converged
        assert t.final.i_vc[0] >= CONVERGENCE_MI
        assert t.final.i_vc[1] >= CONVERGENCE_MI
        # a near-capacity pair crawls through the tunnel pinch
        assert 1000 < t.n_iterations < 5000


def test_trajectory_alternating_schedule_not_slower():
    e1, e2 = opt_pair()
    cp = ChannelParams(1.5, 1.0)
    flood = simulate_trajectory(e1, e2, cp, max_iters=5000, schedule="flooding")
    alt = simulate_trajectory(e1, e2, cp, max_iters=5000, schedule="alternating")
    assert alt.converged and flood.converged
    assert alt.n_iterations <= flood.n_iterations


def test_trajectory_fails_one_db_down():
    e1, e2 = opt_pair()
    cp = ChannelParams(1.5, 1.0).scaled_db(-1.0)
    t = simulate_trajectory(e1, e2, cp, max_iters=5000, coupling="lockstep")
    assert not t.converged
    # the recursion stalls well short of the threshold, not just late
    assert max(t.final.i_vc) < 0.5


def test_trajectory_monotone_mi():
    e1, e2 = opt_pair()
    t = simulate_trajectory(e1, e2, ChannelParams(1.5, 1.0), max_iters=300)
    for u in (0, 1):
        v = np.array([s.i_vc[u] for s in t.states])
        assert np.all(np.diff(v) >= -1e-12)


def test_trajectory_deterministic():
    e1, e2 = opt_pair()
    cp = ChannelParams(1.5, 1.0)
    a = simulate_trajectory(e1, e2, cp, max_iters=500)
    b = simulate_trajectory(e1, e2, cp, max_iters=500)
    assert len(a.states) == len(b.states)
    assert np.array_equal(
        np.vstack([s.flat() for s in a.states]),
        np.vstack([s.flat() for s in b.states]),
    )


def test_trajectory_state_layout():
    e1, e2 = opt_pair()
    t = simulate_trajectory(e1, e2, ChannelParams(1.5, 1.0), max_iters=3)
    s = t.states[1]
    f = s.flat()
    assert f.shape == (8,)
    assert tuple(f[:4]) == (s.i_sv[0], s.i_vc[0], s.i_cv[0], s.i_vs[0])
    assert tuple(f[4:]) == (s.i_sv[1], s.i_vc[1], s.i_cv[1], s.i_vs[1])
    assert t.states[0].iteration == 0
    assert t.n_iterations == 3


def test_trajectory_equal_power_identical_ensembles_symmetric():
    lam = DegreeDistribution({2: 0.25, 3: 0.35, 10: 0.4})
    e = CodeEnsemble(lam, 6)
    cp = ChannelParams(1.0, 1.0)
    for coupling in ("joint", "lockstep"):
        t = simulate_trajectory(e, e, cp, max_iters=200, coupling=coupling)
        for s in t.states:
            assert s.i_sv[0] == s.i_sv[1]
            assert s.i_vc[0] == s.i_vc[1]
            assert s.i_cv[0] == s.i_cv[1]
            assert s.i_vs[0] == s.i_vs[1]


def test_trajectory_rejects_unknown_modes():
    e1, e2 = opt_pair()
    cp = ChannelParams(1.5, 1.0)
    with pytest.raises(ValueError):
        simulate_trajectory(e1, e2, cp, schedule="serial")
    with pytest.raises(ValueError):
        simulate_trajectory(e1, e2, cp, coupling="genie")
