"""Degree-distribution optimization via alternating linear programs.

One user's edge distribution is optimized while the other is held fixed;
the roles then swap until both the sum rate and the coefficients stop
moving.  Each LP maximizes sum(lambda_i / i), which is monotone in the
design rate for a fixed check degree, subject to the decoding tunnel
staying open at a set of sampled operating points and to the stability
bound on lambda_2.

The tunnel constraints model the two decoders as progressing through the
same check-side MI level (the lockstep coupling of simulate_trajectory):
at a grid point x the free user's state-side MI is exit_sv of the fixed
partner's variable-to-state curve evaluated at x.  This makes each LP
row a pure function of the partner's distribution, and a pair that
satisfies every row with slack converges under the lockstep recursion.

The constraint grid is uniform plus geometrically spaced points at both
ends.  Near zero the required check-side curve rises with unbounded
slope, so a uniform grid leaves the launch region unconstrained and the
optimized pair can stall within the first mesh cell.  Near one no fixed
slack is enforceable at all: the achievable margin scales like the
distance to saturation times the lambda_2 headroom, so constraints
within CORNER_MI of saturation are dropped and the stability bound owns
that corner.  Operating points visited by the current iterate's own
recursion are added on top of the grid; a stalled iterate piles points
onto its pinch region, so the next round's LP is forced to repair
exactly the cell where the previous answer failed.
"""

from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np
from scipy.optimize import linprog

from .channel import ChannelParams, sum_capacity_bpsk
from .degree import CodeEnsemble, DegreeDistribution, stability_bound
from .exit_chart import (
    MI_MAX,
    ExitTrajectory,
    _jtab_forward,
    _jtab_inverse,
    f_mean,
    simulate_trajectory,
)

PRUNE_TOL = 1e-6
DRIFT_TOL = 1e-7
# constraints whose check-side target is within this of 1 are excluded
CORNER_MI = 2e-3
# geometric densification of the grid ends
LAUNCH_LO, LAUNCH_HI, LAUNCH_POINTS = 1e-5, 0.1, 48
TOP_POINTS = 32
# iteration budget for the feasibility trajectory; slack 1e-4 means the
# recursion can legitimately crawl for thousands of iterations
FEASIBILITY_ITERS = 20000
HARVEST_ITERS = 4000


class LPInfeasibleError(RuntimeError):
    """The tunnel constraints admit no degree distribution."""


class SolverError(RuntimeError):
    """The LP solver failed for a reason other than infeasibility."""


@dataclass(frozen=True)
class DesignSpec:
    params: ChannelParams
    v_max: int = 100
    dc_range1: tuple = (4, 12)
    dc_range2: tuple = (4, 12)
    constraint_grid_size: int = 128
    slack: float = 1e-4
    max_alternations: int = 50
    rate_tol: float = 1e-4

    def __post_init__(self):
        if self.v_max < 3:
            raise ValueError("v_max must be at least 3")
        if self.constraint_grid_size < 16:
            raise ValueError("constraint grid too coarse")
        if self.slack <= 0:
            raise ValueError("slack must be positive")
        for r in (self.dc_range1, self.dc_range2):
            if r[0] < 3 or r[1] < r[0]:
                raise ValueError(f"bad check-degree range {r}")


@dataclass(frozen=True)
class Candidate:
    """Outcome of one alternation run at a fixed check-degree pair."""

    dc1: int
    dc2: int
    ensembles: tuple
    sum_rate: float
    trajectory: ExitTrajectory
    feasible: bool
    diagnostic: str
    rate_log: tuple


@dataclass(frozen=True)
class DesignResult:
    params: ChannelParams
    ensembles: tuple
    sum_rate: float
    capacity: float
    gap: float
    trajectory: ExitTrajectory
    sweep_log: tuple


def _exit_sv_batch(i_vs, params, target_user):
    sig = _jtab_inverse(np.clip(i_vs, 0.0, MI_MAX))
    mu = 0.5 * sig * sig
    fp = np.maximum(f_mean(mu, params, target_user, 1), 0.0)
    fm = np.maximum(f_mean(mu, params, target_user, -1), 0.0)
    return 0.5 * (_jtab_forward(np.sqrt(2.0 * fp)) + _jtab_forward(np.sqrt(2.0 * fm)))


def _cv_inverse_batch(dc, i_cv):
    s = _jtab_inverse(np.clip(1.0 - i_cv, 0.0, MI_MAX))
    return 1.0 - _jtab_forward(s / np.sqrt(dc - 1.0))


def _constraint_grid(grid_size, launch_points=LAUNCH_POINTS, top_points=TOP_POINTS):
    return np.unique(
        np.concatenate(
            [
                np.linspace(0.0, 1.0 - 1e-5, grid_size),
                np.geomspace(LAUNCH_LO, LAUNCH_HI, launch_points),
                1.0 - np.geomspace(CORNER_MI, LAUNCH_HI, top_points),
            ]
        )
    )


def _partner_isv(fixed: CodeEnsemble, x, free_user, params):
    """State-side MI seen by the free user at its own check MI x."""
    nd = fixed.node_dist
    deg = np.sqrt(nd.degrees().astype(float))
    w = nd.weights()
    sc = _jtab_inverse(np.clip(x, 0.0, MI_MAX))
    i_vs = (w[None, :] * _jtab_forward(deg[None, :] * sc[:, None])).sum(axis=1)
    return _exit_sv_batch(i_vs, params, free_user)


def _visited_cells(traj: ExitTrajectory, user: int):
    """Check-side MI values a trajectory passed through, on a 1e-3 mesh.

    Rounding keeps the accumulated point set small; a crawling
    recursion spends many iterations inside one cell.
    """
    vals = np.array([s.i_cv[user - 1] for s in traj.states])
    return np.unique(np.round(vals, 3))


def operating_points(
    fixed: CodeEnsemble,
    current: CodeEnsemble,
    free_user: int,
    spec: DesignSpec,
    extra_points=(),
):
    """Sample (i_cv, i_sv) pairs the free user must survive.

    The check-side values are the end-densified grid, the cells the
    current iterate's own recursion visits, and any caller-supplied
    extras; the state-side values come from the fixed partner's curve.
    Returns the points and the harvesting trajectory.
    """
    if free_user == 1:
        e1, e2 = current, fixed
    else:
        e1, e2 = fixed, current
    traj = simulate_trajectory(
        e1, e2, spec.params, max_iters=HARVEST_ITERS, coupling="lockstep"
    )
    x = np.unique(
        np.concatenate(
            [
                _constraint_grid(spec.constraint_grid_size),
                _visited_cells(traj, free_user),
                np.asarray(extra_points, dtype=float),
            ]
        )
    )
    sv = _partner_isv(fixed, x, free_user, spec.params)
    return x, sv, traj


def optimize_user(
    fixed: CodeEnsemble,
    free_dc: int,
    free_user: int,
    spec: DesignSpec,
    current: CodeEnsemble = None,
    extra_points=(),
) -> DegreeDistribution:
    """Solve the LP for one user's edge distribution.

    `current` seeds the point harvest; it defaults to the standard
    initialization when absent.
    """
    if current is None:
        current = CodeEnsemble(_initial_lambda(_power_of(spec, free_user), free_dc, spec), free_dc)
    x, sv, _ = operating_points(fixed, current, free_user, spec, extra_points)
    return _solve_lp(x, sv, free_dc, free_user, spec)


def _solve_lp(x, sv, free_dc, free_user, spec: DesignSpec) -> DegreeDistribution:
    base = _cv_inverse_batch(free_dc, x)
    # no slack is enforceable against a target this close to saturation;
    # the stability bound owns the corner
    keep = base < 1.0 - CORNER_MI
    x, sv, base = x[keep], sv[keep], base[keep]
    rhs = base + spec.slack

    degrees = np.arange(2, spec.v_max + 1)
    sc = _jtab_inverse(np.clip(x, 0.0, MI_MAX))
    ss = _jtab_inverse(np.clip(sv, 0.0, MI_MAX))
    a = _jtab_forward(
        np.sqrt((degrees[None, :] - 1) * sc[:, None] ** 2 + ss[:, None] ** 2)
    )

    power = _power_of(spec, free_user)
    bound = stability_bound(power, free_dc) - spec.slack
    stab_row = np.zeros(len(degrees))
    stab_row[0] = 1.0
    res = linprog(
        c=-1.0 / degrees,
        A_ub=np.vstack([-a, stab_row[None, :]]),
        b_ub=np.concatenate([-rhs, [bound]]),
        A_eq=np.ones((1, len(degrees))),
        b_eq=[1.0],
        bounds=(0.0, 1.0),
        method="highs",
    )
    if res.status == 2:
        raise LPInfeasibleError(
            f"no degree distribution opens the tunnel for user {free_user} at dc={free_dc}"
        )
    if res.status != 0:
        raise SolverError(f"LP solver status {res.status}: {res.message}")
    lam = res.x
    lam[lam < PRUNE_TOL] = 0.0
    lam = lam / lam.sum()
    coeffs = {int(d): float(v) for d, v in zip(degrees, lam) if v > 0.0}
    return DegreeDistribution(coeffs, v_max=spec.v_max)


def _power_of(spec, user):
    return spec.params.p1 if user == 1 else spec.params.p2


def _initial_lambda(power, dc, spec) -> DegreeDistribution:
    """Heuristic start: mass at 2, 3 and v_max, stability respected."""
    lam2 = min(0.3, stability_bound(power, dc) - spec.slack)
    return DegreeDistribution(
        {2: lam2, 3: 0.6 - lam2, spec.v_max: 0.4}, v_max=spec.v_max
    )


def alternate(spec: DesignSpec, dc1: int, dc2: int) -> Candidate:
    """Alternating LP rounds for one check-degree pair.

    Every cell either user's harvesting recursion ever visits is kept
    as a constraint point in all later rounds, so a pinch discovered in
    one round stays repaired and the constraint set stabilizes; after
    that the iteration contracts onto an LP vertex.  Stops when the sum
    rate improves by less than rate_tol and the coefficients have
    stopped drifting; the drift condition lets the equal-power case
    settle onto its symmetric vertex exactly instead of freezing one
    round early with a leftover asymmetry.
    """
    e1 = CodeEnsemble(_initial_lambda(spec.params.p1, dc1, spec), dc1)
    e2 = CodeEnsemble(_initial_lambda(spec.params.p2, dc2, spec), dc2)
    rate_log = []
    prev_sum = -np.inf
    solved = False
    diag = ""
    seen = np.empty(0)
    for _ in range(spec.max_alternations):
        try:
            x1, sv1, t1 = operating_points(e2, e1, 1, spec, extra_points=seen)
            lam1 = _solve_lp(x1, sv1, dc1, 1, spec)
            new_e1 = CodeEnsemble(lam1, dc1)
            x2, sv2, t2 = operating_points(new_e1, e2, 2, spec, extra_points=seen)
            lam2 = _solve_lp(x2, sv2, dc2, 2, spec)
            new_e2 = CodeEnsemble(lam2, dc2)
            seen = np.union1d(
                seen,
                np.concatenate(
                    [_visited_cells(t, u) for t in (t1, t2) for u in (1, 2)]
                ),
            )
        except LPInfeasibleError as err:
            if not solved:
                return Candidate(
                    dc1, dc2, (e1, e2), float("nan"), None, False, str(err), ()
                )
            diag = f"stopped on late infeasibility: {err}"
            break
        drift = max(
            _coeff_drift(e1.lam, new_e1.lam), _coeff_drift(e2.lam, new_e2.lam)
        )
        e1, e2 = new_e1, new_e2
        solved = True
        sum_rate = e1.rate + e2.rate
        rate_log.append(sum_rate)
        if abs(sum_rate - prev_sum) < spec.rate_tol and drift < DRIFT_TOL:
            break
        prev_sum = sum_rate
    traj = simulate_trajectory(
        e1, e2, spec.params, max_iters=FEASIBILITY_ITERS, coupling="lockstep"
    )
    feasible = solved and traj.converged
    if solved and not traj.converged:
        diag = diag or "final trajectory failed to converge"
    return Candidate(
        dc1, dc2, (e1, e2), e1.rate + e2.rate, traj, feasible, diag, tuple(rate_log)
    )


def _coeff_drift(a: DegreeDistribution, b: DegreeDistribution) -> float:
    keys = set(a.coeffs) | set(b.coeffs)
    return max(abs(a.coeffs.get(k, 0.0) - b.coeffs.get(k, 0.0)) for k in keys)


def _alternate_args(args):
    return alternate(*args)


def sweep(spec: DesignSpec, workers: int = 1) -> DesignResult:
    """Run the alternation for every check-degree pair; best sum rate wins.

    Ties prefer the smaller dc1+dc2, then the smaller dc1.  The result
    is independent of the worker count: candidates are reduced in pair
    order.
    """
    pairs = [
        (spec, d1, d2)
        for d1 in range(spec.dc_range1[0], spec.dc_range1[1] + 1)
        for d2 in range(spec.dc_range2[0], spec.dc_range2[1] + 1)
    ]
    if workers > 1:
        with Pool(workers) as pool:
            cands = pool.map(_alternate_args, pairs)
    else:
        cands = [_alternate_args(p) for p in pairs]
    log = tuple((c.dc1, c.dc2, c.sum_rate) for c in cands if c.feasible)
    feasible = [c for c in cands if c.feasible]
    if not feasible:
        lines = "; ".join(f"({c.dc1},{c.dc2}): {c.diagnostic}" for c in cands[:8])
        raise LPInfeasibleError(f"no feasible check-degree pair: {lines}")
    best = min(feasible, key=lambda c: (-c.sum_rate, c.dc1 + c.dc2, c.dc1))
    cap = sum_capacity_bpsk(spec.params)
    return DesignResult(
        params=spec.params,
        ensembles=best.ensembles,
        sum_rate=best.sum_rate,
        capacity=cap,
        gap=cap - best.sum_rate,
        trajectory=best.trajectory,
        sweep_log=log,
    )


def verify_constraints(result_ensembles, spec: DesignSpec, grid_factor: int = 4) -> float:
    """Worst constraint margin of a finished pair at a denser grid.

    Re-evaluates the tunnel constraints at grid_factor times the design
    density and returns min over both users of (achieved - required -
    slack/2); nonnegative means the design generalizes off its own
    constraint set.
    """
    e1, e2 = result_ensembles
    x = _constraint_grid(
        spec.constraint_grid_size * grid_factor,
        LAUNCH_POINTS * grid_factor,
        TOP_POINTS * grid_factor,
    )
    worst = np.inf
    for user, (free, fixed) in ((1, (e1, e2)), (2, (e2, e1))):
        sv = _partner_isv(fixed, x, user, spec.params)
        base = _cv_inverse_batch(free.dc, x)
        keep = base < 1.0 - CORNER_MI
        sc = _jtab_inverse(np.clip(x[keep], 0.0, MI_MAX))
        ss = _jtab_inverse(np.clip(sv[keep], 0.0, MI_MAX))
        d = free.lam.degrees()
        a = _jtab_forward(np.sqrt((d[None, :] - 1) * sc[:, None] ** 2 + ss[:, None] ** 2))
        margin = a @ free.lam.weights() - base[keep] - spec.slack / 2.0
        worst = min(worst, float(margin.min()))
    return worst
