"""EXIT-chart machinery for the joint decoder on the two-user MAC.

The J function maps the standard deviation sigma of a symmetric Gaussian
LLR (mean sigma^2/2, variance sigma^2) to its mutual information with
the underlying BPSK bit.  All message densities are modeled this way;
the state node is handled through the four F mean functions, which give
the exact conditional mean of the state-to-variable message when the
interferer's feedback is a symmetric Gaussian with mean mu.

Public functions evaluate J and its inverse exactly (quadrature plus
bisection).  Trajectory simulation and the design LP go through 4096
point interpolation tables instead, accurate to about 1e-6, which is
far below every tolerance that matters downstream.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams
from .degree import DegreeDistribution, edge_to_node

LOG2 = np.log(2.0)
MI_MAX = 1.0 - 1e-12
CONVERGENCE_MI = 1.0 - 1e-4

_GH200_Z, _GH200_W = np.polynomial.hermite.hermgauss(200)
_GH60_Z, _GH60_W = np.polynomial.hermite.hermgauss(60)
_SQRT_PI = np.sqrt(np.pi)


def j_function(sigma):
    """Mutual information of a symmetric Gaussian LLR with std sigma.

    Vectorized; exact to quadrature precision (200 Hermite nodes).
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    # L ~ N(sigma^2/2, sigma^2); I = 1 - E[log2(1 + exp(-L))]
    l = sigma[..., None] ** 2 / 2.0 + np.sqrt(2.0) * sigma[..., None] * _GH200_Z
    val = np.logaddexp(0.0, -l) @ _GH200_W / (_SQRT_PI * LOG2)
    # the weight sum carries one ulp of error, enough to push J(0) below 0
    out = np.clip(1.0 - val, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


# interpolation grid, dense near 0 where J curves hardest
_SIGMA_GRID = 24.0 * (np.arange(4096) / 4095.0) ** 1.5
_I_GRID = j_function(_SIGMA_GRID)
# strictly increasing prefix; J saturates to 1.0 in float64 near sigma=17
_INC_END = int(np.argmax(np.diff(_I_GRID) <= 0.0)) + 1
if np.all(np.diff(_I_GRID) > 0.0):
    _INC_END = len(_I_GRID)


def _jtab_forward(sigma):
    """Table lookup for J, saturating to 1.0 past the grid."""
    return np.interp(sigma, _SIGMA_GRID, _I_GRID)


def _jtab_inverse(i):
    """Table lookup for J inverse; MI at or above the grid top clamps."""
    return np.interp(i, _I_GRID[:_INC_END], _SIGMA_GRID[:_INC_END])


def j_inverse(i):
    """Inverse of j_function by bracketed bisection, vectorized.

    Raises for i outside [0, 1); the MI of any finite-sigma message is
    strictly below 1, so there is no sigma to return at i = 1.
    """
    i = np.asarray(i, dtype=float)
    if np.any((i < 0.0) | (i >= 1.0)):
        raise ValueError("mutual information must lie in [0, 1)")
    idx = np.searchsorted(_I_GRID[:_INC_END], i)
    idx = np.clip(idx, 1, _INC_END - 1)
    lo = _SIGMA_GRID[idx - 1]
    hi = _SIGMA_GRID[idx]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = j_function(mid) < i
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = np.where(i == 0.0, 0.0, 0.5 * (lo + hi))
    return float(out) if out.ndim == 0 else out


def _sigma_of(i):
    # convergence drives MI into the saturated zone; clamp before inverting
    return j_inverse(np.clip(i, 0.0, MI_MAX))


def f_mean(mu, params: ChannelParams, target_user: int, branch: int):
    """Conditional mean of the state-to-variable message for one user.

    The target user transmits +1; the interferer's variable-to-state
    feedback is symmetric Gaussian with mean branch*mu (variance 2*mu),
    conditioned on the interferer bit matching the branch sign.  The
    2D expectation over noise and feedback collapses to one Gaussian of
    variance 4*P_other + 2*mu, integrated with 60 Hermite nodes.

    Both branches approach 2*P_target as mu grows.
    """
    if target_user == 1:
        pt, po = params.p1, params.p2
    elif target_user == 2:
        pt, po = params.p2, params.p1
    else:
        raise ValueError(f"target_user must be 1 or 2, got {target_user}")
    if branch not in (1, -1):
        raise ValueError(f"branch must be +1 or -1, got {branch}")
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("mu must be nonnegative")
    cross = 4.0 * np.sqrt(pt * po)
    v = np.sqrt(4.0 * mu[..., None] + 8.0 * po) * _GH60_Z
    if branch == 1:
        base = v + mu[..., None] + 2.0 * po
        const = 2.0 * pt + cross
    else:
        base = v - mu[..., None] - 2.0 * po
        const = 2.0 * pt
    gap = np.logaddexp(0.0, base) - np.logaddexp(0.0, base + cross)
    out = const + gap @ _GH60_W / _SQRT_PI
    return float(out) if out.ndim == 0 else out


def exit_vc(lam: DegreeDistribution, i_cv, i_sv):
    """Average MI of variable-to-check messages given input MIs.

    A degree-i variable node combines i-1 check inputs with the state
    input; variances add under the Gaussian model.  Averaged over the
    edge-perspective distribution lam.
    """
    sc = _sigma_of(i_cv)
    ss = _sigma_of(i_sv)
    d = lam.degrees()
    sig = np.sqrt((d - 1) * sc**2 + ss**2)
    return float(lam.weights() @ j_function(sig))


def exit_vs(lam: DegreeDistribution, i_cv):
    """Average MI of variable-to-state messages given check-side MI.

    Each variable node sends one state message built from all its check
    inputs, so the average runs over the node-perspective distribution.
    """
    sc = _sigma_of(i_cv)
    nd = edge_to_node(lam)
    sig = np.sqrt(nd.degrees() * sc**2)
    return float(nd.weights() @ j_function(sig))


def exit_cv(dc: int, i_vc):
    """MI of check-to-variable messages from a degree-dc check node."""
    s = _sigma_of(1.0 - np.asarray(i_vc, dtype=float))
    out = 1.0 - j_function(np.sqrt(dc - 1.0) * s)
    return float(out) if np.ndim(out) == 0 else out


def exit_cv_inverse(dc: int, i_cv):
    """Variable-side MI a degree-dc check needs to emit MI i_cv.

    Exact inverse of exit_cv for a single check degree.
    """
    s = _sigma_of(1.0 - np.asarray(i_cv, dtype=float))
    out = 1.0 - j_function(s / np.sqrt(dc - 1.0))
    return float(out) if np.ndim(out) == 0 else out


def exit_sv(i_vs_other, params: ChannelParams, target_user: int):
    """MI of state-to-variable messages toward one user.

    The interferer's feedback MI fixes mu; the message is modeled as an
    equal mixture of two symmetric Gaussians whose means are the two
    branch F values.
    """
    sig = _sigma_of(i_vs_other)
    mu = 0.5 * sig * sig
    fp = f_mean(mu, params, target_user, 1)
    fm = f_mean(mu, params, target_user, -1)
    # a dominated interferer can drive the low branch mean to zero or
    # below; such a message carries no usable information
    ip = j_function(np.sqrt(2.0 * max(fp, 0.0)))
    im = j_function(np.sqrt(2.0 * max(fm, 0.0)))
    return 0.5 * (ip + im)


def _exit_sv_fast(i_vs_other, params, target_user):
    sig = _jtab_inverse(min(i_vs_other, MI_MAX))
    mu = 0.5 * sig * sig
    fp = f_mean(mu, params, target_user, 1)
    fm = f_mean(mu, params, target_user, -1)
    ip = _jtab_forward(np.sqrt(2.0 * max(fp, 0.0)))
    im = _jtab_forward(np.sqrt(2.0 * max(fm, 0.0)))
    return 0.5 * (ip + im)


@dataclass(frozen=True)
class ExitState:
    """Per-iteration MI snapshot; each field holds (user1, user2)."""

    iteration: int
    i_sv: tuple
    i_vc: tuple
    i_cv: tuple
    i_vs: tuple

    def flat(self):
        return np.array(
            [
                self.i_sv[0], self.i_vc[0], self.i_cv[0], self.i_vs[0],
                self.i_sv[1], self.i_vc[1], self.i_cv[1], self.i_vs[1],
            ]
        )


@dataclass(frozen=True)
class ExitTrajectory:
    states: tuple
    converged: bool

    @property
    def final(self) -> ExitState:
        return self.states[-1]

    @property
    def n_iterations(self) -> int:
        return self.states[-1].iteration


class _UserTrack:
    """Precomputed degree arrays plus the per-user fast EXIT steps."""

    def __init__(self, ensemble):
        self.dc = ensemble.dc
        lam = ensemble.lam
        self.deg = lam.degrees()
        self.w = lam.weights()
        nd = edge_to_node(lam)
        self.ndeg = nd.degrees()
        self.nw = nd.weights()

    def vc(self, i_cv, i_sv):
        sc = _jtab_inverse(min(i_cv, MI_MAX))
        ss = _jtab_inverse(min(i_sv, MI_MAX))
        return float(self.w @ _jtab_forward(np.sqrt((self.deg - 1) * sc**2 + ss**2)))

    def cv(self, i_vc):
        s = _jtab_inverse(min(1.0 - i_vc, MI_MAX))
        return 1.0 - float(_jtab_forward(np.sqrt(self.dc - 1.0) * s))

    def vs(self, i_cv):
        sc = _jtab_inverse(min(i_cv, MI_MAX))
        return float(self.nw @ _jtab_forward(np.sqrt(self.ndeg) * sc))


def simulate_trajectory(
    ens1,
    ens2,
    params: ChannelParams,
    max_iters: int = 2000,
    threshold: float = CONVERGENCE_MI,
    stall_tol: float = 1e-12,
    schedule: str = "flooding",
    coupling: str = "joint",
) -> ExitTrajectory:
    """Track the joint decoder's MI evolution for an ensemble pair.

    Both users start with zero MI everywhere.  Convergence means both
    check-side aggregate MIs reach the threshold; a stalled trajectory
    (no tracked quantity moving by more than stall_tol) exits early as
    non-converged.

    coupling picks how a user's state-node input quality is modeled:

    * "joint": each i_sv comes from the other user's tracked i_vs of the
      previous iteration, i.e. the two recursions evolve as the actual
      flooding decoder does.  Under the flooding schedule both users
      update from the previous iteration's values; the alternating
      schedule lets user 2 see user 1's fresh value within the
      iteration.
    * "lockstep": each i_sv is taken from the other user's vs curve
      evaluated at this user's own previous i_cv, i.e. both decoders
      are modeled as moving through the same check-side MI level.  This
      is the model the design LP writes its tunnel constraints against,
      so a pair that solves the LP with slack also converges here.  The
      two recursions are then self-contained and the schedule flag has
      no effect.

    The two couplings can disagree near the design point: "joint" lets
    the stronger user race ahead and drag the weaker one along early,
    but also lets a mid-tunnel pinch in either curve deadlock both.
    """
    if schedule not in ("flooding", "alternating"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if coupling not in ("joint", "lockstep"):
        raise ValueError(f"unknown coupling {coupling!r}")
    u1 = _UserTrack(ens1)
    u2 = _UserTrack(ens2)
    state = ExitState(0, (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0))
    states = [state]
    converged = False
    for it in range(1, max_iters + 1):
        if coupling == "lockstep":
            feed1 = u2.vs(state.i_cv[0])
        else:
            feed1 = state.i_vs[1]
        sv1 = _exit_sv_fast(feed1, params, 1)
        vc1 = u1.vc(state.i_cv[0], sv1)
        cv1 = u1.cv(vc1)
        vs1 = u1.vs(cv1)
        if coupling == "lockstep":
            feed2 = u1.vs(state.i_cv[1])
        elif schedule == "alternating":
            feed2 = vs1
        else:
            feed2 = state.i_vs[0]
        sv2 = _exit_sv_fast(feed2, params, 2)
        vc2 = u2.vc(state.i_cv[1], sv2)
        cv2 = u2.cv(vc2)
        vs2 = u2.vs(cv2)
        new = ExitState(it, (sv1, sv2), (vc1, vc2), (cv1, cv2), (vs1, vs2))
        progress = np.abs(new.flat() - state.flat()).max()
        state = new
        states.append(state)
        if vc1 >= threshold and vc2 >= threshold:
            converged = True
            break
        if progress < stall_tol:
            break
    return ExitTrajectory(tuple(states), converged)
