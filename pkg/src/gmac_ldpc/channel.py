"""Two-user Gaussian multiple access channel with BPSK inputs.

The channel output is y = sqrt(P1)*x1 + sqrt(P2)*x2 + w with unit-variance
noise.  LLRs are natural log throughout; mutual information is in bits.
"""

from dataclasses import dataclass

import numpy as np

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class ChannelParams:
    """Power pair (p1, p2) in linear units; noise variance is fixed at 1."""

    p1: float
    p2: float

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0:
            raise ValueError(f"powers must be nonnegative, got ({self.p1}, {self.p2})")

    @property
    def a1(self):
        return float(np.sqrt(self.p1))

    @property
    def a2(self):
        return float(np.sqrt(self.p2))

    def scaled_db(self, offset_db):
        """Both powers scaled by a common dB offset (power ratio preserved)."""
        f = 10.0 ** (offset_db / 10.0)
        return ChannelParams(self.p1 * f, self.p2 * f)


def transmit(x1, x2, params: ChannelParams, noise):
    """Channel output sqrt(P1)*x1 + sqrt(P2)*x2 + noise (elementwise)."""
    return params.a1 * np.asarray(x1) + params.a2 * np.asarray(x2) + np.asarray(noise)


def _lse2(a, b):
    # log(exp(a) + exp(b)), stable for any magnitudes
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    return hi + np.log1p(np.exp(lo - hi))


def state_to_variable(y, vs_other, params: ChannelParams, target_user: int):
    """State-node LLR towards one user given the other user's vs message.

    Implements the two-term exponential quotient of the joint decoder's
    state-node update; the four exponents are combined with log-sum-exp
    so the result stays finite for |y| or |vs| up to ~1e3.  Accepts
    scalars or arrays (broadcast together).
    """
    y = np.asarray(y, dtype=float)
    vs = np.asarray(vs_other, dtype=float)
    a1, a2 = params.a1, params.a2
    # exponents of p(y | x1, x2) up to a common constant
    epp = -0.5 * (y - a1 - a2) ** 2   # x1=+1, x2=+1
    epm = -0.5 * (y - a1 + a2) ** 2   # x1=+1, x2=-1
    emp = -0.5 * (y + a1 - a2) ** 2   # x1=-1, x2=+1
    emm = -0.5 * (y + a1 + a2) ** 2   # x1=-1, x2=-1
    if target_user == 1:
        num = _lse2(epp + vs, epm)
        den = _lse2(emp + vs, emm)
    elif target_user == 2:
        num = _lse2(epp + vs, emp)
        den = _lse2(epm + vs, emm)
    else:
        raise ValueError(f"target_user must be 1 or 2, got {target_user}")
    out = num - den
    return float(out) if out.ndim == 0 else out


def _mixture_log2_pdf(y, params: ChannelParams):
    """log2 of the 4-component output density for equiprobable BPSK pairs."""
    y = np.asarray(y, dtype=float)
    a1, a2 = params.a1, params.a2
    centers = np.array([a1 + a2, a1 - a2, -a1 + a2, -a1 - a2])
    ex = -0.5 * (y[..., None] - centers) ** 2
    hi = ex.max(axis=-1)
    lse = hi + np.log(np.exp(ex - hi[..., None]).sum(axis=-1))
    # p(y) = (1/4) * (1/sqrt(2 pi)) * sum_s exp(-(y-s)^2/2)
    return (lse - np.log(4.0) - 0.5 * np.log(2.0 * np.pi)) / LOG2


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(120)


def sum_capacity_bpsk(params: ChannelParams) -> float:
    """BPSK-input sum capacity I(X1,X2;Y) in bits per channel use.

    h(Y) is integrated with Gauss-Hermite quadrature per mixture
    component (the output is a 4-component unit-variance Gaussian
    mixture); subtracting the noise entropy 0.5*log2(2*pi*e) gives the
    mutual information.
    """
    a1, a2 = params.a1, params.a2
    centers = np.array([a1 + a2, a1 - a2, -a1 + a2, -a1 - a2])
    ypts = centers[:, None] + np.sqrt(2.0) * _GH_NODES[None, :]
    vals = _mixture_log2_pdf(ypts, params)
    h_y = -0.25 * (vals @ _GH_WEIGHTS).sum() / np.sqrt(np.pi)
    h_noise = 0.5 * np.log2(2.0 * np.pi * np.e)
    return float(h_y - h_noise)


def sum_capacity_bpsk_trapezoid(params: ChannelParams, step=1e-3, pad=8.0) -> float:
    """Trapezoid-grid cross-check of sum_capacity_bpsk (slow, for tests)."""
    a1, a2 = params.a1, params.a2
    lim = a1 + a2 + pad
    y = np.arange(-lim, lim + step, step)
    log2p = _mixture_log2_pdf(y, params)
    p = np.exp(log2p * LOG2)
    h_y = -np.trapezoid(p * log2p, y)
    return float(h_y - 0.5 * np.log2(2.0 * np.pi * np.e))
