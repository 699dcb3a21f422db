"""LDPC degree-distribution algebra.

Degree distributions are stored sparsely as a map from node degree to
weight.  Edge-perspective polynomials use the convention
lambda(x) = sum_i lambda_i x^(i-1), node-perspective ones
L(x) = sum_i L_i x^i, so the dict key is always the node degree i >= 2.
"""

from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9
DEFAULT_V_MAX = 100


class ValidationError(ValueError):
    """A degree distribution violates its invariants."""


@dataclass(frozen=True)
class DegreeDistribution:
    """Sparse degree distribution of one side of an LDPC ensemble.

    coeffs maps degree i (>= 2) to its weight; weights must be
    nonnegative and sum to one within SUM_TOL.  perspective is "edge"
    or "node", side is "variable" or "check".
    """

    coeffs: dict[int, float]
    perspective: str = "edge"
    side: str = "variable"
    v_max: int = DEFAULT_V_MAX

    def __post_init__(self):
        if self.perspective not in ("edge", "node"):
            raise ValidationError(f"unknown perspective {self.perspective!r}")
        if self.side not in ("variable", "check"):
            raise ValidationError(f"unknown side {self.side!r}")
        if not self.coeffs:
            raise ValidationError("empty degree distribution")
        clean = {}
        for deg, w in self.coeffs.items():
            d = int(deg)
            if d != deg:
                raise ValidationError(f"non-integer degree {deg!r}")
            if d < 2:
                raise ValidationError(f"degree {d} below minimum degree 2")
            if d > self.v_max:
                raise ValidationError(f"degree {d} exceeds v_max={self.v_max}")
            w = float(w)
            if w < 0.0:
                raise ValidationError(f"negative weight {w} at degree {d}")
            if w > 0.0:
                clean[d] = w
        total = sum(clean.values())
        if abs(total - 1.0) > SUM_TOL:
            raise ValidationError(f"weights sum to {total}, not 1 within {SUM_TOL}")
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    def degrees(self):
        return np.array(sorted(self.coeffs), dtype=np.int64)

    def weights(self):
        return np.array([self.coeffs[d] for d in sorted(self.coeffs)])

    @property
    def max_degree(self):
        return max(self.coeffs)

    def inverse_degree_sum(self):
        """sum_i w_i / i, the normalizer linking edge and node views."""
        return float(sum(w / d for d, w in self.coeffs.items()))

    def average_degree(self):
        if self.perspective == "edge":
            return 1.0 / self.inverse_degree_sum()
        return float(sum(w * d for d, w in self.coeffs.items()))


def monomial(degree, side="check", perspective="edge"):
    """Single-degree distribution, e.g. the rho(x) = x^(dc-1) check side."""
    return DegreeDistribution({int(degree): 1.0}, perspective=perspective, side=side)


def design_rate(lam: DegreeDistribution, rho: DegreeDistribution) -> float:
    """Design rate R = 1 - (sum_i rho_i/i) / (sum_i lambda_i/i).

    Both inputs must be edge perspective.  The result may be <= 0 for
    degenerate inputs; the caller decides what to do with it.
    """
    if lam.perspective != "edge" or rho.perspective != "edge":
        raise ValidationError("design_rate expects edge-perspective distributions")
    return 1.0 - rho.inverse_degree_sum() / lam.inverse_degree_sum()


def edge_to_node(lam: DegreeDistribution) -> DegreeDistribution:
    """Convert edge-perspective weights to node perspective.

    L_i = (lambda_i / i) / sum_j (lambda_j / j).
    """
    if lam.perspective != "edge":
        raise ValidationError("edge_to_node expects an edge-perspective input")
    z = lam.inverse_degree_sum()
    coeffs = {d: (w / d) / z for d, w in lam.coeffs.items()}
    return DegreeDistribution(coeffs, perspective="node", side=lam.side,
                              v_max=lam.v_max)


def node_to_edge(dist: DegreeDistribution) -> DegreeDistribution:
    """Inverse of edge_to_node: lambda_i = i L_i / sum_j j L_j."""
    if dist.perspective != "node":
        raise ValidationError("node_to_edge expects a node-perspective input")
    z = sum(d * w for d, w in dist.coeffs.items())
    coeffs = {d: d * w / z for d, w in dist.coeffs.items()}
    return DegreeDistribution(coeffs, perspective="edge", side=dist.side,
                              v_max=dist.v_max)


def stability_bound(power: float, dc: int) -> float:
    """Strict upper bound on lambda_2 for a monomial check side.

    For rho(x) = x^(dc-1) the zero-error fixed point is stable iff
    lambda_2 < exp(power/2) / (dc - 1).
    """
    if dc <= 2:
        raise ValueError(f"stability bound needs dc >= 3, got {dc}")
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    return float(np.exp(power / 2.0) / (dc - 1))


@dataclass(frozen=True)
class CodeEnsemble:
    """An irregular-variable / regular-check LDPC ensemble.

    lam is the edge-perspective variable distribution, the check side is
    the monomial x^(dc-1).  rate is pinned to design_rate and checked on
    construction.
    """

    lam: DegreeDistribution
    dc: int
    rate: float | None = None

    def __post_init__(self):
        if self.dc < 2:
            raise ValidationError(f"dc must be >= 2, got {self.dc}")
        if self.lam.perspective != "edge" or self.lam.side != "variable":
            raise ValidationError("ensemble lambda must be edge-perspective, variable side")
        r = design_rate(self.lam, monomial(self.dc))
        if self.rate is None:
            object.__setattr__(self, "rate", r)
        elif abs(self.rate - r) > SUM_TOL:
            raise ValidationError(f"stored rate {self.rate} != design rate {r}")

    @property
    def node_dist(self):
        return edge_to_node(self.lam)
