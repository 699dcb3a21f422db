"""LDPC degree-distribution design for the two-user Gaussian MAC."""

from .channel import ChannelParams, state_to_variable, sum_capacity_bpsk, transmit
from .degree import (
    CodeEnsemble,
    DegreeDistribution,
    ValidationError,
    design_rate,
    edge_to_node,
    monomial,
    node_to_edge,
    stability_bound,
)

__all__ = [
    "ChannelParams",
    "CodeEnsemble",
    "DegreeDistribution",
    "ValidationError",
    "design_rate",
    "edge_to_node",
    "monomial",
    "node_to_edge",
    "stability_bound",
    "state_to_variable",
    "sum_capacity_bpsk",
    "transmit",
]
