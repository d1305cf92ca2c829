"""Spin-echo Rydberg controlled-phase gate: state-vector simulation and error budgets."""

from .echogate import (
    GateParams,
    analytic_blockade,
    build_spin_echo_sequence,
    build_traditional_sequence,
    derive_frequencies,
    ideal_gate,
    simulate_gate,
)
from .hilbert import (
    HermitianOperator,
    LevelScheme,
    ProductBasis,
    StateVector,
    build_product_basis,
    embed_operator,
    evolve,
    overlap_fidelity,
    population,
)
from .pulsemodel import pair_interaction, run_sequence

__version__ = "0.1.0"

__all__ = [
    "GateParams",
    "HermitianOperator",
    "LevelScheme",
    "ProductBasis",
    "StateVector",
    "analytic_blockade",
    "build_product_basis",
    "build_spin_echo_sequence",
    "build_traditional_sequence",
    "derive_frequencies",
    "embed_operator",
    "evolve",
    "ideal_gate",
    "overlap_fidelity",
    "pair_interaction",
    "population",
    "run_sequence",
    "simulate_gate",
]
