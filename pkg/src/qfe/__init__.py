"""Noisy lattice-circuit datasets and learned fidelity estimators."""

from qfe.lattice import (
    CLIFFORD_PALETTE,
    FULL_PALETTE,
    Direction,
    GateKind,
    LatticeCircuit,
    Palette,
    Tiling,
    clifford_reducible_circuit,
    decode_one_hot,
    encode_one_hot,
    gate_count_features,
    random_circuit,
    reduce_to_clifford,
    tiled_circuit,
)
from qfe.noise import SimNoiseModel, StochasticModel, compile_noisy_program, product_fidelity

__version__ = "0.1.0"

__all__ = [
    "CLIFFORD_PALETTE",
    "FULL_PALETTE",
    "Direction",
    "GateKind",
    "LatticeCircuit",
    "Palette",
    "SimNoiseModel",
    "StochasticModel",
    "Tiling",
    "clifford_reducible_circuit",
    "compile_noisy_program",
    "decode_one_hot",
    "encode_one_hot",
    "gate_count_features",
    "product_fidelity",
    "random_circuit",
    "reduce_to_clifford",
    "tiled_circuit",
]
