"""Quantum state tomography with a block tensor-train factor.

Reconstructs low-rank density matrices from random Pauli measurements by
projected gradient descent over the factor A with rho = A A^H, carried in
block-TT form so measurement and gradient costs stay polynomial in the
qubit count.
"""

from .kernels import active_backend
from .measure import (MeasurementRecord, NoiseSpec, add_noise, expectation_tt,
                      measure_all)
from .metrics import DensityMatrixDense, densify_state, fidelity, trace_distance
from .pauli import PauliSet, PauliString, pauli_dense, pauli_ttm, sample_pauli_set
from .solver import SolverConfig, SolverTrace, gradient, objective, project_normalize, solve
from .tt import (BlockTT, DensifyLimitError, NumericalAbort, TTMatrix,
                 apply_operator, densify, factor_matrix, frob_norm, ginibre_blocktt,
                 left_orthogonalize, shift_block, tt_add, tt_scale, tt_svd)

__all__ = [
    "BlockTT", "TTMatrix", "PauliString", "PauliSet", "MeasurementRecord",
    "NoiseSpec", "SolverConfig", "SolverTrace", "DensityMatrixDense",
    "DensifyLimitError", "NumericalAbort",
    "active_backend", "add_noise", "apply_operator", "densify", "densify_state",
    "expectation_tt", "factor_matrix", "fidelity", "frob_norm", "ginibre_blocktt",
    "gradient", "left_orthogonalize", "measure_all", "objective", "pauli_dense",
    "pauli_ttm", "project_normalize", "sample_pauli_set", "shift_block", "solve",
    "trace_distance", "tt_add", "tt_scale", "tt_svd",
]

__version__ = "0.1.0"
