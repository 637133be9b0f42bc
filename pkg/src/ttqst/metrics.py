"""Fidelity and trace distance between dense density matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tt import BlockTT, check_dense_size, factor_matrix

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8


class FidelityValue(NamedTuple):
    """Raw fidelity may exceed 1 by rounding; clamped never does."""

    raw: float
    clamped: float


@dataclass(frozen=True)
class DensityMatrixDense:
    """Unit-trace Hermitian density matrix plus its pre-normalization trace."""

    rho: np.ndarray
    pre_normalization_trace: float = 1.0

    def __post_init__(self):
        rho = self.rho
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got {rho.shape}")
        herm = np.abs(rho - rho.conj().T).max()
        if herm > HERMITICITY_TOL:
            raise ValueError(f"matrix is not Hermitian to {HERMITICITY_TOL:.0e} "
                             f"(deviation {herm:.3e})")
        tr = float(np.trace(rho).real)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr} is not 1 to {TRACE_TOL:.0e}")

    @property
    def dim(self):
        return self.rho.shape[0]


def _as_rho(state):
    if isinstance(state, DensityMatrixDense):
        return state.rho
    rho = np.asarray(state, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("expected a square density matrix")
    return rho


def densify_state(a):
    """Form rho = A A^H from a factor, symmetrize, and normalize the trace.

    Accepts a BlockTT, a dense ``(D, R)`` factor matrix, or anything with an
    ``a`` attribute holding one (the dense baseline factor).
    """
    if isinstance(a, BlockTT):
        amat = factor_matrix(a)
    else:
        amat = np.asarray(getattr(a, "a", a), dtype=np.complex128)
        if amat.ndim != 2:
            raise ValueError("expected a (D, R) factor matrix")
    check_dense_size(amat.shape[0] ** 2)
    rho = amat @ amat.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    pre_trace = float(np.trace(rho).real)
    if pre_trace <= 0.0:
        raise ValueError("factor has zero norm; cannot normalize the state")
    return DensityMatrixDense(rho / pre_trace, pre_trace)


def _clamped_eigvals(vals, dim):
    # zero out eigenvalues below the numerical-rank floor; rounding noise on
    # exact-zero eigenvalues would otherwise inflate Tr(sqrt(.)) by ~sqrt(eps)
    floor = dim * np.finfo(np.float64).eps * max(float(vals.max()), 0.0)
    return np.where(vals > floor, vals, 0.0)


def _psd_sqrt(rho):
    vals, vecs = np.linalg.eigh(rho)
    vals = _clamped_eigvals(vals, rho.shape[0])
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(r1, r2):
    """Uhlmann fidelity (Tr sqrt(sqrt(r1) r2 sqrt(r1)))**2.

    Eigendecomposition with eigenvalue clamping at zero for both square
    roots; returns the raw value and one clamped to [0, 1].
    """
    rho1, rho2 = _as_rho(r1), _as_rho(r2)
    if rho1.shape != rho2.shape:
        raise ValueError("dimension mismatch")
    for rho in (rho1, rho2):
        if np.abs(rho - rho.conj().T).max() > HERMITICITY_TOL:
            raise ValueError("non-Hermitian input")
    s = _psd_sqrt(rho1)
    mid = s @ rho2 @ s
    mid = 0.5 * (mid + mid.conj().T)
    vals = _clamped_eigvals(np.linalg.eigvalsh(mid), mid.shape[0])
    raw = float(np.sum(np.sqrt(vals)) ** 2)
    return FidelityValue(raw, min(max(raw, 0.0), 1.0))


def trace_distance(r1, r2):
    """Half the trace norm of the difference, via Hermitian eigenvalues."""
    rho1, rho2 = _as_rho(r1), _as_rho(r2)
    if rho1.shape != rho2.shape:
        raise ValueError("dimension mismatch")
    diff = rho1 - rho2
    if np.abs(diff - diff.conj().T).max() > HERMITICITY_TOL:
        raise ValueError("non-Hermitian input")
    diff = 0.5 * (diff + diff.conj().T)
    vals = np.linalg.eigvalsh(diff)
    return float(0.5 * np.sum(np.abs(vals)))
