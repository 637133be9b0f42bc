"""Dense desk-scale references: the LR factored-gradient baseline and an
explicit-matrix oracle for the objective and gradient."""

from __future__ import annotations

import math
import struct
import time

import numpy as np

from . import kernels
from .pauli import pauli_dense
from .solver import SolverTrace, _check_alignment
from .tt import NumericalAbort, check_dense_size

_DQSF_MAGIC = b"DQSF"


class DenseFactor:
    """Dense D x R factor; rho = a a^H is PSD and Hermitian by construction."""

    def __init__(self, a):
        a = np.ascontiguousarray(a, dtype=np.complex128)
        if a.ndim != 2:
            raise ValueError("factor must be a 2-way array")
        if not np.all(np.isfinite(a)):
            raise ValueError("factor has non-finite entries")
        self.a = a

    @property
    def dim(self):
        return self.a.shape[0]

    @property
    def rank(self):
        return self.a.shape[1]

    def __repr__(self):
        return f"<DenseFactor dim={self.dim} rank={self.rank}>"


def save_dense_factor(factor, path):
    with open(path, "wb") as fh:
        fh.write(_DQSF_MAGIC)
        fh.write(struct.pack("<QQ", factor.dim, factor.rank))
        fh.write(np.ascontiguousarray(factor.a, dtype="<c16").tobytes())


def load_dense_factor(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _DQSF_MAGIC:
            raise ValueError("not a DQSF file")
        d, r = struct.unpack("<QQ", fh.read(16))
        buf = fh.read(16 * d * r)
        if len(buf) != 16 * d * r:
            raise ValueError("truncated DQSF file")
        return DenseFactor(np.frombuffer(buf, dtype="<c16").reshape(d, r).copy())


def _ball_project(a):
    nrm = float(np.linalg.norm(a))
    return a / nrm if nrm > 1.0 else a


def lr_solve(records, pset, rank, cfg, init=None):
    """Projected factored gradient descent on the dense D x R factor.

    Minimizes half the squared residual of y - Tr(E_m A A^H) with the
    Euclidean projection onto the Frobenius ball (rescale only when the
    norm exceeds 1).  Random Ginibre initialization per seed.
    """
    _check_alignment(records, pset)
    n = pset.n_qubits
    d = 2**n
    check_dense_size(d * d)
    y = np.array([r.y for r in records])
    codes = pset.codes_matrix()
    if init is not None:
        a = np.array(init.a if isinstance(init, DenseFactor) else init,
                     dtype=np.complex128)
    else:
        rng = np.random.default_rng(cfg.seed)
        a = (rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank)))
        a /= np.linalg.norm(a)
    a = _ball_project(a)

    trace = SolverTrace()
    t0 = time.perf_counter()
    d_prev = None
    f_prev = None
    for it in range(cfg.max_iters):
        clean, grad = kernels.pauli_dense_pass(codes, a, y=y)
        resid = y - clean
        f = 0.5 * float(resid @ resid)
        if not math.isfinite(f):
            raise NumericalAbort(f"non-finite cost at iteration {it}", trace)
        gnorm = float(np.linalg.norm(grad))
        trace.append(it, f, gnorm, float(np.linalg.norm(a)),
                     time.perf_counter() - t0)
        if (f_prev is not None
                and abs(f - f_prev) / max(f_prev, 1e-30) < cfg.rel_cost_tol):
            break
        f_prev = f
        step_dir = grad if (cfg.momentum == 0.0 or d_prev is None) else (
            grad + cfg.momentum * d_prev)
        d_prev = step_dir
        if cfg.backtracking:
            a = _lr_backtrack(a, step_dir, grad, codes, y, f, cfg)
        else:
            a = _ball_project(a - cfg.step_size * step_dir)
    return DenseFactor(a), trace


def _lr_backtrack(a, step_dir, grad, codes, y, f, cfg):
    slope = float(np.vdot(grad, step_dir).real)
    if slope <= 0.0:
        slope = float(np.linalg.norm(grad)) ** 2
    eta = cfg.step_size
    best = None
    for _ in range(30):
        cand = _ball_project(a - eta * step_dir)
        clean, _ = kernels.pauli_dense_pass(codes, cand)
        resid = y - clean
        f_cand = 0.5 * float(resid @ resid)
        if f_cand <= f - 1e-4 * eta * slope:
            return cand
        if best is None or f_cand < best[0]:
            best = (f_cand, cand)
        eta *= 0.5
    return best[1]


def dense_objective_oracle(factor, records, pset):
    """Objective and gradient through explicit Pauli matrices.

    Deliberately independent of the bit-mask kernels: every observable is
    materialized with Kronecker products.  Returns (value, gradient).
    """
    _check_alignment(records, pset)
    a = np.asarray(factor.a if isinstance(factor, DenseFactor) else factor,
                   dtype=np.complex128)
    check_dense_size(4**pset.n_qubits)
    y = np.array([r.y for r in records])
    grad = np.zeros_like(a)
    value = 0.0
    for y_m, p in zip(y, pset.strings):
        e = pauli_dense(p)
        ea = e @ a
        clean = float(np.vdot(a, ea).real)
        r_m = y_m - clean
        value += 0.5 * r_m * r_m
        grad += -2.0 * r_m * ea
    return value, grad
