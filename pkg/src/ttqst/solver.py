"""Projected gradient descent over the block-TT factor.

One iteration: build the residual-weighted gradient as a block TT, take a
(heavy-ball) descent step, project back to the target ranks by TT-SVD, and
rescale the last core to unit Frobenius norm so the reconstructed state
keeps unit trace.  With zero momentum and a single gradient rounding this
is the plain projected-gradient scheme.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .measure import measure_all
from .pauli import SIGMA
from .tt import (BlockTT, DENSIFY_LIMIT, NumericalAbort, check_dense_size,
                 factor_matrix, frob_norm, ginibre_blocktt, inner,
                 max_block_ranks, tt_add, tt_scale, tt_svd)

DENSE_GRADIENT_LIMIT = 2**22  # factor elements below which "auto" goes dense


@dataclass
class SolverConfig:
    step_size: float = 0.05
    momentum: float = 0.3
    max_iters: int = 5000
    rel_cost_tol: float = 1e-10
    target_ranks: int | tuple | None = None
    gradient_rounding_tol: float = 1e-12
    gradient_batch: int = 32
    n_block: int | None = None
    block_dim: int | None = None
    seed: int | None = None
    backtracking: bool = False
    gradient_mode: str = "auto"  # auto | tt | dense
    rank_cap: int = 4096

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.rel_cost_tol < 0 or self.gradient_rounding_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.gradient_batch < 1:
            raise ValueError("gradient_batch must be positive")
        if self.gradient_mode not in ("auto", "tt", "dense"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")


@dataclass
class SolverTrace:
    iters: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    factor_norm: list = field(default_factory=list)
    elapsed_s: list = field(default_factory=list)

    def append(self, it, f, gnorm, anorm, elapsed):
        self.iters.append(int(it))
        self.cost.append(float(f))
        self.grad_norm.append(float(gnorm))
        self.factor_norm.append(float(anorm))
        self.elapsed_s.append(float(elapsed))

    def __len__(self):
        return len(self.iters)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "cost", "grad_norm", "factor_norm", "elapsed_s"])
            for row in zip(self.iters, self.cost, self.grad_norm,
                           self.factor_norm, self.elapsed_s):
                writer.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])


def _check_alignment(records, pset):
    if len(records) != len(pset):
        raise ValueError("records and Pauli set have different lengths")
    for r, p in zip(records, pset.strings):
        if r.pauli.letters != p.letters:
            raise ValueError("records and Pauli set are misaligned")


def _target_rank_vector(a, target_ranks):
    bounds = max_block_ranks(a.n_sites, a.block_dim, a.block)
    if target_ranks is None:
        return tuple(min(r, b) for r, b in zip(a.ranks, bounds))
    if isinstance(target_ranks, (int, np.integer)):
        vec = (1,) + (int(target_ranks),) * (a.n_sites - 1) + (1,)
    else:
        vec = tuple(int(r) for r in target_ranks)
        if len(vec) != a.n_sites + 1:
            raise ValueError("target_ranks must have n_sites + 1 entries")
    return tuple(min(r, b) for r, b in zip(vec, bounds))


def objective(a, records, pset):
    """Half the squared residual norm of the measurements."""
    _check_alignment(records, pset)
    y = np.array([r.y for r in records])
    resid = y - measure_all(a, pset)
    return 0.5 * float(resid @ resid)


def gradient(a, records, pset, rounding_tol=1e-12, batch=32, mode="tt",
             rank_cap=4096):
    """Euclidean gradient -2 sum_m (y_m - <rho, E_m>) E_m A as a BlockTT.

    ``mode="tt"`` accumulates the residual-weighted terms in TT form,
    rounding after every ``batch`` additions; ``mode="dense"`` accumulates
    the dense factor matrix and converts back by exact-tolerance TT-SVD
    (same tensor up to the rounding tolerance, viable below the densify
    limit); ``mode="auto"`` picks dense when the factor is small enough.
    """
    _check_alignment(records, pset)
    y = np.array([r.y for r in records])
    resid = y - measure_all(a, pset)
    return gradient_from_residuals(a, pset, resid, rounding_tol, batch, mode,
                                   rank_cap)


def gradient_from_residuals(a, pset, resid, rounding_tol=1e-12, batch=32,
                            mode="tt", rank_cap=4096):
    if mode == "auto":
        dense_ok = 2**pset.n_qubits * a.block_dim <= DENSE_GRADIENT_LIMIT
        mode = "dense" if dense_ok else "tt"
    if mode == "dense":
        return _gradient_dense(a, pset, resid, rounding_tol)
    return _gradient_tt(a, pset, resid, rounding_tol, batch, rank_cap)


def _gradient_dense(a, pset, resid, rounding_tol):
    amat = factor_matrix(a, limit=DENSE_GRADIENT_LIMIT)
    _, grad = kernels.pauli_dense_pass(pset.codes_matrix(), amat,
                                       residuals=np.asarray(resid, dtype=float))
    dims = [2] * pset.n_qubits
    dims.insert(a.block + 1, a.block_dim)
    dense = np.moveaxis(grad.reshape(dims[:a.block + 1] + dims[a.block + 2:]
                                     + [a.block_dim]), -1, a.block + 1)
    out, _ = tt_svd(np.ascontiguousarray(dense), max_ranks=None,
                    tol=rounding_tol, block=a.block)
    return out


def _gradient_tt(a, pset, resid, rounding_tol, batch, rank_cap):
    codes = pset.codes_matrix()
    m_count = len(pset)
    weights = -2.0 * np.asarray(resid, dtype=float)
    bounds = [min(b, rank_cap) for b in max_block_ranks(a.n_sites, a.block_dim,
                                                        a.block)]
    acc = None
    for lo in range(0, m_count, batch):
        hi = min(lo + batch, m_count)
        term = _weighted_batch_sum(a, codes[lo:hi], weights[lo:hi])
        acc = term if acc is None else tt_add(acc, term)
        worst = max(acc.ranks)
        if worst > rank_cap:
            raise NumericalAbort(
                f"gradient accumulation rank {worst} exceeds the cap {rank_cap}; "
                "lower gradient_batch or raise rank_cap")
        acc, _ = tt_svd(acc, max_ranks=bounds, tol=rounding_tol)
    if acc is None:
        raise ValueError("empty measurement set")
    return acc


def _weighted_batch_sum(a, codes, weights):
    """Sum of weights[b] * E_b A for a batch, built as one block-diagonal TT."""
    b_count = codes.shape[0]
    cores = []
    n = a.n_sites
    for site in range(n):
        core = a.cores[site]
        sig = SIGMA[codes[:, site]]  # (B, 2, 2)
        if site == a.block:
            mixed = np.einsum("bij,rjkq->brikq", sig, core)
        else:
            mixed = np.einsum("bij,rjq->briq", sig, core)
        if site == 0:
            mixed = mixed * weights.reshape((b_count,) + (1,) * (mixed.ndim - 1))
            # (B, 1, ..., R) -> (1, ..., B*R)
            out = np.moveaxis(mixed, 0, -2)
            s = out.shape
            cores.append(out.reshape(s[:-2] + (s[-2] * s[-1],)))
        elif site == n - 1:
            # (B, R, ..., 1) -> (B*R, ..., 1)
            s = mixed.shape
            cores.append(mixed.reshape((s[0] * s[1],) + s[2:]))
        else:
            r0, r1 = core.shape[0], core.shape[-1]
            mid = mixed.shape[2:-1]
            out = np.zeros((b_count, r0) + mid + (b_count, r1), dtype=np.complex128)
            idx = np.arange(b_count)
            out[idx, ..., idx, :] = mixed
            cores.append(out.reshape((b_count * r0,) + mid + (b_count * r1,)))
    return BlockTT(cores)


def project_normalize(a, target_ranks=None):
    """TT-SVD to the target ranks, then rescale to unit Frobenius norm.

    The output is left-orthogonal, so the norm sits in the last core and
    the rescale makes Tr(A A^H) = 1 exactly up to rounding.
    """
    vec = _target_rank_vector(a, target_ranks)
    b, _ = tt_svd(a, max_ranks=vec, tol=0.0)
    nrm = float(np.linalg.norm(b.cores[-1]))
    if nrm == 0.0 or not math.isfinite(nrm):
        raise ValueError("cannot normalize a zero or non-finite factor")
    return tt_scale(b, 1.0 / nrm)


def _round_direction(d, bounds, tol):
    out, _ = tt_svd(d, max_ranks=bounds, tol=tol)
    return out


def solve(init, records, pset, cfg):
    """Run the projected gradient descent; returns (factor, trace).

    ``init`` is a starting BlockTT or an RNG seed for a random one (which
    then needs ``cfg.block_dim`` and ``cfg.target_ranks``).  Momentum 0
    recovers the plain scheme: step, TT-SVD projection, normalization.
    """
    _check_alignment(records, pset)
    n = pset.n_qubits
    if isinstance(init, BlockTT):
        a = init
    else:
        if cfg.block_dim is None:
            raise ValueError("random init needs cfg.block_dim")
        block = cfg.n_block if cfg.n_block is not None else max(n - 2, 0)
        ranks = cfg.target_ranks if cfg.target_ranks is not None else 1
        seed = init if init is not None else cfg.seed
        a = ginibre_blocktt(n, cfg.block_dim, ranks, block, seed)
    ranks_vec = _target_rank_vector(a, cfg.target_ranks)
    bounds = max_block_ranks(a.n_sites, a.block_dim, a.block)
    y = np.array([r.y for r in records])

    a = project_normalize(a, ranks_vec)
    trace = SolverTrace()
    t0 = time.perf_counter()
    d_prev = None
    f_prev = None
    for it in range(cfg.max_iters):
        resid = y - measure_all(a, pset)
        f = 0.5 * float(resid @ resid)
        if not math.isfinite(f):
            raise NumericalAbort(f"non-finite cost at iteration {it}", trace)
        g = gradient_from_residuals(a, pset, resid, cfg.gradient_rounding_tol,
                                    cfg.gradient_batch, cfg.gradient_mode,
                                    cfg.rank_cap)
        gnorm = frob_norm(g)
        trace.append(it, f, gnorm, frob_norm(a), time.perf_counter() - t0)
        if (f_prev is not None
                and abs(f - f_prev) / max(f_prev, 1e-30) < cfg.rel_cost_tol):
            break
        f_prev = f
        if cfg.momentum > 0.0 and d_prev is not None:
            d = _round_direction(tt_add(g, tt_scale(d_prev, cfg.momentum)),
                                 bounds, cfg.gradient_rounding_tol)
        else:
            d = g
        d_prev = d
        if cfg.backtracking:
            a = _backtracking_step(a, d, g, y, pset, f, cfg, ranks_vec)
        else:
            a = project_normalize(tt_add(a, tt_scale(d, -cfg.step_size)),
                                  ranks_vec)
    return a, trace


def _backtracking_step(a, d, g, y, pset, f, cfg, ranks_vec):
    """Halve the step until the Armijo decrease holds (slope factor 1e-4)."""
    slope = inner(g, d).real
    if slope <= 0.0:
        slope = frob_norm(g) ** 2
    eta = cfg.step_size
    best = None
    for _ in range(30):
        cand = project_normalize(tt_add(a, tt_scale(d, -eta)), ranks_vec)
        resid = y - measure_all(cand, pset)
        f_cand = 0.5 * float(resid @ resid)
        if f_cand <= f - 1e-4 * eta * slope:
            return cand
        if best is None or f_cand < best[0]:
            best = (f_cand, cand)
        eta *= 0.5
    return best[1]
