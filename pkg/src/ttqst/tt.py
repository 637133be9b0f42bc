"""Block tensor-train and TT-matrix containers plus the algebra on them.

Conventions used throughout the package:

* A 3-way core has shape ``(r_left, 2, r_right)``; the single 4-way block
  core has shape ``(r_left, 2, K, r_right)``.  TT-matrix cores are
  ``(r_left, row, col, r_right)``.
* Site indices are 0-based everywhere (code, CLI, file format).  The block
  core defaults to the second-to-last site.
* Flattening groups physical indices in site order with site 0 slowest
  (C order).  The dense form of a block tensor carries its block axis K
  directly after the block site's physical axis, so the factor matrix is
  obtained by moving that axis last and reshaping to ``(2**n, K)``.
  Under this convention a TT-matrix with cores ``(s_1, ..., s_n)`` equals
  ``kron(s_1, kron(s_2, ...))``.
"""

from __future__ import annotations

import struct

import numpy as np

DENSIFY_LIMIT = 2**24

_TT_MAGIC = b"TTQS"
_TT_VERSION = 1
_TTM_SENTINEL = 0xFFFFFFFF


class DensifyLimitError(ValueError):
    """Raised when a dense representation would exceed the element limit."""


class NumericalAbort(RuntimeError):
    """Raised when an iterative routine encounters non-finite values."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


def check_dense_size(n_elements, limit=DENSIFY_LIMIT):
    if n_elements > limit:
        raise DensifyLimitError(
            f"dense representation has {n_elements} elements, limit is {limit}"
        )


class BlockTT:
    """Chain of 3-way cores with one 4-way block core carrying dimension K.

    Represents the factor whose contraction with its Hermitian transpose
    over the block mode yields a positive semidefinite operator.

    Parameters
    ----------
    cores : list of ndarray
        One core per site; exactly one must be 4-way (the block core).
    left_orthogonal : bool
        Set when every core but the last has an orthonormal left unfolding.
    """

    def __init__(self, cores, left_orthogonal=False):
        if not cores:
            raise ValueError("BlockTT needs at least one core")
        cores = [np.ascontiguousarray(c, dtype=np.complex128) for c in cores]
        block = None
        for i, c in enumerate(cores):
            if c.ndim == 4:
                if block is not None:
                    raise ValueError("BlockTT must have exactly one 4-way core")
                block = i
            elif c.ndim != 3:
                raise ValueError(f"core {i} has {c.ndim} axes, expected 3 or 4")
            if min(c.shape) < 1:
                raise ValueError(f"core {i} has a zero extent: {c.shape}")
        if block is None:
            raise ValueError("BlockTT must contain one 4-way block core")
        if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[-1] != cores[i + 1].shape[0]:
                raise ValueError(
                    f"bond mismatch between cores {i} and {i + 1}: "
                    f"{cores[i].shape[-1]} vs {cores[i + 1].shape[0]}"
                )
        self.cores = cores
        self.block = block
        self.left_orthogonal = left_orthogonal

    @property
    def n_sites(self):
        return len(self.cores)

    @property
    def block_dim(self):
        return self.cores[self.block].shape[2]

    @property
    def ranks(self):
        return tuple(c.shape[0] for c in self.cores) + (1,)

    @property
    def physical_dims(self):
        return tuple(c.shape[1] for c in self.cores)

    def dense_shape(self):
        dims = []
        for i, c in enumerate(self.cores):
            dims.append(c.shape[1])
            if i == self.block:
                dims.append(c.shape[2])
        return tuple(dims)

    def copy(self):
        return BlockTT([c.copy() for c in self.cores], self.left_orthogonal)

    def __repr__(self):
        return (
            f"<BlockTT n_sites={self.n_sites} block={self.block} "
            f"K={self.block_dim} ranks={self.ranks}>"
        )


class TTMatrix:
    """TT-matrix (matrix product operator): chain of 4-way cores."""

    def __init__(self, cores):
        if not cores:
            raise ValueError("TTMatrix needs at least one core")
        cores = [np.ascontiguousarray(c, dtype=np.complex128) for c in cores]
        for i, c in enumerate(cores):
            if c.ndim != 4:
                raise ValueError(f"core {i} has {c.ndim} axes, expected 4")
            if min(c.shape) < 1:
                raise ValueError(f"core {i} has a zero extent: {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[-1] != cores[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between cores {i} and {i + 1}")
        self.cores = cores

    @property
    def n_sites(self):
        return len(self.cores)

    @property
    def ranks(self):
        return tuple(c.shape[0] for c in self.cores) + (1,)

    def __repr__(self):
        return f"<TTMatrix n_sites={self.n_sites} ranks={self.ranks}>"


def _merged(core):
    """3-way view of a core, with a 4-way core's (physical, block) merged."""
    if core.ndim == 4:
        r0, i, k, r1 = core.shape
        return core.reshape(r0, i * k, r1)
    return core


def max_block_ranks(n_sites, block_dim, block, physical_dim=2):
    """Upper bound on each bond dimension from the unfolding sizes."""
    dims = [physical_dim] * n_sites
    dims[block] *= block_dim
    bounds = [1]
    left = 1
    for d in dims[:-1]:
        left *= d
        bounds.append(left)
    right = 1
    for i in range(n_sites - 1, 0, -1):
        right *= dims[i]
        bounds[i] = min(bounds[i], right)
    bounds.append(1)
    return tuple(int(min(b, 2**62)) for b in bounds)


def _fix_svd_signs(u, vh):
    """Scale each singular pair so u's largest-magnitude entry is real-positive."""
    idx = np.argmax(np.abs(u), axis=0)
    pivots = u[idx, np.arange(u.shape[1])]
    mags = np.abs(pivots)
    phases = np.where(mags > 0, pivots / np.where(mags > 0, mags, 1.0), 1.0)
    u = u / phases[np.newaxis, :]
    vh = vh * phases[:, np.newaxis]
    return u, vh


def left_orthogonalize(a):
    """Left-to-right QR sweep; returns an equal tensor with orthonormal cores.

    Every core except the last gets an orthonormal left unfolding; the R
    factors are absorbed rightward, so the overall tensor is unchanged.
    """
    cores = [c.copy() for c in a.cores]
    for i in range(len(cores) - 1):
        c = cores[i]
        shape = c.shape
        mat = c.reshape(-1, shape[-1])
        q, r = np.linalg.qr(mat)
        cores[i] = q.reshape(shape[:-1] + (q.shape[1],))
        nxt = cores[i + 1]
        cores[i + 1] = np.tensordot(r, nxt, axes=(1, 0))
    return BlockTT(cores, left_orthogonal=True)


def _right_orthogonalize_cores(cores):
    """Right-to-left sweep leaving the norm in core 0. Modifies the list."""
    for i in range(len(cores) - 1, 0, -1):
        c = cores[i]
        shape = c.shape
        mat = c.reshape(shape[0], -1)
        # LQ via QR of the conjugate transpose
        q, r = np.linalg.qr(mat.conj().T)
        cores[i] = q.conj().T.reshape((q.shape[1],) + shape[1:])
        prev = cores[i - 1]
        cores[i - 1] = np.tensordot(prev, r.conj().T, axes=(prev.ndim - 1, 0))
    return cores


def _truncation_rank(s, max_rank, budget, dim_scale):
    """Joint rank cap and discarded-weight budget; returns (rank, discarded²).

    Singular values below the numerical-rank floor (machine epsilon scaled
    by the unfolding size) are always dropped, so exact low-rank structure
    is detected even at zero tolerance.
    """
    floor = s[0] * dim_scale * np.finfo(np.float64).eps if len(s) else 0.0
    r = int(np.sum(s > floor))
    if max_rank is not None:
        r = min(r, int(max_rank))
    if budget > 0.0:
        tail = np.cumsum(s[::-1] ** 2)[::-1]  # tail[j] = sum of s[j:]**2
        while r > 1 and tail[r - 1] <= budget**2:
            r -= 1
    r = max(r, 1)
    discarded = float(np.sum(s[r:] ** 2))
    return r, discarded


def tt_svd(x, max_ranks=None, tol=0.0, block=None, limit=DENSIFY_LIMIT):
    """Project to a left-orthogonal block TT with bounded ranks.

    Parameters
    ----------
    x : BlockTT or ndarray
        Input tensor.  A dense array must have the block axis directly
        after the block site's physical axis (the layout ``densify``
        produces) and needs ``block`` to locate the block site.
    max_ranks : sequence of int or None
        Bond caps, length ``n_sites + 1``; interior entries are used.
    tol : float
        Relative truncation tolerance, distributed as ``tol/sqrt(n-1)``
        per SVD step.  Cap and tolerance apply jointly.
    block : int, optional
        Block-core site for dense input; ignored for BlockTT input.

    Returns
    -------
    (BlockTT, float)
        The projection and the accumulated truncation error
        ``sqrt(sum of squared discarded singular values)``.
    """
    if isinstance(x, BlockTT):
        return _tt_svd_blocktt(x, max_ranks, tol)
    if block is None:
        raise ValueError("dense input needs the block site position")
    return _tt_svd_dense(np.asarray(x, dtype=np.complex128), max_ranks, tol, block, limit)


def _step_budget(norm, tol, n_sites):
    if tol <= 0.0 or norm == 0.0:
        return 0.0
    return tol * norm / np.sqrt(max(n_sites - 1, 1))


def _tt_svd_blocktt(a, max_ranks, tol):
    n = a.n_sites
    cores = _right_orthogonalize_cores([c.copy() for c in a.cores])
    norm = float(np.linalg.norm(cores[0]))
    budget = _step_budget(norm, tol, n)
    discarded_total = 0.0
    for i in range(n - 1):
        c = cores[i]
        shape = c.shape
        mat = c.reshape(-1, shape[-1])
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        u, vh = _fix_svd_signs(u, vh)
        cap = None if max_ranks is None else max_ranks[i + 1]
        r, disc = _truncation_rank(s, cap, budget, max(mat.shape))
        discarded_total += disc
        cores[i] = u[:, :r].reshape(shape[:-1] + (r,))
        sv = s[:r, np.newaxis] * vh[:r]
        cores[i + 1] = np.tensordot(sv, cores[i + 1], axes=(1, 0))
    out = BlockTT(cores, left_orthogonal=True)
    return out, float(np.sqrt(discarded_total))


def _tt_svd_dense(x, max_ranks, tol, block, limit):
    check_dense_size(x.size, limit)
    dims = list(x.shape)
    n = len(dims) - 1  # one axis is the block dimension
    if not 0 <= block < n:
        raise ValueError(f"block position {block} out of range for {n} sites")
    k_dim = dims[block + 1]
    site_dims = [(dims[i] if i <= block else dims[i + 1]) for i in range(n)]
    norm = float(np.linalg.norm(x))
    budget = _step_budget(norm, tol, n)
    discarded_total = 0.0
    cores = []
    mat = x.reshape(1, -1)
    r_left = 1
    for i in range(n - 1):
        d = site_dims[i] * (k_dim if i == block else 1)
        mat = mat.reshape(r_left * d, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        u, vh = _fix_svd_signs(u, vh)
        cap = None if max_ranks is None else max_ranks[i + 1]
        r, disc = _truncation_rank(s, cap, budget, max(mat.shape))
        discarded_total += disc
        if i == block:
            cores.append(u[:, :r].reshape(r_left, site_dims[i], k_dim, r))
        else:
            cores.append(u[:, :r].reshape(r_left, site_dims[i], r))
        mat = s[:r, np.newaxis] * vh[:r]
        r_left = r
    i = n - 1
    if i == block:
        cores.append(mat.reshape(r_left, site_dims[i], k_dim, 1))
    else:
        cores.append(mat.reshape(r_left, site_dims[i], 1))
    out = BlockTT(cores, left_orthogonal=True)
    return out, float(np.sqrt(discarded_total))


def tt_add(a, b):
    """Block-diagonal sum: interior bond dimensions add exactly."""
    if a.n_sites != b.n_sites:
        raise ValueError("site count mismatch")
    if a.block != b.block or a.block_dim != b.block_dim:
        raise ValueError("block position or block dimension mismatch")
    if a.physical_dims != b.physical_dims:
        raise ValueError("physical dimension mismatch")
    n = a.n_sites
    if n == 1:
        return BlockTT([a.cores[0] + b.cores[0]])
    cores = []
    for i, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        if i == 0:
            cores.append(np.concatenate([ca, cb], axis=ca.ndim - 1))
        elif i == n - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            ra0, ra1 = ca.shape[0], ca.shape[-1]
            rb0, rb1 = cb.shape[0], cb.shape[-1]
            mid = ca.shape[1:-1]
            out = np.zeros((ra0 + rb0,) + mid + (ra1 + rb1,), dtype=np.complex128)
            out[:ra0, ..., :ra1] = ca
            out[ra0:, ..., ra1:] = cb
            cores.append(out)
    return BlockTT(cores)


def tt_scale(a, c):
    """Multiply the last core by a scalar; keeps orthogonality intact."""
    cores = [core.copy() for core in a.cores]
    cores[-1] = cores[-1] * c
    return BlockTT(cores, left_orthogonal=a.left_orthogonal)


def inner(a, b):
    """Full contraction <a, b> over all modes including the block mode."""
    if a.n_sites != b.n_sites or a.block != b.block:
        raise ValueError("incompatible operands")
    t = np.ones((1, 1), dtype=np.complex128)
    for ca, cb in zip(a.cores, b.cores):
        ma, mb = _merged(ca), _merged(cb)
        # t[ra, rb] ; absorb one site from each side
        tmp = np.tensordot(t, ma.conj(), axes=(0, 0))  # (rb, d, ra')
        t = np.tensordot(tmp, mb, axes=((0, 1), (0, 1)))  # (ra', rb')
    return complex(t[0, 0])


def frob_norm(a):
    """Frobenius norm; reads the last core when left-orthogonal."""
    if a.left_orthogonal:
        return float(np.linalg.norm(a.cores[-1]))
    return float(np.sqrt(max(inner(a, a).real, 0.0)))


def densify(a, limit=DENSIFY_LIMIT):
    """Dense ndarray of a BlockTT (block axis after its site's physical axis)
    or of a TTMatrix (axes interleaved row_0, col_0, row_1, col_1, ...)."""
    if isinstance(a, BlockTT):
        shape = a.dense_shape()
    elif isinstance(a, TTMatrix):
        shape = tuple(
            d for c in a.cores for d in (c.shape[1], c.shape[2])
        )
    else:
        raise TypeError(f"cannot densify {type(a).__name__}")
    total = 1
    for d in shape:
        total *= d
    check_dense_size(total, limit)
    res = np.ones((1, 1), dtype=np.complex128)
    for core in a.cores:
        r0 = core.shape[0]
        r1 = core.shape[-1]
        mat = core.reshape(r0, -1, r1)
        res = np.tensordot(res, mat, axes=(1, 0))  # (prod, d, r1)
        res = res.reshape(-1, r1)
    return res.reshape(shape)


def factor_matrix(a, limit=DENSIFY_LIMIT):
    """Dense ``(2**n, K)`` matrix form of a BlockTT factor."""
    x = densify(a, limit)
    x = np.moveaxis(x, a.block + 1, -1)
    return np.ascontiguousarray(x.reshape(-1, a.block_dim))


def ttm_matrix(e, limit=DENSIFY_LIMIT):
    """Dense ``(prod rows, prod cols)`` matrix of a TTMatrix."""
    x = densify(e, limit)
    n = e.n_sites
    rows = int(np.prod([c.shape[1] for c in e.cores]))
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return np.ascontiguousarray(x.transpose(perm).reshape(rows, -1))


def apply_operator(e, a):
    """Contract a TT-matrix onto a BlockTT factor sitewise.

    The densified matrix form of the result equals
    ``ttm_matrix(e) @ factor_matrix(a)``; bond dimensions multiply.
    """
    if e.n_sites != a.n_sites:
        raise ValueError("site count mismatch")
    cores = []
    for ce, ca in zip(e.cores, a.cores):
        if ce.shape[2] != ca.shape[1]:
            raise ValueError("operator column dimension does not match factor")
        if ca.ndim == 3:
            out = np.einsum("aijb,cjd->acibd", ce, ca)
            s = out.shape
            cores.append(out.reshape(s[0] * s[1], s[2], s[3] * s[4]))
        else:
            out = np.einsum("aijb,cjkd->acikbd", ce, ca)
            s = out.shape
            cores.append(out.reshape(s[0] * s[1], s[2], s[3], s[4] * s[5]))
    return BlockTT(cores)


def shift_block(a, direction, new_rank):
    """Merge the block core with a neighbour and re-split by truncated SVD.

    Moves the block index one site to the left or right.  Returns the new
    tensor and the truncation error of the merged core's unfolding.
    """
    p = a.block
    n = a.n_sites
    if direction == "right":
        if p >= n - 1:
            raise ValueError("cannot shift the block core past the right end")
    elif direction == "left":
        if p <= 0:
            raise ValueError("cannot shift the block core past the left end")
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    if new_rank < 1:
        raise ValueError("new_rank must be positive")
    cores = [c.copy() for c in a.cores]
    blk = cores[p]
    r0, d, k, r1 = blk.shape
    if direction == "right":
        nxt = cores[p + 1]
        d2, r2 = nxt.shape[1], nxt.shape[2]
        merged = np.tensordot(blk, nxt, axes=(3, 0))  # (r0, d, k, d2, r2)
        merged = merged.transpose(0, 1, 3, 2, 4)  # (r0, d, d2, k, r2)
        mat = merged.reshape(r0 * d, d2 * k * r2)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        u, vh = _fix_svd_signs(u, vh)
        r = max(1, min(new_rank, len(s)))
        err = float(np.sqrt(np.sum(s[r:] ** 2)))
        cores[p] = u[:, :r].reshape(r0, d, r)
        sv = s[:r, np.newaxis] * vh[:r]
        cores[p + 1] = sv.reshape(r, d2, k, r2)
    else:
        prv = cores[p - 1]
        r2, d2 = prv.shape[0], prv.shape[1]
        merged = np.tensordot(prv, blk, axes=(2, 0))  # (r2, d2, d, k, r1)
        merged = merged.transpose(0, 1, 3, 2, 4)  # (r2, d2, k, d, r1)
        mat = merged.reshape(r2 * d2 * k, d * r1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        u, vh = _fix_svd_signs(u, vh)
        r = max(1, min(new_rank, len(s)))
        err = float(np.sqrt(np.sum(s[r:] ** 2)))
        cores[p - 1] = u[:, :r].reshape(r2, d2, k, r)
        sv = s[:r, np.newaxis] * vh[:r]
        cores[p] = sv.reshape(r, d, r1)
    return BlockTT(cores), err


def ginibre_blocktt(n_sites, block_dim, ranks, block, seed):
    """Random unit-norm left-orthogonal BlockTT with complex Gaussian cores.

    Core entries are i.i.d. standard complex Gaussian (real and imaginary
    parts each standard normal over sqrt(2)); ranks above the unfolding
    bounds are trimmed.
    """
    if isinstance(ranks, (int, np.integer)):
        ranks = [1] + [int(ranks)] * (n_sites - 1) + [1]
    ranks = [int(r) for r in ranks]
    if len(ranks) != n_sites + 1:
        raise ValueError("ranks must have n_sites + 1 entries")
    if ranks[0] != 1 or ranks[-1] != 1:
        raise ValueError("boundary ranks must be 1")
    bounds = max_block_ranks(n_sites, block_dim, block)
    ranks = [min(r, b) for r, b in zip(ranks, bounds)]
    rng = np.random.default_rng(seed)
    cores = []
    for i in range(n_sites):
        shape = (ranks[i], 2, block_dim, ranks[i + 1]) if i == block else (
            ranks[i], 2, ranks[i + 1])
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        cores.append((re + 1j * im) / np.sqrt(2.0))
    a = left_orthogonalize(BlockTT(cores))
    return tt_scale(a, 1.0 / frob_norm(a))


def _write_container(fh, n, n_block, k, ranks, cores):
    fh.write(_TT_MAGIC)
    fh.write(struct.pack("<IIII", _TT_VERSION, n, n_block, k))
    fh.write(struct.pack(f"<{n + 1}I", *ranks))
    for c in cores:
        fh.write(np.ascontiguousarray(c, dtype="<c16").tobytes())


def save_blocktt(a, path):
    """Write a BlockTT to the binary TTQS container (bit-exact round trip)."""
    with open(path, "wb") as fh:
        _write_container(fh, a.n_sites, a.block, a.block_dim, a.ranks, a.cores)


def save_ttmatrix(e, path):
    """Write a TTMatrix to the TTQS container (block position sentinel)."""
    with open(path, "wb") as fh:
        _write_container(fh, e.n_sites, _TTM_SENTINEL, 0, e.ranks, e.cores)


def _read_exact(fh, count):
    data = fh.read(count)
    if len(data) != count:
        raise ValueError("truncated TTQS file")
    return data


def load_tt(path):
    """Read a TTQS container; returns a BlockTT or a TTMatrix."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _TT_MAGIC:
            raise ValueError("not a TTQS file")
        version, n, n_block, k = struct.unpack("<IIII", _read_exact(fh, 16))
        if version != _TT_VERSION:
            raise ValueError(f"unsupported TTQS version {version}")
        ranks = struct.unpack(f"<{n + 1}I", _read_exact(fh, 4 * (n + 1)))
        cores = []
        for i in range(n):
            if n_block == _TTM_SENTINEL:
                shape = (ranks[i], 2, 2, ranks[i + 1])
            elif i == n_block:
                shape = (ranks[i], 2, k, ranks[i + 1])
            else:
                shape = (ranks[i], 2, ranks[i + 1])
            count = int(np.prod(shape))
            buf = _read_exact(fh, 16 * count)
            cores.append(np.frombuffer(buf, dtype="<c16").reshape(shape).copy())
    if n_block == _TTM_SENTINEL:
        return TTMatrix(cores)
    return BlockTT(cores)


def load_blocktt(path):
    a = load_tt(path)
    if not isinstance(a, BlockTT):
        raise ValueError(f"{path} holds a TTMatrix, expected a BlockTT")
    return a
