"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is picked once at import from the ``TTQST_KERNEL`` environment
variable: ``auto`` (default, numba when importable), ``numba``, or
``numpy``.  Every public function also accepts ``force_numpy=True`` so the
benchmark can time both paths in one process.

Two kernels live here:

* ``expectation_batch`` — transfer-matrix contraction of a block-TT factor
  against batches of Pauli words (right-to-left, two-stage per site).
* ``pauli_dense_pass`` — expectation values and the residual-weighted
  gradient for a dense ``(D, C)`` factor, using the fact that a Pauli word
  is a signed permutation: row ``b`` of ``E @ A`` is
  ``(-i)**n_Y * (-1)**popcount(b & zy) * A[b ^ x]``.
"""

from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

_KERNEL_ENV = os.environ.get("TTQST_KERNEL", "auto").lower()
if _KERNEL_ENV not in ("auto", "numba", "numpy"):
    raise ValueError(f"TTQST_KERNEL must be auto, numba or numpy, got {_KERNEL_ENV!r}")

if _KERNEL_ENV == "numpy":
    NUMBA_ENABLED = False
else:
    try:
        import numba
        from numba.typed import List as _NumbaList

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False
        if _KERNEL_ENV == "numba":
            logger.warning("TTQST_KERNEL=numba but numba is not importable; "
                           "falling back to numpy kernels")


def active_backend():
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# expectation of Pauli words against a block-TT factor

def _expect_batch_np(cores, site_ops, codes, out):
    m_count = codes.shape[0]
    n = codes.shape[1]
    chunk = max(1, min(m_count, 1 << 16))
    for lo in range(0, m_count, chunk):
        hi = min(lo + chunk, m_count)
        t = np.ones((hi - lo, 1, 1), dtype=np.complex128)
        for site in range(n - 1, -1, -1):
            a = cores[site]
            sig = site_ops[site][codes[lo:hi, site]]
            # ket side: absorb the right environment
            c = np.einsum("rxp,mps->mrxs", a, t)
            # bra side: operator applied to the conjugate core
            b = np.einsum("sbp,mbx->msxp", a.conj(), sig)
            t = np.einsum("mrxp,msxp->mrs", c, b)
        out[lo:hi] = t[:, 0, 0]
    return out


if NUMBA_ENABLED:

    @numba.njit(cache=True)
    def _expect_batch_nb(cores, site_ops, codes, out):  # pragma: no cover
        m_count, n = codes.shape
        rmax = 1
        dmax = 1
        for i in range(n):
            rl, d, rr = cores[i].shape
            if rl > rmax:
                rmax = rl
            if rr > rmax:
                rmax = rr
            if d > dmax:
                dmax = d
        cbuf = np.empty((rmax, dmax, rmax), dtype=np.complex128)
        bbuf = np.empty((rmax, dmax, rmax), dtype=np.complex128)
        t = np.empty((rmax, rmax), dtype=np.complex128)
        tn = np.empty((rmax, rmax), dtype=np.complex128)
        for m in range(m_count):
            t[0, 0] = 1.0 + 0.0j
            for site in range(n - 1, -1, -1):
                a = cores[site]
                sig = site_ops[site][codes[m, site]]
                rl, d, rr = a.shape
                for r in range(rl):
                    for x in range(d):
                        for s2 in range(rr):
                            acc = 0.0 + 0.0j
                            for r2 in range(rr):
                                acc += a[r, x, r2] * t[r2, s2]
                            cbuf[r, x, s2] = acc
                for s in range(rl):
                    for x in range(d):
                        for s2 in range(rr):
                            acc = 0.0 + 0.0j
                            for bb in range(d):
                                acc += np.conj(a[s, bb, s2]) * sig[bb, x]
                            bbuf[s, x, s2] = acc
                for r in range(rl):
                    for s in range(rl):
                        acc = 0.0 + 0.0j
                        for x in range(d):
                            for s2 in range(rr):
                                acc += cbuf[r, x, s2] * bbuf[s, x, s2]
                        tn[r, s] = acc
                for r in range(rl):
                    for s in range(rl):
                        t[r, s] = tn[r, s]
            out[m] = t[0, 0]
        return out


def expectation_batch(cores, site_ops, codes, force_numpy=False):
    """Expectation values of many Pauli words against one factor.

    Parameters
    ----------
    cores : list of ndarray
        Block-TT cores with the block core merged to 3-way ``(r, 2K, r')``.
    site_ops : list of ndarray
        Per site, the ``(4, d, d)`` operator table indexed by letter code
        (the block site's table carries ``kron(sigma, I_K)``).
    codes : ndarray
        ``(M, N)`` uint8 letter codes.

    Returns
    -------
    ndarray
        ``(M,)`` complex expectation values.
    """
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    out = np.empty(codes.shape[0], dtype=np.complex128)
    if codes.shape[0] == 0:
        return out
    if NUMBA_ENABLED and not force_numpy:
        core_list = _NumbaList()
        for c in cores:
            core_list.append(np.ascontiguousarray(c, dtype=np.complex128))
        ops_list = _NumbaList()
        for o in site_ops:
            ops_list.append(np.ascontiguousarray(o, dtype=np.complex128))
        return _expect_batch_nb(core_list, ops_list, codes, out)
    return _expect_batch_np(list(cores), list(site_ops), codes, out)


def expectation_fma_count(cores):
    """Complex fused multiply-adds one batched expectation performs per word.

    Counts the three contraction stages of the kernel from the core shapes
    alone, so it is identical for both backends.
    """
    total = 0
    for core in cores:
        rl, d, rr = core.shape if core.ndim == 3 else (
            core.shape[0], core.shape[1] * core.shape[2], core.shape[3])
        total += rl * d * rr * rr  # right-environment absorption
        total += rl * d * d * rr   # operator onto the conjugate core
        total += rl * rl * d * rr  # transfer-matrix update
    return total


# ---------------------------------------------------------------------------
# dense-factor pass: Pauli words as signed permutations

def pauli_masks(codes):
    """Bit masks and Y phases for each word; site 0 is the top bit."""
    m_count, n = codes.shape
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    xmask = ((codes == 1) | (codes == 2)) @ weights
    zymask = ((codes == 2) | (codes == 3)) @ weights
    n_y = (codes == 2).sum(axis=1)
    yphase = (-1j) ** n_y.astype(np.int64)
    return xmask.astype(np.int64), zymask.astype(np.int64), yphase.astype(np.complex128)


def _parity_np(v):
    v = v ^ (v >> 16)
    v = v ^ (v >> 8)
    v = v ^ (v >> 4)
    v = v ^ (v >> 2)
    v = v ^ (v >> 1)
    return v & 1


def _pauli_dense_pass_np(xmask, zymask, yphase, amat, resid_base, grad, clean,
                         subtract_clean=True):
    d = amat.shape[0]
    base = np.arange(d, dtype=np.int64)
    want_grad = grad is not None
    for m in range(xmask.shape[0]):
        sgn = 1.0 - 2.0 * _parity_np(base & zymask[m])
        ea = (yphase[m] * sgn)[:, np.newaxis] * amat[base ^ xmask[m]]
        val = np.vdot(amat, ea)
        clean[m] = val.real
        if want_grad:
            w = resid_base[m] - val.real if subtract_clean else resid_base[m]
            grad += (-2.0 * w) * ea
    return clean


if NUMBA_ENABLED:

    @numba.njit(cache=True)
    def _pauli_dense_pass_nb(xmask, zymask, yphase, amat, resid_base, grad, clean,
                             want_grad, subtract_clean):  # pragma: no cover
        m_count = xmask.shape[0]
        d, ncols = amat.shape
        for m in range(m_count):
            x = xmask[m]
            z = zymask[m]
            ph = yphase[m]
            acc = 0.0 + 0.0j
            for b in range(d):
                v = b & z
                v ^= v >> 16
                v ^= v >> 8
                v ^= v >> 4
                v ^= v >> 2
                f = ph if (v ^ (v >> 1)) & 1 == 0 else -ph
                src = b ^ x
                for c in range(ncols):
                    acc += np.conj(amat[b, c]) * (f * amat[src, c])
            clean[m] = acc.real
            if want_grad:
                w = resid_base[m] - acc.real if subtract_clean else resid_base[m]
                w = -2.0 * w
                for b in range(d):
                    v = b & z
                    v ^= v >> 16
                    v ^= v >> 8
                    v ^= v >> 4
                    v ^= v >> 2
                    f = ph if (v ^ (v >> 1)) & 1 == 0 else -ph
                    fw = w * f
                    src = b ^ x
                    for c in range(ncols):
                        grad[b, c] += fw * amat[src, c]
        return clean


def pauli_dense_pass(codes, amat, y=None, residuals=None, force_numpy=False):
    """Expectations, and optionally the objective gradient, for a dense factor.

    Computes ``clean[m] = Re <A, E_m A>`` for every word.  When ``y`` is
    given also accumulates ``grad = -2 sum_m (y_m - clean_m) E_m A``; when
    ``residuals`` is given instead, those weights are used verbatim
    (``grad = -2 sum_m residuals_m E_m A``).

    Returns ``(clean, grad)`` with ``grad`` None when neither is given.
    """
    if y is not None and residuals is not None:
        raise ValueError("pass either y or residuals, not both")
    amat = np.ascontiguousarray(amat, dtype=np.complex128)
    xmask, zymask, yphase = pauli_masks(np.asarray(codes))
    m_count = xmask.shape[0]
    clean = np.empty(m_count, dtype=np.float64)
    want_grad = y is not None or residuals is not None
    grad = np.zeros_like(amat) if want_grad else None
    subtract_clean = y is not None
    if want_grad:
        resid_base = np.ascontiguousarray(y if subtract_clean else residuals,
                                          dtype=np.float64)
    else:
        resid_base = clean
    if m_count == 0:
        return clean, grad
    if NUMBA_ENABLED and not force_numpy:
        gbuf = grad if want_grad else np.zeros((1, 1), dtype=np.complex128)
        _pauli_dense_pass_nb(xmask, zymask, yphase, amat, resid_base, gbuf,
                             clean, want_grad, subtract_clean)
    else:
        _pauli_dense_pass_np(xmask, zymask, yphase, amat, resid_base, grad,
                             clean, subtract_clean)
    return clean, grad
