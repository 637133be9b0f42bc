"""The measurement map: expectation values by TT contraction, plus noise."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .pauli import SIGMA, PauliSet, PauliString
from .tt import BlockTT, TTMatrix, _merged

IMAG_TOL = 1e-10

_SIGMA_OPS = np.array(SIGMA)  # writable copy; the typed-list path needs one
_block_op_cache = {}


@dataclass(frozen=True)
class MeasurementRecord:
    pauli: PauliString
    y: float
    clean: float | None = None


@dataclass(frozen=True)
class NoiseSpec:
    """Target signal-to-noise ratio in dB; ``math.inf`` disables noise."""

    snr_db: float
    seed: int | None = None


def _block_site_ops(block_dim):
    """Letter-indexed operator table for the block site: kron(sigma, I_K)."""
    if block_dim not in _block_op_cache:
        eye = np.eye(block_dim)
        _block_op_cache[block_dim] = np.ascontiguousarray(
            np.stack([np.kron(SIGMA[c], eye) for c in range(4)]))
    return _block_op_cache[block_dim]


def site_ops(a):
    """Per-site operator tables matching the merged-core layout."""
    ops = []
    for i in range(a.n_sites):
        if i == a.block:
            ops.append(_block_site_ops(a.block_dim))
        else:
            ops.append(_SIGMA_OPS)
    return ops


def merged_cores(a):
    return [np.ascontiguousarray(_merged(c)) for c in a.cores]


def _check_imag(values, what):
    worst = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if worst > IMAG_TOL:
        raise ValueError(
            f"{what} has imaginary part {worst:.3e} above {IMAG_TOL:.0e}; "
            "the observable is not Hermitian or the contraction is broken")
    return values.real


def expectation_pauli_batch(a, codes, force_numpy=False):
    """Expectations of letter-code rows against a factor; the hot path."""
    raw = kernels.expectation_batch(merged_cores(a), site_ops(a), codes,
                                    force_numpy=force_numpy)
    return _check_imag(raw, "expectation batch")


def expectation_tt(a, e):
    """Expectation <rho, E> = Tr((A A^H) E) without forming the operator.

    ``e`` may be a PauliString, a rank-1 TT-matrix (both use the compiled
    kernel), or a general TT-matrix (transfer contraction in numpy).  The
    bra factor is contracted with the observable first, then with the ket
    factor, site by site from the right.
    """
    if isinstance(e, PauliString):
        return float(expectation_pauli_batch(a, e.codes()[np.newaxis, :])[0])
    if not isinstance(e, TTMatrix):
        raise TypeError(f"expected PauliString or TTMatrix, got {type(e).__name__}")
    if e.n_sites != a.n_sites:
        raise ValueError("site count mismatch between factor and observable")
    if all(r == 1 for r in e.ranks):
        code = _rank1_codes(e)
        if code is not None:
            return float(expectation_pauli_batch(a, code[np.newaxis, :])[0])
    return _expectation_general(a, e)


def _rank1_codes(e):
    """Letter codes when every core matches a Pauli matrix; else None."""
    codes = np.empty(e.n_sites, dtype=np.uint8)
    for i, c in enumerate(e.cores):
        mat = c[0, :, :, 0]
        hit = -1
        for s in range(4):
            if np.array_equal(mat, SIGMA[s]):
                hit = s
                break
        if hit < 0:
            return None
        codes[i] = hit
    return codes


def _expectation_general(a, e):
    # t carries (ket bond, operator bond, bra bond) of the right environment
    t = np.ones((1, 1, 1), dtype=np.complex128)
    for site in range(a.n_sites - 1, -1, -1):
        ca = a.cores[site]
        ce = e.cores[site]
        if site == a.block:
            tmp = np.einsum("rxkq,qvs->rxkvs", ca, t)
            tmp = np.einsum("ubxv,rxkvs->urbks", ce, tmp)
            t = np.einsum("pbks,urbks->rup", ca.conj(), tmp)
        else:
            tmp = np.einsum("rxq,qvs->rxvs", ca, t)
            tmp = np.einsum("ubxv,rxvs->urbs", ce, tmp)
            t = np.einsum("pbs,urbs->rup", ca.conj(), tmp)
    val = complex(t[0, 0, 0])
    return float(_check_imag(np.array([val]), "expectation")[0])


def measure_all(a, pset, force_numpy=False):
    """Clean expectation values for every word in the set, in set order."""
    return expectation_pauli_batch(a, pset.codes_matrix(), force_numpy=force_numpy)


def measurement_fma_count(a):
    """Complex FMA count of one expectation contraction (per word)."""
    return kernels.expectation_fma_count(merged_cores(a))


def add_noise(clean, spec, pset):
    """Additive Gaussian noise at the target SNR; one record per word.

    The noise variance is ``mean(clean**2) * 10**(-snr_db/10)``, the
    conventional mean-power definition.
    """
    clean = np.asarray(clean, dtype=np.float64)
    if clean.size == 0:
        raise ValueError("empty measurement vector")
    if len(pset) != clean.size:
        raise ValueError("measurement vector and Pauli set are misaligned")
    if math.isinf(spec.snr_db):
        noisy = clean.copy()
    else:
        power = float(np.mean(clean**2))
        if power == 0.0:
            raise ValueError("all-zero measurements have undefined signal power")
        sigma = math.sqrt(power * 10.0 ** (-spec.snr_db / 10.0))
        rng = np.random.default_rng(spec.seed)
        noisy = clean + sigma * rng.standard_normal(clean.size)
    return [MeasurementRecord(p, float(y), float(c))
            for p, y, c in zip(pset.strings, noisy, clean)]


def realized_snr_db(records):
    clean = np.array([r.clean for r in records])
    noise = np.array([r.y - r.clean for r in records])
    return 10.0 * math.log10(float(np.mean(clean**2)) / float(np.mean(noise**2)))


def save_measurements(records, path):
    """CSV with columns index,pauli,clean,y at full float64 precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "pauli", "clean", "y"])
        for i, r in enumerate(records):
            writer.writerow([i, r.pauli.letters, f"{r.clean:.17g}", f"{r.y:.17g}"])


def load_measurements(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["index", "pauli", "clean", "y"]:
            raise ValueError(f"unexpected measurement CSV header: {reader.fieldnames}")
        for row in reader:
            records.append(MeasurementRecord(PauliString(row["pauli"]),
                                             float(row["y"]), float(row["clean"])))
    return records


def records_pauli_set(records, seed=None):
    strings = tuple(r.pauli for r in records)
    if not strings:
        raise ValueError("no measurement records")
    return PauliSet(strings, strings[0].n_qubits, seed)
