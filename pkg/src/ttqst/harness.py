"""Experiment driver: sampling-ratio sweeps and the measurement-time benchmark.

Every artifact is a pure function of (config, seed).  Per-run RNG streams
are derived as ``base = seed + trial*10007 + ratio_index*1009`` with four
purpose-separated sub-seeds ``4*base + {0: truth, 1: paulis, 2: noise,
3: init}``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .baseline import lr_solve
from .measure import NoiseSpec, add_noise, measure_all
from .metrics import densify_state, fidelity, trace_distance
from .pauli import sample_pauli_set
from .solver import SolverConfig, solve
from .tt import ginibre_blocktt

PAPER_RATIOS = (0.05, 0.10, 0.20, 0.30, 0.40)


@dataclass
class ExperimentConfig:
    """Full parameterization of one sweep; mirrors the CLI flags."""

    n_qubits: int = 7
    block_dim: int = 2
    tt_rank: int = 2
    block_position: int | None = None  # 0-based; None puts it second to last
    sampling_ratio: float = 0.40
    snr_db: float = 60.0
    algorithm: str = "blocktt"  # comma-separated subset of {blocktt, lr}
    step_size: float = 3e-3
    momentum: float = 0.3
    max_iters: int = 600
    rel_cost_tol: float = 1e-10
    gradient_batch: int = 32
    gradient_rounding_tol: float = 1e-12
    gradient_mode: str = "auto"
    backtracking: bool = False
    lr_rank: int | None = None  # None defaults to 2 * block_dim
    allow_identity: bool = True
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ValueError("sampling_ratio must be in (0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        for name in self.algorithms():
            if name not in ("blocktt", "lr"):
                raise ValueError(f"unknown algorithm {name!r}")

    def algorithms(self):
        return tuple(s.strip() for s in self.algorithm.split(",") if s.strip())

    def block_site(self):
        return (self.block_position if self.block_position is not None
                else max(self.n_qubits - 2, 0))


@dataclass
class ResultRow:
    trial: int
    algorithm: str
    n_qubits: int
    m: int
    sampling_ratio: float
    snr_db: float
    fidelity_raw: float
    fidelity_clamped: float
    trace_distance: float
    final_cost: float
    iters: int
    wall_time_s: float
    seed: int
    note: str = ""


_BOOL_WORDS = {"true": True, "false": False}


def serialize_config(cfg):
    """Flat ``key = value`` text; round-trips through parse_config."""
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if val is None:
            text = "none"
        elif isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, float):
            text = f"{val:.17g}"
        else:
            text = str(val)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def parse_config(text, **overrides):
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not 'key = value': {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    cfg = ExperimentConfig(**values)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg


def _parse_value(key, raw):
    if raw.lower() == "none":
        return None
    if raw.lower() in _BOOL_WORDS:
        return _BOOL_WORDS[raw.lower()]
    for caster in (int, float):
        try:
            return caster(raw)
        except ValueError:
            continue
    return raw


def load_config(path, **overrides):
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)


def generate_random_state(n_qubits, block_dim, tt_ranks, block_position, seed):
    """Ginibre-core block TT, left-orthogonalized and normalized to norm 1."""
    return ginibre_blocktt(n_qubits, block_dim, tt_ranks, block_position, seed)


def trial_seeds(seed, trial, ratio_index):
    base = seed + trial * 10007 + ratio_index * 1009
    return 4 * base, 4 * base + 1, 4 * base + 2, 4 * base + 3


def measurement_count(ratio, n_qubits):
    return int(math.ceil(ratio * 4**n_qubits))


def run_single(cfg, ratio, trial, ratio_index=0, algorithm=None):
    """One trial: fresh truth, fresh Pauli set, noise, solve, metrics."""
    algorithm = algorithm or cfg.algorithms()[0]
    n = cfg.n_qubits
    m = measurement_count(ratio, n)
    s_state, s_pauli, s_noise, s_init = trial_seeds(cfg.seed, trial, ratio_index)
    truth = generate_random_state(n, cfg.block_dim, cfg.tt_rank,
                                  cfg.block_site(), s_state)
    pset = sample_pauli_set(n, m, s_pauli, allow_identity=cfg.allow_identity)
    clean = measure_all(truth, pset)
    records = add_noise(clean, NoiseSpec(cfg.snr_db, s_noise), pset)
    scfg = SolverConfig(step_size=cfg.step_size, momentum=cfg.momentum,
                        max_iters=cfg.max_iters, rel_cost_tol=cfg.rel_cost_tol,
                        target_ranks=cfg.tt_rank,
                        gradient_rounding_tol=cfg.gradient_rounding_tol,
                        gradient_batch=cfg.gradient_batch,
                        n_block=cfg.block_site(), block_dim=cfg.block_dim,
                        seed=s_init, backtracking=cfg.backtracking,
                        gradient_mode=cfg.gradient_mode)
    t0 = time.perf_counter()
    if algorithm == "blocktt":
        est, trace = solve(s_init, records, pset, scfg)
    else:
        rank = cfg.lr_rank if cfg.lr_rank is not None else 2 * cfg.block_dim
        est, trace = lr_solve(records, pset, rank, scfg)
    wall = time.perf_counter() - t0
    rho_true = densify_state(truth)
    rho_est = densify_state(est)
    fid = fidelity(rho_est, rho_true)
    td = trace_distance(rho_est, rho_true)
    return ResultRow(trial, algorithm, n, m, ratio, cfg.snr_db, fid.raw,
                     fid.clamped, td, trace.cost[-1], len(trace), wall, s_init)


def run_sweep(cfg, ratios=None, progress=None):
    """All (ratio, trial, algorithm) runs plus per-ratio medians.

    Per-trial failures become rows with NaN metrics and an error note; the
    sweep itself never aborts.
    """
    ratios = tuple(ratios if ratios is not None else (cfg.sampling_ratio,))
    rows = []
    for ridx, ratio in enumerate(ratios):
        for trial in range(cfg.trials):
            for algorithm in cfg.algorithms():
                try:
                    row = run_single(cfg, ratio, trial, ridx, algorithm)
                except Exception as exc:  # failure rows, never abort the sweep
                    m = measurement_count(ratio, cfg.n_qubits)
                    seed = trial_seeds(cfg.seed, trial, ridx)[3]
                    row = ResultRow(trial, algorithm, cfg.n_qubits, m, ratio,
                                    cfg.snr_db, float("nan"), float("nan"),
                                    float("nan"), float("nan"), 0, 0.0, seed,
                                    note=f"{type(exc).__name__}: {exc}")
                rows.append(row)
                if progress is not None:
                    progress(row)
    medians = summarize_medians(rows)
    return rows, medians


def summarize_medians(rows):
    keys = sorted({(r.algorithm, r.sampling_ratio) for r in rows})
    medians = []
    for algorithm, ratio in keys:
        sel = [r for r in rows if r.algorithm == algorithm
               and r.sampling_ratio == ratio]
        medians.append({
            "algorithm": algorithm,
            "sampling_ratio": ratio,
            "n_trials": len(sel),
            "median_fidelity_raw": float(np.median([r.fidelity_raw for r in sel])),
            "median_fidelity_clamped": float(
                np.median([r.fidelity_clamped for r in sel])),
            "median_trace_distance": float(
                np.median([r.trace_distance for r in sel])),
        })
    return medians


_ROW_FIELDS = [f.name for f in fields(ResultRow)]


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_result_rows(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ROW_FIELDS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, name)) for name in _ROW_FIELDS])


def read_result_rows(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(
                int(rec["trial"]), rec["algorithm"], int(rec["n_qubits"]),
                int(rec["m"]), float(rec["sampling_ratio"]), float(rec["snr_db"]),
                float(rec["fidelity_raw"]), float(rec["fidelity_clamped"]),
                float(rec["trace_distance"]), float(rec["final_cost"]),
                int(rec["iters"]), float(rec["wall_time_s"]), int(rec["seed"]),
                rec.get("note", "")))
    return rows


def write_medians(medians, path):
    cols = ["algorithm", "sampling_ratio", "n_trials", "median_fidelity_raw",
            "median_fidelity_clamped", "median_trace_distance"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for med in medians:
            writer.writerow([_fmt(med[c]) for c in cols])


# ---------------------------------------------------------------------------
# measurement timing benchmark

BUDGET_EXCEEDED = "budget-exceeded"


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _dense_measure(rho, pset):
    from .pauli import pauli_dense

    out = np.empty(len(pset))
    for i, p in enumerate(pset.strings):
        out[i] = np.vdot(pauli_dense(p), rho).real
    return out


def run_timing_benchmark(n_range, rank=2, block_dim=2, reps=10, seed=0,
                         ratio=0.05, dense_budget_s=240.0,
                         compare_kernels=False, progress=None):
    """Median time to evaluate M = ceil(ratio * 4**n) expectations per path.

    Paths: ``tt`` (active kernel backend), optionally ``tt_numpy`` (the
    fallback, for backend comparison), and ``dense`` — the conventional
    matrix-format measurement Tr(rho E_m) with every observable built
    densely.  The dense path is skipped with a budget marker once its
    predicted cost exceeds the budget.  Returns rows of
    (n_qubits, m, path, median_s).
    """
    from .metrics import densify_state

    rows = []
    dense_pred = 0.0
    for n in sorted(n_range):
        m = measurement_count(ratio, n)
        truth = generate_random_state(n, block_dim, rank, max(n - 2, 0),
                                      seed + 13 * n)
        pset = sample_pauli_set(n, m, seed + 13 * n + 1)
        measure_all(truth, pset.__class__(pset.strings[:1], n))  # warm the jit
        rows.append((n, m, "tt", _median_time(lambda: measure_all(truth, pset),
                                              reps)))
        if progress is not None:
            progress(rows[-1])
        if compare_kernels:
            rows.append((n, m, "tt_numpy",
                         _median_time(lambda: measure_all(truth, pset,
                                                          force_numpy=True),
                                      reps)))
            if progress is not None:
                progress(rows[-1])
        if dense_pred > dense_budget_s:
            rows.append((n, m, "dense", BUDGET_EXCEEDED))
            if progress is not None:
                progress(rows[-1])
            continue
        rho = densify_state(truth).rho
        med = _median_time(lambda: _dense_measure(rho, pset), reps)
        rows.append((n, m, "dense", med))
        if progress is not None:
            progress(rows[-1])
        # next point: 4x the words, each 4x the matrix entries
        dense_pred = med * 16.0
    return rows


def write_benchmark_rows(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_qubits", "m", "path", "median_s"])
        for n, m, pathname, med in rows:
            writer.writerow([n, m, pathname,
                             med if isinstance(med, str) else f"{med:.17g}"])
