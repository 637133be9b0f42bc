"""Command-line experiment driver.

Subcommands: generate, measure, reconstruct, evaluate, sweep, bench.
Exit codes: 0 success, 1 configuration error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import math
import sys

from . import harness
from .baseline import DenseFactor, lr_solve, load_dense_factor, save_dense_factor
from .measure import (NoiseSpec, add_noise, load_measurements, measure_all,
                      records_pauli_set, save_measurements)
from .metrics import densify_state, fidelity, trace_distance
from .pauli import sample_pauli_set
from .solver import SolverConfig, solve
from .tt import BlockTT, NumericalAbort, load_tt, save_blocktt


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # config errors exit 1, not argparse's 2
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_state_shape_flags(p):
    p.add_argument("--n-qubits", type=int, default=7)
    p.add_argument("--block-dim", type=int, default=2)
    p.add_argument("--tt-rank", type=int, default=2)
    p.add_argument("--block-position", type=int, default=None,
                   help="0-based block-core site (default: second to last)")


def _add_solver_flags(p):
    p.add_argument("--algorithm", default="blocktt")
    p.add_argument("--step-size", type=float, default=3e-3)
    p.add_argument("--momentum", type=float, default=0.3)
    p.add_argument("--max-iters", type=int, default=600)
    p.add_argument("--rel-cost-tol", type=float, default=1e-10)
    p.add_argument("--gradient-batch", type=int, default=32)
    p.add_argument("--gradient-mode", default="auto",
                   choices=["auto", "tt", "dense"])
    p.add_argument("--backtracking", action="store_true")
    p.add_argument("--lr-rank", type=int, default=None)


def build_parser():
    parser = _Parser(prog="ttqst", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="random ground-truth factor")
    _add_state_shape_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("measure", help="simulate noisy Pauli measurements")
    p.add_argument("--state", required=True)
    p.add_argument("--sampling-ratio", type=float, default=0.4)
    p.add_argument("--snr-db", type=float, default=60.0)
    p.add_argument("--allow-identity", default="true", choices=["true", "false"])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", help="solve from a measurement CSV")
    p.add_argument("--measurements", required=True)
    _add_state_shape_flags(p)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace-out", default=None)

    p = sub.add_parser("evaluate", help="fidelity and trace distance")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", required=True)

    p = sub.add_parser("sweep", help="sampling-ratio sweep (Fig. 4 style)")
    p.add_argument("--config", default=None)
    _add_state_shape_flags(p)
    _add_solver_flags(p)
    p.add_argument("--ratios", default=None,
                   help="comma list; default 0.05,0.1,0.2,0.3,0.4")
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("bench", help="measurement timing benchmark (Fig. 5)")
    p.add_argument("--n-min", type=int, default=3)
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--tt-rank", type=int, default=2)
    p.add_argument("--block-dim", type=int, default=2)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--sampling-ratio", type=float, default=0.05)
    p.add_argument("--budget-s", type=float, default=240.0)
    p.add_argument("--compare-kernels", action="store_true",
                   help="also time the pure-numpy kernel path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    return parser


def _block_site(args):
    if args.block_position is not None:
        return args.block_position
    return max(args.n_qubits - 2, 0)


def _cmd_generate(args):
    a = harness.generate_random_state(args.n_qubits, args.block_dim,
                                      args.tt_rank, _block_site(args), args.seed)
    save_blocktt(a, args.out)
    print(f"wrote {args.out} (n={a.n_sites}, K={a.block_dim}, ranks={a.ranks})")
    return 0


def _cmd_measure(args):
    a = load_tt(args.state)
    if not isinstance(a, BlockTT):
        raise ValueError("--state must hold a BlockTT factor")
    n = a.n_sites
    m = harness.measurement_count(args.sampling_ratio, n)
    pset = sample_pauli_set(n, m, args.seed,
                            allow_identity=args.allow_identity == "true")
    clean = measure_all(a, pset)
    records = add_noise(clean, NoiseSpec(args.snr_db, args.seed + 1), pset)
    save_measurements(records, args.out)
    print(f"wrote {args.out} ({m} measurements, SNR {args.snr_db} dB)")
    return 0


def _cmd_reconstruct(args):
    records = load_measurements(args.measurements)
    pset = records_pauli_set(records)
    n = pset.n_qubits
    block = (args.block_position if args.block_position is not None
             else max(n - 2, 0))
    cfg = SolverConfig(step_size=args.step_size, momentum=args.momentum,
                       max_iters=args.max_iters, rel_cost_tol=args.rel_cost_tol,
                       target_ranks=args.tt_rank,
                       gradient_batch=args.gradient_batch,
                       n_block=block, block_dim=args.block_dim, seed=args.seed,
                       backtracking=args.backtracking,
                       gradient_mode=args.gradient_mode)
    if args.algorithm == "blocktt":
        est, trace = solve(args.seed, records, pset, cfg)
        save_blocktt(est, args.out)
    elif args.algorithm == "lr":
        rank = args.lr_rank if args.lr_rank is not None else 2 * args.block_dim
        est, trace = lr_solve(records, pset, rank, cfg)
        save_dense_factor(est, args.out)
    else:
        raise ValueError(f"unknown algorithm {args.algorithm!r}")
    if args.trace_out:
        trace.write_csv(args.trace_out)
    print(f"wrote {args.out} (iters={len(trace)}, final cost="
          f"{trace.cost[-1]:.6g})")
    return 0


def _load_state_or_factor(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"TTQS":
        return load_tt(path)
    if magic == b"DQSF":
        return load_dense_factor(path)
    raise ValueError(f"{path} is neither a TTQS nor a DQSF file")


def _cmd_evaluate(args):
    rho_t = densify_state(_load_state_or_factor(args.truth))
    rho_e = densify_state(_load_state_or_factor(args.estimate))
    fid = fidelity(rho_e, rho_t)
    td = trace_distance(rho_e, rho_t)
    print(f"fidelity_raw={fid.raw:.17g}")
    print(f"fidelity_clamped={fid.clamped:.17g}")
    print(f"trace_distance={td:.17g}")
    return 0


def _cmd_sweep(args):
    overrides = dict(
        n_qubits=args.n_qubits, block_dim=args.block_dim, tt_rank=args.tt_rank,
        block_position=args.block_position, snr_db=args.snr_db,
        algorithm=args.algorithm, step_size=args.step_size,
        momentum=args.momentum, max_iters=args.max_iters,
        rel_cost_tol=args.rel_cost_tol, gradient_batch=args.gradient_batch,
        gradient_mode=args.gradient_mode,
        backtracking=args.backtracking or None, lr_rank=args.lr_rank,
        trials=args.trials, seed=args.seed)
    if args.config:
        cfg = harness.load_config(args.config, **overrides)
    else:
        cfg = harness.ExperimentConfig(
            **{k: v for k, v in overrides.items() if v is not None})
    if cfg.seed is None:
        raise ValueError("--seed is required")
    ratios = (tuple(float(s) for s in args.ratios.split(","))
              if args.ratios else harness.PAPER_RATIOS)
    progress = None if args.quiet else _print_row
    rows, medians = harness.run_sweep(cfg, ratios, progress=progress)
    harness.write_result_rows(rows, args.out_prefix + "_rows.csv")
    harness.write_medians(medians, args.out_prefix + "_medians.csv")
    bad = sum(1 for r in rows if r.note)
    print(f"wrote {args.out_prefix}_rows.csv ({len(rows)} rows, {bad} failed) "
          f"and {args.out_prefix}_medians.csv")
    return 0


def _print_row(row):
    if isinstance(row, harness.ResultRow):
        td = "nan" if math.isnan(row.trace_distance) else f"{row.trace_distance:.3g}"
        print(f"  ratio={row.sampling_ratio} trial={row.trial} "
              f"alg={row.algorithm} td={td} iters={row.iters} "
              f"t={row.wall_time_s:.1f}s{' ' + row.note if row.note else ''}",
              flush=True)
    else:
        n, m, path, med = row
        med = med if isinstance(med, str) else f"{med:.4g}s"
        print(f"  n={n} m={m} path={path} median={med}", flush=True)


def _cmd_bench(args):
    rows = harness.run_timing_benchmark(
        range(args.n_min, args.n_max + 1), rank=args.tt_rank,
        block_dim=args.block_dim, reps=args.reps, seed=args.seed,
        ratio=args.sampling_ratio, dense_budget_s=args.budget_s,
        compare_kernels=args.compare_kernels,
        progress=None if args.quiet else _print_row)
    harness.write_benchmark_rows(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "measure": _cmd_measure,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "bench": _cmd_bench,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
