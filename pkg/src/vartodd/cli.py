"""Command-line surface: gen, optimize, tune, verify, stats."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .bench import DEFAULT_MODULI, MultiplicationSpec, gen_gf2n, gen_random, verify
from .parity import (
    MatrixFormatError,
    ParityMatrix,
    density,
    read_matrix_file,
    signature_tensor,
    tensors_equal,
    write_matrix_file,
)
from .policy import default_policy, greedy_preset, policy_digest, policy_from_config, policy_to_config
from .search import (
    SearchBudget,
    optimize,
    optimize_beam,
    read_trajectory_file,
    write_trajectory_file,
)
from .tuner import (
    PathStore,
    TuneSettings,
    mapping_spec_from_config,
    tune,
)

__all__ = ["cli", "main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BAD_INPUT = 2
EXIT_BUDGET = 3
EXIT_VERIFY_FAILED = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="vartodd", description="Parity-matrix column-count optimizer")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a benchmark or random instance")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--gf2n", type=int, metavar="N", help="field-multiplier instance of degree N")
    kind.add_argument("--random", nargs=2, type=int, metavar=("N", "M"), help="random instance")
    g.add_argument("--modulus", help="reduction polynomial as an MSB-first bit string")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", help="matrix file (stdout when omitted)")

    o = sub.add_parser("optimize", help="reduce the column count of a matrix file")
    o.add_argument("matrix")
    o.add_argument("--policy", help="policy config (JSON); presets: greedy-max, greedy-min")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--seconds", type=float, help="wall-clock budget")
    o.add_argument("--max-evals", type=int, help="matrix-evaluation budget")
    o.add_argument("--max-iterations", type=int, help="iteration budget")
    o.add_argument("--beam", action="store_true", help="use the beam-search variant")
    o.add_argument("-o", "--output", help="trajectory file")
    o.add_argument("--summary", help="summary JSON file")

    t = sub.add_parser("tune", help="search the policy space for a matrix")
    t.add_argument("matrix")
    t.add_argument("--config", required=True, help="tuner config (JSON)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--store", help="trajectory store directory (overrides config)")
    t.add_argument("--seconds", type=float, help="overall wall-clock budget")
    t.add_argument("--threads", type=int, default=1, help="parallel policy evaluations")
    t.add_argument("-o", "--output", help="best-policy JSON file")

    v = sub.add_parser("verify", help="check two matrix files for equivalence")
    v.add_argument("matrix_a")
    v.add_argument("matrix_b")
    v.add_argument("--json", action="store_true", help="emit the report as JSON")

    s = sub.add_parser("stats", help="per-iteration curve of a trajectory file as CSV")
    s.add_argument("trajectory")
    s.add_argument("-o", "--output", help="CSV file (stdout when omitted)")
    return p


def _cmd_gen(args) -> int:
    if args.gf2n is not None:
        bits = args.modulus or DEFAULT_MODULI.get(args.gf2n)
        if bits is None:
            print(f"no default modulus for degree {args.gf2n}; pass --modulus", file=sys.stderr)
            return EXIT_USAGE
        spec = MultiplicationSpec.from_bitstring(args.gf2n, bits)
        matrix, _ = gen_gf2n(spec)
        comments = [
            f"instance: gf2n n={spec.n} modulus={spec.modulus_bits()}",
            "naive trilinear network start; results from curated starting circuits are not comparable",
        ]
    else:
        n, m = args.random
        matrix = gen_random(n, m, args.seed)
        comments = [f"instance: random n={n} m={m} seed={args.seed}"]
    if args.output:
        write_matrix_file(matrix, args.output, comments)
    else:
        from .parity import format_matrix

        sys.stdout.write(format_matrix(matrix, comments))
    return EXIT_OK


def _load_policy(spec: str | None):
    if spec is None:
        return default_policy()
    if spec in ("greedy-max", "greedy-min"):
        return greedy_preset(spec.split("-")[1])
    with open(spec, "r", encoding="ascii") as fh:
        return policy_from_config(json.load(fh))


def _cmd_optimize(args) -> int:
    matrix = read_matrix_file(args.matrix)
    pol = _load_policy(args.policy)
    if args.seconds is None and args.max_evals is None and args.max_iterations is None:
        print("optimize needs --seconds, --max-evals, or --max-iterations", file=sys.stderr)
        return EXIT_USAGE
    budget = SearchBudget(
        wall_clock_limit=args.seconds,
        max_matrix_evals=args.max_evals,
        max_iterations=args.max_iterations,
    )
    runner = optimize_beam if args.beam else optimize
    traj = runner(matrix, pol, budget, args.seed)
    if traj.stop_reason == "budget" and not traj.actions:
        print("budget exhausted before any iteration completed", file=sys.stderr)
        return EXIT_BUDGET
    equivalent = tensors_equal(signature_tensor(matrix), signature_tensor(traj.states[-1]))
    summary = {
        "input": args.matrix,
        "policy_digest": policy_digest(pol),
        "seed": traj.seed,
        "initial_rho": traj.column_counts[0],
        "final_rho": traj.column_counts[-1],
        "final_density": density(traj.states[-1]),
        "iterations": len(traj.actions),
        "matrix_evals": traj.eval_counts[-1] if traj.eval_counts else 0,
        "stop_reason": traj.stop_reason,
        "equivalent": equivalent,
    }
    if args.output:
        write_trajectory_file(traj, args.output)
    if args.summary:
        with open(args.summary, "w", encoding="ascii") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    print(json.dumps(summary, indent=2))
    if not equivalent:
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def _cmd_tune(args) -> int:
    matrix = read_matrix_file(args.matrix)
    with open(args.config, "r", encoding="ascii") as fh:
        cfg = json.load(fh)
    known = {"mapping", "swarm", "iterations", "repetitions", "fresh_every",
             "per_eval", "store_dir", "wall_clock_limit"}
    unknown = set(cfg) - known
    if unknown:
        raise MatrixFormatError(f"unknown tuner config keys: {sorted(unknown)}")
    spec = mapping_spec_from_config(cfg.get("mapping", []))
    per_eval = cfg.get("per_eval", {})
    budget = SearchBudget(
        wall_clock_limit=per_eval.get("wall_clock_seconds"),
        max_matrix_evals=per_eval.get("max_matrix_evals"),
        max_iterations=per_eval.get("max_iterations"),
    )
    threads = int(os.environ.get("VARTODD_THREADS", args.threads or 1))
    settings = TuneSettings(
        swarm=int(cfg.get("swarm", 8)),
        iterations=int(cfg.get("iterations", 10)),
        repetitions=int(cfg.get("repetitions", 3)),
        fresh_every=int(cfg.get("fresh_every", 4)),
        wall_clock_limit=args.seconds if args.seconds is not None else cfg.get("wall_clock_limit"),
        map_workers=max(1, threads),
    )
    store_dir = args.store or cfg.get("store_dir")
    tensor_ref = signature_tensor(matrix)
    if store_dir and os.path.isdir(store_dir) and os.path.exists(os.path.join(store_dir, "index.json")):
        store = PathStore.load(store_dir, tensor_ref)
    else:
        store = PathStore(tensor_ref)
    try:
        best_pol, report, store = tune(matrix, spec, budget, store, args.seed, settings)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_BUDGET
    if store_dir:
        store.save(store_dir)
    out = {
        "best_fitness": report.fitness,
        "best_rho": report.rho,
        "best_density": report.density,
        "valid": report.valid,
        "policy_digest": policy_digest(best_pol),
        "stored_paths": len(store),
    }
    if args.output:
        with open(args.output, "w", encoding="ascii") as fh:
            json.dump(policy_to_config(best_pol), fh, indent=2)
            fh.write("\n")
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_verify(args) -> int:
    a = read_matrix_file(args.matrix_a)
    b = read_matrix_file(args.matrix_b)
    rep = verify(a, b)
    if args.json:
        print(json.dumps(rep.__dict__, indent=2))
    else:
        verdict = "equivalent" if rep.equivalent else "NOT equivalent"
        print(f"{verdict}: rho {rep.rho_a} vs {rep.rho_b}, "
              f"density {rep.density_a:.4f} vs {rep.density_b:.4f}, "
              f"fitness delta {rep.fitness_delta:+.6f}")
    return EXIT_OK if rep.equivalent else EXIT_VERIFY_FAILED


def _cmd_stats(args) -> int:
    traj = read_trajectory_file(args.trajectory)
    lines = ["iteration,matrix_evals,best_rho"]
    best = None
    for i, rho in enumerate(traj.column_counts):
        best = rho if best is None else min(best, rho)
        evals = traj.eval_counts[i] if i < len(traj.eval_counts) else 0
        lines.append(f"{i},{evals},{best}")
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "optimize":
            return _cmd_optimize(args)
        if args.command == "tune":
            return _cmd_tune(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "stats":
            return _cmd_stats(args)
    except (MatrixFormatError, json.JSONDecodeError) as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except FileNotFoundError as exc:
        print(f"cannot read {exc.filename}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return EXIT_USAGE


def main() -> None:
    sys.exit(cli())
