"""Command-line entry point: ``tsprl <command> [options]``.

Every command writes CSV (to ``--out`` or stdout) and a one-line human
summary to stderr. When ``--out`` is a file, a matplotlib figure with the
same stem is written next to it unless ``--no-figure`` is given.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, plotting
from .core import ParseError, generate_instance, read_instance, tour_length, write_instance
from .exact import held_karp_exact
from .policy import ModelConfig
from .search import LocalSearchConfig
from .trainer import CheckpointError, TrainConfig, load_checkpoint, train


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary(msg: str) -> None:
    print(msg, file=sys.stderr)


def _want_figure(args) -> bool:
    return bool(args.out) and not args.no_figure


def _search_config(args, rounds_default: int = 25) -> LocalSearchConfig:
    return LocalSearchConfig(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                             rounds=rounds_default if args.rounds is None else args.rounds,
                             circular=not args.linear_window)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _load_instance(args):
    if args.instance:
        return read_instance(args.instance)
    if args.n is None:
        raise ValueError("give --instance or --n")
    return generate_instance(args.n, args.seed)


# -- commands ---------------------------------------------------------------

def cmd_generate(args) -> None:
    rows = [["path", "n", "seed"]]
    if args.count == 1 and args.out and not args.out.endswith("/"):
        inst = generate_instance(args.n, args.seed)
        write_instance(inst, args.out)
        rows.append([args.out, args.n, args.seed])
    else:
        if not args.out:
            raise ValueError("--out must be a directory when --count > 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i in range(args.count):
            seed = args.seed + i
            path = out / f"tsp{args.n}_seed{seed}.txt"
            write_instance(generate_instance(args.n, seed), path)
            rows.append([str(path), args.n, seed])
    sys.stdout.write(_csv(rows))
    _summary(f"wrote {args.count} instance(s) of {args.n} cities")


def cmd_solve(args) -> None:
    inst = _load_instance(args)
    ctx = bench.SolverContext(_params(args.checkpoint), _search_config(args))
    tour = bench.get_solver(args.solver)(inst, np.random.default_rng(args.seed), ctx)
    length = tour_length(inst, tour)
    _emit(args, _csv([["solver", "n", "seed", "length", "tour"],
                      [args.solver, inst.n, args.seed, f"{length:.6f}", " ".join(map(str, tour))]]))
    _summary(f"{args.solver}: length {length:.4f} on {inst.n} cities")
    if _want_figure(args):
        plotting.plot_tour(inst, tour, plotting.figure_path(args.out), f"{args.solver}  L={length:.4f}")


def cmd_oracle(args) -> None:
    rows = [["n", "seed", "length", "tour"]]
    insts = [read_instance(args.instance)] if args.instance else \
        [generate_instance(args.n, args.seed + i) for i in range(args.count)]
    for i, inst in enumerate(insts):
        tour = held_karp_exact(inst)
        rows.append([inst.n, "" if args.instance else args.seed + i,
                     f"{tour_length(inst, tour):.9f}", " ".join(map(str, tour))])
    _emit(args, _csv(rows))
    _summary(f"solved {len(insts)} instance(s) exactly")
    if _want_figure(args) and len(insts) == 1:
        plotting.plot_tour(insts[0], held_karp_exact(insts[0]), plotting.figure_path(args.out), "optimal")


def _params(path):
    return load_checkpoint(path).params if path else None


def cmd_eval(args) -> None:
    params = _params(args.checkpoint)
    search = _search_config(args)
    reports = []
    for solver in args.solver:
        for n in args.n:
            r = bench.evaluate_solver(solver, n, args.count, args.seed, params, search, args.reference)
            reports.append(r)
            _summary(r.summary())
    _emit(args, bench.reports_to_csv(reports, timing=args.timing))
    if _want_figure(args):
        plotting.plot_reports(reports, plotting.figure_path(args.out))


def cmd_ablate(args) -> None:
    checkpoints = {}
    for item in args.checkpoint or []:
        variant, _, path = item.partition("=")
        if not path:
            raise ValueError(f"--checkpoint expects VARIANT=PATH, got {item!r}")
        checkpoints[variant] = load_checkpoint(path).params
    variants = args.variants or (["wo_rl"] + [v for v in bench.LEARNED_VARIANTS if v in checkpoints])
    counts = {n: args.count for n in args.sizes} if args.count else None
    rows = bench.run_ablation(checkpoints, args.sizes, args.seed, counts, variants,
                              _search_config(args, rounds_default=15))
    for r in rows:
        _summary(f"{r.variant} TSP{r.n}: {r.mean_length:.4f} ({r.gap_pct:.2f}% vs {r.reference})")
    _emit(args, bench.ablation_to_csv(rows))
    if _want_figure(args):
        plotting.plot_ablation(rows, plotting.figure_path(args.out))


ABLATION_TRAINING = {
    "wo_cl": {"fixed_size": 50},
    "wo_baseline": {"baseline": "central-self-critic"},
    "wo_local_search": {"baseline": "central-self-critic", "train_search": False},
}


def build_train_config(args) -> TrainConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{args.config}: invalid JSON ({exc})") from None
    model = dict(data.pop("model", {}) or {})
    search = dict(data.pop("search", {}) or {})
    if args.ablation:
        data.update(ABLATION_TRAINING[args.ablation])
    flags = {
        "epochs": args.epochs, "steps_per_epoch": args.steps, "batch_size": args.batch_size,
        "lr": args.lr, "lr_decay": args.lr_decay, "sigma_n": args.sigma_n, "n_min": args.n_min,
        "n_max": args.n_max, "seed": args.seed, "optimizer": args.optimizer,
        "baseline": args.baseline, "fixed_size": args.fixed_size, "first_city": args.first_city,
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    if args.paper_literal_baseline:
        data["baseline"] = "paper-literal"
    if args.no_clip:
        data["clip_norm"] = None
    elif args.clip_norm is not None:
        data["clip_norm"] = args.clip_norm
    if args.no_train_search:
        data["train_search"] = False
    model.update({k: v for k, v in {"hidden": args.hidden, "n_gnn": args.n_gnn}.items() if v is not None})
    search.update({k: v for k, v in {"alpha": args.alpha, "beta": args.beta, "gamma": args.gamma,
                                     "rounds": args.rounds}.items() if v is not None})
    if args.linear_window:
        search["circular"] = False
    data["model"] = ModelConfig(**model)
    data["search"] = LocalSearchConfig(**search)
    return TrainConfig.from_dict(data)


def cmd_train(args) -> None:
    config = build_train_config(args)
    out = Path(args.out or "runs/train")
    pool = None
    if args.pool_size:
        pool = [generate_instance(args.pool_n, args.pool_seed + i) for i in range(args.pool_size)]
    ckpt = train(config, out, instances=pool)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    sys.stdout.write((out / "metrics.csv").read_text())
    _summary(f"trained {config.epochs} epoch(s); last checkpoint epoch {ckpt.epoch} in {out}")
    if not args.no_figure:
        plotting.plot_training_curve(out / "metrics.csv", out / "metrics.png")


# -- parser -----------------------------------------------------------------

def _add_common(p, out_help="CSV output file (default: stdout)"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=out_help)
    p.add_argument("--no-figure", action="store_true", help="skip the figure written next to --out")


def _add_search(p, defaults: bool = True):
    p.add_argument("--alpha", type=float, default=0.5 if defaults else None)
    p.add_argument("--beta", type=float, default=1.5 if defaults else None)
    p.add_argument("--gamma", type=float, default=0.25 if defaults else None)
    p.add_argument("--rounds", type=int, default=None, help="combined-search rounds I")
    p.add_argument("--linear-window", action="store_true", help="non-circular insertion window")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsprl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write random instances in the native text format")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    _add_common(p, "instance file (count 1) or directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--instance", help="native or TSPLIB EUC_2D file")
    p.add_argument("--n", type=int, help="generate a random instance instead")
    p.add_argument("--solver", default="farthest_insertion", choices=sorted(bench.SOLVERS))
    p.add_argument("--checkpoint")
    _add_common(p)
    _add_search(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="exact Held-Karp solutions (n <= 15)")
    p.add_argument("--instance")
    p.add_argument("--n", type=int)
    p.add_argument("--count", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="evaluate solvers on seeded random instances")
    p.add_argument("--solver", nargs="+", required=True, choices=sorted(bench.SOLVERS))
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--checkpoint")
    p.add_argument("--reference", default="auto", choices=["auto", "exact", "farthest", "none"])
    p.add_argument("--timing", action="store_true",
                   help="fill the timing columns (makes the CSV run-dependent)")
    _add_common(p)
    _add_search(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="ablation table (lengths and gaps per variant)")
    p.add_argument("--checkpoint", action="append", metavar="VARIANT=PATH")
    p.add_argument("--variants", nargs="+", choices=bench.ABLATION_VARIANTS)
    p.add_argument("--sizes", type=int, nargs="+", default=[20, 50])
    p.add_argument("--count", type=int, help="instances per size (default 10000, or 128 above n=100)")
    _add_common(p)
    _add_search(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("train", help="train the policy")
    p.add_argument("--config", help="JSON config; flags take precedence")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps", type=int, help="steps per epoch")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--sigma-n", type=float)
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--fixed-size", type=int, help="train at one size (no curriculum)")
    p.add_argument("--hidden", type=int)
    p.add_argument("--n-gnn", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--no-clip", action="store_true")
    p.add_argument("--baseline", choices=["rollout", "paper-literal", "central-self-critic"])
    p.add_argument("--paper-literal-baseline", action="store_true")
    p.add_argument("--no-train-search", action="store_true")
    p.add_argument("--first-city", choices=["fixed", "random"])
    p.add_argument("--ablation", choices=sorted(ABLATION_TRAINING))
    p.add_argument("--pool-size", type=int, help="train on a fixed pool of instances")
    p.add_argument("--pool-n", type=int, default=10)
    p.add_argument("--pool-seed", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-figure", action="store_true")
    _add_search(p, defaults=False)
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, KeyError, CheckpointError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
