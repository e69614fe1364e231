"""Command-line entry point.

Subcommands: gen-data, train, eval, audit-equivariance, bench, compare.
Exit codes: 0 success, 1 validation failure (bad flags, bad config, illegal
task/model/group combination), 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import harness
from . import tasks as task_gen
from .harness import RunConfig, parse_config
from .groups import parse_group


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--task")
    p.add_argument("--model")
    p.add_argument("--group")
    p.add_argument("--channels", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer")
    p.add_argument("--scheduler")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-size", type=int, dest="train_size")
    p.add_argument("--test-size", type=int, dest="test_size")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--metrics-csv", dest="metrics_csv")
    p.add_argument("--checkpoint")


def _config_from(args: argparse.Namespace) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("task", "model", "group", "channels", "epochs", "lr", "optimizer",
                "scheduler", "seed", "train_size", "test_size", "batch_size",
                "metrics_csv", "checkpoint"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return replace(cfg, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equireps",
        description="Equivariant-network training and audit harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset file")
    p.add_argument("--task", required=True,
                   choices=["o5", "inertia", "scattering", "nbody", "rotpat"])
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", default="C4", help="cyclic group for rotpat")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also export a CSV copy (tensor tasks only)")

    p = sub.add_parser("train", help="train a model and write metrics + checkpoint")
    _add_override_flags(p)
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on fresh task data")
    _add_override_flags(p)
    p.add_argument("ckpt", help="checkpoint path")

    p = sub.add_parser("audit-equivariance", help="report max equivariance violation")
    _add_override_flags(p)
    p.add_argument("--ckpt", help="audit a trained checkpoint")
    p.add_argument("--trials", type=int, default=50)

    p = sub.add_parser("bench", help="per-epoch timing at matched channel width")
    p.add_argument("--task", required=True)
    p.add_argument("--models", required=True, help="comma list, e.g. mlp,grepsnet")
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--train-size", type=int, default=1000, dest="train_size")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compare", help="loss/time ratios between two configs")
    p.add_argument("--config-a", required=True, dest="config_a")
    p.add_argument("--config-b", required=True, dest="config_b")
    p.add_argument("--sizes", help="comma list of train sizes")
    return parser


def cmd_gen_data(args) -> int:
    if args.task == "rotpat":
        group = parse_group(args.group)
        ds = task_gen.gen_rot_patterns(args.count, group.n, args.seed)
        task_gen.save_regular_dataset(ds, args.out)
        print(f"wrote {args.count} regular samples (|G|={group.n}) to {args.out}")
        return 0
    if args.task == "nbody":
        _, ds = task_gen.gen_nbody(args.count, seed=args.seed)
    else:
        gen = {"o5": task_gen.gen_o5, "inertia": task_gen.gen_inertia,
               "scattering": task_gen.gen_scattering}[args.task]
        ds = gen(args.count, args.seed)
    task_gen.save_dataset(ds, args.out)
    if args.csv:
        task_gen.dataset_to_csv(ds, args.csv)
    print(f"wrote {len(ds)} samples of task {args.task} to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from(args)
    rows, _ = harness.train(cfg, quiet=not args.verbose)
    best = min(r.test_loss for r in rows)
    print(f"trained {cfg.model} on {cfg.task}: best test loss {best:.6g}; "
          f"metrics -> {cfg.metrics_csv}, checkpoint -> {cfg.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    model, spec = harness.load_checkpoint(args.ckpt)
    cfg = _config_from(args)
    if not cfg.task:
        cfg = replace(cfg, task=spec.task, model=spec.kind, group=str(spec.group))
    cfg.validate()
    problem = harness.make_problem(cfg)
    loss = problem.test_loss(model)
    line = f"task={cfg.task} model={spec.kind} test_loss={loss:.6g}"
    if cfg.task == "rotpat":
        line += f" test_accuracy={problem.accuracy(model):.4f}"
    print(line)
    return 0


def cmd_audit(args) -> int:
    cfg = _config_from(args)
    if args.ckpt:
        model, spec = harness.load_checkpoint(args.ckpt)
        task, group = spec.task, spec.group
        worst = harness.audit_model(model, task, group, args.trials)
    else:
        cfg.validate()
        worst = harness.audit_model(None, cfg.task, cfg.group_spec, args.trials,
                                    fresh_weights=True, channels=cfg.channels,
                                    kind=cfg.model or "grepsnet")
    print(f"max relative equivariance violation over {args.trials} trials: {worst:.3e}")
    return 0


def cmd_bench(args) -> int:
    kinds = [k.strip() for k in args.models.split(",") if k.strip()]
    times = harness.bench(args.task, kinds, args.channels,
                          train_size=args.train_size, seed=args.seed)
    print("model,median_epoch_seconds")
    for kind, t in times.items():
        print(f"{kind},{t:.6f}")
    if len(kinds) == 2:
        print(f"ratio {kinds[1]}/{kinds[0]}: {times[kinds[1]] / times[kinds[0]]:.3f}")
    return 0


def cmd_compare(args) -> int:
    cfg_a = parse_config(args.config_a)
    cfg_b = parse_config(args.config_b)
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else None
    print(harness.compare(cfg_a, cfg_b, sizes))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "audit-equivariance": cmd_audit,
    "bench": cmd_bench,
    "compare": cmd_compare,
}


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; fold CLI misuse into validation failures
        return 0 if exc.code == 0 else 1
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
