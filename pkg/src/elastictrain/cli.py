"""Command-line surface.

Subcommands: ``train`` (run a config file), ``simulate`` (assemble a run
from flags), ``project`` (print iteration-time projections), and
``rebalance-demo`` (emit per-worker swimlane metrics for a two-speed
cluster).  Exit codes: 0 success, 1 runtime failure, 2 bad usage or
config.
"""

import argparse
import sys
from typing import List, Optional

from .cluster import (microtask_hetero_time, microtask_iteration_time,
                      unitask_balanced_time)
from .datasets import generate_synthetic, parse_sparse_dataset
from .errors import ConfigError, ElasticTrainError
from .metrics import write_metrics
from .runconfig import (PRESET_NAMES, RunConfig, SyntheticSpec,
                        load_run_config, parse_run_config, resolve_lam,
                        scenario_preset)
from .trainer import emulate_microtasks, run_training
from .transport import SocketTransport


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elastictrain",
        description="elastic distributed training on a virtual cluster")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a YAML run-config file")
    train.add_argument("--config", required=True)
    train.add_argument("--output", help="metrics CSV path override")
    train.add_argument("--transport", choices=["inprocess", "socket"],
                       default="inprocess")

    sim = sub.add_parser("simulate", help="assemble a run from flags")
    sim.add_argument("--preset", choices=PRESET_NAMES, default="static")
    sim.add_argument("--algo", choices=["cocoa", "local-sgd"],
                     default="cocoa")
    sim.add_argument("--synthetic", metavar="n=..,d=..[,margin=..]"
                     "[,noise=..][,seed=..]")
    sim.add_argument("--dataset", help="sparse text dataset path")
    sim.add_argument("--capacity", type=int,
                     help="chunk capacity in bytes")
    sim.add_argument("--lam", type=float)
    sim.add_argument("--target", type=float)
    sim.add_argument("--max-epochs", type=float, default=50.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--micro-tasks", type=int,
                     help="emulate K fixed tasks instead of uni-tasks")
    sim.add_argument("--transport", choices=["inprocess", "socket"],
                     default="inprocess")
    sim.add_argument("--out", default="metrics.csv")

    proj = sub.add_parser("project",
                          help="print iteration-time projections")
    proj.add_argument("--K", type=int, required=True)
    proj.add_argument("--N", type=int)
    proj.add_argument("--total-work", type=float, default=16.0)
    proj.add_argument("--n-fast", type=int)
    proj.add_argument("--n-slow", type=int)
    proj.add_argument("--slow-factor", type=float, default=1.5)
    proj.add_argument("--speeds",
                      help="comma-separated node speeds for the "
                      "uni-task projection")

    demo = sub.add_parser("rebalance-demo",
                          help="two-speed rebalancing swimlane metrics")
    demo.add_argument("--preset", choices=PRESET_NAMES,
                      default="hetero-12x4")
    demo.add_argument("--n", type=int, default=4000)
    demo.add_argument("--d", type=int, default=20)
    demo.add_argument("--seed", type=int, default=7)
    demo.add_argument("--max-epochs", type=float, default=30.0)
    demo.add_argument("--out", default="rebalance.csv")
    return parser


def _parse_synthetic(text: str) -> SyntheticSpec:
    fields = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        if not value:
            raise ConfigError(f"bad synthetic field {part!r}")
        fields[key.strip()] = value.strip()
    try:
        return SyntheticSpec(n=int(fields["n"]), d=int(fields["d"]),
                             margin=float(fields.get("margin", 1.0)),
                             noise=float(fields.get("noise", 0.0)),
                             seed=int(fields.get("seed", 0)))
    except KeyError as exc:
        raise ConfigError(f"synthetic spec needs {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad synthetic spec: {exc}") from None


def _load_dataset(config: RunConfig):
    if config.dataset_path is not None:
        return parse_sparse_dataset(config.dataset_path)
    s = config.synthetic
    return generate_synthetic(s.n, s.d, s.margin, s.noise, s.seed)


def _execute_run(config: RunConfig, out_path, use_socket: bool) -> int:
    dataset = _load_dataset(config)
    config = resolve_lam(config, len(dataset))
    trainer = config.trainer
    if trainer.micro_tasks is not None:
        records = emulate_microtasks(trainer, dataset, config.scenario)
    else:
        transport = SocketTransport() if use_socket else None
        records = run_training(trainer, config.scenario, dataset,
                               config.chunk_capacity_bytes,
                               transport=transport)
    out = out_path or config.output_path or "metrics.csv"
    write_metrics(records, out, config.to_dict())
    final = records[-1].metric if records else float("nan")
    print(f"wrote {out}: {len(records)} iterations, "
          f"final metric {final:.6g}")
    return 0


def _cmd_train(args) -> int:
    config = load_run_config(args.config)
    return _execute_run(config, args.output,
                        args.transport == "socket")


def _cmd_simulate(args) -> int:
    if (args.synthetic is None) == (args.dataset is None):
        raise ConfigError(
            "give exactly one of --synthetic or --dataset")
    dataset_section = {}
    if args.synthetic is not None:
        s = _parse_synthetic(args.synthetic)
        dataset_section["synthetic"] = {
            "n": s.n, "d": s.d, "margin": s.margin, "noise": s.noise,
            "seed": s.seed}
    else:
        dataset_section["path"] = args.dataset
    trainer_section = {
        "max_epochs": args.max_epochs,
        "seed": args.seed,
        "micro_tasks": args.micro_tasks,
        "hyperparams": {},
    }
    if args.lam is not None:
        trainer_section["hyperparams"]["lam"] = args.lam
    if args.target is not None:
        trainer_section["convergence_target"] = args.target
    raw = {"algorithm": args.algo, "dataset": dataset_section,
           "trainer": trainer_section, "scenario": args.preset}
    if args.capacity is not None:
        raw["chunk_capacity_bytes"] = args.capacity
    config = parse_run_config(raw)
    return _execute_run(config, args.out, args.transport == "socket")


def _cmd_project(args) -> int:
    work = args.total_work
    hetero = args.n_fast is not None or args.n_slow is not None
    if hetero:
        if args.n_fast is None or args.n_slow is None:
            raise ConfigError("--n-fast and --n-slow go together")
        micro = microtask_hetero_time(args.K, args.n_fast, args.n_slow,
                                      args.slow_factor, work)
        print(f"micro-task K={args.K} fast={args.n_fast} "
              f"slow={args.n_slow} x{args.slow_factor}: {float(micro)}")
        speeds = [1.0] * args.n_fast \
            + [1.0 / args.slow_factor] * args.n_slow
        uni = unitask_balanced_time(speeds, work)
        print(f"uni-task fast={args.n_fast} slow={args.n_slow} "
              f"x{args.slow_factor}: {float(uni)}")
        return 0
    if args.N is None:
        raise ConfigError("--N is required without --n-fast/--n-slow")
    micro = microtask_iteration_time(args.K, args.N, work)
    print(f"micro-task K={args.K} N={args.N}: {float(micro)}")
    if args.speeds:
        speeds = [float(s) for s in args.speeds.split(",")]
    else:
        speeds = [1.0] * args.N
    uni = unitask_balanced_time(speeds, work)
    print(f"uni-task N={len(speeds)}: {float(uni)}")
    return 0


def _cmd_rebalance_demo(args) -> int:
    raw = {"algorithm": "cocoa",
           "dataset": {"synthetic": {"n": args.n, "d": args.d,
                                     "margin": 1.0, "noise": 0.0,
                                     "seed": args.seed}},
           "chunk_capacity_bytes": max(512, (args.d * 12 + 16) * 4),
           "trainer": {"max_epochs": args.max_epochs,
                       "seed": args.seed,
                       "convergence_target": 0.0,
                       "hyperparams": {}},
           "scenario": args.preset}
    config = parse_run_config(raw)
    return _execute_run(config, args.out, False)


def cli_main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    handlers = {"train": _cmd_train, "simulate": _cmd_simulate,
                "project": _cmd_project,
                "rebalance-demo": _cmd_rebalance_demo}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ElasticTrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
