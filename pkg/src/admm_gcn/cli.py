"""Command line: ``admm-gcn {train,partition,bench,convert}``.

Exit codes: 0 success, 2 usage or input error, 3 numeric divergence,
4 serial/parallel iterate mismatch.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from . import engine
from .data import ACCEPTANCE_SBM, SMALL_SBM, DatasetError, SbmSpec, convert_amazon_npz, generate_sbm, load_dataset
from .metrics import write_metrics
from .partition import export_partition, partition_graph
from .runtime import AgentFailure
from .seeding import subseed
from .training import OPTIMIZERS, ConfigError, IterateMismatch, RunConfig, bench, train

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_MISMATCH = 0, 2, 3, 4
SBM_PRESETS = {"default": ACCEPTANCE_SBM, "small": SMALL_SBM}


def parse_sbm(text, seed):
    """``preset[:key=value,...]``, e.g. ``default:nodes_per_community=300``."""
    name, _, rest = text.partition(":")
    if name not in SBM_PRESETS:
        raise ConfigError(f"unknown SBM preset {name!r}; choose from {', '.join(SBM_PRESETS)}")
    types = {f.name: f.type for f in fields(SbmSpec)}
    kw = {"seed": seed}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq or key not in types:
            raise ConfigError(f"bad SBM override {item!r}; keys: {', '.join(types)}")
        kw[key] = int(value) if types[key] in (int, "int") else float(value)
    fixed = {f.name: getattr(SBM_PRESETS[name], f.name) for f in fields(SbmSpec)}
    return SbmSpec(**{**fixed, **kw})


def _dataset(args):
    if args.dataset:
        return load_dataset(args.dataset)
    return generate_sbm(parse_sbm(args.sbm, args.seed))


def _add_data_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dataset", help="dataset directory (edges.tsv, features.csv, ...)")
    g.add_argument("--sbm", default="default",
                   help="synthetic block model preset[:key=value,...] (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0)


def _add_train_args(p):
    _add_data_args(p)
    p.add_argument("--optimizer", default="admm", choices=OPTIMIZERS)
    p.add_argument("--mode", default="serial", choices=("serial", "parallel"))
    p.add_argument("--communities", type=int, default=None,
                   help="number of communities M (default 1 serial, 3 parallel)")
    p.add_argument("--layers", type=int, default=None, help="layer count L (default: hidden sizes + 1)")
    p.add_argument("--hidden", type=int, nargs="+", default=None, help="hidden sizes (default 16)")
    p.add_argument("--nu", type=float, default=1e-3)
    p.add_argument("--rho", type=float, default=1e-3)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--fista-iters", type=int, default=10)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--transport", default="inproc", choices=("inproc", "socket"))
    p.add_argument("--out", default=None, help="metrics CSV path")
    p.add_argument("--trace", default=None, help="write a message trace (parallel mode)")


def config_from_args(args) -> RunConfig:
    hidden = args.hidden
    layers = args.layers
    if hidden is None:
        hidden = [16] * ((layers or 2) - 1)
    if layers is None:
        layers = len(hidden) + 1
    if len(hidden) == 1 and layers > 2:
        hidden = hidden * (layers - 1)
    communities = args.communities
    if communities is None:
        communities = 3 if args.mode == "parallel" else 1
    return RunConfig(
        optimizer=args.optimizer, mode=args.mode, communities=communities, layers=layers,
        hidden=tuple(hidden), nu=args.nu, rho=args.rho, lr=args.lr, epochs=args.epochs,
        fista_iters=args.fista_iters, seed=args.seed, workers=args.workers,
        transport=args.transport, trace=args.trace,
    )


def cmd_train(args):
    cfg = config_from_args(args)
    ds = _dataset(args)
    res = train(ds, cfg)
    if args.out:
        write_metrics(res.metrics, args.out)
    last = res.metrics.last()
    if last is None:
        print("no epochs run")
        return EXIT_OK
    print(f"{last.method}: epochs={len(res.metrics)} train_acc={last.train_acc:.4f} "
          f"test_acc={last.test_acc:.4f} loss={last.loss:.6g}")
    if res.run is not None:
        r = res.run
        print(f"time: total={r.total:.3f}s training={r.training:.3f}s communication={r.communication:.3f}s "
              f"communities={res.info['partition_sizes']}")
        if r.message_counts:
            print("messages: " + " ".join(f"{k}={v}" for k, v in r.message_counts.items()))
    return EXIT_OK


def cmd_partition(args):
    ds = _dataset(args)
    part = partition_graph(ds.graph, args.communities, seed=subseed(args.seed, "partition"))
    export_partition(part, args.out)
    sizes = part.sizes
    ideal = ds.n / part.M
    print(f"communities={part.M} sizes={sizes.tolist()} cut_edges={part.cut_edges(ds.graph)} "
          f"balance={sizes.max() / ideal:.3f}")
    return EXIT_OK


def cmd_bench(args):
    cfg = config_from_args(args)
    if cfg.optimizer != "admm":
        raise ConfigError("bench runs ADMM only")
    ds = _dataset(args)
    try:
        rep = bench(ds, cfg)
    except IterateMismatch as exc:
        print(f"error: {exc}; timing not reported", file=sys.stderr)
        return EXIT_MISMATCH
    s, p = rep.serial, rep.parallel
    rows = [
        ("", "Total (s)", "Training (s)", "Communication (s)"),
        ("Serial", f"{s.total:.3f}", f"{s.training:.3f}", f"{s.communication:.3f}"),
        (f"Parallel (M={cfg.communities})", f"{p.total:.3f}", f"{p.training:.3f}", f"{p.communication:.3f}"),
    ]
    for row in rows:
        print(f"{row[0]:<18}{row[1]:>12}{row[2]:>15}{row[3]:>20}")
    phases = {}
    for t in p.timings:
        for name, v in t.comm_by_phase().items():
            phases[name] = phases.get(name, 0.0) + v
    print("parallel communication by phase: " + " ".join(f"{k}={v:.3f}s" for k, v in phases.items()))
    print(f"speedup={rep.speedup:.2f} training_reduction={100 * rep.training_reduction:.1f}%")
    print(f"iterates: max_relative_distance={rep.distance:.3e} "
          f"checksum serial={rep.serial_checksum} parallel={rep.parallel_checksum}")
    return EXIT_OK


def cmd_convert(args):
    ds = convert_amazon_npz(args.source, args.out, name=args.name, train=args.train,
                            test=args.test, seed=args.seed)
    print(" ".join(f"{k}={v}" for k, v in ds.manifest().items()))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="admm-gcn", description="Community-based ADMM training of GCNs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train with ADMM or a backprop baseline")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("partition", help="split a graph into communities")
    _add_data_args(p)
    p.add_argument("--communities", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("bench", help="serial vs parallel ADMM timing")
    _add_train_args(p)
    p.set_defaults(func=cmd_bench, mode="parallel")

    p = sub.add_parser("convert", help="convert an Amazon .npz archive to a dataset directory")
    p.add_argument("source")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None, help="computers or photo (default: from file name)")
    p.add_argument("--train", type=int, default=None)
    p.add_argument("--test", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (engine.DivergenceError, FloatingPointError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except AgentFailure as exc:
        if isinstance(exc.error, (engine.DivergenceError, FloatingPointError)):
            print(f"diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        raise


if __name__ == "__main__":
    sys.exit(main())
