"""Run configuration and the training drivers behind the command line."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine, runtime
from .baselines import KINDS, OptimizerConfig, gcn_backward, gcn_forward, init_weights, optimizer_step
from .data import Dataset
from .graph import normalize_adjacency
from .metrics import RunMetrics
from .nnmath import accuracy, masked_cross_entropy
from .partition import partition_graph
from .problem import build_problem
from .seeding import subseed, substream

OPTIMIZERS = ("admm",) + KINDS
MODES = ("serial", "parallel")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    optimizer: str = "admm"
    mode: str = "serial"
    communities: int = 1
    layers: int = 2
    hidden: tuple = (16,)
    nu: float = 1e-3
    rho: float = 1e-3
    lr: float | None = None
    epochs: int = 50
    fista_iters: int = 10
    seed: int = 0
    workers: int | None = None
    transport: str = "inproc"
    trace: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; choose from {', '.join(OPTIMIZERS)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.mode == "parallel" and self.optimizer != "admm":
            raise ConfigError("parallel mode requires --optimizer admm")
        if self.communities < 1:
            raise ConfigError("--communities must be >= 1")
        if self.mode == "serial" and self.communities != 1:
            raise ConfigError("serial mode trains a single community; use --mode parallel for M > 1")
        if self.layers < 1 or len(self.hidden) != self.layers - 1:
            raise ConfigError(f"--layers {self.layers} needs {self.layers - 1} hidden sizes, got {len(self.hidden)}")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden sizes must be positive")
        if self.epochs < 0:
            raise ConfigError("--epochs must be >= 0")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if self.transport not in runtime.TRANSPORTS:
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.optimizer == "admm":
            try:
                self.hyperparams()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        elif self.lr is not None and not self.lr > 0:
            raise ConfigError("--lr must be positive")

    def hyperparams(self):
        return engine.Hyperparams(nu=self.nu, rho=self.rho, hidden=self.hidden,
                                  epochs=self.epochs, fista_iters=self.fista_iters)


@dataclass
class TrainResult:
    metrics: RunMetrics
    weights: list
    state: engine.ModelState | None = None
    problem: object = None
    run: runtime.RunResult | None = None
    info: dict = field(default_factory=dict)


def _evaluate(W, ds: Dataset, A):
    Z = gcn_forward(W, ds.features, A)[-1]
    loss = masked_cross_entropy(Z, ds.labels, ds.train_mask) if ds.train_mask.size else float("nan")
    return (accuracy(Z, ds.labels, ds.train_mask), accuracy(Z, ds.labels, ds.test_mask), loss)


def make_problem(ds: Dataset, cfg: RunConfig, A=None):
    A = normalize_adjacency(ds.graph) if A is None else A
    part = partition_graph(ds.graph, cfg.communities, seed=subseed(cfg.seed, "partition"))
    return build_problem(A, ds.features, ds.labels, ds.train_mask, part,
                         hidden=cfg.hidden, test_mask=ds.test_mask)


def train_admm(ds: Dataset, cfg: RunConfig, ledger=None) -> TrainResult:
    """ADMM under the configured schedule; metrics use a forward pass with
    each epoch's weights, outside the timed region."""
    hp = cfg.hyperparams()
    A = normalize_adjacency(ds.graph)
    problem = make_problem(ds, cfg, A)
    state = engine.init_state(problem, hp, cfg.seed)
    if cfg.mode == "serial":
        run = runtime.run_serial(problem, hp, state, cfg.epochs, ledger=ledger)
    else:
        runner = runtime.ParallelRunner(problem, hp, transport=cfg.transport, workers=cfg.workers,
                                        trace=cfg.trace, ledger=ledger)
        run = runner.run(state, cfg.epochs)
    metrics = RunMetrics()
    for epoch, (W, t) in enumerate(zip(run.weights, run.timings), start=1):
        for w in W:
            if not np.all(np.isfinite(w)):
                raise engine.DivergenceError(f"non-finite weights at epoch {epoch}")
        tr, te, loss = _evaluate(W, ds, A)
        metrics.add(epoch=epoch, method=f"admm-{cfg.mode}", train_acc=tr, test_acc=te, loss=loss,
                    train_time_s=t.training, comm_time_s=t.communication)
    weights = run.state.W
    return TrainResult(metrics, weights, run.state, problem, run,
                       {"partition_sizes": problem.partition.sizes.tolist()})


def train_baseline(ds: Dataset, cfg: RunConfig) -> TrainResult:
    """Full-batch backprop with the configured optimizer."""
    A = normalize_adjacency(ds.graph)
    opt = OptimizerConfig(cfg.optimizer, cfg.lr)
    dims = (ds.features.shape[1], *cfg.hidden, ds.labels.shape[1])
    W = init_weights(dims, substream(cfg.seed, "init"))
    slots = None
    metrics = RunMetrics()
    for epoch in range(1, cfg.epochs + 1):
        # overflow shows up as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            t0 = time.perf_counter()
            Zs = gcn_forward(W, ds.features, A)
            grads = gcn_backward(W, Zs, ds.labels, ds.train_mask, A)
            W, slots = optimizer_step(opt, W, grads, slots)
            dt = time.perf_counter() - t0
            tr, te, loss = _evaluate(W, ds, A)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss became non-finite at epoch {epoch}")
        metrics.add(epoch=epoch, method=cfg.optimizer, train_acc=tr, test_acc=te, loss=loss,
                    train_time_s=dt, comm_time_s=0.0)
    return TrainResult(metrics, W)


def train(ds: Dataset, cfg: RunConfig, ledger=None) -> TrainResult:
    if cfg.optimizer == "admm":
        return train_admm(ds, cfg, ledger)
    return train_baseline(ds, cfg)


def checksum(stacked: dict) -> str:
    """Order-stable summary of stacked iterates, for printing."""
    total = sum(float(np.sum(stacked[k])) for k in sorted(stacked))
    return f"{total:.12e}"


@dataclass
class BenchReport:
    serial: runtime.RunResult
    parallel: runtime.RunResult
    distance: float
    serial_checksum: str
    parallel_checksum: str

    @property
    def speedup(self):
        return self.serial.total / self.parallel.total if self.parallel.total > 0 else float("inf")

    @property
    def training_reduction(self):
        return 1.0 - self.parallel.training / self.serial.total if self.serial.total > 0 else 0.0


def bench(ds: Dataset, cfg: RunConfig, tol=1e-12) -> BenchReport:
    """Serial (one community) then parallel (``cfg.communities``) on the
    same seed; raises ``IterateMismatch`` if the iterates disagree."""
    serial_cfg = replace(cfg, mode="serial", communities=1, trace=None)
    par_cfg = replace(cfg, mode="parallel")
    s = train_admm(ds, serial_cfg)
    p = train_admm(ds, par_cfg)
    a, b = s.state.stacked(s.problem), p.state.stacked(p.problem)
    dist = engine.iterate_distance(b, a)
    report = BenchReport(s.run, p.run, dist, checksum(a), checksum(b))
    if not dist <= tol:
        raise IterateMismatch(report)
    return report


class IterateMismatch(RuntimeError):
    def __init__(self, report):
        super().__init__(f"serial and parallel iterates differ (relative distance {report.distance:.3e})")
        self.report = report
