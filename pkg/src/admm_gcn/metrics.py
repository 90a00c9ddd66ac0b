"""Per-epoch training metrics and their CSV form."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import astuple, dataclass, field, fields

HEADER = ("epoch", "method", "train_acc", "test_acc", "loss", "train_time_s", "comm_time_s")
TIMING = ("train_time_s", "comm_time_s")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    method: str
    train_acc: float
    test_acc: float
    loss: float
    train_time_s: float
    comm_time_s: float


@dataclass
class RunMetrics:
    rows: list = field(default_factory=list)

    def add(self, **kw):
        self.rows.append(EpochMetrics(**kw))

    def __len__(self):
        return len(self.rows)

    def last(self):
        return self.rows[-1] if self.rows else None

    def without_timing(self):
        return [tuple(v for f, v in zip(HEADER, astuple(r)) if f not in TIMING) for r in self.rows]


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_metrics(run: RunMetrics, path, append=True):
    """Append ``run`` to ``path`` (header written once); the file is
    replaced in a single rename so readers never see a partial row."""
    existing = ""
    if append and os.path.exists(path):
        with open(path, newline="") as fh:
            existing = fh.read()
    buf = io.StringIO()
    buf.write(existing)
    w = csv.writer(buf, lineterminator="\n")
    if not existing:
        w.writerow(HEADER)
    for r in run.rows:
        w.writerow([_fmt(v) for v in astuple(r)])
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_metrics(path) -> RunMetrics:
    types = {f.name: f.type for f in fields(EpochMetrics)}
    run = RunMetrics()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HEADER:
            raise ValueError(f"unexpected metrics header {reader.fieldnames}")
        for rec in reader:
            kw = {}
            for k, v in rec.items():
                t = types[k]
                kw[k] = int(v) if t in (int, "int") else v if t in (str, "str") else float(v)
            run.add(**kw)
    return run
