"""CSV emission and the run manifest.

Floats are written with ``repr`` so files round-trip exactly and repeated
runs are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy
import sklearn

from . import __version__
from .scenario import config_to_dict
from .sim import ReplicationSummary, SimConfig

METRIC_FILES = ("selection_freq.csv", "mixed_strategy.csv", "cum_reward.csv", "regret.csv", "summary.csv")


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def metric_tables(summary: ReplicationSummary) -> dict[str, tuple[tuple, list]]:
    """Rows for the five metric CSVs, merged in replication order."""
    sel, mix, cum, reg, summ = [], [], [], [], []
    for res in summary.results:
        r, m = res.replication, res.metrics
        labels = [a.label() for a in m.actions]
        for n, freqs in enumerate(m.selection_freq):
            sel.extend((r, n + 1, labels[i], f) for i, f in enumerate(freqs))
        for n, j, probs in m.mixed_strategy:
            mix.extend((r, n + 1, j, labels[i], p) for i, p in enumerate(probs))
        cum.extend((r, n + 1, j, v) for n, j, v in m.cum_reward)
        reg.extend((r, n + 1, j, best, earned, best - earned) for n, j, best, earned in m.regret)
        summ.extend((r, f"user{n + 1}", v) for n, v in enumerate(m.user_mean_reward))
        summ.append((r, "aggregate", m.aggregate_reward))
    summ.append(("mean", "aggregate", summary.mean))
    summ.append(("stderr", "aggregate", summary.stderr))
    return {
        "selection_freq.csv": (("replication", "user", "action", "frequency"), sel),
        "mixed_strategy.csv": (("replication", "user", "trial", "action", "probability"), mix),
        "cum_reward.csv": (("replication", "user", "trial", "avg_reward"), cum),
        "regret.csv": (("replication", "user", "trial", "best_hindsight", "earned", "regret"), reg),
        "summary.csv": (("replication", "user", "mean_reward"), summ),
    }


def write_events(path: Path, summary: ReplicationSummary) -> Path:
    rows = ((res.replication, ev.time, ev.entity, ev.kind, ev.payload)
            for res in summary.results for ev in res.events)
    return write_csv(path, ("replication", "time", "entity", "kind", "payload"), rows)


def write_trace(path: Path, summary: ReplicationSummary) -> Path:
    """Per-trial record: availability, choice, reward and counterfactual rewards."""
    rows = []
    for res in summary.results:
        labels = [a.label() for a in res.metrics.actions]
        for n, tr in enumerate(res.metrics.traces):
            for j in range(len(tr.chosen)):
                avail = "".join("1" if x else "0" for x in tr.avail[j])
                cf = ";".join(repr(float(v)) for v in tr.counterfactual[j])
                rows.append((res.replication, n + 1, j, tr.times[j], avail, labels[tr.chosen[j]], tr.reward[j], cf))
    return write_csv(path, ("replication", "user", "trial", "time", "avail", "action", "reward", "counterfactual"), rows)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def config_hash(cfg: SimConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def versions() -> dict:
    return {
        "harvest_assoc": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(out: Path, files: Sequence[Path], *, command: str, cfg: SimConfig | None = None,
                   seed: int | None = None, wall_time: float, started: str, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "files": {p.name: sha256_file(p) for p in files},
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "seed": seed,
        "versions": versions(),
        "started_at": started,
        "wall_time_s": round(wall_time, 3),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_bundle(out: Path, summary: ReplicationSummary, *, events: bool = False, trace: bool = False) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = [write_csv(out / name, header, rows) for name, (header, rows) in metric_tables(summary).items()]
    if events:
        files.append(write_events(out / "events.csv", summary))
    if trace:
        files.append(write_trace(out / "trace.csv", summary))
    return files
