"""Scenario files: YAML documents that parse to a :class:`SimConfig`.

Layout::

    network:    {noise_power, interference: [per SBS]}
    sbs:        list of {id, lambda, mu, alpha, q_max, k}
    links:      {F: rows per tracked user, G: same shape, r_min: [per user]}
    experiment: {policy, gamma, trials, multi, arms, seed, replications,
                 service_time, notify, snapshot_every, regret_points}

SBS and arm ids are 1-based in files and 0-based in memory.  Every problem
is reported as ``path:line:column: field: message``.
"""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .energy import SbsConfig
from .sim import NOTIFY_MODES, ConfigError, PolicyKind, SimConfig

SHIPPED = ("table1", "large8")

_TOP = {"network", "sbs", "links", "experiment"}
_NETWORK = {"noise_power", "interference"}
_SBS = {"id", "lambda", "mu", "alpha", "q_max", "k"}
_LINKS = {"F", "G", "r_min"}
_EXPERIMENT = {
    "policy", "gamma", "trials", "multi", "arms", "seed", "replications",
    "service_time", "notify", "snapshot_every", "regret_points",
}
_EXPERIMENT_DEFAULTS = {
    "policy": "bandit", "gamma": 0.05, "trials": 1000, "multi": 1, "arms": None, "seed": 0,
    "replications": 1, "service_time": 1.0, "notify": "cycle_end", "snapshot_every": 100,
    "regret_points": 50,
}


class ScenarioError(ConfigError):
    def __init__(self, source: str, line: int | None, column: int | None, field: str, message: str):
        self.source, self.line, self.column, self.field = source, line, column, field
        where = source if line is None else f"{source}:{line}:{column}"
        super().__init__(f"{where}: {field}: {message}" if field else f"{where}: {message}")


class _Doc:
    """Parsed data plus the node tree, so errors can point at lines."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.root = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            line = mark.line + 1 if mark else None
            col = mark.column + 1 if mark else None
            raise ScenarioError(source, line, col, "", f"YAML syntax: {exc.problem}") from None
        if not isinstance(self.data, dict):
            raise ScenarioError(source, 1, 1, "", "top level must be a mapping")

    def node(self, path):
        cur = self.root
        for key in path:
            if isinstance(cur, yaml.MappingNode):
                nxt = None
                for k, v in cur.value:
                    if k.value == key:
                        nxt = v
                        break
                if nxt is None:
                    return cur
                cur = nxt
            elif isinstance(cur, yaml.SequenceNode) and isinstance(key, int) and key < len(cur.value):
                cur = cur.value[key]
            else:
                return cur
        return cur

    def fail(self, path, message):
        node = self.node(path)
        mark = node.start_mark if node is not None else None
        field = ".".join(str(p) for p in path)
        raise ScenarioError(
            self.source, mark.line + 1 if mark else None, mark.column + 1 if mark else None, field, message
        )

    def mapping(self, path, allowed, required=()):
        cur: Any = self.data
        for p in path:
            cur = cur[p]
        if not isinstance(cur, dict):
            self.fail(path, "expected a mapping")
        for key in cur:
            if key not in allowed:
                self.fail(list(path) + [key], f"unknown key (allowed: {', '.join(sorted(allowed))})")
        for key in required:
            if key not in cur:
                self.fail(path, f"missing required key {key!r}")
        return cur

    def number(self, path, value, *, integer=False, positive=False, nonnegative=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if integer and (not float(value).is_integer()):
            self.fail(path, f"expected an integer, got {value!r}")
        if not math.isfinite(value):
            self.fail(path, "must be finite")
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value!r}")
        if nonnegative and value < 0:
            self.fail(path, f"must be nonnegative, got {value!r}")
        return int(value) if integer else float(value)

    def vector(self, path, value, length=None, **kw):
        if not isinstance(value, list):
            self.fail(path, "expected a list")
        if length is not None and len(value) != length:
            self.fail(path, f"expected {length} entries, got {len(value)}")
        return [self.number(list(path) + [i], v, **kw) for i, v in enumerate(value)]


def parse_scenario(text: str, source: str = "<string>") -> SimConfig:
    doc = _Doc(text, source)
    top = doc.mapping([], _TOP, required=("sbs", "links"))

    rows = top["sbs"]
    if not isinstance(rows, list) or not rows:
        doc.fail(["sbs"], "expected a nonempty list of SBS rows")
    sbs = []
    for i, row in enumerate(rows):
        path = ["sbs", i]
        doc.mapping(path, _SBS, required=tuple(sorted(_SBS - {"id"})))
        sid = doc.number(path + ["id"], row.get("id", i + 1), integer=True, positive=True)
        if sid != i + 1:
            doc.fail(path + ["id"], f"ids must run 1..M in order; expected {i + 1}")
        mu = row["mu"]
        mu_seq = doc.vector(path + ["mu"], mu, positive=True) if isinstance(mu, list) else [
            doc.number(path + ["mu"], mu, positive=True)
        ]
        k = doc.number(path + ["k"], row["k"], integer=True, positive=True)
        if len(mu_seq) not in (1, k):
            doc.fail(path + ["mu"], f"give one rate or k={k} rates")
        sbs.append(SbsConfig(
            sid,
            doc.number(path + ["lambda"], row["lambda"], positive=True),
            tuple(mu_seq),
            k,
            doc.number(path + ["alpha"], row["alpha"], nonnegative=True),
            doc.number(path + ["q_max"], row["q_max"], positive=True),
        ))
    M = len(sbs)

    net = doc.mapping(["network"], _NETWORK) if "network" in top else {}
    noise = doc.number(["network", "noise_power"], net.get("noise_power", 1.0), positive=True)
    interference = doc.vector(["network", "interference"], net.get("interference", [0.0] * M), M,
                              nonnegative=True)

    links = doc.mapping(["links"], _LINKS, required=("F", "G"))
    mats = {}
    for name in ("F", "G"):
        rows_ = links[name]
        if not isinstance(rows_, list) or not rows_:
            doc.fail(["links", name], "expected a nonempty list of rows")
        mats[name] = [doc.vector(["links", name, n], r, M, nonnegative=True) for n, r in enumerate(rows_)]
    W = len(mats["F"])
    if len(mats["G"]) != W:
        doc.fail(["links", "G"], f"expected {W} rows to match F, got {len(mats['G'])}")
    r_min = links.get("r_min", [0.5] * W)
    if not isinstance(r_min, list):
        r_min = [r_min] * W
    r_min = doc.vector(["links", "r_min"], r_min, W, nonnegative=True)

    exp = dict(_EXPERIMENT_DEFAULTS)
    if "experiment" in top:
        exp.update(doc.mapping(["experiment"], _EXPERIMENT))
    ep = lambda key: ["experiment", key]  # noqa: E731
    if exp["policy"] not in [p.value for p in PolicyKind]:
        doc.fail(ep("policy"), f"unknown policy {exp['policy']!r}")
    if exp["notify"] not in NOTIFY_MODES:
        doc.fail(ep("notify"), f"must be one of {', '.join(NOTIFY_MODES)}")
    arms = exp["arms"]
    if arms is not None:
        arms = doc.vector(ep("arms"), arms, integer=True, positive=True)
        bad = [a for a in arms if a > M]
        if bad:
            doc.fail(ep("arms"), f"SBS ids {bad} exceed M={M}")
        arms = tuple(a - 1 for a in arms)
    try:
        return SimConfig(
            sbs=tuple(sbs),
            F=np.array(mats["F"]),
            G=np.array(mats["G"]),
            noise_power=noise,
            interference=tuple(interference),
            r_min=tuple(r_min),
            policy=exp["policy"],
            gamma=doc.number(ep("gamma"), exp["gamma"], positive=True),
            trials=doc.number(ep("trials"), exp["trials"], integer=True, positive=True),
            multi=doc.number(ep("multi"), exp["multi"], integer=True, positive=True),
            arms=arms,
            seed=doc.number(ep("seed"), exp["seed"], integer=True, nonnegative=True),
            replications=doc.number(ep("replications"), exp["replications"], integer=True, positive=True),
            service_time=doc.number(ep("service_time"), exp["service_time"], positive=True),
            notify=exp["notify"],
            snapshot_every=doc.number(ep("snapshot_every"), exp["snapshot_every"], integer=True, positive=True),
            regret_points=doc.number(ep("regret_points"), exp["regret_points"], integer=True, positive=True),
        )
    except ScenarioError:
        raise
    except (ConfigError, ValueError) as exc:
        raise ScenarioError(source, None, None, "", str(exc)) from None


def load_scenario(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(str(path), None, None, "", f"cannot read scenario file ({exc.strerror})") from None
    return parse_scenario(text, str(path))


def shipped_path(name: str) -> Path:
    """Path of a bundled scenario (``table1`` or ``large8``)."""
    stem = name[:-9] if name.endswith(".scenario") else name
    if stem not in SHIPPED:
        raise KeyError(f"no shipped scenario {name!r}; have {SHIPPED}")
    return Path(str(resources.files("harvest_assoc") / "scenarios" / f"{stem}.scenario"))


def resolve_scenario(name_or_path) -> Path:
    """A file path as given, or a shipped scenario name if no such file exists."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.name[:-9] if p.name.endswith(".scenario") else p.name
    if stem in SHIPPED and p.parent == Path("."):
        return shipped_path(stem)
    return p


def config_to_dict(cfg: SimConfig) -> dict:
    """Plain nested data in file layout; floats keep full precision."""
    return {
        "network": {"noise_power": float(cfg.noise_power), "interference": [float(x) for x in cfg.interference]},
        "sbs": [
            {
                "id": int(c.id),
                "lambda": float(c.lam),
                "mu": float(c.mu_seq[0]) if len(c.mu_seq) == 1 else [float(x) for x in c.mu_seq],
                "alpha": float(c.alpha),
                "q_max": float(c.q_max),
                "k": int(c.k),
            }
            for c in cfg.sbs
        ],
        "links": {
            "F": [[float(x) for x in row] for row in cfg.F],
            "G": [[float(x) for x in row] for row in cfg.G],
            "r_min": [float(x) for x in cfg.r_min],
        },
        "experiment": {
            "policy": cfg.policy.value,
            "gamma": float(cfg.gamma),
            "trials": int(cfg.trials),
            "multi": int(cfg.multi),
            "arms": [a + 1 for a in cfg.arms],
            "seed": int(cfg.seed),
            "replications": int(cfg.replications),
            "service_time": float(cfg.service_time),
            "notify": cfg.notify,
            "snapshot_every": int(cfg.snapshot_every),
            "regret_points": int(cfg.regret_points),
        },
    }


class _FlowRows(yaml.SafeDumper):
    pass


def _represent_list(dumper, data):
    flow = all(not isinstance(x, (list, dict)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_FlowRows.add_representer(list, _represent_list)


def dump_scenario(cfg: SimConfig, header: str = "") -> str:
    body = yaml.dump(config_to_dict(cfg), Dumper=_FlowRows, sort_keys=False, width=120)
    lines = "".join(f"# {line}\n" if line else "#\n" for line in header.splitlines())
    return lines + body


def synthetic_scenario(seed: int = 8, n_sbs: int = 8, n_users: int = 10, trials: int = 10_000) -> SimConfig:
    """Random network with parameters drawn inside the five-cell table's ranges.

    Cells and users are dropped uniformly on a unit square; path-loss gain
    is ``1 / (1 + (d / 0.15)**3)`` so the nearest cell has the largest G,
    and average fading gains are uniform on [0.05, 1].
    """
    rng = np.random.default_rng(seed)
    cells = rng.uniform(0, 1, size=(n_sbs, 2))
    users = rng.uniform(0, 1, size=(n_users, 2))
    d = np.linalg.norm(users[:, None, :] - cells[None, :, :], axis=2)
    G = np.round(1.0 / (1.0 + (d / 0.15) ** 3), 4)
    G = np.maximum(G, 1e-4)
    F = np.round(rng.uniform(0.05, 1.0, size=(n_users, n_sbs)), 2)
    sbs = tuple(
        SbsConfig(
            m + 1,
            float(rng.integers(70, 131)),
            (float(np.round(rng.uniform(0.03, 0.12), 3)),),
            int(rng.integers(40, 101)),
            float(rng.integers(10, 16)),
            float(rng.integers(6, 10)),
        )
        for m in range(n_sbs)
    )
    interference = tuple(float(x) for x in rng.integers(1, 5, size=n_sbs))
    return SimConfig(
        sbs=sbs, F=F, G=G, noise_power=1.0, interference=interference, r_min=(0.5,) * n_users,
        policy="bandit", gamma=0.05, trials=trials, seed=seed, replications=5,
    )
