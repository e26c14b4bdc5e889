"""Discrete-event simulation of tracked users associating with harvest-use cells.

Every cell runs its own harvest/serve cycle.  Background users arrive as a
Poisson stream and join a cell's queue only while it is inactive; each of
them is budgeted the worst-case ``q_max``.  Tracked users run one trial at
a time: look at which cells are inactive, pick an action with their policy,
queue up, and learn the 0/1 outcome when the cell serves them.

For regret reporting the simulator also places a *ghost* request at every
other awake cell: it sits at the position the user would have taken, is
judged against the cell's residual when its turn comes, and consumes
neither energy nor time.  Gains for all arms come from per-(user, cell)
streams, so the user's choice never shifts the counterfactual draws.
"""
from __future__ import annotations

import enum
import functools
import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import channel, energy
from .bandit import Exp4SB, SuperAction, hindsight_curve, mix_probabilities, super_actions, super_mask
from .channel import LinkModel
from .energy import BackgroundBatch, Event, Mode, Outcome, Request, SbsConfig, SbsState
from .prob import success_prob_numeric
from .validation import mask_to_str


class ConfigError(ValueError):
    """The scenario cannot be simulated as written."""


# "cycle_end": outcomes of a cycle reach users with the Inactive broadcast
# (transmissions of one active step go out together); "service": each user
# hears back the moment its own allocation is made.
NOTIFY_MODES = ("cycle_end", "service")


class PolicyKind(str, enum.Enum):
    BANDIT = "bandit"
    OPTIMAL = "optimal"
    MAX_POWER = "max_power"
    NEAREST = "nearest"
    RANDOM = "random"


@dataclass
class SimConfig:
    sbs: tuple
    F: np.ndarray
    G: np.ndarray
    noise_power: float = 1.0
    interference: tuple = ()
    r_min: tuple = ()
    policy: PolicyKind = PolicyKind.BANDIT
    gamma: float = 0.05
    trials: int = 1000
    multi: int = 1
    arms: Optional[tuple] = None
    seed: int = 0
    replications: int = 1
    service_time: float = 1.0
    notify: str = "cycle_end"
    snapshot_every: int = 100
    regret_points: int = 50

    def __post_init__(self):
        self.sbs = tuple(self.sbs)
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        M = len(self.sbs)
        if M == 0:
            raise ConfigError("at least one SBS is required")
        if self.F.shape != self.G.shape or self.F.shape[1] != M:
            raise ConfigError(f"F and G must both be (users x {M}); got {self.F.shape} and {self.G.shape}")
        W = self.F.shape[0]
        self.interference = tuple(float(x) for x in (self.interference or (0.0,) * M))
        if len(self.interference) != M:
            raise ConfigError(f"interference needs {M} entries, got {len(self.interference)}")
        r = tuple(float(x) for x in np.broadcast_to(np.asarray(self.r_min or 0.5, dtype=float), (W,)))
        self.r_min = r
        try:
            self.policy = PolicyKind(self.policy)
        except ValueError:
            raise ConfigError(f"unknown policy {self.policy!r}; pick one of {[p.value for p in PolicyKind]}") from None
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if int(self.trials) < 1:
            raise ConfigError("trials must be at least 1")
        self.trials = int(self.trials)
        self.arms = tuple(range(M)) if self.arms is None else tuple(int(a) for a in self.arms)
        if not self.arms or any(not 0 <= a < M for a in self.arms) or len(set(self.arms)) != len(self.arms):
            raise ConfigError(f"arms must be distinct SBS indices in [0, {M})")
        if not 1 <= self.multi <= len(self.arms):
            raise ConfigError(f"multi must lie in [1, {len(self.arms)}]")
        if len(self.actions) > 8:
            raise ConfigError(f"{len(self.actions)} actions exceed the 8-arm expert cap")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.service_time > 0:
            raise ConfigError("service_time must be positive")
        if self.notify not in NOTIFY_MODES:
            raise ConfigError(f"notify must be one of {NOTIFY_MODES}")
        for n in range(W):
            for m in self.arms:
                if not self.F[n, m] * self.G[n, m] > 0:
                    raise ConfigError(f"user {n + 1} has zero average gain to SBS {m + 1}")

    @property
    def n_users(self) -> int:
        return self.F.shape[0]

    @property
    def n_sbs(self) -> int:
        return len(self.sbs)

    @functools.cached_property
    def actions(self) -> list[SuperAction]:
        return super_actions(self.arms, self.multi)

    @functools.cached_property
    def members(self) -> list[np.ndarray]:
        return [np.array(s.members, dtype=np.intp) for s in self.actions]

    def link(self, user: int, sbs: int) -> LinkModel:
        return LinkModel(
            float(self.F[user, sbs]),
            float(self.G[user, sbs]),
            self.noise_power,
            self.interference[sbs],
            self.r_min[user],
        )


@dataclass
class TrialRecord:
    trial: int
    time: float
    avail: np.ndarray
    chosen: int
    base_cf: np.ndarray
    probs: Optional[np.ndarray] = None
    reward: float = math.nan
    outcome: str = ""


@dataclass
class UserTrace:
    """Per-user arrays over the trials actually run."""

    times: np.ndarray
    avail: np.ndarray
    chosen: np.ndarray
    reward: np.ndarray
    counterfactual: np.ndarray
    probs: Optional[np.ndarray]
    snapshots: list


@dataclass
class Metrics:
    actions: list
    selection_freq: np.ndarray
    mixed_strategy: list
    cum_reward: list
    regret: list
    user_mean_reward: np.ndarray
    aggregate_reward: float
    traces: list = field(default_factory=list, repr=False)


@dataclass
class RunResult:
    metrics: Metrics
    events: list
    config: SimConfig
    replication: int = 0


# --------------------------------------------------------------------------
# policies
# --------------------------------------------------------------------------

@dataclass
class DecisionContext:
    now: float
    user: int
    states: Sequence[SbsState]
    thetas: np.ndarray
    cfg: SimConfig


def policy_decide(kind: PolicyKind, ctx: DecisionContext, mask: np.ndarray,
                  stream: np.random.Generator, learner: Optional[Exp4SB] = None):
    """Pick an action index among awake actions; returns ``(action, probs)``.

    Deterministic baselines break ties toward the lowest index.
    """
    if not np.any(mask):
        raise ValueError("no action is available")
    kind = PolicyKind(kind)
    actions = ctx.cfg.actions
    if kind is PolicyKind.BANDIT:
        return learner.choose(mask)
    if kind is PolicyKind.RANDOM:
        idx = np.flatnonzero(mask)
        return int(idx[stream.integers(len(idx))]), None
    n, cfg = ctx.user, ctx.cfg
    if kind is PolicyKind.MAX_POWER:
        per_sbs = cfg.F[n] * cfg.G[n]
    elif kind is PolicyKind.NEAREST:
        per_sbs = cfg.G[n]
    else:
        return _optimal_action(ctx, mask), None
    score = np.array([per_sbs[idx].sum() for idx in cfg.members])
    score[~mask] = -np.inf
    return int(np.argmax(score)), None


def _optimal_action(ctx: DecisionContext, mask: np.ndarray) -> int:
    """Argmax of the success probability over awake actions.

    ``exp(-theta / q_max)`` bounds each cell's success probability from
    above, so actions are scored in decreasing order of that bound and the
    search stops once no remaining action can win.
    """
    n, cfg, actions = ctx.user, ctx.cfg, ctx.cfg.actions
    cache = {}

    def cell(m):
        if m not in cache:
            c, st = cfg.sbs[m], ctx.states[m]
            elapsed = max(ctx.now - st.mode_entry_time, 0.0)
            cache[m] = success_prob_numeric(c.mu, c.alpha, ctx.thetas[n, m], elapsed, c.k, c.q_max, method="legendre")
        return cache[m]

    caps = np.exp(-ctx.thetas[n] / np.array([c.q_max for c in cfg.sbs]))
    bound = [(sum(caps[m] for m in s.members), i) for i, (s, ok) in enumerate(zip(actions, mask)) if ok]
    bound.sort(key=lambda x: (-x[0], x[1]))
    best, best_i = -np.inf, -1
    for ub, i in bound:
        if ub < best or (ub == best and i > best_i):
            break
        value = sum(cell(m) for m in actions[i].members)
        if value > best or (value == best and i < best_i):
            best, best_i = value, i
    return best_i


class _User:
    def __init__(self, idx, cfg: SimConfig, gain_streams, policy_stream):
        self.idx = idx
        self.gain_streams = gain_streams
        self.stream = policy_stream
        self.links = {m: cfg.link(idx, m) for m in cfg.arms}
        self.betas = {m: channel.beta(l) for m, l in self.links.items()}
        self.learner = None
        if cfg.policy is PolicyKind.BANDIT:
            self.learner = Exp4SB(
                n_arms=len(cfg.actions), gamma=cfg.gamma, reward_scale=cfg.multi, random_state=policy_stream
            )
        self.records: list[TrialRecord] = []
        self.snapshots: list = []
        self.pending: set = set()
        self.current: Optional[TrialRecord] = None
        self.partial = 0.0
        self.outcomes: list = []
        self.waiting = False
        self.done = False


class Simulator:
    """One replication's event loop.

    Event kinds: ``activate`` (harvest complete), ``serve`` (the head of a
    cell's queue starts service), ``close`` (active step over) and
    ``decide`` (a tracked user starts a trial).  Ties in time go by push
    order.
    """

    def __init__(self, cfg: SimConfig, replication: int = 0, record_events: bool = True):
        self.cfg = cfg
        self.replication = replication
        self.record_events = record_events
        self.events: list[Event] = []
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        root = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(replication,))
        harvest_ss, bg_ss, gain_ss, pol_ss = root.spawn(4)
        M, W = cfg.n_sbs, cfg.n_users
        self.harvest_rng = [np.random.default_rng(s) for s in harvest_ss.spawn(M)]
        self.bg_rng = [np.random.default_rng(s) for s in bg_ss.spawn(M)]
        user_gain_ss = gain_ss.spawn(W)
        pol = pol_ss.spawn(W)
        self.actions = cfg.actions
        self.users = []
        for n in range(W):
            per_cell = user_gain_ss[n].spawn(M)
            streams = {m: np.random.default_rng(per_cell[m]) for m in cfg.arms}
            self.users.append(_User(n, cfg, streams, np.random.default_rng(pol[n])))
        self.thetas = np.full((W, M), np.inf)
        for n in range(W):
            for m in cfg.arms:
                self.thetas[n, m] = channel.theta(cfg.link(n, m))
        self.states = [SbsState(c) for c in cfg.sbs]
        # background arrivals are drawn lazily: Poisson counts over
        # [bg_clock, t) whenever someone needs the queue up to time t
        self.bg_clock = [0.0] * M
        self.cycle_end = [0.0] * M
        self.ghosts: list[list] = [[] for _ in range(M)]
        self.open_ghosts = 0
        self.served = [0] * M
        self.outbox: list[list] = [[] for _ in range(M)]
        self.waiting: list[int] = []
        self.active_users = W

    # -- event plumbing ---------------------------------------------------
    def _push(self, time, kind, data):
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, data))

    def _log(self, entity, kind, payload=""):
        if self.record_events:
            self.events.append(Event(self.now, entity, kind, payload))

    def _log_event(self, ev: Event):
        if self.record_events:
            self.events.append(ev)

    # -- cell lifecycle ---------------------------------------------------
    def _start_inactive(self, m):
        st = self.states[m]
        duration = energy.harvest_cycle(st, self.harvest_rng[m])
        self.bg_clock[m] = self.now
        self.cycle_end[m] = self.now + duration
        self.served[m] = 0
        self._push(self.cycle_end[m], "activate", m)

    def _flush_background(self, m, upto):
        st = self.states[m]
        upto = min(upto, self.cycle_end[m])
        span = upto - self.bg_clock[m]
        if span > 0 and st.config.alpha > 0:
            count = int(self.bg_rng[m].poisson(st.config.alpha * span))
            energy.enqueue_background(st, count, st.config.q_max)
        self.bg_clock[m] = max(self.bg_clock[m], upto)

    def _activate(self, m):
        st = self.states[m]
        self._flush_background(m, self.cycle_end[m])
        self._log_event(energy.advance_to_active(st, self.now))
        self._step(m)

    def _judge_ghosts(self, m, denied):
        """Settle ghosts standing at the current head position (or behind a denial)."""
        st, pos = self.states[m], self.served[m]
        keep = []
        for ghost in self.ghosts[m]:
            gpos, rec, user, gain = ghost
            if gpos == pos and not denied:
                q = channel.required_energy(gain, self.users[user].links[m])
                rec.base_cf[m] = float(q <= st.config.q_max and st.residual >= q)
            elif denied and gpos > pos:
                rec.base_cf[m] = 0.0
            else:
                keep.append(ghost)
                continue
            self.open_ghosts -= 1
        self.ghosts[m] = keep

    def _step(self, m):
        """Start service of the queue head, or close the active step."""
        st = self.states[m]
        if self.ghosts[m]:
            self._judge_ghosts(m, denied=False)
        if not st.queue:
            self._close(m)
            return
        s = self.cfg.service_time
        head = st.queue[0]
        if isinstance(head, BackgroundBatch):
            limit = head.count
            if self.ghosts[m]:
                limit = min(limit, min(g[0] for g in self.ghosts[m]) - self.served[m])
            n = energy.serve_background(st, limit)
            if n:
                self.served[m] += n
                self._push(self.now + n * s, "serve", m)
                return
            self._log(st.name, "exhausted", f"residual={st.residual:.17g};demand={head.demand:.17g}")
        else:
            res = energy.serve_next(st)
            self._deliver(m, res)
            if res.outcome is not Outcome.DENIED:
                self.served[m] += 1
                self._push(self.now + s, "serve", m)
                return
        # the head could not be covered: it and everyone behind are denied
        for late in energy.deny_remaining(st):
            self._deliver(m, late)
        if self.ghosts[m]:
            self._judge_ghosts(m, denied=True)
        self._push(self.now + s, "close", m)

    def _close(self, m):
        st = self.states[m]
        self._log_event(energy.advance_to_inactive(st, self.now))
        self._start_inactive(m)
        outbox, self.outbox[m] = self.outbox[m], []
        for n, rec, ok, kind in outbox:
            self._resolve(m, n, rec, ok, kind)
        if self.waiting:
            for n in self.waiting:
                self._push(self.now, "decide", n)
            self.waiting = []

    # -- tracked users ----------------------------------------------------
    def _deliver(self, m, res):
        req = res.request
        if req.tag is None:
            return
        n, rec = req.tag
        ok = 1.0 if res.outcome is Outcome.SERVED else 0.0
        rec.base_cf[m] = ok
        st = self.states[m]
        self._log(
            f"user{n + 1}", "alloc",
            f"trial={rec.trial};sbs={m + 1};outcome={res.outcome.value};q={res.required:.17g};"
            f"q_max={st.config.q_max:.17g};residual_before={st.residual + res.energy_spent:.17g};"
            f"spent={res.energy_spent:.17g};reward={ok:g}",
        )
        if self.cfg.notify == "service":
            self._resolve(m, n, rec, ok, res.outcome.value)
        else:
            self.outbox[m].append((n, rec, ok, res.outcome.value))

    def _resolve(self, m, n, rec, ok, kind):
        user = self.users[n]
        user.partial += ok
        user.outcomes.append(kind)
        user.pending.discard(m)
        if not user.pending:
            self._finish_trial(user)

    def _finish_trial(self, user: _User):
        rec = user.current
        rec.reward = user.partial
        rec.outcome = "+".join(user.outcomes)
        if user.learner is not None:
            user.learner.observe(rec.chosen, rec.reward, rec.probs, rec.avail)
        user.current = None
        if len(user.records) >= self.cfg.trials:
            user.done = True
            self.active_users -= 1
        else:
            self._push(self.now, "decide", user.idx)

    def _decide(self, n):
        user, cfg = self.users[n], self.cfg
        base = np.array([st.mode is Mode.INACTIVE for st in self.states])
        mask = super_mask(self.actions, base)
        if not mask.any():
            self.waiting.append(n)
            return
        gains = {m: channel.sample_gain_sq(user.betas[m], user.gain_streams[m]).gain_sq for m in cfg.arms}
        ctx = DecisionContext(self.now, n, self.states, self.thetas, cfg)
        choice, probs = policy_decide(cfg.policy, ctx, mask, user.stream, user.learner)
        members = self.actions[choice].members
        rec = TrialRecord(len(user.records), self.now, mask, choice, np.full(cfg.n_sbs, np.nan), probs)
        user.records.append(rec)
        user.current, user.partial, user.outcomes = rec, 0.0, []
        user.pending = set(members)
        if user.learner is not None and rec.trial % cfg.snapshot_every == 0:
            full = np.ones(len(self.actions), dtype=bool)
            user.snapshots.append((rec.trial, mix_probabilities(user.learner.bank_, full)))
        self._log(f"user{n + 1}", "trial", f"trial={rec.trial};avail={mask_to_str(mask)};"
                  f"action={self.actions[choice].label()}")
        for m in cfg.arms:
            if not base[m]:
                continue
            st = self.states[m]
            self._flush_background(m, self.now)
            if m in members:
                req = Request((n, rec.trial), self.now, user.links[m], gains[m], tag=(n, rec))
                energy.enqueue_association(st, req)
            else:
                self.ghosts[m].append((energy.queue_length(st), rec, n, gains[m]))
                self.open_ghosts += 1

    # -- main loop --------------------------------------------------------
    def run(self) -> RunResult:
        for m in range(self.cfg.n_sbs):
            self._start_inactive(m)
        for n in range(self.cfg.n_users):
            self._push(0.0, "decide", n)
        heap = self._heap
        handlers = {"serve": self._step, "activate": self._activate, "close": self._close, "decide": self._decide}
        while heap and (self.active_users > 0 or self.open_ghosts > 0):
            time, _, kind, data = heapq.heappop(heap)
            self.now = time
            handlers[kind](data)
        return RunResult(compute_metrics(self.cfg, self.users), self.events, self.cfg, self.replication)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def _action_cf(actions, base_cf):
    out = np.full((base_cf.shape[0], len(actions)), np.nan)
    for i, s in enumerate(actions):
        out[:, i] = base_cf[:, list(s.members)].sum(axis=1)
    return out


def build_trace(actions, records, snapshots=()) -> UserTrace:
    base_cf = np.array([r.base_cf for r in records])
    probs = None
    if records and records[0].probs is not None:
        probs = np.array([r.probs for r in records])
    return UserTrace(
        times=np.array([r.time for r in records]),
        avail=np.array([r.avail for r in records], dtype=bool),
        chosen=np.array([r.chosen for r in records], dtype=int),
        reward=np.array([r.reward for r in records]),
        counterfactual=_action_cf(actions, base_cf),
        probs=probs,
        snapshots=list(snapshots),
    )


def compute_metrics(cfg: SimConfig, users, snapshot_every: Optional[int] = None) -> Metrics:
    """Selection frequencies, strategy snapshots, running rewards and regret per user."""
    actions = cfg.actions
    every = snapshot_every or cfg.snapshot_every
    traces = [build_trace(actions, u.records, u.snapshots) for u in users]
    if not traces or any(len(t.chosen) == 0 for t in traces):
        raise ValueError("empty trace")
    A = len(actions)
    freq = np.array([np.bincount(t.chosen, minlength=A) / len(t.chosen) for t in traces])
    mixed, cum, regret = [], [], []
    for n, t in enumerate(traces):
        J = len(t.chosen)
        if t.snapshots:
            mixed.extend((n, j, p) for j, p in t.snapshots)
        else:
            for j in range(0, J, every):
                window = t.chosen[max(0, j - every):j] if j else t.chosen[:1]
                mixed.append((n, j, np.bincount(window, minlength=A) / len(window)))
        running = np.cumsum(t.reward) / np.arange(1, J + 1)
        cum.extend((n, j + 1, running[j]) for j in range(every - 1, J, every))
        if (J % every) != 0:
            cum.append((n, J, running[-1]))
        points = np.unique(np.linspace(1, J, min(cfg.regret_points, J)).astype(int))
        best = hindsight_curve(t.avail, t.counterfactual, points)
        earned = np.cumsum(t.reward)[points - 1]
        regret.extend((n, int(c), float(b), float(e)) for c, b, e in zip(points, best, earned))
    means = np.array([t.reward.mean() for t in traces])
    return Metrics(actions, freq, mixed, cum, regret, means, float(means.sum()), traces)


# --------------------------------------------------------------------------
# entry points
# --------------------------------------------------------------------------

def run(cfg: SimConfig, replication: int = 0, record_events: bool = True) -> RunResult:
    """One deterministic replication of ``cfg``."""
    return Simulator(cfg, replication, record_events).run()


def _run_one(args):
    cfg, r, record_events = args
    return run(cfg, r, record_events)


@dataclass
class ReplicationSummary:
    results: list
    aggregate: np.ndarray
    mean: float
    stderr: float


def run_replications(cfg: SimConfig, workers: int = 1, record_events: bool = False) -> ReplicationSummary:
    """All ``cfg.replications`` runs, merged in replication order."""
    jobs = [(cfg, r, record_events) for r in range(cfg.replications)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    agg = np.array([r.metrics.aggregate_reward for r in results])
    se = float(agg.std(ddof=1) / math.sqrt(len(agg))) if len(agg) > 1 else 0.0
    return ReplicationSummary(results, agg, float(agg.mean()), se)
