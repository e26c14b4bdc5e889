"""Harvest-use state machine of one small base station.

A cell alternates between an inactive step, in which it collects ``k``
compound-Poisson energy arrivals and accepts associations, and an active
step, in which it serves its queue first-come first-served until the queue
is empty or the energy runs out.  Nothing is carried over between cycles.

Functions here mutate the :class:`SbsState` they are given and return the
broadcast :class:`Event` or :class:`AllocationResult`; the simulator owns
the clock and the event log.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Optional

import numpy as np

from . import channel
from .channel import LinkModel
from .prob import iid_approx_rate


class InvalidTransition(RuntimeError):
    """A mode change or service call that the protocol does not allow."""


class Mode(enum.Enum):
    INACTIVE = "inactive"
    ACTIVE = "active"


class Outcome(enum.Enum):
    SERVED = "served"
    SERVED_DEGRADED = "served_degraded"
    DENIED = "denied"


@dataclass(frozen=True)
class SbsConfig:
    id: int
    lam: float
    mu_seq: tuple
    k: int
    alpha: float
    q_max: float

    def __post_init__(self):
        mu_seq = tuple(float(m) for m in np.atleast_1d(self.mu_seq))
        object.__setattr__(self, "mu_seq", mu_seq)
        if not self.lam > 0:
            raise ValueError(f"SBS {self.id}: lambda must be positive")
        if not mu_seq or any(not m > 0 for m in mu_seq):
            raise ValueError(f"SBS {self.id}: every mu must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"SBS {self.id}: k must be a positive integer")
        if len(mu_seq) not in (1, self.k):
            raise ValueError(f"SBS {self.id}: mu_seq must hold 1 or k={self.k} rates")
        if self.alpha < 0:
            raise ValueError(f"SBS {self.id}: alpha must be nonnegative")
        if not self.q_max > 0:
            raise ValueError(f"SBS {self.id}: q_max must be positive")

    @property
    def mu(self) -> float:
        """Common harvest rate (harmonic mean when the rates differ)."""
        return self.mu_seq[0] if len(self.mu_seq) == 1 else iid_approx_rate(self.mu_seq)

    def mu_at(self, i: int) -> float:
        return self.mu_seq[0] if len(self.mu_seq) == 1 else self.mu_seq[i]


@dataclass
class Request:
    """One pending transmission in a cell's queue.

    Tracked users carry a link and a pre-drawn block-fading gain; background
    traffic carries a fixed ``demand`` instead.
    """

    owner: Hashable
    time: float
    link: Optional[LinkModel] = None
    gain_sq: Optional[float] = None
    demand: Optional[float] = None
    tag: Any = None

    def required(self, stream: Optional[np.random.Generator] = None) -> float:
        if self.demand is not None:
            return self.demand
        if self.gain_sq is None:
            if stream is None:
                raise ValueError("request has no gain and no stream to draw one")
            self.gain_sq = channel.sample_gain_sq(channel.beta(self.link), stream).gain_sq
        return channel.required_energy(self.gain_sq, self.link)


@dataclass
class BackgroundBatch:
    """Consecutive untracked users with a fixed per-user demand."""

    count: int
    demand: float


@dataclass(frozen=True)
class AllocationResult:
    outcome: Outcome
    energy_spent: float
    achieved_rate: float
    request: Request
    required: float = math.nan


@dataclass(frozen=True)
class Event:
    time: float
    entity: str
    kind: str
    payload: str = ""


@dataclass
class SbsState:
    config: SbsConfig
    mode: Mode = Mode.INACTIVE
    harvested: float = 0.0
    arrivals_so_far: int = 0
    queue: list = field(default_factory=list)
    residual: float = 0.0
    mode_entry_time: float = 0.0
    spent: float = 0.0

    @property
    def name(self) -> str:
        return f"sbs{self.config.id}"

    @property
    def available(self) -> bool:
        return self.mode is Mode.INACTIVE


def next_harvest_event(state: SbsState, stream: np.random.Generator) -> tuple[float, float]:
    """Inter-arrival time and energy amount of the next harvesting event."""
    if state.mode is not Mode.INACTIVE:
        raise InvalidTransition(f"{state.name} harvests only while inactive")
    cfg = state.config
    dt = stream.exponential(1.0 / cfg.lam)
    amount = stream.exponential(1.0 / cfg.mu_at(state.arrivals_so_far))
    return dt, amount


def absorb_harvest(state: SbsState, amount: float) -> None:
    if state.arrivals_so_far >= state.config.k:
        raise InvalidTransition(f"{state.name} already collected k arrivals")
    state.harvested += amount
    state.arrivals_so_far += 1


def harvest_cycle(state: SbsState, stream: np.random.Generator) -> float:
    """Draw a whole inactive step at once; returns its duration.

    Equivalent in law to ``k`` calls of :func:`next_harvest_event`, without
    one simulator event per arrival.
    """
    if state.mode is not Mode.INACTIVE or state.arrivals_so_far:
        raise InvalidTransition(f"{state.name} must start a fresh inactive step")
    cfg = state.config
    # Erlang totals are drawn directly; distinct rates need each arrival
    duration = stream.gamma(cfg.k, 1.0 / cfg.lam)
    if len(cfg.mu_seq) == 1:
        state.harvested = float(stream.gamma(cfg.k, 1.0 / cfg.mu_seq[0]))
    else:
        state.harvested = float(stream.exponential(1.0 / np.asarray(cfg.mu_seq)).sum())
    state.arrivals_so_far = cfg.k
    return float(duration)


def advance_to_active(state: SbsState, time: float) -> Event:
    if state.mode is not Mode.INACTIVE:
        raise InvalidTransition(f"{state.name} is already active")
    if state.arrivals_so_far < state.config.k:
        raise InvalidTransition(
            f"{state.name} has {state.arrivals_so_far} of {state.config.k} arrivals"
        )
    state.mode = Mode.ACTIVE
    state.residual = state.harvested
    state.spent = 0.0
    state.mode_entry_time = time
    return Event(time, state.name, "active", f"Y={state.harvested:.17g};queue={len(state.queue)}")


def enqueue_association(state: SbsState, request: Request) -> bool:
    """Append ``request`` at the queue tail; False (rejected) while active."""
    if state.mode is not Mode.INACTIVE:
        return False
    state.queue.append(request)
    return True


def enqueue_background(state: SbsState, count: int, demand: float) -> bool:
    """Append ``count`` untracked users, merging with a batch at the tail."""
    if state.mode is not Mode.INACTIVE:
        return False
    if count <= 0:
        return True
    tail = state.queue[-1] if state.queue else None
    if isinstance(tail, BackgroundBatch) and tail.demand == demand:
        tail.count += count
    else:
        state.queue.append(BackgroundBatch(int(count), float(demand)))
    return True


def queue_length(state: SbsState) -> int:
    """Number of individual users waiting."""
    return sum(r.count if isinstance(r, BackgroundBatch) else 1 for r in state.queue)


def serve_background(state: SbsState, limit: int) -> int:
    """Serve up to ``limit`` users of the head batch in one go.

    Matches repeated :func:`serve_next` calls up to float rounding; stops at the
    first user the residual cannot cover and returns the number served.
    """
    if state.mode is not Mode.ACTIVE:
        raise InvalidTransition(f"{state.name} serves only while active")
    head = state.queue[0] if state.queue else None
    if not isinstance(head, BackgroundBatch):
        raise InvalidTransition(f"{state.name} has no background batch at the head")
    d = head.demand
    n = min(limit, head.count)
    if d > 0:
        n = min(n, int(state.residual // d) + 1)
        while n > 0 and state.residual - (n - 1) * d < d:
            n -= 1
    if n <= 0:
        return 0
    state.residual -= n * d
    state.spent += n * d
    head.count -= n
    if head.count == 0:
        state.queue.pop(0)
    return n


def serve_next(state: SbsState, stream: Optional[np.random.Generator] = None) -> AllocationResult:
    """Allocate energy to the head of the queue.

    Needs ``q <= q_max`` and enough residual for full service; a request
    above the cap still gets ``q_max`` if that much is left, at a lower
    rate.  Otherwise the request is denied and the residual is untouched.
    """
    if state.mode is not Mode.ACTIVE:
        raise InvalidTransition(f"{state.name} serves only while active")
    if not state.queue:
        raise InvalidTransition(f"{state.name} has an empty queue")
    req = state.queue[0]
    if isinstance(req, BackgroundBatch):
        req.count -= 1
        if req.count == 0:
            state.queue.pop(0)
        req = Request(("background", state.config.id), math.nan, demand=req.demand)
    else:
        state.queue.pop(0)
    q = req.required(stream)
    q_max = state.config.q_max
    if q <= q_max and state.residual >= q:
        spent, outcome = q, Outcome.SERVED
    elif q > q_max and state.residual >= q_max:
        spent, outcome = q_max, Outcome.SERVED_DEGRADED
    else:
        return AllocationResult(Outcome.DENIED, 0.0, 0.0, req, q)
    state.residual -= spent
    state.spent += spent
    if req.link is None:
        achieved = 0.0
    elif outcome is Outcome.SERVED:
        # allocation targets min_rate exactly; clamp float round-off
        achieved = max(channel.rate(spent, req.gain_sq, req.link), req.link.min_rate)
    else:
        achieved = min(channel.rate(spent, req.gain_sq, req.link), math.nextafter(req.link.min_rate, 0.0))
    return AllocationResult(outcome, spent, achieved, req, q)


def deny_remaining(state: SbsState) -> list[AllocationResult]:
    """Deny everything left in the queue once the energy has run short."""
    out = [AllocationResult(Outcome.DENIED, 0.0, 0.0, req) for req in state.queue
           if not isinstance(req, BackgroundBatch)]
    state.queue.clear()
    return out


def advance_to_inactive(state: SbsState, time: float) -> Event:
    if state.mode is not Mode.ACTIVE:
        raise InvalidTransition(f"{state.name} is already inactive")
    if state.queue:
        raise InvalidTransition(f"{state.name} still has {len(state.queue)} queued requests")
    leftover = state.residual
    state.mode = Mode.INACTIVE
    state.harvested = 0.0
    state.arrivals_so_far = 0
    state.residual = 0.0
    state.mode_entry_time = time
    return Event(time, state.name, "inactive", f"discarded={leftover:.17g}")
