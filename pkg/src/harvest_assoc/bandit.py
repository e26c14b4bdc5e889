"""EXP4 over ordering experts for bandits with sleeping arms.

Each ordering expert is a permutation of the arms and advises the
highest-ranked arm that is currently awake; one extra expert advises the
uniform distribution over all arms.  Weights are kept in log space.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator

from .validation import check_mask, check_masks, check_reward, mask_to_int

MAX_ARMS = 8

#: The distinguished expert that spreads its advice evenly over all arms.
UNIFORM = None


def enumerate_experts(n_arms: int, cap: int = MAX_ARMS) -> list:
    """The uniform expert followed by all orderings in lexicographic order.

    An ordering is a tuple of arm indices, most preferred first.
    """
    if n_arms < 1:
        raise ValueError("need at least one arm")
    if n_arms > cap:
        raise ValueError(
            f"{n_arms} arms would need {math.factorial(n_arms) + 1} experts "
            f"(factorial blowup); the cap is {cap} arms"
        )
    return [UNIFORM] + list(itertools.permutations(range(n_arms)))


def top_available(order: Sequence[int], avail) -> int:
    for arm in order:
        if avail[arm]:
            return arm
    raise ValueError("no arm is available")


def expert_advice(expert, avail) -> np.ndarray:
    """Advice vector of one expert over all arms for the awake set ``avail``."""
    mask = check_mask(avail)
    if expert is UNIFORM:
        return np.full(mask.size, 1.0 / mask.size)
    b = np.zeros(mask.size)
    b[top_available(expert, mask)] = 1.0
    return b


class ExpertBank:
    """Log-weights of all ``M! + 1`` experts plus a per-mask advice cache.

    ``log_weights`` is the state; a linear copy ``exp(log_weights - shift)``
    and its sum are kept alongside so that mixing costs one ``bincount``.
    The shift moves to the current maximum whenever the spread exceeds 500.
    """

    RESHIFT = 500.0

    def __init__(self, n_arms: int, gamma: float = 0.05, cap: int = MAX_ARMS):
        if not 0 < gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma!r}")
        enumerate_experts(n_arms, cap)  # validates the cap
        self.n_arms = n_arms
        self.gamma = gamma
        self.orders = np.array(list(itertools.permutations(range(n_arms))), dtype=np.int8)
        self._tops: dict[int, np.ndarray] = {}
        self.log_weights = np.zeros(len(self.orders) + 1)

    @property
    def log_weights(self) -> np.ndarray:
        view = self._lw.view()
        view.flags.writeable = False
        return view

    @log_weights.setter
    def log_weights(self, value):
        lw = np.array(value, dtype=float)
        if lw.shape != (len(self.orders) + 1,) or not np.all(np.isfinite(lw)):
            raise ValueError(f"need {len(self.orders) + 1} finite log-weights")
        self._lw = lw
        self._reshift()

    def _reshift(self):
        self._shift = float(self._lw.max())
        self._lin = np.exp(self._lw - self._shift)
        self._total = float(self._lin.sum())

    @property
    def n_experts(self) -> int:
        return len(self._lw)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self._lw)

    def tops(self, mask: np.ndarray) -> np.ndarray:
        """Arm advised by every ordering expert under ``mask``."""
        return self._advice(mask)[0]

    def _advice(self, mask: np.ndarray):
        # lexicographic experts advise in long runs of the same arm; the
        # cache keeps (tops, run starts, run ends, run arms) per mask
        key = mask_to_int(mask)
        hit = self._tops.get(key)
        if hit is None:
            first = mask[self.orders].argmax(axis=1)
            top = self.orders[np.arange(len(self.orders)), first].astype(np.intp)
            starts = np.concatenate(([0], np.flatnonzero(np.diff(top)) + 1))
            ends = np.append(starts[1:], len(top))
            hit = (top, starts, ends, top[starts])
            self._tops[key] = hit
        return hit

    def expert_probs(self) -> np.ndarray:
        return self._lin / self._total

    def advice_mass(self, mask: np.ndarray) -> np.ndarray:
        """Total expert probability behind each arm, uniform expert included."""
        _, starts, _, arms = self._advice(mask)
        lin = self._lin
        runs = np.add.reduceat(lin[1:], starts)
        mass = np.bincount(arms, weights=runs, minlength=self.n_arms)
        return (mass + lin[0] / self.n_arms) / self._total

    def bump(self, mask: np.ndarray, chosen: int, step: float, uniform_step: float):
        """Add ``step`` to every ordering expert that advises ``chosen`` under ``mask``."""
        top, starts, ends, arms = self._advice(mask)
        lw, lin = self._lw, self._lin
        hits = np.flatnonzero(arms == chosen)
        # experts sit after the uniform one, hence the +1 offsets; few long
        # runs are cheapest as slices, many short ones as an index array
        parts = [slice(starts[i] + 1, ends[i] + 1) for i in hits] if len(hits) <= 16 else [
            np.flatnonzero(top == chosen) + 1
        ]
        for part in parts:
            lw[part] += step
        lw[0] += uniform_step
        peak = max([lw[0]] + [lw[part].max() for part in parts if np.size(lw[part])])
        if peak - self._shift > self.RESHIFT:
            self._reshift()
            return
        for part in parts:
            lin[part] = np.exp(lw[part] - self._shift)
        lin[0] = math.exp(lw[0] - self._shift)
        self._total = float(lin.sum())


def mix_probabilities(bank: ExpertBank, avail) -> np.ndarray:
    """Arm distribution: weighted expert advice mixed with ``gamma`` uniform exploration."""
    mask = check_mask(avail, bank.n_arms)
    M, gamma = bank.n_arms, bank.gamma
    return (1.0 - gamma) * bank.advice_mass(mask) + gamma / M


def sample_action(a, avail, stream: np.random.Generator) -> int:
    """Draw an arm from ``a`` restricted to the awake arms.

    The uniform share of ``a`` may sit on sleeping arms; conditioning on
    the awake set keeps every draw playable.
    """
    mask = check_mask(avail, len(a))
    w = np.where(mask, np.asarray(a, dtype=float), 0.0)
    cdf = np.cumsum(w)
    arm = int(np.searchsorted(cdf, stream.random() * cdf[-1], side="right"))
    arm = min(arm, len(w) - 1)
    while not mask[arm]:  # only reachable through float ties at a boundary
        arm -= 1
    return arm


def update(bank: ExpertBank, chosen: int, reward: float, a, avail) -> ExpertBank:
    """Importance-weighted exponential update after observing ``reward`` on ``chosen``."""
    reward = check_reward(reward)
    if reward == 0.0:
        return bank
    mask = check_mask(avail, bank.n_arms)
    a_chosen = float(a[chosen])
    if not a_chosen > 0:
        raise ValueError("chosen arm had zero probability")
    step = bank.gamma * (reward / a_chosen) / bank.n_arms
    bank.bump(mask, chosen, step, step / bank.n_arms)
    return bank


# --------------------------------------------------------------------------
# super-actions (several cells at once)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SuperAction:
    members: tuple

    def __post_init__(self):
        members = tuple(sorted(int(m) for m in self.members))
        if not members or len(set(members)) != len(members):
            raise ValueError(f"super-action needs distinct members, got {self.members!r}")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)

    def label(self, offset: int = 1) -> str:
        return "+".join(str(m + offset) for m in self.members)


def super_actions(arms: Sequence[int], size: int) -> list[SuperAction]:
    if not 1 <= size <= len(arms):
        raise ValueError(f"super-action size {size} out of range for {len(arms)} arms")
    return [SuperAction(c) for c in itertools.combinations(sorted(arms), size)]


def super_availability(s: SuperAction, avail) -> bool:
    return all(bool(avail[m]) for m in s.members)


def super_mask(actions: Sequence[SuperAction], avail) -> np.ndarray:
    return np.array([super_availability(s, avail) for s in actions], dtype=bool)


def super_reward(s: SuperAction, rewards: Sequence[float], rescale: bool = False) -> float:
    """Sum of component rewards; divided by the size when ``rescale`` is set."""
    if len(rewards) != s.size:
        raise ValueError(f"expected {s.size} component rewards, got {len(rewards)}")
    total = float(sum(rewards))
    return total / s.size if rescale else total


# --------------------------------------------------------------------------
# hindsight benchmark
# --------------------------------------------------------------------------

def _mask_totals(masks: np.ndarray, rewards: np.ndarray):
    keys = masks.astype(np.int64) @ (1 << np.arange(masks.shape[1], dtype=np.int64))
    uniq, inverse = np.unique(keys, return_inverse=True)
    totals = np.zeros((len(uniq), masks.shape[1]))
    np.add.at(totals, inverse.ravel(), np.where(masks, rewards, 0.0))
    return uniq, inverse.ravel(), totals


def _ordering_tops(orders: np.ndarray, uniq: np.ndarray, n_arms: int) -> np.ndarray:
    """``tops[u, e]``: arm that ordering ``e`` plays under mask ``uniq[u]``."""
    bits = ((uniq[:, None] >> np.arange(n_arms)) & 1).astype(bool)
    first = bits[:, orders].argmax(axis=2)  # (masks, orderings)
    return orders[np.arange(len(orders))[None, :], first]


def _ordering_matrix(tops: np.ndarray, n_arms: int) -> sparse.csr_matrix:
    """Sparse (orderings x masks*arms) selector: row e picks totals[u, tops[u, e]]."""
    U, E = tops.shape
    cols = (np.arange(U)[:, None] * n_arms + tops).T.ravel()
    return sparse.csr_matrix(
        (np.ones(E * U), cols, np.arange(0, E * U + 1, U)), shape=(E, U * n_arms)
    )


def _check_trace(masks, rewards):
    masks = check_masks(masks)
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != masks.shape:
        raise ValueError("rewards must have the same shape as masks")
    if np.isnan(rewards[masks]).any():
        raise ValueError("counterfactual reward missing for an available arm")
    return masks, rewards


def hindsight_best_ordering(masks, rewards, cap: int = MAX_ARMS) -> tuple[tuple, float]:
    """Best fixed ordering on a trace where every awake arm's reward is known.

    Exhaustive over all orderings; ties go to the lexicographically first.
    """
    masks, rewards = _check_trace(masks, rewards)
    n_arms = masks.shape[1]
    enumerate_experts(n_arms, cap)
    orders = np.array(list(itertools.permutations(range(n_arms))), dtype=np.int64)
    uniq, _, totals = _mask_totals(masks, rewards)
    value = _ordering_matrix(_ordering_tops(orders, uniq, n_arms), n_arms) @ totals.ravel()
    best = int(np.argmax(value))
    return tuple(int(x) for x in orders[best]), float(value[best])


def hindsight_curve(masks, rewards, checkpoints: Sequence[int], cap: int = MAX_ARMS) -> np.ndarray:
    """Best-ordering total on each prefix ``trace[:c]`` for ``c`` in ``checkpoints``."""
    masks, rewards = _check_trace(masks, rewards)
    n_arms = masks.shape[1]
    enumerate_experts(n_arms, cap)
    orders = np.array(list(itertools.permutations(range(n_arms))), dtype=np.int64)
    uniq, inverse, _ = _mask_totals(masks, rewards)
    select = _ordering_matrix(_ordering_tops(orders, uniq, n_arms), n_arms)
    contrib = np.where(masks, rewards, 0.0)
    checkpoints = np.asarray(checkpoints, dtype=int)
    if np.any(np.diff(checkpoints) < 0) or checkpoints.min(initial=1) < 0 or checkpoints.max(initial=0) > len(masks):
        raise ValueError("checkpoints must be nondecreasing prefix lengths")
    totals = np.zeros((len(uniq), n_arms))
    columns = np.empty((len(uniq) * n_arms, len(checkpoints)))
    start = 0
    for i, c in enumerate(checkpoints):
        np.add.at(totals, inverse[start:c], contrib[start:c])
        start = c
        columns[:, i] = totals.ravel()
    return (select @ columns).max(axis=0)


# --------------------------------------------------------------------------
# estimator front end
# --------------------------------------------------------------------------

class Exp4SB(BaseEstimator):
    """EXP4 for sleeping arms with ordering experts.

    Parameters
    ----------
    n_arms : int
        Number of arms (cells or super-cells).
    gamma : float
        Exploration share in (0, 1].
    reward_scale : float
        Observed rewards are divided by this before the update, so that
        summed super-action rewards stay in [0, 1].
    max_arms : int
        Refuse to build more than ``max_arms! + 1`` experts.
    random_state : int, Generator or None
        Source of the action draws made by :meth:`predict` and :meth:`choose`.

    ``predict_proba`` maps availability masks to arm distributions at the
    current weights; ``partial_fit`` replays logged ``(mask, action,
    reward)`` triples through the update, recomputing the propensities.
    """

    def __init__(self, n_arms=2, gamma=0.05, reward_scale=1.0, max_arms=MAX_ARMS, random_state=None):
        self.n_arms = n_arms
        self.gamma = gamma
        self.reward_scale = reward_scale
        self.max_arms = max_arms
        self.random_state = random_state

    def _reset(self):
        self.bank_ = ExpertBank(self.n_arms, self.gamma, self.max_arms)
        self.rng_ = np.random.default_rng(self.random_state)
        self.n_updates_ = 0
        return self

    def _ensure(self):
        if not hasattr(self, "bank_"):
            self._reset()

    def choose(self, avail) -> tuple[int, np.ndarray]:
        self._ensure()
        a = mix_probabilities(self.bank_, avail)
        return sample_action(a, avail, self.rng_), a

    def observe(self, arm: int, reward: float, a, avail):
        self._ensure()
        update(self.bank_, arm, reward / self.reward_scale, a, avail)
        self.n_updates_ += 1
        return self

    def predict_proba(self, X) -> np.ndarray:
        self._ensure()
        masks = check_masks(X, self.n_arms)
        return np.vstack([mix_probabilities(self.bank_, m) for m in masks])

    def predict(self, X) -> np.ndarray:
        self._ensure()
        masks = check_masks(X, self.n_arms)
        return np.array([self.choose(m)[0] for m in masks])

    def partial_fit(self, X, actions, rewards):
        self._ensure()
        masks = check_masks(X, self.n_arms)
        actions = np.asarray(actions, dtype=int)
        rewards = np.asarray(rewards, dtype=float)
        if not len(masks) == len(actions) == len(rewards):
            raise ValueError("masks, actions and rewards must have equal length")
        for mask, arm, r in zip(masks, actions, rewards):
            if not mask[arm]:
                raise ValueError(f"action {arm} was not available")
            a = mix_probabilities(self.bank_, mask)
            self.observe(int(arm), float(r), a, mask)
        return self

    def fit(self, X, actions, rewards):
        self._reset()
        return self.partial_fit(X, actions, rewards)

    def best_ordering(self) -> Optional[tuple]:
        """The ordering with the largest weight (``None`` if the uniform expert leads)."""
        self._ensure()
        i = int(np.argmax(self.bank_.log_weights))
        return None if i == 0 else tuple(int(x) for x in self.bank_.orders[i - 1])
