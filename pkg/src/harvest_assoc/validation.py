"""Input checks shared by the estimators and the simulator."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_mask(avail, n_arms: int | None = None) -> np.ndarray:
    """One availability mask as a 1-d bool array with at least one True."""
    mask = np.asarray(avail, dtype=bool)
    if mask.ndim != 1:
        raise ValueError(f"availability mask must be 1-d, got shape {mask.shape}")
    if n_arms is not None and mask.size != n_arms:
        raise ValueError(f"availability mask has {mask.size} entries, expected {n_arms}")
    if not mask.any():
        raise ValueError("no arm is available")
    return mask


def check_masks(X, n_arms: int | None = None) -> np.ndarray:
    """A batch of availability masks, shape (n_trials, n_arms)."""
    masks = check_array(X, dtype=None, ensure_2d=True).astype(bool)
    if n_arms is not None and masks.shape[1] != n_arms:
        raise ValueError(f"masks have {masks.shape[1]} columns, expected {n_arms}")
    if not masks.any(axis=1).all():
        raise ValueError("every trial needs at least one available arm")
    return masks


def check_probability_vector(a, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(a, dtype=float)
    if p.ndim != 1 or np.any(p < -atol) or abs(p.sum() - 1.0) > atol:
        raise ValueError("not a probability vector")
    return np.clip(p, 0.0, None)


def check_reward(reward: float, upper: float = 1.0) -> float:
    r = float(reward)
    if not 0.0 <= r <= upper:
        raise ValueError(f"reward {r} outside [0, {upper}]")
    return r


def mask_to_int(mask) -> int:
    return int(np.dot(np.asarray(mask, dtype=np.int64), 1 << np.arange(len(mask), dtype=np.int64)))


def mask_to_str(mask) -> str:
    return "".join("1" if m else "0" for m in mask)
