"""Rayleigh block-fading link between one user and one small cell.

Rates are in nats per channel use; required energy equals transmit power.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinkModel:
    """Average fading gain ``F``, path-loss gain ``G``, noise, interference, target rate."""

    avg_fading_gain: float
    path_loss_gain: float
    noise_power: float = 1.0
    interference: float = 0.0
    min_rate: float = 0.0

    def __post_init__(self):
        if self.avg_fading_gain < 0 or self.path_loss_gain < 0:
            raise ValueError("fading and path-loss gains must be nonnegative")
        if not self.noise_power > 0:
            raise ValueError(f"noise_power must be positive, got {self.noise_power!r}")
        if self.interference < 0:
            raise ValueError("interference must be nonnegative")
        if self.min_rate < 0:
            raise ValueError("min_rate must be nonnegative")

    @property
    def mean_gain(self) -> float:
        return self.avg_fading_gain * self.path_loss_gain

    @property
    def noise_plus_interference(self) -> float:
        return self.noise_power + self.interference


@dataclass(frozen=True, slots=True)
class GainSample:
    gain_sq: float

    def __post_init__(self):
        if not self.gain_sq > 0:
            raise ValueError(f"gain_sq must be positive, got {self.gain_sq!r}")


def beta(link: LinkModel) -> float:
    """Rate of the exponential law of ``|h|**2``; its mean is ``F * G``."""
    g = link.mean_gain
    if not g > 0:
        raise ValueError("link has zero average gain (F * G == 0); it cannot be served")
    return 1.0 / g


def sample_gain_sq(beta_: float, stream: np.random.Generator) -> GainSample:
    if not beta_ > 0:
        raise ValueError(f"beta must be positive, got {beta_!r}")
    # exponential() can return exactly 0 with negligible probability
    x = 0.0
    while x <= 0.0:
        x = stream.exponential(1.0 / beta_)
    return GainSample(x)


def _gain(g) -> float:
    return g.gain_sq if isinstance(g, GainSample) else float(g)


def rate(power: float, g, link: LinkModel) -> float:
    if power < 0:
        raise ValueError("power must be nonnegative")
    return math.log1p(power * _gain(g) / link.noise_plus_interference)


def required_energy(g, link: LinkModel) -> float:
    """Power needed to reach ``link.min_rate`` at gain ``g``."""
    gain = _gain(g)
    if not gain > 0:
        raise ValueError("gain_sq must be positive")
    return link.noise_plus_interference / gain * math.expm1(link.min_rate)


def theta(link: LinkModel) -> float:
    """Scale of the required-energy law: ``F_Q(q) = exp(-theta / q)``."""
    return beta(link) * link.noise_plus_interference * math.expm1(link.min_rate)
