"""Independent Monte Carlo and quadrature references for the prob module.

Nothing here reuses the closed forms under test: samplers draw the
underlying random variables directly and the quadrature helpers only see a
density as a black box.  Every sampler takes an explicit random stream.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .prob import iid_approx_rate


def integrate_density(pdf: Callable[[float], float], lo: float = 0.0, hi: float = np.inf,
                      points: Sequence[float] = ()) -> float:
    """Adaptive quadrature of a scalar density; splits at ``points``."""
    cuts = [lo, *sorted(p for p in points if lo < p < hi), hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(pdf, a, b, epsabs=1e-12, epsrel=1e-12, limit=400)
        total += val
    return total


def two_rate_convolution(a: float, b: float, s):
    """Density of Exp(a) + Exp(b), a != b, by direct convolution."""
    s = np.asarray(s, dtype=float)
    return a * b / (b - a) * (np.exp(-a * s) - np.exp(-b * s))


def sample_hypoexp(rates, n: int, stream: np.random.Generator) -> np.ndarray:
    rates = np.asarray(rates, dtype=float)
    return (stream.standard_exponential((n, len(rates))) / rates).sum(axis=1)


def coupled_gap_samples(rates, n: int, stream: np.random.Generator,
                        approx_rate: Callable = iid_approx_rate) -> tuple[np.ndarray, np.ndarray]:
    """Paired (S, Q): ``S = sum E_i / mu_i`` and ``Q = sum E_i / mu_bar`` on shared E_i ~ Exp(1).

    Sharing the unit exponentials is the coupling under which
    ``Var(S - Q) = k * sigma_k**2``.
    """
    rates = np.asarray(rates, dtype=float)
    e = stream.standard_exponential((n, len(rates)))
    return (e / rates).sum(axis=1), e.sum(axis=1) / approx_rate(rates)


def queue_count_samples(k: int, lam: float, alpha: float, n: int, stream: np.random.Generator) -> np.ndarray:
    """Poisson(alpha) arrivals counted over an Erlang(k, lam) interval."""
    t = stream.gamma(k, 1.0 / lam, size=n)
    return stream.poisson(alpha * t)


def residual_samples(k: int, mu: float, alpha: float, t: float, q_max: float, n: int,
                     stream: np.random.Generator) -> np.ndarray:
    """Erlang(k, mu) harvest minus ``q_max`` times Poisson(alpha t) arrivals."""
    y = stream.gamma(k, 1.0 / mu, size=n)
    return y - q_max * stream.poisson(alpha * t, size=n)


def required_energy_samples(theta: float, n: int, stream: np.random.Generator) -> np.ndarray:
    """``Q = theta / E`` with ``E ~ Exp(1)``, i.e. ``Pr[Q <= q] = exp(-theta / q)``."""
    return theta / stream.standard_exponential(n)


def success_mc(mu, alpha, theta, t, k, q_max, n: int, stream: np.random.Generator) -> tuple[float, float]:
    """Fraction of draws with ``Q <= q_max`` and ``R >= Q``; returns ``(p, standard error)``."""
    r = residual_samples(k, mu, alpha, t, q_max, n, stream)
    q = required_energy_samples(theta, n, stream) if theta > 0 else np.zeros(n)
    hit = (q <= q_max) & (r >= q)
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1 - p), 1.0 / n) / n)


def sup_cdf_distance(cdf_a: Callable, cdf_b: Callable, grid) -> float:
    grid = np.asarray(grid, dtype=float)
    return float(np.max(np.abs(cdf_a(grid) - cdf_b(grid))))


def ks_distance(samples, cdf: Callable) -> float:
    """Kolmogorov distance between an empirical sample and a continuous cdf."""
    return float(stats.ks_1samp(np.asarray(samples, dtype=float), cdf).statistic)


def ecdf_distance_discrete(samples, support, pmf) -> float:
    """Sup CDF gap on an integer lattice."""
    support = np.asarray(support)
    counts = np.bincount(np.asarray(samples, dtype=np.int64) - support[0], minlength=len(support))
    emp = np.cumsum(counts[: len(support)]) / len(samples)
    return float(np.max(np.abs(emp - np.cumsum(pmf))))


def total_variation(samples, pmf_values, support) -> float:
    """TV distance between sample frequencies and ``pmf_values`` on ``support`` (mass outside counts fully)."""
    support = np.asarray(support)
    samples = np.asarray(samples, dtype=np.int64)
    inside = (samples >= support[0]) & (samples <= support[-1])
    freq = np.bincount(samples[inside] - support[0], minlength=len(support)) / len(samples)
    outside_emp = 1.0 - freq.sum()
    outside_model = max(0.0, 1.0 - float(np.sum(pmf_values)))
    return 0.5 * (float(np.abs(freq - pmf_values).sum()) + outside_emp + outside_model)
