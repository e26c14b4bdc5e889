"""Harvesting, consumption and success-probability models for one small cell.

Energy harvested during one inactive step is a sum of ``k`` exponential
amounts (Erlang when the amounts are identically distributed,
hypoexponential otherwise).  Energy already promised to earlier users is
taken at its worst case, ``q_max`` per queued user, so the residual energy
seen by a newcomer is ``R = Y - q_max * L`` with ``L ~ Poisson(alpha * t)``.

All functions are pure and accept numpy arrays where the argument is a
point of evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

# Mass left outside every truncated Poisson series.
TAIL_MASS = 1e-12
QUAD_EPSABS = 1e-8

_LEGENDRE_NODES, _LEGENDRE_WEIGHTS = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True)
class ErlangParams:
    k: int
    rate: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"Erlang shape must be a positive integer, got {self.k!r}")
        if not self.rate > 0:
            raise ValueError(f"Erlang rate must be positive, got {self.rate!r}")


@dataclass(frozen=True)
class HypoExpParams:
    rates: tuple

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if not rates:
            raise ValueError("at least one rate is required")
        if any(not r > 0 for r in rates):
            raise ValueError(f"rates must be positive, got {rates}")
        ordered = sorted(rates)
        for a, b in zip(ordered, ordered[1:]):
            if b - a <= 1e-12 * b:
                raise ValueError(
                    f"rates must be pairwise distinct (found {a} twice); use the "
                    "Erlang form or iid_approx_rate for repeated rates"
                )


@dataclass(frozen=True)
class QueueCountParams:
    k: int
    lam: float
    alpha: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if not self.lam > 0 or not self.alpha > 0:
            raise ValueError("lam and alpha must be positive")


@dataclass(frozen=True)
class NormalApprox:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def sf(self, x):
        return special.ndtr((self.mean - np.asarray(x, dtype=float)) / self.std)


def _nonneg(x, name="s"):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"{name} must be nonnegative")
    return arr


def _scalar_or_array(out, like):
    return float(out) if np.ndim(like) == 0 else out


# --------------------------------------------------------------------------
# harvesting
# --------------------------------------------------------------------------

def erlang_pdf(p: ErlangParams, s):
    """Density of the sum of ``p.k`` i.i.d. Exp(``p.rate``) variables."""
    s_arr = _nonneg(s)
    k, lam = p.k, p.rate
    log_pdf = k * math.log(lam) - special.gammaln(k) + special.xlogy(k - 1, s_arr) - lam * s_arr
    return _scalar_or_array(np.exp(log_pdf), s)


def erlang_cdf(p: ErlangParams, s):
    s_arr = _nonneg(s)
    return _scalar_or_array(special.gammainc(p.k, p.rate * s_arr), s)


def erlang_normal(k: int, mu: float) -> NormalApprox:
    """Central-limit approximation of Erl(k, mu), reasonable for k > 30."""
    return NormalApprox(k / mu, k / mu**2)


def hypoexp_coefficients(p: HypoExpParams) -> np.ndarray:
    """Weights ``A_i = prod_{j != i} mu_j / (mu_j - mu_i)``; they sum to one."""
    mu = np.asarray(p.rates)
    diff = mu[None, :] - mu[:, None]
    np.fill_diagonal(diff, 1.0)
    ratio = mu[None, :] / diff
    np.fill_diagonal(ratio, 1.0)
    return ratio.prod(axis=1)


def hypoexp_pdf(p: HypoExpParams, s):
    """Density of a sum of independent exponentials with distinct rates.

    ``f(s) = sum_i mu_i A_i exp(-mu_i s)``.
    """
    s_arr = _nonneg(s)
    mu = np.asarray(p.rates)
    coef = hypoexp_coefficients(p) * mu
    out = np.exp(-np.multiply.outer(s_arr, mu)) @ coef
    return _scalar_or_array(np.maximum(out, 0.0), s)


def hypoexp_cdf(p: HypoExpParams, s):
    s_arr = _nonneg(s)
    mu = np.asarray(p.rates)
    A = hypoexp_coefficients(p)
    out = -np.expm1(-np.multiply.outer(s_arr, mu)) @ A
    return _scalar_or_array(np.clip(out, 0.0, 1.0), s)


def hypoexp_normal(rates: Sequence[float]) -> NormalApprox:
    inv = 1.0 / np.asarray(rates, dtype=float)
    return NormalApprox(float(inv.sum()), float((inv**2).sum()))


def _check_rates(rates) -> np.ndarray:
    mu = np.asarray(rates, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise ValueError("rates must be a nonempty sequence")
    if np.any(~(mu > 0)):
        raise ValueError(f"rates must be positive, got {mu.tolist()}")
    return mu


def iid_approx_rate(rates: Sequence[float]) -> float:
    """Common rate for the i.i.d. stand-in of a non-identical exponential sum.

    This is the harmonic mean of ``rates``, which keeps the mean of the sum
    unchanged.
    """
    mu = _check_rates(rates)
    return float(1.0 / np.mean(1.0 / mu))


def mean_spread(rates: Sequence[float]) -> float:
    """Population variance of the exponential means ``1/mu_i``."""
    inv = 1.0 / _check_rates(rates)
    return max(0.0, float(np.mean(inv**2) - np.mean(inv) ** 2))


def chebyshev_gap_bound(rates: Sequence[float], delta: float) -> float:
    """Upper bound on ``Pr[|S - Q| >= delta**2]`` as stated for the i.i.d. stand-in."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    k = len(rates)
    return min(1.0, k * mean_spread(rates) / delta**2)


# --------------------------------------------------------------------------
# consumption
# --------------------------------------------------------------------------

def queue_count_pmf(p: QueueCountParams, l):
    """Users queued by the end of an Erl(k, lam) harvesting step.

    Poisson(alpha) arrivals mixed over the Erlang duration give a negative
    binomial law with ``k`` successes and success probability
    ``lam / (lam + alpha)``.
    """
    l_arr = np.asarray(l)
    if np.any(l_arr < 0):
        raise ValueError("l must be nonnegative")
    k, lam, a = p.k, p.lam, p.alpha
    log_pmf = (
        l_arr * math.log(a)
        + k * math.log(lam)
        + special.gammaln(l_arr + k)
        - special.gammaln(l_arr + 1)
        - special.gammaln(k)
        - (l_arr + k) * math.log(lam + a)
    )
    return _scalar_or_array(np.exp(log_pmf), l)


def required_energy_pdf(theta: float, q):
    """Density of the energy needed to reach the target rate over Rayleigh fading."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr <= 0):
        raise ValueError("q must be positive")
    return _scalar_or_array(theta / q_arr**2 * np.exp(-theta / q_arr), q)


def required_energy_cdf(theta: float, q):
    if theta < 0:
        raise ValueError(f"theta must be nonnegative, got {theta!r}")
    q_arr = np.atleast_1d(_nonneg(q, "q"))
    out = np.ones_like(q_arr) if theta == 0 else np.zeros_like(q_arr)
    pos = q_arr > 0
    out[pos] = np.exp(-theta / q_arr[pos])
    return _scalar_or_array(out if np.ndim(q) else out[0], q)


def poisson_window(mean: float, tail: float = TAIL_MASS) -> np.ndarray:
    """Counts carrying all but ``tail`` of a Poisson(mean) law.

    Uses the Bernstein upper-tail and Chernoff lower-tail bounds, so the
    window is guaranteed (slightly wider than the exact quantiles) and costs
    no root finding.
    """
    if mean <= 0:
        return np.zeros(1, dtype=int)
    L = math.log(2.0 / tail)
    up = L / 3.0 + math.sqrt(L * L / 9.0 + 2.0 * L * mean)
    down = math.sqrt(2.0 * L * mean)
    lo = max(int(math.floor(mean - down)), 0)
    hi = int(math.ceil(mean + up))
    return np.arange(lo, hi + 1)


def _poisson_logpmf(n, mean):
    if mean <= 0:
        return np.where(np.asarray(n) == 0, 0.0, -np.inf)
    return n * math.log(mean) - mean - special.gammaln(np.asarray(n) + 1)


def consumed_energy_pmf(alpha: float, t: float, q_max: float, z):
    """Worst-case energy already promised: ``q_max`` times a Poisson(alpha t) count.

    Values of ``z`` that are not whole multiples of ``q_max`` carry no mass.
    """
    z_arr = np.asarray(z, dtype=float)
    n = z_arr / q_max
    n_round = np.round(n)
    on_lattice = (np.abs(n - n_round) <= 1e-9 * np.maximum(1.0, np.abs(n))) & (n_round >= 0)
    pmf = np.exp(_poisson_logpmf(np.where(on_lattice, n_round, 0), alpha * t))
    return _scalar_or_array(np.where(on_lattice, pmf, 0.0), z)


def consumed_energy_normal(alpha: float, t: float, q_max: float) -> NormalApprox:
    return NormalApprox(q_max * alpha * t, q_max**2 * alpha * t)


def _consumption_terms(alpha, t, q_max):
    n = poisson_window(alpha * t)
    w = np.exp(_poisson_logpmf(n, alpha * t))
    return n * q_max, w


def residual_energy_pdf(harvest: ErlangParams, consume: tuple, r):
    """Density of ``Y - Z`` as the truncated mixture over queue lengths.

    ``consume`` is ``(alpha, t, q_max)``.  Negative ``r`` is allowed; it
    means the cell would already be out of energy.
    """
    alpha, t, q_max = consume
    z, w = _consumption_terms(alpha, t, q_max)
    r_arr = np.asarray(r, dtype=float)
    y = np.add.outer(r_arr, z)
    dens = np.where(y >= 0, erlang_pdf(harvest, np.maximum(y, 0.0)), 0.0)
    return _scalar_or_array(dens @ w, r)


def residual_energy_cdf(harvest: ErlangParams, consume: tuple, r):
    alpha, t, q_max = consume
    z, w = _consumption_terms(alpha, t, q_max)
    y = np.maximum(np.add.outer(np.asarray(r, dtype=float), z), 0.0)
    return _scalar_or_array(np.clip(special.gammainc(harvest.k, harvest.rate * y) @ w, 0.0, 1.0), r)


def residual_energy_normal(k, mu, alpha, t, q_max) -> NormalApprox:
    return NormalApprox(k / mu - q_max * alpha * t, k / mu**2 + q_max**2 * alpha * t)


# --------------------------------------------------------------------------
# success probability
# --------------------------------------------------------------------------

def success_prob_lower_bound(mu, alpha, theta, t, k, q_max) -> float:
    """Closed-form lower bound: normal tail of ``R >= q_max`` times ``F_Q(q_max)``."""
    approx = residual_energy_normal(k, mu, alpha, t, q_max)
    z = (q_max - approx.mean) / (math.sqrt(2.0) * approx.std)
    tail = 0.5 - 0.5 * math.erf(z)
    return min(1.0, max(0.0, tail * math.exp(-theta / q_max)))


def residual_survival(mu, alpha, t, k, q_max, q):
    """``Pr[R >= q]`` from the truncated series."""
    z, w = _consumption_terms(alpha, t, q_max)
    y = np.maximum(np.add.outer(np.asarray(q, dtype=float), z), 0.0)
    return special.gammaincc(k, mu * y) @ w


def success_prob_numeric(mu, alpha, theta, t, k, q_max, method: str = "quad") -> float:
    """Probability that a newcomer is served at its target rate.

    Integrates ``Pr[R >= q]`` against the required-energy law over
    ``q <= q_max``.  ``"quad"`` substitutes ``u = theta / q`` and runs
    adaptive quadrature on
    ``exp(-c) * int_0^inf exp(-v) Pr[R >= theta / (v + c)] dv`` with
    ``c = theta / q_max``.  ``"legendre"`` integrates by parts,
    ``F_Q(q_max) Pr[R >= q_max] + int_0^q_max F_Q(q) f_R(q) dq``, on a fixed
    48-point rule; it is several times faster and is what the simulator's
    omniscient baseline calls once per arm and decision.
    """
    if q_max <= 0:
        return 0.0
    if theta <= 0:
        return float(np.clip(residual_survival(mu, alpha, t, k, q_max, 0.0), 0.0, 1.0))
    c = theta / q_max
    z, w = _consumption_terms(alpha, t, q_max)

    if method == "legendre":
        edge = math.exp(-c) * (special.gammaincc(k, mu * (z + q_max)) @ w)
        q = 0.5 * q_max * (_LEGENDRE_NODES + 1.0)
        y = np.add.outer(q, z)
        f_y = np.exp(k * math.log(mu) - special.gammaln(k) + special.xlogy(k - 1, y) - mu * y) @ w
        p = edge + 0.5 * q_max * (_LEGENDRE_WEIGHTS @ (np.exp(-theta / q) * f_y))
    elif method == "quad":
        def integrand(v):
            y = theta / (v + c) + z
            return math.exp(-v) * float(special.gammaincc(k, mu * y) @ w)

        inner, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=QUAD_EPSABS, epsrel=1e-10, limit=200)
        p = math.exp(-c) * inner
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(min(1.0, max(0.0, p)))
