"""Registry of distribution checks run by ``harvest-assoc verify-dist``.

Each check compares one prob-module quantity against an independent oracle
and yields exactly one report row ``check,param_set,metric,value,threshold,pass``.
The harmonic-mean function is injectable so a deliberately wrong one can
be shown to trip the approximation checks.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from . import oracles, prob
from .channel import LinkModel, beta, required_energy, theta
from .prob import ErlangParams, HypoExpParams, QueueCountParams

FIELDS = ("check", "param_set", "metric", "value", "threshold", "pass")

TABLE1_ROWS = (  # lambda, mu, alpha, q_max, k
    (80, 0.03, 10, 7, 50),
    (70, 0.06, 12, 8, 100),
    (80, 0.09, 10, 9, 69),
    (130, 0.12, 15, 6, 40),
    (120, 0.11, 10, 7, 40),
)
DEMO_RATES = (3.0, 4.0, 6.0, 8.0)


@dataclass(frozen=True)
class Row:
    check: str
    param_set: str
    metric: str
    value: float
    threshold: float
    passed: bool

    def as_csv(self) -> dict:
        return {
            "check": self.check, "param_set": self.param_set, "metric": self.metric,
            "value": f"{self.value:.10g}", "threshold": f"{self.threshold:.10g}",
            "pass": "true" if self.passed else "false",
        }


@dataclass
class Context:
    seed: int = 20240
    samples: int = 1_000_000
    approx_rate: Callable = prob.iid_approx_rate

    def stream(self, *key) -> np.random.Generator:
        return np.random.default_rng([self.seed, *key])


@dataclass(frozen=True)
class Check:
    name: str
    param_set: str
    metric: str
    threshold: float
    run: Callable[[Context], float]
    upper: bool = True  # pass iff value <= threshold (else value >= threshold)

    def evaluate(self, ctx: Context) -> Row:
        value = float(self.run(ctx))
        ok = value <= self.threshold if self.upper else value >= self.threshold
        return Row(self.name, self.param_set, self.metric, value, self.threshold, bool(ok and math.isfinite(value)))


REGISTRY: list[Check] = []


def register(name, param_set, metric, threshold, upper=True):
    def deco(fn):
        REGISTRY.append(Check(name, param_set, metric, threshold, fn, upper))
        return fn
    return deco


# -- normalization ------------------------------------------------------------

@register("erlang_pdf_integral", "k=4;rate=32/7", "abs_error", 1e-6)
def _(ctx):
    p = ErlangParams(4, 32 / 7)
    return abs(oracles.integrate_density(lambda s: prob.erlang_pdf(p, s), points=[4 / p.rate]) - 1)


@register("erlang_pdf_integral", "k=50;rate=80", "abs_error", 1e-6)
def _(ctx):
    p = ErlangParams(50, 80.0)
    return abs(oracles.integrate_density(lambda s: prob.erlang_pdf(p, s), points=[50 / 80, 2.0]) - 1)


@register("hypoexp_pdf_integral", "rates=3,4,6,8", "abs_error", 1e-6)
def _(ctx):
    p = HypoExpParams(DEMO_RATES)
    return abs(oracles.integrate_density(lambda s: prob.hypoexp_pdf(p, s), points=[1.0]) - 1)


@register("hypoexp_convolution", "rates=1,2", "max_abs_diff", 1e-9)
def _(ctx):
    s = np.linspace(0, 20, 2001)
    return float(np.max(np.abs(prob.hypoexp_pdf(HypoExpParams((1.0, 2.0)), s) - oracles.two_rate_convolution(1, 2, s))))


@register("required_energy_pdf_integral", "theta=2", "abs_error", 1e-6)
def _(ctx):
    # u = 1/q maps the heavy tail onto a finite-mass integrand
    val = oracles.integrate_density(lambda u: prob.required_energy_pdf(2.0, 1 / u) / u**2, 0.0, np.inf, points=[0.5])
    return abs(val - 1)


@register("queue_count_pmf_sum", "k=50;lam=80;alpha=10", "abs_error", 1e-9)
def _(ctx):
    p = QueueCountParams(50, 80.0, 10.0)
    return abs(prob.queue_count_pmf(p, np.arange(0, 400)).sum() - 1)


@register("consumed_energy_pmf_sum", "alpha=10;t=0.625;q_max=7", "abs_error", 1e-9)
def _(ctx):
    n = prob.poisson_window(6.25)
    return abs(prob.consumed_energy_pmf(10, 0.625, 7, n * 7.0).sum() - 1)


@register("residual_pdf_integral", "k=50;mu=0.03;alpha=10;t=0.625;q_max=7", "abs_error", 1e-6)
def _(ctx):
    h, c = ErlangParams(50, 0.03), (10.0, 0.625, 7.0)
    return abs(oracles.integrate_density(lambda r: prob.residual_energy_pdf(h, c, r), -500.0, np.inf,
                                         points=[1000, 1666, 2500]) - 1)


# -- harvesting approximations ------------------------------------------------

@register("hypoexp_vs_erlang", "rates=3,4,6,8;erlang=(4,32/7)", "sup_cdf_distance", 0.05)
def _(ctx):
    hyp = HypoExpParams(DEMO_RATES)
    erl = ErlangParams(4, ctx.approx_rate(DEMO_RATES))
    grid = np.linspace(0, 6, 6001)
    return oracles.sup_cdf_distance(lambda s: prob.hypoexp_cdf(hyp, s), lambda s: prob.erlang_cdf(erl, s), grid)


def _gap_probability(ctx, delta):
    s, q = oracles.coupled_gap_samples(DEMO_RATES, ctx.samples, ctx.stream(2, int(delta * 100)), ctx.approx_rate)
    return float(np.mean(np.abs(s - q) >= delta**2))


for _delta in (1.0, 2.0):
    register(
        "gap_stated_bound", f"rates=3,4,6,8;delta={_delta:g}", "mc_probability",
        prob.chebyshev_gap_bound(DEMO_RATES, _delta),
    )(lambda ctx, d=_delta: _gap_probability(ctx, d))

# Below delta = 1 the stated bound is tighter than Chebyshev allows for a
# gap of delta**2; check the variance / delta**4 form there instead.
register(
    "gap_chebyshev", "rates=3,4,6,8;delta=0.5", "mc_probability",
    min(1.0, len(DEMO_RATES) * prob.mean_spread(DEMO_RATES) / 0.5**4),
)(lambda ctx: _gap_probability(ctx, 0.5))


@register("gap_mean_match", "rates=3,4,6,8", "abs_mean_gap_in_se", 4.0)
def _(ctx):
    s, q = oracles.coupled_gap_samples(DEMO_RATES, ctx.samples, ctx.stream(3), ctx.approx_rate)
    d = s - q
    return abs(d.mean()) / (d.std(ddof=1) / math.sqrt(len(d)))


@register("erlang_normal_approx", "k=45..200;rate=1", "max_sup_cdf_distance", 0.02)
def _(ctx):
    worst = 0.0
    for k in range(45, 201):
        p, nrm = ErlangParams(k, 1.0), prob.erlang_normal(k, 1.0)
        grid = np.linspace(max(0.0, k - 8 * math.sqrt(k)), k + 8 * math.sqrt(k), 4001)
        worst = max(worst, oracles.sup_cdf_distance(lambda s: prob.erlang_cdf(p, s), nrm.cdf, grid))
    return worst


# -- consumption and residual -------------------------------------------------

@register("queue_count_vs_mc", "k=50;lam=80;alpha=10", "total_variation", 0.005)
def _(ctx):
    p = QueueCountParams(50, 80.0, 10.0)
    support = np.arange(0, 200)
    draws = oracles.queue_count_samples(50, 80.0, 10.0, ctx.samples, ctx.stream(4))
    return oracles.total_variation(draws, prob.queue_count_pmf(p, support), support)


@register("queue_count_vs_mc", "k=1;lam=1;alpha=1", "total_variation", 0.005)
def _(ctx):
    p = QueueCountParams(1, 1.0, 1.0)
    support = np.arange(0, 200)
    draws = oracles.queue_count_samples(1, 1.0, 1.0, ctx.samples, ctx.stream(5))
    return oracles.total_variation(draws, prob.queue_count_pmf(p, support), support)


@register("required_energy_vs_channel_mc", "F=0.9;G=0.8;N0=1;I=1;r_min=0.5", "ks_distance", 0.01)
def _(ctx):
    link = LinkModel(0.9, 0.8, 1.0, 1.0, 0.5)
    gains = ctx.stream(6).exponential(1 / beta(link), ctx.samples // 10)
    q = np.fromiter((required_energy(g, link) for g in gains), float, len(gains))
    return oracles.ks_distance(q, lambda x: prob.required_energy_cdf(theta(link), np.maximum(x, 0)))


@register("residual_vs_mc", "k=50;mu=0.03;alpha=10;t=0.625;q_max=7", "ks_distance", 0.01)
def _(ctx):
    h, c = ErlangParams(50, 0.03), (10.0, 0.625, 7.0)
    draws = oracles.residual_samples(50, 0.03, 10.0, 0.625, 7.0, ctx.samples, ctx.stream(7))
    return oracles.ks_distance(draws, lambda r: prob.residual_energy_cdf(h, c, r))


@register("residual_vs_mc", "k=40;mu=0.5;alpha=15;t=2;q_max=6", "ks_distance", 0.01)
def _(ctx):
    h, c = ErlangParams(40, 0.5), (15.0, 2.0, 6.0)
    draws = oracles.residual_samples(40, 0.5, 15.0, 2.0, 6.0, ctx.samples, ctx.stream(8))
    # R sits on a lattice shifted by a continuous Erlang; still continuous
    return oracles.ks_distance(draws, lambda r: prob.residual_energy_cdf(h, c, r))


# -- success probability ------------------------------------------------------

_SUCCESS_CASES = (  # mu, alpha, theta, t, k, q_max
    (0.03, 10.0, 1.0, 50 / 80, 50, 7.0),
    (0.12, 15.0, 5.0, 2 * 40 / 130, 40, 6.0),
    (1.0, 12.0, 2.0, 1.0, 30, 4.0),
    (2.0, 10.0, 0.5, 1.5, 40, 2.0),
)


def _fmt_case(c):
    return "mu={:g};alpha={:g};theta={:g};t={:.6g};k={:d};q_max={:g}".format(*c)


for _i, _case in enumerate(_SUCCESS_CASES):
    def _bound_gap(ctx, c=_case, i=_i):
        p, se = oracles.success_mc(*c, ctx.samples, ctx.stream(10, i))
        return (prob.success_prob_lower_bound(*c) - p) / se

    def _numeric_gap(ctx, c=_case, i=_i):
        p, se = oracles.success_mc(*c, ctx.samples, ctx.stream(10, i))
        return abs(prob.success_prob_numeric(*c) - p) / se

    register("success_bound_below_mc", _fmt_case(_case), "excess_in_se", 3.0)(_bound_gap)
    register("success_numeric_vs_mc", _fmt_case(_case), "abs_gap_in_se", 3.0)(_numeric_gap)


@register("success_quad_vs_legendre", "table1 rows x theta in 0.5,1,2,5", "max_abs_diff", 1e-6)
def _(ctx):
    worst = 0.0
    for lam, mu, alpha, q_max, k in TABLE1_ROWS:
        for th in (0.5, 1.0, 2.0, 5.0):
            args = (mu, alpha, th, k / lam, k, q_max)
            worst = max(worst, abs(prob.success_prob_numeric(*args) - prob.success_prob_numeric(*args, method="legendre")))
    return worst


# -- driver -------------------------------------------------------------------

def run_checks(ctx: Optional[Context] = None, checks: Iterable[Check] = None) -> list[Row]:
    ctx = ctx or Context()
    return [c.evaluate(ctx) for c in (REGISTRY if checks is None else checks)]


def write_report(rows: list[Row], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r.as_csv())


def wrong_harmonic_mean(rates) -> float:
    """Arithmetic instead of harmonic mean; the mutation the checks must catch."""
    return float(np.mean(np.asarray(rates, dtype=float)))


FAULTS = {"wrong-harmonic-mean": wrong_harmonic_mean}
