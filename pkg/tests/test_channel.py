import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from harvest_assoc import channel, oracles, prob
from harvest_assoc.channel import GainSample, LinkModel


def test_beta_unit_gains():
    assert channel.beta(LinkModel(1.0, 1.0)) == 1.0


def test_beta_table_entry():
    assert channel.beta(LinkModel(0.9, 0.8)) == pytest.approx(1 / 0.72, rel=1e-12)


def test_beta_zero_gain_rejected():
    with pytest.raises(ValueError, match="zero average gain"):
        channel.beta(LinkModel(0.0, 1.0))


@pytest.mark.parametrize("kw", [{"noise_power": 0.0}, {"interference": -1.0}, {"min_rate": -0.1}])
def test_link_model_validation(kw):
    with pytest.raises(ValueError):
        LinkModel(1.0, 1.0, **kw)


def test_sample_gain_moments():
    rng = np.random.default_rng(12)
    draws = np.array([channel.sample_gain_sq(2.0, rng).gain_sq for _ in range(200_000)])
    assert draws.mean() == pytest.approx(0.5, abs=0.004)
    assert draws.var() == pytest.approx(0.25, abs=0.01)


def test_sample_gain_deterministic_per_stream():
    a = channel.sample_gain_sq(1.3, np.random.default_rng(99))
    b = channel.sample_gain_sq(1.3, np.random.default_rng(99))
    assert a == b


def test_gain_sample_must_be_positive():
    with pytest.raises(ValueError):
        GainSample(0.0)


def test_rate_values():
    link = LinkModel(1.0, 1.0, noise_power=1.0)
    assert channel.rate(0.0, GainSample(1.0), link) == 0.0
    assert channel.rate(1.0, GainSample(1.0), link) == pytest.approx(math.log(2), rel=1e-15)
    with pytest.raises(ValueError):
        channel.rate(-1.0, GainSample(1.0), link)


def test_required_energy_values():
    assert channel.required_energy(GainSample(1.0), LinkModel(1, 1, 1.0, 0.0, 0.0)) == 0.0
    assert channel.required_energy(GainSample(1.0), LinkModel(1, 1, 1.0, 0.0, math.log(2))) == pytest.approx(1.0)
    link = LinkModel(1, 1, 1.0, 2.0, 0.5)
    assert channel.required_energy(GainSample(0.5), link) == pytest.approx(2 * channel.required_energy(GainSample(1.0), link))


@given(st.floats(1e-6, 1e3), st.floats(0.01, 5.0), st.floats(0.0, 10.0), st.floats(0.01, 3.0))
def test_rate_inverts_required_energy(g, n0, interference, r_min):
    link = LinkModel(1.0, 1.0, n0, interference, r_min)
    q = channel.required_energy(GainSample(g), link)
    assert channel.rate(q, GainSample(g), link) == pytest.approx(r_min, rel=1e-12)


def test_theta_values():
    assert channel.theta(LinkModel(1, 1, 1.0, 0.0, 0.0)) == 0.0
    assert channel.theta(LinkModel(1, 1, 1.0, 1.0, math.log(2))) == pytest.approx(2.0)
    assert channel.theta(LinkModel(0.9, 0.8, 1.0, 1.0, 0.5)) > 0


def test_required_energy_distribution_matches_model():
    link = LinkModel(0.9, 0.8, 1.0, 1.0, 0.5)
    rng = np.random.default_rng(21)
    q = [channel.required_energy(channel.sample_gain_sq(channel.beta(link), rng), link) for _ in range(100_000)]
    assert oracles.ks_distance(q, lambda x: prob.required_energy_cdf(channel.theta(link), np.maximum(x, 1e-300))) <= 0.01


def test_block_fading_reuses_gain():
    link = LinkModel(0.5, 0.4, 1.0, 2.0, 0.5)
    g = channel.sample_gain_sq(channel.beta(link), np.random.default_rng(3))
    assert channel.required_energy(g, link) == channel.required_energy(g, link)
