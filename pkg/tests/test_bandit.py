import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from harvest_assoc import bandit
from harvest_assoc.bandit import UNIFORM, ExpertBank, Exp4SB, SuperAction


def mask(*awake, n=3):
    m = np.zeros(n, dtype=bool)
    m[list(awake)] = True
    return m


# -- experts ----------------------------------------------------------------------

@pytest.mark.parametrize("m,count", [(1, 2), (2, 3), (5, 121), (8, 40321)])
def test_expert_count(m, count):
    assert len(bandit.enumerate_experts(m)) == count


def test_experts_lexicographic_after_uniform():
    ex = bandit.enumerate_experts(3)
    assert ex[0] is UNIFORM
    assert ex[1:] == sorted(ex[1:])
    assert ex[1] == (0, 1, 2) and ex[-1] == (2, 1, 0)


def test_expert_cap():
    with pytest.raises(ValueError, match="factorial"):
        bandit.enumerate_experts(9)


def test_ordering_advice_skips_sleeping_arm():
    # ranking (2, 1, 3) in 1-based ids; arm 2 asleep so arm 1 wins
    np.testing.assert_array_equal(bandit.expert_advice((1, 0, 2), mask(0, 2)), [1, 0, 0])
    np.testing.assert_array_equal(bandit.expert_advice((1, 0, 2), mask(1)), [0, 1, 0])


def test_uniform_advice_spans_all_arms():
    np.testing.assert_allclose(bandit.expert_advice(UNIFORM, mask(0)), [1 / 3] * 3)


def test_advice_needs_an_awake_arm():
    with pytest.raises(ValueError):
        bandit.expert_advice((0, 1, 2), np.zeros(3, dtype=bool))


# -- mixing ---------------------------------------------------------------------------

def test_mix_equal_weights_two_arms():
    np.testing.assert_allclose(bandit.mix_probabilities(ExpertBank(2, 0.05), [True, True]), [0.5, 0.5])


def test_mix_all_mass_on_one_expert():
    bank = ExpertBank(4, 0.05)
    lw = np.full(bank.n_experts, -1e4)
    target = [i for i, o in enumerate(bank.orders) if o[0] == 2][0] + 1
    lw[target] = 0.0
    bank.log_weights = lw
    a = bandit.mix_probabilities(bank, np.ones(4, dtype=bool))
    assert a[2] == pytest.approx(1 - 0.05 + 0.05 / 4, abs=1e-12)


def brute_mix(bank, avail):
    """Direct transcription of the mixing rule over every expert."""
    w = bank.weights
    experts = bandit.enumerate_experts(bank.n_arms)
    b = np.array([bandit.expert_advice(e, avail) for e in experts])
    return (1 - bank.gamma) * (w @ b) / w.sum() + bank.gamma / bank.n_arms


@given(st.integers(2, 5), st.data())
@settings(max_examples=40, deadline=None)
def test_mix_matches_brute_force_and_floor(m, data):
    bank = ExpertBank(m, data.draw(st.floats(0.01, 1.0)))
    lw = data.draw(st.lists(st.floats(-30, 30), min_size=bank.n_experts, max_size=bank.n_experts))
    bank.log_weights = lw
    avail = np.array(data.draw(st.lists(st.booleans(), min_size=m, max_size=m)))
    if not avail.any():
        avail[0] = True
    a = bandit.mix_probabilities(bank, avail)
    np.testing.assert_allclose(a, brute_mix(bank, avail), rtol=1e-9, atol=1e-12)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)
    assert a.min() >= bank.gamma / m - 1e-15


def test_mix_invariant_to_common_weight_scaling():
    rng = np.random.default_rng(0)
    bank = ExpertBank(4, 0.1)
    lw = rng.normal(size=bank.n_experts)
    bank.log_weights = lw
    before = bandit.mix_probabilities(bank, mask(0, 2, 3, n=4))
    bank.log_weights = lw + 123.0
    np.testing.assert_allclose(bandit.mix_probabilities(bank, mask(0, 2, 3, n=4)), before, rtol=1e-12)


def test_log_weights_view_is_read_only():
    bank = ExpertBank(3)
    with pytest.raises(ValueError):
        bank.log_weights[0] = 1.0


# -- sampling -------------------------------------------------------------------------

def test_sample_degenerate_distribution():
    rng = np.random.default_rng(0)
    assert {bandit.sample_action([1.0, 0.0, 0.0], mask(0, 1, 2), rng) for _ in range(100)} == {0}


def test_sample_frequencies_match():
    rng = np.random.default_rng(1)
    a = np.array([0.1, 0.2, 0.3, 0.4])
    avail = np.ones(4, dtype=bool)
    n = 1_000_000
    counts = np.bincount([bandit.sample_action(a, avail, rng) for _ in range(n)], minlength=4)
    assert 0.5 * np.abs(counts / n - a).sum() <= 0.002


def test_sample_never_plays_sleeping_arm():
    rng = np.random.default_rng(2)
    a = np.array([0.7, 0.1, 0.1, 0.1])
    avail = mask(1, 3, n=4)
    draws = np.array([bandit.sample_action(a, avail, rng) for _ in range(20_000)])
    assert set(np.unique(draws)) == {1, 3}
    assert np.mean(draws == 1) == pytest.approx(0.5, abs=0.02)


def test_sample_deterministic():
    f = lambda s: [bandit.sample_action([0.3, 0.3, 0.4], mask(0, 1, 2), np.random.default_rng(s)) for _ in range(5)]
    assert f(9) == f(9)


# -- update ---------------------------------------------------------------------------

def test_zero_reward_leaves_weights_bitwise():
    bank = ExpertBank(4, 0.05)
    bank.log_weights = np.random.default_rng(3).normal(size=bank.n_experts)
    before = bank.log_weights.copy()
    a = bandit.mix_probabilities(bank, np.ones(4, dtype=bool))
    bandit.update(bank, 1, 0.0, a, np.ones(4, dtype=bool))
    assert before.tobytes() == bank.log_weights.tobytes()


def test_unit_reward_multiplies_advising_experts():
    bank = ExpertBank(3, 0.05)
    avail = mask(0, 2)
    a = bandit.mix_probabilities(bank, avail)
    bandit.update(bank, 2, 1.0, a, avail)
    w = bank.weights
    gamma, m = 0.05, 3
    for i, order in enumerate(bank.orders, start=1):
        advises = bandit.top_available(order, avail) == 2
        expected = math.exp(gamma / (m * a[2])) if advises else 1.0
        assert w[i] == pytest.approx(expected, rel=1e-12)
    assert w[0] == pytest.approx(math.exp(gamma / (m * m * a[2])), rel=1e-12)


def test_update_rejects_bad_inputs():
    bank = ExpertBank(2)
    with pytest.raises(ValueError):
        bandit.update(bank, 0, 1.5, [0.5, 0.5], [True, True])
    with pytest.raises(ValueError):
        bandit.update(bank, 0, 1.0, [0.0, 1.0], [True, True])


def test_long_horizon_weights_stay_finite():
    bank = ExpertBank(3, 0.5)
    avail = mask(0, 1, 2)
    for _ in range(20_000):
        a = bandit.mix_probabilities(bank, avail)
        bandit.update(bank, 0, 1.0, a, avail)
    assert np.all(np.isfinite(bank.log_weights))
    # all expert mass ends on arm 0: (1 - gamma) + gamma / M = 2/3
    assert bandit.mix_probabilities(bank, avail)[0] == pytest.approx(2 / 3, abs=1e-9)


def test_converges_to_the_only_rewarding_arm():
    est = Exp4SB(n_arms=4, gamma=0.05, random_state=0)
    avail = np.ones(4, dtype=bool)
    for _ in range(5000):
        arm, a = est.choose(avail)
        est.observe(arm, 1.0 if arm == 2 else 0.0, a, avail)
    assert est.predict_proba([avail])[0, 2] > 1 - 0.05 - 0.05


# -- super-actions --------------------------------------------------------------------

def test_super_availability():
    avail = mask(0, 1, 2, n=4)
    assert bandit.super_availability(SuperAction((0, 1)), avail)
    assert not bandit.super_availability(SuperAction((0, 3)), avail)
    for m in range(4):
        assert bandit.super_availability(SuperAction((m,)), avail) == avail[m]


def test_super_reward():
    s = SuperAction((0, 1))
    assert bandit.super_reward(s, [1, 0]) == 1 and bandit.super_reward(s, [1, 0], rescale=True) == 0.5
    assert bandit.super_reward(s, [1, 1]) == 2 and bandit.super_reward(s, [1, 1], rescale=True) == 1.0
    assert bandit.super_reward(SuperAction((3,)), [1], rescale=True) == 1
    with pytest.raises(ValueError):
        bandit.super_reward(s, [1])


def test_super_actions_pairs_of_four():
    acts = bandit.super_actions(range(4), 2)
    assert [a.label() for a in acts] == ["1+2", "1+3", "1+4", "2+3", "2+4", "3+4"]
    with pytest.raises(ValueError):
        SuperAction((1, 1))


# -- hindsight --------------------------------------------------------------------------

def brute_hindsight(masks, rewards):
    best = None
    for order in itertools.permutations(range(masks.shape[1])):
        total = sum(r[bandit.top_available(order, m)] for m, r in zip(masks, rewards))
        if best is None or total > best[1]:
            best = (order, total)
    return best


def random_trace(rng, n, m):
    masks = rng.random((n, m)) < 0.6
    masks[~masks.any(axis=1), 0] = True
    rewards = (rng.random((n, m)) < rng.random(m)).astype(float)
    return masks, rewards


def test_hindsight_single_arm():
    r = np.array([[1.0], [0.0], [1.0]])
    assert bandit.hindsight_best_ordering(np.ones((3, 1), bool), r) == ((0,), 2.0)


def test_hindsight_always_rewarding_arm_first():
    rng = np.random.default_rng(4)
    masks, rewards = random_trace(rng, 200, 3)
    masks[:, 1] = True
    rewards[:, 1] = 1.0
    order, total = bandit.hindsight_best_ordering(masks, rewards)
    assert order[0] == 1 and total == 200


@pytest.mark.parametrize("seed", range(5))
def test_hindsight_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    masks, rewards = random_trace(rng, 300, 3 + seed % 2)
    order, total = bandit.hindsight_best_ordering(masks, rewards)
    b_order, b_total = brute_hindsight(masks, rewards)
    assert total == b_total and order == b_order


def test_hindsight_curve_prefixes():
    rng = np.random.default_rng(7)
    masks, rewards = random_trace(rng, 120, 4)
    cps = [1, 10, 60, 120]
    curve = bandit.hindsight_curve(masks, rewards, cps)
    for c, v in zip(cps, curve):
        assert v == brute_hindsight(masks[:c], rewards[:c])[1]


def test_hindsight_needs_counterfactuals():
    masks = np.ones((2, 2), bool)
    rewards = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ValueError, match="missing"):
        bandit.hindsight_best_ordering(masks, rewards)


def test_hindsight_rejects_bad_checkpoints():
    masks, rewards = np.ones((3, 2), bool), np.zeros((3, 2))
    with pytest.raises(ValueError):
        bandit.hindsight_curve(masks, rewards, [2, 1])
    with pytest.raises(ValueError):
        bandit.hindsight_curve(masks, rewards, [4])


# -- estimator ------------------------------------------------------------------------

def test_estimator_params_and_clone():
    est = Exp4SB(n_arms=5, gamma=0.1, random_state=3)
    assert est.get_params() == {"n_arms": 5, "gamma": 0.1, "reward_scale": 1.0, "max_arms": 8, "random_state": 3}
    c = clone(est)
    assert c.get_params() == est.get_params() and not hasattr(c, "bank_")


def test_estimator_fit_is_replayable():
    rng = np.random.default_rng(5)
    X, R = random_trace(rng, 500, 4)
    actions = np.array([rng.choice(np.flatnonzero(m)) for m in X])
    rewards = R[np.arange(len(X)), actions]
    a = Exp4SB(n_arms=4).fit(X, actions, rewards)
    b = Exp4SB(n_arms=4).fit(X, actions, rewards)
    np.testing.assert_array_equal(a.bank_.log_weights, b.bank_.log_weights)
    np.testing.assert_allclose(a.predict_proba(X[:5]).sum(axis=1), 1.0)
    pred = Exp4SB(n_arms=4, random_state=0).fit(X, actions, rewards).predict(X)
    assert np.all(X[np.arange(len(X)), pred])


def test_estimator_partial_fit_equals_fit():
    rng = np.random.default_rng(6)
    X, R = random_trace(rng, 100, 3)
    actions = np.array([np.flatnonzero(m)[0] for m in X])
    rewards = R[np.arange(100), actions]
    full = Exp4SB(n_arms=3).fit(X, actions, rewards)
    part = Exp4SB(n_arms=3).partial_fit(X[:40], actions[:40], rewards[:40]).partial_fit(X[40:], actions[40:], rewards[40:])
    np.testing.assert_allclose(full.bank_.log_weights, part.bank_.log_weights, rtol=1e-12)


def test_estimator_input_errors():
    est = Exp4SB(n_arms=3)
    with pytest.raises(ValueError, match="not available"):
        est.fit([[1, 0, 0]], [1], [1.0])
    with pytest.raises(ValueError):
        est.fit([[1, 0, 0]], [0, 0], [1.0])
    with pytest.raises(ValueError):
        est.predict_proba([[0, 0, 0]])
    with pytest.raises(ValueError):
        est.predict_proba([[1, 0]])


def test_reward_scale_keeps_updates_bounded():
    est = Exp4SB(n_arms=3, reward_scale=2.0)
    avail = np.ones(3, dtype=bool)
    arm, a = est.choose(avail)
    est.observe(arm, 2.0, a, avail)
    with pytest.raises(ValueError):
        est.observe(arm, 2.5, a, avail)


def test_best_ordering_reports_leader():
    est = Exp4SB(n_arms=3, random_state=1)
    avail = np.ones(3, dtype=bool)
    for _ in range(3000):
        arm, a = est.choose(avail)
        est.observe(arm, float(arm == 1), a, avail)
    assert est.best_ordering()[0] == 1
