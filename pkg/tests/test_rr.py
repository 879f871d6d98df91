import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from privacy_odometer import AccountState, BasicFilter, BasicOdometer, FilterBudget, PrivacyEvent, fold
from privacy_odometer.adversaries import CallbackAdversary, ConstantAdversary
from privacy_odometer.rr import (
    RROutcome,
    loss_increments,
    outcome_loss,
    rr_distribution,
    rr_sample,
    run_filter_game,
    run_game,
)

from oracles import enumerate_walks, mp_rr_probabilities

ORDER = (RROutcome.ZERO, RROutcome.TOP, RROutcome.BOT, RROutcome.ONE)
GRID = [(eps, delta, b) for eps in (0.0, 0.01, math.log(2), 2.5, 8.0) for delta in (0.0, 0.3) for b in (0, 1)]


@pytest.mark.parametrize("eps,delta,b", GRID + [(0.5, 1.0, 0), (0.5, 1.0, 1), (0.0, 0.999999, 0), (1.0, 1e-300, 1)])
def test_distribution_matches_oracle(eps, delta, b):
    dist = rr_distribution(eps, delta, b)
    oracle = mp_rr_probabilities(eps, delta, b)
    for outcome, expected in zip(ORDER, oracle):
        assert dist[outcome] == pytest.approx(float(expected), rel=1e-14, abs=1e-300)
    assert math.fsum(dist.values()) == pytest.approx(1.0, abs=1e-15)


def test_distribution_example():
    dist = rr_distribution(math.log(2), 0.0, 0)
    assert dist[RROutcome.TOP] == pytest.approx(2 / 3) and dist[RROutcome.BOT] == pytest.approx(1 / 3)
    assert rr_distribution(0.7, 1.0, 0) == {RROutcome.ZERO: 1.0, RROutcome.TOP: 0.0, RROutcome.BOT: 0.0, RROutcome.ONE: 0.0}


def test_distribution_rejects_bad_input():
    with pytest.raises(ValueError):
        rr_distribution(-0.1, 0.0, 0)
    with pytest.raises(ValueError):
        rr_distribution(0.1, 1.5, 0)
    with pytest.raises(ValueError):
        rr_distribution(0.1, 0.0, 2)


@pytest.mark.parametrize("eps,delta,b", [(0.4, 0.1, 0), (1.5, 0.05, 1), (0.0, 0.5, 0)])
def test_sampler_goodness_of_fit(eps, delta, b):
    rng = np.random.default_rng(11)
    codes = rr_sample(eps, delta, b, rng, size=200_000)
    dist = rr_distribution(eps, delta, b)
    support = [o for o in ORDER if dist[o] > 0]
    observed = [np.sum(codes == int(o)) for o in support]
    assert sum(observed) == codes.size
    expected = [dist[o] * codes.size for o in support]
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_sampler_scalar_and_broadcast():
    rng = np.random.default_rng(0)
    assert isinstance(rr_sample(0.1, 0.0, 0, rng), RROutcome)
    assert rr_sample(np.array([0.1, 0.2]), 0.0, 0, rng).shape == (2,)
    assert rr_sample(0.1, 0.0, 0, rng, size=(3, 2)).shape == (3, 2)
    assert rr_sample(0.1, 1.0, 1, rng) is RROutcome.ONE


def test_outcome_loss_is_log_ratio():
    for eps, delta in [(0.3, 0.0), (0.3, 0.2), (2.0, 1e-5)]:
        p0 = rr_distribution(eps, delta, 0)
        p1 = rr_distribution(eps, delta, 1)
        for o in (RROutcome.TOP, RROutcome.BOT):
            assert outcome_loss(eps, delta, o) == pytest.approx(math.log(p0[o] / p1[o]), rel=1e-12)
        assert outcome_loss(eps, delta, RROutcome.ZERO) == math.inf
        assert outcome_loss(eps, delta, RROutcome.ONE) == -math.inf


def test_loss_increments_vectorized():
    codes = np.array([0, 1, 2, 3])
    eps = np.array([0.1, 0.2, 0.3, 0.4])
    assert list(loss_increments(eps, codes)) == [math.inf, 0.2, -0.3, -math.inf]


@pytest.mark.parametrize("k", range(1, 11))
def test_brute_force_walks(k):
    schedule = [(0.1, 0.3)[i % 2] for i in range(k)]
    odo = BasicOdometer(0.0)
    state = fold(PrivacyEvent(e) for e in schedule)
    total0 = mp.mpf(0)
    for signs, p0, p1 in enumerate_walks(schedule):
        loss = math.fsum(s * e for s, e in zip(signs, schedule))
        # per-round log-ratios add up to the path log-ratio
        assert float(mp.log(p0 / p1)) == pytest.approx(loss, abs=1e-12)
        incs = loss_increments(np.array(schedule), np.array([1 if s == 1 else 2 for s in signs]))
        assert math.fsum(incs) == loss
        running = np.cumsum(incs)
        prefix = np.cumsum(schedule)
        assert np.all(np.abs(running) <= prefix + 1e-15)
        assert abs(loss) <= float(odo.bound(state)) + 1e-15
        total0 += p0
    assert float(total0) == pytest.approx(1.0, abs=1e-40)


def test_run_game_is_reproducible():
    adv = ConstantAdversary(0.1, rounds=20)
    a = run_game(adv, 50, 0, np.random.default_rng(5))
    b = run_game(adv, 50, 0, np.random.default_rng(5))
    assert a.to_jsonl() == b.to_jsonl()
    assert a.stop_round == 20 and len(a.records) == 20
    assert a.final_state == fold([PrivacyEvent(0.1)] * 20)
    assert a.final_loss == pytest.approx(a.losses[-1])
    lines = [json.loads(line) for line in a.to_jsonl().splitlines()]
    assert lines[-1]["loss_cumulative"] == pytest.approx(a.final_loss)


def test_run_game_stops_on_zero_event():
    trace = run_game(ConstantAdversary(0.1, rounds=0), 10, 0, np.random.default_rng(0))
    assert trace.records == [] and trace.final_loss == 0.0 and trace.final_state == AccountState()


def test_filter_game_rejects_and_stops():
    filt = BasicFilter(FilterBudget(0.25, 0.01))
    trace = run_filter_game(ConstantAdversary(0.1), filt, 10, 0, np.random.default_rng(0))
    assert trace.stop_round == 2
    assert trace.rejected == PrivacyEvent(0.1)
    last = json.loads(trace.to_jsonl().splitlines()[-1])
    assert last["round"] == 3 and last["outcome"] is None


def test_callback_adversary_sees_history():
    seen = []

    def strategy(history, round_, rng):
        seen.append(tuple(history))
        if round_ > 3:
            return None
        return PrivacyEvent(0.5 if history and history[-1] is RROutcome.TOP else 0.1)

    trace = run_game(CallbackAdversary(strategy), 10, 0, np.random.default_rng(3))
    assert trace.stop_round == 3
    for i, rec in enumerate(trace.records[1:], start=1):
        expected = 0.5 if trace.records[i - 1].outcome is RROutcome.TOP else 0.1
        assert rec.event.eps == expected
    assert seen[3] == tuple(r.outcome for r in trace.records)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 1))
def test_game_losses_are_pm_eps_walks(seed, b):
    trace = run_game(ConstantAdversary(0.2, rounds=15), 15, b, np.random.default_rng(seed))
    assert set(np.round(np.abs(trace.increments), 12)) <= {0.2}
