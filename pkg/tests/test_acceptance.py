"""Acceptance criteria, one test each, printing a PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are written
straight to the terminal so they show up even with output capture enabled.
"""

import io
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from privacy_odometer import (
    AdvancedFilter,
    AdvancedOdometer,
    FilterBudget,
    OdometerConfig,
    PrivacyEvent,
    advanced_filter,
    advanced_filter_bound,
    advanced_odometer,
    beta_odometer,
    fold,
    self_normalized_bound,
    wrap_delta_reduction,
)
from privacy_odometer.adversaries import (
    ConstantAdversary,
    GeometricDecayAdversary,
    LuckyStreakAdversary,
    RandomEpsAdversary,
)
from privacy_odometer.cli import main
from privacy_odometer.montecarlo import (
    Target,
    concentration_exceedance,
    run_audit,
    stopping_time_separation,
    wilson_interval,
)
from privacy_odometer.rr import RROutcome, rr_distribution, rr_sample
from privacy_odometer.suites import load_suite

from oracles import (
    mp_advanced_odometer,
    mp_beta_odometer,
    mp_filter_statistic,
    mp_rr_probabilities,
    mp_self_normalized,
)

GOLDEN = Path(__file__).parent / "golden"
ORDER = (RROutcome.ZERO, RROutcome.TOP, RROutcome.BOT, RROutcome.ONE)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


def test_criterion_1_exact_randomized_response(report):
    combos = [
        (0.0, 0.0, 0), (0.0, 0.0, 1), (0.0, 0.5, 0), (0.0, 1.0, 1),
        (1e-9, 0.0, 0), (0.1, 0.0, 1), (math.log(2), 0.0, 0), (0.5, 0.1, 0),
        (0.5, 0.1, 1), (1.0, 1e-6, 0), (1.0, 1e-6, 1), (2.0, 0.3, 1),
        (3.0, 0.999999, 0), (3.0, 1.0, 0), (3.0, 1.0, 1), (5.0, 0.0, 1),
        (10.0, 0.01, 0), (20.0, 0.2, 1), (0.25, 0.75, 0), (40.0, 1e-12, 1),
    ]
    worst = 0.0
    for eps, delta, b in combos:
        dist = rr_distribution(eps, delta, b)
        for outcome, expected in zip(ORDER, mp_rr_probabilities(eps, delta, b)):
            expected = float(expected)
            err = abs(dist[outcome] - expected) / expected if expected else abs(dist[outcome])
            worst = max(worst, err)
    exact_ok = worst <= 1e-14

    rng = np.random.default_rng(20260101)
    p_values = []
    for eps, delta, b in [(0.5, 0.1, 0), (1.0, 1e-2, 1), (0.1, 0.0, 0), (2.0, 0.3, 1)]:
        codes = rr_sample(eps, delta, b, rng, size=1_000_000)
        dist = rr_distribution(eps, delta, b)
        support = [o for o in ORDER if dist[o] > 0]
        observed = [int(np.sum(codes == int(o))) for o in support]
        p_values.append(stats.chisquare(observed, [dist[o] * codes.size for o in support]).pvalue)
    fit_ok = min(p_values) > 0.001
    ok = report(1, exact_ok and fit_ok, f"max rel err {worst:.2e} over 20 combos; min chi2 p = {min(p_values):.4f} (need > 0.001)")
    assert ok


def test_criterion_2_brute_force_walks(report):
    checked = 0
    worst = 0.0
    violated = False
    levels = np.array([0.1, 0.3])
    for k in range(1, 11):
        idx = np.arange(2**k)
        bits = (idx[:, None] >> np.arange(k)) & 1
        schedules = levels[bits]  # every schedule over {0.1, 0.3}
        signs = np.where(bits, 1.0, -1.0)  # every top/bot path
        eps = np.repeat(schedules, 2**k, axis=0)
        sgn = np.tile(signs, (2**k, 1))
        big = 1 / (1 + np.exp(-eps))
        small = 1 / (1 + np.exp(eps))
        p0 = np.where(sgn > 0, big, small)
        p1 = np.where(sgn > 0, small, big)
        log_ratio = np.cumsum(np.log(p0 / p1), axis=1)
        walk = np.cumsum(sgn * eps, axis=1)
        worst = max(worst, float(np.max(np.abs(log_ratio - walk))))
        basic = np.cumsum(eps, axis=1)
        violated |= bool(np.any(np.abs(walk) > basic * (1 + 1e-15)))
        checked += eps.shape[0]
    ok = report(2, worst <= 1e-12 and not violated, f"{checked} (schedule, outcome) paths, max |log-ratio - walk| = {worst:.1e}, basic odometer violated: {violated}")
    assert ok


def test_criterion_3_formula_oracles(report):
    rng = np.random.default_rng(3)
    worst = {"filter": 0.0, "beta": 0.0, "advanced": 0.0, "self-normalized": 0.0}

    def rel(a, b):
        return abs(a - b) / abs(b)

    for i in range(100):
        k = int(rng.integers(0, 60))
        schedule = list(10 ** rng.uniform(-4, 0, size=k) * (0.4 if i % 3 else 1.0))
        delta_g = float(10 ** rng.uniform(-9, math.log10(0.35)))
        eps_g = float(10 ** rng.uniform(-1, 1))
        beta = float(10 ** rng.uniform(-6, 1))
        n = int(2 ** rng.integers(1, 31))
        state = fold(PrivacyEvent(e) for e in schedule)
        worst["filter"] = max(worst["filter"], rel(advanced_filter_bound(state, FilterBudget(eps_g, delta_g)), float(mp_filter_statistic(schedule, eps_g, delta_g))))
        worst["beta"] = max(worst["beta"], rel(beta_odometer(state, delta_g, beta), float(mp_beta_odometer(schedule, delta_g, beta))))
        worst["advanced"] = max(worst["advanced"], rel(advanced_odometer(state, OdometerConfig(delta_g, n=n)).bound, float(mp_advanced_odometer(schedule, delta_g, n))))
        u_sq = float(10 ** rng.uniform(-8, 3)) if i else 0.0
        delta = float(10 ** rng.uniform(-12, math.log10(1 / math.e)))
        worst["self-normalized"] = max(worst["self-normalized"], rel(self_normalized_bound(u_sq, beta, delta), float(mp_self_normalized(u_sq, beta, delta))))
    ok = all(v <= 1e-12 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert report(3, ok, f"max rel err on 100-point grid (need <= 1e-12): {detail}")


def test_criterion_4_filter_near_optimality(report):
    k, delta_g = 4096, 1e-6
    log_term = math.log(1 / delta_g)
    eps = math.sqrt(1 / (8 * log_term * k))
    eps_g = eps * math.sqrt(8 * k * log_term)
    state = fold([PrivacyEvent(eps)] * k)
    at_budget = advanced_filter(state, FilterBudget(eps_g, delta_g))
    tighter = advanced_filter(state, FilterBudget(0.9 * eps_g, delta_g))
    ok = not at_budget.halted and tighter.halted
    detail = (
        f"eps_g = {eps_g:.6f}: {at_budget.verdict.value} (K = {at_budget.bound_value:.6f}); "
        f"0.9 eps_g = {0.9 * eps_g:.6f}: {tighter.verdict.value} (K = {tighter.bound_value:.6f}); need CONT then HALT"
    )
    assert report(4, ok, detail)


def test_criterion_5_statistical_validity(report):
    suite = load_suite("validity.all")
    assert suite.trials == 100_000
    start = time.perf_counter()
    reports = suite.run(workers=2)
    elapsed = time.perf_counter() - start
    failures = [
        f"{r.target}/{a.adversary} hi={a.interval[1]:.4f}"
        for r in reports
        for a in r.per_adversary
        if a.interval[1] > 1.5 * 0.05
    ]
    worst = max((a.interval[1], r.target, a.adversary) for r in reports for a in r.per_adversary)
    ok = not failures and all(r.verdict == "PASS" for r in reports)
    detail = (
        f"{len(reports)} targets x {len(suite.adversaries)} adversaries x {suite.trials} trials; "
        f"worst upper Wilson {worst[0]:.5f} ({worst[1]} vs {worst[2]}), limit 0.075; {elapsed:.0f}s"
    )
    if failures:
        detail += "; failing: " + ", ".join(failures)
    assert report(5, ok, detail)


def test_criterion_6_stopping_time_separation(report):
    n, delta_g, trials = 2**20, 0.05, 100_000
    start = time.perf_counter()
    results = stopping_time_separation(n, delta_g, [0.5, 1.0, 1.5, 2.0, 3.0], trials, seed=6, workers=2)
    elapsed = time.perf_counter() - start
    rows = []
    separating = []
    for r in results:
        naive, adv = r.violations["naive"], r.violations["advanced"]
        adv_hi = wilson_interval(adv, trials)[1]
        rows.append(f"C={r.C:g}: naive {naive / trials:.4f}, odometer {adv / trials:.5f}")
        if naive / trials >= delta_g and adv_hi <= 1.5 * delta_g:
            separating.append(r.C)
    ok = bool(separating)
    assert report(6, ok, f"n=2^20, eps=1/n, {trials} trials; separating C: {separating}; " + "; ".join(rows) + f"; {elapsed:.0f}s")


def test_criterion_7_delta_reduction(report):
    delta_g, delta_prime, d = 0.05, 0.01, 1e-4
    targets = [
        Target("wrapped-advanced-odometer", wrap_delta_reduction(AdvancedOdometer(OdometerConfig(delta_g, n=1000)), delta_prime), delta_g + delta_prime),
        Target("wrapped-advanced-filter", wrap_delta_reduction(AdvancedFilter(FilterBudget(2.0, delta_g)), delta_prime), delta_g + delta_prime),
    ]
    adversaries = [
        ConstantAdversary(0.05, d, rounds=1000),
        GeometricDecayAdversary(0.3, 0.995, d, floor=0.001),
        RandomEpsAdversary(0.01, 0.1, d),
        LuckyStreakAdversary(0.02, 0.15, delta=d),
    ]
    reports = run_audit(targets, adversaries, 100_000, seed=7, max_rounds=1000, workers=2)
    audit_ok = all(r.verdict == "PASS" for r in reports)

    # deterministic part: any stream whose summed delta exceeds delta' reads infinity / halts
    rng = np.random.default_rng(77)
    deterministic_ok = True
    for _ in range(2000):
        k = int(rng.integers(1, 300))
        events = [PrivacyEvent(float(e), float(dd)) for e, dd in zip(rng.uniform(0, 0.1, k), rng.uniform(0, 2e-4, k))]
        state = fold(events)
        if state.sum_delta > delta_prime:
            deterministic_ok &= targets[0].impl(state).infinite and targets[1].impl(state).halted
    summary = "; ".join(f"{r.target} rate {r.estimate:.4f} hi {r.interval[1]:.4f} (limit {1.5 * r.delta_claimed:.3f}) {r.verdict}" for r in reports)
    assert report(7, audit_ok and deterministic_ok, f"{summary}; infinity/HALT beyond delta': {deterministic_ok}")


def test_criterion_8_concentration_coverage(report):
    rng = np.random.default_rng(8)
    walks = 1_000_000
    rows = []
    ok = True
    for k in (10, 100, 1000):
        eps = 1.0 / math.sqrt(k)
        for delta in (0.05, 0.01):
            for beta in (k * eps * eps, 0.1):
                rate = concentration_exceedance(k, eps, beta, delta, walks, rng)
                limit = delta + 3 * math.sqrt(delta * (1 - delta) / walks)
                ok &= rate <= limit
                rows.append(f"k={k} d={delta} b={beta:g}: {rate:.5f}")
    assert report(8, ok, f"{walks} walks each; exceedance vs delta + 3 SE: " + "; ".join(rows))


def _run_cli(argv, text=""):
    out, err = io.StringIO(), io.StringIO()
    old = sys.stdin, sys.stdout, sys.stderr
    sys.stdin, sys.stdout, sys.stderr = io.StringIO(text), out, err
    try:
        code = main(argv)
    finally:
        sys.stdin, sys.stdout, sys.stderr = old
    return code, out.getvalue()


def test_criterion_9_cli_end_to_end(report, tmp_path):
    start = time.perf_counter()
    cases = [
        ("odometer_basic", ["--mode", "odometer:basic", "--delta-budget", "0.01"]),
        ("filter_basic", ["--mode", "filter:basic", "--eps-budget", "0.25", "--delta-budget", "0.01"]),
        ("odometer_advanced", ["--mode", "odometer:advanced", "--n", "1000", "--delta-budget", "0.01"]),
    ]
    golden_ok = True
    for name, flags in cases:
        proc = subprocess.run(
            [sys.executable, "-m", "privacy_odometer", "track", *flags],
            input=(GOLDEN / f"{name}.in.jsonl").read_bytes(),
            capture_output=True,
        )
        golden_ok &= proc.stdout == (GOLDEN / f"{name}.out.jsonl").read_bytes()

    text = (GOLDEN / "odometer_advanced.in.jsonl").read_text().splitlines(keepends=True)
    flags = ["track", "--mode", "odometer:advanced", "--n", "1000", "--delta-budget", "0.01"]
    single = _run_cli(flags, "".join(text))[1]
    ledger = tmp_path / "ledger.jsonl"
    pieces = [_run_cli(flags + ["--ledger", str(ledger)], "".join(text[a:b]))[1] for a, b in ((0, 13), (13, 60), (60, 100))]
    resume_ok = "".join(pieces) == single

    suite = {
        "name": "repro",
        "trials": 2000,
        "seed": 99,
        "max_rounds": 300,
        "targets": [{"name": "adv", "kind": "advanced-odometer", "delta_g": 0.05, "n": 300}],
        "adversaries": [{"kind": "lucky-streak", "eps_low": 0.02, "eps_high": 0.1}],
    }
    spec = tmp_path / "repro.json"
    spec.write_text(json.dumps(suite))
    files = []
    for k in range(2):
        _run_cli(["audit", "--suite", str(spec), "--out", str(tmp_path / f"r{k}")])
        files.append((tmp_path / f"r{k}" / "repro.report.json").read_bytes())
    audit_ok = files[0] == files[1]
    elapsed = time.perf_counter() - start
    ok = golden_ok and resume_ok and audit_ok and elapsed < 30
    assert report(9, ok, f"golden files {golden_ok}, ledger resume {resume_ok}, reproducible audit {audit_ok}, {elapsed:.1f}s (< 30 s)")
