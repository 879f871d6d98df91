"""Statistical audits of odometers and filters against adversary suites.

Games are simulated in vectorized batches. Every target in an audit is
evaluated on the same simulated runs: a filter game is the prefix of the
unfiltered game up to the first HALT, so one simulation per adversary serves
all targets. Trials are split into fixed-size blocks, each with its own
random stream derived from ``(seed, adversary name, block index)``; results
do not depend on the number of workers or on which other targets are audited.
"""

from __future__ import annotations

import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accountant import mu_upper, rr_mean_loss
from .adversaries import StoppingTimeAdversary
from .concentration import self_normalized_bound
from .filters import AdvancedFilter, FilterBudget, PrivacyFilter
from .odometers import AdvancedOdometer, OdometerConfig, PrivacyOdometer
from .rr import Adversary, GameView, loss_increments, rr_sample

__all__ = [
    "BLOCK_SIZE",
    "Z95",
    "BatchState",
    "NaiveAdvancedComposition",
    "AlwaysContinue",
    "Target",
    "AuditSpec",
    "AdversaryResult",
    "AuditReport",
    "wilson_interval",
    "simulate",
    "run_audit",
    "audit_odometer",
    "audit_filter",
    "format_reports",
    "BoundComparison",
    "compare_bounds",
    "SeparationResult",
    "stopping_time_separation",
    "concentration_exceedance",
]

BLOCK_SIZE = 10_000
Z95 = 1.959963984540054
MIN_REPORTED_TRIALS = 1000


@dataclass
class BatchState:
    """``AccountState`` with array-valued fields, one entry per game."""

    sum_eps: np.ndarray
    sum_eps_sq: np.ndarray
    sum_delta: np.ndarray
    sum_mu: np.ndarray
    rounds: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> "BatchState":
        z = np.zeros(size)
        return cls(z, z.copy(), z.copy(), z.copy(), np.zeros(size, dtype=np.int64))

    @classmethod
    def constant_stream(cls, eps: float, t) -> "BatchState":
        """State after ``t`` rounds of ``(eps, 0)``; ``t`` may be an array."""
        t = np.asarray(t, dtype=float)
        return cls(t * eps, t * (eps * eps), np.zeros_like(t), t * mu_upper(eps), t.astype(np.int64))

    def updated(self, eps: np.ndarray, delta: np.ndarray, ran: np.ndarray) -> "BatchState":
        return BatchState(
            self.sum_eps + eps,
            self.sum_eps_sq + eps * eps,
            self.sum_delta + delta,
            self.sum_mu + mu_upper(eps),
            self.rounds + ran,
        )

    def without_delta(self) -> "BatchState":
        return BatchState(self.sum_eps, self.sum_eps_sq, np.zeros_like(self.sum_delta), self.sum_mu, self.rounds)


class NaiveAdvancedComposition(PrivacyOdometer):
    """Advanced composition evaluated on the realized parameters.

    ``sum(eps_i (e^eps_i - 1)) + sqrt(2 sum(eps_i^2) log(1/delta_g))``. This is
    *not* a valid odometer when parameters are chosen adaptively; it is the
    negative control of the audits.
    """

    def __init__(self, delta_g: float):
        if not 0 < delta_g < 1:
            raise ValueError("delta_g must lie in (0, 1)")
        self.delta_g = float(delta_g)
        self._log_term = math.log(1.0 / self.delta_g)

    def bound(self, state):
        return 2.0 * state.sum_mu + np.sqrt(2.0 * state.sum_eps_sq * self._log_term)

    def branch(self, state):
        return "naive"

    def __repr__(self):
        return f"NaiveAdvancedComposition(delta_g={self.delta_g})"


class AlwaysContinue(PrivacyFilter):
    """Filter that never halts (negative control)."""

    def __init__(self, eps_g: float):
        self.eps_g = float(eps_g)

    def statistic(self, state):
        return state.sum_eps

    def halts(self, state):
        return np.zeros(np.shape(state.sum_eps), dtype=bool)

    def __repr__(self):
        return f"AlwaysContinue(eps_g={self.eps_g})"


@dataclass
class Target:
    """An odometer or filter under audit, with the failure probability it claims."""

    name: str
    impl: PrivacyOdometer | PrivacyFilter
    delta_claimed: float
    expect: str = "PASS"

    @property
    def kind(self) -> str:
        return "filter" if isinstance(self.impl, PrivacyFilter) else "odometer"


@dataclass
class AuditSpec:
    target: Target
    adversaries: list[Adversary]
    trials: int
    seed: int
    max_rounds: int = 1000
    slack: float = 1.5
    workers: int = 1

    def __post_init__(self):
        _check_trials(self.trials)
        if not self.adversaries:
            raise ValueError("need at least one adversary")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


def _check_trials(trials):
    if int(trials) != trials or trials < MIN_REPORTED_TRIALS:
        raise ValueError(f"trials must be an integer >= {MIN_REPORTED_TRIALS}, got {trials!r}")


def wilson_interval(violations: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = violations / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if violations == 0 else max(0.0, centre - half)
    hi = 1.0 if violations == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class AdversaryResult:
    adversary: str
    trials: int
    violations: int
    final_violations: int
    interval: tuple[float, float]
    verdict: str

    @property
    def estimate(self) -> float:
        return self.violations / self.trials

    def to_dict(self) -> dict:
        return {
            "adversary": self.adversary,
            "trials": self.trials,
            "violations": self.violations,
            "estimate": self.estimate,
            "final_violations": self.final_violations,
            "wilson95": list(self.interval),
            "verdict": self.verdict,
        }


@dataclass
class AuditReport:
    """Outcome of auditing one target.

    ``violations`` counts trials whose loss exceeded the running bound in some
    round (for filters: exceeded ``eps_g`` in a released round). The verdict is
    PASS only if every adversary's upper Wilson endpoint is at most
    ``slack * delta_claimed``.
    """

    target: str
    kind: str
    delta_claimed: float
    slack: float
    per_adversary: list[AdversaryResult]
    runtime: float
    expect: str = "PASS"

    @property
    def trials(self) -> int:
        return sum(r.trials for r in self.per_adversary)

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.per_adversary)

    @property
    def estimate(self) -> float:
        return self.violations / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.violations, self.trials)

    @property
    def worst(self) -> AdversaryResult:
        return max(self.per_adversary, key=lambda r: (r.interval[1], r.violations))

    @property
    def verdict(self) -> str:
        return "PASS" if all(r.verdict == "PASS" for r in self.per_adversary) else "FAIL"

    @property
    def as_expected(self) -> bool:
        return self.verdict == self.expect

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "kind": self.kind,
            "delta_claimed": self.delta_claimed,
            "threshold": self.slack * self.delta_claimed,
            "trials": self.trials,
            "violations": self.violations,
            "estimate": self.estimate,
            "wilson95": list(self.interval),
            "verdict": self.verdict,
            "expect": self.expect,
            "worst_adversary": self.worst.adversary,
            "per_adversary": [r.to_dict() for r in self.per_adversary],
            "runtime_seconds": self.runtime,
        }


def _block_rng(seed: int, adversary: Adversary, block: int) -> np.random.Generator:
    key = zlib.crc32(adversary.name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key, block)))


def _blocks(trials: int) -> list[int]:
    full, rest = divmod(int(trials), BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def simulate(
    adversary: Adversary,
    targets: list[Target],
    size: int,
    max_rounds: int,
    rng: np.random.Generator,
    b: int = 0,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Run ``size`` independent games and check every target on each round.

    Returns per target a pair of boolean arrays: violation in some round, and
    violation judged on the final state only.
    """
    loss = np.zeros(size)
    last = np.full(size, -1, dtype=np.int8)
    state = BatchState.zeros(size)
    active = np.ones(size, dtype=bool)
    per_round = {t.name: np.zeros(size, dtype=bool) for t in targets}
    halted = {t.name: np.zeros(size, dtype=bool) for t in targets if t.kind == "filter"}
    released_loss = {name: np.zeros(size) for name in halted}

    for i in range(1, max_rounds + 1):
        view = GameView(i, loss, state.sum_eps, state.sum_eps_sq, state.sum_delta, last)
        eps, delta = adversary.propose(view, rng)
        eps = np.where(active, np.asarray(eps, dtype=float), 0.0)
        delta = np.where(active, np.asarray(delta, dtype=float), 0.0)
        active &= ~((eps == 0.0) & (delta == 0.0))
        if not active.any():
            break
        if np.any(eps < 0) or np.any(~np.isfinite(eps)) or np.any((delta < 0) | (delta >= 1)):
            raise ValueError(f"{adversary!r} proposed invalid parameters")
        candidate = state.updated(eps, delta, active)
        for t in targets:
            if t.kind == "filter":
                halted[t.name] |= active & t.impl.halts(candidate)
        codes = rr_sample(eps, delta, b, rng)
        with np.errstate(invalid="ignore"):
            inc = np.where(active, loss_increments(eps, codes), 0.0)
            loss = loss + inc
        last = np.where(active, codes, last).astype(np.int8)
        state = candidate
        abs_loss = np.abs(loss)
        for t in targets:
            if t.kind == "filter":
                released = active & ~halted[t.name]
                per_round[t.name] |= released & (abs_loss > t.impl.eps_g)
                released_loss[t.name] = np.where(released, loss, released_loss[t.name])
            else:
                per_round[t.name] |= active & (abs_loss > t.impl.bound(state))

    out = {}
    for t in targets:
        if t.kind == "filter":
            final = np.abs(released_loss[t.name]) > t.impl.eps_g
        else:
            final = np.abs(loss) > t.impl.bound(state)
        out[t.name] = (per_round[t.name], np.asarray(final, dtype=bool))
    return out


def _simulate_adversary(adversary, targets, trials, max_rounds, seed, b, workers):
    sizes = _blocks(trials)

    def one(block):
        rng = _block_rng(seed, adversary, block)
        res = simulate(adversary, targets, sizes[block], max_rounds, rng, b)
        return {name: (int(pr.sum()), int(fin.sum())) for name, (pr, fin) in res.items()}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(k) for k in range(len(sizes))]
    return {
        t.name: (sum(p[t.name][0] for p in parts), sum(p[t.name][1] for p in parts)) for t in targets
    }


def run_audit(
    targets: list[Target],
    adversaries: list[Adversary],
    trials: int,
    seed: int,
    max_rounds: int = 1000,
    slack: float = 1.5,
    workers: int = 1,
    b: int = 0,
) -> list[AuditReport]:
    """Audit every target against every adversary, ``trials`` games per adversary."""
    _check_trials(trials)
    names = [t.name for t in targets]
    if len(set(names)) != len(names):
        raise ValueError("target names must be unique")
    results: dict[str, list[AdversaryResult]] = {n: [] for n in names}
    runtime = {n: 0.0 for n in names}
    for adversary in adversaries:
        start = time.perf_counter()
        counts = _simulate_adversary(adversary, targets, trials, max_rounds, seed, b, workers)
        elapsed = time.perf_counter() - start
        for t in targets:
            v, fv = counts[t.name]
            lo, hi = wilson_interval(v, trials)
            verdict = "PASS" if hi <= slack * t.delta_claimed else "FAIL"
            results[t.name].append(AdversaryResult(adversary.name, trials, v, fv, (lo, hi), verdict))
            runtime[t.name] += elapsed
    return [
        AuditReport(t.name, t.kind, t.delta_claimed, slack, results[t.name], runtime[t.name], t.expect)
        for t in targets
    ]


def audit_odometer(spec: AuditSpec) -> AuditReport:
    if spec.target.kind != "odometer":
        raise TypeError("audit_odometer needs an odometer target")
    return run_audit([spec.target], spec.adversaries, spec.trials, spec.seed, spec.max_rounds, spec.slack, spec.workers)[0]


def audit_filter(spec: AuditSpec) -> AuditReport:
    if spec.target.kind != "filter":
        raise TypeError("audit_filter needs a filter target")
    return run_audit([spec.target], spec.adversaries, spec.trials, spec.seed, spec.max_rounds, spec.slack, spec.workers)[0]


def format_reports(reports: list[AuditReport]) -> str:
    """Aligned text table, one row per (target, adversary) plus a summary row per target."""
    header = ("target", "adversary", "trials", "viol", "rate", "wilson95_hi", "limit", "verdict")
    rows = [header]
    for rep in reports:
        limit = rep.slack * rep.delta_claimed
        for r in rep.per_adversary:
            rows.append((rep.target, r.adversary, str(r.trials), str(r.violations), f"{r.estimate:.5f}",
                         f"{r.interval[1]:.5f}", f"{limit:.5f}", r.verdict))
        rows.append((rep.target, "ALL", str(rep.trials), str(rep.violations), f"{rep.estimate:.5f}",
                     f"{rep.interval[1]:.5f}", f"{limit:.5f}", f"{rep.verdict} (expect {rep.expect})"))
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows) + "\n"


@dataclass(frozen=True)
class BoundComparison:
    """Bounds evaluated on one realized schedule.

    ``advanced_composition`` is the fixed-parameter composition bound applied to the
    realized values: a reference number, not a valid odometer.
    """

    rounds: int
    basic: float
    advanced_composition: float
    filter_statistic: float
    eps_g: float
    odometer: float

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("basic composition (sum eps)", self.basic),
            ("advanced composition, realized params (reference)", self.advanced_composition),
            (f"advanced filter statistic K (eps_g={self.eps_g:g})", self.filter_statistic),
            ("advanced odometer reading", self.odometer),
        ]

    def format(self) -> str:
        width = max(len(name) for name, _ in self.rows())
        return "".join(f"{name.ljust(width)}  {value:.6g}\n" for name, value in self.rows())


def compare_bounds(eps_schedule, delta_g: float, n: int, eps_g: float | None = None, gamma: float | None = None) -> BoundComparison:
    """Evaluate the composition bounds on a schedule of epsilons (deltas zero).

    ``eps_g`` defaults to the realized advanced-composition value, i.e. "would
    the filter have allowed this schedule under that budget".
    """
    eps = np.asarray(eps_schedule, dtype=float).reshape(-1)
    if eps.size == 0 or np.any(eps < 0):
        raise ValueError("need a nonempty schedule of nonnegative epsilons")
    # exactly rounded sums: the odometer's branch test at sum(eps^2) = 1 is sensitive to the last ulp
    state = BatchState(
        np.array([math.fsum(eps)]),
        np.array([math.fsum(eps * eps)]),
        np.zeros(1),
        np.array([math.fsum(mu_upper(eps))]),
        np.array([eps.size]),
    )
    naive = float(NaiveAdvancedComposition(delta_g).bound(state)[0])
    eps_g = naive if eps_g is None else float(eps_g)
    k_stat = float(AdvancedFilter(FilterBudget(eps_g, delta_g)).statistic(state)[0])
    odo = float(AdvancedOdometer(OdometerConfig(delta_g, n=n, gamma=gamma)).bound(state)[0])
    return BoundComparison(int(eps.size), float(state.sum_eps[0]), naive, k_stat, eps_g, odo)


@dataclass
class SeparationResult:
    """Stopping-time attack on constant-``eps`` streams for one threshold constant ``C``."""

    C: float
    trials: int
    stopped: int
    rates: dict[str, float] = field(default_factory=dict)
    final_rates: dict[str, float] = field(default_factory=dict)
    violations: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "trials": self.trials,
            "stopped": self.stopped,
            "violations": self.violations,
            "rates": self.rates,
            "final_rates": self.final_rates,
        }


def _walk_block(adversary: StoppingTimeAdversary, odometers: dict, size: int, rng: np.random.Generator):
    """Simulate ``size`` stopping-time games with exact skip-ahead.

    The loss is ``eps * S`` for an integer walk ``S``. From a state where every
    boundary is at least ``g`` steps away, the next ``floor(g - 1)`` steps cannot
    touch any of them (boundaries are nondecreasing in ``t`` for constant
    streams), so they are drawn at once as a binomial count of up-steps.
    """
    eps = adversary.eps
    n = adversary.n
    p_up = 0.5 * (1.0 + math.tanh(eps / 2.0))
    names = list(odometers)
    t = np.zeros(size, dtype=np.int64)
    s = np.zeros(size, dtype=np.int64)
    active = np.ones(size, dtype=bool)
    per_round = {k: np.zeros(size, dtype=bool) for k in names}
    drift = adversary.mean / eps

    while active.any():
        idx = np.flatnonzero(active)
        ti, si = t[idx], s[idx]
        gap = (n - ti).astype(float)
        st = BatchState.constant_stream(eps, ti)
        for k in names:
            open_ = ~per_round[k][idx]
            g = odometers[k].bound(st) / eps - np.abs(si)
            gap = np.where(open_, np.minimum(gap, g), gap)
        g_stop = np.where(ti >= 1, adversary.threshold(ti) / eps + ti * drift - si, 0.0)
        gap = np.minimum(gap, g_stop)
        m = np.maximum(1, np.floor(gap - 1.0)).astype(np.int64)
        m = np.minimum(m, n - ti)
        ups = rng.binomial(m, p_up)
        si = si + 2 * ups - m
        ti = ti + m
        s[idx], t[idx] = si, ti
        st = BatchState.constant_stream(eps, ti)
        loss = np.abs(si * eps)
        for k in names:
            per_round[k][idx] |= loss > odometers[k].bound(st)
        done = adversary.crossed(si * eps, ti) | (ti >= n)
        active[idx[done]] = False

    final_state = BatchState.constant_stream(eps, t)
    final = {k: np.abs(s * eps) > odometers[k].bound(final_state) for k in names}
    stopped = t < n
    return per_round, final, stopped


def stopping_time_separation(
    n: int,
    delta_g: float,
    C_values,
    trials: int,
    seed: int,
    eps: float | None = None,
    odometers: dict | None = None,
    workers: int = 1,
) -> list[SeparationResult]:
    """Run the stopping-time adversary with ``eps = 1/n`` (default) for each ``C``.

    By default compares the naive advanced-composition threshold with the
    advanced odometer at ``gamma = 1/n^2``. Rates are per-round violation
    frequencies; ``final_rates`` judge only the state at the stopping time.
    """
    eps = 1.0 / n if eps is None else float(eps)
    if odometers is None:
        odometers = {
            "naive": NaiveAdvancedComposition(delta_g),
            "advanced": AdvancedOdometer(OdometerConfig(delta_g, n=n)),
        }
    results = []
    for C in C_values:
        adversary = StoppingTimeAdversary(eps, delta_g, C, n)
        sizes = _blocks(trials)

        def one(block):
            rng = _block_rng(seed, adversary, block)
            return _walk_block(adversary, odometers, sizes[block], rng)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(one, range(len(sizes))))
        else:
            parts = [one(k) for k in range(len(sizes))]
        counts = {k: sum(int(p[0][k].sum()) for p in parts) for k in odometers}
        finals = {k: sum(int(p[1][k].sum()) for p in parts) for k in odometers}
        stopped = sum(int(p[2].sum()) for p in parts)
        results.append(
            SeparationResult(
                C=float(C),
                trials=trials,
                stopped=stopped,
                rates={k: counts[k] / trials for k in odometers},
                final_rates={k: finals[k] / trials for k in odometers},
                violations=counts,
            )
        )
    return results


def concentration_exceedance(k: int, eps: float, beta: float, delta: float, walks: int, rng: np.random.Generator) -> float:
    """Fraction of centred +-eps randomized-response walks of length ``k`` at or above the bound.

    The increments ``X_i - E X_i`` range over an interval of width ``2 eps``,
    so ``U_k^2 = 4 k eps^2``. The endpoint ``M_k`` depends only on the number
    of up-steps, which is drawn directly as a binomial count.
    """
    p_up = 0.5 * (1.0 + math.tanh(eps / 2.0))
    ups = rng.binomial(k, p_up, size=walks)
    m_k = eps * (2 * ups - k) - k * rr_mean_loss(eps)
    threshold = self_normalized_bound(4.0 * k * eps * eps, beta, delta)
    return float(np.mean(np.abs(m_k) >= threshold))
