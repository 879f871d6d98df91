"""Privacy odometers: running high-probability upper bounds on realized loss.

Every reading is a function of the accumulated sums only, so the reading after
round ``t`` is the reading of the whole stream with later rounds zeroed.
Odometers report; enforcement belongs to ``filters``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accountant import AccountState
from .filters import PrivacyFilter

__all__ = [
    "OdometerConfig",
    "OdometerReading",
    "PrivacyOdometer",
    "BasicOdometer",
    "BetaOdometer",
    "AdvancedOdometer",
    "DeltaReducedOdometer",
    "DeltaReducedFilter",
    "basic_odometer",
    "beta_odometer",
    "advanced_odometer",
    "wrap_delta_reduction",
]

_INV_E = math.exp(-1.0)
_MAIN_FACTOR = 1.0 + math.log(math.sqrt(3.0))


@dataclass(frozen=True)
class OdometerConfig:
    """Parameters shared by the odometers.

    ``gamma`` is the lower end of the range of ``sum(eps^2)`` the advanced
    odometer discretizes; it defaults to ``1/n**2``.
    """

    delta_g: float
    delta_prime: float = 0.0
    n: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if not self.delta_g >= 0:
            raise ValueError(f"delta_g must be nonnegative, got {self.delta_g!r}")
        if not self.delta_prime >= 0:
            raise ValueError(f"delta_prime must be nonnegative, got {self.delta_prime!r}")
        if self.n is not None and (int(self.n) != self.n or self.n < 1):
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.gamma is not None and not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma!r}")

    @property
    def granularity(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        if self.n is None:
            raise ValueError("need n or gamma")
        return 1.0 / float(self.n) ** 2


@dataclass(frozen=True)
class OdometerReading:
    bound: float
    branch: str

    @property
    def infinite(self) -> bool:
        return math.isinf(self.bound)


class PrivacyOdometer:
    """Base class. ``bound`` evaluates on scalar or array-valued states."""

    def bound(self, state):
        raise NotImplementedError

    def branch(self, state) -> str:
        raise NotImplementedError

    def __call__(self, state: AccountState) -> OdometerReading:
        return OdometerReading(float(self.bound(state)), self.branch(state))


class BasicOdometer(PrivacyOdometer):
    """Summed epsilons, or infinity once summed deltas exceed ``delta_g``."""

    def __init__(self, delta_g: float):
        if not delta_g >= 0:
            raise ValueError("delta_g must be nonnegative")
        self.delta_g = float(delta_g)

    def bound(self, state):
        return np.where(state.sum_delta > self.delta_g, np.inf, state.sum_eps)

    def branch(self, state):
        return "infinite-delta" if state.sum_delta > self.delta_g else "basic"

    def __repr__(self):
        return f"BasicOdometer(delta_g={self.delta_g})"


def _check_delta_g(delta_g: float, what: str):
    if not 0.0 < delta_g < _INV_E:
        raise ValueError(f"{what} needs delta_g in (0, 1/e), got {delta_g!r}")


class BetaOdometer(PrivacyOdometer):
    """Odometer with a concentration parameter ``beta`` fixed in advance.

    Valid for streams with all deltas zero; wrap it with
    ``wrap_delta_reduction`` otherwise. Equals
    ``sum_mu + self_normalized_bound(4 S, beta, delta_g / 2)``.
    """

    def __init__(self, delta_g: float, beta: float):
        _check_delta_g(delta_g, "beta odometer")
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta!r}")
        self.delta_g = float(delta_g)
        self.beta = float(beta)
        self._log_term = math.log(2.0 / self.delta_g)

    def bound(self, state):
        s = state.sum_eps_sq
        beta = self.beta
        root = np.sqrt(2.0 * (s + beta) * (1.0 + 0.5 * np.log1p(s / beta)) * self._log_term)
        return state.sum_mu + root

    def branch(self, state):
        return "beta"

    def __repr__(self):
        return f"BetaOdometer(delta_g={self.delta_g}, beta={self.beta})"


class AdvancedOdometer(PrivacyOdometer):
    """Odometer obtained by a union bound over a dyadic grid of ``beta``.

    For ``S = sum(eps^2)`` in ``[gamma, 1]``:

        sum_mu + 2 sqrt(S (1 + log sqrt 3) log(2 log2(1/gamma) / delta_g))

    and outside that range

        sum_mu + sqrt(2 (gamma + S) (1 + log(1 + S/gamma)/2) log(2 log2(1/gamma) / delta_g)).

    With ``gamma = 1/n^2`` the log term is ``log(4 log2(n) / delta_g)``.
    Infinity once ``sum_delta > delta_g / 2``.
    """

    def __init__(self, config: OdometerConfig):
        _check_delta_g(config.delta_g, "advanced odometer")
        if config.gamma is None and (config.n is None or config.n < 2):
            raise ValueError("advanced odometer needs n >= 2 or an explicit gamma")
        gamma = config.granularity
        if not gamma < 1.0:
            raise ValueError("advanced odometer needs gamma < 1")
        self.config = config
        self.delta_g = float(config.delta_g)
        self.gamma = gamma
        self._log_term = math.log(2.0 * math.log2(1.0 / gamma) / self.delta_g)

    def in_main_range(self, state):
        s = state.sum_eps_sq
        return np.logical_and(s >= self.gamma, s <= 1.0)

    def bound(self, state):
        s = state.sum_eps_sq
        g = self.gamma
        main = 2.0 * np.sqrt(s * _MAIN_FACTOR * self._log_term)
        other = np.sqrt(2.0 * (g + s) * (1.0 + 0.5 * np.log1p(s / g)) * self._log_term)
        value = state.sum_mu + np.where(self.in_main_range(state), main, other)
        return np.where(state.sum_delta > self.delta_g / 2.0, np.inf, value)

    def branch(self, state):
        if state.sum_delta > self.delta_g / 2.0:
            return "infinite-delta"
        return "main-range" if bool(self.in_main_range(state)) else "out-of-range"

    def __repr__(self):
        return f"AdvancedOdometer(delta_g={self.delta_g}, gamma={self.gamma!r})"


class DeltaReducedOdometer(PrivacyOdometer):
    """Lift an odometer valid for zero-delta streams to arbitrary deltas.

    Infinity once ``sum_delta > delta_prime``; otherwise the inner reading with
    every delta set to zero. The failure probability grows by ``delta_prime``.
    """

    def __init__(self, inner: PrivacyOdometer, delta_prime: float):
        if not delta_prime >= 0:
            raise ValueError("delta_prime must be nonnegative")
        self.inner = inner
        self.delta_prime = float(delta_prime)

    def bound(self, state):
        inner = self.inner.bound(_zero_delta(state))
        return np.where(state.sum_delta > self.delta_prime, np.inf, inner)

    def branch(self, state):
        if state.sum_delta > self.delta_prime:
            return "infinite-delta"
        return self.inner.branch(_zero_delta(state))

    def __repr__(self):
        return f"DeltaReducedOdometer({self.inner!r}, delta_prime={self.delta_prime})"


class DeltaReducedFilter(PrivacyFilter):
    """Filter counterpart of ``DeltaReducedOdometer``: HALT once ``sum_delta > delta_prime``."""

    def __init__(self, inner: PrivacyFilter, delta_prime: float):
        if not delta_prime >= 0:
            raise ValueError("delta_prime must be nonnegative")
        self.inner = inner
        self.eps_g = inner.eps_g
        self.delta_prime = float(delta_prime)

    def statistic(self, state):
        return self.inner.statistic(_zero_delta(state))

    def halts(self, state):
        return np.logical_or(state.sum_delta > self.delta_prime, self.inner.halts(_zero_delta(state)))

    def __repr__(self):
        return f"DeltaReducedFilter({self.inner!r}, delta_prime={self.delta_prime})"


def _zero_delta(state):
    return state.without_delta()


def wrap_delta_reduction(inner, delta_prime: float):
    if isinstance(inner, PrivacyFilter):
        return DeltaReducedFilter(inner, delta_prime)
    if isinstance(inner, PrivacyOdometer):
        return DeltaReducedOdometer(inner, delta_prime)
    raise TypeError(f"cannot wrap {type(inner).__name__}")


def basic_odometer(state: AccountState, cfg: OdometerConfig) -> OdometerReading:
    return BasicOdometer(cfg.delta_g)(state)


def beta_odometer(state: AccountState, delta_g: float, beta: float) -> float:
    return float(BetaOdometer(delta_g, beta).bound(state))


def advanced_odometer(state: AccountState, cfg: OdometerConfig) -> OdometerReading:
    return AdvancedOdometer(cfg)(state)

