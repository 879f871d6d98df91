"""Privacy filters: stopping rules that keep realized loss under a global budget.

A filter is queried on the state *including* the candidate round, before that
round runs; ``gate`` packages that usage. Halting tests use strict ``>``, so a
stream sitting exactly on the budget continues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .accountant import AccountState, PrivacyEvent, update

__all__ = [
    "ADVANCED_FILTER_CONSTANT",
    "Verdict",
    "FilterBudget",
    "FilterDecision",
    "PrivacyFilter",
    "BasicFilter",
    "AdvancedFilter",
    "basic_filter",
    "advanced_filter_bound",
    "advanced_filter",
    "gate",
]

# Divisor of eps_g**2 / log(1/delta_g) that fixes the concentration bound's
# free parameter. 28.04 / 8 solves r = 2 + log(1 + r), the optimal ratio
# sum(eps^2)/beta when sum(eps^2) = 1 / (8 log(1/delta_g)).
ADVANCED_FILTER_CONSTANT = 28.04

_INV_E = math.exp(-1.0)


class Verdict(str, Enum):
    CONT = "CONT"
    HALT = "HALT"


@dataclass(frozen=True)
class FilterBudget:
    eps_g: float
    delta_g: float
    delta_split: float = 0.5

    def __post_init__(self):
        if not self.eps_g > 0:
            raise ValueError(f"eps_g must be positive, got {self.eps_g!r}")
        if not self.delta_g >= 0:
            raise ValueError(f"delta_g must be nonnegative, got {self.delta_g!r}")
        if not 0.0 < self.delta_split < 1.0:
            raise ValueError(f"delta_split must lie in (0, 1), got {self.delta_split!r}")


@dataclass(frozen=True)
class FilterDecision:
    verdict: Verdict
    bound_value: float

    @property
    def halted(self) -> bool:
        return self.verdict is Verdict.HALT


class PrivacyFilter:
    """Base class. Subclasses provide ``statistic`` and ``halts``.

    Both accept an ``AccountState`` or any object with the same fields holding
    numpy arrays, in which case they evaluate elementwise.
    """

    eps_g: float

    def statistic(self, state):
        raise NotImplementedError

    def halts(self, state):
        raise NotImplementedError

    def __call__(self, state: AccountState) -> FilterDecision:
        verdict = Verdict.HALT if bool(self.halts(state)) else Verdict.CONT
        return FilterDecision(verdict, float(self.statistic(state)))


class BasicFilter(PrivacyFilter):
    """HALT once summed deltas exceed ``delta_g`` or summed epsilons exceed ``eps_g``."""

    def __init__(self, budget: FilterBudget):
        self.budget = budget
        self.eps_g = budget.eps_g

    def statistic(self, state):
        return state.sum_eps

    def halts(self, state):
        return np.logical_or(state.sum_delta > self.budget.delta_g, state.sum_eps > self.budget.eps_g)

    def __repr__(self):
        return f"BasicFilter({self.budget})"


class AdvancedFilter(PrivacyFilter):
    """Concentration-based filter with a quadratic dependence on the epsilons.

    The statistic is

        K = sum_mu + sqrt(2 (S + beta) (1 + log(S/beta + 1)/2) log(1/((1-s) delta_g)))

    with ``S = sum(eps^2)``, ``beta = eps_g^2 / (c log(1/delta_g))`` and
    ``s = delta_split``. HALT when ``sum_delta > s * delta_g`` or ``K > eps_g``.
    """

    def __init__(self, budget: FilterBudget, constant: float = ADVANCED_FILTER_CONSTANT):
        if not 0.0 < budget.delta_g < _INV_E:
            raise ValueError(f"advanced filter needs delta_g in (0, 1/e), got {budget.delta_g!r}")
        if not constant > 0:
            raise ValueError("constant must be positive")
        self.budget = budget
        self.eps_g = budget.eps_g
        self.constant = float(constant)
        self.beta = budget.eps_g**2 / (self.constant * math.log(1.0 / budget.delta_g))
        self._log_term = math.log(1.0 / ((1.0 - budget.delta_split) * budget.delta_g))

    def statistic(self, state):
        s = state.sum_eps_sq
        beta = self.beta
        root = np.sqrt(2.0 * (s + beta) * (1.0 + 0.5 * np.log1p(s / beta)) * self._log_term)
        return state.sum_mu + root

    def halts(self, state):
        b = self.budget
        return np.logical_or(state.sum_delta > b.delta_split * b.delta_g, self.statistic(state) > b.eps_g)

    def __repr__(self):
        return f"AdvancedFilter({self.budget}, constant={self.constant})"


def basic_filter(state: AccountState, budget: FilterBudget) -> FilterDecision:
    return BasicFilter(budget)(state)


def advanced_filter_bound(
    state: AccountState, budget: FilterBudget, constant: float = ADVANCED_FILTER_CONSTANT
) -> float:
    return float(AdvancedFilter(budget, constant).statistic(state))


def advanced_filter(
    state: AccountState, budget: FilterBudget, constant: float = ADVANCED_FILTER_CONSTANT
) -> FilterDecision:
    return AdvancedFilter(budget, constant)(state)


def gate(filt: PrivacyFilter, state: AccountState, event: PrivacyEvent) -> FilterDecision:
    """Decide whether ``event`` may run given the rounds already in ``state``."""
    return filt(update(state, event))
