"""Event and state model shared by every odometer and filter.

All bounds in this package are functions of a handful of running sums over the
realized privacy parameters, so the accounting state is just those sums.
Extended reals are plain floats: ``math.inf`` is the odometer's "no bound".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

__all__ = [
    "PrivacyEvent",
    "AccountState",
    "update",
    "fold",
    "mu_upper",
    "rr_mean_loss",
]


@dataclass(frozen=True)
class PrivacyEvent:
    """Realized parameters ``(eps, delta)`` of one round.

    ``PrivacyEvent(0, 0)`` is how an analyst signals that they have stopped.
    """

    eps: float
    delta: float = 0.0

    def __post_init__(self):
        eps, delta = float(self.eps), float(self.delta)
        if not eps >= 0.0 or math.isinf(eps):
            raise ValueError(f"eps must be a finite nonnegative real, got {self.eps!r}")
        if not 0.0 <= delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta!r}")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "delta", delta)

    @property
    def is_stop(self) -> bool:
        return self.eps == 0.0 and self.delta == 0.0


@dataclass(frozen=True)
class AccountState:
    """Running sums over the realized events of one stream."""

    sum_eps: float = 0.0
    sum_eps_sq: float = 0.0
    sum_delta: float = 0.0
    sum_mu: float = 0.0
    rounds: int = 0

    def merge(self, other: "AccountState") -> "AccountState":
        """State of the concatenated stream ``self`` followed by ``other``."""
        return AccountState(
            sum_eps=self.sum_eps + other.sum_eps,
            sum_eps_sq=self.sum_eps_sq + other.sum_eps_sq,
            sum_delta=self.sum_delta + other.sum_delta,
            sum_mu=self.sum_mu + other.sum_mu,
            rounds=self.rounds + other.rounds,
        )

    def without_delta(self) -> "AccountState":
        return replace(self, sum_delta=0.0)

    def to_dict(self) -> dict:
        return {
            "sum_eps": self.sum_eps,
            "sum_eps_sq": self.sum_eps_sq,
            "sum_delta": self.sum_delta,
            "sum_mu": self.sum_mu,
            "rounds": self.rounds,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AccountState":
        return cls(
            sum_eps=float(data["sum_eps"]),
            sum_eps_sq=float(data["sum_eps_sq"]),
            sum_delta=float(data["sum_delta"]),
            sum_mu=float(data["sum_mu"]),
            rounds=int(data["rounds"]),
        )


def update(state: AccountState, event: PrivacyEvent) -> AccountState:
    """Return the state after one more round; ``state`` is left untouched."""
    if not isinstance(event, PrivacyEvent):
        event = PrivacyEvent(*event)
    eps = event.eps
    return AccountState(
        sum_eps=state.sum_eps + eps,
        sum_eps_sq=state.sum_eps_sq + eps * eps,
        sum_delta=state.sum_delta + event.delta,
        sum_mu=state.sum_mu + mu_upper(eps),
        rounds=state.rounds + 1,
    )


def fold(events: Iterable[PrivacyEvent], state: AccountState | None = None) -> AccountState:
    state = AccountState() if state is None else state
    for event in events:
        state = update(state, event)
    return state


def mu_upper(eps):
    """Upper bound ``eps * (e^eps - 1) / 2`` on the conditional mean privacy loss.

    Works elementwise on arrays; ``expm1`` keeps full relative precision for
    tiny ``eps`` where ``exp(eps) - 1`` cancels.
    """
    if isinstance(eps, np.ndarray):
        return eps * np.expm1(eps) / 2.0
    eps = float(eps)
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps!r}")
    return eps * math.expm1(eps) / 2.0


def rr_mean_loss(eps):
    """Exact mean loss of one randomized-response round under input 0.

    ``eps * (e^eps - 1) / (e^eps + 1)`` written as ``eps * tanh(eps / 2)``.
    """
    if isinstance(eps, np.ndarray):
        return eps * np.tanh(eps / 2.0)
    eps = float(eps)
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps!r}")
    return eps * math.tanh(eps / 2.0)
