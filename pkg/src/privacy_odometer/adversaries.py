"""Adversary strategies for the composition games and audits.

All strategies are stateless: they read the batched ``GameView`` and return
one ``(eps, delta)`` proposal per game. Proposing ``(0, 0)`` stops a game.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .accountant import PrivacyEvent, rr_mean_loss
from .rr import Adversary, GameView, RROutcome

__all__ = [
    "ConstantAdversary",
    "GeometricDecayAdversary",
    "RandomEpsAdversary",
    "StoppingTimeAdversary",
    "LuckyStreakAdversary",
    "CallbackAdversary",
    "stopping_time_adversary",
]


def _full(view: GameView, value: float) -> np.ndarray:
    return np.full(view.size, float(value))


class ConstantAdversary(Adversary):
    """Same ``(eps, delta)`` every round, optionally stopping after ``rounds``."""

    def __init__(self, eps: float, delta: float = 0.0, rounds: int | None = None, name: str | None = None):
        PrivacyEvent(eps, delta)
        self.eps = float(eps)
        self.delta = float(delta)
        self.rounds = rounds
        self.name = name or f"constant(eps={eps:g})"

    def propose(self, view, rng):
        if self.rounds is not None and view.round > self.rounds:
            return _full(view, 0.0), _full(view, 0.0)
        return _full(view, self.eps), _full(view, self.delta)


class GeometricDecayAdversary(Adversary):
    """``eps_t = eps0 * ratio**(t-1)``; stops once it would fall below ``floor``."""

    def __init__(self, eps0: float, ratio: float, delta: float = 0.0, floor: float = 0.0, name: str | None = None):
        if not 0 < ratio <= 1:
            raise ValueError("ratio must lie in (0, 1]")
        PrivacyEvent(eps0, delta)
        self.eps0 = float(eps0)
        self.ratio = float(ratio)
        self.delta = float(delta)
        self.floor = float(floor)
        self.name = name or f"geometric(eps0={eps0:g}, ratio={ratio:g})"

    def propose(self, view, rng):
        eps = self.eps0 * self.ratio ** (view.round - 1)
        if eps < self.floor or eps == 0.0:
            return _full(view, 0.0), _full(view, 0.0)
        return _full(view, eps), _full(view, self.delta)


class RandomEpsAdversary(Adversary):
    """Fresh ``eps ~ Uniform(low, high)`` every round."""

    def __init__(self, low: float, high: float, delta: float = 0.0, name: str | None = None):
        if not 0 < low <= high:
            raise ValueError("need 0 < low <= high")
        self.low = float(low)
        self.high = float(high)
        self.delta = float(delta)
        self.name = name or f"random(eps~U[{low:g},{high:g}])"

    def propose(self, view, rng):
        return rng.uniform(self.low, self.high, size=view.size), _full(view, self.delta)


class StoppingTimeAdversary(Adversary):
    """Plays ``eps`` until its centred loss walk crosses a LIL-shaped threshold.

    After round ``t`` the walk ``sum(X_j - eps tanh(eps/2))`` with ``X_j = +-eps``
    is compared with ``C eps sqrt(t log(log(n)/delta))``; once it is reached,
    or after ``n`` rounds, every later proposal is ``(0, 0)``.
    """

    def __init__(self, eps: float, delta_g: float, C: float, n: int, name: str | None = None):
        if not eps > 0:
            raise ValueError("eps must be positive")
        if not C > 0:
            raise ValueError("C must be positive")
        if not n >= 2 or not 0 < delta_g:
            raise ValueError("need n >= 2 and delta_g > 0")
        self.eps = float(eps)
        self.delta_g = float(delta_g)
        self.C = float(C)
        self.n = int(n)
        self.mean = rr_mean_loss(self.eps)
        # natural log of n inside, as in the crossing threshold of the walk
        self.log_term = math.log(math.log(self.n) / self.delta_g)
        if not self.log_term > 0:
            raise ValueError("need log(n) / delta_g > 1")
        self.name = name or f"stopping-time(eps={eps:g}, C={C:g}, n={n})"

    def threshold(self, t):
        return self.C * self.eps * np.sqrt(t * self.log_term)

    def crossed(self, loss, t):
        """Whether a game with cumulative loss ``loss`` after ``t`` rounds has stopped."""
        t = np.asarray(t)
        return (t >= 1) & (loss - t * self.mean >= self.threshold(t))

    def propose(self, view, rng):
        t = view.rounds_played
        if t >= self.n:
            return _full(view, 0.0), _full(view, 0.0)
        stop = self.crossed(view.loss, t)
        return np.where(stop, 0.0, self.eps), _full(view, 0.0)


class LuckyStreakAdversary(Adversary):
    """Spends ``eps_high`` while the loss path is at or below ``level``, else ``eps_low``."""

    def __init__(self, eps_low: float, eps_high: float, level: float = 0.0, delta: float = 0.0, name: str | None = None):
        if not 0 < eps_low <= eps_high:
            raise ValueError("need 0 < eps_low <= eps_high")
        self.eps_low = float(eps_low)
        self.eps_high = float(eps_high)
        self.level = float(level)
        self.delta = float(delta)
        self.name = name or f"lucky-streak(low={eps_low:g}, high={eps_high:g})"

    def propose(self, view, rng):
        eps = np.where(view.loss <= self.level, self.eps_high, self.eps_low)
        return eps, _full(view, self.delta)


class CallbackAdversary(Adversary):
    """Wrap ``fn(history, round, rng) -> PrivacyEvent | None`` as an adversary.

    ``None`` means stop. Only usable in single games, where the outcome
    history is available.
    """

    def __init__(self, fn: Callable[[tuple[RROutcome, ...], int, np.random.Generator], PrivacyEvent | None], name: str = "callback"):
        self.fn = fn
        self.name = name

    def propose(self, view, rng):
        if view.history is None:
            raise TypeError("CallbackAdversary needs the outcome history; use run_game")
        event = self.fn(view.history, view.round, rng)
        if event is None:
            return _full(view, 0.0), _full(view, 0.0)
        if not isinstance(event, PrivacyEvent):
            event = PrivacyEvent(*event)
        return _full(view, event.eps), _full(view, event.delta)


def stopping_time_adversary(eps: float, delta_g: float, C: float, n: int) -> StoppingTimeAdversary:
    return StoppingTimeAdversary(eps, delta_g, C, n)
