"""Randomized response and the adaptive composition games built on it.

Any (eps, delta)-DP round is a post-processing of randomized response on a
bit, and post-processing cannot increase privacy loss, so the games here run
randomized response directly with identity post-processing. The privacy loss
of an outcome is the log-ratio of its probabilities under inputs 0 and 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .accountant import AccountState, PrivacyEvent, update
from .filters import PrivacyFilter
from .serialization import dumps_line

__all__ = [
    "RROutcome",
    "rr_distribution",
    "rr_sample",
    "outcome_loss",
    "loss_increments",
    "RoundRecord",
    "Trace",
    "GameView",
    "Adversary",
    "run_game",
    "run_filter_game",
]


class RROutcome(IntEnum):
    ZERO = 0
    TOP = 1
    BOT = 2
    ONE = 3

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {RROutcome.ZERO: "0", RROutcome.TOP: "top", RROutcome.BOT: "bot", RROutcome.ONE: "1"}


def _check_rr_args(eps, delta, b):
    if b not in (0, 1):
        raise ValueError(f"b must be 0 or 1, got {b!r}")
    eps_arr = np.asarray(eps, dtype=float)
    delta_arr = np.asarray(delta, dtype=float)
    if np.any(~(eps_arr >= 0)) or np.any(np.isinf(eps_arr)):
        raise ValueError("eps must be finite and nonnegative")
    if np.any(~((delta_arr >= 0) & (delta_arr <= 1))):
        raise ValueError("delta must lie in [0, 1]")


def _p_top(eps, b):
    # e^eps / (1 + e^eps) for b = 0, 1 / (1 + e^eps) for b = 1
    sign = 1.0 if b == 0 else -1.0
    return 0.5 * (1.0 + np.tanh(sign * np.asarray(eps, dtype=float) / 2.0))


def rr_distribution(eps: float, delta: float, b: int) -> dict[RROutcome, float]:
    """Outcome probabilities of randomized response with parameters ``(eps, delta)`` on bit ``b``.

    ``delta = 1`` is accepted: the output is then the input bit itself.
    """
    _check_rr_args(eps, delta, b)
    eps, delta = float(eps), float(delta)
    big = 1.0 / (1.0 + math.exp(-eps))  # e^eps / (1 + e^eps)
    small = 1.0 / (1.0 + math.exp(eps))
    if b == 0:
        return {
            RROutcome.ZERO: delta,
            RROutcome.TOP: (1.0 - delta) * big,
            RROutcome.BOT: (1.0 - delta) * small,
            RROutcome.ONE: 0.0,
        }
    return {
        RROutcome.ZERO: 0.0,
        RROutcome.TOP: (1.0 - delta) * small,
        RROutcome.BOT: (1.0 - delta) * big,
        RROutcome.ONE: delta,
    }


def rr_sample(eps, delta, b: int, rng: np.random.Generator, size=None):
    """Draw randomized-response outcomes.

    Scalar parameters without ``size`` give one ``RROutcome``; otherwise an
    integer array of outcome codes broadcast against ``eps``, ``delta`` and ``size``.
    """
    _check_rr_args(eps, delta, b)
    scalar = size is None and np.ndim(eps) == 0 and np.ndim(delta) == 0
    extra = () if size is None else tuple(int(n) for n in np.atleast_1d(size))
    shape = np.broadcast_shapes(np.shape(eps), np.shape(delta), extra)
    delta = np.asarray(delta, dtype=float)
    u = rng.random(shape)
    cut = delta + (1.0 - delta) * _p_top(eps, b)
    extreme = RROutcome.ZERO if b == 0 else RROutcome.ONE
    codes = np.where(u < delta, int(extreme), np.where(u < cut, int(RROutcome.TOP), int(RROutcome.BOT)))
    if scalar:
        return RROutcome(int(codes))
    return codes.astype(np.int8)


def outcome_loss(eps: float, delta: float, outcome: RROutcome) -> float:
    """Privacy loss ``log(P[RR(0) = outcome] / P[RR(1) = outcome])``."""
    outcome = RROutcome(outcome)
    if outcome is RROutcome.TOP:
        return float(eps)
    if outcome is RROutcome.BOT:
        return -float(eps)
    return math.inf if outcome is RROutcome.ZERO else -math.inf


def loss_increments(eps, codes):
    """Vectorized ``outcome_loss`` over arrays of epsilons and outcome codes."""
    eps = np.asarray(eps, dtype=float)
    return np.select(
        [codes == RROutcome.TOP, codes == RROutcome.BOT, codes == RROutcome.ZERO],
        [eps, -eps, np.inf],
        default=-np.inf,
    )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    event: PrivacyEvent
    outcome: RROutcome | None
    loss_increment: float


@dataclass
class Trace:
    """One realized run of a composition game.

    ``records`` hold the rounds that ran. ``stop_round`` is the last round that
    ran; every later round is implicitly ``(0, 0)`` with zero loss. In a filter
    game, ``rejected`` is the candidate event the filter halted on.
    """

    records: list[RoundRecord] = field(default_factory=list)
    stop_round: int = 0
    b: int = 0
    rejected: PrivacyEvent | None = None
    states: list[AccountState] = field(default_factory=list)

    @property
    def increments(self) -> np.ndarray:
        return np.array([r.loss_increment for r in self.records], dtype=float)

    @property
    def losses(self) -> np.ndarray:
        """Cumulative loss after each round that ran."""
        inc = self.increments
        with np.errstate(invalid="ignore"):
            return np.cumsum(inc) if inc.size else inc

    @property
    def final_loss(self) -> float:
        losses = self.losses
        return float(losses[-1]) if losses.size else 0.0

    @property
    def events(self) -> list[PrivacyEvent]:
        return [r.event for r in self.records]

    @property
    def final_state(self) -> AccountState:
        return self.states[-1] if self.states else AccountState()

    def to_jsonl(self) -> str:
        lines = []
        cumulative = 0.0
        for rec in self.records:
            cumulative += rec.loss_increment
            lines.append(
                dumps_line(
                    {
                        "round": rec.round,
                        "eps": rec.event.eps,
                        "delta": rec.event.delta,
                        "outcome": rec.outcome.label,
                        "loss_increment": rec.loss_increment,
                        "loss_cumulative": cumulative,
                    }
                )
            )
        if self.rejected is not None:
            lines.append(
                dumps_line(
                    {
                        "round": self.stop_round + 1,
                        "eps": self.rejected.eps,
                        "delta": self.rejected.delta,
                        "outcome": None,
                        "loss_increment": 0.0,
                        "loss_cumulative": cumulative,
                    }
                )
            )
        return "".join(line + "\n" for line in lines)


@dataclass
class GameView:
    """What an adversary may condition on before proposing the next round.

    Fields are arrays over a batch of independent games (a batch of one in
    ``run_game``). Everything here is a function of past outcomes and the
    adversary's own past choices. ``history`` is only filled in single games.
    """

    round: int
    loss: np.ndarray
    sum_eps: np.ndarray
    sum_eps_sq: np.ndarray
    sum_delta: np.ndarray
    last_outcome: np.ndarray
    history: tuple[RROutcome, ...] | None = None

    @property
    def size(self) -> int:
        return int(np.shape(self.loss)[0])

    @property
    def rounds_played(self) -> int:
        return self.round - 1


class Adversary:
    """Strategy choosing each round's ``(eps, delta)`` from the view so far.

    ``propose`` returns two arrays of length ``view.size``. Proposing
    ``(0, 0)`` stops that game for good. Implementations must not keep
    per-game state on ``self``; everything they need is in the view.
    """

    name = "adversary"

    def propose(self, view: GameView, rng: np.random.Generator):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


def _single_view(i, loss, state, history):
    last = int(history[-1]) if history else -1
    return GameView(
        round=i,
        loss=np.array([loss]),
        sum_eps=np.array([state.sum_eps]),
        sum_eps_sq=np.array([state.sum_eps_sq]),
        sum_delta=np.array([state.sum_delta]),
        last_outcome=np.array([last]),
        history=tuple(history),
    )


def _propose_one(adversary, view, rng) -> PrivacyEvent:
    eps, delta = adversary.propose(view, rng)
    return PrivacyEvent(float(np.asarray(eps).reshape(-1)[0]), float(np.asarray(delta).reshape(-1)[0]))


def run_game(adversary: Adversary, max_rounds: int, b: int, rng: np.random.Generator) -> Trace:
    """Play the adaptive-parameter composition game for at most ``max_rounds``."""
    return _play(adversary, None, max_rounds, b, rng)


def run_filter_game(
    adversary: Adversary, filt: PrivacyFilter, max_rounds: int, b: int, rng: np.random.Generator
) -> Trace:
    """Composition game where each round runs only if ``filt`` says CONT on the extended prefix."""
    if filt is None:
        raise ValueError("run_filter_game needs a filter")
    return _play(adversary, filt, max_rounds, b, rng)


def _play(adversary, filt, max_rounds, b, rng) -> Trace:
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if b not in (0, 1):
        raise ValueError("b must be 0 or 1")
    trace = Trace(b=b)
    state = AccountState()
    loss = 0.0
    history: list[RROutcome] = []
    for i in range(1, max_rounds + 1):
        event = _propose_one(adversary, _single_view(i, loss, state, history), rng)
        if event.is_stop:
            break
        candidate = update(state, event)
        if filt is not None and bool(filt.halts(candidate)):
            trace.rejected = event
            break
        outcome = rr_sample(event.eps, event.delta, b, rng)
        inc = outcome_loss(event.eps, event.delta, outcome)
        state = candidate
        loss += inc
        history.append(outcome)
        trace.records.append(RoundRecord(i, event, outcome, inc))
        trace.states.append(state)
        trace.stop_round = i
    return trace

