"""Self-normalized tail bound for martingales with predictable ranges."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["MartingaleEnvelope", "self_normalized_bound"]

_INV_E = math.exp(-1.0)


def self_normalized_bound(u_sq, beta, delta):
    """Threshold that ``|M_k|`` exceeds with probability at most ``delta``.

    ``M_k`` is a martingale whose increments lie in predictable intervals
    ``[C_i, D_i]`` and ``u_sq = sum((D_i - C_i)**2)``. The threshold is

        sqrt((u_sq/4 + beta) * (2 + log(u_sq/(4 beta) + 1)) * log(1/delta))

    valid for any fixed ``k``, ``beta > 0`` and ``delta <= 1/e``. ``u_sq`` may
    be an array.
    """
    beta = float(beta)
    delta = float(delta)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if not 0.0 < delta <= _INV_E:
        raise ValueError(f"delta must lie in (0, 1/e], got {delta!r}")
    if isinstance(u_sq, np.ndarray):
        if np.any(u_sq < 0):
            raise ValueError("u_sq must be nonnegative")
        half = u_sq / 4.0
        return np.sqrt((half + beta) * (2.0 + np.log1p(half / beta)) * -np.log(delta))
    u_sq = float(u_sq)
    if u_sq < 0:
        raise ValueError(f"u_sq must be nonnegative, got {u_sq!r}")
    half = u_sq / 4.0
    return math.sqrt((half + beta) * (2.0 + math.log1p(half / beta)) * -math.log(delta))


@dataclass(frozen=True)
class MartingaleEnvelope:
    """Accumulated squared increment ranges ``U_k^2`` after ``k`` steps."""

    u_sq: float = 0.0
    k: int = 0

    def __post_init__(self):
        if self.u_sq < 0:
            raise ValueError("u_sq must be nonnegative")

    def extend(self, lower: float, upper: float) -> "MartingaleEnvelope":
        if not upper > lower:
            raise ValueError("need lower < upper")
        return MartingaleEnvelope(self.u_sq + (upper - lower) ** 2, self.k + 1)

    @classmethod
    def for_randomized_response(cls, eps_values) -> "MartingaleEnvelope":
        """Envelope of a centred randomized-response loss walk: ranges ``2 eps``."""
        eps = np.asarray(eps_values, dtype=float)
        return cls(float(4.0 * np.sum(eps * eps)), int(eps.size))

    def bound(self, beta: float, delta: float) -> float:
        return self_normalized_bound(self.u_sq, beta, delta)
