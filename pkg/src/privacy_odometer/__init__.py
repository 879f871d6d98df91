"""Streaming privacy accounting for compositions with adaptively chosen parameters.

Odometers report a running high-probability bound on the realized privacy
loss; filters decide whether one more round may run within a global budget.
The ``rr`` and ``montecarlo`` modules simulate the composition game on
randomized response and audit every bound against its claimed failure
probability.
"""

from .accountant import AccountState, PrivacyEvent, fold, mu_upper, rr_mean_loss, update
from .concentration import MartingaleEnvelope, self_normalized_bound
from .filters import (
    ADVANCED_FILTER_CONSTANT,
    AdvancedFilter,
    BasicFilter,
    FilterBudget,
    FilterDecision,
    PrivacyFilter,
    Verdict,
    advanced_filter,
    advanced_filter_bound,
    basic_filter,
    gate,
)
from .odometers import (
    AdvancedOdometer,
    BasicOdometer,
    BetaOdometer,
    DeltaReducedFilter,
    DeltaReducedOdometer,
    OdometerConfig,
    OdometerReading,
    PrivacyOdometer,
    advanced_odometer,
    basic_odometer,
    beta_odometer,
    wrap_delta_reduction,
)

__version__ = "0.1.0"
