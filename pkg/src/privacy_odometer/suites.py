"""Declarative audit suites: JSON files naming targets and adversaries.

A suite file looks like::

    {
      "name": "validity.all",
      "trials": 100000, "seed": 7, "max_rounds": 1000, "slack": 1.5,
      "targets": [{"name": "advanced-odometer", "kind": "advanced-odometer",
                   "delta_g": 0.05, "n": 1000, "expect": "PASS"}],
      "adversaries": [{"kind": "constant", "eps": 0.05}]
    }

Shipped suites live in the package's ``specs`` directory and can be named
without the ``.json`` suffix.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources

from .adversaries import (
    ConstantAdversary,
    GeometricDecayAdversary,
    LuckyStreakAdversary,
    RandomEpsAdversary,
    StoppingTimeAdversary,
)
from .filters import AdvancedFilter, BasicFilter, FilterBudget
from .montecarlo import AlwaysContinue, NaiveAdvancedComposition, Target, _check_trials, run_audit
from .odometers import AdvancedOdometer, BasicOdometer, BetaOdometer, OdometerConfig, wrap_delta_reduction
from .rr import Adversary

__all__ = ["SuiteError", "AuditSuite", "build_target", "build_adversary", "load_suite", "shipped_suites"]


class SuiteError(ValueError):
    """Unknown names or malformed fields in a suite description."""


def _get(cfg: dict, key: str, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise SuiteError(f"missing field {key!r} in {cfg!r}")
    return default


def _odometer_config(cfg):
    return OdometerConfig(
        delta_g=float(_get(cfg, "delta_g", required=True)),
        n=_get(cfg, "n"),
        gamma=_get(cfg, "gamma"),
    )


def _budget(cfg):
    return FilterBudget(
        float(_get(cfg, "eps_g", required=True)),
        float(_get(cfg, "delta_g", required=True)),
        float(_get(cfg, "delta_split", 0.5)),
    )


_TARGETS = {
    "basic-odometer": lambda c: BasicOdometer(float(_get(c, "delta_g", required=True))),
    "advanced-odometer": lambda c: AdvancedOdometer(_odometer_config(c)),
    "beta-odometer": lambda c: BetaOdometer(float(_get(c, "delta_g", required=True)), float(_get(c, "beta", required=True))),
    "basic-filter": lambda c: BasicFilter(_budget(c)),
    "advanced-filter": lambda c: AdvancedFilter(_budget(c)),
    "naive-advanced-composition": lambda c: NaiveAdvancedComposition(float(_get(c, "delta_g", required=True))),
    "always-continue": lambda c: AlwaysContinue(float(_get(c, "eps_g", required=True))),
}

_ADVERSARIES = {
    "constant": lambda c: ConstantAdversary(
        float(_get(c, "eps", required=True)), float(_get(c, "delta", 0.0)), _get(c, "rounds"), _get(c, "name")
    ),
    "geometric": lambda c: GeometricDecayAdversary(
        float(_get(c, "eps0", required=True)),
        float(_get(c, "ratio", required=True)),
        float(_get(c, "delta", 0.0)),
        float(_get(c, "floor", 0.0)),
        _get(c, "name"),
    ),
    "random": lambda c: RandomEpsAdversary(
        float(_get(c, "low", required=True)), float(_get(c, "high", required=True)), float(_get(c, "delta", 0.0)), _get(c, "name")
    ),
    "stopping-time": lambda c: StoppingTimeAdversary(
        float(_get(c, "eps", required=True)),
        float(_get(c, "delta_g", required=True)),
        float(_get(c, "C", required=True)),
        int(_get(c, "n", required=True)),
        _get(c, "name"),
    ),
    "lucky-streak": lambda c: LuckyStreakAdversary(
        float(_get(c, "eps_low", required=True)),
        float(_get(c, "eps_high", required=True)),
        float(_get(c, "level", 0.0)),
        float(_get(c, "delta", 0.0)),
        _get(c, "name"),
    ),
}


def build_target(cfg: dict) -> Target:
    """Target from its description; ``delta_prime > 0`` adds the delta-reduction wrapper."""
    kind = _get(cfg, "kind", required=True)
    if kind not in _TARGETS:
        raise SuiteError(f"unknown target kind {kind!r}; known: {', '.join(sorted(_TARGETS))}")
    try:
        impl = _TARGETS[kind](cfg)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SuiteError):
            raise
        raise SuiteError(f"bad parameters for target {kind!r}: {exc}") from None
    claimed = float(_get(cfg, "delta_g", 0.0))
    delta_prime = float(_get(cfg, "delta_prime", 0.0))
    if delta_prime > 0:
        impl = wrap_delta_reduction(impl, delta_prime)
        claimed += delta_prime
    expect = _get(cfg, "expect", "PASS")
    if expect not in ("PASS", "FAIL"):
        raise SuiteError(f"expect must be PASS or FAIL, got {expect!r}")
    return Target(str(_get(cfg, "name", kind)), impl, claimed, expect)


def build_adversary(cfg: dict) -> Adversary:
    kind = _get(cfg, "kind", required=True)
    if kind not in _ADVERSARIES:
        raise SuiteError(f"unknown adversary kind {kind!r}; known: {', '.join(sorted(_ADVERSARIES))}")
    try:
        return _ADVERSARIES[kind](cfg)
    except (TypeError, ValueError) as exc:
        raise SuiteError(f"bad parameters for adversary {kind!r}: {exc}") from None


@dataclass
class AuditSuite:
    name: str
    targets: list[Target]
    adversaries: list[Adversary]
    trials: int
    seed: int
    max_rounds: int = 1000
    slack: float = 1.5
    b: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "AuditSuite":
        targets = [build_target(t) for t in _get(data, "targets", required=True)]
        adversaries = [build_adversary(a) for a in _get(data, "adversaries", required=True)]
        if not targets or not adversaries:
            raise SuiteError("a suite needs at least one target and one adversary")
        names = [a.name for a in adversaries]
        if len(set(names)) != len(names):
            raise SuiteError("adversary names must be unique")
        suite = cls(
            name=str(_get(data, "name", "suite")),
            targets=targets,
            adversaries=adversaries,
            trials=_get(data, "trials", required=True),
            seed=int(_get(data, "seed", 0)),
            max_rounds=int(_get(data, "max_rounds", 1000)),
            slack=float(_get(data, "slack", 1.5)),
            b=int(_get(data, "b", 0)),
        )
        suite.validate()
        return suite

    def validate(self):
        try:
            _check_trials(self.trials)
        except ValueError as exc:
            raise SuiteError(str(exc)) from None
        if self.max_rounds < 1:
            raise SuiteError("max_rounds must be at least 1")

    def run(self, workers: int = 1):
        self.validate()
        return run_audit(self.targets, self.adversaries, self.trials, self.seed, self.max_rounds, self.slack, workers, self.b)


def shipped_suites() -> list[str]:
    files = resources.files(__package__).joinpath("specs")
    return sorted(p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json"))


def load_suite(name_or_path: str, **overrides) -> AuditSuite:
    """Load a shipped suite by name, or a suite file by path; ``overrides`` replace top-level fields."""
    if os.path.exists(name_or_path):
        with open(name_or_path, encoding="utf-8") as fh:
            text = fh.read()
    else:
        ref = resources.files(__package__).joinpath("specs", f"{name_or_path}.json")
        if not ref.is_file():
            raise SuiteError(f"no suite file or shipped suite named {name_or_path!r}; shipped: {', '.join(shipped_suites())}")
        text = ref.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SuiteError(f"suite is not valid JSON: {exc}") from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    return AuditSuite.from_dict(data)
