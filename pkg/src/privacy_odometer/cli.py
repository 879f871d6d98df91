"""Command-line interface.

``privodo track``    read ``{"eps": .., "delta": ..}`` JSON lines, print readings or decisions
``privodo audit``    run an audit suite and write JSON and text reports
``privodo compare``  print the composition bounds of one schedule side by side

Every flag can also be set through an environment variable named
``PRIVODO_`` plus the flag name in upper case with dashes as underscores
(``--delta-budget`` -> ``PRIVODO_DELTA_BUDGET``). Explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .accountant import AccountState, PrivacyEvent, update
from .filters import AdvancedFilter, BasicFilter, FilterBudget, PrivacyFilter, Verdict
from .ledger import LedgerCorruptionError, LedgerWriter
from .montecarlo import compare_bounds, format_reports
from .odometers import AdvancedOdometer, BasicOdometer, BetaOdometer, OdometerConfig, wrap_delta_reduction
from .serialization import dumps_line
from .suites import SuiteError, load_suite

EXIT_OK = 0
EXIT_HALT = 2
EXIT_INPUT = 3
EXIT_PRECONDITION = 4
EXIT_AUDIT_MISMATCH = 5

ENV_PREFIX = "PRIVODO_"

MODES = ("odometer:basic", "odometer:advanced", "odometer:beta", "filter:basic", "filter:advanced")


class PreconditionError(ValueError):
    pass


def _env_default(flag: str, cast):
    raw = os.environ.get(ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper())
    if raw is None:
        return None
    try:
        return cast(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value {raw!r} for {flag} from environment") from None


def _add(parser, flag, cast=str, default=None, **kwargs):
    env = _env_default(flag, cast)
    parser.add_argument(flag, type=cast, default=default if env is None else env, **kwargs)


def build_tracker(args):
    """Odometer or filter selected by the flags; raises ``PreconditionError``."""
    mode = args.mode
    try:
        if mode == "odometer:basic":
            impl = BasicOdometer(args.delta_budget)
        elif mode == "odometer:advanced":
            if args.n is None and args.gamma is None:
                raise PreconditionError("odometer:advanced needs --n or --gamma")
            impl = AdvancedOdometer(OdometerConfig(args.delta_budget, n=args.n, gamma=args.gamma))
        elif mode == "odometer:beta":
            if args.beta is None:
                raise PreconditionError("odometer:beta needs --beta")
            impl = BetaOdometer(args.delta_budget, args.beta)
        elif mode in ("filter:basic", "filter:advanced"):
            if args.eps_budget is None:
                raise PreconditionError(f"{mode} needs --eps-budget")
            budget = FilterBudget(args.eps_budget, args.delta_budget, args.delta_split)
            impl = BasicFilter(budget) if mode == "filter:basic" else AdvancedFilter(budget)
        else:
            raise PreconditionError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
        if args.delta_prime:
            impl = wrap_delta_reduction(impl, args.delta_prime)
    except PreconditionError:
        raise
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None
    return impl


def parse_event(line: str) -> PrivacyEvent:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not JSON ({exc.msg})") from None
    if not isinstance(raw, dict) or "eps" not in raw:
        raise ValueError('expected an object with "eps" and optional "delta"')
    eps, delta = raw["eps"], raw.get("delta", 0.0)
    for value in (eps, delta):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("eps and delta must be numbers")
    return PrivacyEvent(eps, delta)


def cmd_track(args, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if args.delta_budget is None:
        print("error: --delta-budget is required", file=stderr)
        return EXIT_PRECONDITION
    try:
        tracker = build_tracker(args)
    except PreconditionError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_PRECONDITION

    writer = None
    state = AccountState()
    if args.ledger:
        try:
            writer = LedgerWriter(args.ledger)
        except LedgerCorruptionError as exc:
            print(f"error: {exc}", file=stderr)
            return EXIT_INPUT
        state = writer.state

    is_filter = isinstance(tracker, PrivacyFilter)
    for lineno, line in enumerate(stdin, start=1):
        if not line.strip():
            continue
        try:
            event = parse_event(line)
        except ValueError as exc:
            print(f"error: input line {lineno}: {exc}", file=stderr)
            return EXIT_INPUT
        candidate = update(state, event)
        if is_filter:
            decision = tracker(candidate)
            stdout.write(dumps_line({"round": candidate.rounds, "decision": decision.verdict.value, "bound": decision.bound_value}) + "\n")
            if decision.verdict is Verdict.HALT:
                stdout.flush()
                return EXIT_HALT
        else:
            stdout.write(dumps_line({"round": candidate.rounds, "reading": float(tracker.bound(candidate))}) + "\n")
        if writer is not None:
            writer.append(event)
        state = candidate
    stdout.flush()
    return EXIT_OK


def cmd_audit(args, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if args.suite is None:
        print("error: --suite is required", file=stderr)
        return EXIT_INPUT
    try:
        suite = load_suite(args.suite, trials=args.trials, seed=args.seed)
    except SuiteError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    start = time.perf_counter()
    reports = suite.run(workers=args.workers)
    elapsed = time.perf_counter() - start
    table = format_reports(reports)
    payload = {
        "suite": suite.name,
        "trials": suite.trials,
        "seed": suite.seed,
        "reports": [_stable(r.to_dict()) for r in reports],
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{suite.name}.report.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, indent=2) + "\n")
        with open(os.path.join(args.out, f"{suite.name}.report.txt"), "w", encoding="utf-8") as fh:
            fh.write(table)
    stdout.write(table)
    print(f"audit {suite.name}: {elapsed:.1f}s", file=stderr)
    mismatched = [r.target for r in reports if not r.as_expected]
    if mismatched:
        print(f"verdict differs from expectation for: {', '.join(mismatched)}", file=stderr)
        return EXIT_AUDIT_MISMATCH
    return EXIT_OK


def _stable(report: dict) -> dict:
    # wall-clock runtime would make report files differ between identical runs
    return {k: v for k, v in report.items() if k != "runtime_seconds"}


def cmd_compare(args, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if args.eps is None or args.rounds is None or args.delta_budget is None or (args.n is None and args.gamma is None):
        print("error: compare needs --eps, --rounds, --delta-budget and --n or --gamma", file=stderr)
        return EXIT_PRECONDITION
    try:
        table = compare_bounds([args.eps] * args.rounds, args.delta_budget, args.n, args.eps_budget, args.gamma)
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_PRECONDITION
    stdout.write(table.format())
    return EXIT_OK


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError("must be nonnegative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privodo", description="Privacy odometers and filters for adaptive composition.")
    sub = parser.add_subparsers(dest="command", required=True)

    def budget_flags(p):
        _add(p, "--delta-budget", float, help="global failure probability delta_g")
        _add(p, "--eps-budget", float, help="global privacy budget eps_g (filters)")
        _add(p, "--delta-split", float, 0.5, help="share of delta_g spent on the summed-delta test (advanced filter)")
        _add(p, "--n", _positive_int, help="horizon; sets the advanced odometer granularity to 1/n^2")
        _add(p, "--gamma", float, help="granularity of the advanced odometer (overrides --n)")

    track = sub.add_parser("track", help="stream readings or filter decisions for events on stdin")
    _add(track, "--mode", str, "odometer:basic", help=f"one of {', '.join(MODES)}")
    budget_flags(track)
    _add(track, "--beta", float, help="concentration parameter of odometer:beta")
    _add(track, "--delta-prime", float, 0.0, help="wrap with the delta-reduction lift at this budget")
    _add(track, "--ledger", str, help="append-only ledger to resume from and extend")
    track.set_defaults(func=cmd_track)

    audit = sub.add_parser("audit", help="run a Monte-Carlo audit suite")
    _add(audit, "--suite", str, help="shipped suite name or path to a suite JSON file")
    _add(audit, "--trials", int, help="override trials per adversary")
    _add(audit, "--seed", int, help="override master seed")
    _add(audit, "--out", str, help="directory for report files")
    _add(audit, "--workers", int, 1, help="worker threads")
    audit.set_defaults(func=cmd_audit)

    compare = sub.add_parser("compare", help="compare composition bounds on a homogeneous schedule")
    budget_flags(compare)
    _add(compare, "--eps", float, help="per-round epsilon")
    _add(compare, "--rounds", int, help="number of rounds")
    compare.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
