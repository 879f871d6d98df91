"""Append-only privacy ledger with a checksum chain.

Each line is one JSON record::

    {"seq": 1, "ts": "...", "eps": ..., "delta": ..., "state": {...}, "prev": "...", "checksum": "..."}

``state`` is the account snapshot after the event. ``checksum`` is the SHA-256
of the canonical encoding of every field except ``ts`` and ``checksum``, so
timestamps never influence integrity checks. The first record chains to
``GENESIS``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable

from .accountant import AccountState, PrivacyEvent, update
from .serialization import dumps_line

__all__ = ["GENESIS", "LedgerRecord", "LedgerCorruptionError", "ledger_append", "ledger_replay", "read_records"]

GENESIS = "0" * 64


class LedgerCorruptionError(ValueError):
    """The ledger failed verification; ``seq`` is the first bad record."""

    def __init__(self, seq: int, reason: str):
        super().__init__(f"ledger corrupt at record {seq}: {reason}")
        self.seq = seq
        self.reason = reason


@dataclass(frozen=True)
class LedgerRecord:
    seq: int
    ts: str
    event: PrivacyEvent
    state: AccountState
    prev: str
    checksum: str

    @staticmethod
    def digest(seq: int, event: PrivacyEvent, state: AccountState, prev: str) -> str:
        body = dumps_line({"seq": seq, "eps": event.eps, "delta": event.delta, "state": state.to_dict(), "prev": prev})
        return hashlib.sha256(body.encode("utf-8")).hexdigest()

    def to_line(self) -> str:
        return dumps_line(
            {
                "seq": self.seq,
                "ts": self.ts,
                "eps": self.event.eps,
                "delta": self.event.delta,
                "state": self.state.to_dict(),
                "prev": self.prev,
                "checksum": self.checksum,
            }
        )


def _parse(line: str, seq: int) -> LedgerRecord:
    if not line.endswith("\n"):
        raise LedgerCorruptionError(seq, "truncated record")
    try:
        raw = json.loads(line)
        return LedgerRecord(
            seq=int(raw["seq"]),
            ts=str(raw["ts"]),
            event=PrivacyEvent(float(raw["eps"]), float(raw["delta"])),
            state=AccountState.from_dict(raw["state"]),
            prev=str(raw["prev"]),
            checksum=str(raw["checksum"]),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise LedgerCorruptionError(seq, f"unreadable record ({exc})") from None


def read_records(path) -> list[LedgerRecord]:
    """Read and verify every record; raise on the first inconsistency."""
    if not os.path.exists(path):
        return []
    records = []
    state = AccountState()
    prev = GENESIS
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for seq, line in enumerate(fh, start=1):
            rec = _parse(line, seq)
            if rec.seq != seq:
                raise LedgerCorruptionError(seq, f"sequence number {rec.seq}")
            if rec.prev != prev:
                raise LedgerCorruptionError(seq, "broken checksum chain")
            if rec.checksum != LedgerRecord.digest(rec.seq, rec.event, rec.state, rec.prev):
                raise LedgerCorruptionError(seq, "checksum mismatch")
            state = update(state, rec.event)
            if state != rec.state:
                raise LedgerCorruptionError(seq, "snapshot does not match replay")
            records.append(rec)
            prev = rec.checksum
    return records


def ledger_replay(path) -> AccountState:
    """Account state after every event in the ledger (empty state if absent)."""
    records = read_records(path)
    return records[-1].state if records else AccountState()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class LedgerWriter:
    """Appends records to a verified ledger, one ``fsync``'d line per event."""

    def __init__(self, path):
        self.path = path
        records = read_records(path)
        self.state = records[-1].state if records else AccountState()
        self.seq = len(records)
        self.prev = records[-1].checksum if records else GENESIS

    def append(self, event: PrivacyEvent) -> LedgerRecord:
        state = update(self.state, event)
        seq = self.seq + 1
        rec = LedgerRecord(seq, _now(), event, state, self.prev, LedgerRecord.digest(seq, event, state, self.prev))
        with open(self.path, "a", encoding="utf-8", newline="") as fh:
            fh.write(rec.to_line() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self.state, self.seq, self.prev = state, seq, rec.checksum
        return rec


def ledger_append(path, events: Iterable[PrivacyEvent]) -> AccountState:
    """Append ``events`` to the ledger at ``path`` and return the new state."""
    writer = LedgerWriter(path)
    for event in events:
        if not isinstance(event, PrivacyEvent):
            event = PrivacyEvent(*event)
        writer.append(event)
    return writer.state
