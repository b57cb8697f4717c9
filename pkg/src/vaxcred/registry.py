"""One-use coupon registry: the issuer's only durable state.

Tracks each coupon id through unused -> dose1 -> dose2 under a lock, so
concurrent redemptions of the same coupon serialize and exactly one wins.
Every transition is appended to a JSON-lines log before the call returns;
replaying the log reproduces the in-memory state, tolerating a torn final
line from a crash mid-append.

Retries are recognized by request digest: a transition replayed with the
digest already on file is a no-op success instead of a double-use error.
Dismantling erases all state, truncates the log to a single marker, and
leaves the registry refusing further work.
"""

from __future__ import annotations

import enum
import json
import os
import threading
from dataclasses import dataclass
from typing import Optional

from .errors import (
    AlreadyUsedError,
    CanonicalError,
    DismantledError,
    InvalidTransitionError,
    UnknownCouponError,
)


class Stage(enum.Enum):
    UNUSED = "unused"
    DOSE1 = "dose1"
    DOSE2 = "dose2"


@dataclass(frozen=True)
class CouponState:
    stage: Stage
    date: Optional[str] = None

    @property
    def is_used(self) -> bool:
        return self.stage is not Stage.UNUSED


class _Entry:
    __slots__ = ("state", "requests")

    def __init__(self):
        self.state = CouponState(Stage.UNUSED)
        self.requests = {}  # dose number -> request digest hex


class Registry:
    """In-memory map of coupon id -> state, optionally backed by a log file."""

    def __init__(self, log_path=None):
        self._lock = threading.Lock()
        self._entries = {}
        self._seq = 0
        self._dismantled = False
        self._log_path = os.fspath(log_path) if log_path is not None else None
        self._log_fh = None
        if self._log_path is not None:
            if os.path.exists(self._log_path):
                self._replay_file(self._log_path)
            self._log_fh = open(self._log_path, "a", encoding="utf-8")

    # -- logging ---------------------------------------------------------

    def _append(self, record: dict) -> None:
        self._seq += 1
        record["seq"] = self._seq
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())

    def _replay_file(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            data = fh.read()
        lines = data.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        for i, line in enumerate(lines):
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    break  # torn final line from a crash mid-append
                raise CanonicalError(f"corrupt registry log at line {i + 1}")
            self._apply(record)
            self._seq = max(self._seq, int(record.get("seq", 0)))

    def _apply(self, record: dict) -> None:
        op = record.get("op")
        if op == "dismantle":
            self._entries.clear()
            self._dismantled = True
            return
        cid = bytes.fromhex(record["cid"])
        if op == "register":
            self._entries.setdefault(cid, _Entry())
            return
        if op in ("dose1", "dose2"):
            entry = self._entries.setdefault(cid, _Entry())
            dose = 1 if op == "dose1" else 2
            entry.state = CouponState(
                Stage.DOSE1 if dose == 1 else Stage.DOSE2, record.get("date")
            )
            req = record.get("req")
            if req:
                entry.requests[dose] = req
            return
        raise CanonicalError(f"unknown registry record op {op!r}")

    # -- queries ---------------------------------------------------------

    def _guard(self) -> None:
        if self._dismantled:
            raise DismantledError("registry has been dismantled")

    def check(self, coupon_id: bytes) -> CouponState:
        with self._lock:
            self._guard()
            entry = self._entries.get(coupon_id)
            if entry is None:
                raise UnknownCouponError(coupon_id.hex())
            return entry.state

    def known(self, coupon_id: bytes) -> bool:
        with self._lock:
            self._guard()
            return coupon_id in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    @property
    def dismantled(self) -> bool:
        return self._dismantled

    def snapshot(self) -> dict:
        """Hex id -> (stage value, date), for state comparisons in tests."""
        with self._lock:
            return {
                cid.hex(): (e.state.stage.value, e.state.date)
                for cid, e in self._entries.items()
            }

    # -- transitions -----------------------------------------------------

    def register(self, coupon_id: bytes) -> None:
        if not isinstance(coupon_id, bytes) or len(coupon_id) != 32:
            raise CanonicalError("coupon id must be 32 bytes")
        with self._lock:
            self._guard()
            if coupon_id in self._entries:
                return  # never downgrade a known coupon
            self._entries[coupon_id] = _Entry()
            self._append({"cid": coupon_id.hex(), "op": "register", "date": None})

    def mark_used(
        self,
        coupon_id: bytes,
        dose: int,
        date: Optional[str] = None,
        request_digest: Optional[bytes] = None,
    ) -> bool:
        """Atomically advance one dose. Returns True if the state moved,
        False for a recognized retry (same request digest already applied).
        """
        if dose not in (1, 2):
            raise InvalidTransitionError(f"dose must be 1 or 2, got {dose}")
        req_hex = request_digest.hex() if request_digest else None
        with self._lock:
            self._guard()
            entry = self._entries.get(coupon_id)
            if entry is None:
                raise UnknownCouponError(coupon_id.hex())
            stage = entry.state.stage
            if dose == 1:
                if stage is Stage.UNUSED:
                    pass
                elif req_hex is not None and entry.requests.get(1) == req_hex:
                    return False
                else:
                    raise AlreadyUsedError(coupon_id.hex())
            else:
                if stage is Stage.UNUSED:
                    raise InvalidTransitionError("second dose before first")
                if stage is Stage.DOSE2:
                    if req_hex is not None and entry.requests.get(2) == req_hex:
                        return False
                    raise AlreadyUsedError(coupon_id.hex())
            new_stage = Stage.DOSE1 if dose == 1 else Stage.DOSE2
            entry.state = CouponState(new_stage, date)
            if req_hex is not None:
                entry.requests[dose] = req_hex
            record = {
                "cid": coupon_id.hex(),
                "op": new_stage.value,
                "date": date,
            }
            if req_hex is not None:
                record["req"] = req_hex
            self._append(record)
            return True

    def dismantle(self, *, administrative: bool = False) -> None:
        """Erase every entry and truncate the log to a single marker line.
        Requires the administrative flag; repeat calls are no-ops."""
        if not administrative:
            raise InvalidTransitionError("dismantle requires the administrative flag")
        with self._lock:
            if self._dismantled:
                return
            self._entries.clear()
            self._dismantled = True
            self._seq += 1
            if self._log_fh is not None:
                self._log_fh.close()
                with open(self._log_path, "w", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {"op": "dismantle", "seq": self._seq}, sort_keys=True
                        )
                        + "\n"
                    )
                    fh.flush()
                    os.fsync(fh.fileno())
                self._log_fh = open(self._log_path, "a", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            if self._log_fh is not None:
                self._log_fh.close()
                self._log_fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
