"""Bounded history windows of timestamped records, plus the append-only log.

One Store holds every relation of a loaded program. Records carry a global
sequence number that increases strictly across all relations, and the engine
clock guarantees timestamps are non-decreasing in sequence order. The window
is a ring: when a relation reaches capacity the oldest record is evicted, and
reaching past the window is an error rather than a silent null.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

from .ast import RelationDecl
from .errors import (
    ArityError,
    HistoryUnavailableError,
    LiotError,
    ReplayError,
    UnknownFieldError,
    UnknownRelationError,
)
from .values import Value, dump_json, ensure_value, value_from_json, value_to_json

DEFAULT_WINDOW = 1024


@dataclass(frozen=True)
class Record:
    t: int
    seq: int
    values: tuple[Value, ...]


class RelationWindow:
    """Ring of at most ``capacity`` records, newest last."""

    def __init__(self, decl: RelationDecl, capacity: int):
        if capacity < 1:
            raise ValueError(f"window capacity must be positive, got {capacity}")
        self.decl = decl
        self.capacity = capacity
        self.records: list[Record] = []

    def append(self, record: Record) -> None:
        self.records.append(record)
        if len(self.records) > self.capacity:
            del self.records[0]

    def __len__(self) -> int:
        return len(self.records)


class Store:
    """All relation windows of one run, guarded by a single lock.

    Only the engine's event loop writes; HTTP readers take snapshots under the
    same lock so they never observe a half-applied insert.
    """

    def __init__(
        self,
        relations: Iterable[RelationDecl],
        window_default: int = DEFAULT_WINDOW,
        window_overrides: dict[str, int] | None = None,
    ):
        overrides = window_overrides or {}
        self.windows: dict[str, RelationWindow] = {}
        for decl in relations:
            capacity = overrides.get(decl.name, window_default)
            self.windows[decl.name] = RelationWindow(decl, capacity)
        self.next_seq = 1
        self.lock = threading.RLock()

    def window(self, relation: str) -> RelationWindow:
        try:
            return self.windows[relation]
        except KeyError:
            raise UnknownRelationError(f"unknown relation {relation}") from None

    def insert(
        self, relation: str, values: Iterable[object], t: int, seq: int | None = None
    ) -> Record:
        window = self.window(relation)
        normalized = tuple(ensure_value(v) for v in values)
        if len(normalized) != len(window.decl.fields):
            raise ArityError(
                f"relation {relation} takes {len(window.decl.fields)} values, "
                f"got {len(normalized)}"
            )
        with self.lock:
            if seq is None:
                seq = self.next_seq
            record = Record(t=t, seq=seq, values=normalized)
            window.append(record)
            self.next_seq = max(self.next_seq, seq) + 1
        return record

    def latest(self, relation: str, field: str, offset: int = 0) -> Value:
        """Field of the newest record (offset 0) or of the k-th previous one
        (offset -k). ``T`` reads the timestamp as a number."""
        window = self.window(relation)
        if offset > 0:
            raise HistoryUnavailableError(f"offset must be non-positive, got {offset}")
        with self.lock:
            index = len(window.records) - 1 + offset
            if index < 0:
                raise HistoryUnavailableError(
                    f"{relation} holds {len(window.records)} records, "
                    f"offset {offset} reaches past the window"
                )
            record = window.records[index]
        if field == "T":
            return float(record.t)
        try:
            position = window.decl.fields.index(field)
        except ValueError:
            raise UnknownFieldError(f"relation {relation} has no field {field}") from None
        return record.values[position]

    def read(self, relation: str, limit: int) -> list[Record]:
        """Newest-first prefix of the window, at most ``limit`` records."""
        if limit < 1:
            raise ValueError(f"limit must be positive, got {limit}")
        window = self.window(relation)
        with self.lock:
            newest_first = list(reversed(window.records))
        return newest_first[:limit]

    def size(self, relation: str) -> int:
        with self.lock:
            return len(self.window(relation))

    def snapshot(self) -> dict[str, list[Record]]:
        """Deep-comparable copy of every window plus the seq counter."""
        with self.lock:
            return {name: list(w.records) for name, w in self.windows.items()}


# -- persistence ---------------------------------------------------------------


def log_line(relation: str, record: Record) -> str:
    entry = {
        "rel": relation,
        "t": record.t,
        "seq": record.seq,
        "v": [value_to_json(v) for v in record.values],
    }
    return dump_json(entry)


class PersistenceLog:
    """Append-only JSON Lines writer, one entry per stored record."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._file: IO[str] = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, relation: str, record: Record) -> None:
        with self._lock:
            self._file.write(log_line(relation, record) + "\n")
            self._file.flush()

    def close(self) -> None:
        with self._lock:
            if not self._file.closed:
                self._file.close()


def replay_log(store: Store, path: str | Path) -> int:
    """Rebuild windows from a persistence log; returns the record count.

    Replay only restores state: it never fires triggers, rules or webhooks.
    Any malformed line aborts the replay with its line number.
    """
    count = 0
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReplayError(f"log line {line_number}: invalid JSON: {exc}", line_number)
            if not isinstance(entry, dict):
                raise ReplayError(f"log line {line_number}: not an object", line_number)
            try:
                relation = entry["rel"]
                t = entry["t"]
                seq = entry["seq"]
                raw_values = entry["v"]
            except KeyError as exc:
                raise ReplayError(f"log line {line_number}: missing key {exc}", line_number)
            if not isinstance(relation, str) or not isinstance(raw_values, list):
                raise ReplayError(f"log line {line_number}: malformed entry", line_number)
            if not isinstance(t, int) or isinstance(t, bool):
                raise ReplayError(f"log line {line_number}: t must be an integer", line_number)
            if not isinstance(seq, int) or isinstance(seq, bool):
                raise ReplayError(f"log line {line_number}: seq must be an integer", line_number)
            try:
                values = [value_from_json(v) for v in raw_values]
                store.insert(relation, values, t=t, seq=seq)
            except LiotError as exc:
                raise ReplayError(f"log line {line_number}: {exc}", line_number) from None
            count += 1
    return count
