"""Operator logic run inside each worker: hash-join, group-by count, and
range-partitioned sort.

Each operator exposes its keyed state (scope -> value) together with the
mutability of the current phase, which drives the state-migration path the
controller picks.  Blocking operators hold output until all input, including
state scattered across helpers, has been combined.
"""

from __future__ import annotations

from typing import Callable

from ..core import KeyedState, Mutability, extract_state, merge_state

Emit = Callable[[int, int, bytes], None]


class HashJoin:
    """Hash join worker logic.  The build phase fills per-key tuple lists
    (mutable); the probe phase reads them without modification (immutable)
    and emits one output per matching build tuple."""

    name = "join"
    blocking = False  # probe output streams

    def __init__(self):
        self.state = KeyedState(entries={}, mutability=Mutability.MUTABLE, combiner="list_append")
        self.replica = KeyedState(entries={}, mutability=Mutability.IMMUTABLE, combiner="list_append")
        self.phase = "build"

    @property
    def mutability(self) -> Mutability:
        return Mutability.MUTABLE if self.phase == "build" else Mutability.IMMUTABLE

    def start_probe(self) -> None:
        self.phase = "probe"
        self.state.mutability = Mutability.IMMUTABLE

    def process(self, key: int, seq: int, payload: bytes, emit: Emit) -> None:
        if self.phase == "build":
            bucket = self.state.entries.get(key)
            if bucket is None:
                self.state.entries[key] = [seq]
            else:
                bucket.append(seq)
            return
        bucket = self.state.entries.get(key)
        if bucket is None:
            bucket = self.replica.entries.get(key)
        if bucket:
            for _ in bucket:
                emit(key, seq, payload)

    def finalize(self, emit: Emit) -> None:
        pass


class GroupByCount:
    """Counts records per group; mutable state, blocking output."""

    name = "groupby"
    blocking = True

    def __init__(self):
        self.state = KeyedState(entries={}, mutability=Mutability.MUTABLE, combiner="sum")
        self.replica = KeyedState(entries={}, mutability=Mutability.IMMUTABLE, combiner="sum")

    @property
    def mutability(self) -> Mutability:
        return Mutability.MUTABLE

    def process(self, key: int, seq: int, payload: bytes, emit: Emit) -> None:
        entries = self.state.entries
        entries[key] = entries.get(key, 0) + 1

    def finalize(self, emit: Emit) -> None:
        for key in sorted(self.state.entries):
            emit(key, self.state.entries[key], b"")


class RangeSort:
    """Range-partitioned sort: each scope is a range id whose value is the
    (lazily sorted) run of keys seen for that range."""

    name = "sort"
    blocking = True

    def __init__(self, locate_scope: Callable[[int], int]):
        self.state = KeyedState(entries={}, mutability=Mutability.MUTABLE, combiner="sorted_merge")
        self.replica = KeyedState(entries={}, mutability=Mutability.IMMUTABLE, combiner="sorted_merge")
        self._locate_scope = locate_scope

    @property
    def mutability(self) -> Mutability:
        return Mutability.MUTABLE

    def process(self, key: int, seq: int, payload: bytes, emit: Emit) -> None:
        scope = self._locate_scope(key)
        run = self.state.entries.get(scope)
        if run is None:
            self.state.entries[scope] = [key]
        else:
            run.append(key)

    def sort_runs(self) -> None:
        for run in self.state.entries.values():
            run.sort()

    def extract(self, scopes, remove: bool = False) -> KeyedState:
        self.sort_runs()
        return extract_state(self.state, scopes, remove=remove)

    def finalize(self, emit: Emit) -> None:
        for scope in sorted(self.state.entries):
            for key in sorted(self.state.entries[scope]):
                emit(key, scope, b"")


def merge_into(op, fragment: KeyedState) -> None:
    """Merge a migrated fragment into the right store of an operator: owned
    state for mutable fragments, the read-only replica for immutable ones."""
    if fragment.mutability is Mutability.IMMUTABLE:
        merge_state(op.replica, fragment)
    else:
        if op.name == "sort":
            op.sort_runs()
        merge_state(op.state, fragment)
