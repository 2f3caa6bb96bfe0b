"""Value types and partitioning/routing logic shared by the engine, the
controller and the harness.

Keys are plain integers; real attributes (months, locations, ...) are
dictionary-encoded by the harness before they reach this layer.  Fractional
splits are stored as integer (numerator, denominator) pairs and resolved with
deterministic modular counters, so routing arithmetic is exact and replayable.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from .errors import InvalidShareError, MergeError, RoutingError


class Record(NamedTuple):
    """A keyed data tuple.  ``seq`` is strictly increasing per key in source
    emission order, which lets downstream observers check ordering."""

    key: int
    seq: int
    payload: bytes = b""


END = "END"
PARTITION_CHANGE = "PARTITION_CHANGE"


class Marker(NamedTuple):
    """In-stream control marker.

    END is emitted exactly once per upstream worker per execution.
    PARTITION_CHANGE carries the epoch of the logic change that triggered it.
    """

    kind: str
    origin: int
    epoch: int = 0


# ---------------------------------------------------------------------------
# Base partitioners
# ---------------------------------------------------------------------------


class HashBase:
    """Modular hash partitioning: scope of a key is the key itself."""

    kind = "hash"

    def __init__(self, workers: int):
        if workers < 1:
            raise RoutingError("hash base needs at least one worker")
        self.workers = workers

    def locate(self, key: int) -> tuple[int, int]:
        """Return (scope, worker) for ``key``."""
        return key, key % self.workers

    def owner_of_scope(self, scope: int) -> int:
        return scope % self.workers

    def scopes_of_worker(self, worker: int, keys: Iterable[int]) -> list[int]:
        return [k for k in keys if k % self.workers == worker]


class RangeBase:
    """Range partitioning over integer keys.  ``boundaries`` are the inclusive
    upper bounds of each range except the last, which is open-ended; range i
    is owned by worker i."""

    kind = "range"

    def __init__(self, boundaries: Sequence[int]):
        self.boundaries = list(boundaries)
        self.workers = len(self.boundaries) + 1

    def locate(self, key: int) -> tuple[int, int]:
        idx = bisect_right(self.boundaries, key)
        return idx, idx

    def owner_of_scope(self, scope: int) -> int:
        if not 0 <= scope < self.workers:
            raise RoutingError(f"range scope {scope} outside configured ranges")
        return scope


# ---------------------------------------------------------------------------
# Partition logic
# ---------------------------------------------------------------------------

# Shares are ((worker, numerator), ...) with a common denominator.
Shares = tuple[int, tuple[tuple[int, int], ...]]


def _normalize_shares(shares: Sequence[tuple[int, int, int]]) -> Shares:
    if not shares:
        raise InvalidShareError("empty share list")
    denominators = {d for _, _, d in shares}
    if len(denominators) != 1:
        raise InvalidShareError(f"denominators differ within one call: {denominators}")
    den = denominators.pop()
    if den <= 0:
        raise InvalidShareError(f"denominator must be positive, got {den}")
    total = sum(n for _, n, _ in shares)
    if total > den:
        raise InvalidShareError(f"share numerators sum to {total} > denominator {den}")
    if any(n < 0 for _, n, _ in shares):
        raise InvalidShareError("negative share numerator")
    return den, tuple((w, n) for w, n, _ in shares)


@dataclass(frozen=True)
class PartitionLogic:
    """Versioned routing rules: a base partitioner plus split-by-keys
    reassignments and split-by-records fractional shares.

    Exactly one rule applies per key: an sbk override of its scope if present,
    else a per-key share of its scope if present, else the shares of its base
    owner if present, else the base mapping.  ``epoch`` strictly increases on
    every modification.
    """

    base: HashBase | RangeBase
    sbk_overrides: dict[int, int] = field(default_factory=dict)
    sbr_shares: dict[int, Shares] = field(default_factory=dict)
    key_shares: dict[int, Shares] = field(default_factory=dict)
    epoch: int = 0

    def owner(self, key: int) -> int:
        """Current owner of a key's scope: sbk override if any, else base."""
        scope, base_worker = self.base.locate(key)
        return self.sbk_overrides.get(scope, base_worker)

    def scope_owner(self, scope: int) -> int:
        return self.sbk_overrides.get(scope, self.base.owner_of_scope(scope))


def apply_sbk(logic: PartitionLogic, scopes: Iterable[int], to: int) -> PartitionLogic:
    """Reassign whole scopes (keys, or ranges for a range base) to ``to``.

    The scopes must currently route to a single owner; an empty set yields an
    unchanged logic apart from the epoch bump.
    """
    scopes = list(scopes)
    owners = {logic.scope_owner(s) for s in scopes}
    if len(owners) > 1:
        raise RoutingError(f"sbk scopes span multiple owners: {sorted(owners)}")
    overrides = dict(logic.sbk_overrides)
    for s in scopes:
        overrides[s] = to
    return replace(logic, sbk_overrides=overrides, epoch=logic.epoch + 1)


def apply_sbr(
    logic: PartitionLogic, owner: int, shares: Sequence[tuple[int, int, int]]
) -> PartitionLogic:
    """Replace the fractional shares of ``owner``'s future input.

    ``shares`` is a list of (worker, numerator, denominator) with one common
    denominator; the residual (denominator minus the numerator sum) stays at
    the owner.
    """
    new = dict(logic.sbr_shares)
    new[owner] = _normalize_shares(shares)
    return replace(logic, sbr_shares=new, epoch=logic.epoch + 1)


def apply_key_shares(
    logic: PartitionLogic, scope: int, shares: Sequence[tuple[int, int, int]]
) -> PartitionLogic:
    """Split a single scope's record stream fractionally (key-granular SBR,
    used by the Flow-Join-like baseline's per-key 50/50 splits)."""
    new = dict(logic.key_shares)
    new[scope] = _normalize_shares(shares)
    return replace(logic, key_shares=new, epoch=logic.epoch + 1)


def _pick_by_counter(count: int, shares: Shares, owner: int) -> int:
    den, parts = shares
    pos = count % den
    for worker, num in parts:
        if pos < num:
            return worker
        pos -= num
    return owner


def route(record: Record, logic: PartitionLogic, counters: dict) -> int:
    """Route one record and return the destination worker.

    ``counters`` maps a counter id (scope or owner) to the number of records
    already routed under that rule; it is advanced in place.  Within every
    aligned window of ``denominator`` consecutive records owned by one base
    owner, exactly ``numerator_i`` go to helper i and the rest to the owner.
    """
    dest, _owner, _scope = route_key(record.key, logic, counters)
    return dest


def route_key(key: int, logic: PartitionLogic, counters: dict) -> tuple[int, int, int]:
    """Route by key; returns (destination, owning worker, scope)."""
    scope, base_worker = logic.base.locate(key)
    sbk = logic.sbk_overrides
    if sbk:
        to = sbk.get(scope)
        if to is not None:
            return to, to, scope
    key_shares = logic.key_shares
    if key_shares:
        shares = key_shares.get(scope)
        if shares is not None:
            cid = ("k", scope)
            count = counters.get(cid, 0)
            counters[cid] = count + 1
            return _pick_by_counter(count, shares, base_worker), base_worker, scope
    sbr = logic.sbr_shares
    if sbr:
        shares = sbr.get(base_worker)
        if shares is not None:
            count = counters.get(base_worker, 0)
            counters[base_worker] = count + 1
            return _pick_by_counter(count, shares, base_worker), base_worker, scope
    return base_worker, base_worker, scope


class Router:
    """Stateful wrapper owned by one upstream worker: logic plus its modular
    counters.  Counters reset on every epoch change (the semantics of carrying
    them across logic versions is unspecified, so we start windows afresh)."""

    def __init__(self, logic: PartitionLogic):
        self.logic = logic
        self.counters: dict = {}

    def update(self, logic: PartitionLogic) -> bool:
        """Apply a newer logic version; stale epochs are ignored."""
        if logic.epoch <= self.logic.epoch:
            return False
        self.logic = logic
        self.counters = {}
        return True

    def route(self, key: int) -> tuple[int, int, int]:
        return route_key(key, self.logic, self.counters)


# ---------------------------------------------------------------------------
# Keyed state
# ---------------------------------------------------------------------------


class Mutability(Enum):
    IMMUTABLE = "immutable"
    MUTABLE = "mutable"


def _merge_sorted_runs(a: list, b: list) -> list:
    return list(heapq.merge(a, b))


COMBINERS: dict[str, Callable] = {
    "list_append": lambda a, b: a + b,
    "sum": lambda a, b: a + b,
    "sorted_merge": _merge_sorted_runs,
}


def _copy_value(value):
    return list(value) if isinstance(value, list) else value


@dataclass
class KeyedState:
    """Operator state as disjoint scope -> value entries.

    A scope is a single key (hash operators) or a range id (range operators).
    ``combiner`` names the registered function used to merge two values of the
    same scope; states without one cannot be merged.
    """

    entries: dict = field(default_factory=dict)
    mutability: Mutability = Mutability.MUTABLE
    combiner: str | None = None

    def size(self) -> int:
        """Number of primitive items held, used by the migration cost model."""
        total = 0
        for value in self.entries.values():
            total += len(value) if isinstance(value, (list, tuple)) else 1
        return total


def extract_state(state: KeyedState, scopes: Iterable[int], remove: bool = False) -> KeyedState:
    """Copy (or cut out, with ``remove``) a fragment covering ``scopes``.

    Plain extraction leaves the source unchanged; list values are copied so
    the fragment never aliases live state.
    """
    scopes = set(scopes)
    missing = scopes - state.entries.keys()
    if missing:
        raise KeyError(f"scopes not present in state: {sorted(missing)}")
    entries = {s: _copy_value(state.entries[s]) for s in scopes}
    if remove:
        for s in scopes:
            del state.entries[s]
    return KeyedState(entries=entries, mutability=state.mutability, combiner=state.combiner)


def merge_state(dst: KeyedState, fragment: KeyedState) -> KeyedState:
    """Merge a fragment into ``dst`` in place and return it.

    Overlapping scopes require a registered combiner; the provided combiners
    are associative over disjoint fragments and commutative.
    """
    combine = COMBINERS.get(dst.combiner) if dst.combiner else None
    for scope, value in fragment.entries.items():
        if scope in dst.entries:
            if combine is None:
                raise MergeError(
                    f"no combiner registered to merge scope {scope!r} "
                    f"(state combiner={dst.combiner!r})"
                )
            dst.entries[scope] = combine(dst.entries[scope], value)
        else:
            dst.entries[scope] = _copy_value(value)
    return dst
