"""Execution report: counters, output capture and per-snapshot time series."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class Snapshot:
    """Point-in-time metrics row recorded every metric period."""

    time: int
    queue: list[int]
    received: list[int]
    owner_received: list[int]
    processed: list[int]
    pair_counts: tuple[int, int] | None
    iterations: int
    tau: float


@dataclass
class IterationLog:
    index: int
    skewed: int
    helpers: list[int]
    kind: str
    tau_used: float
    epsilon: float | None
    detect_time: int
    window_start: int
    phase1_end: int | None = None
    shares: list[tuple[int, int, int]] = field(default_factory=list)
    moved_scopes: list[int] = field(default_factory=list)
    status: str = "started"


class ExecutionReport:
    """Accumulates everything a run produces: streamed outputs, finalized
    per-worker outputs, counters and the metric time series."""

    def __init__(self, n_workers: int, ratio_keys: tuple[int, int] | None = None,
                 keep_outputs: bool = True):
        self.n_workers = n_workers
        self.ratio_keys = ratio_keys
        self.keep_outputs = keep_outputs
        self.outputs: list[tuple[int, int, int]] = []  # (worker, key, seq) streamed
        self.final_outputs: dict[int, list[tuple[int, Any]]] = {w: [] for w in range(n_workers)}
        self.key_processed: dict[int, int] = {}
        self.inversions: dict[int, int] = {}
        self._last_seq: dict[int, int] = {}
        self.snapshots: list[Snapshot] = []
        self.iterations: list[IterationLog] = []
        self.adjustments: list[tuple[int, float, float, str]] = []
        self.skips: list[tuple[int, str]] = []
        self.total_emitted = 0
        self.ticks = 0
        self._pair = ratio_keys

    # -- called from workers ------------------------------------------------

    def on_processed(self, key: int) -> None:
        pair = self._pair
        if pair is not None and (key == pair[0] or key == pair[1]):
            self.key_processed[key] = self.key_processed.get(key, 0) + 1

    def on_output(self, worker: int, key: int, seq: int) -> None:
        last = self._last_seq.get(key)
        if last is not None and seq < last:
            self.inversions[key] = self.inversions.get(key, 0) + 1
        else:
            self._last_seq[key] = seq
        if self.keep_outputs:
            self.outputs.append((worker, key, seq))

    def on_final(self, worker: int, key: int, value: Any) -> None:
        self.final_outputs[worker].append((key, value))

    # -- called from the driver ----------------------------------------------

    def record_snapshot(self, time: int, queue, received, owner_received, processed, tau: float) -> None:
        pair = None
        if self._pair is not None:
            pair = (self.key_processed.get(self._pair[0], 0), self.key_processed.get(self._pair[1], 0))
        self.snapshots.append(
            Snapshot(time, list(queue), list(received), list(owner_received), list(processed),
                     pair, len(self.iterations), tau)
        )

    # -- summaries -------------------------------------------------------

    def received_totals(self) -> list[int]:
        if not self.snapshots:
            return [0] * self.n_workers
        return list(self.snapshots[-1].received)

    def output_multiset(self):
        from collections import Counter

        return Counter((key, seq) for _, key, seq in self.outputs)

    def groupby_result(self) -> dict[int, Any]:
        merged: dict[int, Any] = {}
        for rows in self.final_outputs.values():
            for key, value in rows:
                if key in merged:
                    raise AssertionError(f"group {key} emitted twice")
                merged[key] = value
        return merged

    def sorted_result(self) -> list[int]:
        out: list[int] = []
        for worker in sorted(self.final_outputs):
            out.extend(key for key, _ in self.final_outputs[worker])
        return out
