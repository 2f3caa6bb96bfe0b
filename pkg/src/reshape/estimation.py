"""Workload prediction and dynamic threshold adjustment.

The only built-in estimator is the mean model: each worker's future share of
the operator input is predicted as its historical mean share within the
current sample window.  The window is reset at balance points (the end of each
first phase), so every prediction reflects only the workload observed since
the workers were last level.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field


@dataclass
class WorkloadSample:
    """Per-worker time series of received-count deltas within one window.

    Deltas are attributed to the worker that owns the record's partition, not
    to the physical receiver, so first-phase rerouting does not distort the
    estimate of what each partition keeps receiving.
    """

    window_start: int = 0
    deltas: dict[int, list[float]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        if not self.deltas:
            return 0
        return max(len(series) for series in self.deltas.values())

    def add(self, time: int, per_worker_delta: dict[int, float]) -> None:
        for worker, delta in per_worker_delta.items():
            self.deltas.setdefault(worker, []).append(delta)


@dataclass
class Prediction:
    """Mean-model output: per-worker predicted share of the future input,
    the standard error of the designated worker's estimate, and the horizon
    the expected counts refer to."""

    f_hat: dict[int, float]
    epsilon: float
    horizon: int
    n: int
    mean_delta: dict[int, float]

    def expected(self, worker: int) -> float:
        return self.f_hat.get(worker, 0.0) * self.horizon


def standard_error(deltas: list[float]) -> float:
    """Mean-model standard error ``d * sqrt(1 + 1/n)`` where ``d`` is the
    sample (n-1) standard deviation of the delta series."""
    n = len(deltas)
    if n < 2:
        raise ValueError("standard error needs at least two samples")
    d = statistics.stdev(deltas)
    return d * math.sqrt(1.0 + 1.0 / n)


def predict(sample: WorkloadSample, horizon: int, error_worker: int | None = None) -> Prediction | None:
    """Predict each worker's share of future input from the sample window.

    Returns None when fewer than two snapshots are available (the controller
    defers mitigation in that case).  ``error_worker`` selects whose delta
    series feeds the standard error; it defaults to the worker with the
    largest mean delta, which is the prospective skewed worker.
    """
    n = sample.n
    if n < 2:
        return None
    workers = sorted(sample.deltas)
    shares: dict[int, list[float]] = {w: [] for w in workers}
    for i in range(n):
        total = 0.0
        row = {}
        for w in workers:
            series = sample.deltas[w]
            value = series[i] if i < len(series) else 0.0
            row[w] = value
            total += value
        if total <= 0:
            continue
        for w in workers:
            shares[w].append(row[w] / total)
    if not any(shares[w] for w in workers):
        return None
    f_hat = {w: (sum(s) / len(s) if s else 0.0) for w, s in shares.items()}
    mean_delta = {w: sum(sample.deltas[w]) / len(sample.deltas[w]) for w in workers}
    if error_worker is None:
        error_worker = max(workers, key=lambda w: mean_delta[w])
    series = sample.deltas.get(error_worker, [])
    eps = standard_error(series) if len(series) >= 2 else 0.0
    return Prediction(f_hat=f_hat, epsilon=eps, horizon=horizon, n=n, mean_delta=mean_delta)


def reset_window(time: int) -> WorkloadSample:
    """Discard prior deltas and open a fresh window at a balance event."""
    return WorkloadSample(window_start=time)


def adjust_tau(
    phi_s: float,
    phi_h: float,
    tau: float,
    epsilon: float,
    eps_lower: float,
    eps_upper: float,
    step: float = 50.0,
) -> float:
    """One step of dynamic threshold adjustment.

    If the workload gap already exceeds tau but the estimate error is above
    the acceptable band, the threshold grows by ``step`` (a bigger sample is
    needed next time; the current mitigation still proceeds).  If the gap is
    below tau but the error is already below the band, the threshold drops to
    the current gap so mitigation can start right away.  Otherwise tau is
    unchanged.
    """
    gap = phi_s - phi_h
    if gap >= tau and epsilon > eps_upper:
        return tau + step
    if gap < tau and epsilon < eps_lower:
        return gap
    return tau
