"""Source and operator workers.

Workers are sequential actors: each processes one message at a time and all
pending control messages are drained before the next data message.  All
cross-worker communication goes through a network object owned by the driver,
so the same worker code runs under the deterministic scheduler and the
threaded driver.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterable

from ..core import (
    END,
    PARTITION_CHANGE,
    KeyedState,
    Marker,
    Mutability,
    Record,
    Router,
    extract_state,
)
from ..errors import ProtocolError
from . import messages as cm
from .operators import merge_into


@dataclass
class StateFragment:
    """State handed between workers, either as a mitigation transfer or as
    scattered-state resolution at END.  ``scopes`` lists every scope the
    transfer covers, including ones the sender held no state for, so the
    receiver can release its buffers."""

    fragment: KeyedState
    origin: Any
    correlation: int = 0
    scopes: tuple = ()


class SourceWorker:
    """Upstream worker: emits its slice of the dataset through the current
    partitioning logic, one stream at a time, and broadcasts markers."""

    def __init__(self, sid: int, streams: list[list[Record]], rate: int, router: Router, net):
        self.sid = sid
        self.streams = streams
        self.rate = rate
        self.router = router
        self.net = net
        self.control: deque = deque()
        self.stream_idx = 0
        self.cursor = 0
        self.end_sent = False
        self.paused = False
        self.emitted = 0
        self.owner_counts: dict[int, int] = {}
        self.scope_counts: dict[int, int] = {}

    # -- control ---------------------------------------------------------

    def on_control(self, msg: cm.ControlMessage) -> None:
        if msg.kind == cm.UPDATE_LOGIC:
            logic, emit_marker = msg.payload
            if self.router.update(logic) and emit_marker:
                marker = Marker(PARTITION_CHANGE, ("src", self.sid), logic.epoch)
                self.net.broadcast_data(marker)
        elif msg.kind == cm.PAUSE:
            self.paused = True
        elif msg.kind == cm.RESUME:
            self.paused = False

    # -- emission --------------------------------------------------------

    def stream_done(self) -> bool:
        return self.end_sent

    def advance_stream(self) -> None:
        self.stream_idx += 1
        self.cursor = 0
        self.end_sent = False

    def exhausted(self) -> bool:
        return self.stream_idx >= len(self.streams)

    def pump(self) -> int:
        while self.control:
            self.on_control(self.control.popleft())
        if self.paused or self.exhausted() or self.end_sent:
            return 0
        stream = self.streams[self.stream_idx]
        sent = 0
        route = self.router.route
        data = self.net.data
        owner_counts = self.owner_counts
        scope_counts = self.scope_counts
        while sent < self.rate and self.cursor < len(stream):
            record = stream[self.cursor]
            self.cursor += 1
            dest, owner, scope = route(record[0])
            owner_counts[owner] = owner_counts.get(owner, 0) + 1
            scope_counts[scope] = scope_counts.get(scope, 0) + 1
            data(dest, record)
            sent += 1
        self.emitted += sent
        if self.cursor >= len(stream) and not self.end_sent:
            self.net.broadcast_data(Marker(END, ("src", self.sid), self.stream_idx))
            self.end_sent = True
        return sent


class _PendingExtraction:
    __slots__ = ("scopes", "dest", "correlation", "epoch", "remove")

    def __init__(self, scopes, dest, correlation, epoch, remove):
        self.scopes = scopes
        self.dest = dest
        self.correlation = correlation
        self.epoch = epoch
        self.remove = remove


class OpWorker:
    """One worker of the (possibly skewed) operator."""

    def __init__(self, wid: int, op, base, n_sources: int, n_workers: int, net, report):
        self.wid = wid
        self.op = op
        self.base = base
        self.n_sources = n_sources
        self.n_workers = n_workers
        self.net = net
        self.report = report
        self.control: deque = deque()
        self.data: deque = deque()
        self.queue_records = 0
        self.received = 0
        self.processed = 0
        self.emitted_watermark: dict[int, int] = {}
        # migration protocol state
        self.buffer_scopes: dict[int, deque] = {}
        self.pending_extractions: list[_PendingExtraction] = []
        self.marker_epochs: dict[Any, int] = {}  # origin -> max epoch seen
        # END bookkeeping, reset per stream
        self.src_ends: set = set()
        self.peer_ends: set = set()
        self.stream_complete = False
        self.finalized = False

    # -- queue plumbing ---------------------------------------------------

    def push_data(self, item) -> None:
        self.data.append(item)
        if item.__class__ is Record:
            self.received += 1
            self.queue_records += 1

    def push_control(self, msg: cm.ControlMessage) -> None:
        self.control.append(msg)

    @property
    def queue_len(self) -> int:
        return self.queue_records

    # -- control handling -------------------------------------------------

    def on_control(self, msg: cm.ControlMessage) -> None:
        kind = msg.kind
        if kind == cm.EXPECT_STATE:
            for scope in msg.payload:
                self.buffer_scopes.setdefault(scope, deque())
        elif kind == cm.SHARE_PARTITION:
            scopes, dest, mode, epoch = msg.payload
            if mode == "replicate":
                self._send_fragment(scopes, dest, msg.correlation, remove=False)
            elif mode == "extract":
                self._send_fragment(scopes, dest, msg.correlation, remove=True)
            else:  # marker-gated extraction
                pending = _PendingExtraction(scopes, dest, msg.correlation, epoch, True)
                self.pending_extractions.append(pending)
                self._try_pending_extractions()
        elif kind == cm.ACCEPT_STATE:
            frag: StateFragment = msg.payload
            merge_into(self.op, frag.fragment)
            self._replay_buffers(frag.scopes or frag.fragment.entries.keys())
            self.net.control_to_controller(
                cm.ControlMessage(cm.STATE_ACK, msg.correlation, (self.wid, frag.origin))
            )

    def _send_fragment(self, scopes, dests, correlation, remove: bool) -> None:
        requested = tuple(scopes)
        present = [s for s in requested if s in self.op.state.entries]
        if hasattr(self.op, "extract"):
            fragment = self.op.extract(present, remove=remove)
        else:
            fragment = extract_state(self.op.state, present, remove=remove)
        if not remove:
            fragment.mutability = Mutability.IMMUTABLE
        if isinstance(dests, int):
            dests = [dests]
        for dest in dests:
            self.net.control(
                dest,
                cm.ControlMessage(
                    cm.ACCEPT_STATE, correlation,
                    StateFragment(fragment, self.wid, correlation, requested),
                ),
                delay=self.net.migration_delay(fragment),
            )

    def _replay_buffers(self, scopes: Iterable[int]) -> None:
        for scope in list(scopes):
            buffered = self.buffer_scopes.pop(scope, None)
            if buffered:
                self.queue_records -= len(buffered)
                for record in buffered:
                    self._process_record(record)
            elif buffered is not None:
                pass  # empty buffer, just unregistered

    def _try_pending_extractions(self) -> None:
        if not self.pending_extractions:
            return
        epochs = self.marker_epochs
        still = []
        for pending in self.pending_extractions:
            ready = sum(1 for e in epochs.values() if e >= pending.epoch)
            if ready >= self.n_sources:
                self._send_fragment(pending.scopes, pending.dest, pending.correlation, remove=pending.remove)
            else:
                still.append(pending)
        self.pending_extractions = still

    # -- data handling ----------------------------------------------------

    def _process_record(self, record: Record) -> None:
        self.processed += 1
        self.op.process(record[0], record[1], record[2], self._emit)
        self.report.on_processed(record[0])

    def _emit(self, key: int, seq: int, payload: bytes) -> None:
        self.emitted_watermark[key] = seq
        self.report.on_output(self.wid, key, seq)

    def on_marker(self, marker: Marker) -> None:
        if marker.kind == PARTITION_CHANGE:
            # markers are cumulative: a source at epoch e has switched away
            # from every logic older than e
            prev = self.marker_epochs.get(marker.origin, -1)
            if marker.epoch > prev:
                self.marker_epochs[marker.origin] = marker.epoch
            self._try_pending_extractions()
        elif marker.kind == END:
            origin_kind, origin_id = marker.origin
            if origin_kind == "src":
                if marker.origin in self.src_ends:
                    raise ProtocolError(f"duplicate END from {marker.origin}")
                self.src_ends.add(marker.origin)
                if len(self.src_ends) == self.n_sources:
                    self._on_sources_drained()
            else:
                self.peer_ends.add(marker.origin)
            self._check_stream_complete()

    def _on_sources_drained(self) -> None:
        """All upstream input for the stream has arrived and been processed."""
        if self.buffer_scopes and any(self.buffer_scopes.values()):
            raise ProtocolError(
                f"worker {self.wid} reached END with records buffered for "
                f"scopes {sorted(s for s, b in self.buffer_scopes.items() if b)} "
                "(state fragment never arrived)"
            )
        if self.pending_extractions:
            raise ProtocolError(
                f"worker {self.wid} reached END with partition-change markers missing "
                f"from some upstream worker"
            )
        # scattered-state resolution: every mutable scope returns to its base
        # owner before output; immutable replicas are dropped.
        foreign: dict[int, list[int]] = {}
        for scope in self.op.state.entries:
            owner = self.base.owner_of_scope(scope)
            if owner != self.wid:
                foreign.setdefault(owner, []).append(scope)
        for owner, scopes in sorted(foreign.items()):
            if hasattr(self.op, "extract"):
                fragment = self.op.extract(scopes, remove=True)
            else:
                fragment = extract_state(self.op.state, scopes, remove=True)
            self.net.data(owner, StateFragment(fragment, ("peer", self.wid)))
        self.op.replica.entries.clear()
        for peer in range(self.n_workers):
            if peer != self.wid:
                self.net.data(peer, Marker(END, ("peer", self.wid), 0))
        self._check_stream_complete()

    def _check_stream_complete(self) -> None:
        if self.stream_complete:
            return
        if len(self.src_ends) == self.n_sources and len(self.peer_ends) == self.n_workers - 1:
            self.stream_complete = True

    def reset_stream(self) -> None:
        self.src_ends = set()
        self.peer_ends = set()
        self.stream_complete = False

    def finalize(self) -> None:
        if not self.finalized:
            self.finalized = True
            self.op.finalize(lambda key, value, payload: self.report.on_final(self.wid, key, value))

    # -- scheduling -------------------------------------------------------

    def step(self, budget: int) -> int:
        """Process pending control messages and up to ``budget`` data records.
        Markers and fragments cost no service budget."""
        done = 0
        control = self.control
        data = self.data
        while control:
            self.on_control(control.popleft())
            done += 1
        processed = 0
        buffering = self.buffer_scopes
        while processed < budget and data:
            item = data.popleft()
            cls = item.__class__
            if cls is Record:
                if buffering:
                    scope = self.base.locate(item[0])[0]
                    buf = buffering.get(scope)
                    if buf is not None:
                        buf.append(item)
                        processed += 1
                        done += 1
                        continue
                self.queue_records -= 1
                self._process_record(item)
                processed += 1
            elif cls is Marker:
                self.on_marker(item)
            else:  # StateFragment from a peer at END
                merge_into(self.op, item.fragment)
            done += 1
            while control:
                self.on_control(control.popleft())
                done += 1
        return done
