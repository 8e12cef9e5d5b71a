"""Deterministic discrete-event engine.

Virtual time is an integer count of nanoseconds.  Events are ordered by
``(time, sequence)`` where ``sequence`` is the insertion counter, so two runs
that schedule the same events in the same order dispatch them identically.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass
from typing import Any, Callable, Iterable

NS = 1
US = 1_000
MS = 1_000_000
S = 1_000_000_000

# Event kinds used by the MAC layer (also the ``kind`` column of a trace).
FRAME_TX_START = "frame-tx-start"
FRAME_TX_END = "frame-tx-end"
FRAME_RX_COMPLETE = "frame-rx-complete"
BT_DETECTED = "bt-detected"
BACKOFF_SLOT = "backoff-slot"
TIMER_EXPIRY = "timer-expiry"


class SimulationError(RuntimeError):
    """Raised when protocol logic breaks an engine contract."""


def ns_ceil(seconds: float) -> int:
    """Convert a duration in seconds to nanoseconds, rounding up."""
    ns = seconds * 1e9
    whole = int(ns)
    # absorb float noise such as 14254.545454545456 -> keep ceil semantics
    if ns - whole > 1e-6:
        whole += 1
    return whole


@dataclass(eq=False)
class EventHandle:
    time: int
    sequence: int
    kind: str
    subject: int
    callback: Callable[..., Any]
    args: tuple = ()
    payload: Any = None
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


class Engine:
    """Single-threaded event loop.

    ``tiebreak_seed`` replaces the insertion-order tiebreak for equal-time
    events with a seeded pseudo-random permutation.  It exists only to check
    that protocol code does not depend on the order of unrelated same-time
    events; normal runs leave it as ``None``.
    """

    def __init__(self, tiebreak_seed: int | None = None):
        self.now = 0
        self._heap: list[tuple[int, int, int, EventHandle]] = []
        self._seq = 0
        self.scheduled = 0
        self.cancelled = 0
        self.dispatched = 0
        self._tracers: list[Callable[[int, int, str, dict], None]] = []
        self._dispatch_hooks: list[Callable[[EventHandle], None]] = []
        self._tiebreak = random.Random(tiebreak_seed) if tiebreak_seed is not None else None

    # -- scheduling -----------------------------------------------------
    def schedule(self, time: int, callback: Callable[..., Any], *args,
                 kind: str = TIMER_EXPIRY, subject: int = -1, payload: Any = None) -> EventHandle:
        if time < self.now:
            raise SimulationError(
                f"event {kind!r} for node {subject} scheduled at {time} ns, before clock {self.now} ns")
        seq = self._seq
        self._seq += 1
        handle = EventHandle(time, seq, kind, subject, callback, args, payload)
        key = self._tiebreak.getrandbits(48) if self._tiebreak is not None else seq
        heapq.heappush(self._heap, (time, key, seq, handle))
        self.scheduled += 1
        return handle

    def schedule_in(self, delay: int, callback: Callable[..., Any], *args, **kw) -> EventHandle:
        return self.schedule(self.now + delay, callback, *args, **kw)

    def cancel(self, handle: EventHandle | None) -> None:
        if handle is not None and not handle.cancelled:
            handle.cancelled = True
            self.cancelled += 1

    # -- running --------------------------------------------------------
    def run_until(self, limit: int) -> int:
        """Dispatch every pending event with ``time <= limit``.

        Returns the number of dispatched events.  The clock is left at
        ``limit``.
        """
        count = 0
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= limit:
            time, _, _, ev = pop(heap)
            if ev.cancelled:
                continue
            self.now = time
            count += 1
            for hook in self._dispatch_hooks:
                hook(ev)
            ev.callback(*ev.args)
        self.dispatched += count
        if limit > self.now:
            self.now = limit
        return count

    def run(self) -> int:
        """Dispatch until the queue is empty."""
        count = 0
        while self.pending():
            count += self.run_until(self._heap[0][0])
        return count

    def pending(self) -> int:
        while self._heap and self._heap[0][3].cancelled:
            heapq.heappop(self._heap)
        return len(self._heap)

    # -- tracing --------------------------------------------------------
    def add_dispatch_hook(self, fn: Callable[[EventHandle], None]) -> None:
        self._dispatch_hooks.append(fn)

    def add_tracer(self, fn: Callable[[int, int, str, dict], None]) -> None:
        self._tracers.append(fn)

    @property
    def tracing(self) -> bool:
        return bool(self._tracers)

    def emit(self, node: int, kind: str, detail: dict) -> None:
        for fn in self._tracers:
            fn(self.now, node, kind, detail)


class TraceWriter:
    """Writes ``time_ns<TAB>node<TAB>kind<TAB>detail`` lines."""

    def __init__(self, fh):
        self.fh = fh

    def __call__(self, time: int, node: int, kind: str, detail: dict) -> None:
        text = " ".join(f"{k}={_fmt(v)}" for k, v in detail.items())
        self.fh.write(f"{time}\t{node}\t{kind}\t{text}\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v) or "-"
    if v is None:
        return "-"
    return str(v)


def stream_seed(seed: int, stream_id: int) -> int:
    """Derive a 64-bit seed for one stream from the global seed."""
    digest = hashlib.sha256(f"{seed & 0xFFFFFFFFFFFFFFFF}:{stream_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """Per-node pseudo-random stream.

    Draws depend only on ``(seed, stream_id)``; Mersenne Twister output for a
    given integer seed is identical across platforms.
    """

    def __init__(self, seed: int, stream_id: int):
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.stream_id = stream_id
        self._rng = random.Random(stream_seed(seed, stream_id))

    def uniform_int(self, lo: int, hi: int) -> int:
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return self._rng.randint(lo, hi)

    def choice(self, items: Iterable):
        items = list(items)
        return items[self.uniform_int(0, len(items) - 1)]

    def uniform(self, a: float, b: float) -> float:
        return self._rng.uniform(a, b)


def uniform_int(stream: RngStream, lo: int, hi: int) -> int:
    return stream.uniform_int(lo, hi)
