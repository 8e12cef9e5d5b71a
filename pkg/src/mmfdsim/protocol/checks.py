"""Streaming protocol invariant checker.

Attach an :class:`InvariantChecker` as an engine tracer before the network
starts; call :meth:`InvariantChecker.finish` after the run has drained.
"""

from __future__ import annotations

from collections import defaultdict

from .. import kernel
from .frames import DEFAULT_TIMING, Timing
from .mac import DEFERRED, DROP, RECEIVER_BUSY, SUCCESS

_KEEP = 10 * kernel.MS   # how long past transmit intervals are remembered


class InvariantChecker:
    def __init__(self, *, full_duplex: bool, busy_tones: bool, timing: Timing = DEFAULT_TIMING,
                 max_violations: int = 100):
        self.fd = full_duplex
        self.bt = busy_tones
        self.timing = timing
        self.max_violations = max_violations
        self.violations: list[str] = []
        self.events = 0
        self.tone_active: dict[int, bool] = defaultdict(bool)
        self.tone_starts: dict[int, int] = defaultdict(int)
        self.tone_ends: dict[int, int] = defaultdict(int)
        self.frozen: dict[int, int | None] = {}
        # recent (start, end) busy periods per node
        self.busy: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.own_tx: dict[int, list[tuple[int, int, int | None]]] = defaultdict(list)
        self.txns: dict[int, dict] = {}
        self.decoded_data: set[tuple[int, int]] = set()
        self.delivered_pairs: set[tuple[int, int]] = set()
        self.delivered_bits: dict[int, int] = defaultdict(int)
        self.doublings = 0

    def _fail(self, time: int, node: int, msg: str):
        if len(self.violations) < self.max_violations:
            self.violations.append(f"t={time} node={node}: {msg}")

    def __call__(self, time: int, node: int, kind: str, d: dict):
        self.events += 1
        handler = getattr(self, "_on_" + kind.replace("-", "_"), None)
        if handler is not None:
            handler(time, node, d)

    # -- tones ------------------------------------------------------------
    def _on_bt_detected(self, time, node, d):
        if not d["changed"]:
            return
        owner = d["owner"]
        if d["phase"] == "start":
            if self.tone_active[owner]:
                self._fail(time, node, f"tone {owner} started twice")
            self.tone_active[owner] = True
            self.tone_starts[owner] += 1
        else:
            if not self.tone_active[owner]:
                self._fail(time, node, f"end tone {owner} without start")
            self.tone_active[owner] = False
            self.tone_ends[owner] += 1

    def _on_bt_freeze(self, time, node, d):
        if self.frozen.get(node) is not None:
            self._fail(time, node, "frozen twice")
        self.frozen[node] = d["owner"]

    def _on_bt_release(self, time, node, d):
        if self.frozen.get(node) is None:
            self._fail(time, node, "release without freeze")
        self.frozen[node] = None

    # -- frames -------------------------------------------------------------
    def _txn(self, tid):
        rec = self.txns.get(tid)
        if rec is None:
            rec = self.txns[tid] = {"frames": [], "three": False}
        return rec

    def _on_frame_tx_start(self, time, node, d):
        t = self.timing
        end = d["end"]
        kind = d["frame"]
        tid = d["txn"]
        rec = self._txn(tid)
        frames = rec["frames"]

        def ends(k, work=None):
            return [f[2] for f in frames if f[0] == k and (work is None or f[3] == work)]

        if kind == "RTS" and d["work"] == 0:
            if frames:
                self._fail(time, node, f"second primary RTS in exchange {tid}")
            # busy periods starting at this very instant are a slot collision
            last = max((e for s, e in self.busy[node] if s < time), default=None)
            if last is not None and time < last + t.difs:
                self._fail(time, node, f"RTS {time - last} ns after medium busy, < DIFS")
        elif kind == "RTS":
            rec["three"] = True
            prev = ends("RTS", 0)
            if not prev or time != prev[0] + t.sifs:
                self._fail(time, node, "secondary RTS not SIFS after primary RTS")
        elif kind == "CTS":
            prev = ends("RTS", 1) if rec["three"] else ends("RTS", 0)
            if not prev or time != max(prev) + t.sifs:
                self._fail(time, node, "CTS not SIFS after RTS")
            if rec["three"]:
                starts = [f[1] for f in frames if f[0] == "CTS"]
                if any(s != time for s in starts):
                    self._fail(time, node, "three-node CTS frames not simultaneous")
        elif kind == "DATA":
            prev = ends("CTS")
            if not prev or time != max(prev) + t.sifs:
                self._fail(time, node, "DATA not SIFS after CTS")
            if any(f[1] != time for f in frames if f[0] == "DATA"):
                self._fail(time, node, "FD DATA frames not simultaneous")
        elif kind == "ACK":
            prev = ends("DATA")
            if not prev or time != max(prev) + t.sifs:
                self._fail(time, node, "ACK not SIFS after DATA")
            if any(f[1] != time for f in frames if f[0] == "ACK"):
                self._fail(time, node, "ACK frames not simultaneous")
        frames.append((kind, time, end, d["work"], node))
        for j in d["cca"]:
            self._mark_busy(j, time, end)
        self._mark_busy(node, time, end)
        own = self.own_tx[node]
        own.append((time, end, tid))
        if len(own) > 64:
            own[:] = [x for x in own if x[1] > time - _KEEP]

    def _mark_busy(self, node, start, end):
        periods = self.busy[node]
        periods.append((start, end))
        if len(periods) > 32:
            horizon = max(e for _, e in periods) - self.timing.difs
            periods[:] = [p for p in periods if p[1] >= horizon]

    def _on_frame_rx_complete(self, time, node, d):
        if not d["ok"] or not d["intended"]:
            return
        start, tid = d["start"], d["txn"]
        for s, e, own_tid in self.own_tx[node]:
            if s < time and e > start:
                if not self.fd or own_tid != tid or d["frame"] == "RTS":
                    self._fail(time, node, f"received {d['frame']} from {d['src']} while transmitting")
                    break
        if d["frame"] == "DATA":
            self.decoded_data.add((d["src"], tid))

    # -- contention and outcomes ----------------------------------------------
    def _on_cw_update(self, time, node, d):
        t = self.timing
        reason, new = d["reason"], d["new"]
        if reason in (SUCCESS, DROP):
            expected = t.cw_min
        elif reason == DEFERRED:
            expected = d["old"]
        else:
            k = d["failures"]
            if k < 1:
                self._fail(time, node, f"failure {reason} with {k} consecutive failures")
            expected = min(t.cw_min * 2 ** k, t.cw_max)
            self.doublings += 1
            if reason == RECEIVER_BUSY and self.bt:
                self._fail(time, node, "CW doubled because the receiver was busy (deafness)")
        if new != expected:
            self._fail(time, node, f"CW {new} after {reason}, expected {expected}")

    def _on_delivery(self, time, node, d):
        key = (d["src"], d["txn"])
        if key not in self.decoded_data:
            self._fail(time, node, f"delivery of {key} without a decoded DATA frame")
        if key in self.delivered_pairs:
            self._fail(time, node, f"delivery of {key} counted twice")
        self.delivered_pairs.add(key)
        if d["counted"]:
            self.delivered_bits[d["src"]] += d["bits"]

    # -- end of run -------------------------------------------------------------
    def finish(self, net=None) -> list[str]:
        for owner, active in self.tone_active.items():
            if active:
                self._fail(-1, owner, "tone still active at run end")
        for owner in set(self.tone_starts) | set(self.tone_ends):
            if self.tone_starts[owner] != self.tone_ends[owner]:
                self._fail(-1, owner, f"{self.tone_starts[owner]} start tones vs {self.tone_ends[owner]} end tones")
        for n, owner in self.frozen.items():
            if owner is not None:
                self._fail(-1, n, f"still frozen on tone {owner} at run end")
        if net is not None:
            for i, bits in enumerate(net.stats.delivered):
                if bits != self.delivered_bits.get(i, 0):
                    self._fail(-1, i, f"delivered {bits} bits but trace accounts for {self.delivered_bits.get(i, 0)}")
        return self.violations
