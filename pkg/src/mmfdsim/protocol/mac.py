"""Event-driven MAC for a single-channel mmWave network.

Three protocol variants share this code:

* ``dfdmac``: directional FD handshakes (two-node and three-node) plus
  out-of-band busy tones;
* ``ay_with_bt``: half-duplex RTS/CTS/DATA/ACK with the same busy tones;
* ``ay_without_bt``: half-duplex RTS/CTS/DATA/ACK, energy carrier sensing
  and NAV only.

Propagation delay is zero.  Interference is re-evaluated whenever a
transmission starts, and every reception keeps the lowest SINR seen over its
airtime; a frame decodes if that minimum reaches the frame's threshold.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from .. import kernel
from ..kernel import Engine, RngStream
from ..power import THREE_NODE, TWO_NODE, FdLinkSpec, LinkInfeasible, optimize_powers
from ..radio import (DEFAULT_MCS, AntennaConfig, ChannelParams, McsEntry, McsTable,
                     Position, Radio, db_to_lin, dbm_to_w, lin_to_db, path_gain)
from .frames import (CTS_HD, CTS_THREE_NODE, CTS_TWO_NODE, FD, HD, RTS_PRIMARY,
                     RTS_SECONDARY, DEFAULT_TIMING, Frame, Kind, Timing)


class Variant(str, enum.Enum):
    DFDMAC = "dfdmac"
    AY_WITH_BT = "ay_with_bt"
    AY_WITHOUT_BT = "ay_without_bt"


class Mode(str, enum.Enum):
    HD = "hd"
    TWO = "two-node"
    THREE = "three-node"


class ProtocolViolation(RuntimeError):
    pass


# failure reasons recorded with every contention-window update
SUCCESS = "success"
DROP = "drop"
NO_CTS = "no-cts"
NO_ACK = "no-ack"
SECONDARY_NO_CTS = "secondary-no-cts"
RECEIVER_BUSY = "receiver-busy"
RECEIVER_NAV = "receiver-nav"
DEFERRED = "deferred"          # busy-tone variants: receiver was engaged, no doubling


@dataclass
class MacConfig:
    variant: Variant = Variant.DFDMAC
    busy_tones: bool | None = None       # None: follow the variant
    power_control: bool = False
    ibi: bool = True
    rate_mode: str = "fixed"             # "fixed" or "adaptive"
    mcs_index: int = 2
    mcs: McsTable = DEFAULT_MCS
    channel: ChannelParams = field(default_factory=ChannelParams)
    timing: Timing = DEFAULT_TIMING
    payload_bits: int = 64_000
    cca_threshold: float = dbm_to_w(-68.0)
    control_threshold: float = db_to_lin(5.5)
    tone_duration: int = 1_000            # ns, trace only
    duration: int = kernel.S              # measurement window, ns

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.busy_tones is None:
            self.busy_tones = self.variant is not Variant.AY_WITHOUT_BT
        if self.rate_mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown rate mode {self.rate_mode!r}")
        if self.power_control and self.rate_mode != "adaptive":
            raise ValueError("power control needs adaptive rates")

    @property
    def full_duplex(self) -> bool:
        return self.variant is Variant.DFDMAC


@dataclass
class NodeSpec:
    id: int
    position: Position
    beams: int
    is_ap: bool = False
    tx_power: float = dbm_to_w(10.0)     # W, maximum
    min_power: float = 1e-3
    power_step: float = 1e-3
    beta: float = db_to_lin(-85.0)
    traffic: str = "saturated"           # saturated | none | poisson
    packet_rate: float = 0.0             # packets/s for poisson traffic
    initial_backoff: int | None = None


@dataclass
class Packet:
    src: int
    dst: int
    bits: int
    retries: int = 0


class Txn:
    """One RTS-initiated exchange and the schedule its participants agreed on."""

    __slots__ = ("id", "start", "mode", "initiator", "responder", "secondary", "cts_time",
                 "data_time", "ack_time", "close_time", "mcs", "power", "packets", "acked",
                 "cts2_ok", "sent_data")

    def __init__(self, id: int, start: int, initiator: int, responder: int):
        self.id = id
        self.start = start
        self.mode = Mode.HD
        self.initiator = initiator
        self.responder = responder
        self.secondary: int | None = None
        self.cts_time = self.data_time = self.ack_time = self.close_time = -1
        self.mcs: dict[int, McsEntry] = {}
        self.power: dict[int, float] = {}
        self.packets: dict[int, Packet] = {}
        self.acked: set[int] = set()
        self.cts2_ok = False
        self.sent_data: set[int] = set()


class Tx:
    __slots__ = ("frame", "src", "dst", "beam", "power", "start", "end", "txn",
                 "receptions", "cca_nodes", "finalized", "threshold")

    def __init__(self, frame, src, dst, beam, power, start, end, txn, threshold):
        self.frame = frame
        self.src = src
        self.dst = dst
        self.beam = beam
        self.power = power
        self.start = start
        self.end = end
        self.txn = txn
        self.receptions: list[Reception] = []
        self.cca_nodes: list[int] = []
        self.finalized = False
        self.threshold = threshold


class Reception:
    __slots__ = ("tx", "node", "beam", "intended", "fd_ok", "alive", "min_sinr")

    def __init__(self, tx, node, beam, intended, fd_ok):
        self.tx = tx
        self.node = node
        self.beam = beam          # receive beam index, None for quasi-omni
        self.intended = intended
        self.fd_ok = fd_ok
        self.alive = True
        self.min_sinr = math.inf


class Node:
    def __init__(self, net: "Network", spec: NodeSpec, rng: RngStream):
        self.net = net
        self.spec = spec
        self.id = spec.id
        self.is_ap = spec.is_ap
        self.rng = rng
        self.queue: deque[Packet] = deque()
        t = net.cfg.timing
        self.cw = t.cw_min
        self.failures = 0
        self.backoff: int | None = spec.initial_backoff
        self.expiry: kernel.EventHandle | None = None
        self.countdown_start = 0
        self.cca = 0
        self.nav_until = 0
        self.nav_txn: Txn | None = None      # exchange whose frame set the NAV
        self.nav_timer: kernel.EventHandle | None = None
        self.frozen_on: int | None = None
        self.txn: Txn | None = None
        self.pending_since: int | None = None   # own start tone heard, awaiting RTS
        self.expect: set[tuple[Kind, int]] = set()
        self.tx_count = 0
        # receiver state seen when this node last started an exchange
        self.receiver_was_busy = False
        self.receiver_had_nav = False

    # -- traffic -------------------------------------------------------
    @property
    def hol(self) -> Packet | None:
        return self.queue[0] if self.queue else None

    def refill(self):
        if self.queue or self.spec.traffic != "saturated":
            return
        dst = self.net.pick_destination(self)
        if dst is not None:
            self.queue.append(Packet(self.id, dst, self.net.cfg.payload_bits))

    # -- contention ----------------------------------------------------
    def medium_idle(self) -> bool:
        now = self.net.engine.now
        return self.cca == 0 and now >= self.nav_until and self.frozen_on is None

    def reevaluate(self):
        net = self.net
        now = net.engine.now
        hol = self.queue[0] if self.queue else None
        # busy-tone freeze on the intended receiver
        frozen = None
        if net.bt and hol is not None and net.tone_active[hol.dst] and self.txn is None:
            frozen = hol.dst
        if frozen != self.frozen_on:
            if net.tracing:
                if frozen is None:
                    net.emit(self.id, "bt-release", {"owner": self.frozen_on, "backoff": self.backoff})
                else:
                    net.emit(self.id, "bt-freeze", {"owner": frozen, "backoff": self.backoff})
            self.frozen_on = frozen
        can_count = (hol is not None and self.txn is None and self.pending_since is None
                     and self.tx_count == 0 and net.accepting
                     and self.cca == 0 and now >= self.nav_until and frozen is None)
        if can_count:
            if self.expiry is None:
                if self.backoff is None:
                    self.backoff = self.rng.uniform_int(0, self.cw - 1)
                self.countdown_start = now + net.cfg.timing.difs
                self.expiry = net.engine.schedule(
                    self.countdown_start + self.backoff * net.cfg.timing.slot,
                    self.on_backoff_done, kind=kernel.BACKOFF_SLOT, subject=self.id)
        elif self.expiry is not None and self.expiry.time != now:
            # pause; a countdown ending exactly now is already committed
            elapsed = now - self.countdown_start
            if elapsed > 0:
                self.backoff -= min(self.backoff, elapsed // net.cfg.timing.slot)
            net.engine.cancel(self.expiry)
            self.expiry = None

    def on_backoff_done(self):
        self.expiry = None
        net = self.net
        if net.tracing:
            net.emit(self.id, kernel.BACKOFF_SLOT, {"backoff": self.backoff, "cw": self.cw})
        if not net.accepting or self.txn is not None or self.hol is None:
            self.backoff = 0 if self.hol is not None else None
            self.reevaluate()
            return
        self.backoff = None
        net.start_transaction(self)

    def set_nav(self, until: int, txn: Txn | None = None):
        if until <= self.nav_until:
            return
        self.nav_until = until
        self.nav_txn = txn
        eng = self.net.engine
        eng.cancel(self.nav_timer)
        self.nav_timer = eng.schedule(until, self.reevaluate, kind=kernel.TIMER_EXPIRY, subject=self.id)
        self.reevaluate()

    def can_receive(self, frame: Frame, txn: Txn | None, fd_ok: bool) -> bool:
        if frame.kind is Kind.RTS:
            return self.txn is None and self.tx_count == 0
        if self.txn is not txn or (frame.kind, frame.src) not in self.expect:
            return False
        return self.tx_count == 0 or fd_ok


class Network:
    """Nodes, the shared mmWave channel, busy tones and protocol logic."""

    def __init__(self, engine: Engine, cfg: MacConfig, specs: list[NodeSpec], seed: int):
        self.engine = engine
        self.cfg = cfg
        self.bt = bool(cfg.busy_tones)
        n = len(specs)
        if sorted(s.id for s in specs) != list(range(n)):
            raise ValueError("node ids must be 0..n-1")
        specs = sorted(specs, key=lambda s: s.id)
        self.specs = specs
        self.radios = [Radio(s.position, AntennaConfig(s.beams), s.beta) for s in specs]
        self.ap_rng = None
        self.nodes = [Node(self, s, RngStream(seed, s.id)) for s in specs]
        self.users = [s.id for s in specs if not s.is_ap]
        # geometry tables
        self.M = [float(s.beams) for s in specs]
        self.pg = [[0.0] * n for _ in range(n)]
        self.beam = [[-1] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                pi, pj = specs[i].position, specs[j].position
                if pi == pj:
                    raise ValueError(f"nodes {i} and {j} share a position")
                self.pg[i][j] = path_gain(cfg.channel, pi, pj)
                self.beam[i][j] = self.radios[i].antenna.beam_toward(pi.bearing(pj))
        self.coverage = [[[j for j in range(n) if j != i and self.beam[i][j] == b]
                          for b in range(specs[i].beams)] for i in range(n)]
        self.active: list[Tx] = []
        self.receptions: list[Reception] = []
        self.tone_active = [False] * n
        self.tone_activations = [0] * n
        self.tone_ends = [0] * n
        self.accepting = True
        self._txn_seq = 0
        self._plans: dict = {}
        self.stats = Stats(n)
        self.tracing = engine.tracing

    # -- helpers ---------------------------------------------------------
    def emit(self, node: int, kind: str, detail: dict):
        self.engine.emit(node, kind, detail)

    def pick_destination(self, node: Node) -> int | None:
        if not node.is_ap:
            aps = [s.id for s in self.specs if s.is_ap]
            return aps[0] if aps else None
        if not self.users:
            return None
        return node.rng.choice(self.users)

    def rx_power(self, tx: Tx, j: int, rx_beam: int | None) -> float:
        i = tx.src
        if self.beam[i][j] != tx.beam:
            return 0.0
        if rx_beam is None:
            g = 1.0
        elif self.beam[j][i] == rx_beam:
            g = self.M[j]
        else:
            return 0.0
        return tx.power * self.M[i] * g * self.pg[i][j]

    def _sinr(self, rc: Reception) -> float:
        now = self.engine.now
        j = rc.node
        beta = self.specs[j].beta
        own_txn = rc.tx.txn
        terms = [self.cfg.channel.n0]
        for t in self.active:
            if t is rc.tx or t.end <= now:
                continue
            if t.src == j:
                terms.append(t.power * beta)
            elif not self.cfg.ibi and own_txn is not None and t.txn is own_txn:
                continue
            else:
                p = self.rx_power(t, j, rc.beam)
                if p:
                    terms.append(p)
        signal = self.rx_power(rc.tx, j, rc.beam)
        return signal / math.fsum(terms)

    # -- start-up ----------------------------------------------------------
    def start(self):
        for node in self.nodes:
            if node.spec.traffic == "saturated":
                node.refill()
            elif node.spec.traffic == "poisson" and node.spec.packet_rate > 0:
                self._schedule_arrival(node)
        for node in self.nodes:
            node.reevaluate()

    def _schedule_arrival(self, node: Node):
        gap = -math.log(1.0 - node.rng.uniform(0.0, 1.0)) / node.spec.packet_rate
        self.engine.schedule_in(max(1, round(gap * 1e9)), self._arrival, node,
                                kind=kernel.TIMER_EXPIRY, subject=node.id)

    def _arrival(self, node: Node):
        if not self.accepting:
            return
        dst = self.pick_destination(node)
        if dst is not None:
            node.queue.append(Packet(node.id, dst, self.cfg.payload_bits))
            node.reevaluate()
        self._schedule_arrival(node)

    def stop_accepting(self):
        self.accepting = False
        for node in self.nodes:
            node.reevaluate()

    # -- channel -----------------------------------------------------------
    def transmit(self, node: Node, frame: Frame, txn: Txn | None, power: float,
                 airtime: int, threshold: float) -> Tx:
        eng = self.engine
        now = eng.now
        src, dst = node.id, frame.dst
        t = Tx(frame, src, dst, self.beam[src][dst], power, now, now + airtime, txn, threshold)
        node.tx_count += 1
        self.active.append(t)
        # existing receptions see a new interferer
        for rc in self.receptions:
            if not rc.alive or rc.tx.end <= now:
                continue
            if rc.node == src:
                if not rc.fd_ok:
                    rc.alive = False
                    continue
            elif not self.rx_power(t, rc.node, rc.beam):
                continue
            s = self._sinr(rc)
            if s < rc.min_sinr:
                rc.min_sinr = s
        fd_ok = self.cfg.full_duplex and frame.kind is not Kind.RTS
        dnode = self.nodes[dst]
        if dnode.can_receive(frame, txn, fd_ok):
            rx_beam = None if frame.kind is Kind.RTS else self.beam[dst][src]
            self._add_reception(t, dst, rx_beam, True, fd_ok)
        covered = self.coverage[src][t.beam]
        if frame.kind in (Kind.RTS, Kind.CTS):
            for j in covered:
                if j == dst:
                    continue
                other = self.nodes[j]
                if other.txn is None and other.tx_count == 0:
                    self._add_reception(t, j, None, False, False)
        cca = self.cfg.cca_threshold
        for j in covered:
            if j in t.cca_nodes:
                continue
            if power * self.M[src] * self.pg[src][j] >= cca:
                self._busy(t, j)
        if self.tracing:
            self.emit(src, kernel.FRAME_TX_START, {
                "frame": frame.kind.value, "dst": dst, "txn": txn.id if txn else None,
                "end": t.end, "work": frame.work_mode, "mcs": frame.mcs_mode,
                "duplex": frame.duplex_mode, "dur_us": frame.duration, "power_w": power,
                "bits": frame.payload_bits, "cca": sorted(t.cca_nodes)})
        eng.schedule(t.end, self._tx_end, t, kind=kernel.FRAME_TX_END, subject=src)
        return t

    def _add_reception(self, t: Tx, j: int, beam, intended: bool, fd_ok: bool):
        rc = Reception(t, j, beam, intended, fd_ok)
        if not self.rx_power(t, j, beam):
            rc.alive = False
        else:
            rc.min_sinr = self._sinr(rc)
        t.receptions.append(rc)
        self.receptions.append(rc)
        if rc.alive and j not in t.cca_nodes:
            # a locked preamble makes the medium busy for the receiver
            self._busy(t, j)

    def _busy(self, t: Tx, j: int):
        t.cca_nodes.append(j)
        node = self.nodes[j]
        node.cca += 1
        if node.cca == 1:
            node.reevaluate()

    def _tx_end(self, t: Tx):
        self._finalize(t)
        self.active.remove(t)
        self.nodes[t.src].tx_count -= 1
        if self.tracing:
            self.emit(t.src, kernel.FRAME_TX_END, {"frame": t.frame.kind.value, "dst": t.dst,
                                                    "txn": t.txn.id if t.txn else None})
        for j in t.cca_nodes:
            node = self.nodes[j]
            node.cca -= 1
            if node.cca == 0:
                node.reevaluate()
        src = self.nodes[t.src]
        if src.tx_count == 0:
            src.reevaluate()

    def settle(self):
        """Finalize receptions of transmissions ending at the current instant."""
        now = self.engine.now
        for t in self.active:
            if t.end == now and not t.finalized:
                self._finalize(t)

    def _finalize(self, t: Tx):
        if t.finalized:
            return
        t.finalized = True
        for rc in t.receptions:
            self.receptions.remove(rc)
        for rc in t.receptions:
            ok = rc.alive and rc.min_sinr >= t.threshold
            if self.tracing:
                self.emit(rc.node, kernel.FRAME_RX_COMPLETE, {
                    "frame": t.frame.kind.value, "src": t.src, "txn": t.txn.id if t.txn else None,
                    "ok": int(ok), "intended": int(rc.intended), "start": t.start,
                    "sinr_db": round(lin_to_db(rc.min_sinr), 6) if rc.alive else None,
                    "bits": t.frame.payload_bits})
            if rc.intended:
                if t.frame.kind is Kind.DATA and rc.alive:
                    self.stats.sinr_sample(t.src, rc.node, rc.min_sinr)
                if ok:
                    self._deliver(self.nodes[rc.node], t)
            elif ok:
                self.nodes[rc.node].set_nav(t.end + t.frame.duration * kernel.US, t.txn)

    # -- busy tones ----------------------------------------------------------
    def tone(self, emitter: Node, owner: int, phase: str):
        active = self.tone_active[owner]
        if phase == "start":
            changed = not active
            if changed:
                self.tone_active[owner] = True
                self.tone_activations[owner] += 1
        else:
            if not active:
                raise ProtocolViolation(f"end tone of node {owner} without a start tone")
            changed = True
            self.tone_active[owner] = False
            self.tone_ends[owner] += 1
        if self.tracing:
            self.emit(emitter.id, kernel.BT_DETECTED, {"owner": owner, "phase": phase,
                                                        "changed": int(changed)})
        if not changed:
            return
        o = self.nodes[owner]
        if phase == "start" and o is not emitter and o.txn is None and o.pending_since is None:
            # the owner echoes its own start tone and waits for the RTS
            o.pending_since = self.engine.now
            if self.tracing:
                self.emit(owner, kernel.BT_DETECTED, {"owner": owner, "phase": "start", "changed": 0,
                                                       "echo": 1})
            self.engine.schedule_in(self.cfg.timing.rts + self.cfg.timing.sifs, self._pending_check,
                                    o, self.engine.now, kind=kernel.TIMER_EXPIRY, subject=owner)
            o.reevaluate()
        for node in self.nodes:
            hol = node.hol
            if hol is not None and hol.dst == owner:
                node.reevaluate()

    def _pending_check(self, node: Node, since: int):
        if node.pending_since != since:
            return
        node.pending_since = None
        if node.txn is None:
            self.tone(node, node.id, "end")
        node.reevaluate()

    # -- protocol ------------------------------------------------------------
    def _fixed_mcs(self) -> McsEntry:
        return self.cfg.mcs.by_index(self.cfg.mcs_index)

    def _link_sinr(self, src: int, dst: int, p: float) -> float:
        return p * self.M[src] * self.M[dst] * self.pg[src][dst] / self.cfg.channel.n0

    def _hd_mcs(self, src: int, dst: int) -> McsEntry:
        if self.cfg.rate_mode == "fixed":
            return self._fixed_mcs()
        m = self.cfg.mcs.match(self._link_sinr(src, dst, self.specs[src].tx_power))
        return m if m is not None else self.cfg.mcs[0]

    def _fd_spec(self, mode: Mode, t: int, r: int, r2: int | None) -> FdLinkSpec:
        st, sr = self.specs[t], self.specs[r]
        return FdLinkSpec(
            TWO_NODE if mode is Mode.TWO else THREE_NODE,
            self.radios[t], self.radios[r], self.cfg.payload_bits, self.cfg.payload_bits,
            st.min_power, st.tx_power, sr.min_power, sr.tx_power, st.power_step,
            secondary_rx=self.radios[r2] if r2 is not None else None,
            params=self.cfg.channel, mcs=self.cfg.mcs, ibi_enabled=self.cfg.ibi)

    def plan(self, mode: Mode, t: int, r: int, r2: int | None):
        """Rates and powers for an FD exchange, or ``None`` if it cannot close."""
        key = (mode, t, r, r2)
        if key in self._plans:
            return self._plans[key]
        pt, pr = self.specs[t].tx_power, self.specs[r].tx_power
        spec = self._fd_spec(mode, t, r, r2)
        result = None
        if self.cfg.rate_mode == "fixed":
            need = self._fixed_mcs()
            # the genie check guards the secondary link of a three-node exchange
            if mode is Mode.TWO or spec.sinr_secondary(pt, pr).sinr >= need.threshold:
                result = (need, need, pt, pr)
        elif self.cfg.power_control:
            try:
                sol = optimize_powers(spec)
                result = (self.cfg.mcs.by_index(sol.mcs_primary), self.cfg.mcs.by_index(sol.mcs_secondary),
                          sol.p_primary, sol.p_secondary)
            except LinkInfeasible:
                result = None
        else:
            sol = spec.evaluate(pt, pr)
            if sol is not None:
                result = (self.cfg.mcs.by_index(sol.mcs_primary), self.cfg.mcs.by_index(sol.mcs_secondary),
                          pt, pr)
        self._plans[key] = result
        return result

    def start_transaction(self, node: Node):
        eng = self.engine
        now = eng.now
        tm = self.cfg.timing
        pkt = node.hol
        r = pkt.dst
        self._txn_seq += 1
        txn = Txn(self._txn_seq, now, node.id, r)
        rnode = self.nodes[r]
        # receiver engaged strictly before this attempt: deafness, not collision
        busy_before = ((rnode.txn is not None and rnode.txn.start < now)
                       or (rnode.pending_since is not None and rnode.pending_since < now))
        node.txn = txn
        node.pending_since = None
        node.reevaluate()
        node.receiver_was_busy = busy_before
        node.receiver_had_nav = rnode.txn is None and now < rnode.nav_until
        if self.bt:
            self.tone(node, node.id, "start")
            self.tone(node, r, "start")
        mcs = self._hd_mcs(node.id, r)
        txn.mcs[node.id] = mcs
        txn.packets[node.id] = pkt
        data = tm.data_airtime(pkt.bits, mcs.data_rate)
        rest = tm.sifs + tm.cts + tm.sifs + data + tm.sifs + tm.ack
        frame = Frame(Kind.RTS, node.id, r, FD if self.cfg.full_duplex else HD, RTS_PRIMARY,
                      mcs.index, -(-rest // kernel.US))
        if self.tracing:
            self.emit(node.id, "txn-start", {"txn": txn.id, "dst": r, "cw": node.cw,
                                             "retries": pkt.retries})
        t = self.transmit(node, frame, txn, self.specs[node.id].tx_power, tm.rts, self.cfg.control_threshold)
        node.expect = {(Kind.CTS, r)}
        wait = tm.sifs + tm.cts + tm.slot
        if self.cfg.full_duplex:
            wait += tm.rts + tm.sifs
        eng.schedule(t.end + wait, self._cts_timeout, node, txn, kind=kernel.TIMER_EXPIRY, subject=node.id)

    def _deliver(self, node: Node, t: Tx):
        kind = t.frame.kind
        if kind is Kind.RTS:
            self._on_rts(node, t)
        elif kind is Kind.CTS:
            self._on_cts(node, t)
        elif kind is Kind.DATA:
            self._on_data(node, t)
        else:
            self._on_ack(node, t)

    def _on_rts(self, node: Node, t: Tx):
        eng = self.engine
        now = eng.now
        tm = self.cfg.timing
        txn: Txn = t.txn
        # NAV set by this very exchange does not stop its own participants
        if now < node.nav_until and node.nav_txn is not txn:
            return
        if t.frame.work_mode == RTS_SECONDARY:
            self._on_secondary_rts(node, t)
            return
        T = t.src
        node.txn = txn
        node.pending_since = None
        node.reevaluate()
        hol = node.hol
        mode = Mode.HD
        plan = None
        if self.cfg.full_duplex and hol is not None:
            if hol.dst == T:
                plan = self.plan(Mode.TWO, T, node.id, None)
                if plan is not None:
                    mode = Mode.TWO
            else:
                plan = self.plan(Mode.THREE, T, node.id, hol.dst)
                if plan is not None:
                    mode = Mode.THREE
        txn.mode = mode
        if mode is Mode.HD:
            txn.mcs[T] = self.cfg.mcs.by_index(t.frame.mcs_mode)
            txn.power[T] = self.specs[T].tx_power
        else:
            m_t, m_r, p_t, p_r = plan
            txn.mcs[T], txn.mcs[node.id] = m_t, m_r
            txn.power[T], txn.power[node.id] = p_t, p_r
            txn.packets[node.id] = hol
        if mode is Mode.THREE:
            txn.secondary = hol.dst
            txn.cts_time = now + tm.sifs + tm.rts + tm.sifs
            eng.schedule(now + tm.sifs, self._send_secondary_rts, node, txn,
                         kind=kernel.TIMER_EXPIRY, subject=node.id)
        else:
            txn.cts_time = now + tm.sifs
        txn.data_time = txn.cts_time + tm.cts + tm.sifs
        data_len = max(tm.data_airtime(txn.packets[p].bits, txn.mcs[p].data_rate)
                       for p in txn.packets if p in txn.mcs)
        txn.ack_time = txn.data_time + data_len + tm.sifs
        txn.close_time = txn.ack_time + tm.ack
        node.expect = {(Kind.DATA, T)}
        if mode is Mode.THREE:
            node.expect.add((Kind.CTS, txn.secondary))
        eng.schedule(txn.cts_time, self._send_cts, node, txn, kind=kernel.TIMER_EXPIRY, subject=node.id)
        if mode is not Mode.HD:
            eng.schedule(txn.data_time, self._responder_data, node, txn,
                         kind=kernel.TIMER_EXPIRY, subject=node.id)
        eng.schedule(txn.close_time, self._close, node, txn, kind=kernel.TIMER_EXPIRY, subject=node.id)

    def _send_secondary_rts(self, node: Node, txn: Txn):
        tm = self.cfg.timing
        r2 = txn.secondary
        if self.bt:
            self.tone(node, node.id, "start")
            self.tone(node, r2, "start")
        rest = txn.close_time - (self.engine.now + tm.rts)
        frame = Frame(Kind.RTS, node.id, r2, FD, RTS_SECONDARY, txn.mcs[node.id].index,
                      -(-rest // kernel.US))
        self.transmit(node, frame, txn, self.specs[node.id].tx_power, tm.rts, self.cfg.control_threshold)

    def _on_secondary_rts(self, node: Node, t: Tx):
        txn: Txn = t.txn
        node.txn = txn
        node.pending_since = None
        node.reevaluate()
        node.expect = {(Kind.DATA, t.src)}
        eng = self.engine
        eng.schedule(eng.now + self.cfg.timing.sifs, self._send_secondary_cts, node, txn,
                     kind=kernel.TIMER_EXPIRY, subject=node.id)
        eng.schedule(txn.close_time, self._close, node, txn, kind=kernel.TIMER_EXPIRY, subject=node.id)

    def _send_secondary_cts(self, node: Node, txn: Txn):
        tm = self.cfg.timing
        rest = txn.close_time - (self.engine.now + tm.cts)
        frame = Frame(Kind.CTS, node.id, txn.responder, FD, CTS_HD,
                      txn.mcs[txn.responder].index, -(-rest // kernel.US))
        self.transmit(node, frame, txn, self.specs[node.id].tx_power, tm.cts, self.cfg.control_threshold)

    def _send_cts(self, node: Node, txn: Txn):
        tm = self.cfg.timing
        work = {Mode.HD: CTS_HD, Mode.TWO: CTS_TWO_NODE, Mode.THREE: CTS_THREE_NODE}[txn.mode]
        rest = txn.close_time - (self.engine.now + tm.cts)
        frame = Frame(Kind.CTS, node.id, txn.initiator, FD if self.cfg.full_duplex else HD, work,
                      txn.mcs[txn.initiator].index, -(-rest // kernel.US))
        self.transmit(node, frame, txn, self.specs[node.id].tx_power, tm.cts, self.cfg.control_threshold)

    def _on_cts(self, node: Node, t: Tx):
        txn: Txn = t.txn
        if node.id == txn.responder:
            txn.cts2_ok = True
            return
        # initiator: DATA after SIFS, simultaneously with the responder's if FD
        node.expect = {(Kind.ACK, txn.responder)}
        if txn.mode is Mode.TWO:
            node.expect.add((Kind.DATA, txn.responder))
        eng = self.engine
        eng.schedule(eng.now + self.cfg.timing.sifs, self._send_data, node, txn, txn.responder,
                     kind=kernel.TIMER_EXPIRY, subject=node.id)
        eng.schedule(txn.close_time, self._close, node, txn, kind=kernel.TIMER_EXPIRY, subject=node.id)

    def _responder_data(self, node: Node, txn: Txn):
        if txn.mode is Mode.TWO:
            node.expect.add((Kind.ACK, txn.initiator))
            self._send_data(node, txn, txn.initiator)
        elif txn.cts2_ok:
            node.expect.add((Kind.ACK, txn.secondary))
            self._send_data(node, txn, txn.secondary)
        else:
            self._failure(node, SECONDARY_NO_CTS, txn.packets.pop(node.id))

    def _send_data(self, node: Node, txn: Txn, dst: int):
        tm = self.cfg.timing
        pkt = txn.packets[node.id]
        mcs = txn.mcs[node.id]
        frame = Frame(Kind.DATA, node.id, dst, FD if self.cfg.full_duplex else HD, 0, mcs.index,
                      -(-(tm.sifs + tm.ack) // kernel.US), pkt.bits)
        txn.sent_data.add(node.id)
        power = txn.power.get(node.id, self.specs[node.id].tx_power)
        self.transmit(node, frame, txn, power, tm.data_airtime(pkt.bits, mcs.data_rate), mcs.threshold)

    def _on_data(self, node: Node, t: Tx):
        txn: Txn = t.txn
        self.engine.schedule(txn.ack_time, self._send_ack, node, txn, t.src,
                             kind=kernel.TIMER_EXPIRY, subject=node.id)

    def _send_ack(self, node: Node, txn: Txn, dst: int):
        if node.txn is not txn:
            return
        frame = Frame(Kind.ACK, node.id, dst)
        self.transmit(node, frame, txn, self.specs[node.id].tx_power, self.cfg.timing.ack,
                      self.cfg.control_threshold)

    def _on_ack(self, node: Node, t: Tx):
        txn: Txn = t.txn
        pkt = txn.packets.get(node.id)
        if pkt is None or node.id in txn.acked:
            return
        txn.acked.add(node.id)
        self._success(node, pkt)

    def _cts_timeout(self, node: Node, txn: Txn):
        if node.txn is not txn or (Kind.CTS, txn.responder) not in node.expect:
            return
        node.txn = None
        node.expect = set()
        if self.bt:
            self.tone(node, node.id, "end")
        pkt = txn.packets[node.id]
        if node.receiver_was_busy and self.bt:
            # receiver's start tone predates our RTS: wait for its end tone
            self.stats.failures[DEFERRED] = self.stats.failures.get(DEFERRED, 0) + 1
            self._cw_trace(node, node.cw, DEFERRED)
            node.backoff = None
            node.reevaluate()
        elif node.receiver_was_busy:
            self._failure(node, RECEIVER_BUSY, pkt)
        elif node.receiver_had_nav:
            self._failure(node, RECEIVER_NAV, pkt)
        else:
            self._failure(node, NO_CTS, pkt)

    def _close(self, node: Node, txn: Txn):
        if node.txn is not txn:
            return
        self.settle()
        node.txn = None
        node.expect = set()
        if node.id == txn.responder:
            self.stats.txn_counts[txn.mode.value] += 1
        if self.tracing and node.id == txn.initiator:
            self.emit(node.id, "txn-close", {"txn": txn.id, "mode": txn.mode.value})
        if self.bt:
            self.tone(node, node.id, "end")
        pkt = txn.packets.get(node.id)
        if pkt is not None and node.id not in txn.acked and node.id in txn.sent_data:
            self._failure(node, NO_ACK, pkt)
        else:
            node.reevaluate()

    # -- outcome bookkeeping ----------------------------------------------------
    def _cw_trace(self, node: Node, old: int, reason: str):
        if self.tracing:
            self.emit(node.id, "cw-update", {"old": old, "new": node.cw, "failures": node.failures,
                                             "reason": reason})

    def _success(self, node: Node, pkt: Packet):
        now = self.engine.now
        if node.queue and node.queue[0] is pkt:
            node.queue.popleft()
        if now <= self.cfg.duration:
            self.stats.delivered[pkt.src] += pkt.bits
            self.stats.delivered_pkts[pkt.src] += 1
        if self.tracing:
            self.emit(node.id, "delivery", {"src": pkt.src, "dst": pkt.dst, "bits": pkt.bits,
                                            "txn": node.txn.id if node.txn else None,
                                            "counted": int(now <= self.cfg.duration)})
        old = node.cw
        node.cw = self.cfg.timing.cw_min
        node.failures = 0
        node.backoff = None
        self._cw_trace(node, old, SUCCESS)
        node.refill()
        if node.txn is None:
            node.reevaluate()

    def _failure(self, node: Node, reason: str, pkt: Packet):
        tm = self.cfg.timing
        old = node.cw
        self.stats.failures[reason] = self.stats.failures.get(reason, 0) + 1
        pkt.retries += 1
        node.failures += 1
        node.backoff = None
        if pkt.retries > tm.retry_limit:
            if node.queue and node.queue[0] is pkt:
                node.queue.popleft()
            self.stats.drops += 1
            node.failures = 0
            node.cw = tm.cw_min
            if self.tracing:
                self.emit(node.id, "cw-update", {"old": old, "new": node.cw, "failures": 0,
                                                 "reason": DROP, "cause": reason})
            node.refill()
        else:
            node.cw = min(tm.cw_min * 2 ** node.failures, tm.cw_max)
            self._cw_trace(node, old, reason)
        if node.txn is None:
            node.reevaluate()


class Stats:
    def __init__(self, n: int):
        self.delivered = [0] * n
        self.delivered_pkts = [0] * n
        self.failures: dict[str, int] = {}
        self.drops = 0
        self.txn_counts = {m.value: 0 for m in Mode}
        self.sinr: dict[tuple[int, int], list[float]] = {}

    def sinr_sample(self, src: int, dst: int, s: float):
        rec = self.sinr.get((src, dst))
        db = lin_to_db(s)
        if rec is None:
            self.sinr[(src, dst)] = [1, db, db, db]
        else:
            rec[0] += 1
            rec[1] += db
            rec[2] = min(rec[2], db)
            rec[3] = max(rec[3], db)
