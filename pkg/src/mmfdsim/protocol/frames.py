"""MAC frames, their on-air sizes and airtimes.

RTS and CTS carry three extra fields after the usual control header:
duplex mode (1 bit), work mode (1 bit in RTS, 2 bits in CTS) and MCS mode
(4 bits).  Field placement is

    frame control 16 | duration 16 | RA 48 | [TA 48] | duplex | work | mcs | FCS 32 | padding

padded to the fixed frame sizes below.  Sizes drive airtime; the layout only
has to round-trip.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass

from ..kernel import ns_ceil


class FrameError(ValueError):
    pass


class Kind(enum.Enum):
    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    ACK = "ACK"


# work-mode values
RTS_PRIMARY = 0
RTS_SECONDARY = 1
CTS_HD = 0b00
CTS_TWO_NODE = 0b01
CTS_THREE_NODE = 0b10

HD, FD = 0, 1


@dataclass(frozen=True)
class Timing:
    control_phy_header: int = 40   # bits
    sc_phy_header: int = 64        # bits
    mac_header: int = 320          # bits
    control_rate: float = 27.5e6   # bit/s
    rts_bits: int = 352
    cts_bits: int = 304
    ack_bits: int = 304
    sifs: int = 3_000              # ns
    difs: int = 13_000
    slot: int = 5_000
    cw_min: int = 16
    cw_max: int = 1024
    retry_limit: int = 7

    def control_airtime(self, bits: int) -> int:
        return ns_ceil((self.control_phy_header + bits) / self.control_rate)

    @property
    def rts(self) -> int:
        return self.control_airtime(self.rts_bits)

    @property
    def cts(self) -> int:
        return self.control_airtime(self.cts_bits)

    @property
    def ack(self) -> int:
        return self.control_airtime(self.ack_bits)

    def data_airtime(self, payload_bits: int, rate: float) -> int:
        header = (self.sc_phy_header + self.control_phy_header) / self.control_rate
        return ns_ceil(header + (self.mac_header + payload_bits) / rate)

    def data_header_time(self) -> float:
        """PHY header part of a DATA frame, seconds."""
        return (self.sc_phy_header + self.control_phy_header) / self.control_rate

    def fd_overhead(self, three_node: bool = False) -> float:
        """Everything but the DATA bodies in one FD transaction, in seconds."""
        ns = self.difs + self.rts + self.sifs + self.cts + self.sifs + self.sifs + self.ack
        if three_node:
            ns += self.rts + self.sifs
        return ns * 1e-9 + self.data_header_time()


DEFAULT_TIMING = Timing()


@dataclass(frozen=True)
class Frame:
    kind: Kind
    src: int
    dst: int
    duplex_mode: int = HD
    work_mode: int = 0
    mcs_mode: int = 0
    duration: int = 0        # microseconds
    payload_bits: int = 0

    def __post_init__(self):
        if self.duplex_mode not in (HD, FD):
            raise FrameError(f"duplex mode must be 0 or 1, got {self.duplex_mode}")
        if not 0 <= self.mcs_mode <= 15:
            raise FrameError(f"MCS mode {self.mcs_mode} does not fit in 4 bits")
        if self.kind is Kind.RTS and self.work_mode not in (RTS_PRIMARY, RTS_SECONDARY):
            raise FrameError(f"illegal RTS work mode {self.work_mode}")
        if self.kind is Kind.CTS and self.work_mode not in (CTS_HD, CTS_TWO_NODE, CTS_THREE_NODE):
            raise FrameError(f"illegal CTS work mode {self.work_mode:02b}")
        if not 0 <= self.duration < 1 << 15:
            raise FrameError("duration out of range")
        if self.kind is not Kind.DATA and self.payload_bits:
            raise FrameError("only DATA frames carry payload")

    def total_bits(self, timing: Timing = DEFAULT_TIMING) -> int:
        if self.kind is Kind.RTS:
            return timing.rts_bits
        if self.kind is Kind.CTS:
            return timing.cts_bits
        if self.kind is Kind.ACK:
            return timing.ack_bits
        return timing.mac_header + self.payload_bits


def airtime(frame: Frame, rate: float | None = None, timing: Timing = DEFAULT_TIMING) -> int:
    """On-air duration in ns.  DATA frames need the PHY rate of their MCS."""
    if frame.kind is Kind.DATA:
        if not rate or rate <= 0:
            raise FrameError("DATA airtime needs a positive PHY rate")
        return timing.data_airtime(frame.payload_bits, rate)
    return timing.control_airtime(frame.total_bits(timing))


def encode_frame(frame: Frame, rate: float | None = None, timing: Timing = DEFAULT_TIMING) -> tuple[int, int]:
    """Return ``(total MAC bits, airtime ns)``."""
    return frame.total_bits(timing), airtime(frame, rate, timing)


# -- bit-level codec for control frames ------------------------------------

_FC = {Kind.RTS: 0xB4, Kind.CTS: 0xC4, Kind.ACK: 0xD4}
_KIND_OF_FC = {v: k for k, v in _FC.items()}
_WORK_BITS = {Kind.RTS: 1, Kind.CTS: 2, Kind.ACK: 0}


class _Bits:
    def __init__(self):
        self.value = 0
        self.n = 0

    def put(self, v: int, width: int):
        self.value = (self.value << width) | (v & ((1 << width) - 1))
        self.n += width


def pack(frame: Frame, timing: Timing = DEFAULT_TIMING) -> bytes:
    """Serialize an RTS, CTS or ACK to its fixed-size byte string."""
    if frame.kind is Kind.DATA:
        raise FrameError("only control frames have a fixed layout")
    b = _Bits()
    b.put(_FC[frame.kind], 16)
    b.put(frame.duration, 16)
    b.put(frame.dst, 48)
    if frame.kind is Kind.RTS:
        b.put(frame.src, 48)
    if frame.kind is not Kind.ACK:
        b.put(frame.duplex_mode, 1)
        b.put(frame.work_mode, _WORK_BITS[frame.kind])
        b.put(frame.mcs_mode, 4)
    body_bits = b.n
    body = b.value
    crc = zlib.crc32(body.to_bytes((body_bits + 7) // 8, "big"))
    b.put(crc, 32)
    total = frame.total_bits(timing)
    b.put(0, total - b.n)
    return b.value.to_bytes(total // 8, "big")


def unpack(data: bytes, src: int | None = None) -> Frame:
    """Inverse of :func:`pack`.  CTS and ACK do not carry the sender address."""
    value = int.from_bytes(data, "big")
    total = len(data) * 8
    pos = total

    def take(width: int) -> int:
        nonlocal pos
        pos -= width
        return (value >> pos) & ((1 << width) - 1)

    fc = take(16)
    try:
        kind = _KIND_OF_FC[fc]
    except KeyError:
        raise FrameError(f"unknown frame control {fc:#x}") from None
    duration = take(16)
    dst = take(48)
    if kind is Kind.RTS:
        src = take(48)
    duplex = work = mcs = 0
    if kind is not Kind.ACK:
        duplex = take(1)
        work = take(_WORK_BITS[kind])
        mcs = take(4)
    body_bits = total - pos
    body = value >> pos
    crc = take(32)
    if crc != zlib.crc32(body.to_bytes((body_bits + 7) // 8, "big")):
        raise FrameError("FCS mismatch")
    return Frame(kind, src if src is not None else -1, dst, duplex, work, mcs, duration)
