"""Directional antenna, path gain, SINR and MCS rate matching.

All internal arithmetic is in linear units (watts, linear gains).  dB
helpers are provided for configuration and reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

TWO_PI = 2.0 * math.pi


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def lin_to_db(x: float) -> float:
    if x <= 0.0:
        return -math.inf
    return 10.0 * math.log10(x)


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def w_to_dbm(w: float) -> float:
    if w <= 0.0:
        return -math.inf
    return 10.0 * math.log10(w) + 30.0


# 60 GHz free-space gain at 1 m, (lambda / 4 pi)^2 rounded to -68 dB.
DEFAULT_G0_DB = -68.0
OXYGEN_ATTENUATION = 0.0037  # 1/m


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def distance(self, other: "Position") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def bearing(self, other: "Position") -> float:
        """Angle in [0, 2pi) of the direction from self to other."""
        if self.x == other.x and self.y == other.y:
            raise ValueError("bearing between coincident positions is undefined")
        return math.atan2(other.y - self.y, other.x - self.x) % TWO_PI


@dataclass(frozen=True)
class AntennaConfig:
    """Ideal sector antenna with ``beam_count`` equal beams.

    Beam ``k`` points at ``k * beamwidth``; the maximum gain equals the beam
    count (2 pi / beamwidth).
    """

    beam_count: int

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be >= 1")

    @property
    def beamwidth(self) -> float:
        return TWO_PI / self.beam_count

    @property
    def max_gain(self) -> float:
        return float(self.beam_count)

    def boresight(self, beam: int) -> float:
        return (beam % self.beam_count) * self.beamwidth

    def beam_toward(self, angle: float) -> int:
        """Index of the beam covering ``angle``.

        A direction lying exactly on a boundary goes to the lower-indexed of
        the two adjacent beams.
        """
        M = self.beam_count
        if M == 1:
            return 0
        half = self.beamwidth / 2.0
        offsets = [abs(angular_offset(angle, self.boresight(k))) for k in range(M)]
        for k in range(M):
            if offsets[k] <= half:
                return k
        # rounding left the angle just outside both neighbouring sectors
        return min(range(M), key=offsets.__getitem__)


def angular_offset(angle: float, boresight: float) -> float:
    """Signed offset of ``angle`` from ``boresight`` wrapped to (-pi, pi]."""
    d = (angle - boresight) % TWO_PI
    if d > math.pi:
        d -= TWO_PI
    return d


@dataclass(frozen=True)
class BeamPointing:
    boresight: float
    role: str = "transmit"

    def __post_init__(self):
        if self.role not in ("transmit", "receive"):
            raise ValueError(f"unknown beam role {self.role!r}")
        object.__setattr__(self, "boresight", self.boresight % TWO_PI)


OMNI = None  # quasi-omnidirectional listening, unit gain


def _pattern_gain(antenna: AntennaConfig, beam: BeamPointing | None, peer: Position, self_pos: Position) -> float:
    if beam is OMNI:
        if peer == self_pos:
            raise ValueError("peer coincides with node")
        return 1.0
    phi = angular_offset(self_pos.bearing(peer), beam.boresight)
    return antenna.max_gain if abs(phi) < antenna.beamwidth / 2.0 else 0.0


def tx_gain(antenna: AntennaConfig, beam: BeamPointing, target: Position, self_pos: Position) -> float:
    if beam is not OMNI and beam.role != "transmit":
        raise ValueError("tx_gain needs a transmit beam")
    return _pattern_gain(antenna, beam, target, self_pos)


def rx_gain(antenna: AntennaConfig, beam: BeamPointing | None, source: Position, self_pos: Position) -> float:
    """Receive gain; ``beam=None`` is quasi-omni listening with unit gain."""
    if beam is not OMNI and beam.role != "receive":
        raise ValueError("rx_gain needs a receive beam")
    return _pattern_gain(antenna, beam, source, self_pos)


@dataclass(frozen=True)
class ChannelParams:
    g0: float = db_to_lin(DEFAULT_G0_DB)
    alpha: float = 2.0
    c0: float = OXYGEN_ATTENUATION
    n0: float = dbm_to_w(-90.0)

    def __post_init__(self):
        if self.g0 <= 0 or self.alpha <= 0 or self.c0 < 0 or self.n0 <= 0:
            raise ValueError(f"invalid channel parameters {self}")


def path_gain_at(params: ChannelParams, d: float) -> float:
    if d <= 0:
        raise ValueError("path gain needs a positive distance")
    return params.g0 * d ** (-params.alpha) * math.exp(-params.c0 * d)


def path_gain(params: ChannelParams, a: Position, b: Position) -> float:
    return path_gain_at(params, a.distance(b))


@dataclass(frozen=True)
class Radio:
    """A node's physical radio: where it is and what antenna it has."""

    position: Position
    antenna: AntennaConfig
    beta: float = db_to_lin(-85.0)


def received_power(p_tx: float, tx: Radio, tx_beam: BeamPointing | None,
                   rx: Radio, rx_beam: BeamPointing | None, params: ChannelParams) -> float:
    if p_tx < 0:
        raise ValueError("negative transmit power")
    if p_tx == 0.0:
        return 0.0
    g_t = tx_gain(tx.antenna, tx_beam, rx.position, tx.position)
    g_r = rx_gain(rx.antenna, rx_beam, tx.position, rx.position)
    if g_t == 0.0 or g_r == 0.0:
        return 0.0
    return p_tx * g_t * g_r * path_gain(params, tx.position, rx.position)


def residual_si(p_tx: float, beta: float) -> float:
    if p_tx < 0 or not 0.0 <= beta <= 1.0:
        raise ValueError("residual_si needs p_tx >= 0 and 0 <= beta <= 1")
    return p_tx * beta


@dataclass(frozen=True)
class Transmission:
    """An active transmission as seen by the SINR calculation."""

    src: Radio
    power: float
    beam: BeamPointing
    dst: Radio | None = None
    same_link: bool = False  # belongs to the receiver's own FD link


@dataclass(frozen=True)
class SinrBreakdown:
    signal: float
    residual_si: float
    ibi: float
    co_channel: float
    noise: float

    @property
    def interference(self) -> float:
        return math.fsum((self.residual_si, self.ibi, self.co_channel, self.noise))

    @property
    def sinr(self) -> float:
        return self.signal / self.interference

    @property
    def sinr_db(self) -> float:
        return lin_to_db(self.sinr)


def sinr(receiver: Radio, rx_beam: BeamPointing | None, wanted: Transmission,
         concurrent: Iterable[Transmission], params: ChannelParams, *,
         own_tx_power: float = 0.0, ibi_enabled: bool = True) -> SinrBreakdown:
    """SINR of ``wanted`` at ``receiver``.

    ``own_tx_power`` is the receiver's simultaneous transmit power (FD); it
    contributes residual self-interference.  Concurrent transmissions flagged
    ``same_link`` are accounted as inter-beam interference, the rest as
    co-channel interference.
    """
    signal = received_power(wanted.power, wanted.src, wanted.beam, receiver, rx_beam, params)
    si = residual_si(own_tx_power, receiver.beta) if own_tx_power > 0 else 0.0
    ibi_terms, cc_terms = [], []
    for tx in concurrent:
        p = received_power(tx.power, tx.src, tx.beam, receiver, rx_beam, params)
        if tx.same_link:
            if ibi_enabled:
                ibi_terms.append(p)
        else:
            cc_terms.append(p)
    return SinrBreakdown(signal, si, math.fsum(ibi_terms), math.fsum(cc_terms), params.n0)


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation: str
    coding_rate: Fraction
    data_rate: float  # bit/s
    threshold: float  # linear SINR

    @property
    def threshold_db(self) -> float:
        return lin_to_db(self.threshold)


class McsTable(Sequence):
    """MCS entries sorted by index, strictly increasing in rate and threshold."""

    def __init__(self, entries: Iterable[McsEntry]):
        self.entries = tuple(sorted(entries, key=lambda e: e.index))
        if not self.entries:
            raise ValueError("empty MCS table")
        for a, b in zip(self.entries, self.entries[1:]):
            if not (b.data_rate > a.data_rate and b.threshold > a.threshold):
                raise ValueError("MCS entries must increase in both rate and threshold")

    def __getitem__(self, i):
        return self.entries[i]

    def __len__(self):
        return len(self.entries)

    def by_index(self, index: int) -> McsEntry:
        for e in self.entries:
            if e.index == index:
                return e
        raise KeyError(f"no MCS {index}")

    def match(self, sinr_lin: float) -> McsEntry | None:
        if sinr_lin < 0:
            raise ValueError("negative SINR")
        best = None
        for e in self.entries:
            if e.threshold <= sinr_lin:
                best = e
            else:
                break
        return best

    def rate(self, sinr_lin: float) -> float:
        e = self.match(sinr_lin)
        return e.data_rate if e is not None else 0.0


DEFAULT_MCS = McsTable([
    McsEntry(1, "QPSK", Fraction(1, 2), 952e6, db_to_lin(5.5)),
    McsEntry(2, "QPSK", Fraction(2, 3), 1904e6, db_to_lin(13.0)),
    McsEntry(3, "16-QAM", Fraction(2, 3), 3807e6, db_to_lin(18.0)),
])


def mcs_match(sinr_lin: float, table: McsTable = DEFAULT_MCS) -> McsEntry | None:
    return table.match(sinr_lin)
