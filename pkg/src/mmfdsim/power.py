"""Transmit power control for a single FD link.

The link has a primary transmitter ``T`` sending to ``R``; ``R`` sends back
to ``T`` (two-node mode) or on to a third node ``R2`` (three-node mode).
Rates are the highest MCS supported by the achieved SINRs, and the goal is
the power pair on a discrete grid minimizing the channel occupation time
``max(L_T / r_T, L_R / r_R)``.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from functools import cached_property

from .protocol.frames import DEFAULT_TIMING
from .radio import (DEFAULT_MCS, BeamPointing, ChannelParams, McsTable, Radio,
                    SinrBreakdown, Transmission, sinr)

TWO_NODE = "two-node"
THREE_NODE = "three-node"


class LinkInfeasible(Exception):
    """No power pair on the grid lets both directions decode."""


def occupation_time(l_t: float, r_t: float, l_r: float, r_r: float) -> float:
    if l_t > 0 and r_t <= 0:
        raise ValueError("primary rate must be positive")
    if l_r > 0 and r_r <= 0:
        raise ValueError("secondary rate must be positive")
    t = l_t / r_t if l_t > 0 else 0.0
    r = l_r / r_r if l_r > 0 else 0.0
    return max(t, r)


def link_throughput(l_t: float, r_t: float, l_r: float, r_r: float, overhead: float) -> float:
    return (l_t + l_r) / (overhead + occupation_time(l_t, r_t, l_r, r_r))


def power_grid(p_min: float, p_max: float, step: float) -> tuple[float, ...]:
    """Inclusive grid ``p_min, p_min + step, ..., p_max``."""
    if step <= 0:
        raise ValueError("power step must be positive")
    if p_min > p_max or p_min < 0:
        raise ValueError(f"bad power bounds [{p_min}, {p_max}]")
    k = round((p_max - p_min) / step)
    if abs(p_min + k * step - p_max) > 1e-9 * max(1.0, abs(p_max)) + 1e-15:
        raise ValueError(f"[{p_min}, {p_max}] is not a whole number of {step} steps")
    return tuple(p_min + i * step for i in range(k)) + (p_max,)


def _beam(src: Radio, dst: Radio, role: str) -> BeamPointing:
    ant = src.antenna
    k = ant.beam_toward(src.position.bearing(dst.position))
    return BeamPointing(ant.boresight(k), role)


@dataclass(frozen=True)
class FdLinkSpec:
    mode: str
    primary_tx: Radio
    primary_rx: Radio
    payload_primary: float
    payload_secondary: float
    p_min_primary: float
    p_max_primary: float
    p_min_secondary: float
    p_max_secondary: float
    step: float
    secondary_rx: Radio | None = None
    overhead: float | None = None
    params: ChannelParams = field(default_factory=ChannelParams)
    mcs: McsTable = DEFAULT_MCS
    ibi_enabled: bool = True
    co_channel: float = 0.0   # interference from other links, W

    def __post_init__(self):
        if self.mode not in (TWO_NODE, THREE_NODE):
            raise ValueError(f"unknown FD mode {self.mode!r}")
        if (self.mode == THREE_NODE) != (self.secondary_rx is not None):
            raise ValueError("three-node mode needs exactly one secondary receiver")
        if self.payload_primary <= 0 or self.payload_secondary <= 0:
            raise ValueError("payloads must be positive")
        if self.overhead is None:
            object.__setattr__(self, "overhead", DEFAULT_TIMING.fd_overhead(False))
        # validates the grids
        self.primary_grid, self.secondary_grid

    @cached_property
    def primary_grid(self) -> tuple[float, ...]:
        return power_grid(self.p_min_primary, self.p_max_primary, self.step)

    @cached_property
    def secondary_grid(self) -> tuple[float, ...]:
        return power_grid(self.p_min_secondary, self.p_max_secondary, self.step)

    @property
    def secondary_target(self) -> Radio:
        return self.secondary_rx if self.mode == THREE_NODE else self.primary_tx

    @cached_property
    def _beams(self):
        t, r, s = self.primary_tx, self.primary_rx, self.secondary_target
        return {
            "t_tx": _beam(t, r, "transmit"),
            "r_rx": _beam(r, t, "receive"),
            "r_tx": _beam(r, s, "transmit"),
            "s_rx": _beam(s, r, "receive"),
        }

    def sinr_primary(self, p_t: float, p_r: float) -> SinrBreakdown:
        """SINR of T's DATA at R while R transmits with ``p_r``."""
        b = self._beams
        wanted = Transmission(self.primary_tx, p_t, b["t_tx"])
        out = sinr(self.primary_rx, b["r_rx"], wanted, (), self.params, own_tx_power=p_r)
        return _with_co_channel(out, self.co_channel)

    def sinr_secondary(self, p_t: float, p_r: float) -> SinrBreakdown:
        """SINR of R's DATA at its receiver (T or R2)."""
        b = self._beams
        wanted = Transmission(self.primary_rx, p_r, b["r_tx"])
        if self.mode == TWO_NODE:
            out = sinr(self.primary_tx, b["s_rx"], wanted, (), self.params, own_tx_power=p_t)
        else:
            ibi = Transmission(self.primary_tx, p_t, b["t_tx"], same_link=True)
            out = sinr(self.secondary_rx, b["s_rx"], wanted, (ibi,), self.params,
                       ibi_enabled=self.ibi_enabled)
        return _with_co_channel(out, self.co_channel)

    def evaluate(self, p_t: float, p_r: float) -> "PowerSolution | None":
        s1 = self.sinr_primary(p_t, p_r).sinr
        s2 = self.sinr_secondary(p_t, p_r).sinr
        m1, m2 = self.mcs.match(s1), self.mcs.match(s2)
        if m1 is None or m2 is None:
            return None
        d = occupation_time(self.payload_primary, m1.data_rate, self.payload_secondary, m2.data_rate)
        s = (self.payload_primary + self.payload_secondary) / (self.overhead + d)
        return PowerSolution(p_t, p_r, m1.data_rate, m2.data_rate, d, s,
                             m1.index, m2.index, s1, s2)


def _with_co_channel(b: SinrBreakdown, extra: float) -> SinrBreakdown:
    if not extra:
        return b
    return SinrBreakdown(b.signal, b.residual_si, b.ibi, b.co_channel + extra, b.noise)


@dataclass(frozen=True)
class PowerSolution:
    p_primary: float
    p_secondary: float
    rate_primary: float
    rate_secondary: float
    occupation_time: float
    throughput: float
    mcs_primary: int = 0
    mcs_secondary: int = 0
    sinr_primary: float = math.nan
    sinr_secondary: float = math.nan

    def key(self):
        """Total order used to pick among candidates (smaller is better)."""
        return (self.occupation_time, -self.throughput,
                self.p_primary + self.p_secondary, self.p_primary)


def _better(a: PowerSolution | None, b: PowerSolution | None) -> PowerSolution | None:
    if b is None:
        return a
    if a is None or b.key() < a.key():
        return b
    return a


def optimize_powers(spec: FdLinkSpec) -> PowerSolution:
    """Grid power control.

    Walks the primary power down from its maximum.  For each primary power
    the reachable primary rates are bracketed by the secondary power at its
    maximum (worst self-interference at R) and minimum.  For every rate in
    that bracket the largest secondary power that still supports it bounds
    the search; within the bound, the smallest secondary power reaching each
    secondary MCS level is evaluated.
    """
    grid_r = spec.secondary_grid
    table = spec.mcs
    best = None
    p_t_index = len(spec.primary_grid) - 1
    while p_t_index >= 0:
        p_t = spec.primary_grid[p_t_index]
        # primary SINR falls and secondary SINR rises with p_r
        def prim(p, p_t=p_t):
            return -spec.sinr_primary(p_t, p).sinr

        def sec(p, p_t=p_t):
            return spec.sinr_secondary(p_t, p).sinr

        r_min = table.rate(-prim(grid_r[-1]))
        r_max = table.rate(-prim(grid_r[0]))
        for entry in table:
            if not (r_min <= entry.data_rate <= r_max):
                continue
            # largest p_r whose primary SINR still meets this rate
            hi = bisect_right(grid_r, -entry.threshold, key=prim) - 1
            if hi < 0:
                continue
            for level in table:
                j = bisect_left(grid_r, level.threshold, 0, hi + 1, key=sec)
                if j > hi:
                    break
                best = _better(best, spec.evaluate(p_t, grid_r[j]))
        p_t_index -= 1
    if best is None:
        raise LinkInfeasible("no power pair closes both directions of the link")
    return best


def brute_force_oracle(spec: FdLinkSpec) -> PowerSolution:
    """Evaluate every grid pair; reference for :func:`optimize_powers`."""
    if len(spec.primary_grid) * len(spec.secondary_grid) > 10 ** 6:
        raise ValueError("grid too large for exhaustive search")
    best = None
    for p_t in spec.primary_grid:
        for p_r in spec.secondary_grid:
            best = _better(best, spec.evaluate(p_t, p_r))
    if best is None:
        raise LinkInfeasible("no power pair closes both directions of the link")
    return best


def fixed_power(spec: FdLinkSpec) -> PowerSolution | None:
    """Both transmitters at maximum power (no power control)."""
    return spec.evaluate(spec.p_max_primary, spec.p_max_secondary)
