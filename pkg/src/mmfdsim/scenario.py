"""Scenario configuration files and topology generation.

Configs are INI files read with :mod:`configparser`.  Every key has a
default, so an empty file describes the standard 10 m single-AP setup.
See ``configs/fig6.ini`` for a fully commented example.
"""

from __future__ import annotations

import configparser
import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from . import kernel
from .protocol.frames import DEFAULT_TIMING, Timing
from .protocol.mac import MacConfig, NodeSpec, Variant
from .radio import (ChannelParams, McsEntry, McsTable, DEFAULT_MCS, Position,
                    db_to_lin, dbm_to_w)


class ConfigError(ValueError):
    pass


TRAFFIC_MODELS = ("saturated", "rate-limited")


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    variants: tuple[Variant, ...] = tuple(Variant)
    node_counts: tuple[int, ...] = (10,)        # AP included
    duration: float = 1.0                       # seconds of virtual time
    replications: int = 10
    seed: int = 1
    # topology
    radius: float = 10.0
    positions: tuple[Position, ...] | None = None   # explicit, AP first
    max_placement_tries: int = 1000
    ap_beams: int = 12
    user_beams: int = 12
    # feature flags; busy_tones None follows the variant
    busy_tones: bool | None = None
    power_control: bool = False
    ibi: bool = True
    # traffic
    traffic: str = "saturated"
    payload_bits: int = 64_000
    packet_rate: float = 0.0
    uplink: bool = True
    downlink: bool = True
    # rates and radio
    rate_mode: str = "fixed"
    mcs_index: int = 2
    mcs: McsTable = DEFAULT_MCS
    channel: ChannelParams = field(default_factory=ChannelParams)
    ap_tx_power: float = dbm_to_w(10.0)         # W
    user_tx_power: float = dbm_to_w(10.0)
    min_power: float = 1e-3
    power_step: float = 1e-3
    beta: float = db_to_lin(-85.0)
    cca_threshold: float = dbm_to_w(-68.0)
    control_threshold: float = db_to_lin(5.5)
    timing: Timing = DEFAULT_TIMING

    def validate(self):
        if not self.variants:
            raise ConfigError("at least one protocol variant is required")
        if not self.node_counts or min(self.node_counts) < 2:
            raise ConfigError("every node count must be at least 2 (an AP and one user)")
        if self.positions is not None and set(self.node_counts) != {len(self.positions)}:
            raise ConfigError("explicit positions fix the node count")
        if self.duration < 0 or not math.isfinite(self.duration):
            raise ConfigError("duration must be a finite non-negative number of seconds")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not 0 <= self.seed < 2 ** 63:
            raise ConfigError("seed must be a non-negative 63-bit integer")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if self.ap_beams < 1 or self.user_beams < 1:
            raise ConfigError("every node needs at least one beam")
        if self.traffic not in TRAFFIC_MODELS:
            raise ConfigError(f"traffic must be one of {', '.join(TRAFFIC_MODELS)}")
        if self.traffic == "rate-limited" and self.packet_rate <= 0:
            raise ConfigError("rate-limited traffic needs a positive packet_rate")
        if self.payload_bits <= 0:
            raise ConfigError("payload_bits must be positive")
        if self.rate_mode not in ("fixed", "adaptive"):
            raise ConfigError("rate mode must be fixed or adaptive")
        if self.power_control and self.rate_mode != "adaptive":
            raise ConfigError("power_control requires rate mode adaptive")
        try:
            self.mcs.by_index(self.mcs_index)
        except KeyError:
            raise ConfigError(f"MCS {self.mcs_index} is not in the MCS table") from None
        if not 0 <= self.beta <= 1:
            raise ConfigError("beta must be within [0, 1] (linear)")
        for p in (self.ap_tx_power, self.user_tx_power, self.min_power, self.power_step):
            if p <= 0:
                raise ConfigError("powers and the power step must be positive")
        if self.power_control:
            for p in (self.ap_tx_power, self.user_tx_power):
                k = (p - self.min_power) / self.power_step
                if k < 0 or abs(k - round(k)) > 1e-6:
                    raise ConfigError("tx power must lie on the min_power + k * power_step grid")
        t = self.timing
        if not 1 <= t.cw_min <= t.cw_max:
            raise ConfigError("need 1 <= cw_min <= cw_max")
        return self

    @property
    def duration_ns(self) -> int:
        return round(self.duration * kernel.S)

    def mac_config(self, variant: Variant) -> MacConfig:
        return MacConfig(
            variant=variant, busy_tones=self.busy_tones, power_control=self.power_control,
            ibi=self.ibi, rate_mode=self.rate_mode, mcs_index=self.mcs_index, mcs=self.mcs,
            channel=self.channel, timing=self.timing, payload_bits=self.payload_bits,
            cca_threshold=self.cca_threshold, control_threshold=self.control_threshold,
            duration=self.duration_ns)


def replication_seed(seed: int, replication: int) -> int:
    return kernel.stream_seed(seed, replication)


def generate_topology(cfg: ScenarioConfig, n: int, seed: int) -> list[Position]:
    """AP at the origin, ``n - 1`` users uniform over the disc."""
    if cfg.positions is not None:
        return list(cfg.positions)
    rng = random.Random(kernel.stream_seed(seed, -1))
    pts = [Position(0.0, 0.0)]
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > cfg.max_placement_tries + n:
            raise ConfigError("could not place nodes at distinct positions")
        r = cfg.radius * math.sqrt(rng.random())
        a = rng.uniform(0.0, 2.0 * math.pi)
        p = Position(r * math.cos(a), r * math.sin(a))
        if any(p == q for q in pts):
            continue
        pts.append(p)
    return pts


def node_specs(cfg: ScenarioConfig, positions: list[Position]) -> list[NodeSpec]:
    specs = []
    for i, pos in enumerate(positions):
        ap = i == 0
        wanted = cfg.downlink if ap else cfg.uplink
        if not wanted:
            traffic = "none"
        else:
            traffic = "saturated" if cfg.traffic == "saturated" else "poisson"
        specs.append(NodeSpec(
            id=i, position=pos, beams=cfg.ap_beams if ap else cfg.user_beams, is_ap=ap,
            tx_power=cfg.ap_tx_power if ap else cfg.user_tx_power, min_power=cfg.min_power,
            power_step=cfg.power_step, beta=cfg.beta, traffic=traffic, packet_rate=cfg.packet_rate))
    return specs


# -- INI parsing -------------------------------------------------------------

def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    out = []
    for part in v.replace(",", " ").split():
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _positions(v: str) -> tuple[Position, ...]:
    pts = []
    for item in v.split(";"):
        if item.strip():
            x, y = item.split(",")
            pts.append(Position(float(x), float(y)))
    return tuple(pts)


def _mcs_table(v: str) -> McsTable:
    # "index:modulation:rate:bits_per_s:threshold_db" entries separated by ";"
    entries = []
    for item in v.split(";"):
        if item.strip():
            idx, mod, code, rate, thr = (x.strip() for x in item.split(":"))
            entries.append(McsEntry(int(idx), mod, Fraction(code), float(rate), db_to_lin(float(thr))))
    return McsTable(entries)


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    known = {"scenario", "topology", "antenna", "features", "traffic", "rate", "channel", "radio", "mac"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    cfg = ScenarioConfig()
    ch = {}
    tm = {}
    readers = {
        ("scenario", "name"): lambda v: setattr(cfg, "name", v),
        ("scenario", "variants"): lambda v: setattr(
            cfg, "variants", tuple(Variant(x.strip()) for x in v.split(",") if x.strip())),
        ("scenario", "node_counts"): lambda v: setattr(cfg, "node_counts", _ints(v)),
        ("scenario", "duration_s"): lambda v: setattr(cfg, "duration", float(v)),
        ("scenario", "replications"): lambda v: setattr(cfg, "replications", int(v)),
        ("scenario", "seed"): lambda v: setattr(cfg, "seed", int(v)),
        ("topology", "radius_m"): lambda v: setattr(cfg, "radius", float(v)),
        ("topology", "positions"): lambda v: setattr(cfg, "positions", _positions(v)),
        ("topology", "max_placement_tries"): lambda v: setattr(cfg, "max_placement_tries", int(v)),
        ("antenna", "ap_beams"): lambda v: setattr(cfg, "ap_beams", int(v)),
        ("antenna", "user_beams"): lambda v: setattr(cfg, "user_beams", int(v)),
        ("features", "busy_tones"): lambda v: setattr(
            cfg, "busy_tones", None if v.strip().lower() == "auto" else _bool(v)),
        ("features", "power_control"): lambda v: setattr(cfg, "power_control", _bool(v)),
        ("features", "ibi"): lambda v: setattr(cfg, "ibi", _bool(v)),
        ("traffic", "model"): lambda v: setattr(cfg, "traffic", v.strip()),
        ("traffic", "payload_bits"): lambda v: setattr(cfg, "payload_bits", int(v)),
        ("traffic", "packet_rate"): lambda v: setattr(cfg, "packet_rate", float(v)),
        ("traffic", "uplink"): lambda v: setattr(cfg, "uplink", _bool(v)),
        ("traffic", "downlink"): lambda v: setattr(cfg, "downlink", _bool(v)),
        ("rate", "mode"): lambda v: setattr(cfg, "rate_mode", v.strip()),
        ("rate", "mcs_index"): lambda v: setattr(cfg, "mcs_index", int(v)),
        ("rate", "table"): lambda v: setattr(cfg, "mcs", _mcs_table(v)),
        ("channel", "g0_db"): lambda v: ch.__setitem__("g0", db_to_lin(float(v))),
        ("channel", "alpha"): lambda v: ch.__setitem__("alpha", float(v)),
        ("channel", "c0"): lambda v: ch.__setitem__("c0", float(v)),
        ("channel", "n0_dbm"): lambda v: ch.__setitem__("n0", dbm_to_w(float(v))),
        ("radio", "ap_tx_power_dbm"): lambda v: setattr(cfg, "ap_tx_power", dbm_to_w(float(v))),
        ("radio", "user_tx_power_dbm"): lambda v: setattr(cfg, "user_tx_power", dbm_to_w(float(v))),
        ("radio", "min_power_mw"): lambda v: setattr(cfg, "min_power", float(v) * 1e-3),
        ("radio", "power_step_mw"): lambda v: setattr(cfg, "power_step", float(v) * 1e-3),
        ("radio", "beta_db"): lambda v: setattr(cfg, "beta", db_to_lin(float(v))),
        ("radio", "cca_threshold_dbm"): lambda v: setattr(cfg, "cca_threshold", dbm_to_w(float(v))),
        ("radio", "control_threshold_db"): lambda v: setattr(cfg, "control_threshold", db_to_lin(float(v))),
    }
    for key in ("cw_min", "cw_max", "retry_limit"):
        readers[("mac", key)] = lambda v, key=key: tm.__setitem__(key, int(v))
    for key in ("sifs", "difs", "slot"):
        readers[("mac", key + "_ns")] = lambda v, key=key: tm.__setitem__(key, int(v))
    for section in cp.sections():
        for key, value in cp.items(section):
            reader = readers.get((section, key))
            if reader is None:
                raise ConfigError(f"unknown key [{section}] {key}")
            try:
                reader(value)
            except ConfigError:
                raise
            except (ValueError, TypeError) as e:
                raise ConfigError(f"[{section}] {key} = {value!r}: {e}") from None
    try:
        if ch:
            cfg.channel = ChannelParams(**ch)
        if tm:
            cfg.timing = replace(cfg.timing, **tm)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if cfg.positions is not None and cp.has_option("scenario", "node_counts") is False:
        cfg.node_counts = (len(cfg.positions),)
    return cfg.validate()


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return parse_config(text, str(path))
