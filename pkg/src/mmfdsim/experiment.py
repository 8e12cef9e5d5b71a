"""Replicated runs, output files and the power-control sweep."""

from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .kernel import Engine, TraceWriter
from .metrics import RunResult, summarize
from .power import THREE_NODE, TWO_NODE, FdLinkSpec, LinkInfeasible, fixed_power, optimize_powers
from .protocol.checks import InvariantChecker
from .protocol.mac import Network, Variant
from .radio import AntennaConfig, ChannelParams, Position, Radio, db_to_lin, dbm_to_w, lin_to_db
from .scenario import (ConfigError, ScenarioConfig, generate_topology, node_specs,
                       replication_seed)


class InvariantError(RuntimeError):
    def __init__(self, context: str, violations: list[str]):
        super().__init__(f"{context}: {len(violations)} invariant violation(s); first: {violations[0]}")
        self.context = context
        self.violations = violations


def run_single(cfg: ScenarioConfig, variant: Variant, n: int, replication: int, *,
               tracer=None, check: bool = False, tiebreak_seed: int | None = None,
               duration: float | None = None) -> tuple[RunResult, list[str]]:
    """One replication of one variant.  Returns the result and any violations."""
    if duration is not None:
        cfg = replace(cfg, duration=duration)
    seed = replication_seed(cfg.seed, replication)
    positions = generate_topology(cfg, n, seed)
    mac = cfg.mac_config(Variant(variant))
    engine = Engine(tiebreak_seed=tiebreak_seed)
    checker = None
    if tracer is not None:
        engine.add_tracer(tracer)
        tracer(0, -1, "run-start", {"variant": mac.variant.value, "n": n, "replication": replication,
                                    "seed": seed})
    if check:
        checker = InvariantChecker(full_duplex=mac.full_duplex, busy_tones=bool(mac.busy_tones),
                                   timing=mac.timing)
        engine.add_tracer(checker)
    net = Network(engine, mac, node_specs(cfg, positions), seed)
    net.start()
    engine.run_until(mac.duration)
    net.stop_accepting()
    engine.run()
    violations = checker.finish(net) if checker is not None else []
    s = net.stats
    result = RunResult(mac.variant.value, n, replication, seed, cfg.duration, list(s.delivered),
                       dict(s.txn_counts), dict(sorted(s.failures.items())), s.drops,
                       {k: list(v) for k, v in s.sinr.items()})
    return result, violations


def run_experiment(cfg: ScenarioConfig, *, replications: int | None = None, trace_path=None,
                   check: bool = False, strict: bool = True, progress=None) -> list[RunResult]:
    """All variants x node counts x replications, in a fixed order."""
    reps = cfg.replications if replications is None else replications
    results = []
    fh = open(trace_path, "w") if trace_path else None
    try:
        writer = TraceWriter(fh) if fh else None
        for n in cfg.node_counts:
            for rep in range(reps):
                for variant in cfg.variants:
                    res, violations = run_single(cfg, variant, n, rep, tracer=writer,
                                                 check=check or writer is not None)
                    if violations and strict:
                        raise InvariantError(f"{variant.value} n={n} replication={rep}", violations)
                    results.append(res)
                    if progress:
                        progress(res)
    finally:
        if fh:
            fh.close()
    return results


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    return x


def write_results_csv(path, results: list[RunResult]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RunResult.CSV_COLUMNS)
        for r in results:
            w.writerow(r.csv_row())


def write_outputs(out_dir, cfg: ScenarioConfig, results: list[RunResult]) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    write_results_csv(csv_path, results)
    summary = {
        "scenario": cfg.name,
        "seed": cfg.seed,
        "duration_s": cfg.duration,
        "groups": summarize(results),
        "per_node_throughput_bps": [
            {"variant": r.variant, "node_count": r.node_count, "replication": r.replication,
             "throughput_bps": r.throughputs} for r in results],
        "link_sinr_db": [
            {"variant": r.variant, "node_count": r.node_count, "replication": r.replication,
             "links": r.sinr_summary()} for r in results],
    }
    json_path = out / "summary.json"
    json_path.write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    return csv_path, json_path


# -- power-control sweep -------------------------------------------------------

@dataclass
class LinkConfig:
    """Geometry and power limits of one AP-centred FD link."""

    mode: str = THREE_NODE
    ap_beams: int = 32
    user_beams: int = 8
    distance: float = 15.0                # m, AP to each user
    angle: float = 90.0                   # deg between the two users, seen from the AP
    payload_bits: int = 64_000
    user_power_min: float = 1e-3          # W
    user_power_max: float = 20e-3
    ap_power_min: float = 1e-3
    step: float = 1e-3
    beta: float = db_to_lin(-85.0)
    channel: ChannelParams = field(default_factory=ChannelParams)
    ap_power_max: tuple[float, ...] = tuple(p * 1e-3 for p in range(20, 101, 10))

    def spec(self, ap_power_max: float, *, ibi: bool = True) -> FdLinkSpec:
        ap = Radio(Position(0.0, 0.0), AntennaConfig(self.ap_beams), self.beta)
        up = Radio(Position(self.distance, 0.0), AntennaConfig(self.user_beams), self.beta)
        a = math.radians(self.angle)
        down = Radio(Position(self.distance * math.cos(a), self.distance * math.sin(a)),
                     AntennaConfig(self.user_beams), self.beta)
        return FdLinkSpec(
            self.mode, up, ap, self.payload_bits, self.payload_bits,
            self.user_power_min, self.user_power_max, self.ap_power_min, ap_power_max, self.step,
            secondary_rx=down if self.mode == THREE_NODE else None, params=self.channel,
            ibi_enabled=ibi)


def parse_link_config(text: str, source: str = "<string>") -> LinkConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    lc = LinkConfig()
    ch = {}
    mw = lambda v: float(v) * 1e-3
    readers = {
        ("link", "mode"): ("mode", str.strip),
        ("link", "ap_beams"): ("ap_beams", int),
        ("link", "user_beams"): ("user_beams", int),
        ("link", "distance_m"): ("distance", float),
        ("link", "angle_deg"): ("angle", float),
        ("link", "payload_bits"): ("payload_bits", int),
        ("link", "user_power_min_mw"): ("user_power_min", mw),
        ("link", "user_power_max_mw"): ("user_power_max", mw),
        ("link", "ap_power_min_mw"): ("ap_power_min", mw),
        ("link", "step_mw"): ("step", mw),
        ("link", "beta_db"): ("beta", lambda v: db_to_lin(float(v))),
        ("sweep", "ap_power_max_mw"): ("ap_power_max", lambda v: tuple(
            float(x) * 1e-3 for x in v.replace(",", " ").split())),
    }
    channel = {"g0_db": ("g0", lambda v: db_to_lin(float(v))), "alpha": ("alpha", float),
               "c0": ("c0", float), "n0_dbm": ("n0", lambda v: dbm_to_w(float(v)))}
    for section in cp.sections():
        for key, value in cp.items(section):
            try:
                if section == "channel" and key in channel:
                    name, conv = channel[key]
                    ch[name] = conv(value)
                elif (section, key) in readers:
                    name, conv = readers[(section, key)]
                    setattr(lc, name, conv(value))
                else:
                    raise ConfigError(f"unknown key [{section}] {key}")
            except ValueError as e:
                if isinstance(e, ConfigError):
                    raise
                raise ConfigError(f"[{section}] {key} = {value!r}: {e}") from None
    if lc.mode not in (TWO_NODE, THREE_NODE):
        raise ConfigError(f"mode must be {TWO_NODE} or {THREE_NODE}")
    if not lc.ap_power_max:
        raise ConfigError("the sweep needs at least one ap_power_max_mw value")
    try:
        if ch:
            lc.channel = ChannelParams(**ch)
        for p in lc.ap_power_max:
            lc.spec(p)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return lc


def load_link_config(path) -> LinkConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return parse_link_config(text, str(path))


SWEEP_COLUMNS = ("ap_power_max_w", "ibi", "power_control", "feasible", "user_power_w", "ap_power_w",
                 "sinr_ap_db", "sinr_user_db", "mcs_ap", "mcs_user", "occupation_time_s",
                 "throughput_bps")


def powerctl_sweep(lc: LinkConfig) -> list[dict]:
    """SINR and MCS at both receivers for each AP power limit, with and without control."""
    rows = []
    for p_max in lc.ap_power_max:
        for ibi in (True, False):
            spec = lc.spec(p_max, ibi=ibi)
            for pc in (False, True):
                row = {"ap_power_max_w": p_max, "ibi": int(ibi), "power_control": int(pc)}
                if pc:
                    try:
                        sol = optimize_powers(spec)
                    except LinkInfeasible:
                        sol = None
                    p_t, p_r = (sol.p_primary, sol.p_secondary) if sol else (None, None)
                else:
                    sol = fixed_power(spec)
                    p_t, p_r = spec.p_max_primary, spec.p_max_secondary
                lin_ap = lin_user = None
                if p_t is not None:
                    lin_ap = spec.sinr_primary(p_t, p_r).sinr
                    lin_user = spec.sinr_secondary(p_t, p_r).sinr
                s_ap = lin_to_db(lin_ap) if lin_ap is not None else None
                s_user = lin_to_db(lin_user) if lin_user is not None else None
                m_ap = spec.mcs.match(lin_ap) if lin_ap is not None else None
                m_user = spec.mcs.match(lin_user) if lin_user is not None else None
                row.update({
                    "feasible": int(sol is not None), "user_power_w": p_t, "ap_power_w": p_r,
                    "sinr_ap_db": s_ap, "sinr_user_db": s_user,
                    "mcs_ap": m_ap.index if m_ap else 0, "mcs_user": m_user.index if m_user else 0,
                    "occupation_time_s": sol.occupation_time if sol else None,
                    "throughput_bps": sol.throughput if sol else None})
                rows.append(row)
    return rows


def write_sweep_csv(path, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c]
                        for c in SWEEP_COLUMNS])
