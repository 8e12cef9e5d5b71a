"""Run results, throughput and fairness metrics."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field


def jain_index(xs) -> float:
    """Jain's fairness index (sum x)^2 / (n * sum x^2)."""
    xs = [float(x) for x in xs]
    if not xs:
        raise ValueError("fairness of an empty population is undefined")
    if any(x < 0 or not math.isfinite(x) for x in xs):
        raise ValueError("throughputs must be finite and non-negative")
    sq = math.fsum(x * x for x in xs)
    if sq == 0.0:
        raise ValueError("fairness of an all-zero allocation is undefined")
    return math.fsum(xs) ** 2 / (len(xs) * sq)


@dataclass
class RunResult:
    variant: str
    node_count: int
    replication: int
    seed: int
    duration: float                      # s
    delivered_bits: list[int]            # per node, index 0 is the AP
    txn_counts: dict[str, int]
    failures: dict[str, int]
    drops: int
    sinr: dict[tuple[int, int], list[float]] = field(default_factory=dict)  # count, sum_db, min, max

    @property
    def throughputs(self) -> list[float]:
        if self.duration <= 0:
            return [0.0] * len(self.delivered_bits)
        return [b / self.duration for b in self.delivered_bits]

    @property
    def network_throughput(self) -> float:
        return math.fsum(self.throughputs)

    @property
    def uplink_throughput(self) -> float:
        return math.fsum(self.throughputs[1:])

    @property
    def downlink_throughput(self) -> float:
        return self.throughputs[0]

    @property
    def jain(self) -> float:
        """Fairness over the users' uplink throughputs; NaN if nobody delivered."""
        try:
            return jain_index(self.throughputs[1:])
        except ValueError:
            return math.nan

    @property
    def retries(self) -> int:
        return sum(v for k, v in self.failures.items() if k != "deferred")

    CSV_COLUMNS = ("variant", "node_count", "replication", "seed", "duration_s",
                   "network_throughput_bps", "uplink_throughput_bps", "downlink_throughput_bps",
                   "jain_index", "hd_txns", "two_node_txns", "three_node_txns",
                   "no_cts", "no_ack", "secondary_no_cts", "receiver_busy", "receiver_nav",
                   "deferred", "retries", "drops")

    def csv_row(self) -> list:
        f = self.failures
        return [self.variant, self.node_count, self.replication, self.seed, repr(self.duration),
                repr(self.network_throughput), repr(self.uplink_throughput),
                repr(self.downlink_throughput), "" if math.isnan(self.jain) else repr(self.jain),
                self.txn_counts.get("hd", 0), self.txn_counts.get("two-node", 0),
                self.txn_counts.get("three-node", 0), f.get("no-cts", 0), f.get("no-ack", 0),
                f.get("secondary-no-cts", 0), f.get("receiver-busy", 0), f.get("receiver-nav", 0),
                f.get("deferred", 0), self.retries, self.drops]

    def sinr_summary(self) -> list[dict]:
        out = []
        for (src, dst), (count, total, lo, hi) in sorted(self.sinr.items()):
            out.append({"src": src, "dst": dst, "frames": count, "mean_db": total / count,
                        "min_db": lo, "max_db": hi})
        return out


def mean_std(values) -> tuple[float, float]:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan
    if len(vals) == 1:
        return vals[0], 0.0
    return statistics.fmean(vals), statistics.stdev(vals)


def summarize(results: list[RunResult]) -> list[dict]:
    """Replication mean and sample standard deviation per (variant, n)."""
    groups: dict[tuple[str, int], list[RunResult]] = {}
    for r in results:
        groups.setdefault((r.variant, r.node_count), []).append(r)
    out = []
    for (variant, n), rs in groups.items():
        thr = mean_std(r.network_throughput for r in rs)
        jain = mean_std(r.jain for r in rs)
        txns = {}
        for r in rs:
            for k, v in r.txn_counts.items():
                txns[k] = txns.get(k, 0) + v
        out.append({
            "variant": variant, "node_count": n, "replications": len(rs),
            "network_throughput_bps": {"mean": thr[0], "std": thr[1]},
            "jain_index": {"mean": jain[0], "std": jain[1]},
            "uplink_throughput_bps": mean_std(r.uplink_throughput for r in rs)[0],
            "downlink_throughput_bps": mean_std(r.downlink_throughput for r in rs)[0],
            "transactions": txns,
            "retries": sum(r.retries for r in rs),
            "drops": sum(r.drops for r in rs),
        })
    return out
