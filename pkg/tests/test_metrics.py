import math

import pytest
from hypothesis import given, strategies as st

from mmfdsim.metrics import RunResult, jain_index, mean_std, summarize


@pytest.mark.parametrize("xs, expected", [([5.0] * 7, 1.0), ([9.0, 0, 0, 0], 0.25),
                                          ([1, 2, 3], 36 / 42)])
def test_jain_examples(xs, expected):
    assert jain_index(xs) == pytest.approx(expected, rel=1e-12)


def test_jain_reference_value():
    assert round(jain_index([1, 2, 3]), 4) == 0.8571


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 1e9)), min_size=1, max_size=30),
       st.floats(1e-6, 1e6))
def test_jain_scale_invariant(xs, c):
    if sum(xs) == 0:
        return
    j = jain_index(xs)
    assert 1 / len(xs) - 1e-12 <= j <= 1 + 1e-12
    assert jain_index([c * x for x in xs]) == pytest.approx(j, rel=1e-9)


@pytest.mark.parametrize("xs", [[], [0.0, 0.0], [1.0, -1.0], [math.inf]])
def test_jain_rejects_undefined(xs):
    with pytest.raises(ValueError):
        jain_index(xs)


def result(delivered, variant="dfdmac", rep=0, duration=1.0, failures=None):
    return RunResult(variant, len(delivered), rep, 7, duration, delivered,
                     {"hd": 1, "two-node": 2, "three-node": 0}, failures or {}, 0)


def test_run_result_throughputs():
    r = result([4_000, 1_000, 3_000], duration=0.5)
    assert r.throughputs == [8_000, 2_000, 6_000]
    assert r.network_throughput == 16_000
    assert r.uplink_throughput == 8_000
    assert r.downlink_throughput == 8_000
    assert r.jain == pytest.approx(jain_index([2_000, 6_000]))


def test_zero_duration_result():
    r = result([0, 0, 0], duration=0.0)
    assert r.network_throughput == 0.0
    assert math.isnan(r.jain)
    assert r.csv_row()[RunResult.CSV_COLUMNS.index("jain_index")] == ""


def test_deferrals_are_not_retries():
    r = result([1, 1], failures={"no-cts": 3, "deferred": 5, "receiver-busy": 2})
    assert r.retries == 5
    assert len(r.csv_row()) == len(RunResult.CSV_COLUMNS)


def test_mean_std():
    assert mean_std([1.0]) == (1.0, 0.0)
    m, s = mean_std([1.0, 3.0, math.nan])
    assert (m, s) == (2.0, pytest.approx(math.sqrt(2)))
    assert all(math.isnan(v) for v in mean_std([]))


def test_summarize_groups_by_variant_and_size():
    rs = [result([2, 2, 2], rep=0), result([4, 2, 2], rep=1), result([1, 1], "ay_with_bt")]
    groups = {(g["variant"], g["node_count"]): g for g in summarize(rs)}
    assert set(groups) == {("dfdmac", 3), ("ay_with_bt", 2)}
    g = groups[("dfdmac", 3)]
    assert g["replications"] == 2
    assert g["network_throughput_bps"]["mean"] == 7.0
    assert g["transactions"] == {"hd": 2, "two-node": 4, "three-node": 0}
