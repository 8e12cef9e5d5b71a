import math
import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mmfdsim.experiment import LinkConfig
from mmfdsim.power import (THREE_NODE, TWO_NODE, FdLinkSpec, LinkInfeasible, brute_force_oracle,
                           fixed_power, link_throughput, occupation_time, optimize_powers,
                           power_grid)
from mmfdsim.radio import AntennaConfig, Position, Radio, db_to_lin

MW = 1e-3


class TestFormulas:
    def test_symmetric_occupation_time(self):
        assert occupation_time(64_000, 1904e6, 64_000, 1904e6) == pytest.approx(33.613e-6, abs=1e-9)

    def test_slow_side_dominates(self):
        assert occupation_time(64_000, 3807e6, 64_000, 952e6) == pytest.approx(67.227e-6, abs=1e-9)

    def test_one_way_link(self):
        assert occupation_time(64_000, 1904e6, 0, 0) == pytest.approx(64_000 / 1904e6)

    def test_zero_rate_is_an_error(self):
        with pytest.raises(ValueError):
            occupation_time(1, 0.0, 1, 1.0)

    def test_throughput_zero_overhead_doubles_rate(self):
        assert link_throughput(64_000, 1904e6, 64_000, 1904e6, 0.0) == pytest.approx(3808e6)

    def test_throughput_overhead_equal_to_airtime(self):
        d = 64_000 / 1904e6
        assert link_throughput(64_000, 1904e6, 64_000, 1904e6, d) == pytest.approx(1904e6)

    def test_throughput_asymmetric(self):
        assert link_throughput(64_000, 3807e6, 64_000, 952e6, 0.0) == pytest.approx(1904e6)

    def test_grid_inclusive_and_validated(self):
        assert power_grid(1 * MW, 5 * MW, 1 * MW) == pytest.approx((1e-3, 2e-3, 3e-3, 4e-3, 5e-3))
        assert power_grid(2 * MW, 2 * MW, 7 * MW) == (2 * MW,)
        with pytest.raises(ValueError):
            power_grid(1 * MW, 5.5 * MW, 1 * MW)
        with pytest.raises(ValueError):
            power_grid(5 * MW, 1 * MW, 1 * MW)


def reference_link(p_ap_max=100 * MW, **kw):
    lc = LinkConfig(**kw)
    return lc.spec(p_ap_max)


class TestReferenceLink:
    def test_power_control_reaches_mcs3_both_ways(self):
        sol = optimize_powers(reference_link())
        assert (sol.mcs_primary, sol.mcs_secondary) == (3, 3)
        assert (sol.p_primary, sol.p_secondary) == pytest.approx((2 * MW, 1 * MW))

    def test_without_power_control_uplink_degrades(self):
        sol = fixed_power(reference_link())
        assert sol.mcs_primary == 1
        assert 10 * math.log10(sol.sinr_primary) == pytest.approx(10.32, abs=0.01)

    def test_matches_oracle(self):
        spec = reference_link(50 * MW)
        assert optimize_powers(spec) == brute_force_oracle(spec)

    def test_single_grid_point(self):
        spec = reference_link(1 * MW, user_power_min=5 * MW, user_power_max=5 * MW)
        sol = optimize_powers(spec)
        assert (sol.p_primary, sol.p_secondary) == (5 * MW, 1 * MW)

    def test_infeasible_link(self):
        spec = reference_link(20 * MW, distance=10_000.0)
        with pytest.raises(LinkInfeasible):
            optimize_powers(spec)
        with pytest.raises(LinkInfeasible):
            brute_force_oracle(spec)

    def test_collinear_users_suffer_ibi(self):
        # the uplink user's beam toward the AP also covers a downlink user behind the AP
        lc = LinkConfig(angle=180.0)
        with_ibi = fixed_power(lc.spec(100 * MW))
        without = fixed_power(lc.spec(100 * MW, ibi=False))
        assert with_ibi.sinr_secondary < without.sinr_secondary


def random_spec(rng: random.Random, *, beta_db=None) -> FdLinkSpec:
    mode = rng.choice((TWO_NODE, THREE_NODE))
    d = rng.uniform(3.0, 40.0)
    t = Radio(Position(d, 0.0), AntennaConfig(rng.choice((4, 8, 12))), db_to_lin(rng.uniform(-100, -70)))
    r = Radio(Position(0.0, 0.0), AntennaConfig(rng.choice((8, 12, 32))),
              db_to_lin(beta_db if beta_db is not None else rng.uniform(-100, -70)))
    r2 = None
    if mode == THREE_NODE:
        a = rng.uniform(0.3, 2 * math.pi - 0.3)
        d2 = rng.uniform(3.0, 40.0)
        r2 = Radio(Position(d2 * math.cos(a), d2 * math.sin(a)), AntennaConfig(rng.choice((4, 8))))
    n_t = rng.randint(1, 20)
    n_r = rng.randint(1, 100)
    step = rng.choice((0.5, 1.0, 2.0)) * MW
    p0t = rng.randint(1, 4) * step
    p0r = rng.randint(1, 4) * step
    return FdLinkSpec(mode, t, r, rng.choice((8_000, 64_000)), rng.choice((8_000, 64_000)),
                      p0t, p0t + (n_t - 1) * step, p0r, p0r + (n_r - 1) * step, step,
                      secondary_rx=r2, ibi_enabled=rng.random() < 0.8)


def solve(fn, spec):
    try:
        return fn(spec)
    except LinkInfeasible:
        return None


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2 ** 32))
def test_optimizer_matches_oracle_property(seed):
    spec = random_spec(random.Random(seed))
    assert solve(optimize_powers, spec) == solve(brute_force_oracle, spec)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_no_pair_beats_the_optimum(seed):
    spec = random_spec(random.Random(seed))
    best = solve(optimize_powers, spec)
    if best is None:
        return
    for pt in spec.primary_grid:
        for pr in spec.secondary_grid[::7]:
            s = spec.evaluate(pt, pr)
            if s is not None:
                assert s.occupation_time >= best.occupation_time


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_min_occupation_equals_max_throughput(seed):
    spec = random_spec(random.Random(seed))
    sols = [s for pt in spec.primary_grid for pr in spec.secondary_grid
            if (s := spec.evaluate(pt, pr)) is not None]
    if not sols:
        return
    d_min = min(s.occupation_time for s in sols)
    s_max = max(s.throughput for s in sols)
    assert {(s.p_primary, s.p_secondary) for s in sols if s.occupation_time == d_min} == \
           {(s.p_primary, s.p_secondary) for s in sols if s.throughput == s_max}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(-110, -80), st.floats(0.5, 30))
def test_worse_cancellation_never_helps(seed, beta_db, worse_by):
    a = random_spec(random.Random(seed), beta_db=beta_db)
    b = random_spec(random.Random(seed), beta_db=beta_db + worse_by)
    sa, sb = solve(optimize_powers, a), solve(optimize_powers, b)
    if sa is None:
        assert sb is None
    elif sb is not None:
        assert sb.occupation_time >= sa.occupation_time


def test_overhead_defaults_to_two_node_value():
    spec = reference_link()
    from mmfdsim.protocol.frames import DEFAULT_TIMING
    assert spec.overhead == DEFAULT_TIMING.fd_overhead(False)


def test_spec_validation():
    t = Radio(Position(1.0, 0.0), AntennaConfig(8))
    r = Radio(Position(0.0, 0.0), AntennaConfig(8))
    with pytest.raises(ValueError):
        FdLinkSpec(THREE_NODE, t, r, 1, 1, MW, MW, MW, MW, MW)
    with pytest.raises(ValueError):
        FdLinkSpec(TWO_NODE, t, r, 0, 1, MW, MW, MW, MW, MW)
    with pytest.raises(ValueError):
        FdLinkSpec("four-node", t, r, 1, 1, MW, MW, MW, MW, MW)
