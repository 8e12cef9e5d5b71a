import itertools
from pathlib import Path

import pytest

from mmfdsim.protocol.mac import Variant
from mmfdsim.radio import AntennaConfig, BeamPointing, Position, tx_gain
from mmfdsim.scenario import (ConfigError, ScenarioConfig, generate_topology, load_config,
                              node_specs, parse_config, replication_seed)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestTopology:
    def test_deterministic(self):
        cfg = ScenarioConfig()
        assert generate_topology(cfg, 10, 42) == generate_topology(cfg, 10, 42)
        assert generate_topology(cfg, 10, 42) != generate_topology(cfg, 10, 43)

    def test_within_disc(self):
        cfg = ScenarioConfig()
        for seed in range(20):
            pts = generate_topology(cfg, 25, seed)
            assert pts[0] == Position(0.0, 0.0)
            assert len(set(pts)) == 25
            assert all(a.distance(b) <= 20.0 for a, b in itertools.combinations(pts, 2))

    def test_every_user_beam_reaches_the_ap(self):
        cfg = ScenarioConfig()
        ant = AntennaConfig(cfg.user_beams)
        for p in generate_topology(cfg, 25, 3)[1:]:
            k = ant.beam_toward(p.bearing(Position(0.0, 0.0)))
            assert tx_gain(ant, BeamPointing(ant.boresight(k), "transmit"), Position(0.0, 0.0), p) > 0

    def test_explicit_positions_win(self):
        pos = (Position(0, 0), Position(1, 1))
        cfg = ScenarioConfig(positions=pos, node_counts=(2,))
        assert generate_topology(cfg, 2, 9) == list(pos)

    def test_replication_seeds_differ(self):
        assert len({replication_seed(1, r) for r in range(10)}) == 10


def test_node_specs_follow_traffic_direction():
    cfg = ScenarioConfig(downlink=False)
    specs = node_specs(cfg, generate_topology(cfg, 4, 1))
    assert [s.traffic for s in specs] == ["none", "saturated", "saturated", "saturated"]
    assert specs[0].is_ap and specs[0].beams == cfg.ap_beams


class TestParsing:
    def test_shipped_fig6_config(self):
        cfg = load_config(CONFIGS / "fig6.ini")
        assert cfg.variants == tuple(Variant)
        assert cfg.node_counts == (5, 10, 15, 20, 25)
        assert (cfg.duration, cfg.replications, cfg.mcs_index) == (1.0, 10, 2)
        assert cfg.timing.difs == 13_000

    def test_defaults_from_minimal_config(self):
        cfg = parse_config("[scenario]\nseed = 4\n")
        assert cfg.seed == 4 and cfg.radius == 10.0

    def test_explicit_positions(self):
        cfg = parse_config("[topology]\npositions = 0,0; 3,4; -2.5,1\n")
        assert cfg.node_counts == (3,)
        assert cfg.positions[1] == Position(3.0, 4.0)

    def test_mcs_table(self):
        cfg = parse_config("[rate]\nmcs_index = 1\ntable = 1:QPSK:1/2:952e6:5.5; 2:QPSK:2/3:1904e6:13\n")
        assert len(cfg.mcs) == 2

    @pytest.mark.parametrize("text", [
        "[scenario]\nvariants = csma\n",
        "[scenario]\nduration_s = -1\n",
        "[scenario]\nnode_counts = 1\n",
        "[scenario]\nreplications = 0\n",
        "[scenario]\nbogus = 1\n",
        "[plotting]\ncolour = red\n",
        "[rate]\nmcs_index = 9\n",
        "[features]\npower_control = true\n",
        "[features]\nibi = maybe\n",
        "[traffic]\nmodel = bursty\n",
        "[mac]\ncw_min = 64\ncw_max = 32\n",
        "[channel]\nn0_dbm = abc\n",
        "[topology]\npositions = 0,0; 1\n",
        "not an ini file",
    ])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_zero_duration_is_allowed(self):
        assert parse_config("[scenario]\nduration_s = 0\n").duration_ns == 0
