import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socplan.errors import ConfigError
from socplan.instances import (
    Edge,
    GenConfig,
    Instance,
    dumps_instance,
    generate_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    loads_instance,
    save_instance,
)


def edited(inst, mutate):
    doc = instance_to_dict(inst)
    mutate(doc)
    return doc


class TestGenerate:
    def test_two_nodes(self):
        inst = generate_instance(2, 0)
        assert len(inst.edges) == 2
        assert {(e.tail, e.head) for e in inst.edges} == {(0, 1), (1, 0)}

    def test_deterministic_bytes(self):
        assert dumps_instance(generate_instance(30, 11)) == dumps_instance(generate_instance(30, 11))
        assert dumps_instance(generate_instance(30, 11)) != dumps_instance(generate_instance(30, 12))

    @pytest.mark.parametrize("seed", range(5))
    def test_out_degree_100(self, seed):
        inst = generate_instance(100, seed)
        adj = inst.out_edges()
        assert min(len(v) for v in adj.values()) >= 4

    def test_four_nearest_neighbours_present(self):
        inst = generate_instance(40, 3)
        xy = np.array([(x, y) for _, x, y in inst.nodes])
        pairs = {(e.tail, e.head) for e in inst.edges}
        for i in range(len(xy)):
            d = np.hypot(*(xy - xy[i]).T)
            d[i] = np.inf
            for j in np.argsort(d)[:4]:
                assert (i, int(j)) in pairs and (int(j), i) in pairs

    def test_edge_attributes(self):
        cfg = GenConfig()
        inst = generate_instance(25, 4, cfg)
        pos = {i: (x, y) for i, x, y in inst.nodes}
        by_pair = {(e.tail, e.head): e for e in inst.edges}
        for e in inst.edges:
            (x0, y0), (x1, y1) = pos[e.tail], pos[e.head]
            assert e.cost == pytest.approx(np.hypot(x1 - x0, y1 - y0), rel=1e-12)
            assert e.time == pytest.approx(e.cost / cfg.speed, rel=1e-12)
            assert cfg.p_min <= e.power <= cfg.p_max
            assert by_pair[(e.head, e.tail)].power == e.power

    def test_start_goal_corners(self):
        inst = generate_instance(50, 8)
        xy = np.array([(x, y) for _, x, y in inst.nodes])
        assert inst.start == int(np.argmin(np.hypot(*xy.T)))
        assert inst.goal == int(np.argmin(np.hypot(*(xy - 10_000.0).T)))

    def test_too_small(self):
        with pytest.raises(ConfigError):
            generate_instance(1, 0)

    @given(st.integers(2, 60), st.integers(0, 2**63 - 1))
    @settings(max_examples=40, deadline=None)
    def test_always_valid(self, n, seed):
        inst = generate_instance(n, seed)
        # the constructor validates; re-validating the round trip must also pass
        assert instance_from_dict(json.loads(dumps_instance(inst))) == inst
        assert inst.start != inst.goal
        assert len({(e.tail, e.head) for e in inst.edges}) == len(inst.edges)

    def test_config_round_trip(self):
        cfg = GenConfig(extent=500.0, speed=10.0, p_min=100.0, p_max=300.0, soc0=0.9)
        again = GenConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()

    def test_config_rejects_unknown(self):
        with pytest.raises(ConfigError):
            GenConfig.from_dict({"speed": 10.0, "wind": 3.0})


class TestPersistence:
    def test_round_trip(self, tmp_path):
        inst = generate_instance(20, 5)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        again = load_instance(path)
        assert again == inst
        assert again.provenance["seed"] == 5

    def test_nonpositive_time(self):
        inst = generate_instance(6, 0)
        doc = edited(inst, lambda d: d["edges"][0].__setitem__(4, 0.0))
        with pytest.raises(ConfigError, match=r"edges\[0\].time"):
            instance_from_dict(doc)

    def test_missing_node(self):
        inst = generate_instance(6, 0)
        doc = edited(inst, lambda d: d["edges"][0].__setitem__(1, 99))
        with pytest.raises(ConfigError, match="missing node"):
            instance_from_dict(doc)

    def test_missing_field(self):
        doc = edited(generate_instance(6, 0), lambda d: d.pop("start"))
        with pytest.raises(ConfigError, match="start"):
            instance_from_dict(doc)

    def test_wrong_format(self):
        doc = edited(generate_instance(6, 0), lambda d: d.__setitem__("format", "other"))
        with pytest.raises(ConfigError, match="format"):
            instance_from_dict(doc)

    def test_bad_json(self):
        with pytest.raises(ConfigError):
            loads_instance("[1, 2")


class TestInvariants:
    def base(self):
        return generate_instance(4, 1)

    def test_self_loop(self):
        inst = self.base()
        with pytest.raises(ConfigError, match="self-loop"):
            Instance(inst.nodes, inst.edges + (Edge(0, 0, 1.0, 1.0, 1.0),), inst.start, inst.goal, inst.battery, 1.0, inst.fit)

    def test_duplicate_edge(self):
        inst = self.base()
        with pytest.raises(ConfigError, match="duplicate"):
            Instance(inst.nodes, inst.edges + (inst.edges[0],), inst.start, inst.goal, inst.battery, 1.0, inst.fit)

    def test_start_equals_goal(self):
        inst = self.base()
        with pytest.raises(ConfigError):
            Instance(inst.nodes, inst.edges, inst.start, inst.start, inst.battery, 1.0, inst.fit)

    def test_negative_power(self):
        inst = self.base()
        e = inst.edges[0]
        bad = (Edge(e.tail, e.head, e.cost, -1.0, e.time),) + inst.edges[1:]
        with pytest.raises(ConfigError, match="power"):
            Instance(inst.nodes, bad, inst.start, inst.goal, inst.battery, 1.0, inst.fit)

    def test_soc0_window(self):
        with pytest.raises(ConfigError, match="soc0"):
            self.base().with_soc0(1.5)
