import json
import re

import networkx as nx
import pytest

from ltcblock.errors import WiringError
from ltcblock.wiring import (Fanouts, LayerCounts, NcpWiring, Synapse, build_ncp,
                             legal_pair_count, to_dot, validate_wiring, wiring_stats)


def test_default_counts_total_nine_units_seven_ode():
    w = build_ncp(seed=1)
    assert w.counts.total == 9
    assert w.counts.n_state == 7
    assert validate_wiring(w).ok


def test_build_is_deterministic():
    assert build_ncp(seed=5) == build_ncp(seed=5)


def test_explicit_fanouts_meet_coverage():
    w = build_ncp(LayerCounts(2, 4, 2, 1), Fanouts(2, 2, 2, 2), seed=3)
    report = validate_wiring(w)
    assert report.ok, str(report)


@pytest.mark.parametrize("seed", range(100))
def test_every_seed_is_valid(seed):
    assert validate_wiring(build_ncp(seed=seed)).ok


@pytest.mark.parametrize("counts", [LayerCounts(3, 6, 4, 2), LayerCounts(1, 1, 1, 1),
                                    LayerCounts(2, 8, 3, 1)])
def test_other_sizes_are_valid(counts):
    fan = Fanouts(sensory_fanout=1, inter_fanout=1, command_recurrence=1, motor_fanin=1)
    for seed in range(10):
        assert validate_wiring(build_ncp(counts, fan, seed)).ok


def test_seed_changes_edges_not_counts():
    built = [build_ncp(seed=s) for s in range(20)]
    assert {w.counts for w in built} == {LayerCounts()}
    assert len({w.synapses for w in built}) > 1


@pytest.mark.parametrize("fanouts", [Fanouts(sensory_fanout=5), Fanouts(inter_fanout=3),
                                     Fanouts(motor_fanin=3), Fanouts(command_recurrence=5),
                                     Fanouts(sensory_fanout=0)])
def test_infeasible_fanout_rejected(fanouts):
    with pytest.raises(WiringError):
        build_ncp(fanouts=fanouts)


def test_zero_count_rejected():
    with pytest.raises(WiringError):
        build_ncp(LayerCounts(2, 0, 2, 1))


def _mutate(w, synapses):
    return NcpWiring(w.counts, tuple(synapses), w.seed, w.fanouts)


def test_layer_skipping_edge_detected():
    w = build_ncp(seed=0)
    bad = _mutate(w, list(w.synapses) + [Synapse(0, 8, 1)])  # sensory -> motor
    report = validate_wiring(bad)
    assert not report.ok
    assert "layer-skipping edge" in report.kinds()


def test_isolated_inter_neuron_detected():
    w = build_ncp(seed=0)
    victim = 3
    bad = _mutate(w, [s for s in w.synapses if victim not in (s.source, s.target)])
    report = validate_wiring(bad)
    assert "no incoming synapse" in report.kinds()
    assert any(v.ids == (victim,) for v in report.violations)


@pytest.mark.parametrize("extra, kind", [
    (Synapse(6, 2, 1), "backward edge"),
    (Synapse(2, 3, 1), "lateral edge"),
    (Synapse(8, 8, 1), "self-loop outside command layer"),
    (Synapse(0, 2, 0), "bad polarity"),
    (Synapse(0, 42, 1), "unknown neuron"),
])
def test_other_violations(extra, kind):
    w = build_ncp(seed=0)
    syn = [s for s in w.synapses if (s.source, s.target) != (extra.source, extra.target)]
    assert kind in validate_wiring(_mutate(w, syn + [extra])).kinds()


def test_duplicate_detected():
    w = build_ncp(seed=0)
    bad = _mutate(w, list(w.synapses) + [w.synapses[0]])
    assert "duplicate synapse" in validate_wiring(bad).kinds()


def test_stats_counts_and_density():
    w = build_ncp(seed=0)
    st = wiring_stats(w)
    assert st["synapses"] == len(w.synapses)
    assert st["legal_pairs"] == 2 * 4 + 4 * 2 + 2 * 2 + 2 * 1 == 22
    assert st["density"] < 1.0
    assert st["fan_out"]["sensory"] + st["fan_out"]["inter"] + st["fan_out"]["command"] == st["synapses"]


def test_stats_fourteen_synapses():
    w = build_ncp(seed=0)
    counts = w.counts
    legal = [(a, b) for a in counts.layer_ids("sensory") for b in counts.layer_ids("inter")]
    legal += [(a, b) for a in counts.layer_ids("inter") for b in counts.layer_ids("command")]
    legal += [(a, b) for a in counts.layer_ids("command") for b in counts.layer_ids("motor")]
    w14 = _mutate(w, [Synapse(a, b, 1) for a, b in legal[:14]])
    assert wiring_stats(w14)["synapses"] == 14


def test_full_legal_graph_density_one():
    c = LayerCounts()
    pairs = [(a, b) for a in c.layer_ids("sensory") for b in c.layer_ids("inter")]
    pairs += [(a, b) for a in c.layer_ids("inter") for b in c.layer_ids("command")]
    pairs += [(a, b) for a in c.layer_ids("command") for b in c.layer_ids("command")]
    pairs += [(a, b) for a in c.layer_ids("command") for b in c.layer_ids("motor")]
    full = NcpWiring(c, tuple(Synapse(a, b, 1) for a, b in pairs))
    assert validate_wiring(full).ok
    assert len(pairs) == legal_pair_count(c)
    assert wiring_stats(full)["density"] == 1.0


def test_json_round_trip_identity():
    w = build_ncp(seed=11)
    assert NcpWiring.from_json(w.to_json()) == w
    assert json.loads(w.to_json())["counts"]["n_inter"] == 4


def test_dot_is_dag_apart_from_command_cycles():
    w = build_ncp(seed=4)
    dot = to_dot(w)
    edges = [(int(a), int(b)) for a, b in re.findall(r"n(\d+) -> n(\d+)", dot)]
    assert len(edges) == w.n_synapses
    nodes = set(int(n) for n in re.findall(r"\bn(\d+);", dot))
    assert nodes == set(range(w.counts.total))
    command = set(w.counts.layer_ids("command"))
    g = nx.DiGraph([e for e in edges if not (e[0] in command and e[1] in command)])
    assert nx.is_directed_acyclic_graph(g)
