import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskroute import routing
from riskroute.routing import EdgeRisk
from riskroute.topology import Edge, LogisticsGraph

from oracles import best_path, detour_instance, random_graph, random_risk

LAMBDAS = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)


def line_graph():
    coords = np.zeros((3, 2))
    return LogisticsGraph(coords, (Edge(0, 1, 1.0, 1.0), Edge(1, 2, 2.0, 1.0)))


def test_edge_risk_examples():
    g = line_graph()
    assert routing.edge_risk(np.array([0.4, 0.4, 0.4]), g)[(0, 1)] == pytest.approx(0.4)
    assert routing.edge_risk(np.array([0.2, 0.8, 0.0]), g)[(0, 1)] == pytest.approx(0.5)
    assert all(v == 0 for v in routing.edge_risk(np.zeros(3), g).values.values())
    with pytest.raises(ValueError):
        routing.edge_risk(np.zeros(4), g)


def test_edge_risk_rejects_out_of_range():
    with pytest.raises(ValueError):
        EdgeRisk({(0, 1): 1.5})


def test_dynamic_weight_examples():
    g = LogisticsGraph(np.zeros((2, 2)), (Edge(0, 1, 10.0, 1.0),))
    assert routing.dynamic_weights(g, EdgeRisk({(0, 1): 0.5}), 2.0)[(0, 1)] == 20.0
    assert routing.dynamic_weights(g, EdgeRisk({(0, 1): 0.5}), 0.0)[(0, 1)] == 10.0
    assert routing.dynamic_weights(g, EdgeRisk({(0, 1): 0.0}), 7.0)[(0, 1)] == 10.0
    with pytest.raises(ValueError):
        routing.dynamic_weights(g, EdgeRisk({(0, 1): 0.0}), -1.0)


def test_shortest_path_examples():
    g = line_graph()
    w = routing.dynamic_weights(g, EdgeRisk({(0, 1): 0.0, (1, 2): 0.0}), 0.0)
    p = routing.shortest_path(g, w, 0, 2)
    assert p.path == (0, 1, 2) and p.total_dynamic_cost == 3.0
    same = routing.shortest_path(g, w, 1, 1)
    assert same.path == (1,) and same.total_distance == same.total_dynamic_cost == 0.0
    with pytest.raises(routing.UnreachableError):
        routing.shortest_path(g, w, 2, 0)
    g2 = LogisticsGraph(np.zeros((2, 2)), ())
    with pytest.raises(routing.UnreachableError):
        routing.shortest_path(g2, routing.DynamicWeights({}, 0.0), 0, 1)


def test_lexicographic_tie_break():
    # two equal-cost routes 0->1->3 and 0->2->3: the smaller sequence wins
    edges = (Edge(0, 1, 1.0, 1), Edge(0, 2, 1.0, 1), Edge(1, 3, 1.0, 1), Edge(2, 3, 1.0, 1))
    g = LogisticsGraph(np.zeros((4, 2)), edges)
    w = routing.DynamicWeights({(e.u, e.v): 1.0 for e in edges}, 0.0)
    assert routing.shortest_path(g, w, 0, 3).path == (0, 1, 3)


def test_path_risk_examples():
    risk = EdgeRisk({(0, 1): 0.3, (1, 2): 0.4})
    assert routing.path_risk((0, 1), risk) == 0.3
    assert routing.path_risk((0, 1, 2), risk) == pytest.approx(0.7)
    assert routing.path_risk((2,), risk) == 0.0
    with pytest.raises(KeyError):
        routing.path_risk((0, 2), risk)


@pytest.mark.parametrize("seed", range(30))
def test_dijkstra_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 9)), integer_weights=seed % 2 == 0)
    risk = random_risk(rng, g)
    w = routing.dynamic_weights(g, risk, float(rng.choice(LAMBDAS)))
    for s, t in itertools.permutations(range(g.num_nodes), 2):
        want = best_path(g, w, s, t)
        if want is None:
            with pytest.raises(routing.UnreachableError):
                routing.shortest_path(g, w, s, t, risk)
            continue
        got = routing.shortest_path(g, w, s, t, risk)
        assert (got.total_dynamic_cost, got.path) == want


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_plan_invariants(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, density=0.5, integer_weights=False)
    risk = random_risk(rng, g)
    lam = float(rng.uniform(0, 10))
    w = routing.dynamic_weights(g, risk, lam)
    edges = g.edge_map()
    for s, t in itertools.permutations(range(6), 2):
        try:
            p = routing.shortest_path(g, w, s, t, risk)
        except routing.UnreachableError:
            continue
        assert len(set(p.path)) == len(p.path)
        assert all((u, v) in edges for u, v in zip(p.path, p.path[1:]))
        assert p.total_distance <= p.total_dynamic_cost + 1e-12
        # every prefix is itself optimal
        for i in range(2, len(p.path)):
            sub = routing.shortest_path(g, w, s, p.path[i - 1])
            assert sub.total_dynamic_cost == pytest.approx(
                sum(w[(u, v)] for u, v in zip(p.path[:i], p.path[1:i])), abs=1e-12)


def test_non_positive_weight_rejected():
    g = line_graph()
    with pytest.raises(ValueError):
        routing.shortest_path(g, routing.DynamicWeights({(0, 1): 0.0, (1, 2): 1.0}, 0.0), 0, 2)


def test_zero_risk_plans_identical():
    rng = np.random.default_rng(3)
    g = random_graph(rng, 7, density=0.6)
    zero = EdgeRisk({(e.u, e.v): 0.0 for e in g.edges})
    c = routing.compare(g, zero, 0, 1, lam=5.0)
    assert c.static_plan == c.aware_plan
    assert c.distance_delta_pct == 0.0 and c.risk_delta_pct == 0.0


def test_detour_instance():
    g, r = detour_instance()
    c = routing.compare(g, EdgeRisk(r), 0, 3, lam=5.0)
    assert c.static_plan.path == (0, 3)
    assert c.aware_plan.path == (0, 1, 3)
    assert c.aware_plan.total_distance > c.static_plan.total_distance
    assert c.aware_plan.risk_score < c.static_plan.risk_score


def test_delta_arithmetic_reference_numbers():
    assert routing.distance_delta_pct(293.30, 299.55) == pytest.approx(2.1, abs=0.1)
    assert routing.risk_delta_pct(159.86, 131.60) == pytest.approx(17.6, abs=0.1)


def test_comparison_json_and_summary():
    g, r = detour_instance()
    c = routing.compare(g, EdgeRisk(r), 0, 3, lam=5.0)
    doc = c.to_json()
    assert doc["static"]["path"] == [0, 3] and doc["risk_aware"]["path"] == [0, 1, 3]
    assert doc["risk_delta_pct"] == c.risk_delta_pct
    text = c.summary()
    assert "0 -> 1 -> 3" in text and "Static" in text and "Risk-aware" in text
