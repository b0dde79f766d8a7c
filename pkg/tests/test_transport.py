import itertools

import numpy as np
import pytest

from messrl.transport import (AtNode, NetworkError, OnEdge, TransportNetwork,
                              advance, at_microgrid, load_network,
                              shortest_path)


def floyd_warshall(net):
    """Independent all-pairs oracle (different algorithm, same graph)."""
    nodes = sorted(net.nodes)
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for (a, b), w in net.weights.items():
        dist[idx[a], idx[b]] = w
        dist[idx[b], idx[a]] = w
    for k in range(n):
        for i in range(n):
            for j in range(n):
                through = dist[i, k] + dist[k, j]
                if through < dist[i, j]:
                    dist[i, j] = through
    return nodes, idx, dist


def triangle_net():
    return TransportNetwork([1, 2, 3],
                            [(1, 2, 1.0), (2, 3, 1.0), (1, 3, 3.0)],
                            {1: 3}, {1: 1})


# ----------------------------------------------------------------------
# network file parsing


def test_shipped_sioux_falls_layout():
    from messrl.config import resolve_scenario
    net = load_network(resolve_scenario("sioux_falls.net"))
    assert len(net.nodes) == 24
    assert net.edge_count == 38
    assert net.depot_node(1) == 10
    assert [net.microgrid_node(m) for m in (1, 2, 3)] == [2, 12, 21]


def test_parse_errors(tmp_path):
    cases = {
        "zero_weight": ("node 1\nnode 2\nedge 1 2 0\n", "non-positive"),
        "dangling_mg": ("node 1\nmicrogrid 1 9\n", "unknown node"),
        "disconnected": ("node 1\nnode 2\nnode 3\nedge 1 2 1\n",
                         "disconnected"),
        "bad_record": ("node 1\nroad 1 2 5\n", "unrecognized"),
        "double_mg_host": ("node 1\nmicrogrid 1 1\nmicrogrid 2 1\n",
                           "more than one microgrid"),
        "dup_edge": ("node 1\nnode 2\nedge 1 2 1\nedge 2 1 2\n",
                     "duplicate edge"),
    }
    for name, (text, needle) in cases.items():
        path = tmp_path / f"{name}.net"
        path.write_text(text)
        with pytest.raises(NetworkError, match=needle):
            load_network(str(path))


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.net"
    path.write_text("node 1\nnode 2\nedge 1 2 -3\n")
    with pytest.raises(NetworkError, match=r"bad\.net:3"):
        load_network(str(path))


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "ok.net"
    path.write_text("# header\nnode 1\n\nnode 2  # trailing\nedge 1 2 4\n"
                    "microgrid 1 2\ndepot 1 1\n")
    net = load_network(str(path))
    assert net.edge_weight(1, 2) == 4.0


# ----------------------------------------------------------------------
# shortest paths


def test_all_pairs_match_floyd_warshall():
    from messrl.config import resolve_scenario
    net = load_network(resolve_scenario("sioux_falls.net"))
    nodes, idx, oracle = floyd_warshall(net)
    for a in nodes:
        for b in nodes:
            d, path = shortest_path(net, AtNode(a), b)
            assert d == oracle[idx[a], idx[b]]
            assert path[0] == a and path[-1] == b
            # path length consistent with the reported distance
            walked = sum(net.edge_weight(u, v)
                         for u, v in zip(path, path[1:]))
            assert walked == pytest.approx(d, abs=1e-12)


def test_triangle_inequality():
    from messrl.config import resolve_scenario
    net = load_network(resolve_scenario("sioux_falls.net"))
    nodes = sorted(net.nodes)
    rng = np.random.default_rng(7)
    for _ in range(500):
        a, b, c = rng.choice(nodes, size=3)
        ab = net.node_distance(int(a), int(b))
        bc = net.node_distance(int(b), int(c))
        ac = net.node_distance(int(a), int(c))
        assert ac <= ab + bc + 1e-12


def test_identity_and_triangle_paths():
    net = triangle_net()
    assert shortest_path(net, AtNode(2), 2) == (0.0, [2])
    # oracle: enumerate every simple path 1 -> 3
    best = min(
        (sum(net.edge_weight(u, v) for u, v in zip(p, p[1:])), list(p))
        for p in [(1, 3), (1, 2, 3)])
    d, path = shortest_path(net, AtNode(1), 3)
    assert (d, path) == (best[0], best[1]) == (2.0, [1, 2, 3])


def test_on_edge_exit_sides():
    net = triangle_net()
    # direct exit through the near endpoint
    d, path = shortest_path(net, OnEdge(1, 0.4, 2, 0.6), 2)
    assert d == pytest.approx(0.6) and path == [2]
    # going back through node 1 is never better here
    d, path = shortest_path(net, OnEdge(1, 0.4, 2, 0.6), 3)
    assert d == pytest.approx(0.6 + 1.0) and path == [2, 3]


def test_on_edge_backtrack_when_shorter():
    # long edge 1-2 (10), shortcut 1-3 (1), 3-2 (1): from a position
    # 1 km out on the long edge, node 2 is closer back through node 1
    net = TransportNetwork([1, 2, 3],
                           [(1, 2, 10.0), (1, 3, 1.0), (2, 3, 1.0)],
                           {1: 2}, {1: 1})
    d, path = shortest_path(net, OnEdge(1, 1.0, 2, 9.0), 2)
    assert d == pytest.approx(3.0) and path == [1, 3, 2]


def test_tie_breaks_prefer_smaller_next_node():
    net = TransportNetwork([1, 2, 3, 4],
                           [(1, 2, 1.0), (1, 3, 1.0), (2, 4, 1.0),
                            (3, 4, 1.0)],
                           {1: 4}, {1: 1})
    d, path = shortest_path(net, AtNode(1), 4)
    assert d == 2.0 and path == [1, 2, 4]


def test_unknown_target_rejected():
    net = triangle_net()
    with pytest.raises(NetworkError, match="unknown target"):
        shortest_path(net, AtNode(1), 99)


# ----------------------------------------------------------------------
# movement


def two_node_net(w=10.0):
    return TransportNetwork([1, 2], [(1, 2, w)], {1: 2}, {1: 1})


def test_advance_examples():
    net = two_node_net(10.0)
    assert advance(net, AtNode(2), 2, speed=5.0, dt=1.0) == AtNode(2)
    loc = advance(net, AtNode(1), 2, speed=4.0, dt=1.0)
    assert loc == OnEdge(1, 4.0, 2, 6.0)
    assert advance(net, AtNode(1), 2, speed=12.0, dt=1.0) == AtNode(2)


def test_advance_lands_exactly_on_node():
    net = TransportNetwork([1, 2, 3], [(1, 2, 4.0), (2, 3, 4.0)],
                           {1: 3}, {1: 1})
    assert advance(net, AtNode(1), 3, speed=4.0, dt=1.0) == AtNode(2)
    loc = advance(net, AtNode(1), 3, speed=6.0, dt=1.0)
    assert loc == OnEdge(2, 2.0, 3, 2.0)


def test_advance_from_edge_positions():
    net = two_node_net(10.0)
    loc = OnEdge(1, 4.0, 2, 6.0)
    assert advance(net, loc, 2, speed=2.0, dt=1.0) == OnEdge(1, 6.0, 2, 4.0)
    # turn around mid-edge
    assert advance(net, loc, 1, speed=2.0, dt=1.0) == OnEdge(1, 2.0, 2, 8.0)
    # land exactly on the exit node
    assert advance(net, loc, 1, speed=4.0, dt=1.0) == AtNode(1)


def test_advance_invariants_random_walks():
    from messrl.config import resolve_scenario
    net = load_network(resolve_scenario("sioux_falls.net"))
    nodes = sorted(net.nodes)
    rng = np.random.default_rng(3)
    for _ in range(50):
        loc = AtNode(int(rng.choice(nodes)))
        speed = float(rng.uniform(5.0, 60.0))
        hours = 0.0
        for _ in range(24):
            dest = int(rng.choice(nodes))
            before, _ = shortest_path(net, loc, dest)
            loc = advance(net, loc, dest, speed, 1.0)
            hours += 1.0
            if isinstance(loc, OnEdge):
                w = net.edge_weight(loc.a, loc.b)
                assert loc.dist_a >= 0 and loc.dist_b >= 0
                assert loc.dist_a + loc.dist_b == pytest.approx(w, abs=1e-9)
            after, _ = shortest_path(net, loc, dest)
            # moved at most speed * dt, and strictly toward dest
            assert before - after <= speed * 1.0 + 1e-9
            assert after <= before + 1e-9


def test_monotone_progress_until_arrival():
    from messrl.config import resolve_scenario
    net = load_network(resolve_scenario("sioux_falls.net"))
    loc = AtNode(1)
    dest = 20
    remaining, _ = shortest_path(net, loc, dest)
    for _ in range(100):
        if remaining == 0:
            break
        loc = advance(net, loc, dest, speed=7.0, dt=1.0)
        nxt, _ = shortest_path(net, loc, dest)
        assert nxt < remaining
        remaining = nxt
    assert loc == AtNode(dest)


def test_advance_rejects_bad_kinematics():
    net = two_node_net()
    with pytest.raises(ValueError):
        advance(net, AtNode(1), 2, speed=0.0, dt=1.0)
    with pytest.raises(NetworkError):
        advance(net, OnEdge(1, 1.0, 2, 2.0), 2, speed=1.0, dt=1.0)


# ----------------------------------------------------------------------
# stay indicator


def test_at_microgrid_cases():
    net = two_node_net()
    mg_node = net.microgrid_node(1)
    assert at_microgrid(net, AtNode(mg_node), AtNode(mg_node), 1) == 1
    assert at_microgrid(net, AtNode(mg_node), OnEdge(2, 1.0, 1, 9.0), 1) == 0
    # parked at the depot counts for no microgrid
    assert at_microgrid(net, AtNode(1), AtNode(1), 1) == 0


def test_stay_exclusive_across_microgrids():
    from messrl.config import resolve_scenario
    net = load_network(resolve_scenario("sioux_falls.net"))
    for node in net.nodes:
        stays = sum(at_microgrid(net, AtNode(node), AtNode(node), m)
                    for m in net.microgrid_map)
        assert stays <= 1
