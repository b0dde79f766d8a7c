"""Road network model, shortest-path routing and vehicle movement.

The transportation side of the simulator: an undirected weighted graph
with microgrid and depot nodes marked on it, plus the kinematics of a
vehicle that always follows shortest paths and may sit mid-edge between
time steps.  Everything here is a pure function over an immutable
network object, so concurrent episode rollouts can share one instance.
"""

import heapq
from dataclasses import dataclass


class NetworkError(ValueError):
    """Raised for malformed or inconsistent network files."""


@dataclass(frozen=True, slots=True)
class AtNode:
    """Vehicle position exactly on a node."""

    node: int


@dataclass(frozen=True, slots=True)
class OnEdge:
    """Vehicle position on edge (a, b), dist_a from a and dist_b from b.

    dist_a + dist_b must equal the edge weight (within 1e-9 km).
    Endpoints are stored in ascending id order so that equal physical
    positions compare equal.
    """

    a: int
    dist_a: float
    b: int
    dist_b: float

    def __post_init__(self):
        if self.a > self.b:
            a, da, b, db = self.b, self.dist_b, self.a, self.dist_a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "dist_a", da)
            object.__setattr__(self, "b", b)
            object.__setattr__(self, "dist_b", db)


Location = AtNode | OnEdge

# Tolerance for snapping a traveled distance onto a node (km).
SNAP_EPS = 1e-9


class TransportNetwork:
    """Undirected weighted road graph with microgrid/depot markers.

    Shortest-path distance and next-hop tables for all node pairs are
    precomputed at construction (the graphs here are tiny), which makes
    every routing query a dictionary lookup.  Instances are treated as
    immutable after construction.
    """

    def __init__(self, nodes, edges, microgrid_map, depot_map):
        """
        Args:
            nodes: iterable of int node ids.
            edges: iterable of (a, b, weight_km) tuples, undirected.
            microgrid_map: {microgrid id -> node id}.
            depot_map: {depot id -> node id}.
        """
        self.nodes = frozenset(int(n) for n in nodes)
        self.weights = {}
        self.adj = {n: [] for n in self.nodes}
        for a, b, w in edges:
            a, b, w = int(a), int(b), float(w)
            if a not in self.nodes or b not in self.nodes:
                raise NetworkError(f"edge ({a}, {b}) references unknown node")
            if a == b:
                raise NetworkError(f"self-loop on node {a}")
            if w <= 0:
                raise NetworkError(f"non-positive weight on edge ({a}, {b})")
            key = (a, b) if a < b else (b, a)
            if key in self.weights:
                raise NetworkError(f"duplicate edge ({a}, {b})")
            self.weights[key] = w
            self.adj[a].append((b, w))
            self.adj[b].append((a, w))
        for n in self.adj:
            self.adj[n].sort()

        self.microgrid_map = {int(m): int(n) for m, n in microgrid_map.items()}
        self.depot_map = {int(d): int(n) for d, n in depot_map.items()}
        for kind, mapping in (("microgrid", self.microgrid_map),
                              ("depot", self.depot_map)):
            for key, n in mapping.items():
                if n not in self.nodes:
                    raise NetworkError(
                        f"{kind} {key} placed at unknown node {n}")
        hosts = list(self.microgrid_map.values())
        if len(set(hosts)) != len(hosts):
            raise NetworkError("a node hosts more than one microgrid")

        self._dist, self._next_hop = self._route_tables()

    def _route_tables(self):
        # Dijkstra from every source; ties resolved toward the smaller
        # next-node id so that routes are reproducible run to run.
        dist = {}
        for src in self.nodes:
            d = {n: None for n in self.nodes}
            d[src] = 0.0
            heap = [(0.0, src)]
            done = set()
            while heap:
                du, u = heapq.heappop(heap)
                if u in done:
                    continue
                done.add(u)
                for v, w in self.adj[u]:
                    nd = du + w
                    if d[v] is None or nd < d[v] - 1e-15:
                        d[v] = nd
                        heapq.heappush(heap, (nd, v))
            dist[src] = d
            for target, value in d.items():
                if value is None:
                    raise NetworkError(
                        f"graph is disconnected: no path {src} -> {target}")

        next_hop = {}
        for src in self.nodes:
            hop = {}
            for target in self.nodes:
                if target == src:
                    continue
                best = None
                for v, w in self.adj[src]:
                    cand = w + dist[v][target]
                    if best is None or cand < best[0] - 1e-12 or (
                            abs(cand - best[0]) <= 1e-12 and v < best[1]):
                        best = (cand, v)
                hop[target] = best[1]
            next_hop[src] = hop
        return dist, next_hop

    @property
    def edge_count(self):
        return len(self.weights)

    def edge_weight(self, a, b):
        key = (a, b) if a < b else (b, a)
        try:
            return self.weights[key]
        except KeyError:
            raise NetworkError(f"no edge between {a} and {b}") from None

    def has_edge(self, a, b):
        key = (a, b) if a < b else (b, a)
        return key in self.weights

    def node_distance(self, a, b):
        return self._dist[a][b]

    def diameter(self):
        return max(max(d.values()) for d in self._dist.values())

    def max_edge_weight(self):
        return max(self.weights.values()) if self.weights else 0.0

    def microgrid_node(self, m):
        return self.microgrid_map[m]

    def depot_node(self, d):
        return self.depot_map[d]

    def poi_nodes(self):
        """Microgrid nodes in id order, then depot nodes in id order."""
        return ([self.microgrid_map[m] for m in sorted(self.microgrid_map)]
                + [self.depot_map[d] for d in sorted(self.depot_map)])

    def validate_location(self, loc):
        if isinstance(loc, AtNode):
            if loc.node not in self.nodes:
                raise NetworkError(f"location on unknown node {loc.node}")
            return
        if isinstance(loc, OnEdge):
            w = self.edge_weight(loc.a, loc.b)
            if loc.dist_a < -SNAP_EPS or loc.dist_b < -SNAP_EPS:
                raise NetworkError(f"negative edge offset in {loc}")
            if abs(loc.dist_a + loc.dist_b - w) > 1e-9:
                raise NetworkError(
                    f"edge offsets of {loc} do not sum to weight {w}")
            return
        raise NetworkError(f"not a location: {loc!r}")


def load_network(path):
    """Parse a plain-text network file into a TransportNetwork.

    Grammar (one record per line, `#` starts a comment):
        node <id>
        edge <a> <b> <weight_km>
        microgrid <id> <node>
        depot <id> <node>
    """
    nodes, edges = [], []
    microgrids, depots = {}, {}
    ref_lines = []  # (lineno, kind, key, node) for post-parse checks
    seen_edges = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind = parts[0]
            try:
                if kind == "node" and len(parts) == 2:
                    nodes.append(int(parts[1]))
                elif kind == "edge" and len(parts) == 4:
                    a, b, w = int(parts[1]), int(parts[2]), float(parts[3])
                    if w <= 0:
                        raise NetworkError(
                            f"non-positive weight {w} on edge ({a}, {b})")
                    key = (a, b) if a < b else (b, a)
                    if key in seen_edges:
                        raise NetworkError(
                            f"duplicate edge ({a}, {b}), first seen on "
                            f"line {seen_edges[key]}")
                    seen_edges[key] = lineno
                    edges.append((a, b, w))
                elif kind == "microgrid" and len(parts) == 3:
                    m = int(parts[1])
                    if m in microgrids:
                        raise NetworkError(f"duplicate microgrid id {m}")
                    microgrids[m] = int(parts[2])
                    ref_lines.append((lineno, "microgrid", m, int(parts[2])))
                elif kind == "depot" and len(parts) == 3:
                    d = int(parts[1])
                    if d in depots:
                        raise NetworkError(f"duplicate depot id {d}")
                    depots[d] = int(parts[2])
                    ref_lines.append((lineno, "depot", d, int(parts[2])))
                else:
                    raise NetworkError(f"unrecognized record {line!r}")
            except ValueError as exc:
                raise NetworkError(f"{path}:{lineno}: {exc}") from None
            except NetworkError as exc:
                raise NetworkError(f"{path}:{lineno}: {exc}") from None
    node_set = set(nodes)
    for lineno, kind, key, node in ref_lines:
        if node not in node_set:
            raise NetworkError(
                f"{path}:{lineno}: {kind} {key} placed at unknown node {node}")
    try:
        return TransportNetwork(nodes, edges, microgrids, depots)
    except NetworkError as exc:
        raise NetworkError(f"{path}: {exc}") from None


def shortest_path(net, loc, target):
    """Minimum travel distance and node path from a location to a node.

    For an on-edge start the vehicle exits through one of the two edge
    endpoints, whichever yields the shorter total; ties go to the
    smaller endpoint id.  The returned path lists the nodes visited
    from the exit node onward (for an AtNode start that includes the
    start node itself).

    Returns:
        (distance_km, [node, ...]) with path[-1] == target.
    """
    if target not in net.nodes:
        raise NetworkError(f"unknown target node {target}")
    if isinstance(loc, AtNode):
        net.validate_location(loc)
        dist = net.node_distance(loc.node, target)
        if dist is None:
            raise NetworkError(f"node {target} unreachable from {loc.node}")
        path = [loc.node]
        while path[-1] != target:
            path.append(net._next_hop[path[-1]][target])
        return dist, path
    net.validate_location(loc)
    via_a = loc.dist_a + net.node_distance(loc.a, target)
    via_b = loc.dist_b + net.node_distance(loc.b, target)
    if via_a < via_b - 1e-12 or (abs(via_a - via_b) <= 1e-12
                                 and loc.a < loc.b):
        exit_node, total = loc.a, via_a
    else:
        exit_node, total = loc.b, via_b
    _, tail = shortest_path(net, AtNode(exit_node), target)
    return total, tail


def advance(net, loc, dest, speed, dt):
    """Move a vehicle toward dest along the shortest path for one step.

    Travels min(speed * dt, remaining distance) km.  Lands exactly on a
    node when the traveled distance coincides with one (within 1e-9 km),
    otherwise returns the mid-edge position.  The destination is free to
    change on the next call.
    """
    if speed <= 0 or dt <= 0:
        raise ValueError("speed and dt must be positive")
    remaining, path = shortest_path(net, loc, dest)
    budget = speed * dt
    if budget >= remaining - SNAP_EPS:
        return AtNode(dest)

    # Walk the path, spending budget edge by edge.
    if isinstance(loc, OnEdge):
        exit_node = path[0]
        # Distance from current position to the exit endpoint.
        to_exit = loc.dist_a if exit_node == loc.a else loc.dist_b
        if budget < to_exit - SNAP_EPS:
            # Still on the same edge, shifted toward the exit node.
            other = loc.b if exit_node == loc.a else loc.a
            w = net.edge_weight(exit_node, other)
            new_to_exit = to_exit - budget
            return OnEdge(exit_node, new_to_exit, other, w - new_to_exit)
        budget -= to_exit
        pos = exit_node
        idx = 0
        if budget <= SNAP_EPS:
            return AtNode(pos)
    else:
        pos = loc.node
        idx = 0

    while True:
        nxt = path[idx + 1]
        w = net.edge_weight(pos, nxt)
        if budget >= w - SNAP_EPS:
            budget -= w
            pos = nxt
            idx += 1
            if abs(budget) <= SNAP_EPS:
                return AtNode(pos)
        else:
            return OnEdge(pos, budget, nxt, w - budget)


def at_microgrid(net, loc_before, loc_after, m):
    """Stay indicator: 1 iff the vehicle spent the whole interval parked
    at microgrid m's node, else 0."""
    node = net.microgrid_node(m)
    if (isinstance(loc_before, AtNode) and isinstance(loc_after, AtNode)
            and loc_before.node == loc_after.node
            and loc_before.node == node):
        return 1
    return 0
