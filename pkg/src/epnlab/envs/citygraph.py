"""Synthetic street networks and neighborhood sampling.

A city is a jittered lattice with random edge deletions constrained to
keep it connected. Neighborhoods are grown breadth-first from a random
center until they contain the requested number of intersections (nodes
of degree > 2), then every degree-2 corridor node is contracted away so
exploration is short while planning depth is preserved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .common import IntersectionQuotaError


@dataclass
class CityParams:
    width: int = 12
    height: int = 12
    edge_keep_prob: float = 0.50
    jitter: float = 0.25

    def __post_init__(self):
        if self.width * self.height < 4:
            raise ValueError("city needs at least 4 nodes")


@dataclass
class CityGraph:
    coords: np.ndarray               # [n, 2]
    adj: list[list[int]]             # sorted neighbor lists

    @property
    def n_nodes(self) -> int:
        return len(self.adj)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n_nodes) for v in self.adj[u] if u < v]

    def is_connected(self) -> bool:
        return _is_connected(self.adj, set(range(self.n_nodes)))


def _is_connected(adj: list[list[int]], nodes: set[int]) -> bool:
    if not nodes:
        return False
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v in nodes and v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(nodes)


def synth_city(rng: np.random.Generator, params: CityParams | None = None) -> CityGraph:
    """Perturbed lattice; edge deletions never disconnect the graph."""
    p = params or CityParams()
    w, h = p.width, p.height
    n = w * h
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    coords = np.stack([xs.ravel(), ys.ravel()], axis=1)
    coords += rng.uniform(-p.jitter, p.jitter, size=coords.shape)

    edges = []
    for r in range(h):
        for c in range(w):
            u = r * w + c
            if c + 1 < w:
                edges.append((u, u + 1))
            if r + 1 < h:
                edges.append((u, u + w))
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)

    # Deletion pass in rng order; a removal that would disconnect is skipped.
    order = rng.permutation(len(edges))
    keep_draw = rng.random(len(edges))
    nodes = set(range(n))
    for i in order:
        if keep_draw[i] < p.edge_keep_prob:
            continue
        u, v = edges[i]
        adj[u].remove(v)
        adj[v].remove(u)
        if not _is_connected(adj, nodes):
            adj[u].append(v)
            adj[v].append(u)
    adj = [sorted(ns) for ns in adj]
    return CityGraph(coords=coords, adj=adj)


@dataclass
class Neighborhood:
    """Contracted sampled graph; headings are angle-ordered incident edges.

    State space: ordered (node, heading index) pairs, one per directed
    edge slot, enumerated by `states()`.
    """

    coords: np.ndarray                   # [n, 2]
    ordered_neighbors: list[list[int]]   # per node, neighbors by ascending angle
    n_intersections: int
    _state_index: dict = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.ordered_neighbors)

    def degree(self, node: int) -> int:
        return len(self.ordered_neighbors[node])

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n_nodes)
                for v in self.ordered_neighbors[u] if u < v]

    def states(self) -> list[tuple[int, int]]:
        return [(v, i) for v in range(self.n_nodes) for i in range(self.degree(v))]

    def state_index(self, state: tuple[int, int]) -> int:
        if self._state_index is None:
            self._state_index = {s: k for k, s in enumerate(self.states())}
        return self._state_index[state]

    @property
    def n_states(self) -> int:
        return sum(self.degree(v) for v in range(self.n_nodes))

    def edge_angle(self, u: int, v: int) -> float:
        d = self.coords[v] - self.coords[u]
        return math.atan2(d[1], d[0])

    def validate(self) -> None:
        if not _is_connected(self.ordered_neighbors, set(range(self.n_nodes))):
            raise ValueError("neighborhood is not connected")
        if any(self.degree(v) == 2 for v in range(self.n_nodes)):
            raise ValueError("neighborhood contains a degree-2 node")
        found = sum(1 for v in range(self.n_nodes) if self.degree(v) > 2)
        if found != self.n_intersections:
            raise ValueError(f"intersection count {found} != {self.n_intersections}")


def _order_by_angle(coords: np.ndarray, node: int, neighbors: list[int]) -> list[int]:
    def key(v):
        d = coords[v] - coords[node]
        return (math.atan2(d[1], d[0]), v)
    return sorted(neighbors, key=key)


def _grow_until_quota(city: CityGraph, center: int, quota: int) -> set[int] | None:
    """BFS from center; stop once the induced subgraph has `quota` intersections."""
    visited = [center]
    in_set = {center}
    degree = {center: 0}
    n_inter = 0
    frontier = 0
    while True:
        # count intersections in the current induced subgraph
        if n_inter >= quota:
            return in_set
        if frontier >= len(visited):
            return None
        u = visited[frontier]
        frontier += 1
        for v in city.adj[u]:
            if v in in_set:
                continue
            in_set.add(v)
            visited.append(v)
            # update induced degrees incrementally
            degree[v] = 0
            for w in city.adj[v]:
                if w in in_set:
                    before_v, before_w = degree[v], degree[w]
                    degree[v] = before_v + 1
                    degree[w] = before_w + 1
                    if before_w == 2:
                        n_inter += 1
                    if degree[v] == 3:
                        n_inter += 1
            if n_inter >= quota:
                return in_set


def _contract_degree_two(adjacency: dict[int, list[int]]) -> dict[int, list[int]] | None:
    """Remove every degree-2 node, splicing its two edges into one.

    Returns None when contraction would create a self-loop or a parallel
    edge (the caller resamples instead of living with a multigraph).
    """
    adj = {u: list(vs) for u, vs in adjacency.items()}
    changed = True
    while changed:
        changed = False
        for v in list(adj):
            if len(adj[v]) != 2:
                continue
            a, b = adj[v]
            if a == b:
                return None
            adj[a].remove(v)
            adj[b].remove(v)
            del adj[v]
            if b in adj[a]:
                return None  # would create a parallel edge
            adj[a].append(b)
            adj[b].append(a)
            changed = True
    return adj


def sample_neighborhood(city: CityGraph, n_intersections: int,
                        rng: np.random.Generator, max_tries: int = 64) -> Neighborhood:
    """Grow a neighborhood around a random center and contract corridors."""
    if n_intersections < 1:
        raise ValueError("need at least one intersection")
    for _ in range(max_tries):
        center = int(rng.integers(city.n_nodes))
        node_set = _grow_until_quota(city, center, n_intersections)
        if node_set is None:
            continue
        induced = {u: [v for v in city.adj[u] if v in node_set] for u in node_set}
        contracted = _contract_degree_two(induced)
        if contracted is None:
            continue
        keep = sorted(contracted)
        relabel = {old: i for i, old in enumerate(keep)}
        coords = city.coords[keep].copy()
        ordered = []
        for old in keep:
            neighbors = [relabel[v] for v in contracted[old]]
            ordered.append(_order_by_angle(coords, relabel[old], neighbors))
        nbhd = Neighborhood(coords=coords, ordered_neighbors=ordered,
                            n_intersections=n_intersections)
        try:
            nbhd.validate()
        except ValueError:
            continue
        return nbhd
    raise IntersectionQuotaError(
        f"could not sample a {n_intersections}-intersection neighborhood "
        f"from a {city.n_nodes}-node city in {max_tries} tries")


# ------------------------------------------------------------------ exports


def neighborhood_to_jsonl(nbhd: Neighborhood) -> str:
    """One JSON record per node: id, coordinates, angle-ordered neighbors."""
    lines = []
    for v in range(nbhd.n_nodes):
        lines.append(json.dumps({
            "node": v,
            "x": round(float(nbhd.coords[v, 0]), 6),
            "y": round(float(nbhd.coords[v, 1]), 6),
            "neighbors": nbhd.ordered_neighbors[v],
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def neighborhood_to_dot(nbhd: Neighborhood, annotations: dict[int, str] | None = None) -> str:
    """Graphviz text; node positions pinned to city coordinates."""
    out = ["graph neighborhood {", "  node [shape=circle];"]
    for v in range(nbhd.n_nodes):
        label = annotations.get(v, str(v)) if annotations else str(v)
        x, y = nbhd.coords[v]
        out.append(f'  n{v} [label="{label}", pos="{x:.4f},{y:.4f}!"];')
    for u, v in nbhd.edges():
        out.append(f"  n{u} -- n{v};")
    out.append("}")
    return "\n".join(out) + "\n"
