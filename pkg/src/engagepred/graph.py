"""Author reply graphs and the structural statistics derived from them.

An edge ``u -> v`` with weight ``w`` means author ``u`` replied ``w`` times
to content written by ``v``.  Shortest paths ignore weights.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, maximum_flow

from .corpus import DELETED, CommunityCorpus, strip_kind_prefix

EXACT_BETWEENNESS_LIMIT = 50_000
SAMPLED_PIVOTS = 1024
MIN_CUT_LIMIT = 20_000

PROFILE_METRICS = ("betweenness", "centrality", "closeness", "in_degree")
AGGREGATES = ("avg", "max", "min", "median", "std")

NETWORK_FEATURES: tuple[str, ...] = (
    "num_nodes",
    "num_triangles",
    "num_edges",
    "is_biconnected",
    "num_nodes_to_cut",
    "density",
    "num_connected_components",
    "num_connected_components_gt2",
    "max_connected_component",
    "num_strongly_connected_components",
    "num_strongly_connected_components_gt2",
    "max_strongly_connected_component",
) + tuple(f"{agg}_{metric}" for metric in PROFILE_METRICS for agg in AGGREGATES)

assert len(NETWORK_FEATURES) == 32


@dataclass(frozen=True)
class ReplyGraph:
    nodes: tuple[str, ...]
    edges: Mapping[tuple[str, str], int]
    unresolved: int = 0

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]] | Mapping[tuple[str, str], int],
                   nodes: Iterable[str] = (), unresolved: int = 0) -> "ReplyGraph":
        """Build from ``(u, v)`` pairs (each counts once) or a weight mapping."""
        weights: dict[tuple[str, str], int] = {}
        items = edges.items() if isinstance(edges, Mapping) else ((e, 1) for e in edges)
        for (u, v), w in items:
            if u == v:
                continue
            weights[(u, v)] = weights.get((u, v), 0) + int(w)
        names = set(nodes)
        for u, v in weights:
            names.add(u)
            names.add(v)
        return cls(tuple(sorted(names)), dict(sorted(weights.items())), unresolved)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.nodes)}

    def successors(self) -> list[list[int]]:
        idx = self.index()
        out: list[list[int]] = [[] for _ in self.nodes]
        for (u, v) in self.edges:
            out[idx[u]].append(idx[v])
        for s in out:
            s.sort()
        return out

    def undirected_neighbors(self) -> list[set[int]]:
        idx = self.index()
        out: list[set[int]] = [set() for _ in self.nodes]
        for (u, v) in self.edges:
            a, b = idx[u], idx[v]
            out[a].add(b)
            out[b].add(a)
        return out

    def adjacency(self, weighted: bool = False) -> sparse.csr_matrix:
        idx = self.index()
        n = self.n
        if not self.edges:
            return sparse.csr_matrix((n, n), dtype=np.int64)
        rows = np.fromiter((idx[u] for u, _ in self.edges), dtype=np.int64, count=len(self.edges))
        cols = np.fromiter((idx[v] for _, v in self.edges), dtype=np.int64, count=len(self.edges))
        data = (np.fromiter(self.edges.values(), dtype=np.int64, count=len(self.edges))
                if weighted else np.ones(len(self.edges), dtype=np.int64))
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def build_reply_graph(corpus: CommunityCorpus) -> ReplyGraph:
    """Directed author graph of direct replies inside one corpus.

    Replies whose parent is not in the corpus are counted in
    ``unresolved``; deleted authors and self-replies contribute no edge.
    """
    author_of: dict[str, str] = {}
    active: set[str] = set()
    for s in corpus.submissions:
        author_of[strip_kind_prefix(s.id)] = s.author
        if s.author != DELETED:
            active.add(s.author)
    for c in corpus.comments:
        author_of[strip_kind_prefix(c.id)] = c.author
        if c.author != DELETED:
            active.add(c.author)

    weights: dict[tuple[str, str], int] = {}
    unresolved = 0
    for c in corpus.comments:
        parent_author = author_of.get(strip_kind_prefix(c.parent_id))
        if parent_author is None:
            unresolved += 1
            continue
        u, v = c.author, parent_author
        if u == DELETED or v == DELETED or u == v:
            continue
        weights[(u, v)] = weights.get((u, v), 0) + 1
    return ReplyGraph.from_edges(weights, nodes=active, unresolved=unresolved)


# ------------------------------------------------------------ centralities

@dataclass(frozen=True)
class CentralityProfiles:
    betweenness: np.ndarray
    centrality: np.ndarray
    closeness: np.ndarray
    in_degree: np.ndarray
    approximate: bool = False

    def as_dict(self) -> dict[str, np.ndarray]:
        return {m: getattr(self, m) for m in PROFILE_METRICS}


def _brandes(succ: list[list[int]], sources: Iterable[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unnormalised directed betweenness, plus incoming distance sums and reach counts."""
    n = len(succ)
    bc = [0.0] * n
    dist_sum = [0] * n
    reach = [0] * n
    for s in sources:
        order: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            order.append(v)
            dv = dist[v] + 1
            for w in succ[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    q.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w]
                dist_sum[w] += dist[w]
                reach[w] += 1
    return np.asarray(bc, dtype=float), np.asarray(dist_sum, dtype=float), np.asarray(reach, dtype=float)


def centrality_profiles(g: ReplyGraph, weighted_in_degree: bool = True,
                        exact_limit: int = EXACT_BETWEENNESS_LIMIT,
                        pivots: int = SAMPLED_PIVOTS, seed: int = 0) -> CentralityProfiles:
    """Per-node betweenness, degree centrality, closeness and in-degree.

    Closeness uses incoming distances with the Wasserman-Faust scaling
    ``(r / sum_d) * (r / (n - 1))`` where ``r`` counts nodes that reach the
    target.  Above ``exact_limit`` nodes betweenness and closeness are
    estimated from ``pivots`` seeded source nodes.
    """
    n = g.n
    if n == 0:
        z = np.zeros(0)
        return CentralityProfiles(z, z, z, z)
    succ = g.successors()
    approximate = n > exact_limit
    if approximate:
        rng = np.random.default_rng(seed)
        sources = np.sort(rng.choice(n, size=min(pivots, n), replace=False)).tolist()
    else:
        sources = range(n)
    bc, dist_sum, reach = _brandes(succ, sources)
    if approximate:
        scale = n / len(sources)
        bc *= scale
        dist_sum *= scale
        reach = np.minimum(reach * scale, n - 1)

    closeness = np.zeros(n)
    ok = dist_sum > 0
    if n > 1:
        closeness[ok] = (reach[ok] / dist_sum[ok]) * (reach[ok] / (n - 1))

    out_deg = np.fromiter((len(s) for s in succ), dtype=float, count=n)
    in_deg_unweighted = np.zeros(n)
    idx = g.index()
    in_deg_weighted = np.zeros(n)
    for (u, v), w in g.edges.items():
        in_deg_unweighted[idx[v]] += 1
        in_deg_weighted[idx[v]] += w
    degree_centrality = (out_deg + in_deg_unweighted) / (n - 1) if n > 1 else np.zeros(n)
    in_degree = in_deg_weighted if weighted_in_degree else in_deg_unweighted
    return CentralityProfiles(bc, degree_centrality, closeness, in_degree, approximate)


# -------------------------------------------------------------- components

def _component_labels(g: ReplyGraph, connection: str) -> np.ndarray:
    if g.n == 0:
        return np.zeros(0, dtype=np.int64)
    _, labels = connected_components(g.adjacency(), directed=True, connection=connection)
    return labels


def component_stats(g: ReplyGraph) -> dict[str, int]:
    out = {}
    for prefix, connection in (("connected", "weak"), ("strongly_connected", "strong")):
        sizes = np.bincount(_component_labels(g, connection))
        out[f"num_{prefix}_components"] = int(len(sizes))
        out[f"num_{prefix}_components_gt2"] = int(np.count_nonzero(sizes > 2))
        out[f"max_{prefix}_component"] = int(sizes.max()) if len(sizes) else 0
    return out


# ---------------------------------------------------------------- cohesion

def count_triangles(g: ReplyGraph) -> int:
    """Triangles in the undirected projection, each unordered triple once."""
    if g.n < 3:
        return 0
    a = g.adjacency()
    a = ((a + a.T) > 0).astype(np.int64)
    return int((a @ a).multiply(a).sum()) // 6


def _articulation_points(nbrs: Mapping[int, set[int]]) -> set[int]:
    """Iterative Hopcroft-Tarjan over one connected undirected component."""
    if not nbrs:
        return set()
    root = min(nbrs)
    disc = {root: 0}
    low = {root: 0}
    parent = {root: None}
    cut: set[int] = set()
    root_children = 0
    counter = 1
    stack = [(root, iter(sorted(nbrs[root])))]
    while stack:
        v, it = stack[-1]
        advanced = False
        for w in it:
            if w not in disc:
                disc[w] = low[w] = counter
                counter += 1
                parent[w] = v
                if v == root:
                    root_children += 1
                stack.append((w, iter(sorted(nbrs[w]))))
                advanced = True
                break
            if w != parent[v]:
                low[v] = min(low[v], disc[w])
        if advanced:
            continue
        stack.pop()
        p = parent[v]
        if p is not None:
            low[p] = min(low[p], low[v])
            if p != root and low[v] >= disc[p]:
                cut.add(p)
    if root_children > 1:
        cut.add(root)
    return cut


def _local_node_connectivity(nodes: list[int], nbrs: Mapping[int, set[int]], s: int, t: int) -> int:
    """Number of internally vertex-disjoint s-t paths (s, t non-adjacent), by max-flow."""
    pos = {v: i for i, v in enumerate(nodes)}
    k = len(nodes)
    big = k + 1
    rows, cols, caps = [], [], []
    for v in nodes:
        i = pos[v]
        rows.append(2 * i)
        cols.append(2 * i + 1)
        caps.append(1 if v not in (s, t) else big)
        for w in nbrs[v]:
            rows.append(2 * i + 1)
            cols.append(2 * pos[w])
            caps.append(big)
    m = sparse.csr_matrix((np.asarray(caps, dtype=np.int32), (rows, cols)), shape=(2 * k, 2 * k))
    return int(maximum_flow(m, 2 * pos[s] + 1, 2 * pos[t]).flow_value)


def node_connectivity(nbrs: Mapping[int, set[int]]) -> int:
    """Vertex connectivity of a connected undirected graph (n - 1 when complete)."""
    nodes = sorted(nbrs)
    n = len(nodes)
    if n <= 1:
        return 0
    v = min(nodes, key=lambda x: (len(nbrs[x]), x))
    k = len(nbrs[v])
    if k == n - 1 and all(len(nbrs[x]) == n - 1 for x in nodes):
        return n - 1
    for w in nodes:
        if w != v and w not in nbrs[v]:
            k = min(k, _local_node_connectivity(nodes, nbrs, v, w))
    around = sorted(nbrs[v])
    for i, x in enumerate(around):
        for y in around[i + 1:]:
            if y not in nbrs[x]:
                k = min(k, _local_node_connectivity(nodes, nbrs, x, y))
    return k


@dataclass(frozen=True)
class CutInfo:
    is_biconnected: int
    num_nodes_to_cut: int
    capped: bool = False


def _component_cut(nbrs: Mapping[int, set[int]], cap: int) -> tuple[int, CutInfo]:
    """(connectivity used for ranking, reported cut info) for one component."""
    n = len(nbrs)
    if n <= 1:
        return 0, CutInfo(0, 0)
    if n == 2:
        return 1, CutInfo(1, 0)
    if all(len(s) == n - 1 for s in nbrs.values()):
        return n - 1, CutInfo(1, 0)
    if _articulation_points(nbrs):
        return 1, CutInfo(0, 1)
    if n > cap:
        # biconnected, so the vertex connectivity is at least 2
        return 2, CutInfo(1, 2, capped=True)
    k = node_connectivity(nbrs)
    return k, CutInfo(1, k)


def cohesion_stats(g: ReplyGraph, cut_limit: int = MIN_CUT_LIMIT) -> dict:
    """Triangles, density and the cut structure of the largest weak component.

    When several weak components share the largest size, the one with the
    smallest vertex connectivity is reported.
    """
    n = g.n
    m = len(g.edges)
    out = {
        "num_triangles": count_triangles(g),
        "density": m / (n * (n - 1)) if n > 1 else 0.0,
        "is_biconnected": 0,
        "num_nodes_to_cut": 0,
        "capped": False,
    }
    if n == 0:
        return out
    labels = _component_labels(g, "weak")
    sizes = np.bincount(labels)
    nbrs = g.undirected_neighbors()
    best: tuple[int, CutInfo] | None = None
    for comp in np.flatnonzero(sizes == sizes.max()):
        members = np.flatnonzero(labels == comp).tolist()
        sub = {v: nbrs[v] for v in members}
        ranked = _component_cut(sub, cut_limit)
        if best is None or ranked[0] < best[0]:
            best = ranked
    info = best[1]
    out.update(is_biconnected=info.is_biconnected, num_nodes_to_cut=info.num_nodes_to_cut,
               capped=info.capped)
    return out


# ---------------------------------------------------------------- assembly

@dataclass(frozen=True)
class NetworkStats:
    values: np.ndarray
    capped: bool = False
    approximate: bool = False
    names: tuple[str, ...] = field(default=NETWORK_FEATURES, repr=False)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def _aggregate(x: np.ndarray) -> list[float]:
    if len(x) == 0:
        return [0.0] * 5
    return [float(x.mean()), float(x.max()), float(x.min()), float(np.median(x)), float(x.std())]


def network_feature_vector(g: ReplyGraph, **kwargs) -> NetworkStats:
    """All 32 network statistics in canonical order; the empty graph maps to zeros."""
    if g.n == 0:
        return NetworkStats(np.zeros(len(NETWORK_FEATURES)))
    comp = component_stats(g)
    coh = cohesion_stats(g, cut_limit=kwargs.pop("cut_limit", MIN_CUT_LIMIT))
    prof = centrality_profiles(g, **kwargs)
    head = [
        g.n,
        coh["num_triangles"],
        len(g.edges),
        coh["is_biconnected"],
        coh["num_nodes_to_cut"],
        coh["density"],
        comp["num_connected_components"],
        comp["num_connected_components_gt2"],
        comp["max_connected_component"],
        comp["num_strongly_connected_components"],
        comp["num_strongly_connected_components_gt2"],
        comp["max_strongly_connected_component"],
    ]
    tail = [v for metric in PROFILE_METRICS for v in _aggregate(getattr(prof, metric))]
    return NetworkStats(np.asarray(head + tail, dtype=float), capped=coh["capped"],
                        approximate=prof.approximate)


def write_edge_list(path: str | Path, g: ReplyGraph) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "v", "weight"])
        for (u, v), weight in g.edges.items():
            w.writerow([u, v, weight])
