"""Space-time decoding graphs and classical decoders.

One graph per check kind: nodes are (layer, check) sites for the
rounds+1 detection layers plus a single virtual boundary node.  Edges
have unit weight: space-like edges join same-kind checks that share a
data qubit (annotated with that qubit and whether it sits on the logical
support), time-like edges join consecutive layers of the same check, and
boundary edges join boundary-adjacent checks to the virtual node.

mwpm_decode returns an exact minimum-weight perfect matching of defects
(the boundary is reusable).  It prunes defect pairs whose direct distance
is at least the sum of their boundary distances -- matching both to the
boundary is then never worse -- which splits the problem into small
independent components; each component is solved exactly (closed forms
for <= 2 defects, Edmonds blossom via networkx above that).  uf_decode is
a union-find cluster-growth decoder with spanning-forest peeling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .lattice import CodeLayout
from .noise import history_from_errors


@dataclass(frozen=True)
class GraphEdge:
    u: int
    v: int
    kind: str  # "space", "time" or "boundary"
    qubit: int | None  # data qubit whose error this edge represents
    logical: int  # 1 if that qubit lies on the logical support


class DecodeGraph:
    """Immutable decoding graph for one check kind; shareable across workers."""

    def __init__(self, layout: CodeLayout, rounds: int, kind: str):
        if kind not in ("X", "Z"):
            raise ValueError(f"kind must be 'X' or 'Z', got {kind!r}")
        self.layout = layout
        self.rounds = rounds
        self.kind = kind
        self.check_ids = layout.checks_of_kind(kind)  # global check indices
        self.k = len(self.check_ids)
        self.num_layers = rounds + 1
        self.boundary = self.num_layers * self.k
        support_logical = (
            layout.logical_z_support if kind == "Z" else layout.logical_x_support
        )
        lsup = set(support_logical)

        # per-qubit incidence on this kind's checks
        space_pairs = []  # (k1, k2, qubit)
        boundary_sites = {}  # k -> lowest boundary qubit
        for q in range(layout.num_qubits):
            inc = [i for i, g in enumerate(self.check_ids)
                   if q in layout.checks[g].support]
            if len(inc) == 2:
                space_pairs.append((inc[0], inc[1], q))
            elif len(inc) == 1:
                boundary_sites.setdefault(inc[0], q)
            elif len(inc) > 2:
                raise AssertionError("qubit incident to >2 same-kind checks")

        edges = []
        for layer in range(self.num_layers):
            off = layer * self.k
            for k1, k2, q in space_pairs:
                edges.append(GraphEdge(off + k1, off + k2, "space", q, int(q in lsup)))
            for kk, q in sorted(boundary_sites.items()):
                edges.append(GraphEdge(off + kk, self.boundary, "boundary", q, int(q in lsup)))
        for layer in range(rounds):
            off = layer * self.k
            for kk in range(self.k):
                edges.append(GraphEdge(off + kk, off + self.k + kk, "time", None, 0))
        self.edges = tuple(edges)

        n = self.boundary + 1
        self._edge_by_pair = {}
        adj = [[] for _ in range(n)]
        for e in self.edges:
            key = (min(e.u, e.v), max(e.u, e.v))
            self._edge_by_pair.setdefault(key, e)
            adj[e.u].append(e.v)
            adj[e.v].append(e.u)
        self.adjacency = tuple(tuple(sorted(set(a))) for a in adj)
        self._parity_cache: dict[tuple[int, int], int] = {}

    @cached_property
    def dist(self) -> np.ndarray:
        """All-pairs hop distances including the boundary node."""
        n = self.boundary + 1
        rows, cols = [], []
        for e in self.edges:
            rows += [e.u, e.v]
            cols += [e.v, e.u]
        m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        d = shortest_path(m, method="D", unweighted=True)
        return d.astype(np.int32)

    def edge_between(self, u: int, v: int) -> GraphEdge:
        return self._edge_by_pair[(min(u, v), max(u, v))]

    def node(self, layer: int, check_pos: int) -> int:
        return layer * self.k + check_pos

    def defects_from_detections(self, detections: np.ndarray) -> list[int]:
        """Node ids of nonzero detection events of this graph's kind."""
        sub = detections[:, list(self.check_ids)]
        layers, ks = np.nonzero(sub)
        return [int(l) * self.k + int(kk) for l, kk in zip(layers, ks)]

    # -- shortest paths -------------------------------------------------

    def walk_path(self, u: int, v: int) -> list[GraphEdge]:
        """Lexicographically smallest shortest path from u to v (edge list)."""
        d = self.dist
        path = []
        cur = u
        while cur != v:
            step = min(w for w in self.adjacency[cur] if d[w, v] == d[cur, v] - 1)
            path.append(self.edge_between(cur, step))
            cur = step
        return path

    def path_parity(self, u: int, v: int) -> int:
        """Logical-crossing parity along the canonical shortest path."""
        key = (u, v) if u <= v else (v, u)
        par = self._parity_cache.get(key)
        if par is None:
            par = sum(e.logical for e in self.walk_path(key[0], key[1])) & 1
            self._parity_cache[key] = par
        return par


def build_graph(layout: CodeLayout, rounds: int, kind: str) -> DecodeGraph:
    return DecodeGraph(layout, rounds, kind)


@dataclass
class Matching:
    pairs: list[tuple[int, int | None, int]]  # (defect, partner or None=boundary, weight)
    total_weight: int
    correction_parity: int
    edges: list[GraphEdge] = field(default_factory=list)  # populated on request


def _solve_component(graph: DecodeGraph, nodes: list[int], w: np.ndarray,
                     b: np.ndarray) -> list[tuple[int, int | None, int]]:
    """Exact minimum-weight matching of one defect component.

    nodes are graph node ids, w the pairwise distances among them, b their
    boundary distances.  Only kept edges (w[i,j] < b[i]+b[j]) are offered
    to the blossom solver; pairing through the boundary covers the rest.
    """
    m = len(nodes)
    if m == 1:
        return [(nodes[0], None, int(b[0]))]
    if m == 2:
        if w[0, 1] < b[0] + b[1]:
            return [(nodes[0], nodes[1], int(w[0, 1]))]
        return [(nodes[0], None, int(b[0])), (nodes[1], None, int(b[1]))]

    # exact reduction to a perfect matching over the defects themselves:
    # pairing i and j "via the boundary" costs b[i] + b[j], so every pair
    # gets weight min(w, b[i]+b[j]); an odd component adds one dummy node
    # reachable from defect i at cost b[i].
    eff = np.minimum(w, b[:, None] + b[None, :])
    big = int(eff.sum() + b.sum()) + 1
    g = nx.Graph()
    for i in range(m):
        for j in range(i + 1, m):
            g.add_edge(i, j, weight=big - int(eff[i, j]))
        if m % 2 == 1:
            g.add_edge(i, m, weight=big - int(b[i]))
    mate = nx.max_weight_matching(g, maxcardinality=True)
    out = []
    for a, c in mate:
        a, c = min(a, c), max(a, c)
        if c == m:
            out.append((nodes[a], None, int(b[a])))
        elif w[a, c] < b[a] + b[c]:
            out.append((nodes[a], nodes[c], int(w[a, c])))
        else:
            out.append((nodes[a], None, int(b[a])))
            out.append((nodes[c], None, int(b[c])))
    out.sort()
    return out


def mwpm_decode(graph: DecodeGraph, defects, want_edges: bool = False) -> Matching:
    defects = sorted(set(int(d) for d in defects))
    if any(d < 0 or d >= graph.boundary for d in defects):
        raise ValueError("defect outside graph nodes")
    if not defects:
        return Matching([], 0, 0)

    d = graph.dist
    idx = np.array(defects)
    w = d[np.ix_(idx, idx)]
    b = d[idx, graph.boundary]

    # split into independent components over kept edges
    n = len(defects)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] < b[i] + b[j]:
                parent[find(i)] = find(j)

    comps: dict[int, list[int]] = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)

    pairs = []
    for members in comps.values():
        sub = _solve_component(graph, [defects[i] for i in members],
                               w[np.ix_(members, members)], b[members])
        pairs.extend(sub)

    total = sum(p[2] for p in pairs)
    parity = 0
    edges = []
    for u, v, _ in pairs:
        target = graph.boundary if v is None else v
        if want_edges:
            path = graph.walk_path(u, target)
            edges.extend(path)
            parity ^= sum(e.logical for e in path) & 1
        else:
            parity ^= graph.path_parity(u, target)
    return Matching(sorted(pairs), int(total), parity, edges)


def oracle_match(weights: np.ndarray, boundary: np.ndarray) -> float:
    """Exact minimum matching cost by bitmask DP; n <= 16.

    Each defect pairs with exactly one other defect (cost weights[i,j]) or
    with the boundary (cost boundary[i]); the boundary is reusable.
    """
    n = len(boundary)
    if n > 16:
        raise ValueError(f"oracle limited to 16 defects, got {n}")
    if n == 0:
        return 0
    weights = np.asarray(weights)
    boundary = np.asarray(boundary)
    INF = float("inf")
    memo = [INF] * (1 << n)
    memo[0] = 0
    for mask in range(1, 1 << n):
        i = (mask & -mask).bit_length() - 1
        best = boundary[i] + memo[mask & ~(1 << i)]
        rest = mask & ~(1 << i)
        mm = rest
        while mm:
            j = (mm & -mm).bit_length() - 1
            cand = weights[i, j] + memo[rest & ~(1 << j)]
            if cand < best:
                best = cand
            mm &= mm - 1
        memo[mask] = best
    return memo[(1 << n) - 1]


# -- union-find decoder -------------------------------------------------


@dataclass
class UFResult:
    correction_edges: list[GraphEdge]
    correction_parity: int


def uf_decode(graph: DecodeGraph, defects) -> UFResult:
    """Cluster-growth decoding with spanning-forest peeling.

    Grows half-edges around odd clusters until every cluster is even or
    touches the boundary, then peels a spanning forest of the grown region
    to extract a correction that clears every defect.
    """
    defects = sorted(set(int(d) for d in defects))
    if any(d < 0 or d >= graph.boundary for d in defects):
        raise ValueError("defect outside graph nodes")
    if not defects:
        return UFResult([], 0)

    n = graph.boundary + 1
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    parity = [0] * n
    for dd in defects:
        parity[dd] = 1
    touches = [False] * n
    touches[graph.boundary] = True

    edges = graph.edges
    support = [0] * len(edges)
    incident: list[list[int]] = [[] for _ in range(n)]
    for ei, e in enumerate(edges):
        incident[e.u].append(ei)
        incident[e.v].append(ei)

    def active(root):
        return parity[root] == 1 and not touches[root]

    while True:
        roots = {find(dd) for dd in defects}
        grow_roots = {r for r in roots if active(r)}
        if not grow_roots:
            break
        # edges incident to any node of an active cluster grow by one half
        # per active side
        to_merge = []
        seen = set()
        for node in range(n):
            if find(node) not in grow_roots:
                continue
            for ei in incident[node]:
                if support[ei] >= 2 or ei in seen:
                    continue
                seen.add(ei)
                e = edges[ei]
                amount = int(find(e.u) in grow_roots) + int(find(e.v) in grow_roots)
                support[ei] = min(2, support[ei] + amount)
                if support[ei] >= 2:
                    to_merge.append(ei)
        for ei in to_merge:
            e = edges[ei]
            ru, rv = find(e.u), find(e.v)
            if ru != rv:
                parent[ru] = rv
                parity[rv] ^= parity[ru]
                touches[rv] = touches[rv] or touches[ru]

    # peeling on the grown subgraph
    grown = [ei for ei, s in enumerate(support) if s >= 2]
    sub_adj: dict[int, list[tuple[int, int]]] = {}
    for ei in grown:
        e = edges[ei]
        sub_adj.setdefault(e.u, []).append((e.v, ei))
        sub_adj.setdefault(e.v, []).append((e.u, ei))

    defect_left = [0] * n
    for dd in defects:
        defect_left[dd] = 1

    visited = set()
    correction = []
    # roots: boundary first so it absorbs parity, then smallest node ids
    roots = []
    if graph.boundary in sub_adj:
        roots.append(graph.boundary)
    roots.extend(sorted(sub_adj.keys()))
    for root in roots:
        if root in visited:
            continue
        order = [root]
        visited.add(root)
        parent_edge = {root: None}
        qi = 0
        while qi < len(order):
            cur = order[qi]
            qi += 1
            for (nb, ei) in sorted(sub_adj.get(cur, ())):
                if nb not in visited:
                    visited.add(nb)
                    parent_edge[nb] = (cur, ei)
                    order.append(nb)
        for v in reversed(order[1:]):
            p, ei = parent_edge[v]
            if defect_left[v]:
                correction.append(edges[ei])
                defect_left[v] ^= 1
                defect_left[p] ^= 1
    defect_left[graph.boundary] = 0
    if any(defect_left):
        raise AssertionError("peeling left uncleared defects")

    par = sum(e.logical for e in correction) & 1
    return UFResult(correction, par)


# -- correction application --------------------------------------------


def edges_to_history(graph: DecodeGraph, corr_edges) -> tuple[list, list]:
    """Translate correction edges into an explicit error history.

    Returns (injected, injected_meas) suitable for history_from_errors;
    applying them reproduces exactly the detection flips of the edges.
    Edges on the final (noise-free) layer are realised as a last-round
    error plus measurement flips that push their signature up one layer.
    """
    rounds = graph.rounds
    pauli = "X" if graph.kind == "Z" else "Z"
    injected = []
    injected_meas = []
    for e in corr_edges:
        if e.kind == "time":
            r = min(e.u, e.v) // graph.k
            c = graph.check_ids[e.u % graph.k]
            injected_meas.append((r, c))
            continue
        layer = e.u // graph.k  # u is always a real check node on the edge's layer
        if layer < rounds:
            injected.append((layer, e.qubit, pauli))
        else:
            injected.append((rounds - 1, e.qubit, pauli))
            for endpoint in (e.u, e.v):
                if endpoint != graph.boundary:
                    injected_meas.append((rounds - 1, graph.check_ids[endpoint % graph.k]))
    return injected, injected_meas


def detections_of_error_grid(layout: CodeLayout, x_err: np.ndarray,
                             z_err: np.ndarray) -> np.ndarray:
    """Detection volume caused by per-round error grids with no
    measurement noise: each round's new errors appear on their own layer;
    the final readout layer stays clean."""
    x_err = np.asarray(x_err, dtype=np.uint8)
    z_err = np.asarray(z_err, dtype=np.uint8)
    rounds = x_err.shape[0]
    h = layout.parity_matrix
    zc = list(layout.z_check_ids)
    xc = list(layout.x_check_ids)
    det = np.zeros((rounds + 1, layout.num_checks), dtype=np.uint8)
    det[:rounds, zc] = (x_err @ h[zc].T) % 2
    det[:rounds, xc] = (z_err @ h[xc].T) % 2
    return det


def apply_correction_residual(observed: np.ndarray, predicted_x: np.ndarray,
                              predicted_z: np.ndarray,
                              layout: CodeLayout) -> np.ndarray:
    """Residual detections after removing a predicted per-round error grid."""
    observed = np.asarray(observed, dtype=np.uint8)
    pred = detections_of_error_grid(layout, predicted_x, predicted_z)
    if observed.shape != pred.shape:
        raise ValueError(
            f"shape mismatch: observed {observed.shape}, predicted {pred.shape}"
        )
    return observed ^ pred
