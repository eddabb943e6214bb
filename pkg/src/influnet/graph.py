"""Directed binary networks: ingestion, descriptive statistics, communities.

Statistics that are only defined for undirected graphs (transitivity,
assortativity, modularity, fast-greedy communities) are computed on the
undirected projection, where a mutual pair i<->j collapses to one edge.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path


class GraphError(ValueError):
    """Invalid network input (malformed record, self-loop, bad index)."""


class UndefinedStatistic(ArithmeticError):
    """A statistic has no value on the given graph (e.g. zero variance)."""


@dataclass(frozen=True)
class DirectedNetwork:
    """Immutable directed binary graph on vertices ``0..n-1``.

    ``edges`` is stored as a sorted ``(m, 2)`` int array of ``(source,
    target)`` pairs; construction validates and deduplicates.
    """

    n: int
    edges: np.ndarray
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 0:
            raise GraphError("n must be non-negative")
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise GraphError("edge index out of range [0, n)")
            if np.any(e[:, 0] == e[:, 1]):
                bad = e[e[:, 0] == e[:, 1]][0]
                raise GraphError(f"self-loop at vertex {bad[0]}")
            e = np.unique(e, axis=0)
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        if self.labels and len(self.labels) != self.n:
            raise GraphError("labels must have length n")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, labels=()) -> "DirectedNetwork":
        return cls(n, np.array(list(edges), dtype=np.int64).reshape(-1, 2), tuple(labels))

    @classmethod
    def from_adjacency(cls, adj) -> "DirectedNetwork":
        adj = np.asarray(adj)
        n = adj.shape[0]
        mask = adj.astype(bool).copy()
        np.fill_diagonal(mask, False)
        return cls(n, np.argwhere(mask))

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def sources(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def targets(self) -> np.ndarray:
        return self.edges[:, 1]

    def adjacency(self) -> np.ndarray:
        """Dense boolean adjacency ``Y`` with ``Y[i, j]`` true iff i -> j."""
        y = np.zeros((self.n, self.n), dtype=bool)
        y[self.edges[:, 0], self.edges[:, 1]] = True
        return y

    def sparse(self) -> csr_matrix:
        data = np.ones(self.m, dtype=np.int8)
        return csr_matrix((data, (self.edges[:, 0], self.edges[:, 1])), shape=(self.n, self.n))

    def out_neighbors(self, i: int) -> np.ndarray:
        lo, hi = np.searchsorted(self.edges[:, 0], [i, i + 1])
        return self.edges[lo:hi, 1]

    def in_neighbors(self, j: int) -> np.ndarray:
        return np.sort(self.edges[self.edges[:, 1] == j, 0])

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=self.n)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.edges[:, 1], minlength=self.n)

    def subgraph(self, vertices) -> "DirectedNetwork":
        """Induced subgraph, reindexed densely in the order given."""
        vertices = np.asarray(vertices, dtype=np.int64)
        index = np.full(self.n, -1, dtype=np.int64)
        index[vertices] = np.arange(len(vertices))
        keep = (index[self.edges[:, 0]] >= 0) & (index[self.edges[:, 1]] >= 0)
        sub = index[self.edges[keep]]
        labels = tuple(self.labels[v] for v in vertices) if self.labels else ()
        return DirectedNetwork(len(vertices), sub, labels)

    def undirected_adjacency(self) -> np.ndarray:
        y = self.adjacency()
        return y | y.T


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.size and (lab.min() != 0 or set(np.unique(lab)) != set(range(lab.max() + 1))):
            raise GraphError("partition labels must be contiguous 0..k-1")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @classmethod
    def from_any(cls, labels) -> "Partition":
        """Relabel arbitrary community ids to 0..k-1 in first-appearance order."""
        mapping: dict = {}
        out = [mapping.setdefault(x, len(mapping)) for x in np.asarray(labels).tolist()]
        return cls(np.array(out, dtype=np.int64))


# ---------------------------------------------------------------------------
# ingestion


def load_edge_list(source: TextIO | str, header: bool | None = None) -> DirectedNetwork:
    """Read a ``src,dst`` edge list.

    Vertex ids (strings or integers, both treated as opaque tokens) are mapped
    to dense indices in first-appearance order. ``header=None`` auto-detects a
    ``source,target`` first line.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    ids: dict[str, int] = {}
    edges = []
    reader = csv.reader(source)
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise GraphError(f"line {lineno}: expected 2 fields, got {len(row)}")
        a, b = row[0].strip(), row[1].strip()
        if lineno == 1 and (header or (header is None and (a, b) == ("source", "target"))):
            continue
        if not a or not b:
            raise GraphError(f"line {lineno}: empty vertex id")
        if a == b:
            raise GraphError(f"line {lineno}: self-loop on {a!r}")
        ia = ids.setdefault(a, len(ids))
        ib = ids.setdefault(b, len(ids))
        edges.append((ia, ib))
    labels = tuple(ids)
    return DirectedNetwork.from_edges(len(ids), edges, labels)


def write_edge_list(net: DirectedNetwork, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["source", "target"])
    names = net.labels or range(net.n)
    for s, t in net.edges:
        w.writerow([names[s], names[t]])


# ---------------------------------------------------------------------------
# statistics


def giant_component(net: DirectedNetwork) -> DirectedNetwork:
    """Largest weakly connected component; ties go to the component holding
    the lowest original index."""
    if net.n == 0:
        raise GraphError("empty network has no giant component")
    _, comp = connected_components(net.sparse(), directed=True, connection="weak")
    sizes = np.bincount(comp)
    first = np.full(len(sizes), net.n)
    np.minimum.at(first, comp, np.arange(net.n))
    tied = np.flatnonzero(sizes == sizes.max())
    best = tied[np.argmin(first[tied])]
    return net.subgraph(np.flatnonzero(comp == best))


def density(net: DirectedNetwork) -> float:
    if net.n < 2:
        raise GraphError("density needs n >= 2")
    return net.m / (net.n * (net.n - 1))


def degree_stats(net: DirectedNetwork) -> dict:
    """Mean and population sd of total degree (in + out)."""
    if net.n < 1:
        raise GraphError("degree_stats needs n >= 1")
    d = net.out_degree() + net.in_degree()
    return {"mean": 2.0 * net.m / net.n, "sd": float(np.std(d))}


def transitivity(net: DirectedNetwork) -> float:
    a = net.undirected_adjacency().astype(np.float64)
    deg = a.sum(axis=1)
    triples = float(np.sum(deg * (deg - 1)))
    if triples == 0:
        return 0.0
    closed = float(np.einsum("ij,jk,ki->", a, a, a))
    return closed / triples


def assortativity(net: DirectedNetwork) -> float:
    """Degree assortativity of the undirected projection."""
    a = np.triu(net.undirected_adjacency())
    if not a.any():
        raise UndefinedStatistic("assortativity needs at least one edge")
    deg = (a | a.T).sum(axis=1).astype(np.float64)
    i, j = np.nonzero(a)
    x = np.concatenate([deg[i], deg[j]])
    y = np.concatenate([deg[j], deg[i]])
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0:
        raise UndefinedStatistic("zero degree variance across edge endpoints")
    return float(xc @ yc) / den


def average_distance(net: DirectedNetwork) -> float:
    """Mean directed shortest-path length over reachable ordered pairs."""
    d = shortest_path(net.sparse(), directed=True, unweighted=True)
    np.fill_diagonal(d, np.inf)
    finite = np.isfinite(d)
    if not finite.any():
        raise UndefinedStatistic("no reachable pairs")
    return float(d[finite].mean())


def modularity(net: DirectedNetwork, partition) -> float:
    labels = np.asarray(getattr(partition, "labels", partition))
    if labels.shape != (net.n,):
        raise GraphError("partition must label every vertex")
    a = np.triu(net.undirected_adjacency())
    i, j = np.nonzero(a)
    m = len(i)
    if m == 0:
        return 0.0
    k = int(labels.max()) + 1
    deg = np.bincount(i, minlength=net.n) + np.bincount(j, minlength=net.n)
    within = np.bincount(labels[i][labels[i] == labels[j]], minlength=k)
    dsum = np.bincount(labels, weights=deg, minlength=k)
    return float(np.sum(within / m - (dsum / (2.0 * m)) ** 2))


def fast_greedy_communities(net: DirectedNetwork) -> dict:
    """Agglomerative modularity maximisation (Clauset-Newman-Moore).

    Starts from singletons, repeatedly merges the adjacent pair of
    communities with the largest modularity gain, and returns the partition
    seen at the best point of the merge sequence.
    """
    if net.n == 0:
        raise GraphError("empty network")
    a = np.triu(net.undirected_adjacency())
    ei, ej = np.nonzero(a)
    m = len(ei)
    if m == 0:
        return {"partition": Partition(np.arange(net.n)), "modularity": 0.0}
    deg = np.bincount(ei, minlength=net.n) + np.bincount(ej, minlength=net.n)
    frac = deg / (2.0 * m)
    # e[c][d]: fraction of edge ends joining c and d (each direction gets 1/2m)
    e: dict[int, dict[int, float]] = {c: {} for c in range(net.n)}
    for u, v in zip(ei.tolist(), ej.tolist()):
        e[u][v] = e[u].get(v, 0.0) + 1.0 / (2 * m)
        e[v][u] = e[v].get(u, 0.0) + 1.0 / (2 * m)
    acc = {c: float(frac[c]) for c in range(net.n)}
    members = {c: [c] for c in range(net.n)}
    q = -float(np.sum(frac ** 2))
    best_q, best_members = q, {c: list(v) for c, v in members.items()}
    while True:
        best = None
        for c, nb in e.items():
            for d, ecd in nb.items():
                if c < d:
                    gain = 2.0 * (ecd - acc[c] * acc[d])
                    if best is None or gain > best[0] + 1e-15:
                        best = (gain, c, d)
        if best is None:
            break
        gain, c, d = best
        # merge d into c
        for x, w in e.pop(d).items():
            if x == c:
                continue
            e[c][x] = e[c].get(x, 0.0) + w
            e[x][c] = e[x].get(c, 0.0) + w
            del e[x][d]
        e[c].pop(d, None)
        acc[c] += acc.pop(d)
        members[c].extend(members.pop(d))
        q += gain
        if q > best_q + 1e-12:
            best_q, best_members = q, {k: list(v) for k, v in members.items()}
    labels = np.empty(net.n, dtype=np.int64)
    for c, vs in best_members.items():
        labels[vs] = c
    part = Partition.from_any(labels)
    return {"partition": part, "modularity": modularity(net, part)}


STATISTICS = {
    "density": density,
    "transitivity": transitivity,
    "assortativity": assortativity,
    "average_distance": average_distance,
    "average_degree": lambda net: degree_stats(net)["mean"],
    "degree_sd": lambda net: degree_stats(net)["sd"],
    "modularity": lambda net: fast_greedy_communities(net)["modularity"],
}


def describe(net: DirectedNetwork) -> dict:
    """The seven descriptive statistics; undefined values become ``None``."""
    out = {}
    for name, fn in STATISTICS.items():
        try:
            out[name] = float(fn(net))
        except UndefinedStatistic:
            out[name] = None
    return out
