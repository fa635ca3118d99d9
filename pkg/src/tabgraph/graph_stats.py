"""Topology statistics of a latent graph: label homophily, triangles, assortativity, centralities, components."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .latent_graph import LatentGraph


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int):
        super().__init__(f"eigenvector centrality did not converge in {iterations} iterations")
        self.iterations = iterations


@dataclass(frozen=True)
class GraphStats:
    nodes: int
    edges: int
    homophily: float
    heterophily: float
    transitivity: float
    assortativity: float | None  # None when a degree marginal has zero variance
    avg_clustering: float
    avg_degree_centrality: float
    avg_eigenvector_centrality: float
    avg_closeness_centrality: float
    n_components: int
    diameter: int | None = None
    avg_shortest_path: float | None = None

    def report(self) -> dict:
        d = {
            "nodes": self.nodes,
            "edges": self.edges,
            "homophily": self.homophily,
            "heterophily": self.heterophily,
            "transitivity": self.transitivity,
            "assortativity": self.assortativity,
            "global_clustering_coefficient": self.avg_clustering,
            "avg_degree_centrality": self.avg_degree_centrality,
            "avg_eigenvector_centrality": self.avg_eigenvector_centrality,
            "avg_closeness_centrality": self.avg_closeness_centrality,
            "num_connected_components": self.n_components,
        }
        if self.diameter is not None:
            d["diameter"] = self.diameter
            d["avg_shortest_path"] = self.avg_shortest_path
        return d


def homophily(g: LatentGraph, labels) -> tuple[float, float]:
    """Edge homophily and its complement."""
    if g.n_edges == 0:
        raise ValueError("homophily is undefined on an edgeless graph")
    labels = np.asarray(labels)
    same = int(np.count_nonzero(labels[g.edges[:, 0]] == labels[g.edges[:, 1]]))
    h = same / g.n_edges
    return h, 1.0 - h


def triangles_per_node(g: LatentGraph) -> np.ndarray:
    a = g.adjacency()
    return np.rint(np.einsum("ij,ji->i", a @ a, a) / 2.0).astype(np.int64)


def transitivity(g: LatentGraph) -> float:
    deg = g.degrees()
    triples = int(np.sum(deg * (deg - 1) // 2))
    if triples == 0:
        return 0.0
    # each triangle is counted once at each of its three corners
    return float(triangles_per_node(g).sum() / triples)


def degree_assortativity(g: LatentGraph) -> float | None:
    """Pearson correlation of endpoint degrees over both orientations of every edge."""
    if g.n_edges == 0:
        return None
    deg = g.degrees().astype(np.float64)
    x = np.concatenate([deg[g.edges[:, 0]], deg[g.edges[:, 1]]])
    y = np.concatenate([deg[g.edges[:, 1]], deg[g.edges[:, 0]]])
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx <= 1e-12 * x.size or syy <= 1e-12 * y.size:
        return None
    return float((xc @ yc) / np.sqrt(sxx * syy))


def local_clustering(g: LatentGraph) -> np.ndarray:
    deg = g.degrees()
    pairs = deg * (deg - 1) / 2.0
    out = np.zeros(g.n)
    ok = deg >= 2
    out[ok] = triangles_per_node(g)[ok] / pairs[ok]
    return out


def avg_clustering(g: LatentGraph) -> float:
    return float(local_clustering(g).mean())


def degree_centrality(g: LatentGraph) -> np.ndarray:
    if g.n < 2:
        raise ValueError("degree centrality needs n >= 2")
    return g.degrees() / (g.n - 1.0)


def eigenvector_centrality(g: LatentGraph, tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """Dominant adjacency eigenvector, L2-normalized and non-negative.

    Iterates on A + I, which shares A's eigenvectors but has a unique
    dominant eigenvalue on bipartite graphs. Each step squares the current
    power of the matrix before applying it to the all-ones start vector, so
    small spectral gaps need only logarithmically many steps. When the top
    eigenvalue is repeated (equal disconnected components) the result is
    the projection of the start vector onto that eigenspace. An edgeless
    graph scores 0 everywhere.
    """
    if g.n_edges == 0:
        return np.zeros(g.n)
    a = g.adjacency()
    m = a + np.eye(g.n)
    x = np.ones(g.n) / np.sqrt(g.n)
    for _ in range(max_iter):
        y = m @ x
        y /= np.linalg.norm(y)
        if np.abs(y - x).sum() < g.n * tol:
            # polish with a few plain steps
            for _ in range(3):
                y = a @ y + y
                y /= np.linalg.norm(y)
            return np.abs(y)
        x = y
        m = m @ m
        m /= np.abs(m).max()
    raise ConvergenceError(max_iter)


def distance_matrix(g: LatentGraph) -> np.ndarray:
    """All-pairs hop distances by BFS; unreachable pairs are ``inf``."""
    i, j = g.edges.T if g.n_edges else (np.empty(0, int), np.empty(0, int))
    a = csr_matrix((np.ones(2 * g.n_edges), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(g.n, g.n))
    return shortest_path(a, method="D", directed=False, unweighted=True)


def closeness_centrality(g: LatentGraph, dist: np.ndarray | None = None) -> np.ndarray:
    """Within-component closeness scaled by the reachable share of the graph; isolated nodes score 0."""
    if g.n < 2:
        raise ValueError("closeness needs n >= 2")
    dist = distance_matrix(g) if dist is None else dist
    finite = np.isfinite(dist)
    reach = finite.sum(axis=1) - 1
    total = np.where(finite, dist, 0.0).sum(axis=1)
    out = np.zeros(g.n)
    ok = reach > 0
    out[ok] = (reach[ok] / (g.n - 1.0)) * (reach[ok] / total[ok])
    return out


def centralities(g: LatentGraph) -> tuple[float, float, float]:
    return (float(degree_centrality(g).mean()),
            float(eigenvector_centrality(g).mean()),
            float(closeness_centrality(g).mean()))


def connected_components(g: LatentGraph) -> tuple[int, np.ndarray]:
    """Union-find over the edge list; component ids are numbered by smallest member."""
    parent = list(range(g.n))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for u, v in g.edges.tolist():
        ru, rv = find(u), find(v)
        if ru != rv:
            if ru < rv:
                parent[rv] = ru
            else:
                parent[ru] = rv
    roots = [find(v) for v in range(g.n)]
    ids: dict[int, int] = {}
    comp = np.array([ids.setdefault(r, len(ids)) for r in roots], dtype=np.int64)
    return len(ids), comp


def diameter_and_avg_path(g: LatentGraph, dist: np.ndarray | None = None) -> tuple[int, float]:
    if g.n < 2:
        raise ValueError("path statistics need n >= 2")
    dist = distance_matrix(g) if dist is None else dist
    if not np.all(np.isfinite(dist)):
        raise ValueError("graph is disconnected; diameter undefined")
    upper = dist[np.triu_indices(g.n, k=1)]
    return int(upper.max()), float(upper.mean())


def graph_stats(g: LatentGraph, labels) -> GraphStats:
    hom, het = homophily(g, labels)
    dist = distance_matrix(g)
    n_comp, _ = connected_components(g)
    diameter = avg_path = None
    if n_comp == 1:
        diameter, avg_path = diameter_and_avg_path(g, dist)
    return GraphStats(
        nodes=g.n,
        edges=g.n_edges,
        homophily=hom,
        heterophily=het,
        transitivity=transitivity(g),
        assortativity=degree_assortativity(g),
        avg_clustering=avg_clustering(g),
        avg_degree_centrality=float(degree_centrality(g).mean()),
        avg_eigenvector_centrality=float(eigenvector_centrality(g).mean()),
        avg_closeness_centrality=float(closeness_centrality(g, dist).mean()),
        n_components=n_comp,
        diameter=diameter,
        avg_shortest_path=avg_path,
    )


def stats_report(g: LatentGraph, labels) -> str:
    return json.dumps(graph_stats(g, labels).report(), indent=2) + "\n"
