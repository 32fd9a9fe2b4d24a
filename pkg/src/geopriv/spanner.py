"""Greedy geometric spanners over grid regions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid

# relative slack when comparing path lengths, so collinear chains built from
# rounded square roots still count as exact shortcuts
_REL = 1e-12


@dataclass(frozen=True)
class SpannerGraph:
    """Weighted undirected graph whose path metric stretches ``d`` by at most ``dilation``."""

    n_regions: int
    edges: tuple = field(repr=False)
    dilation: float

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def path_distances(self) -> np.ndarray:
        """All-pairs shortest-path distances (``inf`` between components)."""
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import shortest_path

        n = self.n_regions
        if not self.edges:
            d = np.full((n, n), np.inf)
            np.fill_diagonal(d, 0.0)
            return d
        a, b, w = map(np.array, zip(*self.edges))
        g = coo_matrix((w, (a, b)), shape=(n, n)).tocsr()
        return shortest_path(g, directed=False)

    def is_connected(self) -> bool:
        return bool(np.all(np.isfinite(self.path_distances())))


def build_spanner(grid: Grid, delta: float) -> SpannerGraph:
    """Greedy ``delta``-spanner of the grid's region centers.

    Pairs are visited by nondecreasing distance, ties broken by the index
    pair; an edge is added only when the current graph distance exceeds
    ``delta * d``. All-pairs path lengths are kept up to date on each
    insertion, O(n^2) per edge.
    """
    if not delta >= 1:
        raise ValueError(f"dilation must be >= 1, got {delta}")
    d = grid.distances
    n = grid.n_regions
    a, b = np.triu_indices(n, k=1)
    order = np.lexsort((b, a, d[a, b]))
    dg = np.full((n, n), np.inf)
    np.fill_diagonal(dg, 0.0)
    edges = []
    for k in order:
        i, j = int(a[k]), int(b[k])
        w = float(d[i, j])
        if dg[i, j] <= delta * w * (1 + _REL):
            continue
        edges.append((i, j, w))
        via = np.minimum(dg[:, i, None] + w + dg[None, j, :], dg[:, j, None] + w + dg[None, i, :])
        np.minimum(dg, via, out=dg)
    return SpannerGraph(n, tuple(edges), float(delta))
