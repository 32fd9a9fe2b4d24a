import itertools

import numpy as np
import pytest
from scipy.sparse.csgraph import floyd_warshall

from geopriv import build_grid, build_spanner


def test_collinear_three_delta_1_5():
    sp = build_spanner(build_grid(rows=1, cols=3), 1.5)
    assert {(a, b) for a, b, _ in sp.edges} == {(0, 1), (1, 2)}


def test_collinear_three_delta_1_keeps_exact_path():
    sp = build_spanner(build_grid(rows=1, cols=3), 1.0)
    assert {(a, b) for a, b, _ in sp.edges} == {(0, 1), (1, 2)}


def test_delta_one_is_exact_metric():
    g = build_grid(rows=3, cols=3)
    sp = build_spanner(g, 1.0)
    np.testing.assert_allclose(sp.path_distances(), g.distances, atol=1e-12)
    # diagonal and knight moves have no exact detour on the lattice
    pairs = {(a, b) for a, b, _ in sp.edges}
    assert (0, 4) in pairs and (0, 5) in pairs


def test_single_region():
    sp = build_spanner(build_grid(rows=1, cols=1), 1.09)
    assert sp.edges == () and sp.is_connected()


def test_rejects_small_dilation():
    with pytest.raises(ValueError):
        build_spanner(build_grid(rows=2, cols=2), 0.99)


def test_edge_weights_are_distances():
    g = build_grid(rows=4, cols=3)
    for a, b, w in build_spanner(g, 1.2).edges:
        assert a < b and w == g.distances[a, b]


def test_path_distances_against_floyd_warshall():
    g = build_grid(rows=3, cols=4)
    sp = build_spanner(g, 1.09)
    w = np.full((g.n_regions, g.n_regions), np.inf)
    for a, b, d in sp.edges:
        w[a, b] = w[b, a] = d
    np.fill_diagonal(w, 0)
    np.testing.assert_allclose(sp.path_distances(), floyd_warshall(w), atol=1e-12)


@pytest.mark.parametrize("rows,cols", [(2, 5), (4, 4), (6, 6), (8, 8), (3, 7)])
@pytest.mark.parametrize("delta", [1.05, 1.09, 1.5])
def test_dilation_bound(rows, cols, delta):
    g = build_grid(rows=rows, cols=cols)
    sp = build_spanner(g, delta)
    dg = sp.path_distances()
    d = g.distances
    assert sp.is_connected()
    assert np.all(dg >= d - 1e-12)
    assert np.all(dg <= delta * d + 1e-9)


def test_greedy_minimality_on_small_grid():
    # removing any edge must break the dilation bound for that edge's own pair
    g = build_grid(rows=3, cols=3)
    sp = build_spanner(g, 1.09)
    for drop in range(sp.n_edges):
        rest = [e for i, e in enumerate(sp.edges) if i != drop]
        w = np.full((9, 9), np.inf)
        for a, b, d in rest:
            w[a, b] = w[b, a] = d
        np.fill_diagonal(w, 0)
        a, b, d = sp.edges[drop]
        assert floyd_warshall(w)[a, b] > 1.09 * d


def test_fewer_edges_than_complete_graph():
    g = build_grid(rows=6, cols=6)
    sp = build_spanner(g, 1.09)
    assert sp.n_edges < len(list(itertools.combinations(range(36), 2)))
