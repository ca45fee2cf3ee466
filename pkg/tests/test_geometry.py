import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gmrf_nng.geometry import (
    GeometryError,
    PointSet,
    build_nng,
    geometry_statistics,
    is_forest,
    nearest_neighbors_brute,
    nearest_neighbors_grid,
    omega,
    sample_binomial,
    sample_poisson,
    write_graph,
)


def test_single_point_lies_in_unit_square():
    ps = sample_binomial(1, 1.0, seed=7)
    assert ps.n == 1
    assert ps.side == pytest.approx(1.0)
    assert np.all(np.abs(ps.xy) <= 0.5)


def test_binomial_side_and_determinism():
    a = sample_binomial(10_000, 1.0, seed=3)
    b = sample_binomial(10_000, 1.0, seed=3)
    assert a.side == pytest.approx(100.0)
    np.testing.assert_array_equal(a.xy, b.xy)
    assert not np.array_equal(a.xy, sample_binomial(10_000, 1.0, seed=4).xy)


def test_binomial_uniformity_chi_square():
    ps = sample_binomial(10_000, 1.0, seed=11)
    counts, _, _ = np.histogram2d(ps.xy[:, 0], ps.xy[:, 1], bins=10, range=[[-50, 50], [-50, 50]])
    # each 10 x 10 cell has area 100, so expected count 100
    assert counts.mean() == pytest.approx(100.0)
    assert stats.chisquare(counts.ravel()).pvalue > 1e-3


@pytest.mark.parametrize("bad", [(0, 1.0), (5, 0.0), (5, -1.0), (2.5, 1.0)])
def test_binomial_rejects_bad_arguments(bad):
    with pytest.raises(GeometryError):
        sample_binomial(*bad, seed=0)


def test_poisson_count_bounds():
    counts = np.array([sample_poisson(1e5, 1.0, seed=s).n for s in range(20)])
    assert np.all(np.abs(counts - 1e5) < 4 * math.sqrt(1e5))


def test_poisson_unit_area():
    ps = sample_poisson(5, 5.0, seed=1)
    assert ps.area == pytest.approx(1.0)
    counts = [sample_poisson(5, 5.0, seed=s).n for s in range(2000)]
    assert np.mean(counts) == pytest.approx(5.0, abs=0.2)
    assert np.var(counts) == pytest.approx(5.0, rel=0.15)


def test_poisson_conditional_uniformity():
    ps = sample_poisson(10_000, 1.0, seed=5)
    h = ps.side / 2
    counts, _, _ = np.histogram2d(ps.xy[:, 0], ps.xy[:, 1], bins=8, range=[[-h, h], [-h, h]])
    assert stats.chisquare(counts.ravel()).pvalue > 1e-3


@pytest.mark.parametrize("bad", [(0.5, 1.0), (10, 0.0), (float("nan"), 1.0)])
def test_poisson_rejects_bad_arguments(bad):
    with pytest.raises(GeometryError):
        sample_poisson(*bad, seed=0)


def test_pointset_rejects_points_outside_square():
    with pytest.raises(GeometryError):
        PointSet(np.array([[0.0, 0.0], [2.0, 0.0]]), 2.0, 1.0, "binomial", 0)


def test_two_points():
    nng = build_nng(np.array([[0.0, 0.0], [0.3, 0.4]]))
    assert nng.undirected_edges == [(0, 1, pytest.approx(0.5))]
    np.testing.assert_array_equal(nng.biroot_pairs, [[0, 1]])


def test_three_collinear_points():
    nng = build_nng(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]))
    np.testing.assert_array_equal(nng.nn_index, [1, 0, 1])
    assert nng.undirected_edges == [(0, 1, 1.0), (1, 2, 2.0)]
    np.testing.assert_array_equal(nng.biroot_pairs, [[0, 1]])
    np.testing.assert_array_equal(nng.degree, [1, 2, 1])


def test_tie_breaks_to_smallest_index():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    assert nearest_neighbors_brute(xy)[0][0] == 1
    assert nearest_neighbors_grid(xy, cell=0.7)[0][0] == 1


def test_build_rejects_degenerate_input():
    with pytest.raises(GeometryError):
        build_nng(np.array([[0.0, 0.0]]))
    with pytest.raises(GeometryError):
        build_nng(np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]))


def _check_invariants(nng):
    assert is_forest(nng.n, nng.edge_i, nng.edge_j)
    assert nng.degree.max() <= 6
    assert nng.n_edges == nng.n - len(nng.biroot_pairs)
    assert np.all(nng.edge_i < nng.edge_j)
    assert np.all(nng.edge_length > 0)
    # one biroot per component
    per_comp = np.bincount(nng.component_id[nng.biroot_pairs[:, 0]], minlength=nng.n_components)
    np.testing.assert_array_equal(per_comp, 1)
    i, j = nng.biroot_pairs.T
    assert np.all(nng.nn_index[i] == j) and np.all(nng.nn_index[j] == i)
    mutual = np.flatnonzero(nng.nn_index[nng.nn_index] == np.arange(nng.n))
    assert len(mutual) == 2 * len(nng.biroot_pairs)
    xy = nng.points.xy if nng.points is not None else None
    if xy is not None:
        np.testing.assert_allclose(nng.edge_length, np.hypot(*(xy[nng.edge_i] - xy[nng.edge_j]).T), rtol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 50, 129, 500, 2000])
def test_grid_matches_brute_force(n):
    ps = sample_binomial(n, 1.0, seed=n)
    nn_grid, d_grid = nearest_neighbors_grid(ps.xy, 1.0)
    nn_brute, d_brute = nearest_neighbors_brute(ps.xy)
    np.testing.assert_array_equal(nn_grid, nn_brute)
    np.testing.assert_allclose(d_grid, d_brute, rtol=0, atol=0)
    _check_invariants(build_nng(ps))


def test_grid_matches_brute_force_clustered_and_dense():
    gen = np.random.default_rng(0)
    xy = np.r_[gen.normal(0, 0.01, (300, 2)), gen.uniform(-5, 5, (200, 2))]
    np.testing.assert_array_equal(nearest_neighbors_grid(xy, 0.5)[0], nearest_neighbors_brute(xy)[0])


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(2, 300),
    shift=st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
    scale=st.floats(0.01, 100),
)
def test_translation_and_scale_invariance(seed, n, shift, scale):
    xy = sample_binomial(n, 1.0, seed).xy
    base = build_nng(xy)
    _check_invariants(base)
    moved = build_nng(xy + np.array(shift))
    np.testing.assert_array_equal(moved.nn_index, base.nn_index)
    np.testing.assert_allclose(moved.edge_length, base.edge_length, rtol=1e-9, atol=1e-9)
    scaled = build_nng(xy * scale)
    np.testing.assert_array_equal(scaled.nn_index, base.nn_index)
    np.testing.assert_allclose(scaled.edge_length, scale * base.edge_length, rtol=1e-12)


def test_omega_value():
    assert omega() == pytest.approx(5.054815608570829, rel=1e-15)
    assert abs(omega() - 5.06) < 0.01


def test_geometry_statistics_large_poisson():
    st_ = geometry_statistics(build_nng(sample_poisson(1e5, 1.0, seed=2)))
    assert st_.biroot_fraction == pytest.approx(math.pi / omega(), abs=0.01)
    assert st_.edges_per_node == pytest.approx(1 - math.pi / (2 * omega()), abs=0.01)
    assert st_.ks_distance < 0.01
    z_half = math.sqrt(math.log(2) / math.pi)
    assert st_.nn_tail(z_half) == pytest.approx(0.5, abs=0.01)


def test_csv_exports(tmp_path):
    nng = build_nng(sample_binomial(30, 2.0, seed=1))
    pts, edges = write_graph(nng, tmp_path / "g")
    with open(pts) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["id", "x", "y"]
    assert len(rows) == 31
    np.testing.assert_allclose(np.array(rows[1:], dtype=float)[:, 1:], nng.points.xy, rtol=1e-11)
    with open(edges) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["i", "j", "length", "is_biroot"]
    assert len(rows) - 1 == nng.n_edges
    assert sum(int(r[3]) for r in rows[1:]) == len(nng.biroot_pairs)


def test_nng_arrays_are_read_only():
    nng = build_nng(sample_binomial(10, 1.0, seed=0))
    with pytest.raises(ValueError):
        nng.nn_index[0] = 3
