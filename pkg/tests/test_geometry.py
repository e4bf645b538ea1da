import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gpdex.errors import DesignError
from gpdex.geometry import (
    Anisotropy,
    CandidateGrid,
    as_design,
    fill_distance,
    mahalanobis_distance,
    read_design,
    separation,
    star_discrepancy,
    voronoi_sup_distances,
    write_design,
)

from _oracles import star_discrepancy_grid


def unit_points(n_min=1, n_max=12, d=2):
    return st.integers(n_min, n_max).flatmap(
        lambda n: arrays(np.float64, (n, d), elements=st.floats(0, 1, allow_subnormal=False)))


# --- distances --------------------------------------------------------------

def test_mahalanobis_examples():
    assert mahalanobis_distance([0, 0], [0.3, 0.4], Anisotropy.scalar(10, 2)) == pytest.approx(5.0)
    assert mahalanobis_distance([0, 0], [0.3, 0.4], Anisotropy.scalar(2, 2)) == pytest.approx(1.0)
    assert mahalanobis_distance([0, 0], [1, 1], Anisotropy.diagonal([1, 2])) == pytest.approx(np.sqrt(5))
    assert mahalanobis_distance([0, 0], [3, 4]) == pytest.approx(5.0)


def test_mahalanobis_dimension_mismatch():
    with pytest.raises(DesignError):
        mahalanobis_distance([0, 0], [0, 0, 0])
    with pytest.raises(DesignError):
        mahalanobis_distance([0, 0, 0], [0, 0, 1], Anisotropy.scalar(1, 2))


def test_anisotropy_rejects_singular():
    with pytest.raises(DesignError):
        Anisotropy([[1, 0], [0, 1e-14]])
    with pytest.raises(DesignError):
        Anisotropy([[1, 2, 3], [4, 5, 6]])


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2),
       st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_mahalanobis_symmetric_and_zero(u, v):
    th = Anisotropy([[2.0, 0.5], [0.0, 1.5]])
    assert mahalanobis_distance(u, v, th) == mahalanobis_distance(v, u, th)
    assert mahalanobis_distance(u, u, th) == 0.0


# --- grid ---------------------------------------------------------------------

def test_grid_contains_corners_and_size():
    g = CandidateGrid(2)
    assert g.resolution == 101 and len(g.points) == 101**2 == len(g)
    corners = {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
    assert corners <= {tuple(p) for p in g.points}
    g3 = CandidateGrid(3)
    assert g3.resolution == 21 and len(g3.points) == 21**3


# --- fill distance ------------------------------------------------------------

def test_fill_distance_examples():
    assert fill_distance([[0.5, 0.5]]) == pytest.approx(np.sqrt(0.5))
    corners = [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert fill_distance(corners) == pytest.approx(np.sqrt(0.5))


def test_fill_distance_empty_design():
    with pytest.raises(DesignError):
        fill_distance(np.zeros((0, 2)))


def test_fill_distance_grid_bias_is_bounded():
    # coarse grid is biased low by at most mesh * ||Theta||
    rng = np.random.default_rng(3)
    x = rng.random((7, 2))
    fine = fill_distance(x, 2.0, CandidateGrid(2, 401))
    coarse = fill_distance(x, 2.0, CandidateGrid(2, 41))
    assert coarse <= fine + 1e-12
    assert fine - coarse <= CandidateGrid(2, 41).mesh * 2.0 * np.sqrt(2)


@settings(max_examples=30, deadline=None)
@given(unit_points(1, 10), arrays(np.float64, (1, 2), elements=st.floats(0, 1)))
def test_fill_distance_monotone_under_adding(x, new):
    grid = CandidateGrid(2, 31)
    assert fill_distance(np.vstack([x, new]), None, grid) <= fill_distance(x, None, grid)


@settings(max_examples=30, deadline=None)
@given(unit_points(2, 10), st.floats(0.1, 20))
def test_fill_and_separation_scale_with_theta(x, c):
    grid = CandidateGrid(2, 21)
    th = Anisotropy([[1.0, 0.3], [0.0, 2.0]])
    assert fill_distance(x, th.scaled(c), grid) == pytest.approx(c * fill_distance(x, th, grid), rel=1e-12, abs=1e-300)
    assert separation(x, th.scaled(c))[1] == pytest.approx(c * separation(x, th)[1], rel=1e-12, abs=1e-300)


# --- separation ---------------------------------------------------------------

def test_separation_examples():
    qj, q = separation([[0.1, 0.1], [0.1, 0.6]], 2.0)
    assert np.allclose(qj, 0.5) and q == pytest.approx(0.5)
    s = 0.4
    tri = [[0.1, 0.1], [0.1 + s, 0.1], [0.1 + s / 2, 0.1 + s * np.sqrt(3) / 2]]
    qj, q = separation(tri)
    assert np.allclose(qj, s / 2)
    qj, q = separation([[0.2, 0.3], [0.2, 0.3], [0.9, 0.9]])
    assert q == 0.0


def test_separation_needs_two_points():
    with pytest.raises(DesignError):
        separation([[0.5, 0.5]])


@settings(max_examples=30, deadline=None)
@given(unit_points(2, 10), arrays(np.float64, (1, 2), elements=st.floats(0, 1)))
def test_separation_monotone_under_adding(x, new):
    assert separation(np.vstack([x, new]))[1] <= separation(x)[1]


# --- Voronoi cells ------------------------------------------------------------

def test_voronoi_single_point_equals_fill():
    x = [[0.3, 0.8]]
    v = voronoi_sup_distances(x, Anisotropy.scalar(2, 2))
    assert v.single[0] == pytest.approx(fill_distance(x, 2.0))


def test_voronoi_mirror_symmetry():
    v = voronoi_sup_distances([[0.2, 0.4], [0.8, 0.4]])
    assert v.single[0] == pytest.approx(v.single[1], rel=1e-12)


def test_voronoi_ties_go_to_lowest_index():
    v = voronoi_sup_distances([[0.5, 0.5], [0.5, 0.5]])
    assert np.all(v.assignment == 0)
    # closed cells: duplicates share the same cell
    assert v.single[0] == v.single[1] == pytest.approx(np.sqrt(0.5))


@settings(max_examples=20, deadline=None)
@given(unit_points(1, 10))
def test_voronoi_max_equals_fill(x):
    grid = CandidateGrid(2, 31)
    th = Anisotropy([[3.0, 0.0], [1.0, 1.0]])
    assert voronoi_sup_distances(x, th, grid).single.max() == fill_distance(x, th, grid)


def test_union_cells_with_proportional_thetas():
    rng = np.random.default_rng(11)
    grid = CandidateGrid(2, 61)
    for _ in range(10):
        x = rng.random((5, 2))
        t1 = Anisotropy([[1.5, 0.2], [0.0, 0.7]])
        t2 = t1.scaled(4.0)
        both = voronoi_sup_distances(x, [t1, t2], grid)
        one1 = voronoi_sup_distances(x, t1, grid)
        one2 = voronoi_sup_distances(x, t2, grid)
        assert np.allclose(both.sup[0], one1.single, rtol=1e-12)
        assert np.allclose(both.sup[1], one2.single, rtol=1e-12)
        assert np.allclose(both.euclid, one1.euclid, rtol=1e-12)


def test_union_cells_dominate_single_cells():
    rng = np.random.default_rng(5)
    x = rng.random((6, 2))
    t1, t2 = Anisotropy([[1.0, 0.0], [0.0, 3.0]]), Anisotropy([[5.0, 0.0], [0.0, 1.0]])
    both = voronoi_sup_distances(x, [t1, t2], CandidateGrid(2, 41))
    one = voronoi_sup_distances(x, t1, CandidateGrid(2, 41))
    assert np.all(both.sup[0] >= one.single - 1e-15)


# --- star discrepancy ---------------------------------------------------------

def test_star_discrepancy_examples():
    assert star_discrepancy([[0.5, 0.5]]) == pytest.approx(0.75)
    assert star_discrepancy([[0.0, 0.0]]) == pytest.approx(1.0)
    assert star_discrepancy_grid([[0.5, 0.5]]) == pytest.approx(0.75)
    assert star_discrepancy_grid([[0.0, 0.0]]) == pytest.approx(1.0)


def test_star_discrepancy_diagonal_midpoints_vs_oracle():
    n = 8
    t = (np.arange(n) + 0.5) / n
    x = np.column_stack([t, t])
    assert star_discrepancy(x) == pytest.approx(star_discrepancy_grid(x), abs=1e-3)


def test_star_discrepancy_one_dimension_closed_form():
    # in d = 1 the midpoint sequence has D* = 1/(2n)
    n = 10
    x = ((np.arange(n) + 0.5) / n)[:, None]
    assert star_discrepancy(x) == pytest.approx(1 / (2 * n))


def test_star_discrepancy_rejects_out_of_box():
    with pytest.raises(DesignError):
        star_discrepancy([[0.5, 1.2]])


@settings(max_examples=15, deadline=None)
@given(unit_points(1, 12))
def test_star_discrepancy_matches_grid_oracle(x):
    d_exact = star_discrepancy(x)
    assert 0.0 <= d_exact <= 1.0
    assert abs(d_exact - star_discrepancy_grid(x)) <= 2 / 2001


# --- I/O ----------------------------------------------------------------------

def test_design_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.random((9, 3))
    path = tmp_path / "d.csv"
    write_design(path, x)
    assert path.read_text().splitlines()[0] == "x1,x2,x3"
    assert np.array_equal(read_design(path), x)


def test_design_csv_without_header(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("0.1,0.2\n0.3,0.4\n")
    assert read_design(path).shape == (2, 2)


def test_as_design_validates():
    with pytest.raises(DesignError):
        as_design([0.1, 0.2])
    with pytest.raises(DesignError):
        as_design([[np.nan, 0.2]])
    with pytest.raises(DesignError):
        as_design([[-0.1, 0.2]])
    assert as_design([[-0.1, 0.2]], check_box=False).shape == (1, 2)
