import numpy as np
import pytest

from gpdex.designs import (
    DesignFamily,
    MaxSeparation,
    MinFill,
    generate,
    harmonic_mean_distance,
    min_distance,
    scale_to_objective,
    triangular_lattice,
)
from gpdex.errors import DesignError
from gpdex.geometry import CandidateGrid, fill_distance, separation


def strata_ok(x):
    n = len(x)
    return all(np.array_equal(np.sort(np.floor(x[:, k] * n)), np.arange(n)) for k in range(x.shape[1]))


@pytest.mark.parametrize("variant", ["random-lhs", "maximin-lhs", "s-optimal-lhs"])
def test_lhs_marginal_strata(variant):
    for seed in range(3):
        x = generate(DesignFamily(variant, 10, 2, seed))
        assert strata_ok(x)
    assert strata_ok(generate(DesignFamily(variant, 7, 3, 1)))


def test_maximin_improves_on_random_lhs():
    for seed in range(5):
        r = generate(DesignFamily("random-lhs", 15, 2, seed))
        m = generate(DesignFamily("maximin-lhs", 15, 2, seed))
        assert min_distance(m) >= min_distance(r)


def test_s_optimal_improves_harmonic_mean():
    for seed in range(3):
        r = generate(DesignFamily("random-lhs", 15, 2, seed))
        s = generate(DesignFamily("s-optimal-lhs", 15, 2, seed))
        assert harmonic_mean_distance(s) >= harmonic_mean_distance(r)


@pytest.mark.parametrize("variant", ["lattice", "random-lhs", "maximin-lhs", "s-optimal-lhs", "uniform"])
def test_generation_is_deterministic_and_in_box(variant):
    a = generate(DesignFamily(variant, 23, 2, 42))
    b = generate(DesignFamily(variant, 23, 2, 42))
    assert np.array_equal(a, b) and a.shape == (23, 2)
    assert a.min() >= 0 and a.max() <= 1


def test_seeds_differ():
    a = generate(DesignFamily("uniform", 5, 2, 1))
    b = generate(DesignFamily("uniform", 5, 2, 2))
    assert not np.array_equal(a, b)


def test_family_validation():
    with pytest.raises(DesignError):
        DesignFamily("lattice", 10, 3)
    with pytest.raises(DesignError):
        DesignFamily("lattice", 10**6)
    with pytest.raises(DesignError):
        DesignFamily("sobol", 10)
    with pytest.raises(DesignError):
        DesignFamily("uniform", 0)


def test_lattice_is_equilateral():
    x = triangular_lattice(23)
    assert len(x) == 23 and len(np.unique(x, axis=0)) == 23
    qj, q = separation(x)
    # every point has a nearest neighbour at the lattice spacing
    assert np.allclose(qj, q, rtol=1e-9)


def test_lattice_fill_beats_random():
    lat = fill_distance(generate(DesignFamily("lattice", 23)))
    rnd = [fill_distance(generate(DesignFamily("uniform", 23, 2, s))) for s in range(50)]
    assert lat < np.median(rnd)


def test_max_separation_scales_to_boundary():
    x = triangular_lattice(12)
    x = 0.5 + 0.3 * (x - 0.5)
    y = scale_to_objective(x, MaxSeparation())
    assert y.min() == pytest.approx(0.0, abs=1e-6) or y.max() == pytest.approx(1.0, abs=1e-6)
    assert y.min() >= 0 and y.max() <= 1


def test_min_fill_matches_fine_scan():
    grid = CandidateGrid(2, 41)
    obj = MinFill(None, grid)
    x = triangular_lattice(10)
    y = scale_to_objective(x, obj)
    # independent 1001-point scan over the same one-parameter family
    xc = x + (0.5 - 0.5 * (x.min(axis=0) + x.max(axis=0)))
    dev = xc - 0.5
    s_max = np.min(np.where(dev != 0, 0.5 / np.abs(np.where(dev == 0, 1, dev)), np.inf))
    scan = min(obj(np.clip(0.5 + s * dev, 0, 1)) for s in np.linspace(s_max / 1001, s_max, 1001))
    assert obj(y) <= scan + 1e-9
    assert y.min() >= 0 and y.max() <= 1
