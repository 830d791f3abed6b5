import numpy as np
import pytest

from fracmap.grid import (
    BallHierarchy,
    ScalarField,
    VectorField,
    ball_mask,
    ball_mean,
    cutoff_ring,
    cutoff_smooth,
    make_grid,
    pairwise_dist,
    site_coords,
    torus_dist,
)

TWO_PI = 2.0 * np.pi


def test_make_grid_rejects_bad_inputs():
    with pytest.raises(ValueError):
        make_grid(3, 16, 1.0)
    with pytest.raises(ValueError):
        make_grid(1, 24, 1.0)  # not a power of two
    with pytest.raises(ValueError):
        make_grid(1, 2, 1.0)  # below the minimum
    with pytest.raises(ValueError):
        make_grid(1, 16, 0.0)


def test_grid_derived_quantities():
    g = make_grid(2, 8, 4.0)
    assert g.h == 0.5
    assert g.n_sites == 64


def test_site_coords_lexicographic():
    g = make_grid(1, 8, TWO_PI)
    x = site_coords(g)
    np.testing.assert_allclose(x[:, 0], np.arange(8) * g.h)
    g2 = make_grid(2, 4, 1.0)
    x2 = site_coords(g2)
    # first axis varies slowest
    np.testing.assert_allclose(x2[:4, 0], 0.0)
    np.testing.assert_allclose(x2[:4, 1], np.arange(4) * 0.25)
    np.testing.assert_allclose(x2[4:8, 0], 0.25)


def test_torus_dist_minimum_image():
    # wrap-around: sites at 0 and L-h are one spacing apart
    g = make_grid(1, 16, TWO_PI)
    a = np.array([[0.0]])
    b = np.array([[TWO_PI - g.h]])
    np.testing.assert_allclose(torus_dist(a, b, TWO_PI), [g.h], rtol=1e-14)
    # 2d: independent min-image per axis, then Euclidean
    d = torus_dist(np.array([[0.0, 0.0]]), np.array([[3.9, 0.3]]), 4.0)
    np.testing.assert_allclose(d, [np.hypot(0.1, 0.3)], rtol=1e-14)


def test_pairwise_dist_matches_direct_loop():
    g = make_grid(2, 4, 1.0)
    x = site_coords(g)
    D = pairwise_dist(g)
    for i in range(g.n_sites):
        for j in range(g.n_sites):
            diff = np.abs(x[i] - x[j])
            diff = np.minimum(diff, 1.0 - diff)
            assert abs(D[i, j] - np.hypot(*diff)) < 1e-14


def test_field_shape_validation():
    g = make_grid(1, 8, 1.0)
    with pytest.raises(ValueError):
        ScalarField(grid=g, samples=np.zeros(7))
    with pytest.raises(ValueError):
        VectorField(grid=g, components=2, samples=np.zeros((8, 3)))
    with pytest.raises(ValueError):
        VectorField(grid=g, components=2, samples=np.full((8, 2), 0.9), unit_constrained=True)


def test_ball_mask_closed_ball_includes_boundary():
    g = make_grid(1, 16, TWO_PI)
    h = BallHierarchy(grid=g, center=(0.0,), base_radius=2 * g.h, level_min=0, level_max=1)
    m = ball_mask(h, 0)
    # sites at distance exactly 2h are in; the next ones out are not
    d = h.center_dist()
    assert m[np.isclose(d, 2 * g.h)].all()
    assert not m[np.isclose(d, 3 * g.h)].any()


def test_ball_mean_exact_for_constants():
    g = make_grid(2, 8, 1.0)
    hier = BallHierarchy(grid=g, center=(0.5, 0.5), base_radius=0.2, level_min=0, level_max=1)
    f = ScalarField(grid=g, samples=np.full(g.n_sites, -7.125))
    assert ball_mean(f, hier, 0) == -7.125
    assert ball_mean(f, hier, 1) == -7.125


def test_ball_mean_against_direct_average():
    g = make_grid(1, 32, TWO_PI)
    hier = BallHierarchy(grid=g, center=(np.pi,), base_radius=0.7, level_min=0, level_max=0)
    x = site_coords(g)[:, 0]
    f = ScalarField(grid=g, samples=np.cos(x))
    m = ball_mask(hier, 0)
    np.testing.assert_allclose(ball_mean(f, hier, 0), np.cos(x)[m].mean(), rtol=1e-14)


def test_ball_mean_empty_ball_errors():
    g = make_grid(1, 8, TWO_PI)
    # center between sites, radius smaller than half a spacing: no sites inside
    hier = BallHierarchy(
        grid=g, center=(g.h / 2,), base_radius=g.h / 8, level_min=0, level_max=0
    )
    f = ScalarField(grid=g, samples=np.zeros(g.n_sites))
    with pytest.raises(ValueError):
        ball_mean(f, hier, 0)


def test_hierarchy_validation():
    g = make_grid(1, 16, TWO_PI)
    with pytest.raises(ValueError):
        BallHierarchy(grid=g, center=(0.0, 0.0), base_radius=0.1, level_min=0, level_max=1)
    with pytest.raises(ValueError):
        BallHierarchy(grid=g, center=(0.0,), base_radius=-0.1, level_min=0, level_max=1)
    with pytest.raises(ValueError):
        BallHierarchy(grid=g, center=(0.0,), base_radius=0.1, level_min=2, level_max=1)
    hier = BallHierarchy(grid=g, center=(0.0,), base_radius=0.1, level_min=0, level_max=2)
    assert hier.radius(2) == 0.4
    with pytest.raises(ValueError):
        hier.radius(3)


def test_cutoff_plateau_support_and_slope():
    g = make_grid(1, 256, TWO_PI)
    hier = BallHierarchy(grid=g, center=(np.pi,), base_radius=0.3, level_min=0, level_max=2)
    eta = cutoff_smooth(hier, 1)  # plateau radius 0.6, support radius 1.2
    d = hier.center_dist()
    np.testing.assert_array_equal(eta.samples[d <= 0.6], 1.0)
    np.testing.assert_array_equal(eta.samples[d >= 1.2], 0.0)
    assert np.all((eta.samples >= 0.0) & (eta.samples <= 1.0))
    # max slope of the cubic profile is 1.5 / (r2 - r1) = 1.5 / (2^l R)
    slopes = np.abs(np.diff(eta.samples)) / g.h
    assert slopes.max() <= 1.5 / 0.6 * (1.0 + 1e-6)


def test_cutoff_requires_support_inside_torus():
    g = make_grid(1, 64, TWO_PI)
    hier = BallHierarchy(grid=g, center=(0.0,), base_radius=1.0, level_min=0, level_max=2)
    with pytest.raises(ValueError):
        cutoff_smooth(hier, 1)  # support radius 4 > L/2


def test_cutoff_ring_is_difference_of_plateaus():
    g = make_grid(1, 128, TWO_PI)
    hier = BallHierarchy(grid=g, center=(np.pi,), base_radius=0.2, level_min=0, level_max=3)
    ring = cutoff_ring(hier, 2)
    expect = cutoff_smooth(hier, 2).samples - cutoff_smooth(hier, 1).samples
    np.testing.assert_array_equal(ring.samples, expect)
    with pytest.raises(ValueError):
        cutoff_ring(hier, 0)  # needs a level below
