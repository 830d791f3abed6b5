"""Oracle tests for the pair energy and its variations.

The naive_* helpers below re-implement everything with explicit Python
loops over sites, straight from the definitions. They share no code with
the vectorized module, so agreement is a real check.
"""
import numpy as np
import pytest

from fracmap.energy import (
    EnergyParams,
    PairKernelCache,
    critical_params,
    duality_check,
    el_residual,
    energy,
    energy_gradient,
    first_variation,
    holefill_check,
    seminorm,
    t_operator,
)
from fracmap.grid import (
    BallHierarchy,
    ScalarField,
    VectorField,
    ball_mask,
    make_grid,
    site_coords,
)
from fracmap.solver import project_sphere

TWO_PI = 2.0 * np.pi


def _min_image(dx, L):
    dx = abs(dx)
    return min(dx, L - dx)


def _dist(xi, xj, L):
    return np.sqrt(sum(_min_image(a - b, L) ** 2 for a, b in zip(xi, xj)))


def naive_energy(samples, coords, L, h, n, s, p, eps=0.0, mask=None):
    S = samples.shape[0]
    total = 0.0
    for i in range(S):
        if mask is not None and not mask[i]:
            continue
        for j in range(S):
            if j == i or (mask is not None and not mask[j]):
                continue
            d = _dist(coords[i], coords[j], L)
            du2 = float(((samples[i] - samples[j]) ** 2).sum())
            if eps > 0.0:
                val = (du2 + eps) ** (p / 2.0) - eps ** (p / 2.0)
            else:
                val = du2 ** (p / 2.0)
            total += h ** (2 * n) * val / d ** (n + s * p)
    return total


def naive_el_residual(samples, phi, omega, coords, L, h, n, s, p, mask=None):
    S = samples.shape[0]
    total = 0.0
    for i in range(S):
        if mask is not None and not mask[i]:
            continue
        for j in range(S):
            if j == i or (mask is not None and not mask[j]):
                continue
            d = _dist(coords[i], coords[j], L)
            du = samples[i] - samples[j]
            q = (omega @ samples[i]) * phi[i] - (omega @ samples[j]) * phi[j]
            mag = np.sqrt((du ** 2).sum())
            if mag == 0.0:
                continue
            total += h ** (2 * n) * mag ** (p - 2.0) * float(du @ q) / d ** (n + s * p)
    return total


def naive_t_operator(samples, coords, L, h, n, s, p, kap, mask=None):
    """kap(xi, xj) -> kernel value; must return 0 at zero separation."""
    S = samples.shape[0]
    N = samples.shape[1]
    out = np.zeros((S, N))
    for iz in range(S):
        for i in range(S):
            if mask is not None and not mask[i]:
                continue
            for j in range(S):
                if j == i or (mask is not None and not mask[j]):
                    continue
                d = _dist(coords[i], coords[j], L)
                du = samples[i] - samples[j]
                mag = np.sqrt((du ** 2).sum())
                if mag == 0.0:
                    continue
                w = h ** (2 * n) / d ** (n + s * p)
                pair = w * mag ** (p - 2.0) * du
                out[iz] += pair * (kap(coords[i], coords[iz]) - kap(coords[j], coords[iz]))
    return out


def _unit_field(grid, seed, components=2):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(grid.n_sites, components))
    raw += np.array([2.0] + [0.0] * (components - 1))  # keep away from the origin
    return VectorField(grid=grid, components=components, samples=project_sphere(raw),
                       unit_constrained=True)


def test_params_validation():
    with pytest.raises(ValueError):
        EnergyParams(s=1.0, p=2.0)
    with pytest.raises(ValueError):
        EnergyParams(s=0.5, p=1.0)
    with pytest.raises(ValueError):
        EnergyParams(s=0.5, p=2.0, eps_reg=-1e-3)
    with pytest.raises(ValueError):
        EnergyParams(s=0.5, p=1.5, eps_reg=0.0)  # p < 2 needs regularization
    EnergyParams(s=0.5, p=1.5, eps_reg=1e-6)


def test_critical_params():
    g = make_grid(1, 16, TWO_PI)
    assert critical_params(g, 0.5).p == 2.0
    g2 = make_grid(2, 8, TWO_PI)
    assert critical_params(g2, 0.5).p == 4.0


def test_energy_constant_is_zero():
    g = make_grid(1, 16, TWO_PI)
    u = VectorField(grid=g, components=2, samples=np.tile([0.6, 0.8], (16, 1)))
    params = EnergyParams(s=0.5, p=2.0)
    assert energy(u, params) == 0.0
    assert energy(u, EnergyParams(s=0.5, p=2.0, eps_reg=1e-3)) == 0.0


def test_energy_matches_naive_loop_1d():
    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=11)
    coords = site_coords(g)
    for s, p, eps in [(0.5, 2.0, 0.0), (0.35, 3.0, 0.0), (0.5, 2.0, 1e-2), (0.6, 1.5, 1e-3)]:
        params = EnergyParams(s=s, p=p, eps_reg=eps)
        want = naive_energy(u.samples, coords, g.box_length, g.h, 1, s, p, eps)
        got = energy(u, params)
        assert abs(got - want) <= 1e-12 * abs(want)


def test_energy_matches_naive_loop_2d():
    g = make_grid(2, 8, TWO_PI)
    u = _unit_field(g, seed=12, components=3)
    coords = site_coords(g)
    params = EnergyParams(s=0.5, p=2.0)
    want = naive_energy(u.samples, coords, g.box_length, g.h, 2, 0.5, 2.0)
    got = energy(u, params)
    assert abs(got - want) <= 1e-12 * abs(want)


def test_energy_region_matches_naive_loop():
    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=13)
    hier = BallHierarchy(grid=g, center=(np.pi,), base_radius=1.0, level_min=0, level_max=1)
    mask = ball_mask(hier, 1)
    params = EnergyParams(s=0.5, p=2.0)
    want = naive_energy(u.samples, site_coords(g), g.box_length, g.h, 1, 0.5, 2.0, mask=mask)
    got = energy(u, params, region=mask)
    assert abs(got - want) <= 1e-12 * abs(want)


def test_energy_scaling_homogeneity():
    # E(lam * u) = |lam|^p E(u) when eps_reg = 0
    g = make_grid(1, 32, TWO_PI)
    u = _unit_field(g, seed=14)
    for p in (2.0, 3.0):
        params = EnergyParams(s=0.5, p=p)
        base = energy(u, params)
        scaled = VectorField(grid=g, components=2, samples=2.5 * u.samples)
        np.testing.assert_allclose(energy(scaled, params), 2.5 ** p * base, rtol=1e-13)


def test_energy_translation_invariance():
    g = make_grid(1, 32, TWO_PI)
    u = _unit_field(g, seed=15)
    params = EnergyParams(s=0.5, p=2.0)
    rolled = VectorField(grid=g, components=2, samples=np.roll(u.samples, 5, axis=0))
    np.testing.assert_allclose(energy(rolled, params), energy(u, params), rtol=1e-13)


def test_energy_workers_bitwise_identical():
    g = make_grid(1, 64, TWO_PI)
    u = _unit_field(g, seed=16)
    params = EnergyParams(s=0.5, p=2.0)
    e1 = energy(u, params, workers=1)
    e4 = energy(u, params, workers=4)
    assert e1 == e4  # 0 ULP


def test_seminorm_power_equals_scalar_energy():
    g = make_grid(1, 16, TWO_PI)
    x = site_coords(g)[:, 0]
    f = ScalarField(grid=g, samples=np.cos(x) + 0.3 * np.sin(2 * x))
    coords = site_coords(g)
    for s, p in [(0.5, 2.0), (0.45, 1.8)]:
        sn = seminorm(f, s, p)
        want = naive_energy(f.samples[:, None], coords, g.box_length, g.h, 1, s, p)
        np.testing.assert_allclose(sn ** p, want, rtol=1e-12)


def test_gradient_matches_finite_differences():
    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=17)
    params = EnergyParams(s=0.5, p=2.0, eps_reg=1e-3)
    grad = energy_gradient(u, params)
    rng = np.random.default_rng(18)
    for _ in range(4):
        direction = rng.normal(size=u.samples.shape)
        step = 1e-6
        up = VectorField(grid=g, components=2, samples=u.samples + step * direction)
        dn = VectorField(grid=g, components=2, samples=u.samples - step * direction)
        fd = (energy(up, params) - energy(dn, params)) / (2 * step)
        analytic = float((grad.samples * direction).sum())
        np.testing.assert_allclose(analytic, fd, rtol=1e-7)


def test_first_variation_vanishes_for_radial_directions():
    g = make_grid(1, 32, TWO_PI)
    u = _unit_field(g, seed=19)
    params = EnergyParams(s=0.5, p=2.0)
    rng = np.random.default_rng(20)
    radial = u.samples * rng.normal(size=(g.n_sites, 1))
    psi = VectorField(grid=g, components=2, samples=radial)
    assert abs(first_variation(u, psi, params)) < 1e-10


def test_el_residual_matches_naive_loop():
    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=21)
    x = site_coords(g)[:, 0]
    phi = np.cos(x)
    omega = np.array([[0.0, 1.0], [-1.0, 0.0]])
    params = EnergyParams(s=0.5, p=2.0)
    phif = ScalarField(grid=g, samples=phi)
    got = el_residual(u, phif, omega, params)
    want = naive_el_residual(u.samples, phi, omega, site_coords(g), g.box_length, g.h,
                             1, 0.5, 2.0)
    assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_el_residual_sign_and_zero_cases():
    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=22)
    x = site_coords(g)[:, 0]
    phi = ScalarField(grid=g, samples=np.sin(x))
    omega = np.array([[0.0, -1.0], [1.0, 0.0]])
    params = EnergyParams(s=0.5, p=2.0)
    r = el_residual(u, phi, omega, params)
    r_neg = el_residual(u, phi, -omega, params)
    assert r_neg == -r  # exact antisymmetry in the generator
    const = VectorField(grid=g, components=2, samples=np.tile([1.0, 0.0], (16, 1)))
    assert el_residual(const, phi, omega, params) == 0.0
    assert el_residual(u, phi, np.zeros((2, 2)), params) == 0.0


def test_el_residual_rejects_bad_generator():
    g = make_grid(1, 8, TWO_PI)
    u = _unit_field(g, seed=23)
    phi = ScalarField(grid=g, samples=np.ones(8))
    params = EnergyParams(s=0.5, p=2.0)
    with pytest.raises(ValueError):
        el_residual(u, phi, np.array([[0.0, 1.0], [1.0, 0.0]]), params)
    with pytest.raises(ValueError):
        el_residual(u, phi, np.array([[0.0, 2.0], [-2.0, 0.0]]), params)


def test_t_operator_exact_matches_naive_loop():
    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=24)
    params = EnergyParams(s=0.5, p=2.0)
    t = 0.45
    L = g.box_length

    def kap(xi, xz):
        d = _dist(xi, xz, L)
        return 0.0 if d == 0.0 else d ** (t - 1.0)

    want = naive_t_operator(u.samples, site_coords(g), L, g.h, 1, 0.5, 2.0, kap)
    got = t_operator(u, t, params, mode="exact")
    np.testing.assert_allclose(got.samples, want, rtol=1e-12, atol=1e-14)


def test_t_operator_region_matches_naive_loop():
    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=25)
    params = EnergyParams(s=0.5, p=2.0)
    t = 0.45
    L = g.box_length
    hier = BallHierarchy(grid=g, center=(np.pi,), base_radius=1.2, level_min=0, level_max=0)
    mask = ball_mask(hier, 0)

    def kap(xi, xz):
        d = _dist(xi, xz, L)
        return 0.0 if d == 0.0 else d ** (t - 1.0)

    want = naive_t_operator(u.samples, site_coords(g), L, g.h, 1, 0.5, 2.0, kap, mask=mask)
    got = t_operator(u, t, params, region=mask, mode="exact")
    np.testing.assert_allclose(got.samples, want, rtol=1e-12, atol=1e-14)


def test_t_operator_duality_mode_matches_naive_loop():
    # same pairing structure, cell-averaged kernel taken from the module
    from fracmap.energy import _kappa_duality_1d

    g = make_grid(1, 16, TWO_PI)
    u = _unit_field(g, seed=26)
    params = EnergyParams(s=0.5, p=2.0)
    t = 0.45
    karr = _kappa_duality_1d(g.points_per_axis, g.box_length, t)
    L = g.box_length

    def kap(xi, xz):
        j = int(round(_min_image_signed(xi[0] - xz[0], L) / g.h)) % g.points_per_axis
        return karr[j]

    want = naive_t_operator(u.samples, site_coords(g), L, g.h, 1, 0.5, 2.0, kap)
    got = t_operator(u, t, params, mode="duality")
    np.testing.assert_allclose(got.samples, want, rtol=1e-12, atol=1e-14)


def _min_image_signed(dx, L):
    while dx <= -L / 2:
        dx += L
    while dx > L / 2:
        dx -= L
    return dx


def test_duality_identity_at_fixture():
    # winding-type field and a mixed-mode test function; the relative gap
    # must sit at the cell-averaging floor and shrink under refinement
    def fields(M):
        g = make_grid(1, M, TWO_PI)
        x = site_coords(g)[:, 0]
        theta = x + 0.3 * np.sin(x) + 0.15 * np.cos(2 * x)
        u = VectorField(grid=g, components=2,
                        samples=np.stack([np.cos(theta), np.sin(theta)], axis=1),
                        unit_constrained=True)
        phi = ScalarField(grid=g, samples=0.7 * np.cos(x) - 0.4 * np.sin(2 * x)
                          + 0.2 * np.cos(3 * x) + 0.1 * np.sin(4 * x))
        return u, phi

    params = EnergyParams(s=0.5, p=2.0)
    u64, phi64 = fields(64)
    lhs, rhs, rel64 = duality_check(u64, phi64, 0.45, params)
    assert rel64 <= 1e-3
    assert np.linalg.norm(lhs) > 0 and np.linalg.norm(rhs) > 0
    u128, phi128 = fields(128)
    _, _, rel128 = duality_check(u128, phi128, 0.45, params)
    assert rel64 / rel128 >= 2.0


def test_holefill_inequality_and_nesting():
    g = make_grid(1, 64, TWO_PI)
    rng = np.random.default_rng(27)
    x = site_coords(g)[:, 0]
    theta = x + 0.2 * rng.normal() * np.sin(x) + 0.1 * rng.normal() * np.cos(2 * x)
    u = VectorField(grid=g, components=2,
                    samples=np.stack([np.cos(theta), np.sin(theta)], axis=1),
                    unit_constrained=True)
    params = EnergyParams(s=0.5, p=2.0)
    hier = BallHierarchy(grid=g, center=(np.pi,), base_radius=0.3, level_min=0, level_max=3)
    lhs, rhs, ok = holefill_check(u, hier, 0, 3, params)
    assert ok and lhs <= rhs + 1e-12 * max(1.0, abs(rhs))
    with pytest.raises(ValueError):
        holefill_check(u, hier, 3, 0, params)
    with pytest.raises(ValueError):
        holefill_check(u, hier, 0, 4, params)


def test_holefill_difference_is_cross_term_sum():
    # E(B_L) - E(B_K) counts exactly the ordered pairs that touch the ring,
    # so the identity below is termwise and holds to machine precision
    g = make_grid(1, 32, TWO_PI)
    u = _unit_field(g, seed=28)
    params = EnergyParams(s=0.5, p=2.0)
    hier = BallHierarchy(grid=g, center=(np.pi,), base_radius=0.5, level_min=0, level_max=2)
    inner = ball_mask(hier, 0)
    outer = ball_mask(hier, 2)
    e_outer = energy(u, params, region=outer)
    e_inner = energy(u, params, region=inner)
    coords = site_coords(g)
    cross = 0.0
    for i in range(g.n_sites):
        for j in range(g.n_sites):
            if i == j or not (outer[i] and outer[j]):
                continue
            if inner[i] and inner[j]:
                continue
            d = _dist(coords[i], coords[j], g.box_length)
            du2 = float(((u.samples[i] - u.samples[j]) ** 2).sum())
            cross += g.h ** 2 * du2 / d ** 2
    np.testing.assert_allclose(e_outer - e_inner, cross, rtol=1e-12)


def test_pair_cache_row_blocks_match_full():
    g = make_grid(1, 32, TWO_PI)
    params = EnergyParams(s=0.5, p=2.0)
    cache = PairKernelCache(g, params)
    full = cache.full()
    rebuilt = np.empty_like(full)
    for lo, hi, block in cache.row_blocks():
        rebuilt[lo:hi] = block
    np.testing.assert_array_equal(rebuilt, full)


def test_pair_cache_streaming_path_identical():
    # force the on-demand branch and check it reproduces the precomputed rows
    g = make_grid(1, 32, TWO_PI)
    params = EnergyParams(s=0.5, p=2.0)
    cached = PairKernelCache(g, params)
    full = cached.full()
    streaming = PairKernelCache(g, params)
    object.__setattr__(streaming, "_w", None)
    rebuilt = np.empty_like(full)
    for lo, hi, block in streaming.row_blocks():
        rebuilt[lo:hi] = block
    np.testing.assert_array_equal(rebuilt, full)
    u = _unit_field(g, seed=29)
    assert energy(u, params, cache=streaming) == energy(u, params, cache=cached)
