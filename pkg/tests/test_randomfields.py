"""Distribution plumbing and reproducible per-site sampling."""

import math

import numpy as np
import pytest

from displab.randomfields import (
    DisplacementDistribution,
    UnsupportedVariantError,
    polar_decompose,
    radial_density_bound,
    radial_density_note,
    sample_field,
    site_rng,
)
from displab.supports import ball, box, sphere

BALL1 = DisplacementDistribution(kind="uniform-ball", support=ball(np.zeros(1), 1.0))
BALL2 = DisplacementDistribution(kind="uniform-ball", support=ball(np.zeros(2), 1.0))


def test_sampling_is_reproducible():
    a = sample_field(BALL1, 2, master_seed=42, sample_index=7)
    b = sample_field(BALL1, 2, master_seed=42, sample_index=7)
    assert np.array_equal(a.values, b.values)
    c = sample_field(BALL1, 2, master_seed=42, sample_index=8)
    assert not np.array_equal(a.values, c.values)
    d = sample_field(BALL1, 2, master_seed=43, sample_index=7)
    assert not np.array_equal(a.values, d.values)


def test_growing_the_lattice_preserves_existing_draws():
    """Site streams are keyed by (seed, sample, site), so a bigger torus
    reuses the small torus's draws for the shared site indices."""
    small = sample_field(BALL1, 1, master_seed=5, sample_index=0)
    large = sample_field(BALL1, 3, master_seed=5, sample_index=0)
    assert np.array_equal(small.values, large.values[: small.n_sites])


def test_site_rng_streams_are_independent():
    x = site_rng(1, 2, 3).uniform(size=4)
    y = site_rng(1, 2, 3).uniform(size=4)
    z = site_rng(1, 2, 4).uniform(size=4)
    assert np.array_equal(x, y)
    assert not np.array_equal(x, z)


def test_uniform_ball_stays_inside_and_fills_volume():
    f = sample_field(BALL2, 3, master_seed=11, sample_index=1)
    radii = np.linalg.norm(f.values, axis=1)
    assert radii.max() <= 1.0
    # uniform on the disc: E r = 2/3, loose MC band for 49 sites
    assert abs(radii.mean() - 2.0 / 3.0) < 0.1


def test_uniform_sphere_is_atomic_in_radius():
    dist = DisplacementDistribution(kind="uniform-sphere", support=sphere(np.zeros(2), 0.8))
    f = sample_field(dist, 2, master_seed=1, sample_index=0)
    assert np.allclose(np.linalg.norm(f.values, axis=1), 0.8)


def test_polar_radial_law():
    """radial exponent k: E r = (k+1)/(k+2) R; check k = 3 by Monte Carlo."""
    dist = DisplacementDistribution(
        kind="polar", support=ball(np.zeros(2), 1.0), radial_exponent=3.0
    )
    rng = np.random.default_rng(0)
    draws = np.array([dist.draw(rng) for _ in range(4000)])
    radii = np.linalg.norm(draws, axis=1)
    assert abs(radii.mean() - 4.0 / 5.0) < 0.01
    assert radii.max() <= 1.0


def test_product_box_coordinates_independent_uniform():
    dist = DisplacementDistribution(
        kind="product-box", support=box([-1.0, 0.0], [1.0, 2.0])
    )
    rng = np.random.default_rng(3)
    draws = np.array([dist.draw(rng) for _ in range(3000)])
    assert draws[:, 0].min() >= -1.0 and draws[:, 0].max() <= 1.0
    assert abs(draws[:, 0].mean()) < 0.05
    assert abs(draws[:, 1].mean() - 1.0) < 0.05
    assert abs(np.corrcoef(draws.T)[0, 1]) < 0.05


def test_distribution_validation():
    with pytest.raises(ValueError):
        DisplacementDistribution(kind="uniform-ball", support=sphere(np.zeros(2), 1.0))
    with pytest.raises(ValueError):
        DisplacementDistribution(kind="uniform-sphere", support=ball(np.zeros(2), 1.0))
    with pytest.raises(ValueError):
        DisplacementDistribution(kind="polar", support=ball(np.zeros(2), 1.0))
    with pytest.raises(ValueError):
        DisplacementDistribution(kind="polar", support=ball(np.zeros(2), 1.0), radial_exponent=-1.0)
    with pytest.raises(ValueError):
        DisplacementDistribution(kind="gaussian", support=ball(np.zeros(2), 1.0))


def test_polar_decompose():
    parts = polar_decompose(np.array([3.0, 4.0]))
    assert parts.r == 5.0
    assert np.allclose(parts.sigma, [0.6, 0.8])
    assert not parts.degenerate
    zero = polar_decompose(np.zeros(2))
    assert zero.degenerate
    assert zero.r == 0.0
    assert np.linalg.norm(zero.sigma) == 1.0


def test_radial_density_bound_cases():
    # d=2 ball: h(r) = 2 r / R^2, |h'| = 2 / R^2
    assert radial_density_bound(BALL2) == pytest.approx(2.0)
    # d=1 ball: k = 0, flat density, zero derivative
    assert radial_density_bound(BALL1) == 0.0
    # k = 1/2: density derivative blows up at the origin
    frac = DisplacementDistribution(
        kind="polar", support=ball(np.zeros(2), 1.0), radial_exponent=0.5
    )
    assert radial_density_bound(frac) == math.inf
    shell = DisplacementDistribution(kind="uniform-sphere", support=sphere(np.zeros(2), 1.0))
    assert radial_density_bound(shell) == math.inf
    with pytest.raises(UnsupportedVariantError):
        radial_density_bound(
            DisplacementDistribution(kind="product-box", support=box([-1.0], [1.0]))
        )


def test_radial_density_bound_scales_with_radius():
    # k = 3: sup |h'| = k (k+1) R^{k-1} / R^{k+1} = 12 / R^2
    for radius in (0.5, 1.0, 2.0):
        dist = DisplacementDistribution(
            kind="polar", support=ball(np.zeros(2), radius), radial_exponent=3.0
        )
        assert radial_density_bound(dist) == pytest.approx(12.0 / radius**2)


def test_radial_density_notes():
    assert radial_density_note(BALL2).startswith("holds")
    shell = DisplacementDistribution(kind="uniform-sphere", support=sphere(np.zeros(2), 1.0))
    assert "atomic" in radial_density_note(shell)
    boxdist = DisplacementDistribution(kind="product-box", support=box([-1.0], [1.0]))
    assert radial_density_note(boxdist).startswith("not applicable")
