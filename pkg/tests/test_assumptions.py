"""Hypothesis checks on the band-edge landscape.

Everything in here pins behavior of the verification layer itself: the
constant-displacement minimizer, the coercivity constant around it, the
robustness of a linear minimizer under gradient perturbations, and the full
per-site field descent that backs the finite-volume minimization statement.
"""

import numpy as np
import pytest

from displab.assumptions import (
    coercivity_constant,
    exhaustive_field_scan,
    field_energy_and_gradient,
    gap_ratio_table,
    minimize_over_field,
    minimize_over_support,
    prop1_geometry,
    robust_linear_minimizer,
)
from displab.discretize import GridSpec
from displab.floquet import v_vector
from displab.potentials import (
    DisplacementField,
    periodic_family,
    single_site_family,
)
from displab.supports import ball, box, ellipsoid, interval

P1 = periodic_family("cosine", 1, coefficients=[-1.0])
Q1 = single_site_family("asym-bump", 1)
K = interval(-1.0, 1.0)


def test_minimizer_lands_on_left_endpoint():
    """The asymmetric site drives the constant displacement to zeta = -1."""
    cert = minimize_over_support(P1, Q1, 0.1, K, 32, restarts=6, seed=0)
    assert cert.zeta[0] == pytest.approx(-1.0, abs=1e-9)
    assert cert.energy == pytest.approx(0.0622533610920, abs=1e-9)
    assert cert.unique
    assert not cert.flat
    assert cert.cluster_diameter == 0.0
    assert all(cert.converged)


def test_minimizer_flat_when_site_potential_vanishes():
    q0 = single_site_family("zero", 1)
    cert = minimize_over_support(P1, q0, 0.1, K, 16, restarts=4, seed=0)
    assert cert.flat
    assert not cert.unique
    assert cert.energy_spread == 0.0


def test_coercivity_equals_half_drift_on_symmetric_interval():
    """For an energy that is linear in zeta, the worst ratio over [-1, 1]
    around zeta_min = -1 is grad/(lam * |dz|) at the far end dz = 2, i.e.
    alpha0 = v/2 -- a hand-computable pin for the sampler."""
    for m in (16, 32):
        coer = coercivity_constant(P1, Q1, 0.1, ball(np.zeros(1), 1.0), np.array([-1.0]), m, seed=1)
        v = v_vector(P1, Q1, 0.1, np.array([-1.0]), m)[0]
        assert coer.positive
        assert coer.alpha0 == pytest.approx(v / 2.0, rel=1e-9)
        assert coer.worst_zeta[0] == pytest.approx(1.0, abs=1e-9)


def test_coercivity_frozen_values():
    coer = coercivity_constant(P1, Q1, 0.1, ball(np.zeros(1), 1.0), np.array([-1.0]), 32, seed=1)
    assert coer.alpha0 == pytest.approx(0.00807360185, abs=1e-9)


def test_prop1_geometry_dispatch():
    assert prop1_geometry(ellipsoid(np.zeros(2), [2.0, 1.0])).value == pytest.approx(0.25)
    assert prop1_geometry(ball(np.zeros(1), 1.0)).value == np.inf
    for flat_set in (interval(-1.0, 1.0), box([-1.0, -1.0], [1.0, 1.0])):
        rep = prop1_geometry(flat_set)
        assert rep.value == 0.0 and not rep.strictly_convex


def test_robust_minimizer_interval_hand_check():
    # v_q = 0.5 pulls to the left endpoint; the choice survives any gradient
    # perturbation smaller than v_q itself and fails beyond it
    ok = robust_linear_minimizer(K, np.array([0.5]), eps=0.3)
    assert ok.ok
    assert ok.zeta0[0] == -1.0
    assert ok.margin >= -1e-12
    bad = robust_linear_minimizer(K, np.array([0.5]), eps=0.7)
    assert not bad.ok
    assert bad.margin == pytest.approx(2 * (0.5 - 0.7), abs=1e-9)


def test_robust_minimizer_smooth_boundary_never_robust():
    """A strictly convex boundary has singleton normal cones, so any eps > 0
    breaks the common minimizer; eps = 0 keeps the support point."""
    s = ball(np.zeros(2), 1.0)
    v_q = np.array([0.3, 0.4])
    assert robust_linear_minimizer(s, v_q, eps=0.0).ok
    assert not robust_linear_minimizer(s, v_q, eps=0.05).ok
    with pytest.raises(ValueError):
        robust_linear_minimizer(s, v_q, eps=-0.1)


def test_gap_ratio_table_positive_and_stable():
    tab = gap_ratio_table(P1, Q1, [0.2, 0.1, 0.05], K, 32, restarts=4, seed=3)
    assert tab.all_positive
    assert max(tab.ratios) / min(tab.ratios) < 50
    assert tab.reference_energy == pytest.approx(0.0638088285925, abs=1e-9)
    # deeper coupling digs a lower band edge
    assert tab.energies[0] < tab.energies[1] < tab.energies[2] < tab.reference_energy


def test_field_gradient_matches_finite_differences():
    grid = GridSpec(d=1, n=1, m=8)
    vals = np.random.default_rng(4).uniform(-0.9, 0.9, size=(3, 1))
    fld = DisplacementField(n=1, d=1, values=vals)
    _, grad = field_energy_and_gradient(P1, Q1, 0.1, fld, grid)
    h = 1e-6
    for i in range(3):
        vp, vm = vals.copy(), vals.copy()
        vp[i, 0] += h
        vm[i, 0] -= h
        ep, _ = field_energy_and_gradient(P1, Q1, 0.1, DisplacementField(n=1, d=1, values=vp), grid)
        em, _ = field_energy_and_gradient(P1, Q1, 0.1, DisplacementField(n=1, d=1, values=vm), grid)
        assert (ep - em) / (2 * h) == pytest.approx(grad[i, 0], abs=1e-6)


def test_field_descent_reaches_constant_configuration():
    rep = minimize_over_field(P1, Q1, 0.1, K, 0, 64, restarts=4, seed=0)
    assert rep.all_converged_to_constant
    assert rep.reference_zeta[0] == pytest.approx(-1.0)
    assert abs(rep.energy_gap) < 1e-10
    assert np.allclose(rep.best_field, -1.0)


def test_field_descent_n1():
    rep = minimize_over_field(P1, Q1, 0.1, K, 1, 64, restarts=3, seed=0)
    assert rep.all_converged_to_constant
    assert max(r.max_site_deviation for r in rep.restarts) <= 1e-3


def test_exhaustive_scan_prefers_constant_field():
    scan = exhaustive_field_scan(P1, Q1, 0.1, K, 1, 16, grid_points=3)
    assert scan.argmin_is_constant
    assert scan.constant_value == -1.0
    assert scan.margin > 0
    assert scan.grid_values.shape == (3,)


def test_exhaustive_scan_rejects_d2():
    q2 = single_site_family("asym-bump", 2)
    p2 = periodic_family("cosine", 2, coefficients=[-1.0, -1.0])
    with pytest.raises(NotImplementedError):
        exhaustive_field_scan(p2, q2, 0.1, ball(np.zeros(2), 1.0), 0, 8, grid_points=3)
