"""Grid bookkeeping and operator assembly."""

import io

import numpy as np
import pytest
import scipy.sparse as sp

from displab.discretize import (
    GridSpec,
    LatticeOperator,
    assemble_fiber,
    assemble_periodic,
    cell_axis_coords,
    fiber_diagonal,
    free_fiber_eigenvalues,
)
from displab.potentials import (
    constant_field,
    periodic_family,
    single_site_family,
    wrap_nearest,
)

P0 = periodic_family("zero", 1)
Q0 = single_site_family("zero", 1)


def test_gridspec_properties():
    g = GridSpec(d=2, n=1, m=8)
    assert g.h == 0.125
    assert g.side_cells == 3
    assert g.side_points == 24
    assert g.n_points == 576
    assert g.cell_volume_element == 0.125**2


@pytest.mark.parametrize("bad", [dict(d=0, n=0, m=4), dict(d=1, n=-1, m=4), dict(d=1, n=0, m=3)])
def test_gridspec_validation(bad):
    with pytest.raises(ValueError):
        GridSpec(**bad)


def test_cell_axis_coords():
    ax = cell_axis_coords(4)
    assert np.allclose(ax, [-0.5, -0.25, 0.0, 0.25])


def test_axis_coords_cover_torus():
    g = GridSpec(d=1, n=1, m=4)
    ax = g.axis_coords()
    assert len(ax) == 12
    assert ax[0] == -1.5
    assert np.allclose(np.diff(ax), 0.25)


def test_cell_points_half_open():
    g = GridSpec(d=2, n=0, m=5)
    pts = g.cell_points()
    assert pts.shape == (25, 2)
    assert pts.min() == -0.5
    assert pts.max() < 0.5


def test_thetas_quantization():
    g = GridSpec(d=1, n=2, m=4)
    th = g.thetas()
    assert th.shape == (5, 1)
    assert np.allclose(th[:, 0], 2 * np.pi * np.arange(5) / 5)
    g2 = GridSpec(d=2, n=1, m=4)
    assert g2.thetas().shape == (9, 2)


def test_ring_eigenvalues_frozen():
    """4-point free ring: spectrum {0, 32, 32, 64} exactly (h = 1/4)."""
    op = assemble_fiber(P0, Q0, 0.0, np.array([0.0]), np.array([0.0]), 4)
    eigs = np.linalg.eigvalsh(op.matrix.toarray())
    assert np.allclose(eigs, [0.0, 32.0, 32.0, 64.0], atol=1e-12)


@pytest.mark.parametrize("m", [4, 6, 9])
@pytest.mark.parametrize("theta", [0.0, 0.7, np.pi, 5.0])
def test_free_fiber_closed_form(m, theta):
    op = assemble_fiber(P0, Q0, 0.0, np.array([0.0]), np.array([theta]), m)
    eigs = np.linalg.eigvalsh(op.matrix.toarray())
    assert np.allclose(eigs, free_fiber_eigenvalues(theta, m), atol=1e-9)


def test_fiber_hermitian_and_dtype():
    p = periodic_family("cosine", 1, coefficients=[-1.0])
    q = single_site_family("asym-bump", 1)
    for theta in (0.0, np.pi):
        op = assemble_fiber(p, q, 0.1, np.array([-1.0]), np.array([theta]), 8)
        assert op.matrix.dtype == np.float64, "real phases must give a real matrix"
        assert op.is_hermitian()
    op = assemble_fiber(p, q, 0.1, np.array([-1.0]), np.array([1.3]), 8)
    assert op.matrix.dtype == np.complex128
    assert op.is_hermitian()
    assert op.kind == "fiber"


def test_fiber_two_pi_periodic():
    q = single_site_family("asym-bump", 1)
    a = assemble_fiber(P0, q, 0.1, np.array([-1.0]), np.array([0.9]), 6)
    b = assemble_fiber(P0, q, 0.1, np.array([-1.0]), np.array([0.9 + 2 * np.pi]), 6)
    assert np.max(np.abs((a.matrix - b.matrix).toarray())) < 1e-10


def test_fiber_rejects_bad_theta():
    with pytest.raises(ValueError):
        assemble_fiber(P0, Q0, 0.0, np.array([0.0]), np.array([0.0, 0.0]), 4)
    with pytest.raises(ValueError):
        assemble_fiber(P0, Q0, 0.0, np.array([0.0]), np.array([np.inf]), 4)


def test_fiber_diagonal_samples_displaced_site():
    q = single_site_family("sym-bump", 1)
    grid, diag = fiber_diagonal(P0, q, 0.2, np.array([0.5]), 16)
    pts = grid.cell_points()
    # the sampled bump is centered at lam * zeta = 0.1, periodized on the cell
    assert np.argmax(diag) == np.argmin(np.abs(pts[:, 0] - 0.1))
    assert np.allclose(diag, q.value(wrap_nearest(pts - 0.1, 1.0)))
    # the tail that leaves the cell re-enters on the other side
    assert diag[0] == pytest.approx(q.value(np.array([[0.4]]))[0])
    assert diag[0] > 0.0


def test_periodic_assembly_free_spectrum():
    """Free torus d=1, n=1, m=4: eigenvalues 32 (1 - cos(pi k / 6))."""
    g = GridSpec(d=1, n=1, m=4)
    field = constant_field(1, 1, np.array([0.0]))
    op = assemble_periodic(P0, Q0, 0.0, field, g)
    eigs = np.linalg.eigvalsh(op.matrix.toarray())
    k = np.arange(12)
    expected = np.sort(32.0 * (1.0 - np.cos(np.pi * k / 6.0)))
    assert np.allclose(eigs, expected, atol=1e-9)
    assert op.kind == "periodic"
    assert op.is_hermitian()


def test_periodic_assembly_2d_is_axis_sum():
    g = GridSpec(d=2, n=0, m=4)
    field = constant_field(0, 2, np.array([0.0, 0.0]))
    op = assemble_periodic(periodic_family("zero", 2), single_site_family("zero", 2), 0.0, field, g)
    eigs = np.linalg.eigvalsh(op.matrix.toarray())
    one = 32.0 * (1.0 - np.cos(np.pi * np.arange(4) / 2.0))
    expected = np.sort((one[:, None] + one[None, :]).ravel())
    assert np.allclose(eigs, expected, atol=1e-9)


def test_periodic_assembly_mismatch_errors():
    g = GridSpec(d=1, n=1, m=4)
    with pytest.raises(ValueError):
        assemble_periodic(P0, single_site_family("zero", 2), 0.0, constant_field(1, 1, [0.0]), g)
    with pytest.raises(ValueError):
        assemble_periodic(P0, Q0, 0.0, constant_field(2, 1, [0.0]), g)


def test_is_hermitian_detects_asymmetry():
    g = GridSpec(d=1, n=0, m=4)
    mat = sp.csr_matrix(np.triu(np.ones((4, 4))))
    op = LatticeOperator(matrix=mat, grid=g, kind="periodic")
    assert not op.is_hermitian()


def test_dump_coordinates():
    g = GridSpec(d=1, n=0, m=4)
    op = assemble_fiber(P0, Q0, 0.0, np.array([0.0]), np.array([0.0]), 4)
    buf = io.StringIO()
    op.dump_coordinates(buf)
    lines = buf.getvalue().strip().split("\n")
    assert len(lines) == 4
    assert lines[0].split() == ["0", "-0.5"]
