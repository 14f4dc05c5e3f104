"""Reduced lattice comparison operators and the two-sided spectral sandwich.

The reduced model lives on the site lattice: half the torus graph Laplacian
(the exact image of the fiber dispersion sum_j (1 - cos theta_j) under the
character transform) plus a displacement-dependent diagonal

    lam * [ v . (omega_gamma - zeta) +- c0 * alpha * |omega_gamma - zeta|^2 ].

Conjugated by the lowest-band site frame and padded with the complementary
block, the pair of signed models pinches the shifted torus operator from both
sides once the constant c0 is large enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discretize import GridSpec, assemble_periodic, site_lattice
from .floquet import build_projectors, dispersion_symbol, fiber_ground
from .potentials import DisplacementField, constant_field


def symbol_kinetic(d, side):
    """Half the graph Laplacian of the discrete torus (Z / side)^d.

    Equals the character transform of the multiplier sum_j (1 - cos theta_j)
    over the momenta 2 pi k / side -- the identity the tests pin down.
    """
    if side < 3:
        raise ValueError("torus side must be >= 3 for unambiguous neighbors")
    ring = sp.lil_matrix((side, side))
    for i in range(side):
        ring[i, i] = 2.0
        ring[i, (i + 1) % side] = -1.0
        ring[i, (i - 1) % side] = -1.0
    ring = ring.tocsr()
    total = None
    for axis in range(d):
        term = ring
        for _ in range(axis):
            term = sp.kron(sp.identity(side, format="csr"), term, format="csr")
        for _ in range(d - 1 - axis):
            term = sp.kron(term, sp.identity(side, format="csr"), format="csr")
        total = term if total is None else total + term
    return 0.5 * total.tocsr()


@dataclass(frozen=True)
class ReducedModel:
    """One signed comparison operator h^sign on the site lattice."""

    sign: int
    lam: float
    zeta: np.ndarray
    v: np.ndarray
    c0: float
    alpha: float
    field: DisplacementField
    matrix: sp.csr_matrix

    @property
    def n_sites(self):
        return self.matrix.shape[0]


def build_reduced(sign, v, lam, zeta, field, c0, alpha):
    """Assemble h^sign = kinetic_scale * (symbol kinetic) + diagonal.

    sign=-1 scales the kinetic part by 1/c0 (lower model), sign=+1 by c0
    (upper model); the diagonal couples linearly through v and quadratically
    through c0 * alpha, with the quadratic term signed.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    if c0 < 1.0:
        raise ValueError("c0 must be >= 1")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    side = 2 * field.n + 1
    kin_scale = c0 if sign > 0 else 1.0 / c0
    kin = kin_scale * symbol_kinetic(field.d, side)
    dz = field.values - zeta
    diag = lam * (dz @ v + sign * c0 * alpha * np.sum(dz**2, axis=1))
    mat = (kin + sp.diags(diag, format="csr")).tocsr()
    return ReducedModel(
        sign=sign, lam=lam, zeta=zeta, v=v, c0=c0, alpha=alpha, field=field, matrix=mat
    )


@dataclass(frozen=True)
class GroundZeroReport:
    min_eigenvalue: float
    field_is_constant: bool
    lower_bound: float
    consistent: bool


def ground_zero_iff_constant(model, quad_floor=None):
    """Check: the lower model's bottom is 0 exactly at the constant field.

    For non-constant fields the bottom must be strictly positive and clear a
    quadratic floor: the diagonal dominates lam * (alpha0/2) |dev|^2 per site
    (alpha0 recovered as 2 c0 alpha), so the worst-site deviation divided by
    the site count is a crude but honest lower bound.  The floor is vacuous
    when some site sits exactly at zeta.
    """
    if model.sign != -1:
        raise ValueError("zero-ground characterization applies to the lower model")
    vals = np.linalg.eigvalsh(model.matrix.toarray())
    bottom = float(vals[0])
    const = model.field.is_constant(model.zeta)
    if const:
        return GroundZeroReport(bottom, True, 0.0, bool(abs(bottom) <= 1e-12))
    if quad_floor is None:
        dz = model.field.values - model.zeta
        min_dev2 = float(np.min(np.sum(dz**2, axis=1)))
        alpha0_equiv = 2.0 * model.c0 * model.alpha
        quad_floor = model.lam * alpha0_equiv * min_dev2 / (2.0 * model.n_sites)
    ok = bottom > 1e-13 and bottom >= quad_floor - 1e-13
    return GroundZeroReport(bottom, False, quad_floor, bool(ok))


@dataclass(frozen=True)
class BandSymbolTable:
    lam: float
    thetas: np.ndarray
    ratios: np.ndarray

    @property
    def min_ratio(self):
        return float(np.min(self.ratios))

    @property
    def max_ratio(self):
        return float(np.max(self.ratios))

    @property
    def spread(self):
        return self.max_ratio / self.min_ratio


def band_symbol_ratio(p, q, lam, zeta, m, thetas):
    """(E_0(theta) - E_0(0)) / sum_j (1 - cos theta_j) over nonzero momenta."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    e00, _ = fiber_ground(p, q, lam, zeta, np.zeros(q.d), m)
    ratios, kept = [], []
    for theta in np.atleast_2d(thetas):
        s = dispersion_symbol(theta)
        if s < 1e-12:
            continue
        e0, _ = fiber_ground(p, q, lam, zeta, theta, m)
        ratios.append((e0 - e00) / s)
        kept.append(theta)
    if not ratios:
        raise ValueError("theta list contains no nonzero momentum")
    return BandSymbolTable(lam=lam, thetas=np.asarray(kept), ratios=np.asarray(ratios))


# -- the two-sided sandwich ----------------------------------------------


@dataclass(frozen=True)
class SandwichOperators:
    """Dense forms of both sandwich sides and the pinched middle."""

    middle: np.ndarray  # H_{lam,omega} - E(lam, zeta)
    lower: np.ndarray  # (1/c0) (W h^- W* + Pi_+)
    upper: np.ndarray  # c0 (W h^+ W* + H-tilde_+)
    c0: float
    alpha: float


def sandwich_operators(p, q, lam, field, zeta, grid, c0, alpha, pack=None):
    """Materialize lower / middle / upper for one displacement field.

    The site frame W unfolds the reduced models into the lowest-band range;
    the complementary block is the bare projector for the lower side and the
    symmetrized compression of the shifted constant-field operator for the
    upper side.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if pack is None:
        pack = build_projectors(p, q, lam, zeta, grid)
    from .floquet import v_vector

    v = v_vector(p, q, lam, zeta, m=grid.m)
    e_ref = float(pack.energies[np.argmax(np.all(pack.thetas == 0.0, axis=1))])
    w = pack.site_isometry()
    pi_plus = pack.pi_plus()

    h_minus = build_reduced(-1, v, lam, zeta, field, c0, alpha).matrix.toarray()
    h_plus = build_reduced(+1, v, lam, zeta, field, c0, alpha).matrix.toarray()

    middle_op = assemble_periodic(p, q, lam, field, grid).matrix.toarray()
    middle = middle_op - e_ref * np.eye(middle_op.shape[0])

    const_op = assemble_periodic(
        p, q, lam, constant_field(grid.n, grid.d, zeta), grid
    ).matrix.toarray()
    shifted_const = const_op - e_ref * np.eye(const_op.shape[0])
    htilde = pi_plus @ shifted_const @ pi_plus
    htilde = 0.5 * (htilde + htilde.conj().T)

    lower = (w @ h_minus @ w.conj().T + pi_plus) / c0
    upper = c0 * (w @ h_plus @ w.conj().T + htilde)
    lower = 0.5 * (lower + lower.conj().T)
    upper = 0.5 * (upper + upper.conj().T)
    return SandwichOperators(middle=middle, lower=lower, upper=upper, c0=c0, alpha=alpha)


@dataclass(frozen=True)
class SandwichReport:
    c0: float
    alpha: float
    min_quad_lower: float
    min_quad_upper: float
    min_eig_lower: float
    min_eig_upper: float
    tol: float

    @property
    def passed(self):
        floor = -self.tol
        return (
            self.min_quad_lower >= floor
            and self.min_quad_upper >= floor
            and self.min_eig_lower >= floor
            and self.min_eig_upper >= floor
        )


def sandwich_check(p, q, lam, field, zeta, grid, c0, alpha, trials=100, seed=0, tol=1e-8, pack=None):
    """Test middle - lower >= 0 and upper - middle >= 0.

    Both differences are probed with ``trials`` random unit vectors (real and
    complex mixtures) and then certified by their smallest eigenvalue; the
    report keeps the worst quadratic form value and the worst eigenvalue for
    each side, normalized thresholds at ``-tol``.
    """
    ops = sandwich_operators(p, q, lam, field, zeta, grid, c0, alpha, pack=pack)
    gap_low = ops.middle - ops.lower
    gap_up = ops.upper - ops.middle
    rng = np.random.default_rng(seed)
    n = gap_low.shape[0]
    min_q_low, min_q_up = np.inf, np.inf
    for t in range(trials):
        x = rng.standard_normal(n)
        if t % 2 == 1:
            x = x + 1j * rng.standard_normal(n)
        x = x / np.linalg.norm(x)
        min_q_low = min(min_q_low, float(np.vdot(x, gap_low @ x).real))
        min_q_up = min(min_q_up, float(np.vdot(x, gap_up @ x).real))
    eig_low = float(np.linalg.eigvalsh(0.5 * (gap_low + gap_low.conj().T))[0])
    eig_up = float(np.linalg.eigvalsh(0.5 * (gap_up + gap_up.conj().T))[0])
    return SandwichReport(
        c0=c0,
        alpha=alpha,
        min_quad_lower=min_q_low,
        min_quad_upper=min_q_up,
        min_eig_lower=eig_low,
        min_eig_upper=eig_up,
        tol=tol,
    )


@dataclass(frozen=True)
class SandwichCalibration:
    reports: tuple
    c0_values: tuple
    passing_c0: float | None

    @property
    def ok(self):
        return self.passing_c0 is not None


def calibrate_sandwich(
    p,
    q,
    lam,
    zeta,
    grid,
    alpha0,
    dist,
    c0_values=(2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0),
    n_fields=20,
    master_seed=7,
    trials=40,
    tol=1e-8,
):
    """Scan c0 upward (alpha = alpha0 / (2 c0)) until the sandwich holds
    for every sampled field; returns the reports of the first passing c0
    and the worst margins seen along the way."""
    from .randomfields import sample_field

    pack = build_projectors(p, q, lam, np.atleast_1d(zeta), grid)
    all_reports = []
    passing = None
    for c0 in c0_values:
        alpha = alpha0 / (2.0 * c0)
        worst = None
        ok = True
        for s in range(n_fields):
            field = sample_field(dist, grid.n, master_seed, s)
            rep = sandwich_check(
                p, q, lam, field, zeta, grid, c0, alpha, trials=trials, seed=s, tol=tol, pack=pack
            )
            if worst is None or min(rep.min_eig_lower, rep.min_eig_upper) < min(
                worst.min_eig_lower, worst.min_eig_upper
            ):
                worst = rep
            if not rep.passed:
                ok = False
                break
        all_reports.append(worst)
        if ok:
            passing = c0
            break
    return SandwichCalibration(
        reports=tuple(all_reports),
        c0_values=tuple(c0_values[: len(all_reports)]),
        passing_c0=passing,
    )
