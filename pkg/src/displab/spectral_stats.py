"""Monte-Carlo spectral statistics: integrated density of states, band-edge
tail fits, and eigenvalue-proximity (level-repulsion) scans.

All sampling is indexed by (master_seed, sample_index) through the
counter-based field sampler, so curves are reproducible sample-by-sample and
independent of scheduling; threading only maps samples onto workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .discretize import GridSpec, assemble_periodic
from .eigensolve import count_below, smallest_eigenpairs
from .floquet import band_bottom, v_vector
from .randomfields import sample_field
from .reduced import build_reduced


# -- operator families ----------------------------------------------------


@dataclass(frozen=True)
class ContinuumFamily:
    """Random torus operators H_{lam, omega} at fixed discretization."""

    p: object
    q: object
    lam: float
    dist: object
    n: int
    m: int

    @property
    def label(self):
        return "continuum"

    @property
    def n_cells(self):
        return (2 * self.n + 1) ** self.q.d

    @property
    def grid(self):
        return GridSpec(d=self.q.d, n=self.n, m=self.m)

    def assemble(self, master_seed, sample_index):
        field = sample_field(self.dist, self.n, master_seed, sample_index)
        return assemble_periodic(self.p, self.q, self.lam, field, self.grid).matrix


@dataclass(frozen=True)
class ReducedFamily:
    """Random signed comparison operators on the site lattice."""

    sign: int
    v: np.ndarray
    lam: float
    zeta: np.ndarray
    dist: object
    n: int
    c0: float
    alpha: float

    @property
    def label(self):
        return "reduced-minus" if self.sign < 0 else "reduced-plus"

    @property
    def n_cells(self):
        return (2 * self.n + 1) ** self.dist.d

    def assemble(self, master_seed, sample_index):
        field = sample_field(self.dist, self.n, master_seed, sample_index)
        return build_reduced(
            self.sign, self.v, self.lam, self.zeta, field, self.c0, self.alpha
        ).matrix


# -- integrated density of states ------------------------------------------


@dataclass(frozen=True)
class IDSCurve:
    """Per-cell eigenvalue counting function, sample by sample."""

    energies: np.ndarray  # (G,)
    counts: np.ndarray  # (S, G) integer counts below each energy
    n_cells: int
    label: str

    @property
    def n_samples(self):
        return self.counts.shape[0]

    def values(self):
        return self.counts.mean(axis=0) / self.n_cells

    def stderr(self):
        if self.n_samples < 2:
            return np.zeros(self.counts.shape[1])
        return self.counts.std(axis=0, ddof=1) / np.sqrt(self.n_samples) / self.n_cells

    def is_monotone(self):
        vals = self.values()
        return bool(np.all(np.diff(vals) >= -1e-12))


def _count_row(family, master_seed, sample_index, energies):
    mat = family.assemble(master_seed, sample_index)
    return [count_below(mat, float(e)) for e in energies]


def ids_curve(family, energies, n_samples, master_seed, threads=1):
    energies = np.asarray(energies, dtype=float)
    if np.any(np.diff(energies) <= 0):
        raise ValueError("energies must be strictly increasing")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(
                pool.map(
                    lambda s: _count_row(family, master_seed, s, energies),
                    range(n_samples),
                )
            )
    else:
        rows = [_count_row(family, master_seed, s, energies) for s in range(n_samples)]
    return IDSCurve(
        energies=energies,
        counts=np.asarray(rows, dtype=int),
        n_cells=family.n_cells,
        label=family.label,
    )


@dataclass(frozen=True)
class IDSSandwichReport:
    """Counting chain N+(E/c0) <= N_mid(E_ref + E) <= N-(c0 E), same fields."""

    energies: np.ndarray
    e_ref: float
    c0: float
    plus: IDSCurve
    middle: IDSCurve
    minus: IDSCurve
    sample_violations: int

    def _sig(self, a, b):
        return 3.0 * np.sqrt(a.stderr() ** 2 + b.stderr() ** 2)

    def lower_ok(self):
        return self.plus.values() <= self.middle.values() + self._sig(self.plus, self.middle)

    def upper_ok(self):
        return self.middle.values() <= self.minus.values() + self._sig(self.middle, self.minus)

    @property
    def all_ok(self):
        return bool(np.all(self.lower_ok()) and np.all(self.upper_ok()))


def ids_sandwich_check(
    p, q, lam, dist, zeta, n, m, c0, alpha, energies, n_samples, master_seed, threads=1
):
    """Run all three counting curves on shared displacement fields.

    ``energies`` are offsets above the band bottom and must stay below
    1/c0^2, where the complementary blocks are spectrally inert.  The report
    carries the three curves, the 3-sigma mean comparisons, and the number of
    strict per-sample violations of the integer chain (expected zero).
    """
    energies = np.asarray(energies, dtype=float)
    if np.any(energies <= 0) or np.any(energies >= 1.0 / c0**2):
        raise ValueError("offsets must lie strictly inside (0, 1/c0^2)")
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    e_ref = band_bottom(p, q, lam, zeta, m).energy
    v = v_vector(p, q, lam, zeta, m)
    fam_mid = ContinuumFamily(p=p, q=q, lam=lam, dist=dist, n=n, m=m)
    fam_plus = ReducedFamily(
        sign=+1, v=v, lam=lam, zeta=zeta, dist=dist, n=n, c0=c0, alpha=alpha
    )
    fam_minus = ReducedFamily(
        sign=-1, v=v, lam=lam, zeta=zeta, dist=dist, n=n, c0=c0, alpha=alpha
    )
    curve_plus = ids_curve(fam_plus, energies / c0, n_samples, master_seed, threads)
    curve_mid = ids_curve(fam_mid, e_ref + energies, n_samples, master_seed, threads)
    curve_minus = ids_curve(fam_minus, c0 * energies, n_samples, master_seed, threads)
    violations = int(
        np.sum(curve_plus.counts > curve_mid.counts)
        + np.sum(curve_mid.counts > curve_minus.counts)
    )
    return IDSSandwichReport(
        energies=energies,
        e_ref=e_ref,
        c0=c0,
        plus=curve_plus,
        middle=curve_mid,
        minus=curve_minus,
        sample_violations=violations,
    )


def holder_constant(curve, exponent=0.8):
    """Largest per-pair ratio |N(E1) - N(E2)| / |E1 - E2|^exponent on the grid."""
    vals = curve.values()
    e = curve.energies
    best = 0.0
    for i in range(len(e)):
        for j in range(i + 1, len(e)):
            best = max(best, abs(vals[j] - vals[i]) / abs(e[j] - e[i]) ** exponent)
    return best


# -- band-edge tail fit -----------------------------------------------------


@dataclass(frozen=True)
class LifshitzFit:
    """Least-squares line through log|log(N - N0)| vs log(E - E0).

    A doubly-logarithmic tail exp(-c (E-E0)^(-kappa)) shows up as slope
    -kappa; a power-law (van Hove) edge flattens toward zero.  The
    ``no_tail`` flag trips when the slope is above -0.2.
    """

    slope: float
    intercept: float
    n_points: int
    rms_residual: float
    half_window_slope: float
    no_tail: bool
    excluded_saturated: int

    @property
    def window_sensitivity(self):
        return abs(self.slope - self.half_window_slope)


def lifshitz_fit(energies, values, e_bottom, n_bottom=0.0, window=None):
    energies = np.asarray(energies, dtype=float)
    values = np.asarray(values, dtype=float)
    rel = energies - e_bottom
    dn = values - n_bottom
    mask = (rel > 0) & (dn > 0)
    saturated = int(np.sum(mask & (dn >= 1.0)))
    mask &= dn < 1.0
    if window is not None:
        lo, hi = window
        mask &= (rel >= lo) & (rel <= hi)
    if int(mask.sum()) < 3:
        raise ValueError("fewer than 3 usable points for the tail fit")
    x = np.log(rel[mask])
    y = np.log(-np.log(dn[mask]))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    half_cut = np.median(x)
    half = x <= half_cut
    if int(half.sum()) >= 3:
        half_slope = float(np.polyfit(x[half], y[half], 1)[0])
    else:
        half_slope = float(slope)
    return LifshitzFit(
        slope=float(slope),
        intercept=float(intercept),
        n_points=int(mask.sum()),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        half_window_slope=half_slope,
        no_tail=bool(slope > -0.2),
        excluded_saturated=saturated,
    )


def synthetic_tail_curve(e_bottom, kappa, energies, scale=1.0):
    """Reference curve N(E) = exp(-scale (E - E0)^(-kappa)) for fit validation."""
    rel = np.asarray(energies, dtype=float) - e_bottom
    if np.any(rel <= 0):
        raise ValueError("energies must exceed the bottom")
    return np.exp(-scale * rel ** (-kappa))


# -- eigenvalue-proximity scan ----------------------------------------------


@dataclass(frozen=True)
class WegnerRecord:
    n: int
    eps: float
    hits: int
    samples: int

    @property
    def p_hat(self):
        return self.hits / self.samples

    @property
    def stderr(self):
        p = self.p_hat
        return float(np.sqrt(max(p * (1.0 - p), 1e-12) / self.samples))


@dataclass(frozen=True)
class WegnerReport:
    e_center: float
    records: tuple
    nu_hat: float
    nu_stderr: float
    dim_hat: float
    dim_stderr: float
    n_excluded: int
    audits_total: int
    audits_agree: int
    ground_stats: tuple  # rows (n, min_ground, mean_ground, se_ground)

    @property
    def audit_clean(self):
        return self.audits_total > 0 and self.audits_agree == self.audits_total

    def e_lambda_estimate(self):
        """min over recorded samples of the ground energy, minus 3 SE."""
        if not self.ground_stats:
            return float("nan")
        lows = [row[1] - 3.0 * row[3] for row in self.ground_stats]
        return float(min(lows))


def _fit_loglog(records, d):
    """OLS of log p on [1, log eps, log volume]; returns coefficients and SEs."""
    rows = [r for r in records if 0 < r.hits < r.samples]
    excluded = len(records) - len(rows)
    if len(rows) < 3:
        raise ValueError("not enough informative proximity cells for the fit")
    x = np.array([[1.0, np.log(r.eps), np.log(float((2 * r.n + 1) ** d))] for r in rows])
    y = np.log([r.p_hat for r in rows])
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    dof = max(len(rows) - 3, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(x.T @ x)
    ses = np.sqrt(np.diag(cov))
    return coef, ses, excluded


def wegner_scan(
    p,
    q,
    lam,
    dist,
    zeta,
    e_center,
    eps_list,
    n_list,
    m,
    samples_per_cell,
    master_seed,
    audit_quota=50,
    threads=1,
    ground_samples=50,
):
    """Estimate P(some eigenvalue within eps of e_center) across sizes.

    For every torus size in ``n_list`` and every window half-width in
    ``eps_list`` the hit probability is estimated over ``samples_per_cell``
    fields (shared across eps within a size: one operator, all windows).
    A joint log-log fit extracts the window exponent nu_hat and the volume
    exponent dim_hat.  ``audit_quota`` hit decisions are recomputed from
    dense spectra as an independent cross-check.
    """
    eps_list = sorted(float(e) for e in eps_list)
    if eps_list[0] <= 0:
        raise ValueError("eps must be positive")
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    hit_table = {}
    audits_total = audits_agree = 0
    ground_stats = []
    for n in n_list:
        fam = ContinuumFamily(p=p, q=q, lam=lam, dist=dist, n=n, m=m)
        hits = np.zeros(len(eps_list), dtype=int)
        grounds = []

        def one_sample(s, fam=fam, n=n):
            mat = fam.assemble(master_seed, s)
            row = []
            for eps in eps_list:
                hi = count_below(mat, e_center + eps)
                lo = count_below(mat, e_center - eps)
                row.append(hi > lo)
            e0 = (
                smallest_eigenpairs(mat, k=1).ground_energy
                if s < ground_samples
                else None
            )
            return row, e0, mat if s < max(1, audit_quota // len(n_list)) else None

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one_sample, range(samples_per_cell)))
        else:
            results = [one_sample(s) for s in range(samples_per_cell)]
        for row, e0, audit_mat in results:
            hits += np.asarray(row, dtype=int)
            if e0 is not None:
                grounds.append(e0)
            if audit_mat is not None:
                dense = np.sort(np.linalg.eigvalsh(audit_mat.toarray()))
                for k, eps in enumerate(eps_list):
                    ref_hi = int(np.searchsorted(dense, e_center + eps, side="left"))
                    ref_lo = int(np.searchsorted(dense, e_center - eps, side="left"))
                    audits_total += 1
                    audits_agree += int((ref_hi > ref_lo) == row[k])
        if grounds:
            g = np.asarray(grounds)
            se = float(g.std(ddof=1) / np.sqrt(len(g))) if len(g) > 1 else 0.0
            ground_stats.append((n, float(g.min()), float(g.mean()), se))
        for k, eps in enumerate(eps_list):
            hit_table[(n, eps)] = WegnerRecord(
                n=n, eps=eps, hits=int(hits[k]), samples=samples_per_cell
            )
    records = tuple(hit_table[key] for key in sorted(hit_table))
    coef, ses, excluded = _fit_loglog(records, q.d)
    return WegnerReport(
        e_center=float(e_center),
        records=records,
        nu_hat=float(coef[1]),
        nu_stderr=float(ses[1]),
        dim_hat=float(coef[2]),
        dim_stderr=float(ses[2]),
        n_excluded=excluded,
        audits_total=audits_total,
        audits_agree=audits_agree,
        ground_stats=tuple(ground_stats),
    )
