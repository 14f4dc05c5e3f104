"""Periodic backgrounds, compactly supported site potentials, displacement fields.

All evaluators take points as arrays whose last axis is the coordinate axis
(shape ``(..., d)``).  For d=1 a bare scalar or a shape ``(N,)`` array is
accepted and treated as ``N`` points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UnknownFamilyError(KeyError):
    """Requested builtin family name does not exist."""


class DisplacementTooLargeError(ValueError):
    """lam * max|omega| + r_q >= 1: site bumps may wrap ambiguously."""


def as_points(x, d):
    """Normalize ``x`` to shape ``(..., d)`` float array."""
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ValueError(f"points have last axis {x.shape[-1]}, expected d={d}")
    return x


def wrap_nearest(y, period=1.0):
    """Wrap offsets to the symmetric fundamental domain [-period/2, period/2)."""
    return y - period * np.round(y / period)


@dataclass(frozen=True)
class PeriodicPotential:
    """Z^d-periodic background.  ``value`` evaluates pointwise."""

    d: int
    name: str
    coefficients: tuple = ()

    def value(self, x):
        x = as_points(x, self.d)
        if self.name == "zero":
            return np.zeros(x.shape[:-1])
        if self.name == "cosine":
            out = np.zeros(x.shape[:-1])
            for j, c in enumerate(self.coefficients):
                out += c * np.cos(2.0 * np.pi * x[..., j])
            return out
        raise UnknownFamilyError(self.name)


@dataclass(frozen=True)
class BumpPart:
    """One scaled/shifted copy of the standard bump: amp * b((x-center)/rho)."""

    center: tuple
    rho: float
    amp: float


def _bump_value(y, rho):
    u = np.sum((y / rho) ** 2, axis=-1)
    out = np.zeros(u.shape)
    inside = u < 1.0
    out[inside] = np.exp(1.0 / (u[inside] - 1.0))
    return out


def _bump_gradient(y, rho):
    u = np.sum((y / rho) ** 2, axis=-1)
    out = np.zeros(y.shape)
    inside = u < 1.0
    ui = u[inside]
    f = np.exp(1.0 / (ui - 1.0))
    out[inside] = (-f / (ui - 1.0) ** 2 * (2.0 / rho**2))[..., None] * y[inside]
    return out


def _bump_hessian(y, rho):
    # d_i d_j b = b * [ 4 y_i y_j / rho^4 * ((u-1)^-4 + 2(u-1)^-3)
    #                   - 2 delta_ij / rho^2 * (u-1)^-2 ]
    d = y.shape[-1]
    u = np.sum((y / rho) ** 2, axis=-1)
    out = np.zeros(y.shape[:-1] + (d, d))
    inside = u < 1.0
    ui = u[inside]
    yi = y[inside]
    f = np.exp(1.0 / (ui - 1.0))
    w = ui - 1.0
    outer = yi[..., :, None] * yi[..., None, :]
    term1 = (4.0 / rho**4) * (w**-4 + 2.0 * w**-3)[..., None, None] * outer
    term2 = (2.0 / rho**2) * (w**-2)[..., None, None] * np.eye(d)
    out[inside] = f[..., None, None] * (term1 - term2)
    return out


@dataclass(frozen=True)
class SingleSitePotential:
    """Compactly supported C^2 site potential: a finite sum of smooth bumps.

    ``radius`` is the support radius; every part lies strictly inside the
    ball of that radius, and values/derivatives vanish identically outside.
    """

    d: int
    name: str
    radius: float
    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0.0 < self.radius < 0.5:
            raise ValueError("site support radius must lie in (0, 1/2)")
        for p in self.parts:
            reach = float(np.linalg.norm(p.center)) + p.rho
            if reach >= self.radius + 1e-12:
                raise ValueError("bump part escapes the declared support radius")

    def _offsets(self, x, part):
        return x - np.asarray(part.center, dtype=float)

    def value(self, x):
        x = as_points(x, self.d)
        out = np.zeros(x.shape[:-1])
        for p in self.parts:
            out += p.amp * _bump_value(self._offsets(x, p), p.rho)
        return out

    def gradient(self, x):
        x = as_points(x, self.d)
        out = np.zeros(x.shape)
        for p in self.parts:
            out += p.amp * _bump_gradient(self._offsets(x, p), p.rho)
        return out

    def hessian(self, x):
        x = as_points(x, self.d)
        out = np.zeros(x.shape + (self.d,))
        for p in self.parts:
            out += p.amp * _bump_hessian(self._offsets(x, p), p.rho)
        return out

    @property
    def is_zero(self):
        return not self.parts


@dataclass(frozen=True)
class DisplacementField:
    """Per-site displacements on the torus lattice {-n..n}^d, canonical order.

    ``values`` has shape ((2n+1)^d, d); row order matches ``site_lattice``.
    """

    n: int
    d: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        m = (2 * self.n + 1) ** self.d
        if vals.shape != (m, self.d):
            raise ValueError(f"field shape {vals.shape} != ({m}, {self.d})")
        object.__setattr__(self, "values", vals)

    @property
    def n_sites(self):
        return self.values.shape[0]

    def max_norm(self):
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def is_constant(self, zeta, tol=1e-10):
        return bool(np.max(np.abs(self.values - np.asarray(zeta, dtype=float))) <= tol)


def site_lattice(n, d):
    """Integer sites gamma in {-n..n}^d, lexicographic (C-order) rows."""
    axes = [np.arange(-n, n + 1)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def constant_field(n, d, zeta):
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    m = (2 * n + 1) ** d
    return DisplacementField(n=n, d=d, values=np.tile(zeta, (m, 1)))


def eval_total_potential(p, q, lam, field, x):
    """Background plus torus-periodized sum of displaced site potentials.

    The torus has side L = 2n+1; each site's bump is evaluated at the nearest
    periodic image.  Requires lam * max|omega| + r_q < 1 so that no bump
    wraps ambiguously across its own images.
    """
    if p.d != q.d or field.d != q.d:
        raise ValueError("dimension mismatch between p, q and field")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam * field.max_norm() + q.radius >= 1.0:
        raise DisplacementTooLargeError(
            f"lam*max|omega| + r_q = {lam * field.max_norm() + q.radius:.3f} >= 1"
        )
    x = as_points(x, q.d)
    period = 2 * field.n + 1
    out = p.value(x)
    if q.is_zero:
        return out
    centers = site_lattice(field.n, field.d) + lam * field.values
    for c in centers:
        out += q.value(wrap_nearest(x - c, period))
    return out


def periodic_family(name, d, coefficients=None):
    """Builtin periodic backgrounds: 'cosine' (sum of c_j cos 2 pi x_j), 'zero'."""
    if name == "zero":
        return PeriodicPotential(d=d, name="zero")
    if name == "cosine":
        if coefficients is None:
            coefficients = (1.0,) * d
        coefficients = tuple(float(c) for c in coefficients)
        if len(coefficients) != d:
            raise ValueError("cosine family needs one coefficient per axis")
        return PeriodicPotential(d=d, name="cosine", coefficients=coefficients)
    raise UnknownFamilyError(name)


def single_site_family(name, d, amplitude=0.5, radius=0.45):
    """Builtin site potentials.

    'sym-bump'   -- reflection-symmetric bump of the given support radius;
                    peak value amplitude * e^{-1} at the origin.
    'asym-bump'  -- two bumps of equal width but unequal height, the heavier
                    one shifted along -e_1; breaks reflection symmetry so the
                    band-edge drift vector is nonzero, and keeps the
                    constant-field energy monotone across the support at
                    moderate coupling (one descent basin).
    'zero'       -- identically zero (keeps a nominal support radius).
    """
    if name == "zero":
        return SingleSitePotential(d=d, name="zero", radius=radius, parts=())
    if name == "sym-bump":
        part = BumpPart(center=(0.0,) * d, rho=radius * (1.0 - 1e-9), amp=amplitude)
        return SingleSitePotential(d=d, name="sym-bump", radius=radius, parts=(part,))
    if name == "asym-bump":
        shift = (-0.444 * radius,) + (0.0,) * (d - 1)
        parts = (
            BumpPart(center=(0.0,) * d, rho=0.5 * radius, amp=0.5 * amplitude),
            BumpPart(center=shift, rho=0.5 * radius, amp=amplitude),
        )
        return SingleSitePotential(d=d, name="asym-bump", radius=radius, parts=parts)
    raise UnknownFamilyError(name)
