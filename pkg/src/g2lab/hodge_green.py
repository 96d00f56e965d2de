"""Hodge theory for the metric g_phi of a G2 field on the torus.

The codifferential is delta = (-1)^p * d * on p-forms.  The Green operator on
exact forms is computed by preconditioned conjugate gradients in the
phi-weighted inner product, preconditioned by the flat Green operator
(division by |k|^2 in Fourier space) composed with the flat projector onto
exact forms.  Exactness does not depend on the metric, so the flat projector
keeps iterates on the right subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegreeUnderflow, NoConvergence, PreconditionFailed
from .exterior7 import DIM, form_inner, hodge_star, interior_table, wedge_table
from .g2point import project2, project3
from .report import Report
from .torus_field import FormField, _fft, _ifft, d_spectral, random_form_field


@dataclass
class SolverConfig:
    rel_tol: float = 1e-10
    max_iter: int = 500
    reproject_every: int = 10

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class PotentialForm:
    u: FormField
    residual: float
    iterations: int
    telemetry: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Codifferential and Laplacian
# ---------------------------------------------------------------------------


def codiff(omega, phi):
    """delta omega = (-1)^p * d * omega with the star of g_phi."""
    p = omega.degree
    if p == 0:
        raise DegreeUnderflow("codifferential of a 0-form")
    m = phi.metric
    out = hodge_star(d_spectral(hodge_star(omega, m)), m)
    return out if p % 2 == 0 else -out


def hodge_laplacian(omega, phi):
    """Delta = d delta + delta d."""
    p = omega.degree
    out = None
    if p > 0:
        out = d_spectral(codiff(omega, phi))
    if p < DIM:
        term = codiff(d_spectral(omega), phi)
        out = term if out is None else out + term
    return out


def torsion_field(phi):
    """tau = delta phi for a closed G2 field."""
    return codiff(phi.phi, phi)


# ---------------------------------------------------------------------------
# Flat (constant-coefficient) operators in Fourier space
# ---------------------------------------------------------------------------


def _flat_exact_projection_hat(spec, p, grid):
    """Fourier-space flat projection onto exact p-forms: k ^ (k _| w) / |k|^2."""
    if p == 0:
        return np.zeros_like(spec)
    ks = [grid.wavenumbers[a] for a in range(DIM)]
    k2 = grid.k_squared
    safe = np.where(k2 > 0, k2, 1.0)
    inner_t = interior_table(p)
    wedge_t = wedge_table(1, p - 1)
    contracted = 0
    for a in grid.active_axes:
        contracted = contracted + (np.conj(ks[a])[..., None]) * (spec @ inner_t[a])
    if not grid.active_axes:
        return np.zeros_like(spec)
    out = 0
    for a in grid.active_axes:
        out = out + ks[a][..., None] * (contracted @ wedge_t[a])
    # ik ^ (conj(ik) _| w) = k ^ (k _| w) for real k.
    out = out / safe[..., None]
    out[k2 == 0] = 0.0
    return out


def flat_exact_projection(omega):
    spec = _fft(omega.grid, omega.coeffs)
    return omega._new(omega.degree, _ifft(omega.grid, _flat_exact_projection_hat(spec, omega.degree, omega.grid)))


def flat_green(omega, exact_only=True):
    """Flat Green operator: Fourier division by |k|^2 with zero modes removed."""
    grid = omega.grid
    spec = _fft(grid, omega.coeffs)
    if exact_only:
        spec = _flat_exact_projection_hat(spec, omega.degree, grid)
    k2 = grid.k_squared
    spec = spec / np.where(k2 > 0, k2, 1.0)[..., None]
    spec[k2 == 0] = 0.0
    return omega._new(omega.degree, _ifft(grid, spec))


# ---------------------------------------------------------------------------
# Green operator on exact forms
# ---------------------------------------------------------------------------


def _weight(a, phi):
    """Pointwise M a with <a, b>_phi = sum(a . M b) * cell volume."""
    m = phi.metric
    return np.einsum("...ij,...j->...i", m.raise_matrix(a.degree), a.coeffs) * phi.vol_density[..., None]


def weighted_norm(a, phi):
    return float(np.sqrt(max(phi.inner(a, a), 0.0)))


def green_exact(x, phi, cfg=None, u0=None):
    """Solve Delta_phi u = x for the exact form u, given an exact form x.

    Returns a PotentialForm whose residual is ||Delta u - x|| / ||x|| in the
    phi-weighted norm.  Raises NoConvergence if rel_tol is not reached.
    """
    cfg = cfg or SolverConfig()
    grid = x.grid
    cell = grid.cell_volume
    xnorm = weighted_norm(x, phi)
    if xnorm == 0.0:
        return PotentialForm(FormField.zeros(grid, x.degree), 0.0, 0, [(0, 0.0)])
    if u0 is None:
        u = FormField.zeros(grid, x.degree)
        err = x.copy()
    else:
        u = flat_exact_projection(u0)
        err = x - hodge_laplacian(u, phi)

    def precondition(r_arr):
        return flat_green(FormField(grid, x.degree, r_arr)).coeffs

    def resid(err_field, r_arr):
        return float(np.sqrt(max(np.sum(err_field.coeffs * r_arr) * cell, 0.0))) / xnorm

    r = _weight(err, phi)
    res = resid(err, r)
    telemetry = [(0, res)]
    if res <= cfg.rel_tol:
        return PotentialForm(u, res, 0, telemetry)
    z = precondition(r)
    direction = z.copy()
    rz = float(np.sum(r * z))
    for it in range(1, cfg.max_iter + 1):
        pf = FormField(grid, x.degree, direction)
        q = hodge_laplacian(pf, phi)
        kq = _weight(q, phi)
        denom = float(np.sum(direction * kq))
        if denom <= 0:
            break
        step = rz / denom
        u = u + pf * step
        err = err - q * step
        if it % cfg.reproject_every == 0:
            u = flat_exact_projection(u)
            err = x - hodge_laplacian(u, phi)
        r = _weight(err, phi)
        res = resid(err, r)
        telemetry.append((it, res))
        if res <= cfg.rel_tol:
            u = flat_exact_projection(u)
            err = x - hodge_laplacian(u, phi)
            res = resid(err, _weight(err, phi))
            telemetry[-1] = (it, res)
            if res <= cfg.rel_tol:
                return PotentialForm(u, res, it, telemetry)
            r = _weight(err, phi)
        z = precondition(r)
        rz_new = float(np.sum(r * z))
        direction = z + direction * (rz_new / rz)
        rz = rz_new
    raise NoConvergence(cfg.max_iter, res)


def green_apply(tangent, phi, cfg=None, u0=None):
    """Potential form u = G X of a tangent vector (an exact 3-form)."""
    x = tangent.X if hasattr(tangent, "X") else tangent
    return green_exact(x, phi, cfg, u0)


def green(x, phi, cfg=None):
    """G x for an exact form x, returning only the field."""
    return green_exact(x, phi, cfg).u


def green_coexact(y, phi, cfg=None):
    """G y for a coexact form y, using that * maps coexact forms to exact ones."""
    m = phi.metric
    return hodge_star(green_exact(hodge_star(y, m), phi, cfg).u, m)


# ---------------------------------------------------------------------------
# Hodge projections
# ---------------------------------------------------------------------------


def project_exact(beta, phi, cfg=None):
    """pi_d beta = G d delta beta."""
    return green(d_spectral(codiff(beta, phi)), phi, cfg)


def project_exact_alt(beta, phi, cfg=None):
    """pi_d beta = d G delta beta (the second formula, used for cross-checks)."""
    return d_spectral(green_coexact(codiff(beta, phi), phi, cfg))


def project_coexact(beta, phi, cfg=None):
    """pi_delta beta = G delta d beta."""
    return green_coexact(codiff(d_spectral(beta), phi), phi, cfg)


def project_harmonic(beta, phi, cfg=None):
    return beta - project_exact(beta, phi, cfg) - project_coexact(beta, phi, cfg)


def verify_coclosed14(alpha, phi, seed=0, n_tests=3, tol=1e-7, cfg=None):
    """Check pi_7(d alpha) = 0 and g(d alpha, phi) = g(alpha, tau) weakly."""
    m = phi.metric
    scale = max(weighted_norm(alpha, phi), 1e-300)
    delta_alpha = weighted_norm(codiff(alpha, phi), phi) if alpha.max_abs() else 0.0
    seven = weighted_norm(project2(alpha, phi).p7, phi) if alpha.max_abs() else 0.0
    if delta_alpha > 1e-8 * max(scale, 1.0) or seven > 1e-8 * max(scale, 1.0):
        raise PreconditionFailed(
            f"alpha must be coclosed and of type 14 (|delta a|={delta_alpha:.2e}, |pi7 a|={seven:.2e})")
    rep = Report("coclosed type-14 2-forms")
    da = d_spectral(alpha)
    p7 = project3(da, phi).p7
    rep.add("pi7(d alpha) = 0", 1, weighted_norm(p7, phi) / max(weighted_norm(da, phi), 1e-300), tol)
    worst = 0.0
    tau = phi.tau
    grid = alpha.grid
    active = [grid.dims[a] for a in grid.active_axes]
    band = min(2, min(active) // 2) if active else 0
    for k in range(n_tests):
        f = random_form_field(grid, 0, seed + k, band).coeffs[..., 0]
        lhs = phi.integrate(f * form_inner(da, phi.phi, m))
        rhs = phi.integrate(f * form_inner(alpha, tau, m))
        ref = phi.integrate(np.abs(f) * np.sqrt(form_inner(da, da, m) * 7.0)) + 1e-300
        worst = max(worst, abs(lhs - rhs) / ref)
    rep.add("integral f g(d alpha, phi) = integral f g(alpha, tau)", n_tests, worst, tol)
    return rep
