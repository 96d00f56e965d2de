"""Curvature of g_phi: a coordinate oracle, the closed-G2 formulas, and the Ebin pullback.

The coordinate computation differentiates the metric field spectrally and
knows nothing about G2 structures, so it serves as an independent check of
Ric = (1/4)|tau|^2 g - (1/8) j_phi(2 d tau - *(tau ^ tau)) and Scal = -(1/2)|tau|^2.

The sign of the j_phi term is fixed by the trace: Tr j_phi(eta) = 6 g(phi, eta),
g(phi, d tau) = |tau|^2 and g(phi, *(tau ^ tau)) = -|tau|^2 here, so only the
minus sign gives Tr Ric = -(1/2)|tau|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exterior7 import DIM, Form, form_inner, hodge_star, raise_coeffs, tensor_inner, to_full, wedge
from .g2point import frame_from_phi, isometric_family, op_j, project3, trace
from .report import Report
from .torus_field import d_spectral, partial, random_form_field
from .variations import var_metric, variation_input


@dataclass
class CurvaturePack:
    christoffel: np.ndarray  # Gamma^k_ij stored as [..., k, i, j]
    ricci: np.ndarray
    scal: np.ndarray


def _derivatives(values, grid):
    """Spectral partial derivatives along every axis, stacked as [..., axis, <value dims>]."""
    parts = [partial(values, grid, a) if a in grid.active_axes else np.zeros_like(values)
             for a in range(DIM)]
    return np.stack(parts, axis=DIM)


def coordinate_curvature(phi):
    """Christoffel symbols, Ricci tensor and scalar curvature from derivatives of g_ij."""
    grid = phi.grid
    g, gi = phi.metric.g, phi.metric.ginv
    dg = _derivatives(g, grid)  # [..., l, i, j] = d_l g_ij
    # Gamma_{k i j} = (1/2)(d_i g_jk + d_j g_ik - d_k g_ij)
    low = 0.5 * (np.einsum("...ijk->...kij", dg) + np.einsum("...jik->...kij", dg) - dg)
    gamma = np.einsum("...lk,...kij->...lij", gi, low)
    dgamma = _derivatives(gamma, grid)  # [..., m, l, i, j] = d_m Gamma^l_ij
    div = np.einsum("...llij->...ij", dgamma)
    contracted = np.einsum("...llj->...j", gamma)  # Gamma^l_lj
    grad_contracted = _derivatives(contracted, grid)  # [..., m, j] = d_m Gamma^l_lj
    ricci = (div - np.swapaxes(grad_contracted, -1, -2)
             + np.einsum("...m,...mij->...ij", contracted, gamma)
             - np.einsum("...ljm,...mil->...ij", gamma, gamma))
    ricci = 0.5 * (ricci + np.swapaxes(ricci, -1, -2))
    scal = np.einsum("...ij,...ij->...", ricci, gi)
    return CurvaturePack(gamma, ricci, scal)


def ricci_source(phi):
    """The 3-form 2 d tau - *(tau ^ tau) whose j_phi image carries the traceless Ricci part."""
    tau = phi.tau
    return d_spectral(tau) * 2.0 - hodge_star(wedge(tau, tau), phi.metric)


def bryant_ricci(phi):
    """(Ric, Scal) from the torsion of a closed G2 field."""
    tau = phi.tau
    tau_sq = form_inner(tau, tau, phi.metric)
    ricci = 0.25 * tau_sq[..., None, None] * phi.metric.g - 0.125 * op_j(phi.phi, ricci_source(phi), phi)
    return ricci, -0.5 * tau_sq


def _rel(diff, scale):
    return float(np.max(np.abs(diff)) / max(float(np.max(np.abs(scale))), 1e-300))


def _tensor_norm(t, phi):
    return np.sqrt(np.maximum(2.0 * tensor_inner(t, t, phi.metric), 0.0))


def curvature_checks(phi, tol=1e-6, trace_tol=1e-9, integral_tol=1e-8):
    """Compare the closed-G2 curvature formulas with the coordinate oracle."""
    from .flow_engine import energy

    rep = Report("curvature")
    pack = coordinate_curvature(phi)
    ric, scal = bryant_ricci(phi)
    scale = max(float(np.max(_tensor_norm(pack.ricci, phi))), 1e-300)
    rep.add("Bryant Ricci = coordinate Ricci", phi.grid.npoints,
            float(np.max(_tensor_norm(ric - pack.ricci, phi))) / scale, tol)
    rep.add("coordinate Scal = -1/2 |tau|^2", phi.grid.npoints, _rel(pack.scal - scal, scal), tol)
    rep.add("Tr_g Ric = Scal", phi.grid.npoints, _rel(trace(ric, phi) - scal, scal), trace_tol)
    e_d = energy("ED", phi)
    total = phi.integrate(pack.scal)
    rep.add("integral Scal vol = -1/2 E^D", 1, abs(total + 0.5 * e_d) / max(0.5 * e_d, 1e-300), integral_tol)
    source = ricci_source(phi)
    seven = project3(source, phi).p7
    rep.add("j_phi kills the 7 component of the Ricci source", phi.grid.npoints,
            _rel(op_j(phi.phi, seven, phi), op_j(phi.phi, source, phi)), trace_tol)
    return rep, pack


# ---------------------------------------------------------------------------
# Bakry-Emery Ricci bound
# ---------------------------------------------------------------------------


def bakry_emery(phi, lam, tol=1e-9):
    """Ric_f = -(2 lam + |tau|^2)/6 g - (1/2) tau_i^k tau_kj and its two-sided bound.

    Relative to g, Ric_f + (2 lam + |tau|^2)/6 g = -(1/2) tau o tau has
    eigenvalues in [0, |tau|^2 / 3] because tau o tau has spectrum in
    [-(2/3)|tau|^2, 0] for tau in the 14 component.
    """
    m = phi.metric
    tau = phi.tau
    tau_sq = form_inner(tau, tau, m)
    sq = to_full(tau) @ m.ginv @ to_full(tau)  # tau_i^k tau_kj
    base = -(2.0 * lam + tau_sq) / 6.0
    ric_f = base[..., None, None] * m.g - 0.5 * sq
    shifted = ric_f - base[..., None, None] * m.g
    chol = np.linalg.cholesky(m.g)
    linv = np.linalg.inv(chol)
    eig = np.linalg.eigvalsh(linv @ shifted @ np.swapaxes(linv, -1, -2))
    scale = np.maximum(tau_sq, 1e-300)
    lower = float(np.max(np.maximum(-eig[..., 0], 0.0) / scale)) if np.any(tau_sq > 0) else float(np.max(np.abs(eig)))
    upper = float(np.max(np.maximum(eig[..., -1] - tau_sq / 3.0, 0.0) / scale))
    rep = Report(f"Bakry-Emery bound (lambda = {lam:g})")
    rep.add("-(2 lam + |tau|^2)/6 g <= Ric_f", phi.grid.npoints, lower, tol)
    rep.add("Ric_f <= -(2 lam - |tau|^2)/6 g", phi.grid.npoints, upper, tol)
    return rep, ric_f


# ---------------------------------------------------------------------------
# Ebin metric pullback
# ---------------------------------------------------------------------------


def ebin_pushforward(phi, X):
    """F_* X = (1/2) j_phi X - (1/3) g(X, phi) g: the metric variation induced by X."""
    x = X.X if hasattr(X, "X") else X
    return 0.5 * op_j(phi.phi, x, phi) - (form_inner(x, phi.phi, phi.metric) / 3.0)[..., None, None] * phi.metric.g


def _quartic_pairing(phi, x, y):
    """X_a^{jk} Y^{abc} psi_{jkbc} + phi_{ajk} X^{ijk} phi_{ibc} Y^{abc}, pointwise."""
    m = phi.metric
    big_p, big_s = to_full(phi.phi), to_full(phi.psi)
    rx = to_full(Form(3, raise_coeffs(x, m)))
    ry = to_full(Form(3, raise_coeffs(y, m)))
    x_mixed = np.einsum("...ijk,...ia->...ajk", rx, m.g)
    first = np.einsum("...ajk,...abc,...jkbc->...", x_mixed, ry, big_s, optimize=True)
    second = np.einsum("...ajk,...ijk,...ibc,...abc->...", big_p, rx, big_p, ry, optimize=True)
    return first + second


def ebin_pullback_sides(phi, X, Y):
    """(int g(F_* X, F_* Y) vol, right-hand side of the pullback formula)."""
    x = X.X if hasattr(X, "X") else X
    y = Y.X if hasattr(Y, "X") else Y
    m = phi.metric
    lhs = phi.integrate(tensor_inner(ebin_pushforward(phi, x), ebin_pushforward(phi, y), m))
    gx = form_inner(x, phi.phi, m)
    gy = form_inner(y, phi.phi, m)
    rhs = 0.75 * phi.inner(x, y) - phi.integrate(11.0 / 18.0 * gx * gy - _quartic_pairing(phi, x, y) / 16.0)
    return lhs, rhs


def seven_direction(phi, eta):
    """The 3-form *(eta ^ phi) in the 7 component."""
    return hodge_star(wedge(eta, phi.phi), phi.metric)


def isometric_tangent(fr, eta_unit, s, h=1e-4):
    """Central difference of s -> isometric_family(cos s, sin s eta_unit) at s."""
    def point(t):
        return isometric_family(fr, np.cos(t), eta_unit * np.sin(t))
    return (point(s + h) - point(s - h)) / (2.0 * h), point(s)


def ebin_checks(phi, seed=0, n_pairs=3, band_limit=1, tol=1e-9, kernel_tol=1e-7, family_tol=1e-8):
    """Pullback equality, kernel of F_* and Bryant's isometric family."""
    from .torus_field import random_exact_3form

    rep = Report("Ebin pullback")
    grid = phi.grid
    m = phi.metric
    worst = worst_push = 0.0
    for k in range(n_pairs):
        x = random_exact_3form(grid, seed + 2 * k, band_limit).X
        y = random_form_field(grid, 3, seed + 2 * k + 1, band_limit)
        lhs, rhs = ebin_pullback_sides(phi, x, y)
        scale = np.sqrt(abs(ebin_pullback_sides(phi, x, x)[0] * ebin_pullback_sides(phi, y, y)[0]))
        worst = max(worst, abs(lhs - rhs) / max(scale, 1e-300))
        push = ebin_pushforward(phi, x)
        ref = var_metric(variation_input(phi, x))
        worst_push = max(worst_push, _rel(push - ref, ref))
    rep.add("pullback of the Ebin metric", n_pairs, worst, tol)
    rep.add("F_* = metric variation", n_pairs, worst_push, 1e-10)
    eta = random_form_field(grid, 1, seed + 100, band_limit)
    seven = seven_direction(phi, eta)
    push = ebin_pushforward(phi, seven)
    rep.add("F_* vanishes on the 7 component", 1, _rel(push, 0.5 * op_j(phi.phi, seven + phi.phi, phi)), kernel_tol)
    lhs, rhs = ebin_pullback_sides(phi, seven, seven)
    rep.add("pullback of a 7-direction is zero on both sides", 1, max(abs(lhs), abs(rhs)) / phi.inner(seven, seven),
            kernel_tol)

    eta_flat = Form(1, eta.coeffs.reshape(-1, eta.coeffs.shape[-1]))
    fr_flat = frame_from_phi(Form(3, phi.phi.coeffs.reshape(-1, 35)))
    norm = np.sqrt(form_inner(eta_flat, eta_flat, fr_flat.metric))
    unit = eta_flat * (1.0 / norm)
    worst_tan = worst_metric = 0.0
    for s in (0.0, 0.4, 1.1):
        tangent, point = isometric_tangent(fr_flat, unit, s)
        moved = frame_from_phi(point)
        worst_metric = max(worst_metric, _rel(moved.metric.g - fr_flat.metric.g, fr_flat.metric.g))
        push = 0.5 * op_j(point, tangent, moved) - (form_inner(tangent, point, moved.metric) / 3.0)[..., None, None] * moved.metric.g
        worst_tan = max(worst_tan, _rel(push, np.abs(tangent.coeffs).max() * np.abs(moved.metric.g).max()))
    rep.add("F_* vanishes on isometric-family tangents", 3, worst_tan, kernel_tol)
    rep.add("isometric family preserves the metric", 3, worst_metric, family_tol)
    return rep


def curvature_suite(phi, lams=(0.0, 1.3, -2.0), seed=0):
    """All curvature, Bakry-Emery and Ebin checks on one field."""
    rep = Report("curvature suite")
    rep.extend(curvature_checks(phi)[0])
    for lam in lams:
        rep.extend(bakry_emery(phi, lam)[0])
    rep.extend(ebin_checks(phi, seed=seed))
    return rep


CURVATURE_HEADER = ["check", "max_violation", "grid"]


def report_rows(rep, grid):
    dims = "x".join(str(n) for n in grid.dims)
    return [[r.name, r.max_residual, dims] for r in rep.results]
