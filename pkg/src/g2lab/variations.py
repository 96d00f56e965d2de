"""First variations of the metric quantities of a closed G2 field.

Every operator here is a pure function of the background field phi, a tangent
direction X = phi_t, and (where relevant) a t-independent input form.  The
helpers at the bottom compare each one with central differences along the
affine path phi + t X.

The composite "star star_t" of a p-form is written ``var_star``: it is the
p-form * (d/dt *) omega, so the derivative of the Hodge star itself is
``*(var_star(omega))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegreeUnderflow, NonPositiveForm, NotClosed
from .exterior7 import form_inner, hodge_star, wedge
from .g2point import op_i, op_j, project3
from .hodge_green import SolverConfig, codiff, green, hodge_laplacian, project_exact
from .report import Report
from .torus_field import FormField, G2Field, TangentVector, d_spectral, random_form_field


@dataclass
class VariationInput:
    """Background field, tangent direction and the type pieces of the direction."""

    phi: G2Field
    X: TangentVector
    f0: np.ndarray
    f1: FormField
    f3: FormField

    @property
    def x(self):
        return self.X.X

    def reconstruction_error(self):
        """max |3 f0 phi + *(f1 ^ phi) + f3 - X|."""
        m = self.phi.metric
        back = self.phi.phi * (3.0 * self.f0) + hodge_star(wedge(self.f1, self.phi.phi), m) + self.f3
        return float(np.max(np.abs((back - self.x).coeffs)))


def variation_input(phi, X):
    if not isinstance(X, TangentVector):
        X = TangentVector(None, X)
    parts = project3(X.X, phi)
    return VariationInput(phi, X, parts.f0, parts.f1, parts.f3)


def _g_phi_x(vi):
    return 21.0 * vi.f0


# ---------------------------------------------------------------------------
# Pointwise variations
# ---------------------------------------------------------------------------


def var_metric(vi):
    """g_t = (1/2) j_phi(f3) + 2 f0 g, as a (..., 7, 7) tensor field."""
    half_j = 0.5 * op_j(vi.phi.phi, vi.f3, vi.phi)
    return half_j + 2.0 * vi.f0[..., None, None] * vi.phi.metric.g


def var_vol(vi):
    """Derivative of the volume density: 7 f0 s = (1/3) g(phi, X) s."""
    return 7.0 * vi.f0 * vi.phi.vol_density


def var_star(vi, omega):
    """The p-form * (d/dt *) omega for a t-independent p-form omega.

    Equals ((1 + p)/3) g(phi, X) omega - (1/2) i_omega j_phi(X).
    """
    p = omega.degree
    scale = (1.0 + p) / 3.0 * _g_phi_x(vi)
    if p == 0:
        return omega * scale
    j_x = op_j(vi.phi.phi, vi.x, vi.phi)
    return omega * scale - op_i(j_x, omega, vi.phi) * 0.5


def var_star_phi(vi):
    """The specialization to omega = phi: f0 phi - (1/2) i_phi j_phi f3."""
    return vi.phi.phi * vi.f0 - op_i(op_j(vi.phi.phi, vi.f3, vi.phi), vi.phi.phi, vi.phi) * 0.5


def star_derivative(vi, omega):
    """d/dt of *omega, obtained as *(var_star(omega)) since ** = 1."""
    return hodge_star(var_star(vi, omega), vi.phi.metric)


def var_psi(vi):
    """psi_t = 4 f0 psi + f1 ^ phi - *f3."""
    m = vi.phi.metric
    return vi.phi.psi * (4.0 * vi.f0) + wedge(vi.f1, vi.phi.phi) - hodge_star(vi.f3, m)


# ---------------------------------------------------------------------------
# Variations involving derivatives
# ---------------------------------------------------------------------------


def var_delta(vi, omega):
    """Derivative of delta omega for a t-independent p-form omega.

    -7p f0 delta(omega) + (7 + 7p) delta(f0 omega)
        + (1/2) i_{delta omega} j_phi(X) - (1/2) delta(i_omega j_phi(X)).
    """
    p = omega.degree
    if p == 0:
        raise DegreeUnderflow("codifferential of a 0-form")
    phi = vi.phi
    j_x = op_j(phi.phi, vi.x, phi)
    d_omega = codiff(omega, phi)
    out = d_omega * (-7.0 * p * vi.f0)
    out = out + codiff(omega * vi.f0, phi) * (7.0 + 7.0 * p)
    if p > 1:
        out = out + op_i(j_x, d_omega, phi) * 0.5
    return out - codiff(op_i(j_x, omega, phi), phi) * 0.5


def var_delta_composite(vi, omega):
    """The same derivative written as -**_t(delta omega) + delta(**_t omega)."""
    phi = vi.phi
    return codiff(var_star(vi, omega), phi) - var_star(vi, codiff(omega, phi))


def var_torsion(vi):
    """Derivative of tau = delta phi along phi + t X.

    -g(phi,X) tau + (1/3) delta[g(phi,X) phi] + (1/2) i_tau j_phi(X) - delta X
        - (1/2) delta *[phi ^ *(phi ^ X)].
    The last term is 2 delta(pi_7 X); with the sign conventions used here
    pi_7 X = -(1/4) *[phi ^ *(phi ^ X)].
    """
    phi = vi.phi
    m = phi.metric
    x = vi.x
    gx = _g_phi_x(vi)
    tau = phi.tau
    out = tau * (-gx)
    out = out + codiff(phi.phi * gx, phi) / 3.0
    out = out + op_i(op_j(phi.phi, x, phi), tau, phi) * 0.5
    out = out - codiff(x, phi)
    twisted = hodge_star(wedge(phi.phi, hodge_star(wedge(phi.phi, x), m)), m)
    return out - codiff(twisted, phi) * 0.5


def var_laplacian_closed(vi, omega, closed_tol=1e-9):
    """Derivative of Delta omega for a closed t-independent omega: d[delta **_t omega - **_t delta omega]."""
    if omega.degree < 7:
        d_omega = d_spectral(omega)
        scale = max(omega.max_abs(), 1.0)
        if d_omega.max_abs() > closed_tol * scale:
            raise NotClosed(f"|d omega| = {d_omega.max_abs():.2e}")
    return d_spectral(var_delta_composite(vi, omega))


def laplacian_along_laplacian_flow(phi):
    """(Delta phi)_t along phi_t = Delta phi, in closed form.

    -Delta^2 phi + (1/3) d delta[|tau|^2 phi] + (1/2) d[i_tau j_phi(d tau)] - d[|tau|^2 tau].
    """
    tau = phi.tau
    m = phi.metric
    lap = d_spectral(tau)
    tau_sq = form_inner(tau, tau, m)
    out = hodge_laplacian(lap, phi) * -1.0
    out = out + d_spectral(codiff(phi.phi * tau_sq, phi)) / 3.0
    out = out + d_spectral(op_i(op_j(phi.phi, lap, phi), tau, phi)) * 0.5
    return out - d_spectral(tau * tau_sq)


# ---------------------------------------------------------------------------
# Green operator and exact projection
# ---------------------------------------------------------------------------


def var_green(vi, Y, cfg=None):
    """Derivative of G Y for a fixed exact Y: G d[**_t(delta u)] - pi_d(**_t u), u = G Y."""
    phi = vi.phi
    y = Y.X if isinstance(Y, TangentVector) else Y
    u = green(y, phi, cfg)
    first = green(d_spectral(var_star(vi, codiff(u, phi))), phi, cfg)
    return first - project_exact(var_star(vi, u), phi, cfg)


def var_pi_d(vi, Y, cfg=None):
    """Derivative of pi_d Y for a fixed Y: pi_d **_t (Y - pi_d Y)."""
    phi = vi.phi
    rest = Y - project_exact(Y, phi, cfg)
    return project_exact(var_star(vi, rest), phi, cfg)


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def _as_array(value):
    if isinstance(value, FormField):
        return value.coeffs
    return np.asarray(value, dtype=float)


def central_difference(quantity, phi, x, h, max_halvings=4):
    """(Q(phi + h X) - Q(phi - h X)) / 2h, halving h while positivity fails.

    Returns (derivative, h actually used).
    """
    for _ in range(max_halvings + 1):
        try:
            plus = G2Field(phi.phi + x * h)
            minus = G2Field(phi.phi - x * h)
        except NonPositiveForm:
            h *= 0.5
            continue
        return (_as_array(quantity(plus)) - _as_array(quantity(minus))) / (2.0 * h), h
    raise NonPositiveForm(f"phi +- h X not positive down to h = {h:.1e}")


def fd_mismatch(quantity, predicted, phi, x, h):
    """Relative max-norm mismatch between the formula and central differences."""
    fd, used = central_difference(quantity, phi, x, h)
    pred = _as_array(predicted)
    scale = max(float(np.max(np.abs(pred))), 1e-300)
    return float(np.max(np.abs(fd - pred))) / scale, used


@dataclass
class VariationCheck:
    operator: str
    h: float
    mismatch: float
    order_ratio: float
    tolerance: float


def _cases(vi, seed, cfg):
    """(name, quantity along the path, predicted derivative, tolerance, wants order check)."""
    phi = vi.phi
    grid = phi.grid
    active = [grid.dims[a] for a in grid.active_axes]
    band = min(2, min(active) // 2) if active else 0
    omega2 = random_form_field(grid, 2, seed + 11, band)
    omega3 = random_form_field(grid, 3, seed + 12, band)
    closed = d_spectral(random_form_field(grid, 2, seed + 13, band))
    y_exact = d_spectral(random_form_field(grid, 2, seed + 14, band, zero_mean=True))
    y_any = random_form_field(grid, 3, seed + 15, band)
    return [
        ("varMetric", lambda f: f.metric.g, var_metric(vi), 1e-6, True),
        ("varVol", lambda f: f.vol_density, var_vol(vi), 1e-6, True),
        ("varStar[p=2]", lambda f: hodge_star(omega2, f.metric), star_derivative(vi, omega2), 1e-6, True),
        ("varStar[p=3]", lambda f: hodge_star(omega3, f.metric), star_derivative(vi, omega3), 1e-6, True),
        ("varPsi", lambda f: f.psi, var_psi(vi), 1e-6, True),
        ("varDelta[p=3]", lambda f: codiff(omega3, f), var_delta(vi, omega3), 1e-6, True),
        ("varDelta[p=2]", lambda f: codiff(omega2, f), var_delta(vi, omega2), 1e-6, True),
        ("varTorsion", lambda f: f.tau, var_torsion(vi), 1e-6, True),
        ("varLaplacianClosed", lambda f: hodge_laplacian(closed, f), var_laplacian_closed(vi, closed), 1e-6, True),
        ("varGreen", lambda f: green(y_exact, f, cfg), var_green(vi, y_exact, cfg), 1e-5, False),
        ("varPiD", lambda f: project_exact(y_any, f, cfg), var_pi_d(vi, y_any, cfg), 1e-5, False),
    ]


def verify_variations(phi, X, h=1e-4, seed=0, cfg=None, order_h=None, include=None):
    """Compare every variation formula with central differences.

    The order ratio is mismatch(order_h) / mismatch(order_h / 2); it is close
    to 4 for a second-order difference quotient.  ``order_h`` defaults to h.
    Returns (Report, list of VariationCheck rows).
    """
    cfg = cfg or SolverConfig(rel_tol=1e-12, max_iter=1000)
    vi = variation_input(phi, X)
    x = vi.x
    order_h = h if order_h is None else order_h
    rep = Report("first variations against central differences")
    rows = []
    for name, quantity, predicted, tol, wants_order in _cases(vi, seed, cfg):
        if include is not None and name not in include:
            continue
        mismatch, used = fd_mismatch(quantity, predicted, phi, x, h)
        ratio = float("nan")
        if wants_order:
            coarse, _ = fd_mismatch(quantity, predicted, phi, x, order_h)
            fine, _ = fd_mismatch(quantity, predicted, phi, x, order_h / 2)
            ratio = coarse / max(fine, 1e-300)
            rep.add(f"{name} order ratio in [3.5, 4.5]", 1, abs(ratio - 4.0), 0.5)
        rep.add(f"{name} vs central differences", 1, mismatch, tol)
        rows.append(VariationCheck(name, used, mismatch, ratio, tol))
    return rep, rows
