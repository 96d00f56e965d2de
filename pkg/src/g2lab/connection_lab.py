"""Metrics and connections on the space of closed G2 structures in a class.

Tangent vectors are exact 3-forms.  For tangents X, Y, Z the potentials are
u = G X, v = G Y, w = G Z.  The three metrics are

    Dirichlet  G^D(X, Y) = int g(delta u, delta v) vol = int g(G X, Y) vol
    Laplacian  G^L(X, Y) = int g(X, Y) vol
    L2         G^M(X, Y) = int g(u, v) vol

and a connection is D_t Y = Y_t + P(phi, phi_t, Y) for a bilinear P with
exact values.  Every P below is written term by term in the order of its
defining formula.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveForm, PositivityLost
from .exterior7 import form_inner
from .g2point import op_i, op_j
from .hodge_green import SolverConfig, codiff, green, green_exact, project_exact
from .report import Report
from .torus_field import G2Field, TangentVector, d_spectral
from .variations import var_star, variation_input

METRIC_KINDS = ("Dirichlet", "Laplacian", "L2")
SYMMETRIC_KINDS = ("DD", "DL", "DM")
MATCHED_METRIC = {"PA": "Dirichlet", "PB": "Dirichlet", "PC": "Dirichlet", "DD": "Dirichlet",
                  "DL": "Laplacian", "DM": "L2"}


@dataclass(frozen=True)
class Combo:
    """The affine combination a P^A + b P^B + c P^C."""

    a: float
    b: float
    c: float

    @property
    def affine(self):
        return abs(self.a + self.b + self.c - 1.0) < 1e-12

    def __str__(self):
        return f"Combo({self.a:g},{self.b:g},{self.c:g})"


def _form(x):
    return x.X if isinstance(x, TangentVector) else x


class WarmStart:
    """Initial guesses for a repeated sequence of Green solves.

    Solves are matched by call order: the k-th solve of one evaluation starts
    from the k-th solution of the previous evaluation.
    """

    def __init__(self):
        self.previous = []
        self.current = []

    def next_guess(self):
        k = len(self.current)
        return self.previous[k] if k < len(self.previous) else None

    def advance(self):
        self.previous, self.current = self.current, []


class Potentials:
    """Green-operator solves at a fixed phi, memoized per input object."""

    def __init__(self, phi, cfg=None, warm=None):
        self.phi = phi
        self.cfg = cfg or SolverConfig()
        self.warm = warm
        self._cache = {}

    def _solve(self, x):
        if self.warm is None:
            return green(x, self.phi, self.cfg)
        u = green_exact(x, self.phi, self.cfg, u0=self.warm.next_guess()).u
        self.warm.current.append(u)
        return u

    def __call__(self, x):
        x = _form(x)
        key = id(x)
        if key not in self._cache:
            self._cache[key] = (x, self._solve(x))
        return self._cache[key][1]

    def delta(self, x):
        return codiff(x, self.phi)

    def pi_d(self, beta):
        return self._solve(d_spectral(codiff(beta, self.phi)))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def metric_eval(kind, phi, X, Y, cfg=None, solver=None):
    """G^kind(X, Y) at phi."""
    x, y = _form(X), _form(Y)
    if kind == "Laplacian":
        return phi.inner(x, y)
    sv = solver or Potentials(phi, cfg)
    if kind == "Dirichlet":
        return phi.inner(codiff(sv(x), phi), codiff(sv(y), phi))
    if kind == "L2":
        return phi.inner(sv(x), sv(y))
    raise ValueError(f"unknown metric {kind!r}")


def dirichlet_pairing(phi, X, Y, cfg=None, solver=None):
    """The second expression int g(G X, Y) vol of the Dirichlet metric."""
    sv = solver or Potentials(phi, cfg)
    return phi.inner(sv(X), _form(Y))


# ---------------------------------------------------------------------------
# Connection operators
# ---------------------------------------------------------------------------


def _j(phi, a, b):
    return op_j(a, b, phi)


def _gphi(phi, x):
    return form_inner(phi.phi, x, phi.metric)


def p_a(phi, X, Y, sv):
    """(1/2) d[ **_t(delta v) ] with phi_t = X."""
    vi = variation_input(phi, X)
    return d_spectral(var_star(vi, sv.delta(sv(Y)))) * 0.5


def p_b(phi, X, Y, sv):
    """P^A + (1/2){ pi_d(**_t Y) - d delta(**_t v) }."""
    vi = variation_input(phi, X)
    y = _form(Y)
    v = sv(y)
    extra = sv.pi_d(var_star(vi, y)) - d_spectral(codiff(var_star(vi, v), phi))
    return p_a(phi, X, Y, sv) + extra * 0.5


def p_c(phi, X, Y, sv):
    """P^A + (1/2){ pi_d(**_t Y) - 28 d delta(f0 v) + (1/2) pi_d(i_Y j_phi X) }."""
    vi = variation_input(phi, X)
    y = _form(Y)
    v = sv(y)
    extra = sv.pi_d(var_star(vi, y))
    extra = extra - d_spectral(codiff(v * vi.f0, phi)) * 28.0
    extra = extra + sv.pi_d(op_i(_j(phi, phi.phi, _form(X)), y, phi)) * 0.5
    return p_a(phi, X, Y, sv) + extra * 0.5


def torsion_pa(phi, X, Y, sv):
    """T^{P^A}(X, Y) = P^A(phi, X, Y) - P^A(phi, Y, X)."""
    return p_a(phi, X, Y, sv) - p_a(phi, Y, X, sv)


def s_operator(phi, Y, Z, sv):
    """S(Y, Z) = (1/4) d[i_{delta w} j_phi Y - 2 g(Y, phi) delta w]
                 + (1/2) d delta[g(delta v, delta w) phi - i_phi j_{delta v} delta w]."""
    y = _form(Y)
    dv, dw = sv.delta(sv(Y)), sv.delta(sv(Z))
    first = op_i(_j(phi, phi.phi, y), dw, phi) - dw * (2.0 * _gphi(phi, y))
    second = phi.phi * form_inner(dv, dw, phi.metric) - op_i(_j(phi, dv, dw), phi.phi, phi)
    return d_spectral(first) * 0.25 + d_spectral(codiff(second, phi)) * 0.5


def contorsion(phi, X, Y, sv):
    """K(X, Y) = (1/2)[T^{P^A}(X, Y) + S(X, Y) + S(Y, X)]."""
    return (torsion_pa(phi, X, Y, sv) + s_operator(phi, X, Y, sv) + s_operator(phi, Y, X, sv)) * 0.5


def p_d(phi, X, Y, sv):
    """P^D = (1/4) d[2 g(phi,X) delta v + 2 g(phi,Y) delta u - i_{delta v} j_phi X - i_{delta u} j_phi Y]
             - (1/2) d delta[g(delta u, delta v) phi - i_phi j_{delta u} delta v]."""
    x, y = _form(X), _form(Y)
    du, dv = sv.delta(sv(X)), sv.delta(sv(Y))
    first = (dv * (2.0 * _gphi(phi, x)) + du * (2.0 * _gphi(phi, y))
             - op_i(_j(phi, phi.phi, x), dv, phi) - op_i(_j(phi, phi.phi, y), du, phi))
    second = phi.phi * form_inner(du, dv, phi.metric) - op_i(_j(phi, du, dv), phi.phi, phi)
    return d_spectral(first) * 0.25 - d_spectral(codiff(second, phi)) * 0.5


def p_l(phi, X, Y, sv):
    """P^L = (2/3) pi_d[g(X,phi) Y + g(phi,Y) X - g(X,Y) phi]
             - (1/4) pi_d[i_Y j_phi X + i_X j_phi Y - i_phi j_X Y]."""
    x, y = _form(X), _form(Y)
    m = phi.metric
    first = y * _gphi(phi, x) + x * _gphi(phi, y) - phi.phi * form_inner(x, y, m)
    second = (op_i(_j(phi, phi.phi, x), y, phi) + op_i(_j(phi, phi.phi, y), x, phi)
              - op_i(_j(phi, x, y), phi.phi, phi))
    return sv.pi_d(first * (2.0 / 3.0) - second * 0.25)


def p_m(phi, X, Y, sv):
    """P^M, the Levi-Civita term of the L2 metric, with u = G X, v = G Y.

      (1/2) d delta d[g(phi,X) delta G v + g(phi,Y) delta G u]
    - (1/4) d delta d[i_{delta G v} j_phi X + i_{delta G u} j_phi Y]
    + (1/2) d[g(phi,X) delta v + g(phi,Y) delta u] - (1/4) d[i_{delta v} j_phi X + i_{delta u} j_phi Y]
    - (2/3) d delta[g(phi,X) v + g(phi,Y) u] + (1/4) d delta[i_v j_phi X + i_u j_phi Y]
    - (1/2) d delta d delta[g(delta u, delta G v) phi + g(delta v, delta G u) phi
                            - i_phi j_{delta u}(delta G v) - i_phi j_{delta v}(delta G u)]
    + d delta d delta[(2/3) g(u, v) phi - (1/4) i_phi j_u v].

    The g(., .) phi terms in the fourth line carry coefficient 1: that is the
    value for which the pairing with G^2 Z is symmetric up to the terms the
    compatibility condition requires (checked by finite differences).
    """
    x, y = _form(X), _form(Y)
    m = phi.metric
    u, v = sv(x), sv(y)
    gu, gv = sv(u), sv(v)
    du, dv = sv.delta(u), sv.delta(v)
    dgu, dgv = sv.delta(gu), sv.delta(gv)
    gx, gy = _gphi(phi, x), _gphi(phi, y)
    jx, jy = _j(phi, phi.phi, x), _j(phi, phi.phi, y)

    def d_delta(a):
        return d_spectral(codiff(a, phi))

    def d_delta_d(a):
        return d_spectral(codiff(d_spectral(a), phi))

    out = d_delta_d(dgv * gx + dgu * gy) * 0.5
    out = out - d_delta_d(op_i(jx, dgv, phi) + op_i(jy, dgu, phi)) * 0.25
    out = out + d_spectral(dv * gx + du * gy) * 0.5
    out = out - d_spectral(op_i(jx, dv, phi) + op_i(jy, du, phi)) * 0.25
    out = out - d_delta(v * gx + u * gy) * (2.0 / 3.0)
    out = out + d_delta(op_i(jx, v, phi) + op_i(jy, u, phi)) * 0.25
    cross = (phi.phi * (form_inner(du, dgv, m) + form_inner(dv, dgu, m))
             - op_i(_j(phi, du, dgv), phi.phi, phi) - op_i(_j(phi, dv, dgu), phi.phi, phi))
    out = out - d_delta(d_delta(cross)) * 0.5
    last = phi.phi * (form_inner(u, v, m) * (2.0 / 3.0)) - op_i(_j(phi, u, v), phi.phi, phi) * 0.25
    return out + d_delta(d_delta(last))


_OPERATORS = {"PA": p_a, "PB": p_b, "PC": p_c, "DD": p_d, "DL": p_l, "DM": p_m}


def p_operator(kind, phi, X, Y, cfg=None, solver=None):
    """P^kind(phi, X, Y) for kind in PA, PB, PC, DD, DL, DM or a Combo."""
    sv = solver or Potentials(phi, cfg)
    if _form(X).max_abs() == 0.0 or _form(Y).max_abs() == 0.0:
        return _form(Y) * 0.0
    if isinstance(kind, Combo):
        out = p_a(phi, X, Y, sv) * kind.a
        out = out + p_b(phi, X, Y, sv) * kind.b
        return out + p_c(phi, X, Y, sv) * kind.c
    try:
        fn = _OPERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown connection {kind!r}") from None
    return fn(phi, X, Y, sv)


def torsion_eval(kind, phi, X, Y, cfg=None, solver=None):
    """T(X, Y) = P(phi, X, Y) - P(phi, Y, X)."""
    sv = solver or Potentials(phi, cfg)
    return p_operator(kind, phi, X, Y, solver=sv) - p_operator(kind, phi, Y, X, solver=sv)


def contorsion_eval(phi, X, Y, cfg=None, solver=None):
    sv = solver or Potentials(phi, cfg)
    return contorsion(phi, X, Y, sv)


def torsion_pa_pairing(phi, X, Y, Z, cfg=None, solver=None):
    """The integral formula for G^D(T^{P^A}(X, Y), Z).

    (1/2) int [g(phi,X) g(delta v, delta w) - g(phi,Y) g(delta u, delta w)]
    - (1/4) int [g(i_{delta v} j_phi X, delta w) - g(i_{delta u} j_phi Y, delta w)].
    """
    sv = solver or Potentials(phi, cfg)
    m = phi.metric
    x, y = _form(X), _form(Y)
    du, dv, dw = (sv.delta(sv(a)) for a in (X, Y, Z))
    first = _gphi(phi, x) * form_inner(dv, dw, m) - _gphi(phi, y) * form_inner(du, dw, m)
    second = (form_inner(op_i(_j(phi, phi.phi, x), dv, phi), dw, m)
              - form_inner(op_i(_j(phi, phi.phi, y), du, phi), dw, m))
    return phi.integrate(0.5 * first - 0.25 * second)


# ---------------------------------------------------------------------------
# Covariant derivatives along paths
# ---------------------------------------------------------------------------


_FOURTH_ORDER = ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0))


def time_derivative(fn, t0, h):
    """Fourth-order central difference of a form-valued function of t."""
    out = None
    for k, c in _FOURTH_ORDER:
        term = fn(t0 + k * h) * (c / h)
        out = term if out is None else out + term
    return out


def covariant_derivative(kind, path, t0, cfg=None, h=1e-3):
    """D_t Y at t0 for a path t -> (phi(t) as a 3-form field, Y(t) as an exact 3-form).

    phi_t and Y_t come from fourth-order central differences in t.
    """
    try:
        phi = G2Field(path(t0)[0])
    except NonPositiveForm as exc:
        raise PositivityLost(str(exc)) from exc
    phi_t = time_derivative(lambda t: path(t)[0], t0, h)
    y_t = time_derivative(lambda t: path(t)[1], t0, h)
    return y_t + p_operator(kind, phi, phi_t, path(t0)[1], cfg)


def leibniz_residual(kind, path, f, f_t, t0, cfg=None, h=1e-3):
    """Relative max-norm of D_t(f Y) - f_t Y - f D_t Y for a scalar function f(t)."""
    scaled = lambda t: (path(t)[0], path(t)[1] * f(t))  # noqa: E731
    lhs = covariant_derivative(kind, scaled, t0, cfg, h)
    rhs = path(t0)[1] * f_t(t0) + covariant_derivative(kind, path, t0, cfg, h) * f(t0)
    return (lhs - rhs).max_abs() / max(rhs.max_abs(), 1e-300)


# ---------------------------------------------------------------------------
# Compatibility along affine paths
# ---------------------------------------------------------------------------


@dataclass
class CompatibilityRow:
    connection: str
    metric: str
    h: float
    lhs: float
    rhs: float
    rel_err: float


def compatibility_check(conn, metric, phi, X, Y, Z, dY=None, dZ=None, cfg=None, h=1e-3):
    """Compare d/dt G(Y(t), Z(t)) with G(D_t Y, Z) + G(Y, D_t Z) at t = 0.

    The path is phi + t X with Y(t) = Y + t dY and Z(t) = Z + t dZ (dY, dZ
    default to 0).  The left side is a fourth-order central difference.
    """
    cfg = cfg or SolverConfig(rel_tol=1e-12, max_iter=1000)
    x, y, z = _form(X), _form(Y), _form(Z)
    dy = _form(dY) if dY is not None else y * 0.0
    dz = _form(dZ) if dZ is not None else z * 0.0

    def pairing(t):
        try:
            field = G2Field(phi.phi + x * t)
        except NonPositiveForm as exc:
            raise PositivityLost(f"phi + t X lost positivity at t = {t:g}") from exc
        return metric_eval(metric, field, y + dy * t, z + dz * t, cfg)

    lhs = sum(c / h * pairing(k * h) for k, c in _FOURTH_ORDER)
    sv = Potentials(phi, cfg)
    d_y = dy + p_operator(conn, phi, x, y, solver=sv)
    d_z = dz + p_operator(conn, phi, x, z, solver=sv)
    msv = Potentials(phi, cfg)
    rhs = metric_eval(metric, phi, d_y, z, solver=msv) + metric_eval(metric, phi, y, d_z, solver=msv)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return CompatibilityRow(str(conn), metric, h, lhs, rhs, abs(lhs - rhs) / scale)


def _rel(a, b):
    return (a - b).max_abs() / max(a.max_abs(), b.max_abs(), 1e-300)


def _rel_scalar(a, b, scale=None):
    scale = scale if scale is not None else max(abs(a), abs(b))
    return abs(a - b) / max(scale, 1e-300)


def connection_suite(phi, vectors, cfg=None, h=1e-3, combos=((0.2, 0.3, 0.5),), negative_control=True):
    """Metric, compatibility, torsion and contorsion checks on three tangent vectors.

    ``vectors`` holds (X, Y, Z, dY, dZ).  Returns (Report, list of CompatibilityRow).
    """
    cfg = cfg or SolverConfig(rel_tol=1e-12, max_iter=1000)
    X, Y, Z, dY, dZ = vectors
    sv = Potentials(phi, cfg)
    rep = Report("connections on the space of closed G2 structures")
    rows = []

    d_metric = metric_eval("Dirichlet", phi, X, Y, solver=sv)
    rep.add("Dirichlet metric: int g(delta u, delta v) = int g(G X, Y)", 1,
            _rel_scalar(d_metric, dirichlet_pairing(phi, X, Y, solver=sv)), 1e-8)
    for kind in METRIC_KINDS:
        ab, ba = metric_eval(kind, phi, X, Y, solver=sv), metric_eval(kind, phi, Y, X, solver=sv)
        rep.add(f"{kind} metric symmetric", 1, _rel_scalar(ab, ba), 1e-9)
        rep.add(f"{kind} metric positive on X", 1, 0.0 if metric_eval(kind, phi, X, X, solver=sv) > 0 else 1.0, 0.0)

    conns = ["PA", "PB", "PC"] + [Combo(*c) for c in combos] + ["DD", "DL", "DM"]
    for conn in conns:
        metric = MATCHED_METRIC.get(conn, "Dirichlet")
        row = compatibility_check(conn, metric, phi, X, Y, Z, dY, dZ, cfg, h)
        rows.append(row)
        rep.add(f"compatibility {row.connection} with {metric} metric", 1, row.rel_err, 1e-5)
    if negative_control:
        bad = Combo(0.5, 0.5, 0.5)
        row = compatibility_check(bad, "Dirichlet", phi, X, Y, Z, dY, dZ, cfg, h)
        rows.append(row)
        rep.add(f"compatibility {row.connection} (a+b+c != 1) fails", 1, row.rel_err, 1e-3, expect_fail=True)
        row = compatibility_check("PA", "Laplacian", phi, X, Y, Z, dY, dZ, cfg, h)
        rows.append(row)
        rep.add("compatibility PA with Laplacian metric fails", 1, row.rel_err, 1e-3, expect_fail=True)

    for conn in SYMMETRIC_KINDS:
        t = torsion_eval(conn, phi, X, Y, solver=sv)
        scale = max(p_operator(conn, phi, X, Y, solver=sv).max_abs(), 1e-300)
        rep.add(f"torsion of {conn} vanishes", 1, t.max_abs() / scale, 1e-9)
        exact = d_spectral(p_operator(conn, phi, X, Y, solver=sv))
        rep.add(f"{conn} output is closed", 1, exact.max_abs() / scale, 1e-10)

    t_xy = torsion_pa(phi, X, Y, sv)
    pairing = metric_eval("Dirichlet", phi, t_xy, Z, solver=sv)
    scale = abs(metric_eval("Dirichlet", phi, p_a(phi, X, Y, sv), Z, solver=sv)) + abs(pairing)
    rep.add("torsion of PA: pairing with Z equals its integral formula", 1,
            _rel_scalar(pairing, torsion_pa_pairing(phi, X, Y, Z, solver=sv), scale), 1e-7)
    rep.add("S transfer: G^D(T(X,Y), Z) = G^D(S(Y,Z), X)", 1,
            _rel_scalar(pairing, metric_eval("Dirichlet", phi, s_operator(phi, Y, Z, sv), X, solver=sv), scale),
            1e-7)
    k_xy, k_yx = contorsion(phi, X, Y, sv), contorsion(phi, Y, X, sv)
    rep.add("K(X,Y) - K(Y,X) = T(X,Y)", 1, _rel(k_xy - k_yx, t_xy), 1e-7)
    lhs = 2.0 * metric_eval("Dirichlet", phi, k_xy, Z, solver=sv)
    rhs = (pairing - metric_eval("Dirichlet", phi, torsion_pa(phi, Y, Z, sv), X, solver=sv)
           + metric_eval("Dirichlet", phi, torsion_pa(phi, Z, X, sv), Y, solver=sv))
    rep.add("contorsion defining pairing", 1, _rel_scalar(lhs, rhs), 1e-7)
    rep.add("P^D = P^A - K", 1, _rel(p_d(phi, X, Y, sv), p_a(phi, X, Y, sv) - k_xy), 1e-9)
    return rep, rows


def default_vectors(grid, seed=0, band_limit=2):
    """Three random tangent vectors and two random rates of change."""
    from .torus_field import random_exact_3form

    return tuple(random_exact_3form(grid, seed + k, band_limit) for k in range(5))
