"""Volume and energy functionals, their gradients, gradient flows and geodesics.

Energies:  E^L = int |pi_d phi|^2 vol,  E^D = int |tau|^2 vol,  E^M = int |d tau|^2 vol.
Each gradient F^a satisfies d/dt E^a(phi + t X) = int g(X, F^a) vol for exact X.
Every flow right-hand side is an exact 3-form, so closedness and the
cohomology class are preserved by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveForm, PositivityLost
from .exterior7 import DIM, form_inner, hodge_star, wedge
from .g2point import op_i, op_j, project3
from .hodge_green import (
    SolverConfig,
    codiff,
    green_coexact,
    green_exact,
    hodge_laplacian,
    project_exact,
)
from .torus_field import G2Field, d_spectral, integrate
from .variations import var_torsion, variation_input

ENERGIES = ("EL", "ED", "EM")
FLOW_METRICS = ("L", "D", "M")
FLOW_KINDS = ("Laplacian", "PiD", "BiLaplacian", "DirichletL")


# ---------------------------------------------------------------------------
# Volume
# ---------------------------------------------------------------------------


def volume(phi):
    """Vol = int vol_phi."""
    return phi.volume()


def volume_by_wedge(phi):
    """Vol = (1/7) int phi ^ psi, evaluated with the flat coordinate measure."""
    top = wedge(phi.phi, phi.psi)
    return integrate(top.coeffs[..., 0], grid=phi.grid) / 7.0


def vol_first_variation(phi, X):
    """D Vol(X) = (1/3) int X ^ psi."""
    x = X.X if hasattr(X, "X") else X
    return integrate(wedge(x, phi.psi).coeffs[..., 0], grid=phi.grid) / 3.0


def vol_variation_forms(phi, X, cfg=None):
    """The four expressions of D Vol(X), as a dict.

    (1/3) int X ^ psi, (1/3) G^D(X, Delta phi), (1/3) int g(X, pi_d phi) vol and
    (1/3) G^M(X, Delta^2 phi).
    """
    cfg = cfg or SolverConfig(rel_tol=1e-12, max_iter=1000)
    x = X.X if hasattr(X, "X") else X
    lap = d_spectral(phi.tau)
    u = green_exact(x, phi, cfg).u
    bilap = hodge_laplacian(lap, phi)
    return {
        "wedge": vol_first_variation(phi, x),
        "dirichlet": phi.inner(codiff(u, phi), codiff(green_exact(lap, phi, cfg).u, phi)) / 3.0,
        "pi_d": phi.inner(x, project_exact(phi.phi, phi, cfg)) / 3.0,
        "l2": phi.inner(u, green_exact(bilap, phi, cfg).u) / 3.0,
    }


# ---------------------------------------------------------------------------
# Energies and gradients
# ---------------------------------------------------------------------------


def energy(kind, phi, cfg=None):
    m = phi.metric
    if kind == "ED":
        tau = phi.tau
        return phi.integrate(form_inner(tau, tau, m))
    if kind == "EM":
        dt = d_spectral(phi.tau)
        return phi.integrate(form_inner(dt, dt, m))
    if kind == "EL":
        pd = project_exact(phi.phi, phi, cfg)
        return phi.integrate(form_inner(pd, pd, m))
    raise ValueError(f"unknown energy {kind!r}")


def _j(phi, a, b):
    return op_j(a, b, phi)


def gradient_dirichlet(phi):
    """F^D = -2 Delta phi - (1/3)|tau|^2 phi + i_phi j_tau tau."""
    tau = phi.tau
    tau_sq = form_inner(tau, tau, phi.metric)
    out = d_spectral(tau) * -2.0
    out = out - phi.phi * (tau_sq / 3.0)
    return out + op_i(_j(phi, tau, tau), phi.phi, phi)


def gradient_laplacian(phi, cfg=None):
    """F^L = -(4/3)|pi_d phi|^2 phi + (1/2) i_phi j_{pi_d phi}(pi_d phi)
             + [(8/3) pi_1 + 2 pi_7 - 2 pi_27] pi_d phi."""
    pd = project_exact(phi.phi, phi, cfg)
    pd_sq = form_inner(pd, pd, phi.metric)
    parts = project3(pd, phi)
    out = phi.phi * (-4.0 / 3.0 * pd_sq)
    out = out + op_i(_j(phi, pd, pd), phi.phi, phi) * 0.5
    return out + parts.p1 * (8.0 / 3.0) + parts.p7 * 2.0 - parts.p27 * 2.0


def gradient_l2(phi):
    """F^M = -2 g(tau, delta d tau) phi + (2/3) g(phi, d delta d tau) phi
             + 2 i_phi j_tau(delta d tau) - 2 d delta d tau
             + 4 pi_7(d delta d tau)
             + (4/3)|d tau|^2 phi - (1/2) i_phi j_{d tau}(d tau).

    The pi_7 term is the adjoint of the 2 delta pi_7 X part of the torsion
    variation.  It is evaluated through the type projection because
    *[*(eta ^ phi) ^ phi] equals -4 pi_7(eta) with the orientation used here.
    """
    m = phi.metric
    tau = phi.tau
    lap = d_spectral(tau)
    ddt = codiff(lap, phi)
    dddt = d_spectral(ddt)
    out = phi.phi * (-2.0 * form_inner(tau, ddt, m) + (2.0 / 3.0) * form_inner(phi.phi, dddt, m))
    out = out + op_i(_j(phi, tau, ddt), phi.phi, phi) * 2.0
    out = out - dddt * 2.0
    out = out + project3(dddt, phi).p7 * 4.0
    out = out + phi.phi * (4.0 / 3.0 * form_inner(lap, lap, m))
    return out - op_i(_j(phi, lap, lap), phi.phi, phi) * 0.5


def twisted_seven(eta, phi):
    """*[*(eta ^ phi) ^ phi], the raw form of the fifth term of F^M."""
    m = phi.metric
    return hodge_star(wedge(hodge_star(wedge(eta, phi.phi), m), phi.phi), m)


def energy_gradient(kind, phi, cfg=None):
    if kind == "ED":
        return gradient_dirichlet(phi)
    if kind == "EM":
        return gradient_l2(phi)
    if kind == "EL":
        return gradient_laplacian(phi, cfg)
    raise ValueError(f"unknown energy {kind!r}")


def energy_directional_fd(kind, phi, x, h=1e-4, cfg=None):
    """(E(phi + h X) - E(phi - h X)) / 2h."""
    plus = G2Field(phi.phi + x * h)
    minus = G2Field(phi.phi - x * h)
    return (energy(kind, plus, cfg) - energy(kind, minus, cfg)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------


@dataclass
class FlowSpec:
    """kind is one of Laplacian, PiD, BiLaplacian, DirichletL, or (functional, metric)."""

    kind: object
    dt: float
    steps: int
    monitor_every: int = 1
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if isinstance(self.kind, tuple):
            functional, metric = self.kind
            if functional not in ENERGIES or metric not in FLOW_METRICS:
                raise ValueError(f"unknown table cell {self.kind!r}")
        elif self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow {self.kind!r}")


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0

    def record(self, pot):
        self.iterations += pot.iterations
        self.residual = max(self.residual, pot.residual)


def _pi_d_tracked(beta, phi, cfg, stats):
    pot = green_exact(d_spectral(codiff(beta, phi)), phi, cfg)
    stats.record(pot)
    return pot.u


def flow_rhs(kind, phi, cfg=None, stats=None):
    """Right-hand side of the flow ``kind`` at phi (always an exact 3-form)."""
    stats = stats if stats is not None else SolveStats()
    if kind == "Laplacian":
        return d_spectral(phi.tau)
    if kind == "PiD":
        return _pi_d_tracked(phi.phi, phi, cfg, stats)
    if kind == "BiLaplacian":
        return hodge_laplacian(d_spectral(phi.tau), phi)
    if kind == "DirichletL":
        return _pi_d_tracked(gradient_dirichlet(phi), phi, cfg, stats) * -1.0
    functional, metric = kind
    grad = energy_gradient(functional, phi, cfg)
    out = _pi_d_tracked(grad, phi, cfg, stats) * -1.0
    if metric in ("D", "M"):
        out = hodge_laplacian(out, phi)
    if metric == "M":
        out = hodge_laplacian(out, phi)
    return out


def dirichlet_split_velocity(phi, cfg=None):
    """(d beta, beta) where beta = delta gamma is coexact with Delta beta = -delta F^D.

    d beta equals -pi_d F^D, the Dirichlet flow velocity.
    """
    rhs = codiff(gradient_dirichlet(phi), phi) * -1.0
    beta = green_coexact(rhs, phi, cfg)
    return d_spectral(beta), beta


def dirichlet_split_step(phi, dt, cfg=None):
    """Forward Euler step of the split system phi_t = d beta."""
    velocity, _ = dirichlet_split_velocity(phi, cfg)
    return _field(phi.phi + velocity * dt)


def dirichlet_projected_step(phi, dt, cfg=None):
    """Forward Euler step of phi_t = -pi_d F^D, for comparison with the split step."""
    return _field(phi.phi + flow_rhs("DirichletL", phi, cfg) * dt)


def _field(form):
    try:
        return G2Field(form)
    except NonPositiveForm as exc:
        raise PositivityLost(str(exc)) from exc


def rk4_step(rhs, phi, dt):
    """One classical RK4 step for phi_t = rhs(field); raises PositivityLost."""
    k1 = rhs(phi)
    k2 = rhs(_field(phi.phi + k1 * (dt / 2)))
    k3 = rhs(_field(phi.phi + k2 * (dt / 2)))
    k4 = rhs(_field(phi.phi + k3 * dt))
    return _field(phi.phi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))


@dataclass
class FlowRecord:
    step: int
    t: float
    vol: float
    el: float
    ed: float
    em: float
    dt: float
    solver_iters: int
    residual: float
    closedness: float

    def row(self):
        return [self.step, self.t, self.vol, self.el, self.ed, self.em, self.dt,
                self.solver_iters, self.residual]


FLOW_HEADER = ["step", "t", "Vol", "EL", "ED", "EM", "dt", "solver_iters", "residual"]


@dataclass
class FlowResult:
    records: list = field(default_factory=list)
    final: G2Field = None
    snapshots: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def _monitor(step, t, phi, dt, stats, cfg):
    d_phi = d_spectral(phi.phi).max_abs()
    return FlowRecord(step, t, volume(phi), energy("EL", phi, cfg), energy("ED", phi),
                      energy("EM", phi), dt, stats.iterations, stats.residual, d_phi)


def run_flow(spec, phi0, cfg=None, max_halvings=8, monitor_el=True):
    """Integrate a flow by RK4, halving dt (up to ``max_halvings`` times) on loss of positivity."""
    cfg = cfg or SolverConfig()
    phi = phi0
    t = 0.0
    result = FlowResult()
    stats = SolveStats()
    mon = _monitor if monitor_el else _monitor_no_el
    result.records.append(mon(0, t, phi, spec.dt, stats, cfg))
    for step in range(1, spec.steps + 1):
        stats = SolveStats()
        dt = spec.dt
        for attempt in range(max_halvings + 1):
            try:
                phi = rk4_step(lambda f: flow_rhs(spec.kind, f, cfg, stats), phi, dt)
                break
            except PositivityLost:
                if attempt == max_halvings:
                    raise
                dt *= 0.5
        t += dt
        if step % spec.monitor_every == 0 or step == spec.steps:
            result.records.append(mon(step, t, phi, dt, stats, cfg))
        if spec.snapshot_every and step % spec.snapshot_every == 0:
            result.snapshots.append((step, phi.phi))
    result.final = phi
    return result


def _monitor_no_el(step, t, phi, dt, stats, cfg):
    d_phi = d_spectral(phi.phi).max_abs()
    return FlowRecord(step, t, volume(phi), float("nan"), energy("ED", phi), energy("EM", phi),
                      dt, stats.iterations, stats.residual, d_phi)


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------


GEODESIC_METRIC = {"DD": "Dirichlet", "DL": "Laplacian", "DM": "L2"}


@dataclass
class GeodesicState:
    phi: G2Field
    phi_dot: object
    connection: str


@dataclass
class GeodesicResult:
    times: list
    speeds: list
    final: GeodesicState

    @property
    def relative_drift(self):
        s = np.asarray(self.speeds)
        return float(np.max(np.abs(s - s[0])) / abs(s[0])) if s[0] else float(np.max(np.abs(s)))


def geodesic_integrate(state0, T, dt, cfg=None, record_every=1):
    """RK4 for phi' = V, V' = -P(phi, V, V), monitoring the speed G(V, V)."""
    from .connection_lab import Potentials, WarmStart, metric_eval, p_operator

    cfg = cfg or SolverConfig(rel_tol=1e-13, max_iter=1000)
    conn = state0.connection
    metric = GEODESIC_METRIC[conn]
    phi = state0.phi
    vel = state0.phi_dot.X if hasattr(state0.phi_dot, "X") else state0.phi_dot
    n_steps = int(round(T / dt))

    accel_warm, speed_warm = WarmStart(), WarmStart()

    def accel(field_, v):
        out = p_operator(conn, field_, v, v, solver=Potentials(field_, cfg, accel_warm)) * -1.0
        accel_warm.advance()
        return out

    def speed(field_, v):
        out = metric_eval(metric, field_, v, v, solver=Potentials(field_, cfg, speed_warm))
        speed_warm.advance()
        return out

    times, speeds = [0.0], [speed(phi, vel)]
    for step in range(1, n_steps + 1):
        k1p, k1v = vel, accel(phi, vel)
        f2 = _field(phi.phi + k1p * (dt / 2))
        v2 = vel + k1v * (dt / 2)
        k2p, k2v = v2, accel(f2, v2)
        f3 = _field(phi.phi + k2p * (dt / 2))
        v3 = vel + k2v * (dt / 2)
        k3p, k3v = v3, accel(f3, v3)
        f4 = _field(phi.phi + k3p * dt)
        v4 = vel + k3v * dt
        k4p, k4v = v4, accel(f4, v4)
        phi = _field(phi.phi + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0))
        vel = vel + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0)
        if step % record_every == 0 or step == n_steps:
            times.append(step * dt)
            speeds.append(speed(phi, vel))
    return GeodesicResult(times, speeds, GeodesicState(phi, vel, conn))


# ---------------------------------------------------------------------------
# Second variation of the Dirichlet energy at a torsion-free point
# ---------------------------------------------------------------------------


def dirichlet_second_variation_at_tf(phi, X, h=1e-3, tol=1e-10):
    """(central second difference of E^D along phi + t X, 2 int |tau_t|^2 vol)."""
    if phi.tau.max_abs() > tol:
        raise ValueError(f"background is not torsion-free (|tau| = {phi.tau.max_abs():.2e})")
    x = X.X if hasattr(X, "X") else X
    try:
        plus, minus = G2Field(phi.phi + x * h), G2Field(phi.phi - x * h)
    except NonPositiveForm as exc:
        raise PositivityLost(str(exc)) from exc
    fd = (energy("ED", plus) - 2.0 * energy("ED", phi) + energy("ED", minus)) / (h * h)
    tau_t = var_torsion(variation_input(phi, x))
    predicted = 2.0 * phi.integrate(form_inner(tau_t, tau_t, phi.metric))
    return fd, predicted


__all__ = [name for name in dir() if not name.startswith("_") and name not in ("DIM",)]
