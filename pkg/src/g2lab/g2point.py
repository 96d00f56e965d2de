"""Pointwise G2 structure algebra.

Metric recovery from a positive 3-form, the type decompositions of 2-forms and
3-forms, the i and j operators, and the torsion eigenvalue estimate.  Every
function accepts batched forms (leading axes), so the same code serves single
points and whole grids.  A "frame" is anything exposing ``phi``, ``psi`` and
``metric`` attributes; ``G2Frame`` here and ``G2Field`` in ``torus_field``
both qualify.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import ConstraintViolated, DegreeMismatch, DegreeUnderflow, NonPositiveForm, NotIn14
from .exterior7 import (
    DIM,
    SIZES,
    Form,
    Metric,
    basis_form,
    form_inner,
    from_full,
    hodge_star,
    interior_table,
    raise_coeffs,
    tensor_inner,
    to_full,
    wedge,
    wedge_table,
)


def standard_phi():
    """The flat G2 form e123 + e145 + e167 + e246 + e275 - e347 - e356."""
    terms = [(1, (1, 2, 3)), (1, (1, 4, 5)), (1, (1, 6, 7)), (1, (2, 4, 6)),
             (1, (2, 7, 5)), (-1, (3, 4, 7)), (-1, (3, 5, 6))]
    out = basis_form(1, 2, 3) * 0.0
    for sign, idx in terms:
        out = out + sign * basis_form(*idx)
    return out


PHI0 = standard_phi()


@dataclass
class G2Frame:
    """A positive 3-form with its induced metric, dual 4-form and volume density."""

    phi: Form
    metric: Metric
    psi: Form
    vol_density: np.ndarray

    @property
    def batch_shape(self):
        return self.phi.batch_shape


@dataclass
class Decomp2:
    p7: Form
    p14: Form


@dataclass
class Decomp3:
    p1: Form
    p7: Form
    p27: Form
    f0: np.ndarray
    f1: Form
    f3: Form = field(init=False)

    def __post_init__(self):
        self.f3 = self.p27


def b_matrix(phi):
    """B_ij with (e_i _| phi) ^ (e_j _| phi) ^ phi = B_ij e^{1...7}."""
    contracted = np.einsum("...I,iIJ->...iJ", phi.coeffs, interior_table(3))
    top = wedge_table(4, 3)[:, :, 0] @ phi.coeffs[..., None]
    pairing = np.einsum("abk,...k->...ab", wedge_table(2, 2), top[..., 0])
    return np.einsum("...ia,...ab,...jb->...ij", contracted, pairing, contracted)


def frame_from_phi(phi):
    """Build the G2 frame of a positive 3-form.

    Positivity means B is positive definite; the metric is B / (6 s) with
    s = (det B / 6^7)^(1/9), which is also the volume density.
    """
    if phi.degree != 3:
        raise DegreeMismatch("frame_from_phi needs a 3-form")
    b = b_matrix(phi)
    lowest = np.linalg.eigvalsh(b)[..., 0]
    det_b = np.linalg.det(b)
    bad = ~((lowest > 0) & (det_b > 0) & np.isfinite(det_b))
    if np.any(bad):
        index = tuple(int(k) for k in np.argwhere(bad)[0]) if bad.ndim else None
        raise NonPositiveForm(f"3-form is not positive at index {index}", index=index)
    s = (det_b / 6.0 ** 7) ** (1.0 / 9.0)
    g = b / (6.0 * s[..., None, None])
    metric = Metric(g)
    return G2Frame(phi=phi, metric=metric, psi=hodge_star(phi, metric), vol_density=s)


def pullback3(phi, a):
    """Pull back a 3-form by the linear map ``a``: (A*phi)(u,v,w) = phi(Au,Av,Aw)."""
    full = to_full(phi)
    return from_full(np.einsum("...abc,...ai,...bj,...ck->...ijk", full, a, a, a), 3)


def random_frame_batch(rng, n, scale=0.2):
    """Frames A*phi0 with A = I + perturbation of spectral norm at most ``scale``."""
    pert = rng.standard_normal((n, DIM, DIM))
    pert *= scale / np.linalg.norm(pert, ord=2, axis=(1, 2))[:, None, None]
    pert *= rng.uniform(0.0, 1.0, size=(n, 1, 1))
    a = np.eye(DIM) + pert
    phi = pullback3(Form(3, np.broadcast_to(PHI0.coeffs, (n, 35))), a)
    return frame_from_phi(phi), a


# ---------------------------------------------------------------------------
# Type decompositions
# ---------------------------------------------------------------------------


def project2(beta, fr):
    """Split a 2-form into its 7- and 14-dimensional type components."""
    twisted = hodge_star(wedge(beta, fr.phi), fr.metric)
    p7 = (beta + twisted) / 3.0
    return Decomp2(p7=p7, p14=beta - p7)


def project3(eta, fr):
    """Split a 3-form into its 1-, 7- and 27-dimensional type components."""
    m = fr.metric
    f0 = form_inner(eta, fr.phi, m) / 21.0
    # With the wedge and star used here, eta = *(a ^ phi) gives *(phi ^ eta) = 4a,
    # so f1 = *(phi ^ eta)/4 is the normalization making p7 = *(f1 ^ phi).
    f1 = hodge_star(wedge(fr.phi, eta), m) / 4.0
    p1 = fr.phi * (3.0 * f0)
    p7 = hodge_star(wedge(f1, fr.phi), m)
    return Decomp3(p1=p1, p7=p7, p27=eta - p1 - p7, f0=f0, f1=f1)


# ---------------------------------------------------------------------------
# The i and j operators
# ---------------------------------------------------------------------------


def _contract_all(coeffs, p):
    """Array of e_s _| omega for s = 0..6, shape (..., 7, C(7,p-1))."""
    return np.einsum("...I,sIJ->...sJ", coeffs, interior_table(p))


def op_i(h, omega, fr):
    """Insert a symmetric 2-tensor into a p-form.

    Components: sum over slots a of h_{i_a}^s omega_{i_1 .. s .. i_p}.  This is
    evaluated as sum_s theta_s ^ (e_s _| omega) with (theta_s)_i = h_i^s.
    """
    p = omega.degree
    if p == 0:
        raise DegreeUnderflow("i operator needs degree at least 1")
    mixed = np.asarray(h) @ fr.metric.ginv
    inner = _contract_all(omega.coeffs, p)
    pairs = mixed @ inner
    table = wedge_table(1, p - 1)
    flat = pairs.reshape(pairs.shape[:-2] + (-1,))
    return omega._new(p, flat @ table.reshape(-1, table.shape[-1]))


def op_j(omega1, omega2, fr):
    """Symmetric 2-tensor (1/2)(w1_{iA} w2_j^A + w1_{jA} w2_i^A), A summed over all tuples."""
    p = omega1.degree
    if omega2.degree != p:
        raise DegreeMismatch(f"degrees {p} and {omega2.degree}")
    if p == 0:
        raise DegreeUnderflow("j operator needs degree at least 1")
    m = fr.metric
    lower = _contract_all(omega1.coeffs, p)
    raised = _contract_all(raise_coeffs(omega2, m), p)
    half = factorial(p - 1) * (lower @ np.swapaxes(raised, -1, -2)) @ m.g
    return 0.5 * (half + np.swapaxes(half, -1, -2))


def trace(h, fr):
    return np.einsum("...ij,...ij->...", h, fr.metric.ginv)


def j_by_wedge(eta, fr):
    """j_phi(eta)(e_i, e_j) = *(e_i _| phi ^ e_j _| phi ^ eta), for checking op_j."""
    m = fr.metric
    contracted = np.einsum("...I,iIJ->...iJ", fr.phi.coeffs, interior_table(3))
    top = wedge_table(4, 3)[:, :, 0] @ eta.coeffs[..., None]
    pairing = np.einsum("abk,...k->...ab", wedge_table(2, 2), top[..., 0])
    raw = np.einsum("...ia,...ab,...jb->...ij", contracted, pairing, contracted)
    return raw / m.sqrt_det[..., None, None]


# ---------------------------------------------------------------------------
# Torsion spectrum
# ---------------------------------------------------------------------------


@dataclass
class TauSpectrum:
    eigenvalues: np.ndarray
    norm_sq: np.ndarray
    quartic_contraction: np.ndarray
    quartic_tensor_inner: np.ndarray


def tau_square(tau, fr):
    """The symmetric tensor tau_i^l tau_lj (which equals -j_tau tau)."""
    t = to_full(tau)
    return t @ fr.metric.ginv @ t


def tau_spectrum(tau, fr, tol=1e-8):
    """Eigenvalues of -j_tau tau relative to g, together with |tau|^2 and quartic invariants."""
    m = fr.metric
    norm_sq = form_inner(tau, tau, m)
    seven = project2(tau, fr).p7
    if np.any(np.sqrt(np.maximum(form_inner(seven, seven, m), 0.0)) > tol * np.maximum(1.0, np.sqrt(norm_sq))):
        raise NotIn14("2-form has a non-negligible 7-dimensional component")
    sq = tau_square(tau, fr)
    chol = np.linalg.cholesky(m.g)
    linv = np.linalg.inv(chol)
    similar = linv @ sq @ np.swapaxes(linv, -1, -2)
    eig = np.linalg.eigvalsh(0.5 * (similar + np.swapaxes(similar, -1, -2)))
    mixed = sq @ m.ginv
    quartic = np.einsum("...ij,...ji->...", mixed, mixed)
    return TauSpectrum(eig, norm_sq, quartic, tensor_inner(sq, sq, m))


# ---------------------------------------------------------------------------
# Bryant's isometric family
# ---------------------------------------------------------------------------


def isometric_family(fr, f, eta, tol=1e-10):
    """(f^2 - |eta|^2) phi + 2 f *(eta ^ phi) + 2 i_phi(eta (x) eta), for f^2 + |eta|^2 = 1."""
    m = fr.metric
    f = np.asarray(f, dtype=float)
    eta_sq = form_inner(eta, eta, m)
    if np.any(np.abs(f * f + eta_sq - 1.0) > tol):
        raise ConstraintViolated("isometric family needs f^2 + |eta|^2 = 1")
    outer = eta.coeffs[..., :, None] * eta.coeffs[..., None, :]
    return (
        fr.phi * (f * f - eta_sq)
        + hodge_star(wedge(eta, fr.phi), m) * (2.0 * f)
        + op_i(outer, fr.phi, fr) * 2.0
    )


# ---------------------------------------------------------------------------
# Identity suite
# ---------------------------------------------------------------------------


def _rel(diff, scale):
    """Per-trial max-abs residual divided by a positive per-trial scale."""
    diff = np.abs(np.asarray(diff))
    if diff.ndim > 1:
        diff = diff.reshape(diff.shape[0], -1).max(axis=1)
    return float(np.max(diff / np.maximum(scale, 1e-300)))


def _maxabs(arr):
    arr = np.abs(np.asarray(arr))
    return arr.reshape(arr.shape[0], -1).max(axis=1)


def _random_sym(rng, n):
    h = rng.standard_normal((n, DIM, DIM))
    return 0.5 * (h + np.swapaxes(h, 1, 2))


def _random_form(rng, n, p):
    return Form(p, rng.standard_normal((n, SIZES[p])))


def _norm(a, m):
    return np.sqrt(np.maximum(form_inner(a, a, m), 0.0))


def identity_suite(trials=1000, seed=0, frame=None, tol=1e-9, corrupt_psi=0.0):
    """Check the pointwise G2 identities on ``trials`` random inputs.

    Frames are random pullbacks A*phi0 unless a single ``frame`` is given.
    ``corrupt_psi`` adds a random perturbation of that size to psi (a negative
    control: the psi-dependent identities must then fail).
    """
    from .report import Report

    rng = np.random.default_rng(seed)
    n = int(trials)
    if frame is None:
        fr, _ = random_frame_batch(rng, n)
    else:
        phi = Form(3, np.broadcast_to(frame.phi.coeffs, (n, 35)).copy())
        fr = frame_from_phi(phi)
    if corrupt_psi:
        fr = G2Frame(fr.phi, fr.metric, fr.psi + _random_form(rng, n, 4) * corrupt_psi, fr.vol_density)
    m = fr.metric
    g, gi = m.g, m.ginv
    big_p, big_s = to_full(fr.phi), to_full(fr.psi)
    ein = lambda spec, *ops: np.einsum(spec, *ops, optimize=True)  # noqa: E731
    rep = Report("pointwise G2 identities")

    def add(name, diff, scale):
        rep.add(name, n, _rel(diff, scale), tol)

    unit = np.ones(n)

    # Contraction identities.
    add("contraction phi.phi (two indices) = 6g",
        ein("...ijk,...abn,...ia,...jb->...kn", big_p, big_p, gi, gi) - 6 * g, 6 * _maxabs(g))
    add("contraction psi.psi (three indices) = 24g",
        ein("...ijkl,...abmn,...ia,...jb,...km->...ln", big_s, big_s, gi, gi, gi) - 24 * g, 24 * _maxabs(g))
    gg = lambda a, b: ein(f"...{a},...{b}->...jkbl", g, g)  # noqa: E731
    add("contraction phi.phi (one index) = gg - gg + psi",
        ein("...ijk,...abl,...ia->...jkbl", big_p, big_p, gi) - (gg("jb", "kl") - gg("jl", "kb") + big_s),
        _maxabs(g) ** 2)
    add("contraction phi.psi (two indices) = 4phi",
        ein("...ijk,...abmn,...ia,...jb->...kmn", big_p, big_s, gi, gi) - 4 * big_p, 4 * _maxabs(big_p))
    gp = lambda a, b: ein(f"...{a},...{b}->...jkbmn", g, big_p)  # noqa: E731
    rhs5 = (gp("jb", "kmn") - gp("jm", "kbn") + gp("jn", "kbm")
            - gp("kn", "jbm") + gp("km", "jbn") - gp("kb", "jmn"))
    add("contraction phi.psi (one index) = sum of g.phi terms",
        ein("...ijk,...abmn,...ia->...jkbmn", big_p, big_s, gi) - rhs5, _maxabs(g) * _maxabs(big_p))
    gg4 = lambda a, b: ein(f"...{a},...{b}->...klmn", g, g)  # noqa: E731
    add("contraction psi.psi (two indices) = 2psi + 4(gg - gg)",
        ein("...ijkl,...abmn,...ia,...jb->...klmn", big_s, big_s, gi, gi)
        - (2 * big_s + 4 * (gg4("km", "ln") - gg4("kn", "lm"))), 4 * _maxabs(g) ** 2)

    # Basic i/j properties.
    phi_scale = _maxabs(fr.phi.coeffs)
    add("i_phi(g) = 3 phi", op_i(g, fr.phi, fr).coeffs - 3 * fr.phi.coeffs, 3 * phi_scale)
    add("j_phi(phi) = 6 g", op_j(fr.phi, fr.phi, fr) - 6 * g, 6 * _maxabs(g))
    h = _random_sym(rng, n)
    h0 = h - (trace(h, fr) / 7.0)[:, None, None] * g
    ih0 = op_i(h0, fr.phi, fr)
    d_ih0 = project3(ih0, fr)
    add("i_phi(traceless h) lies in the 27 component",
        np.abs(d_ih0.p1.coeffs) + np.abs(d_ih0.p7.coeffs), _maxabs(ih0.coeffs))
    eta = _random_form(rng, n, 3)
    d_eta = project3(eta, fr)
    add("j_phi vanishes on the 7 component", op_j(fr.phi, d_eta.p7, fr), _maxabs(d_eta.p7.coeffs) * phi_scale)
    j27 = op_j(fr.phi, d_eta.p27, fr)
    add("j_phi maps the 27 component to traceless tensors", trace(j27, fr), _maxabs(j27) + 1e-300)
    add("j_phi(i_phi(h)) = 4h on traceless h", op_j(fr.phi, ih0, fr) - 4 * h0, 4 * _maxabs(h0))
    add("i_phi(j_phi(eta)) = 4 eta on the 27 component",
        op_i(j27, fr.phi, fr).coeffs - 4 * d_eta.p27.coeffs, 4 * _maxabs(d_eta.p27.coeffs))
    ij_eta = op_i(op_j(fr.phi, eta, fr), fr.phi, fr)
    add("i_phi j_phi eta = 18 pi1 + 4 pi27",
        ij_eta.coeffs - (18 * d_eta.p1.coeffs + 4 * d_eta.p27.coeffs), _maxabs(ij_eta.coeffs))
    add("local j formula equals the wedge definition",
        op_j(fr.phi, eta, fr) - j_by_wedge(eta, fr), _maxabs(j_by_wedge(eta, fr)))

    # Generalized operators on every degree.
    worst_ig = worst_sym = worst_tr = 0.0
    for p in range(1, DIM + 1):
        w1, w2 = _random_form(rng, n, p), _random_form(rng, n, p)
        worst_ig = max(worst_ig, _rel(op_i(g, w1, fr).coeffs - p * w1.coeffs, p * _maxabs(w1.coeffs)))
        j12 = op_j(w1, w2, fr)
        worst_sym = max(worst_sym, _rel(j12 - op_j(w2, w1, fr), _maxabs(j12) + 1e-300))
        scale = factorial(p) * _norm(w1, m) * _norm(w2, m)
        worst_tr = max(worst_tr, _rel(trace(j12, fr) - factorial(p) * form_inner(w1, w2, m), scale))
    rep.add("i_omega(g) = p omega, all degrees", n, worst_ig, tol)
    rep.add("j_omega(omega1) = j_omega1(omega), all degrees", n, worst_sym, tol)
    rep.add("Tr j_omega(omega1) = p! g(omega, omega1), all degrees", n, worst_tr, tol)

    # Norm identities.
    h1, h2 = _random_sym(rng, n), _random_sym(rng, n)
    lhs = form_inner(op_i(h1, fr.phi, fr), op_i(h2, fr.phi, fr), m)
    rhs = 4 * tensor_inner(h1, h2, m) + trace(h1, fr) * trace(h2, fr)
    tn = lambda t: np.sqrt(tensor_inner(t, t, m))  # noqa: E731
    add("g(i h1, i h2) = 4 g(h1,h2) + Tr h1 Tr h2", lhs - rhs, 8 * tn(h1) * tn(h2))
    e1, e2 = _random_form(rng, n, 3), _random_form(rng, n, 3)
    r1 = to_full(Form(3, raise_coeffs(e1, m)))
    r2 = to_full(Form(3, raise_coeffs(e2, m)))
    e1_mixed = ein("...ijk,...ia->...ajk", r1, g)  # (eta1)_a^{jk}
    extra = 0.25 * ein("...ajk,...abc,...jkbc->...", e1_mixed, r2, big_s) + 0.25 * ein(
        "...ajk,...ijk,...ibc,...abc->...", big_p, r1, big_p, r2)
    lhs = tensor_inner(op_j(fr.phi, e1, fr), op_j(fr.phi, e2, fr), m)
    rhs = 3 * form_inner(e1, e2, m) + extra
    add("g(j eta1, j eta2) = 3 g(eta1,eta2) + psi and phi.phi terms", lhs - rhs, 30 * _norm(e1, m) * _norm(e2, m))
    norm_eta = _norm(eta, m)
    add("|pi1 eta|^2 = g(eta,phi)^2 / 7",
        form_inner(d_eta.p1, d_eta.p1, m) - form_inner(eta, fr.phi, m) ** 2 / 7.0, norm_eta ** 2)
    re = to_full(Form(3, raise_coeffs(eta, m)))
    re_mixed = ein("...ijk,...ia->...ajk", re, g)
    quad = ein("...ajk,...abc,...jkbc->...", re_mixed, re, big_s) + ein(
        "...ajk,...ijk,...ibc,...abc->...", big_p, re, big_p, re)
    rhs = 0.25 * norm_eta ** 2 + 3.5 * form_inner(d_eta.p1, d_eta.p1, m) - quad / 16.0
    add("|pi7 eta|^2 formula", form_inner(d_eta.p7, d_eta.p7, m) - rhs, norm_eta ** 2)

    # Adjointness of i and the i/j exchange identity.
    worst = 0.0
    for p in range(1, DIM + 1):
        w1, w2 = _random_form(rng, n, p), _random_form(rng, n, p)
        lhs = form_inner(op_i(h, w1, fr), w2, m)
        rhs = form_inner(op_i(h, w2, fr), w1, m)
        worst = max(worst, _rel(lhs - rhs, p * tn(h) * _norm(w1, m) * _norm(w2, m)))
    rep.add("g(i_w1 h, w2) = g(i_w2 h, w1), all degrees", n, worst, tol)
    worst_a = worst_b = 0.0
    for p in (2, 3):
        for q in (2, 3):
            w1, w2 = _random_form(rng, n, p), _random_form(rng, n, p)
            v1, v2 = _random_form(rng, n, q), _random_form(rng, n, q)
            jv = op_j(v1, v2, fr)
            jw = op_j(w1, w2, fr)
            lhs = form_inner(op_i(jv, w1, fr), w2, m)
            mid = 2.0 / factorial(p - 1) * tensor_inner(jv, jw, m)
            rhs = factorial(q - 1) / factorial(p - 1) * form_inner(v1, op_i(jw, v2, fr), m)
            scale = 50 * _norm(w1, m) * _norm(w2, m) * _norm(v1, m) * _norm(v2, m)
            worst_a = max(worst_a, _rel(lhs - mid, scale))
            worst_b = max(worst_b, _rel(lhs - rhs, scale))
    rep.add("g(i_w1 j_v1 v2, w2) = 2/(p-1)! g(j_v1 v2, j_w1 w2), p,q in {2,3}", n, worst_a, tol)
    rep.add("g(i_w1 j_v1 v2, w2) = (q-1)!/(p-1)! g(v1, i_v2 j_w1 w2), p,q in {2,3}", n, worst_b, tol)

    # Hodge star and type decompositions.
    add("*phi = psi and g(phi,phi) = 7",
        np.abs(form_inner(fr.phi, fr.phi, m) - 7.0)[:, None]
        + np.abs(hodge_star(fr.phi, m).coeffs - fr.psi.coeffs), 7 * unit)
    beta = _random_form(rng, n, 2)
    d2 = project2(beta, fr)
    nb2 = _norm(beta, m) ** 2
    add("2-form decomposition eigen-characterizations",
        np.abs(hodge_star(wedge(fr.psi, d2.p14), m).coeffs).max(axis=1)
        + np.abs(hodge_star(wedge(fr.phi, d2.p7), m).coeffs - 2 * d2.p7.coeffs).max(axis=1),
        np.sqrt(nb2))
    add("3-form decomposition is orthogonal",
        np.abs(form_inner(d_eta.p1, d_eta.p7, m)) + np.abs(form_inner(d_eta.p1, d_eta.p27, m))
        + np.abs(form_inner(d_eta.p7, d_eta.p27, m)), norm_eta ** 2)
    return rep
