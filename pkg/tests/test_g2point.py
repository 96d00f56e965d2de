import numpy as np
import pytest

from g2lab.errors import ConstraintViolated, NonPositiveForm, NotIn14
from g2lab.exterior7 import DIM, Form, basis_form, form_inner, hodge_star, wedge
from g2lab.g2point import (
    PHI0,
    frame_from_phi,
    identity_suite,
    isometric_family,
    op_i,
    op_j,
    project2,
    project3,
    pullback3,
    random_frame_batch,
    tau_spectrum,
)

# psi0 = *phi0 with epsilon^{1..7} = +1, written out term by term.
PSI0_TERMS = [(-1, (1, 2, 4, 7)), (-1, (1, 2, 5, 6)), (-1, (1, 3, 4, 6)), (1, (1, 3, 5, 7)),
              (1, (2, 3, 4, 5)), (1, (2, 3, 6, 7)), (1, (4, 5, 6, 7))]


def test_flat_frame_golden_values():
    fr = frame_from_phi(PHI0)
    np.testing.assert_allclose(fr.metric.g, np.eye(DIM), atol=1e-14)
    assert fr.vol_density == pytest.approx(1.0)
    psi0 = sum((basis_form(*idx) * s for s, idx in PSI0_TERMS[1:]), basis_form(*PSI0_TERMS[0][1]) * -1.0)
    np.testing.assert_allclose(fr.psi.coeffs, psi0.coeffs, atol=1e-14)
    assert form_inner(PHI0, PHI0, fr.metric) == pytest.approx(7.0)
    top = wedge(PHI0, fr.psi)
    assert top.coeffs[0] == pytest.approx(7.0)


def test_metric_of_pullback_is_pullback_metric():
    # (A* phi0) induces g = A^T A, vol density det A: independent of the B-matrix route.
    rng = np.random.default_rng(4)
    a = np.eye(DIM) + 0.2 * rng.standard_normal((DIM, DIM))
    if np.linalg.det(a) < 0:
        a[:, 0] *= -1
    fr = frame_from_phi(pullback3(PHI0, a))
    np.testing.assert_allclose(fr.metric.g, a.T @ a, atol=1e-12)
    assert fr.vol_density == pytest.approx(np.linalg.det(a))


def test_scaled_phi_scales_metric():
    fr = frame_from_phi(PHI0 * 8.0)  # lambda^3 phi0 with lambda = 2
    np.testing.assert_allclose(fr.metric.g, 4.0 * np.eye(DIM), atol=1e-12)
    assert fr.vol_density == pytest.approx(2.0 ** 7)


def test_non_positive_forms_rejected():
    with pytest.raises(NonPositiveForm):
        frame_from_phi(basis_form(1, 2, 3))
    with pytest.raises(NonPositiveForm):
        frame_from_phi(PHI0 * -1.0)


def test_identity_suite_passes_and_negative_control_fails():
    rep = identity_suite(trials=300, seed=2)
    assert rep.all_passed, rep.to_text()
    bad = identity_suite(trials=50, seed=2, corrupt_psi=0.01)
    assert not bad.all_passed


def test_three_form_decomposition_pieces():
    rng = np.random.default_rng(7)
    fr, _ = random_frame_batch(rng, 20)
    eta = Form(3, rng.standard_normal((20, 35)))
    parts = project3(eta, fr)
    np.testing.assert_allclose((parts.p1 + parts.p7 + parts.p27).coeffs, eta.coeffs, atol=1e-12)
    # Each piece is a fixed point of its own projection.
    again = project3(parts.p7, fr)
    np.testing.assert_allclose(again.p7.coeffs, parts.p7.coeffs, atol=1e-11)
    np.testing.assert_allclose(project3(parts.p27, fr).p27.coeffs, parts.p27.coeffs, atol=1e-11)
    # 7-part is *(f1 ^ phi), 27-part is in the image of i_phi on traceless tensors.
    np.testing.assert_allclose(hodge_star(wedge(parts.f1, fr.phi), fr.metric).coeffs, parts.p7.coeffs, atol=1e-12)
    np.testing.assert_allclose(form_inner(parts.p27, fr.phi, fr.metric), 0.0, atol=1e-11)


def test_two_form_decomposition_and_i_j():
    rng = np.random.default_rng(8)
    fr, _ = random_frame_batch(rng, 10)
    beta = Form(2, rng.standard_normal((10, 21)))
    parts = project2(beta, fr)
    np.testing.assert_allclose(hodge_star(wedge(fr.phi, parts.p7), fr.metric).coeffs, 2 * parts.p7.coeffs, atol=1e-11)
    np.testing.assert_allclose(hodge_star(wedge(fr.phi, parts.p14), fr.metric).coeffs, -parts.p14.coeffs, atol=1e-11)
    np.testing.assert_allclose(op_j(fr.phi, fr.phi, fr), 6 * fr.metric.g, atol=1e-11)
    np.testing.assert_allclose(op_i(fr.metric.g, fr.phi, fr).coeffs, 3 * fr.phi.coeffs, atol=1e-11)


def _random_14(rng, n):
    fr = frame_from_phi(Form(3, np.broadcast_to(PHI0.coeffs, (n, 35)).copy()))
    beta = Form(2, rng.standard_normal((n, 21)))
    return project2(beta, fr).p14, fr


def test_tau_spectrum_bounds_and_zero_eigenvalue():
    rng = np.random.default_rng(9)
    tau, fr = _random_14(rng, 500)
    spec = tau_spectrum(tau, fr)
    ev = spec.eigenvalues  # eigenvalues of tau o tau = -j_tau tau
    assert np.all(ev <= 1e-12)
    assert np.all(np.abs(ev).min(axis=1) < 1e-10)
    assert np.all(ev.min(axis=1) >= -(2.0 / 3.0) * spec.norm_sq - 1e-9)


def test_tau_spectrum_example():
    # tau = e23 - e67 lies in the 14 component of phi0: eigenvalues -1 (x4), 0 (x3).
    fr = frame_from_phi(PHI0)
    tau = basis_form(2, 3) - basis_form(6, 7)
    spec = tau_spectrum(tau, fr)
    np.testing.assert_allclose(np.sort(spec.eigenvalues), [-1, -1, -1, -1, 0, 0, 0], atol=1e-12)
    assert spec.norm_sq == pytest.approx(2.0)
    assert spec.quartic_contraction == pytest.approx(4.0)


def test_tau_spectrum_rejects_seven_component():
    fr = frame_from_phi(PHI0)
    with pytest.raises(NotIn14):
        tau_spectrum(basis_form(2, 3) + basis_form(6, 7), fr)


def test_isometric_family_preserves_metric():
    rng = np.random.default_rng(10)
    fr, _ = random_frame_batch(rng, 6)
    eta = Form(1, rng.standard_normal((6, 7)))
    eta = eta * (0.6 / np.sqrt(form_inner(eta, eta, fr.metric)))
    phi = isometric_family(fr, 0.8, eta)
    moved = frame_from_phi(phi)
    np.testing.assert_allclose(moved.metric.g, fr.metric.g, atol=1e-12)
    with pytest.raises(ConstraintViolated):
        isometric_family(fr, 0.9, eta)
