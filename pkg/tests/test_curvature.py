import numpy as np
import pytest

from g2lab.curvature import (
    CURVATURE_HEADER,
    bakry_emery,
    bryant_ricci,
    coordinate_curvature,
    curvature_checks,
    curvature_suite,
    ebin_checks,
    ebin_pullback_sides,
    report_rows,
)
from g2lab.g2point import PHI0
from g2lab.torus_field import FormField, G2Field, Grid, perturbed_field


@pytest.fixture(scope="module")
def field32():
    return perturbed_field(Grid((32, 32, 1, 1, 1, 1, 1)), 1, 0.05)


def test_flat_curvature_vanishes(flat16):
    pack = coordinate_curvature(flat16)
    assert np.abs(pack.christoffel).max() == 0.0
    assert np.abs(pack.ricci).max() == 0.0
    ric, scal = bryant_ricci(flat16)
    assert np.abs(ric).max() == 0.0 and np.abs(scal).max() == 0.0


def test_coordinate_ricci_of_conformal_metric():
    # Independent closed form: for g = exp(2u) delta in dimension 7,
    # Ric = -5 (Hess u - du du) - (lap u + 5 |du|^2) delta.
    grid = Grid((32, 1, 1, 1, 1, 1, 1))
    x = grid.coordinate(0)
    k = 2.0 * np.pi
    u = 0.1 * np.sin(k * x)
    du = 0.1 * k * np.cos(k * x)
    ddu = -0.1 * k * k * np.sin(k * x)
    phi = G2Field(FormField(grid, 3, np.exp(3.0 * u)[..., None] * PHI0.coeffs))
    np.testing.assert_allclose(phi.metric.g[..., 0, 0], np.exp(2.0 * u), atol=1e-12)
    expected = np.zeros(grid.dims + (7, 7))
    lap_part = ddu + 5.0 * du * du
    for i in range(7):
        expected[..., i, i] = -lap_part
    expected[..., 0, 0] += -5.0 * (ddu - du * du)
    ricci = coordinate_curvature(phi).ricci
    assert np.abs(ricci - expected).max() < 1e-9 * np.abs(expected).max()


def test_ricci_formula_on_fine_grid(field32):
    rep, _ = curvature_checks(field32)
    assert rep.all_passed, rep.to_text()


def test_bakry_emery_on_flat_field(flat16):
    rep, ric_f = bakry_emery(flat16, 1.5)
    assert rep.all_passed
    np.testing.assert_allclose(ric_f, -0.5 * flat16.metric.g, atol=1e-15)


@pytest.mark.parametrize("lam", [0.0, 1.3, -2.0])
def test_bakry_emery_bounds(field16, lam):
    rep, _ = bakry_emery(field16, lam)
    assert rep.all_passed, rep.to_text()


def test_ebin_checks(field16):
    rep = ebin_checks(field16, seed=4)
    assert rep.all_passed, rep.to_text()


def test_ebin_pullback_is_symmetric(field16, directions16):
    a = ebin_pullback_sides(field16, directions16[0], directions16[1])
    b = ebin_pullback_sides(field16, directions16[1], directions16[0])
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert a[1] == pytest.approx(b[1], rel=1e-12)


def test_suite_rows(field32):
    rep = curvature_suite(field32)
    assert rep.all_passed, rep.to_text()
    rows = report_rows(rep, field32.grid)
    assert all(len(r) == len(CURVATURE_HEADER) and r[2] == "32x32x1x1x1x1x1" for r in rows)
