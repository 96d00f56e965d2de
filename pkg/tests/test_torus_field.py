import numpy as np
import pytest

from g2lab.errors import BandLimitTooHigh, FormatError, GridMismatch, IoError, NonPositiveForm
from g2lab.exterior7 import DIM, basis_form
from g2lab.g2point import PHI0
from g2lab.torus_field import (
    MAGIC,
    FormField,
    G2Field,
    Grid,
    d_spectral,
    flat_field,
    integrate,
    load_field,
    make_closed_g2,
    perturbed_field,
    random_exact_3form,
    random_form_field,
    save_field,
)


def test_grid_validation():
    with pytest.raises(GridMismatch):
        Grid((4, 4))
    with pytest.raises(GridMismatch):
        Grid((4, 0, 1, 1, 1, 1, 1))
    g = Grid((4, 6, 1, 1, 1, 1, 1), (1.0, 2.0, 1, 1, 1, 1, 1))
    assert g.npoints == 24
    assert g.total_volume == pytest.approx(2.0)
    assert tuple(g.active_axes) == (0, 1)


def test_d_of_trig_function_matches_analytic_derivative():
    grid = Grid((8, 8, 1, 1, 1, 1, 1), (1.0, 2.0, 1, 1, 1, 1, 1))
    x, y = grid.coordinate(0), grid.coordinate(1)
    f = np.sin(2 * np.pi * x) * np.cos(np.pi * y)  # periodic on [0,1) x [0,2)
    df = d_spectral(FormField(grid, 0, f[..., None]))
    np.testing.assert_allclose(df.coeffs[..., 0], 2 * np.pi * np.cos(2 * np.pi * x) * np.cos(np.pi * y), atol=1e-12)
    np.testing.assert_allclose(df.coeffs[..., 1], -np.pi * np.sin(2 * np.pi * x) * np.sin(np.pi * y), atol=1e-12)
    np.testing.assert_allclose(df.coeffs[..., 2:], 0.0, atol=1e-14)


@pytest.mark.parametrize("p", [0, 1, 2, 3, 4, 5])
def test_d_squared_vanishes(p):
    grid = Grid((6, 6, 4, 1, 1, 1, 1))
    a = random_form_field(grid, p, seed=p, band_limit=2)
    assert d_spectral(d_spectral(a)).max_abs() < 1e-11 * max(1.0, d_spectral(a).max_abs())


def test_integrate_constant_and_density():
    grid = Grid((4, 4, 1, 1, 1, 1, 1), (2.0, 3.0, 1, 1, 1, 1, 1))
    assert integrate(np.ones(grid.dims), grid=grid) == pytest.approx(6.0)
    assert integrate(np.ones(grid.dims), 2 * np.ones(grid.dims), grid) == pytest.approx(12.0)
    with pytest.raises(GridMismatch):
        integrate(np.ones((3, 3)), grid=grid)


def test_flat_and_scaled_volume():
    grid = Grid((4, 4, 1, 1, 1, 1, 1), (1.0, 2.0, 1, 1, 1, 1, 1))
    assert flat_field(grid).volume() == pytest.approx(2.0)
    scaled = G2Field(FormField.constant(grid, PHI0 * 27.0))  # lambda = 3
    assert scaled.volume() == pytest.approx(3.0 ** 7 * 2.0)
    assert flat_field(grid).tau.max_abs() == 0.0


def test_perturbed_field_is_closed_and_cohomologous():
    grid = Grid((8, 8, 1, 1, 1, 1, 1))
    phi = perturbed_field(grid, 3, 0.05)
    assert d_spectral(phi.phi).max_abs() < 1e-12
    mean = phi.phi.coeffs.reshape(-1, 35).mean(axis=0)
    np.testing.assert_allclose(mean, PHI0.coeffs, atol=1e-14)
    assert phi.tau.max_abs() > 1e-3


def test_random_exact_normalization_and_band_limit():
    grid = Grid((8, 8, 1, 1, 1, 1, 1))
    t = random_exact_3form(grid, 2, 2, amplitude=0.5)
    rms = np.sqrt(np.mean(np.sum(t.X.coeffs ** 2, axis=-1)))
    assert rms == pytest.approx(0.5)
    np.testing.assert_allclose(d_spectral(t.alpha).coeffs, t.X.coeffs, atol=1e-13)
    with pytest.raises(BandLimitTooHigh):
        random_form_field(grid, 2, 0, 5)


def test_positivity_enforced():
    grid = Grid((4, 4, 1, 1, 1, 1, 1))
    alpha = random_form_field(grid, 2, 0, 1)
    with pytest.raises(NonPositiveForm):
        make_closed_g2(grid, alpha, 50.0)


def test_snapshot_round_trip(tmp_path):
    grid = Grid((4, 3, 2, 1, 1, 1, 1), (1.0, 2.0, 0.5, 1, 1, 1, 1))
    a = random_form_field(grid, 3, 5, 1)
    path = tmp_path / "a.g2f"
    save_field(path, a)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert len(raw) == 4 + 4 + 7 * 4 + 7 * 8 + 8 * grid.npoints * 35
    b = load_field(path)
    assert b.grid == grid and b.degree == 3
    np.testing.assert_array_equal(a.coeffs, b.coeffs)


def test_snapshot_errors(tmp_path):
    with pytest.raises(IoError):
        load_field(tmp_path / "missing.g2f")
    bad = tmp_path / "bad.g2f"
    bad.write_bytes(b"XXXX" + bytes(100))
    with pytest.raises(FormatError):
        load_field(bad)
    grid = Grid((2, 1, 1, 1, 1, 1, 1))
    good = tmp_path / "good.g2f"
    save_field(good, FormField.constant(grid, basis_form(1, 2, 3)))
    truncated = tmp_path / "short.g2f"
    truncated.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(FormatError):
        load_field(truncated)


def test_snapshot_point_order_x1_fastest(tmp_path):
    grid = Grid((3, 2, 1, 1, 1, 1, 1))
    coeffs = np.zeros(grid.dims + (1,))
    for i in range(3):
        for j in range(2):
            coeffs[i, j, 0, 0, 0, 0, 0, 0] = 10 * j + i
    path = tmp_path / "order.g2f"
    save_field(path, FormField(grid, 0, coeffs))
    payload = np.frombuffer(path.read_bytes()[4 + 4 + 28 + 56:], dtype="<f8")
    np.testing.assert_array_equal(payload, [0, 1, 2, 10, 11, 12])
