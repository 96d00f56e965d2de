"""Forms on a flat periodic 7-torus.

Field coefficients are held as arrays of shape (N1, ..., N7, C(7,p)); axes of
length one are directions in which the field is constant.  The exterior
derivative is spectral (Fourier collocation) so that d(d(.)) vanishes to
roundoff.  Snapshots use the documented point order with x1 fastest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    BandLimitTooHigh,
    DegreeOverflow,
    FormatError,
    GridMismatch,
    IoError,
    NonPositiveForm,
)
from .exterior7 import DIM, SIZES, Form, hodge_star, wedge_table
from .g2point import PHI0, frame_from_phi

MAGIC = b"G2F1"
_HEADER = struct.Struct("<4sI7I7d")


@dataclass(frozen=True)
class Grid:
    """A uniform periodic grid on the torus prod [0, L_i)."""

    dims: tuple
    lengths: tuple = (1.0,) * DIM

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        lengths = tuple(float(x) for x in self.lengths)
        if len(dims) != DIM or len(lengths) != DIM:
            raise GridMismatch("a grid needs 7 dims and 7 lengths")
        if min(dims) < 1 or min(lengths) <= 0:
            raise GridMismatch("grid dims and lengths must be positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "lengths", lengths)

    @property
    def npoints(self):
        return int(np.prod(self.dims))

    @property
    def cell_volume(self):
        return float(np.prod([L / n for L, n in zip(self.lengths, self.dims)]))

    @property
    def total_volume(self):
        return float(np.prod(self.lengths))

    @property
    def active_axes(self):
        return tuple(i for i, n in enumerate(self.dims) if n > 1)

    def coordinate(self, axis):
        """Coordinate x_axis broadcast to the grid shape."""
        n = self.dims[axis]
        x = np.arange(n) * (self.lengths[axis] / n)
        shape = [1] * DIM
        shape[axis] = n
        return np.broadcast_to(x.reshape(shape), self.dims)

    @cached_property
    def wavenumbers(self):
        """Per-axis arrays of i*k for differentiation, Nyquist entries zeroed."""
        out = []
        for axis, (n, L) in enumerate(zip(self.dims, self.lengths)):
            k = np.fft.fftfreq(n, d=1.0 / n)
            if n % 2 == 0:
                k[n // 2] = 0.0
            shape = [1] * DIM
            shape[axis] = n
            out.append((2j * np.pi / L) * k.reshape(shape))
        return out

    @cached_property
    def k_squared(self):
        """|k|^2 on the grid (with Nyquist entries of the derivative zeroed)."""
        total = np.zeros(self.dims)
        for ik in self.wavenumbers:
            total = total + np.abs(ik) ** 2
        return total

    @cached_property
    def integer_modes(self):
        return [np.fft.fftfreq(n, d=1.0 / n).reshape([n if a == i else 1 for a in range(DIM)])
                for i, n in enumerate(self.dims)]


class FormField(Form):
    """A p-form field on a grid, coefficients shaped (N1, ..., N7, C(7,p))."""

    __slots__ = ("grid",)

    def __init__(self, grid, degree, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[:-1] != grid.dims:
            raise GridMismatch(f"coefficients of shape {coeffs.shape} do not match grid {grid.dims}")
        super().__init__(degree, coeffs)
        self.grid = grid

    def _new(self, degree, coeffs):
        return FormField(self.grid, degree, coeffs)

    def _check(self, other):
        bad = super()._check(other)
        if bad is None and isinstance(other, FormField) and other.grid != self.grid:
            raise GridMismatch("fields live on different grids")
        return bad

    @property
    def data(self):
        """Coefficients as a (P, C) array with x1 varying fastest."""
        order = tuple(range(DIM - 1, -1, -1)) + (DIM,)
        return np.ascontiguousarray(np.transpose(self.coeffs, order)).reshape(
            self.grid.npoints, SIZES[self.degree])

    @classmethod
    def from_data(cls, grid, degree, data):
        arr = np.asarray(data, dtype=float).reshape(tuple(reversed(grid.dims)) + (SIZES[degree],))
        order = tuple(range(DIM - 1, -1, -1)) + (DIM,)
        return cls(grid, degree, np.transpose(arr, order).copy())

    @classmethod
    def zeros(cls, grid, degree):
        return cls(grid, degree, np.zeros(grid.dims + (SIZES[degree],)))

    @classmethod
    def constant(cls, grid, form):
        return cls(grid, form.degree, np.broadcast_to(form.coeffs, grid.dims + form.coeffs.shape).copy())

    def max_abs(self):
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def scalar_field(grid, values):
    values = np.broadcast_to(np.asarray(values, dtype=float), grid.dims)
    return FormField(grid, 0, values[..., None].copy())


def as_field(grid, form):
    """Attach a grid to a batched Form whose batch shape is the grid shape."""
    if isinstance(form, FormField):
        return form
    return FormField(grid, form.degree, form.coeffs)


# ---------------------------------------------------------------------------
# Spectral exterior derivative and quadrature
# ---------------------------------------------------------------------------


def _fft(grid, arr):
    axes = grid.active_axes
    return np.fft.fftn(arr, axes=axes) if axes else arr.astype(complex)


def _ifft(grid, arr):
    axes = grid.active_axes
    return (np.fft.ifftn(arr, axes=axes) if axes else arr).real


def d_spectral(omega):
    """Exterior derivative by Fourier collocation."""
    p = omega.degree
    if p >= DIM:
        raise DegreeOverflow("d of a 7-form")
    grid = omega.grid
    table = wedge_table(1, p)
    out = np.zeros(grid.dims + (SIZES[p + 1],))
    axes = grid.active_axes
    if not axes:
        return FormField(grid, p + 1, out)
    spec = _fft(grid, omega.coeffs)
    acc = np.zeros(grid.dims + (SIZES[p + 1],), dtype=complex)
    for axis in axes:
        ik = grid.wavenumbers[axis][..., None]
        acc += (ik * spec) @ table[axis]
    return FormField(grid, p + 1, _ifft(grid, acc))


def partial(field_values, grid, axis):
    """Spectral partial derivative of an array whose leading axes are the grid."""
    if grid.dims[axis] == 1:
        return np.zeros_like(field_values)
    extra = field_values.ndim - DIM
    ik = grid.wavenumbers[axis].reshape(grid.wavenumbers[axis].shape + (1,) * extra)
    return _ifft(grid, ik * _fft(grid, field_values))


def integrate(f, vol_density=None, grid=None):
    """Integral of a scalar field against the density ``vol_density`` (default 1).

    Sums with numpy's pairwise reduction over the flattened points, so the
    result is deterministic.
    """
    if isinstance(f, FormField):
        if f.degree not in (0, DIM):
            raise GridMismatch("integrate expects a scalar (0-form or top-form) field")
        grid = f.grid if grid is None else grid
        values = f.coeffs[..., 0]
    else:
        values = np.asarray(f, dtype=float)
    if grid is None:
        raise GridMismatch("grid unknown")
    if values.shape != grid.dims:
        raise GridMismatch(f"field of shape {values.shape} on grid {grid.dims}")
    if vol_density is not None:
        dens = vol_density.coeffs[..., 0] if isinstance(vol_density, FormField) else np.asarray(vol_density)
        if dens.shape != grid.dims:
            raise GridMismatch("density lives on another grid")
        values = values * dens
    return float(np.sum(np.ascontiguousarray(values).ravel()) * grid.cell_volume)


# ---------------------------------------------------------------------------
# Closed G2 fields
# ---------------------------------------------------------------------------


class G2Field:
    """A closed positive 3-form field with its pointwise metric data."""

    def __init__(self, phi):
        self.grid = phi.grid
        self.phi = phi
        try:
            frame = frame_from_phi(phi)
        except NonPositiveForm as exc:
            raise NonPositiveForm(
                f"3-form is not positive at grid point {exc.index}", index=exc.index
            ) from exc
        self.metric = frame.metric
        self.psi = FormField(self.grid, 4, frame.psi.coeffs)
        self.vol_density = frame.vol_density
        self._tau = None

    @property
    def tau(self):
        """Torsion tau = delta(phi) = -*d*phi = -*d psi."""
        if self._tau is None:
            self._tau = -hodge_star(d_spectral(self.psi), self.metric)
        return self._tau

    def integrate(self, values):
        """Integral of a scalar array (or 0-form) against vol_phi."""
        return integrate(values, self.vol_density, self.grid)

    def inner(self, a, b):
        """L2 inner product of two forms with respect to g_phi and vol_phi."""
        from .exterior7 import form_inner

        return self.integrate(form_inner(a, b, self.metric))

    def volume(self):
        return self.integrate(np.ones(self.grid.dims))

    def shifted(self, direction, t):
        """The G2 field of phi + t * direction."""
        return G2Field(self.phi + direction * t)


def flat_field(grid):
    return G2Field(FormField.constant(grid, PHI0))


def make_closed_g2(grid, alpha, epsilon):
    """phi = phi0 + epsilon d(alpha), checked for positivity at every point."""
    phi = FormField.constant(grid, PHI0) + d_spectral(alpha) * float(epsilon)
    return G2Field(phi)


# ---------------------------------------------------------------------------
# Random band-limited data
# ---------------------------------------------------------------------------


@dataclass
class TangentVector:
    """An exact 3-form X = d(alpha) carried together with its potential alpha."""

    alpha: FormField
    X: FormField

    @classmethod
    def from_potential(cls, alpha):
        return cls(alpha, d_spectral(alpha))

    def __add__(self, other):
        return TangentVector(self.alpha + other.alpha, self.X + other.X)

    def __sub__(self, other):
        return TangentVector(self.alpha - other.alpha, self.X - other.X)

    def __mul__(self, scalar):
        return TangentVector(self.alpha * scalar, self.X * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def _check_band(grid, band_limit):
    active = [grid.dims[a] for a in grid.active_axes]
    if active and band_limit > min(active) // 2:
        raise BandLimitTooHigh(f"band limit {band_limit} exceeds min(N)/2 = {min(active) // 2}")


def band_mask(grid, band_limit):
    mask = np.ones(grid.dims, dtype=bool)
    for axis in range(DIM):
        mask &= np.abs(grid.integer_modes[axis]) <= band_limit
    return mask


def random_form_field(grid, degree, seed, band_limit, amplitude=1.0, zero_mean=False):
    """A reproducible random band-limited p-form field."""
    _check_band(grid, band_limit)
    rng = np.random.default_rng(seed)
    shape = grid.dims + (SIZES[degree],)
    spec = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = band_mask(grid, band_limit)
    if zero_mean:
        mask = mask.copy()
        mask[(0,) * DIM] = False
    spec *= mask[..., None]
    values = _ifft(grid, spec)
    scale = np.sqrt(np.mean(values ** 2)) if values.size else 1.0
    if scale > 0:
        values *= amplitude / scale
    return FormField(grid, degree, values)


def random_exact_3form(grid, seed, band_limit, amplitude=1.0):
    """A random tangent vector X = d(alpha) with band-limited alpha.

    The potential is rescaled so that the root-mean-square of the pointwise
    Euclidean norm of X equals ``amplitude``.
    """
    alpha = random_form_field(grid, 2, seed, band_limit, zero_mean=True)
    x = d_spectral(alpha)
    rms = np.sqrt(np.mean(np.sum(x.coeffs ** 2, axis=-1)))
    if rms > 0:
        alpha, x = alpha * (amplitude / rms), x * (amplitude / rms)
    return TangentVector(alpha, x)


def perturbed_field(grid, seed, epsilon, band_limit=2):
    """phi0 + epsilon X for a random exact X whose pointwise norm has unit RMS."""
    return make_closed_g2(grid, random_exact_3form(grid, seed, band_limit).alpha, epsilon)


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------


def save_field(path, field):
    """Write a field in the G2F1 snapshot format."""
    header = _HEADER.pack(MAGIC, field.degree, *field.grid.dims, *field.grid.lengths)
    payload = field.data.astype("<f8").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header + payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_field(path):
    """Read a field written by ``save_field``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than the snapshot header")
    magic, degree, *rest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if degree > DIM:
        raise FormatError(f"bad degree {degree}")
    dims, lengths = tuple(rest[:DIM]), tuple(rest[DIM:])
    try:
        grid = Grid(dims, lengths)
    except GridMismatch as exc:
        raise FormatError(str(exc)) from exc
    count = grid.npoints * SIZES[degree]
    payload = raw[_HEADER.size:]
    if len(payload) != 8 * count:
        raise FormatError(f"payload holds {len(payload)} bytes, expected {8 * count}")
    data = np.frombuffer(payload, dtype="<f8").astype(float)
    return FormField.from_data(grid, degree, data)
