"""Exact multilinear algebra of alternating forms on an oriented 7-dimensional
inner-product space.

A p-form is stored by its coefficients on strictly increasing index tuples
(lexicographic order), so that ``omega = sum_I omega_I dx^I``.  Coefficient
arrays may carry arbitrary leading batch axes; every operation here acts
pointwise on those axes, which is how grid fields reuse this module.

Indices are 0-based internally.  ``basis_form`` takes 1-based labels so that
``basis_form(1, 2)`` reads as e^{12}.

Orientation is fixed by epsilon^{1...7} = +1 and vol = sqrt(det g) dx^{1...7}.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .errors import (
    DegreeMismatch,
    DegreeOverflow,
    DegreeUnderflow,
    NonPositiveMetric,
)

DIM = 7


# ---------------------------------------------------------------------------
# Multi-index tables
# ---------------------------------------------------------------------------


def _perm_sign(seq):
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) < len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class MultiIndexTable:
    """Increasing index tuples for every degree plus a sign lookup."""

    def __init__(self, dim=DIM):
        self.dim = dim
        self.tuples = [list(itertools.combinations(range(dim), p)) for p in range(dim + 1)]
        self.slot = [{t: k for k, t in enumerate(ts)} for ts in self.tuples]

    def size(self, p):
        return len(self.tuples[p])

    def lookup(self, indices):
        """Map an arbitrary index tuple to ``(slot, sign)``.

        The sign is 0 exactly when an index repeats; the slot is then -1.
        """
        indices = tuple(indices)
        sign = _perm_sign(indices)
        if sign == 0:
            return -1, 0
        return self.slot[len(indices)][tuple(sorted(indices))], sign


TABLE = MultiIndexTable()
SIZES = tuple(comb(DIM, p) for p in range(DIM + 1))


@lru_cache(maxsize=None)
def wedge_table(p, q):
    """Dense sign tensor W with (a^b)_K = sum a_I b_J W[I, J, K]."""
    w = np.zeros((SIZES[p], SIZES[q], SIZES[p + q]))
    for i, ti in enumerate(TABLE.tuples[p]):
        for j, tj in enumerate(TABLE.tuples[q]):
            k, s = TABLE.lookup(ti + tj)
            if s:
                w[i, j, k] = s
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def interior_table(p):
    """Sign tensor T with (u _| a)_J = sum u^j a_I T[j, I, J]."""
    t = np.zeros((DIM, SIZES[p], SIZES[p - 1]))
    for i, ti in enumerate(TABLE.tuples[p]):
        for pos, idx in enumerate(ti):
            rest = ti[:pos] + ti[pos + 1:]
            t[idx, i, TABLE.slot[p - 1][rest]] = (-1) ** pos
    t.setflags(write=False)
    return t


@lru_cache(maxsize=None)
def star_sign_matrix(p):
    """E[J, I] = epsilon_{I J} for complementary increasing tuples."""
    e = np.zeros((SIZES[DIM - p], SIZES[p]))
    for i, ti in enumerate(TABLE.tuples[p]):
        tj = tuple(x for x in range(DIM) if x not in ti)
        e[TABLE.slot[DIM - p][tj], i] = _perm_sign(ti + tj)
    e.setflags(write=False)
    return e


@lru_cache(maxsize=None)
def _star_permutation(p):
    """Row permutation and signs with star_sign_matrix(p) = diag(signs) P."""
    e = star_sign_matrix(p)
    rows = np.argmax(np.abs(e), axis=1)
    signs = e[np.arange(e.shape[0]), rows]
    return rows, signs


@lru_cache(maxsize=None)
def _expansion(p):
    """Flat positions, source slots and signs for the full antisymmetric array."""
    pos, slots, signs = [], [], []
    strides = [DIM ** (p - 1 - k) for k in range(p)]
    for i, ti in enumerate(TABLE.tuples[p]):
        for perm in itertools.permutations(range(p)):
            idx = [ti[k] for k in perm]
            pos.append(sum(a * b for a, b in zip(idx, strides)))
            slots.append(i)
            signs.append(_perm_sign(perm))
    out = (np.array(pos), np.array(slots), np.array(signs, dtype=float))
    for arr in out:
        arr.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _increasing_positions(p):
    strides = [DIM ** (p - 1 - k) for k in range(p)]
    arr = np.array([sum(a * b for a, b in zip(t, strides)) for t in TABLE.tuples[p]], dtype=int)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


class Form:
    """A p-form (possibly batched) stored on increasing index tuples."""

    __slots__ = ("degree", "coeffs")

    def __init__(self, degree, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if not 0 <= degree <= DIM:
            raise DegreeOverflow(f"degree {degree} outside 0..7")
        if coeffs.shape[-1:] != (SIZES[degree],):
            raise ValueError(
                f"degree {degree} needs {SIZES[degree]} coefficients, got shape {coeffs.shape}"
            )
        self.degree = degree
        self.coeffs = coeffs

    # Subclasses (grid fields) override this to carry extra metadata.
    def _new(self, degree, coeffs):
        return Form(degree, coeffs)

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    def copy(self):
        return self._new(self.degree, self.coeffs.copy())

    def _check(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        if other.degree != self.degree:
            raise DegreeMismatch(f"degrees {self.degree} and {other.degree}")
        return None

    def __add__(self, other):
        bad = self._check(other)
        if bad is NotImplemented:
            return bad
        return self._new(self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        bad = self._check(other)
        if bad is NotImplemented:
            return bad
        return self._new(self.degree, self.coeffs - other.coeffs)

    def __neg__(self):
        return self._new(self.degree, -self.coeffs)

    def __mul__(self, scalar):
        """Multiply by a number or by a scalar array matching the batch shape."""
        if isinstance(scalar, Form):
            return NotImplemented
        s = np.asarray(scalar, dtype=float)
        if s.ndim:
            s = s[..., None]
        return self._new(self.degree, self.coeffs * s)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / np.asarray(scalar, dtype=float))

    def __repr__(self):
        return f"{type(self).__name__}(degree={self.degree}, batch={self.batch_shape})"


def zero_form(p, batch_shape=()):
    return Form(p, np.zeros(tuple(batch_shape) + (SIZES[p],)))


def basis_form(*labels):
    """The form e^{i1...ip} for 1-based labels, e.g. ``basis_form(2, 7, 5)``."""
    p = len(labels)
    c = np.zeros(SIZES[p])
    if p == 0:
        c[0] = 1.0
        return Form(0, c)
    slot, sign = TABLE.lookup([x - 1 for x in labels])
    if sign:
        c[slot] = sign
    return Form(p, c)


def scalar_form(values):
    """Wrap a scalar (or array of scalars) as a 0-form."""
    return Form(0, np.asarray(values, dtype=float)[..., None])


def to_full(a):
    """Expand to the fully antisymmetric array of shape (..., 7, ..., 7)."""
    pos, slots, signs = _expansion(a.degree)
    flat = np.zeros(a.batch_shape + (DIM ** a.degree,))
    flat[..., pos] = a.coeffs[..., slots] * signs
    return flat.reshape(a.batch_shape + (DIM,) * a.degree)


def from_full(arr, p):
    """Read the increasing-index coefficients of an antisymmetric array."""
    batch = arr.shape[: arr.ndim - p]
    flat = arr.reshape(batch + (DIM ** p,))
    return Form(p, flat[..., _increasing_positions(p)])


def antisymmetrize(arr, p):
    """Project an arbitrary rank-p array onto its alternating part."""
    out = np.zeros_like(arr)
    nb = arr.ndim - p
    for perm in itertools.permutations(range(p)):
        axes = list(range(nb)) + [nb + k for k in perm]
        out = out + _perm_sign(perm) * np.transpose(arr, axes)
    return out / factorial(p)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _laplace_plan(p):
    """Index arrays for expanding p x p minors along their first row."""
    rows = TABLE.tuples[p]
    first = np.array([t[0] for t in rows])
    rest = np.array([TABLE.slot[p - 1][t[1:]] for t in rows])
    cols_k = np.array([[t[k] for t in rows] for k in range(p)])
    cols_rest = np.array([[TABLE.slot[p - 1][t[:k] + t[k + 1:]] for t in rows] for k in range(p)])
    return first, rest, cols_k, cols_rest


def compound_matrix(a, p, lower=None):
    """p-th compound matrix: minors of ``a`` on increasing index tuples.

    Built by first-row Laplace expansion from the (p-1)-th compound, which
    may be passed as ``lower`` to avoid recomputation.
    """
    a = np.asarray(a, dtype=float)
    batch = a.shape[:-2]
    if p == 0:
        return np.ones(batch + (1, 1))
    if p == 1:
        return a.copy()
    if lower is None:
        lower = compound_matrix(a, p - 1)
    first, rest, cols_k, cols_rest = _laplace_plan(p)
    out = np.zeros(batch + (SIZES[p], SIZES[p]))
    for k in range(p):
        term = a[..., first[:, None], cols_k[k][None, :]] * lower[..., rest[:, None], cols_rest[k][None, :]]
        out = out + term if k % 2 == 0 else out - term
    return out


class Metric:
    """A (possibly batched) positive-definite metric with cached derived data."""

    def __init__(self, g, ginv=None, sqrt_det=None):
        g = np.asarray(g, dtype=float)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        if sqrt_det is None:
            try:
                chol = np.linalg.cholesky(g)
            except np.linalg.LinAlgError as exc:
                raise NonPositiveMetric("metric is not positive definite") from exc
            sqrt_det = np.prod(np.diagonal(chol, axis1=-2, axis2=-1), axis=-1)
        if ginv is None:
            ginv = np.linalg.inv(g)
            ginv = 0.5 * (ginv + np.swapaxes(ginv, -1, -2))
        self.g = g
        self.ginv = ginv
        self.sqrt_det = np.asarray(sqrt_det, dtype=float)
        self._compound = {}
        self._star = {}

    @classmethod
    def identity(cls, batch_shape=()):
        eye = np.broadcast_to(np.eye(DIM), tuple(batch_shape) + (DIM, DIM)).copy()
        return cls(eye, eye.copy(), np.ones(batch_shape))

    @property
    def batch_shape(self):
        return self.g.shape[:-2]

    def raise_matrix(self, p):
        """Compound matrix of g^{-1}: maps lower to raised increasing coefficients."""
        if p not in self._compound:
            lower = self.raise_matrix(p - 1) if p >= 2 else None
            self._compound[p] = compound_matrix(self.ginv, p, lower)
        return self._compound[p]

    def star_matrix(self, p):
        """Matrix of the Hodge star on p-forms, shape (..., C(7,7-p), C(7,p))."""
        if p not in self._star:
            rows, signs = _star_permutation(p)
            self._star[p] = (self.sqrt_det[..., None, None] * signs[:, None]) * self.raise_matrix(p)[..., rows, :]
        return self._star[p]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _bilinear(a, b, table):
    outer = a[..., :, None] * b[..., None, :]
    shape = outer.shape[:-2] + (outer.shape[-2] * outer.shape[-1],)
    return outer.reshape(shape) @ table.reshape(-1, table.shape[-1])


def wedge(a, b):
    """Exterior product of a p-form and a q-form."""
    p, q = a.degree, b.degree
    if p + q > DIM:
        raise DegreeOverflow(f"wedge of degrees {p} and {q} exceeds 7")
    owner = a if a.coeffs.ndim >= b.coeffs.ndim else b
    return owner._new(p + q, _bilinear(a.coeffs, b.coeffs, wedge_table(p, q)))


def interior(u, a):
    """Contraction u _| a with a vector u of shape (..., 7)."""
    if a.degree == 0:
        raise DegreeUnderflow("interior product of a 0-form")
    u = np.asarray(u, dtype=float)
    return a._new(a.degree - 1, _bilinear(u, a.coeffs, interior_table(a.degree)))


def raise_coeffs(a, m):
    """Coefficients a^I of the fully raised form on increasing tuples."""
    return np.einsum("...ij,...j->...i", m.raise_matrix(a.degree), a.coeffs)


def form_inner(a, b, m):
    """Pointwise inner product g(a, b) of two p-forms."""
    if a.degree != b.degree:
        raise DegreeMismatch(f"degrees {a.degree} and {b.degree}")
    return np.einsum("...i,...i->...", raise_coeffs(a, m), b.coeffs)


def tensor_inner(s, t, m):
    """Inner product (1/2) S_ij T_kl g^ik g^jl of symmetric 2-tensors."""
    return 0.5 * np.einsum("...ij,...kl,...ik,...jl->...", s, t, m.ginv, m.ginv)


def hodge_star(a, m):
    """Hodge star of ``a`` for the metric ``m``."""
    return a._new(
        DIM - a.degree, np.einsum("...ij,...j->...i", m.star_matrix(a.degree), a.coeffs)
    )


def volume_form(m):
    """The Riemannian volume form sqrt(det g) e^{1...7}."""
    if not np.all(np.isfinite(m.sqrt_det)) or np.any(m.sqrt_det <= 0):
        raise NonPositiveMetric("metric has non-positive determinant")
    return Form(DIM, np.asarray(m.sqrt_det, dtype=float)[..., None])


def algebra_suite(trials=1000, seed=0, tol=1e-12):
    """Graded algebra and Hodge star properties on random forms and random metrics."""
    from .report import Report

    rng = np.random.default_rng(seed)
    n = int(trials)
    a_mat = np.eye(DIM) + 0.1 * rng.standard_normal((n, DIM, DIM))
    m = Metric(a_mat @ np.swapaxes(a_mat, 1, 2))
    vol = volume_form(m)
    rep = Report("exterior algebra")

    def rand(p):
        return Form(p, rng.standard_normal((n, SIZES[p])))

    def rel(diff, *forms):
        scale = np.ones(n)
        for f in forms:
            scale = scale * np.abs(f.coeffs).max(axis=-1)
        diff = np.abs(diff).reshape(n, -1).max(axis=1)
        return float(np.max(diff / np.maximum(scale, 1e-300)))

    worst = {"graded": 0.0, "assoc": 0.0, "leibniz": 0.0, "starstar": 0.0, "inner": 0.0}
    for p in range(DIM + 1):
        for q in range(DIM + 1 - p):
            a, b = rand(p), rand(q)
            ab, ba = wedge(a, b), wedge(b, a)
            worst["graded"] = max(worst["graded"], rel(ab.coeffs - (-1) ** (p * q) * ba.coeffs, a, b))
            r = DIM - p - q
            c = rand(min(r, 2))
            if p + q + c.degree <= DIM:
                lhs, rhs = wedge(wedge(a, b), c), wedge(a, wedge(b, c))
                worst["assoc"] = max(worst["assoc"], rel(lhs.coeffs - rhs.coeffs, a, b, c))
            if p > 0 and q > 0:
                u = rng.standard_normal((n, DIM))
                lhs = interior(u, ab)
                rhs = wedge(interior(u, a), b) + wedge(a, interior(u, b)) * ((-1) ** p)
                worst["leibniz"] = max(worst["leibniz"], 3 * rel(lhs.coeffs - rhs.coeffs, a, b) / (1 + np.abs(u).max()))
        a, b = rand(p), rand(p)
        worst["starstar"] = max(worst["starstar"], rel(hodge_star(hodge_star(a, m), m).coeffs - a.coeffs, a))
        top = wedge(a, hodge_star(b, m))
        expected = form_inner(a, b, m)[..., None] * vol.coeffs
        scale = np.sqrt(form_inner(a, a, m) * form_inner(b, b, m)) * m.sqrt_det
        diff = np.abs(top.coeffs - expected)[..., 0] / np.maximum(scale, 1e-300)
        worst["inner"] = max(worst["inner"], float(diff.max()))
    rep.add("a ^ b = (-1)^pq b ^ a", n, worst["graded"], tol)
    rep.add("wedge is associative", n, worst["assoc"], tol)
    rep.add("interior product is an antiderivation", n, worst["leibniz"], tol)
    rep.add("** = 1 in dimension 7", n, worst["starstar"], 1e-9)
    rep.add("a ^ *b = g(a, b) vol", n, worst["inner"], 1e-9)
    return rep
