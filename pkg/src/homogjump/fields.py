"""Exactly periodic coefficient fields as finite trigonometric polynomials.

A field evaluates to

    f(x) = sum_k C_k cos(2 pi m_k . (x / tau)) + S_k sin(2 pi m_k . (x / tau))

with integer frequency vectors m_k, so periodicity with period tau holds in
every coordinate by construction instead of by interpolation of grid samples.
Coefficients C_k, S_k are scalars, vectors or symmetric matrices depending on
the field shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCALAR = "scalar"
VECTOR = "vector"
MATRIX = "matrix"
_SHAPES = (SCALAR, VECTOR, MATRIX)

TWO_PI = 2.0 * np.pi


class FieldShapeError(ValueError):
    """A field was used where a different value shape is required."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Period:
    """Spatial period, one strictly positive length per axis."""

    tau: np.ndarray

    def __post_init__(self):
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if tau.ndim != 1 or tau.size < 1:
            raise ValueError("period must be a 1-d vector with at least one entry")
        if not np.all(np.isfinite(tau)) or np.any(tau <= 0.0):
            raise ValueError("every period component must be finite and > 0")
        object.__setattr__(self, "tau", _frozen(tau))

    @property
    def dim(self) -> int:
        return self.tau.size

    def same_as(self, other: "Period") -> bool:
        return self.dim == other.dim and np.array_equal(self.tau, other.tau)


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Trigonometric-polynomial field with scalar, vector or matrix values.

    ``freqs`` has shape (nterms, dim) with integer entries; ``cos_coef`` and
    ``sin_coef`` have shape (nterms,), (nterms, dim) or (nterms, dim, dim)
    according to ``shape``.  Matrix coefficients must be exactly symmetric,
    which makes every evaluation symmetric.
    """

    shape: str
    period: Period
    freqs: np.ndarray
    cos_coef: np.ndarray
    sin_coef: np.ndarray

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise FieldShapeError(f"unknown field shape {self.shape!r}")
        d = self.period.dim
        freqs = np.atleast_2d(np.asarray(self.freqs))
        if freqs.size == 0:
            freqs = np.zeros((1, d))
        if freqs.ndim != 2 or freqs.shape[1] != d:
            raise ValueError(f"frequency array must have shape (nterms, {d})")
        if not np.allclose(freqs, np.round(freqs)):
            raise ValueError("frequency vectors must be integer")
        freqs = freqs.astype(float)
        nterms = freqs.shape[0]

        want = {SCALAR: (nterms,), VECTOR: (nterms, d), MATRIX: (nterms, d, d)}[self.shape]
        cos_c = np.asarray(self.cos_coef, dtype=float).reshape(want)
        sin_c = np.asarray(self.sin_coef, dtype=float).reshape(want)
        if self.shape == MATRIX:
            for name, c in (("cos", cos_c), ("sin", sin_c)):
                if not np.array_equal(c, np.swapaxes(c, -1, -2)):
                    raise ValueError(f"matrix field {name} coefficients must be symmetric")

        object.__setattr__(self, "freqs", _frozen(freqs))
        object.__setattr__(self, "cos_coef", _frozen(cos_c))
        object.__setattr__(self, "sin_coef", _frozen(sin_c))
        # cached evaluation tables; constant (zero-frequency) rows skip the
        # trigonometric evaluation entirely
        moving = np.any(freqs != 0.0, axis=1)
        const = cos_c[~moving].sum(axis=0).reshape(-1)
        n_mov = int(moving.sum())
        object.__setattr__(self, "_const", _frozen(const))
        object.__setattr__(self, "_omega", _frozen(TWO_PI * freqs[moving] / self.period.tau))
        object.__setattr__(self, "_cflat", _frozen(cos_c[moving].reshape(n_mov, const.size)))
        object.__setattr__(self, "_sflat", _frozen(sin_c[moving].reshape(n_mov, const.size)))
        d = self.period.dim
        if self.shape == MATRIX:
            ii = np.arange(d)
            object.__setattr__(self, "_const_diag", _frozen(const.reshape(d, d)[ii, ii].copy()))
            object.__setattr__(self, "_cdiag", _frozen(np.ascontiguousarray(cos_c[moving][:, ii, ii])))
            object.__setattr__(self, "_sdiag", _frozen(np.ascontiguousarray(sin_c[moving][:, ii, ii])))

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value, period: Period) -> "PeriodicField":
        """Constant field; the shape is inferred from the value's ndim."""
        v = np.asarray(value, dtype=float)
        shape = {0: SCALAR, 1: VECTOR, 2: MATRIX}.get(v.ndim)
        if shape is None:
            raise FieldShapeError("constant value must be scalar, vector or matrix")
        return cls(shape, period, np.zeros((1, period.dim)), v[None], np.zeros_like(v)[None])

    @classmethod
    def zero(cls, shape: str, period: Period) -> "PeriodicField":
        d = period.dim
        dims = {SCALAR: (), VECTOR: (d,), MATRIX: (d, d)}[shape]
        return cls.constant(np.zeros(dims), period)

    @classmethod
    def from_terms(cls, shape: str, period: Period, terms) -> "PeriodicField":
        """Build from a list of (frequency vector, cos coefficient, sin coefficient)."""
        if not terms:
            return cls.zero(shape, period)
        freqs = np.array([np.atleast_1d(m) for m, _, _ in terms], dtype=float)
        cos_c = np.array([np.asarray(c, dtype=float) for _, c, _ in terms])
        sin_c = np.array([np.asarray(s, dtype=float) for _, _, s in terms])
        return cls(shape, period, freqs, cos_c, sin_c)

    # -- properties ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.period.dim

    @property
    def value_shape(self) -> tuple:
        d = self.dim
        return {SCALAR: (), VECTOR: (d,), MATRIX: (d, d)}[self.shape]

    def is_zero(self) -> bool:
        return not (np.any(self.cos_coef) or np.any(self.sin_coef))

    def constant_value(self):
        """The constant value if all nonzero-frequency coefficients vanish, else None."""
        moving = np.any(self.freqs != 0.0, axis=1)
        if np.any(self.cos_coef[moving]) or np.any(self.sin_coef[moving]):
            return None
        val = self.cos_coef[~moving].sum(axis=0)
        return float(val) if self.shape == SCALAR else val

    def is_diagonal(self) -> bool:
        """True for matrix fields whose off-diagonal coefficients all vanish."""
        if self.shape != MATRIX:
            raise FieldShapeError("is_diagonal applies to matrix fields")
        off = ~np.eye(self.dim, dtype=bool)
        return not (np.any(self.cos_coef[:, off]) or np.any(self.sin_coef[:, off]))

    # -- evaluation ---------------------------------------------------------

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate at a batch of points, shape (n, dim) -> (n, *value_shape)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self._trig_eval(X, self._cflat, self._sflat, self._const)
        return out.reshape((X.shape[0],) + self.value_shape)

    def _trig_eval(self, X, cflat, sflat, const):
        if self._omega.shape[0] == 0:
            return np.broadcast_to(const, (X.shape[0], const.size)).copy()
        ph = X @ self._omega.T
        out = None
        if cflat.any():
            out = np.cos(ph) @ cflat
        if sflat.any():
            s = np.sin(ph) @ sflat
            out = s if out is None else out + s
        if out is None:
            out = np.zeros((X.shape[0], const.size))
        out += const
        return out

    def eval(self, x):
        """Evaluate at a single point; scalars come back as plain floats."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise ValueError(f"point must have shape ({self.dim},)")
        if not np.all(np.isfinite(x)):
            raise ValueError("evaluation point must be finite")
        out = self.eval_batch(x[None])[0]
        return float(out) if self.shape == SCALAR else out

    __call__ = eval

    def eval_diag_batch(self, X: np.ndarray) -> np.ndarray:
        """Diagonal entries of a matrix field at a batch of points, (n, dim)."""
        if self.shape != MATRIX:
            raise FieldShapeError("eval_diag_batch applies to matrix fields")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._trig_eval(X, self._cdiag, self._sdiag, self._const_diag)

    # -- transforms ---------------------------------------------------------

    def scaled(self, value_factor: float = 1.0, period_factor: float = 1.0) -> "PeriodicField":
        """Field x -> value_factor * f(x / period_factor)."""
        return PeriodicField(
            self.shape,
            Period(self.period.tau * period_factor),
            self.freqs,
            value_factor * self.cos_coef,
            value_factor * self.sin_coef,
        )


class ScalarFieldStack:
    """Joint evaluator for several scalar fields sharing one period.

    Stacks all terms into a single trigonometric pass, so evaluating K
    intensities costs one cos/sin sweep instead of K.
    """

    def __init__(self, fields):
        fields = list(fields)
        if not fields:
            raise ValueError("need at least one field")
        period = fields[0].period
        K = len(fields)
        for f in fields:
            if f.shape != SCALAR or not f.period.same_as(period):
                raise ValueError("stack requires scalar fields on one period")
        rows_omega, rows_c, rows_s = [], [], []
        const = np.zeros(K)
        for k, f in enumerate(fields):
            const[k] = f._const[0]
            for j in range(f._omega.shape[0]):
                rows_omega.append(f._omega[j])
                c = np.zeros(K)
                s = np.zeros(K)
                c[k] = f._cflat[j, 0]
                s[k] = f._sflat[j, 0]
                rows_c.append(c)
                rows_s.append(s)
        self.width = K
        self._const = const
        self._omega = np.array(rows_omega).reshape(len(rows_omega), period.dim)
        self._cflat = np.array(rows_c).reshape(len(rows_c), K)
        self._sflat = np.array(rows_s).reshape(len(rows_s), K)
        self._has_cos = bool(self._cflat.any())
        self._has_sin = bool(self._sflat.any())

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self._omega.shape[0] == 0:
            return np.broadcast_to(self._const, (X.shape[0], self.width)).copy()
        ph = X @ self._omega.T
        out = None
        if self._has_cos:
            out = np.cos(ph) @ self._cflat
        if self._has_sin:
            s = np.sin(ph) @ self._sflat
            out = s if out is None else out + s
        if out is None:
            out = np.zeros((X.shape[0], self.width))
        out += self._const
        return out


def eval_field(field: PeriodicField, x):
    """Evaluate a periodic field at one point."""
    return field.eval(x)


def lattice(period: Period, res: int) -> np.ndarray:
    """Regular lattice j * tau / res over one period cell, shape (res**dim, dim)."""
    if res < 1:
        raise ValueError("lattice resolution must be >= 1")
    d = period.dim
    idx = np.indices((res,) * d).reshape(d, -1).T
    return idx * (period.tau / res)
