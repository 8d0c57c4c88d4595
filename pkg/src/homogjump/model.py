"""Jump-diffusion model: drift, diffusion and jump kernel with structural checks.

The jump kernel is a finite mixture  nu(x, dy) = sum_k lambda_k(x) mu_k(dy)
with periodic scalar intensities lambda_k and state-independent size laws
mu_k.  Size laws are either finite atom lists or the uniform law on a ball,
both of which have closed-form moments and admit exact thinning simulation.

``validate_model`` checks the structural conditions the limit theory needs:
zero killing, periodicity (by construction), positive semidefinite diffusion,
nonnegative intensities, a finite second jump moment, and the centering
condition (every size law symmetric or supported in the closed unit ball).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import MATRIX, SCALAR, VECTOR, Period, PeriodicField, lattice

ATOMS = "atoms"
UNIFORM_BALL = "uniform_ball"

#: default validation lattice resolution per axis
VALIDATION_RES = 64
#: safety factor on the grid maximum of the total intensity
MAJORANT_MARGIN = 0.1
#: eigenvalue tolerance for the PSD check of the diffusion matrix
PSD_TOL = -1e-12


class ModelValidationError(ValueError):
    """A structural condition failed for the model."""


def _power_int(p: float, a: float, b: float) -> float:
    """Integral of s**p over [a, b]."""
    if b <= a:
        return 0.0
    return (b ** (p + 1) - a ** (p + 1)) / (p + 1)


@dataclass(frozen=True, eq=False)
class SizeDistribution:
    """Jump-size law: finite atoms or the uniform law on a centered ball.

    ``symmetric`` declares invariance under y -> -y; for atoms it is verified
    against the atom list, the uniform ball is symmetric by construction.
    """

    kind: str
    dim: int
    symmetric: bool
    weights: np.ndarray | None = None
    points: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind == ATOMS:
            w = np.asarray(self.weights, dtype=float)
            y = np.atleast_2d(np.asarray(self.points, dtype=float))
            if y.shape != (w.size, self.dim):
                raise ValueError("atom points must have shape (natoms, dim)")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("atom weights must be nonnegative and sum to 1")
            w = np.ascontiguousarray(w)
            y = np.ascontiguousarray(y)
            w.setflags(write=False)
            y.setflags(write=False)
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "points", y)
            if self.symmetric and not self._atoms_negation_closed():
                raise ValueError("symmetric=True but atom set is not closed under negation")
        elif self.kind == UNIFORM_BALL:
            if self.radius is None or not (self.radius > 0):
                raise ValueError("uniform ball radius must be > 0")
            if not self.symmetric:
                raise ValueError("the uniform ball law is symmetric by construction")
        else:
            raise ValueError(f"unknown size distribution kind {self.kind!r}")

    @classmethod
    def atoms(cls, weights, points, symmetric: bool | None = None) -> "SizeDistribution":
        y = np.atleast_2d(np.asarray(points, dtype=float))
        dist = cls(ATOMS, y.shape[1], False, np.asarray(weights, float), y)
        if symmetric is None:
            symmetric = dist._atoms_negation_closed()
        return cls(ATOMS, y.shape[1], bool(symmetric), dist.weights, dist.points)

    @classmethod
    def uniform_ball(cls, radius: float, dim: int) -> "SizeDistribution":
        return cls(UNIFORM_BALL, dim, True, radius=float(radius))

    def _atoms_negation_closed(self, tol: float = 1e-12) -> bool:
        w, y = self.weights, self.points
        for wi, yi in zip(w, y):
            match = np.all(np.abs(y + yi) <= tol, axis=1)
            if not np.any(match) or abs(w[match].sum() - wi) > tol:
                return False
        return True

    # -- moments -------------------------------------------------------------

    def second_moment(self) -> np.ndarray:
        """Matrix of second moments: integral of y y^T against the law."""
        if self.kind == ATOMS:
            return np.einsum("k,ki,kj->ij", self.weights, self.points, self.points)
        # uniform on a ball of radius r in dimension d: (r^2 / (d + 2)) I
        return (self.radius**2 / (self.dim + 2)) * np.eye(self.dim)

    def first_moment(self) -> np.ndarray:
        if self.kind == ATOMS:
            return self.weights @ self.points
        return np.zeros(self.dim)

    def first_moment_in_unit_ball(self) -> np.ndarray:
        """Integral of y over |y| <= 1; the drift compensator of one jump."""
        if self.kind == ATOMS:
            inside = np.linalg.norm(self.points, axis=1) <= 1.0
            return self.weights[inside] @ self.points[inside]
        return np.zeros(self.dim)  # odd integrand, symmetric law

    def first_moment_outside_unit_ball(self) -> np.ndarray:
        if self.kind == ATOMS:
            outside = np.linalg.norm(self.points, axis=1) > 1.0
            return self.weights[outside] @ self.points[outside]
        return np.zeros(self.dim)

    def support_radius(self) -> float:
        if self.kind == ATOMS:
            return float(np.max(np.linalg.norm(self.points, axis=1)))
        return float(self.radius)

    def supported_in_unit_ball(self) -> bool:
        return self.support_radius() <= 1.0 + 1e-12

    # -- sampling ------------------------------------------------------------

    def decode(self, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Map pre-drawn uniforms u (m,) and normals z (m, dim) to jump sizes."""
        u = np.atleast_1d(u)
        if self.kind == ATOMS:
            cum = np.cumsum(self.weights)
            idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
            return self.points[idx]
        norms = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)
        radii = self.radius * u ** (1.0 / self.dim)
        return radii[:, None] * (z / norms)

    # -- closed-form kernel integrals (used by the characteristics module) ----

    def mean_trunc_minus_id(self, eps: float, trunc) -> np.ndarray:
        """Integral of h(eps y) - eps y 1_{|y|<=1}(y) against the law.

        ``trunc`` is a ramp truncation (callable, with attribute delta).
        Exactly zero for symmetric laws since the integrand is odd.
        """
        if self.symmetric:
            return np.zeros(self.dim)
        y = self.points
        h_vals = trunc(eps * y)
        inside = (np.linalg.norm(y, axis=1) <= 1.0).astype(float)
        return self.weights @ (h_vals - eps * y * inside[:, None])

    def mean_trunc_outer(self, eps: float, trunc) -> np.ndarray:
        """Integral of h(eps y) h(eps y)^T against the law."""
        if self.kind == ATOMS:
            h_vals = trunc(eps * self.points)
            return np.einsum("k,ki,kj->ij", self.weights, h_vals, h_vals)
        # radial law: h(eps y) h(eps y)^T = eps^2 rho(eps s / delta)^2 y y^T,
        # isotropy gives E[y y^T | s] = (s^2 / d) I
        d, r = self.dim, self.radius
        q = eps / trunc.delta
        a1 = min(r, 1.0 / q)
        a2 = min(r, 2.0 / q)
        val = _power_int(d + 1, 0.0, a1)
        val += (
            4.0 * _power_int(d + 1, a1, a2)
            - 4.0 * q * _power_int(d + 2, a1, a2)
            + q * q * _power_int(d + 3, a1, a2)
        )
        return (eps**2 * val / r**d) * np.eye(d)

    def mean_bigjump(self, eps: float, delta_g: float) -> float:
        """Integral of g(eps y) with g(y) = min(max(|y| - delta_g, 0), 1)."""
        if self.kind == ATOMS:
            s = eps * np.linalg.norm(self.points, axis=1)
            return float(self.weights @ np.clip(s - delta_g, 0.0, 1.0))
        d, r = self.dim, self.radius
        t0 = min(r, delta_g / eps)
        t1 = min(r, (delta_g + 1.0) / eps)
        val = eps * _power_int(d, t0, t1) - delta_g * _power_int(d - 1, t0, t1)
        val += _power_int(d - 1, t1, r)
        return float(d * val / r**d)


@dataclass(frozen=True, eq=False)
class JumpFamily:
    """One mixture component: periodic intensity and a state-independent size law."""

    intensity: PeriodicField
    sizes: SizeDistribution

    def __post_init__(self):
        if self.intensity.shape != SCALAR:
            raise ValueError("jump intensity must be a scalar field")
        if self.sizes.dim != self.intensity.dim:
            raise ValueError("size law dimension must match the intensity field")


@dataclass(frozen=True, eq=False)
class Model:
    """Periodic jump-diffusion model (zero killing by construction)."""

    dim: int
    period: Period
    drift: PeriodicField
    diffusion: PeriodicField
    jumps: tuple = dc_field(default_factory=tuple)

    def __post_init__(self):
        if self.dim != self.period.dim:
            raise ValueError("dimension and period length disagree")
        if self.drift.shape != VECTOR or not self.drift.period.same_as(self.period):
            raise ValueError("drift must be a vector field on the model period")
        if self.diffusion.shape != MATRIX or not self.diffusion.period.same_as(self.period):
            raise ValueError("diffusion must be a matrix field on the model period")
        jumps = tuple(self.jumps)
        for fam in jumps:
            if not isinstance(fam, JumpFamily):
                raise TypeError("jumps must be JumpFamily instances")
            if not fam.intensity.period.same_as(self.period):
                raise ValueError("jump intensity period must match the model period")
        object.__setattr__(self, "jumps", jumps)

    @classmethod
    def diffusion_only(cls, diffusion: PeriodicField, drift: PeriodicField | None = None) -> "Model":
        period = diffusion.period
        if drift is None:
            drift = PeriodicField.zero(VECTOR, period)
        return cls(period.dim, period, drift, diffusion)

    def has_jumps(self) -> bool:
        return len(self.jumps) > 0


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    witness: float | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self) -> Check | None:
        for c in self.checks:
            if not c.passed:
                return c
        return None

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            mark = "pass" if c.passed else "FAIL"
            wit = "" if c.witness is None else f" (witness {c.witness:.6g})"
            lines.append(f"{c.name}: {mark}{wit} - {c.detail}")
        return "\n".join(lines)


def validate_model(m: Model, grid_res: int = VALIDATION_RES) -> ValidationReport:
    """Check the structural model conditions on a validation lattice.

    The report is a pure function of the model and the resolution; it lists
    every condition with the witnessing quantity.
    """
    pts = lattice(m.period, grid_res)
    checks = []

    checks.append(Check("C2", True, 0.0, "killing coefficient is zero by construction"))
    checks.append(Check(
        "C3", True, None,
        "positive continuous transition density assumed for the supported model class",
    ))
    checks.append(Check(
        "C4", True, None,
        "coefficients are trigonometric polynomials, hence exactly periodic",
    ))

    cvals = m.diffusion.eval_batch(pts)
    if m.dim == 1:
        min_eig = float(np.min(cvals))
    else:
        min_eig = float(np.min(np.linalg.eigvalsh(cvals)))
    checks.append(Check(
        "diffusion_psd", min_eig >= PSD_TOL, min_eig,
        f"minimum diffusion eigenvalue on the {grid_res}^d lattice",
    ))

    min_lam = 0.0
    lam_ok = True
    lam_detail = "no jump families"
    for k, fam in enumerate(m.jumps):
        lam_k = float(np.min(fam.intensity.eval_batch(pts)))
        if k == 0 or lam_k < min_lam:
            min_lam = lam_k
        if lam_k < 0.0:
            lam_ok = False
            lam_detail = f"negative intensity in family {k}"
            break
    if lam_ok and m.jumps:
        lam_detail = "minimum intensity over families on the lattice"
    checks.append(Check("intensity_nonneg", lam_ok, min_lam, lam_detail))

    if m.jumps:
        lam_grid = np.stack([fam.intensity.eval_batch(pts) for fam in m.jumps], axis=1)
        traces = np.array([np.trace(fam.sizes.second_moment()) for fam in m.jumps])
        bound = float(np.max(np.clip(lam_grid, 0.0, None) @ traces))
    else:
        bound = 0.0
    checks.append(Check(
        "C5", True, bound,
        "grid bound on the second jump moment (finite by construction)",
    ))

    c6_ok = True
    c6_detail = "every family symmetric or supported in the closed unit ball"
    for k, fam in enumerate(m.jumps):
        if not (fam.sizes.symmetric or fam.sizes.supported_in_unit_ball()):
            c6_ok = False
            c6_detail = f"asymmetric family with support outside unit ball (family {k})"
            break
    checks.append(Check("C6", c6_ok, None, c6_detail))

    return ValidationReport(tuple(checks))


def ensure_valid(m: Model, grid_res: int = VALIDATION_RES) -> ValidationReport:
    """Validate and raise on the first violated condition."""
    report = validate_model(m, grid_res)
    bad = report.first_failure()
    if bad is not None:
        raise ModelValidationError(f"{bad.name} violated: {bad.detail}")
    return report


def total_intensity_bound(m: Model, grid_res: int = VALIDATION_RES) -> float:
    """Majorant for thinning: (1 + margin) * grid maximum of the total intensity."""
    if not m.jumps:
        return 0.0
    pts = lattice(m.period, grid_res)
    total = np.zeros(len(pts))
    for fam in m.jumps:
        total += fam.intensity.eval_batch(pts)
    return float((1.0 + MAJORANT_MARGIN) * np.max(total))


def jump_second_moment(m: Model, x) -> np.ndarray:
    """Second-moment matrix of the jump kernel at x: sum_k lambda_k(x) E[y y^T]."""
    out = np.zeros((m.dim, m.dim))
    for fam in m.jumps:
        out += fam.intensity.eval(x) * fam.sizes.second_moment()
    return out


def jump_second_moment_batch(m: Model, X: np.ndarray) -> np.ndarray:
    """Vectorized second-moment matrices at a batch of points, (n, dim, dim)."""
    X = np.atleast_2d(X)
    out = np.zeros((X.shape[0], m.dim, m.dim))
    for fam in m.jumps:
        lam = fam.intensity.eval_batch(X)
        out += lam[:, None, None] * fam.sizes.second_moment()[None]
    return out
