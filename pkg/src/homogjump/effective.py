"""Effective covariance of the diffusive limit.

Three routes:

* ``sigma_effective`` integrates diffusion plus jump second moments against
  the invariant law on the torus (the general zero-drift formula),
* ``sigma_levy`` handles constant coefficients exactly, together with the
  centering drift that removes the first moment of large jumps,
* ``corrector_solve`` / ``sigma_bar`` treat drifted diffusions through the
  periodic corrector equation on the grid oracle.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import Model, ensure_valid, jump_second_moment_batch
from .torus import InvariantMeasure, TorusGrid, grid_generator, stationary_solve

#: eigenvalue floor accepted for the PSD invariant of effective covariances
PSD_FLOOR = -1e-10


@dataclass(frozen=True, eq=False)
class EffectiveCovariance:
    """Symmetric PSD covariance matrix of the limiting Brownian motion."""

    sigma: np.ndarray
    method: str  # "formula" | "levy" | "corrector"
    pi: InvariantMeasure | None = None

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if s.shape[0] != s.shape[1]:
            raise ValueError("covariance must be square")
        if np.max(np.abs(s - s.T)) > 1e-12 * max(1.0, np.max(np.abs(s))):
            raise ValueError("covariance must be symmetric")
        s = 0.5 * (s + s.T)
        if float(np.min(np.linalg.eigvalsh(s))) < PSD_FLOOR:
            raise ValueError("covariance must be positive semidefinite")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.sigma)


@dataclass(frozen=True, eq=False)
class Corrector:
    """Periodic corrector functions on a torus grid and the mean drift."""

    grid: TorusGrid
    beta: np.ndarray   # (dim, n_cells)
    bbar: np.ndarray   # (dim,)
    residual: float

    def __post_init__(self):
        if self.beta.shape != (self.grid.dim, self.grid.n_cells):
            raise ValueError("corrector array must have shape (dim, n_cells)")


def sigma_effective(m: Model, pi: InvariantMeasure) -> EffectiveCovariance:
    """Integral of c + jump second moment against pi, symmetrized."""
    ensure_valid(m)
    if not pi.grid.period.same_as(m.period):
        raise ValueError("invariant measure lives on a different period cell")
    centers = pi.grid.centers()
    vals = m.diffusion.eval_batch(centers) + jump_second_moment_batch(m, centers)
    sigma = pi.integrate(vals)
    return EffectiveCovariance(0.5 * (sigma + sigma.T), "formula", pi)


def sigma_levy(b, c, families) -> tuple:
    """Constant-coefficient case: exact covariance and centering drift.

    Returns (centering, EffectiveCovariance) with centering = b plus the
    first jump moment outside the unit ball.  Every family intensity must be
    constant in x; symmetry of the size laws is not required here.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    d = b.size
    sigma = c.copy()
    centering = b.copy()
    for k, fam in enumerate(families):
        lam = fam.intensity.constant_value()
        if lam is None:
            raise ValueError(f"family {k}: intensity is not constant in x")
        sigma = sigma + lam * fam.sizes.second_moment()
        centering = centering + lam * fam.sizes.first_moment_outside_unit_ball()
    return centering, EffectiveCovariance(0.5 * (sigma + sigma.T), "levy")


def corrector_solve(m: Model, grid: TorusGrid, residual_tol: float = 1e-8) -> Corrector:
    """Solve the periodic corrector equation A beta_i = b_i - bbar_i.

    Restricted to diffusion models with diagonal c (the grid oracle's class);
    the one-dimensional nullspace is removed by the pi-mean-zero constraint
    appended as an extra row rather than by pinning a cell.
    """
    ensure_valid(m)
    if m.has_jumps():
        raise ValueError("corrector equation applies to models without jumps")
    Q = grid_generator(m, grid)
    pi = stationary_solve(Q, grid)
    centers = grid.centers()
    bvals = m.drift.eval_batch(centers)          # (N, dim)
    bbar = pi.integrate(bvals)                   # (dim,)
    N = grid.n_cells

    # augmented saddle system: [[Q, 1], [pi, 0]] [beta; mult] = [rhs; 0]
    A = np.zeros((N + 1, N + 1))
    A[:N, :N] = Q
    A[:N, N] = 1.0
    A[N, :N] = pi.weights
    beta = np.zeros((m.dim, N))
    worst = 0.0
    for i in range(m.dim):
        rhs = np.zeros(N + 1)
        rhs[:N] = bvals[:, i] - bbar[i]
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("corrector system singular beyond its nullspace") from exc
        beta[i] = sol[:N]
        worst = max(worst, float(np.max(np.abs(Q @ beta[i] - rhs[:N]))))
    if worst > residual_tol:
        raise RuntimeError(f"corrector residual {worst:.3e} exceeds {residual_tol:.1e}")
    return Corrector(grid, beta, bbar, worst)


def _periodic_gradient(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Central differences with wraparound; values (N,) -> gradients (N, dim)."""
    field = values.reshape(grid.res)
    out = np.empty((grid.dim,) + tuple(grid.res))
    for ax in range(grid.dim):
        out[ax] = (np.roll(field, -1, axis=ax) - np.roll(field, 1, axis=ax)) / (2.0 * grid.widths[ax])
    return out.reshape(grid.dim, grid.n_cells).T


def sigma_bar(m: Model, corrector: Corrector, pi: InvariantMeasure) -> EffectiveCovariance:
    """Drift-corrected covariance as a pi-weighted quadratic form.

    Assembles (I - grad beta)^T c (I - grad beta) cellwise, which keeps the
    result symmetric PSD by construction.
    """
    grid = corrector.grid
    if pi.grid is not grid and not (pi.grid.res == grid.res and pi.grid.period.same_as(grid.period)):
        raise ValueError("corrector and invariant measure use different grids")
    centers = grid.centers()
    cvals = m.diffusion.eval_batch(centers)      # (N, d, d)
    d, N = m.dim, grid.n_cells
    G = np.tile(np.eye(d), (N, 1, 1))            # G[n, k, i] = delta_ki - d beta_i / d x_k
    for i in range(d):
        G[:, :, i] -= _periodic_gradient(corrector.beta[i], grid)
    quad = np.einsum("nki,nkl,nlj->nij", G, cvals, G)
    sigma = pi.integrate(quad)
    return EffectiveCovariance(0.5 * (sigma + sigma.T), "corrector", pi)


def covariance_to_dict(cov: EffectiveCovariance) -> dict:
    return {
        "method": cov.method,
        "dim": cov.dim,
        "sigma": [float(v) for v in cov.sigma.ravel()],
        "eigenvalues": [float(v) for v in cov.eigenvalues()],
        "provenance": None if cov.pi is None else cov.pi.provenance,
    }


def corrector_to_csv(corrector: Corrector, fh):
    writer = csv.writer(fh)
    d = corrector.grid.dim
    writer.writerow(["cellIndex"] + [f"beta_{i + 1}" for i in range(d)])
    for n in range(corrector.grid.n_cells):
        writer.writerow([n] + [repr(float(corrector.beta[i, n])) for i in range(d)])
