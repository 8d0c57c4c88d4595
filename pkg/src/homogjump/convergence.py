"""Statistical tests of the Gaussian limit and long-time classification.

The limit law at a fixed time is checked three ways on scaled samples:
entrywise covariance against t * Sigma with jackknife standard errors, the
empirical characteristic function on a fixed frequency grid, and
Kolmogorov-Smirnov tests of axis and diagonal projections.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import Model
from .sim import DT_BASE, scaled_samples

#: frequency grid per direction: -2, -1.75, ..., 2
XI_GRID = np.linspace(-2.0, 2.0, 17)
#: significance threshold used by the sweep verdicts
KS_ALPHA = 0.01


class ClassificationError(ValueError):
    """Long-time classification refused (degenerate covariance)."""


def _directions(d: int) -> list:
    """Unit test directions: axes plus two-axis diagonals."""
    dirs = [np.eye(d)[i] for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros(d)
            e[i] = e[j] = 1.0
            dirs.append(e / np.sqrt(2.0))
            e = np.zeros(d)
            e[i], e[j] = 1.0, -1.0
            dirs.append(e / np.sqrt(2.0))
    return dirs


@dataclass(frozen=True, eq=False)
class GaussianTestReport:
    t: float
    n: int
    cov: np.ndarray
    cov_se: np.ndarray
    cov_error: float
    cf_distance: float
    cf_se: float
    ks_pvalues: tuple        # ((direction tuple, p-value), ...)
    skipped: tuple           # directions skipped as degenerate
    eps: float | None = None

    @property
    def min_ks_pvalue(self) -> float:
        if not self.ks_pvalues:
            return float("nan")
        return min(p for _, p in self.ks_pvalues)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "t": self.t,
            "n": self.n,
            "cov": [float(v) for v in self.cov.ravel()],
            "cov_se": [float(v) for v in self.cov_se.ravel()],
            "cov_error": float(self.cov_error),
            "cf_distance": float(self.cf_distance),
            "cf_se": float(self.cf_se),
            "ks_pvalues": [{"direction": list(u), "p": float(p)} for u, p in self.ks_pvalues],
            "skipped_directions": [list(u) for u in self.skipped],
        }


def test_gaussian(samples: np.ndarray, sigma: np.ndarray, t: float) -> GaussianTestReport:
    """Compare samples against the centered Gaussian with covariance t * sigma."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = X.shape
    if n < 1000:
        raise ValueError("need at least 1000 samples for the distribution tests")
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if float(np.min(np.linalg.eigvalsh(sigma))) < -1e-10:
        raise ValueError("sigma must be positive semidefinite")

    # second moments about zero: the limit law is centered
    prods = np.einsum("ni,nj->nij", X, X)
    cov = prods.mean(axis=0)
    cov_se = prods.std(axis=0, ddof=1) / np.sqrt(n)
    cov_error = float(np.max(np.abs(cov - t * sigma)))

    scale = float(np.max(np.abs(np.diag(sigma)))) or 1.0
    cf_distance = 0.0
    ks, skipped = [], []
    for u in _directions(d):
        var = float(u @ sigma @ u)
        proj = X @ u
        for s in XI_GRID:
            phi_hat = np.exp(1j * s * proj).mean()
            phi = np.exp(-0.5 * t * s * s * var)
            cf_distance = max(cf_distance, abs(phi_hat - phi))
        if var <= 1e-12 * scale:
            skipped.append(tuple(u))
            continue
        p = stats.kstest(proj, "norm", args=(0.0, np.sqrt(t * var))).pvalue if t > 0 else 1.0
        ks.append((tuple(u), float(p)))

    return GaussianTestReport(
        t=t, n=n, cov=cov, cov_se=cov_se, cov_error=cov_error,
        cf_distance=float(cf_distance), cf_se=1.0 / np.sqrt(n),
        ks_pvalues=tuple(ks), skipped=tuple(skipped))


@dataclass(frozen=True, eq=False)
class SweepReport:
    reports: tuple
    cf_nonincreasing: bool
    all_ks_pass: bool

    def to_dict(self) -> dict:
        return {
            "reports": [r.to_dict() for r in self.reports],
            "cf_nonincreasing": self.cf_nonincreasing,
            "all_ks_pass": self.all_ks_pass,
        }


def convergence_sweep(m: Model, eps_list, t: float, n: int, seed: int,
                      dt: float = DT_BASE, x0=None) -> SweepReport:
    """Gaussian tests over a strictly decreasing eps list.

    The characteristic-function distance must be nonincreasing along the
    sweep up to twice the combined Monte Carlo noise.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    from .effective import sigma_effective  # local import avoids a cycle
    from .torus import ORACLE_RES, TorusGrid, grid_generator, stationary_solve

    grid = TorusGrid(m.period, (ORACLE_RES.get(m.dim, 16),) * m.dim)
    pi = stationary_solve(grid_generator(m, grid), grid)
    sigma = sigma_effective(m, pi).sigma

    reports = []
    for i, eps in enumerate(eps_list):
        samples = scaled_samples(m, eps, t, n, seed, dt=dt, x0=x0, path_offset=i * n)
        rep = test_gaussian(samples, sigma, t)
        reports.append(GaussianTestReport(
            t=rep.t, n=rep.n, cov=rep.cov, cov_se=rep.cov_se, cov_error=rep.cov_error,
            cf_distance=rep.cf_distance, cf_se=rep.cf_se, ks_pvalues=rep.ks_pvalues,
            skipped=rep.skipped, eps=eps))

    cf_ok = all(
        reports[i + 1].cf_distance
        <= reports[i].cf_distance + 2.0 * (reports[i].cf_se + reports[i + 1].cf_se)
        for i in range(len(reports) - 1))
    ks_ok = all(p > KS_ALPHA for r in reports for _, p in r.ks_pvalues)
    return SweepReport(tuple(reports), cf_ok, ks_ok)


@dataclass(frozen=True)
class LongTimeVerdict:
    dim: int
    sigma_nondegenerate: bool
    classification: str      # "recurrent" | "transient"
    ergodic: bool            # always False for this model class

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "sigma_nondegenerate": self.sigma_nondegenerate,
            "classification": self.classification,
            "ergodic": self.ergodic,
        }


def classify_longtime(d: int, sigma: np.ndarray) -> LongTimeVerdict:
    """Recurrent in dimensions 1 and 2, transient from 3 on; never ergodic.

    The dichotomy requires a nondegenerate covariance; classification is
    refused otherwise.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (d, d):
        raise ValueError("sigma must be d x d")
    if np.max(np.abs(sigma - sigma.T)) > 1e-10 * max(1.0, np.max(np.abs(sigma))):
        raise ValueError("sigma must be symmetric")
    if float(np.min(np.linalg.eigvalsh(sigma))) <= 1e-10:
        raise ClassificationError("degenerate covariance: classification refused")
    return LongTimeVerdict(d, True, "recurrent" if d <= 2 else "transient", False)


@dataclass(frozen=True, eq=False)
class DriftVerdict:
    admissible: bool
    bbar: np.ndarray
    deviation: float
    message: str

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "bbar": [float(v) for v in self.bbar],
            "deviation": float(self.deviation),
            "message": self.message,
        }


def drift_admissibility(m: Model, pi) -> DriftVerdict:
    """Whether the drift is constant, so that centering restores the limit.

    A drifted jump model homogenizes under diffusive scaling with a constant
    centering only when b(x) equals its invariant mean almost everywhere; the
    verdict reports the sup-norm deviation on the grid.
    """
    centers = pi.grid.centers()
    bvals = m.drift.eval_batch(centers)
    bbar = pi.integrate(bvals)
    deviation = float(np.max(np.abs(bvals - bbar))) if len(centers) else 0.0
    admissible = deviation <= 1e-8
    message = (
        "homogenizes under diffusive scaling with centering" if admissible
        else "no diffusive homogenization with constant centering (drift varies over the period)")
    return DriftVerdict(admissible, np.asarray(bbar, dtype=float), deviation, message)
