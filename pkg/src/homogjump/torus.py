"""Torus projection, invariant-measure estimation and the grid oracle.

The invariant law of the period-projected process is estimated two ways: by
occupation averages of long simulated paths, and by the stationary vector of
a finite-volume rate matrix built from the generator (diagonal diffusion
only).  The two estimates cross-check each other, and the rate matrix also
yields total-variation decay curves of the projected semigroup.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .engine import Farm, UniformStart
from .fields import Period
from .model import ATOMS, Model, ensure_valid

#: default oracle resolutions by dimension
ORACLE_RES = {1: 256, 2: 32}
#: fixed quadrature size for uniform-ball jump laws in the grid oracle
BALL_QUAD_NODES = 32
#: default burn-in fraction for occupation estimates
BURN_IN_FRACTION = 0.1

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class OracleError(ValueError):
    """The grid oracle does not apply to this model."""


def project_torus(x, tau_or_period) -> np.ndarray:
    """Componentwise x mod tau, in [0, tau) per axis."""
    tau = tau_or_period.tau if isinstance(tau_or_period, Period) else np.asarray(tau_or_period, float)
    out = np.mod(np.asarray(x, dtype=float), tau)
    # tiny negative inputs can round the modulus up to tau itself
    return np.where(out >= tau, 0.0, out)


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Regular cell grid over one period cell [0, tau)."""

    period: Period
    res: tuple

    def __post_init__(self):
        res = tuple(int(r) for r in np.atleast_1d(self.res))
        if len(res) == 1 and self.period.dim > 1:
            res = res * self.period.dim
        if len(res) != self.period.dim or any(r < 1 for r in res):
            raise ValueError("need one positive resolution per axis")
        object.__setattr__(self, "res", res)

    @property
    def dim(self) -> int:
        return self.period.dim

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.res))

    @property
    def widths(self) -> np.ndarray:
        return self.period.tau / np.asarray(self.res, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def centers(self) -> np.ndarray:
        idx = np.indices(self.res).reshape(self.dim, -1).T
        return (idx + 0.5) * self.widths

    def cell_index(self, X: np.ndarray) -> np.ndarray:
        """Flat cell index of torus points, shape (n,)."""
        X = np.atleast_2d(X)
        ij = np.floor(X / self.widths).astype(np.int64)
        ij = np.clip(ij, 0, np.asarray(self.res) - 1)
        return np.ravel_multi_index(ij.T, self.res)


@dataclass(frozen=True, eq=False)
class InvariantMeasure:
    """Probability weights over torus grid cells."""

    grid: TorusGrid
    weights: np.ndarray
    provenance: str  # "occupation" | "gridSolve"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.n_cells,):
            raise ValueError("weights must have one entry per cell")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        w = np.clip(w, 0.0, None)
        w = w / w.sum()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Weighted sum of per-cell values; values has shape (n_cells, ...)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def occupation_invariant(m: Model, grid: TorusGrid, burn_in: float, T: float,
                         dt: float, seed: int, n_chains: int = 16) -> InvariantMeasure:
    """Occupation estimate of the invariant law from n_chains paths.

    ``T`` is the total simulated time across chains; each chain discards its
    own burn-in prefix.  Chains start uniformly over one period cell.
    """
    ensure_valid(m)
    if n_chains < 1 or T <= 0.0:
        raise ValueError("need n_chains >= 1 and T > 0")
    horizon = T / n_chains
    if burn_in >= horizon:
        raise ValueError("burn-in must be shorter than the per-chain horizon")
    counts = np.zeros(grid.n_cells, dtype=np.int64)
    farm = Farm(m, n_chains, np.zeros(m.dim), dt, seed, start_sampler=UniformStart(m.period))
    farm.run(horizon, occupation=(grid, burn_in, counts))
    total = counts.sum()
    if total == 0:
        raise RuntimeError("no occupation samples collected; horizon too short")
    return InvariantMeasure(grid, counts / total, "occupation")


def _ball_quadrature(radius: float, dim: int) -> np.ndarray:
    """Fixed quasi-uniform nodes covering a ball, equal weights 1/nodes."""
    n = BALL_QUAD_NODES
    if dim == 1:
        return (-radius + (np.arange(n) + 0.5) * (2.0 * radius / n))[:, None]
    if dim == 2:
        i = np.arange(n)
        r = radius * np.sqrt((i + 0.5) / n)
        th = i * _GOLDEN_ANGLE
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    raise OracleError("ball quadrature implemented for dimensions 1 and 2 only")


def grid_generator(m: Model, grid: TorusGrid) -> np.ndarray:
    """Finite-volume rate matrix of the torus generator (diagonal diffusion).

    Diffusion contributes c_ii(center) / (2 h_i^2) to each axis neighbor with
    periodic wraparound, drift is first-order upwind, and every jump atom or
    ball quadrature node sends rate lambda_k(center) * weight to the cell
    containing center + y (mod tau).  Row sums vanish up to roundoff.
    """
    ensure_valid(m)
    if m.dim >= 3:
        raise OracleError("grid oracle supports dimensions 1 and 2 only")
    if not m.diffusion.is_zero() and not m.diffusion.is_diagonal():
        raise OracleError("grid oracle requires a diagonal diffusion matrix")

    res = np.asarray(grid.res)
    h = grid.widths
    N = grid.n_cells
    centers = grid.centers()
    Q = np.zeros((N, N))
    idx_grid = np.arange(N).reshape(grid.res)

    cdiag = (np.clip(m.diffusion.eval_diag_batch(centers), 0.0, None)
             if not m.diffusion.is_zero() else np.zeros((N, m.dim)))
    bvals = None if m.drift.is_zero() else m.drift.eval_batch(centers)

    rows = np.arange(N)
    for ax in range(m.dim):
        plus = np.roll(idx_grid, -1, axis=ax).ravel()
        minus = np.roll(idx_grid, 1, axis=ax).ravel()
        rate = cdiag[:, ax] / (2.0 * h[ax] ** 2)
        np.add.at(Q, (rows, plus), rate)
        np.add.at(Q, (rows, minus), rate)
        if bvals is not None:
            b = bvals[:, ax]
            np.add.at(Q, (rows, plus), np.clip(b, 0.0, None) / h[ax])
            np.add.at(Q, (rows, minus), np.clip(-b, 0.0, None) / h[ax])

    for k, fam in enumerate(m.jumps):
        lam = np.clip(fam.intensity.eval_batch(centers), 0.0, None)
        if fam.sizes.kind == ATOMS:
            nodes = fam.sizes.points
            weights = fam.sizes.weights
        else:
            nodes = _ball_quadrature(fam.sizes.radius, m.dim)
            weights = np.full(len(nodes), 1.0 / len(nodes))
        for w, y in zip(weights, nodes):
            # the target offset is constant in index space on a regular grid
            shift = np.floor(0.5 + y / h).astype(np.int64)
            if np.all(shift % res == 0):
                # a jump by an exact period multiple is a torus no-op, not a
                # resolution artifact; only the latter deserves a warning
                if np.max(np.abs(y - np.round(y / m.period.tau) * m.period.tau)) > 1e-12:
                    warnings.warn(
                        f"jump node {y} of family {k} maps to its source cell at "
                        f"resolution {grid.res} and was dropped")
                continue
            target = idx_grid
            for ax in range(m.dim):
                target = np.roll(target, -int(shift[ax]), axis=ax)
            np.add.at(Q, (rows, target.ravel()), lam * w)

    Q[rows, rows] = 0.0
    Q[rows, rows] = -Q.sum(axis=1)
    return Q


def stationary_solve(Q: np.ndarray, grid: TorusGrid,
                     residual_tol: float = 1e-10) -> InvariantMeasure:
    """Solve pi Q = 0 with sum(pi) = 1.

    Dense solve for at most 10^4 cells; larger systems fall back to power
    iteration on the uniformized chain P = I + Q / lam_u.
    """
    N = Q.shape[0]
    if N != grid.n_cells:
        raise ValueError("rate matrix size does not match the grid")
    if N <= 10_000:
        A = Q.T.copy()
        A[-1, :] = 1.0
        rhs = np.zeros(N)
        rhs[-1] = 1.0
        try:
            pi = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("stationary solve failed; rate matrix singular") from exc
    else:
        pi = _power_iteration(Q, residual_tol)
    if np.min(pi) < -1e-8:
        raise RuntimeError("stationary solve produced substantially negative weights")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = float(np.max(np.abs(pi @ Q)))
    scale = max(1.0, float(np.max(np.abs(Q))))
    if resid > residual_tol * scale:
        raise RuntimeError(f"stationary residual {resid:.3e} exceeds tolerance")
    return InvariantMeasure(grid, pi, "gridSolve")


def _power_iteration(Q: np.ndarray, tol: float, max_iter: int = 200_000) -> np.ndarray:
    N = Q.shape[0]
    lam_u = 1.01 * float(np.max(np.abs(np.diag(Q))))
    P = np.eye(N) + Q / lam_u
    pi = np.full(N, 1.0 / N)
    scale = max(1.0, float(np.max(np.abs(Q))))
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.max(np.abs(nxt @ Q)) <= tol * scale:
            return nxt
        pi = nxt
    raise RuntimeError("power iteration did not converge; rate matrix may be reducible")


def uniformized_chain(Q: np.ndarray, factor: float = 1.01) -> tuple:
    """Uniformized transition matrix P = I + Q / lam_u and the rate lam_u.

    ``factor`` scales the maximum diagonal magnitude.  Any factor >= 1 gives a
    valid chain; factors >= 2 (the Gershgorin bound) also keep every chain
    eigenvalue nonnegative, so matrix powers reproduce the semigroup's decay
    rates instead of an alternating-mode artifact.
    """
    lam_u = factor * float(np.max(np.abs(np.diag(Q))))
    if lam_u <= 0.0:
        raise ValueError("rate matrix has no motion to uniformize")
    return np.eye(Q.shape[0]) + Q / lam_u, lam_u


def tv_decay(Q: np.ndarray, grid: TorusGrid, times) -> list:
    """Worst-start total-variation distance to the invariant law over time.

    Uses matrix powers of the uniformized chain, P^round(lam_u t); needs at
    least three time points for a decay-rate fit downstream.
    """
    times = sorted(float(t) for t in times)
    if len(times) < 3:
        raise ValueError("need at least 3 time points for a decay fit")
    pi = stationary_solve(Q, grid).weights
    P, lam_u = uniformized_chain(Q, factor=2.02)
    out = []
    for t in times:
        n = max(0, int(round(lam_u * t)))
        Pt = np.linalg.matrix_power(P, n)
        tv = 0.5 * float(np.max(np.abs(Pt - pi[None, :]).sum(axis=1)))
        out.append((t, tv))
    return out


def fit_log_slope(pairs) -> tuple:
    """Least-squares slope and R^2 of log(tv) against t, skipping zeros."""
    ts = np.array([t for t, tv in pairs if tv > 0.0])
    ys = np.log([tv for _, tv in pairs if tv > 0.0])
    if len(ts) < 3:
        raise ValueError("need at least 3 positive tv values to fit a slope")
    A = np.stack([ts, np.ones_like(ts)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), r2


def stationary_start(m: Model, res: int | None = None):
    """Start sampler drawing from the grid-oracle invariant law of m."""
    res = ORACLE_RES.get(m.dim, 16) if res is None else res
    grid = TorusGrid(m.period, (res,) * m.dim)
    pi = stationary_solve(grid_generator(m, grid), grid)
    from .engine import GridStart

    return GridStart(grid.centers(), grid.widths, pi.weights)


def invariant_to_csv(measure: InvariantMeasure, fh):
    writer = csv.writer(fh)
    d = measure.grid.dim
    writer.writerow(["cellIndex"] + [f"center{i + 1}" for i in range(d)] + ["weight"])
    centers = measure.grid.centers()
    for i, (c, w) in enumerate(zip(centers, measure.weights)):
        writer.writerow([i] + [repr(float(v)) for v in c] + [repr(float(w))])


def tv_decay_to_csv(pairs, fh):
    writer = csv.writer(fh)
    writer.writerow(["t", "tv"])
    for t, tv in pairs:
        writer.writerow([repr(float(t)), repr(float(tv))])
