"""Semimartingale characteristics of the rescaled process.

For the process eps * F_{t / eps^2} the modified characteristics relative to
a truncation h reduce, for mixture kernels with state-independent sizes, to
pathwise time integrals of the intensities against closed-form size-law
integrals.  Monte Carlo error therefore comes only from the path average,
never from sampling the jump law:

    B(h)     = sum_k I_k(eps)   . int_0^{t/eps^2} lambda_k(F_u) du
    Ctilde(h) = eps^2 int c(F_u) du + sum_k J_k(eps) int lambda_k(F_u) du
    big-jump  = sum_k E_k(eps)  . int lambda_k(F_u) du

with I_k = E[h(eps Y) - eps Y 1_{|Y|<=1}], J_k = E[h(eps Y) h(eps Y)^T] and
E_k = E[g(eps Y)] under mu_k.  Time integrals use the trapezoid rule on the
Euler grid including jump points.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .engine import Farm, TrapezoidObserver
from .fields import ScalarFieldStack
from .model import Model, ensure_valid
from .sim import DT_BASE

#: dead-zone radius of the default big-jump test function
BIGJUMP_DELTA = 0.5


@dataclass(frozen=True)
class TruncationFn:
    """Ramp truncation h(y) = y * rho(|y| / delta).

    rho(r) = 1 for r <= 1, 2 - r for 1 < r < 2, and 0 for r >= 2, so h equals
    the identity on the delta-ball, is odd, and |h| <= delta everywhere.
    """

    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("truncation radius must be > 0")

    def rho(self, r: np.ndarray) -> np.ndarray:
        return np.clip(2.0 - np.asarray(r, dtype=float) / self.delta, 0.0, 1.0)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(np.atleast_2d(y), axis=-1)
        return y * self.rho(r).reshape(y.shape[:-1] + (1,))


def bigjump_g(y: np.ndarray, delta_g: float = BIGJUMP_DELTA) -> np.ndarray:
    """Continuous bounded test function vanishing on the delta_g-ball."""
    r = np.linalg.norm(np.atleast_2d(np.asarray(y, dtype=float)), axis=-1)
    return np.clip(r - delta_g, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class CharacteristicsEstimate:
    """Monte Carlo estimates of the three characteristics at one eps."""

    eps: float
    t: float
    n_paths: int
    Bh: np.ndarray
    Bh_se: np.ndarray
    Ctilde: np.ndarray
    Ctilde_se: np.ndarray
    flow: float
    flow_se: float


def _intensity_integrals(m: Model, eps: float, t: float, n_paths: int, seed: int,
                         dt: float, start_sampler) -> tuple:
    """Trapezoid integrals of (c_ij, lambda_k) along paths over [0, t/eps^2].

    Returns (acc_c (n, d, d), acc_lam (n, K)).
    """
    ensure_valid(m)
    d = m.dim
    K = len(m.jumps)
    horizon = t / eps**2

    def c_fn(x):
        return m.diffusion.eval_batch(x).reshape(len(x), d * d)

    observers = [TrapezoidObserver(c_fn, d * d)]
    if K:
        lam_stack = ScalarFieldStack([fam.intensity for fam in m.jumps])
        observers.append(TrapezoidObserver(lam_stack.eval_batch, K))

    farm = Farm(m, n_paths, np.zeros(d), dt, seed, start_sampler=start_sampler)
    farm.run(horizon, observers=observers)
    acc_c = observers[0].acc.reshape(n_paths, d, d)
    acc_lam = observers[1].acc if K else np.zeros((n_paths, 0))
    return acc_c, acc_lam


def _mean_se(values: np.ndarray) -> tuple:
    est = values.mean(axis=0)
    n = values.shape[0]
    se = values.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(est)
    return est, se


def assemble_estimate(m: Model, eps: float, t: float, acc_c: np.ndarray,
                      acc_lam: np.ndarray, trunc: TruncationFn,
                      delta_g: float = BIGJUMP_DELTA) -> CharacteristicsEstimate:
    """Characteristics from precomputed path integrals and closed-form kernels."""
    n_paths = acc_c.shape[0]
    d = m.dim
    I = np.array([fam.sizes.mean_trunc_minus_id(eps, trunc) for fam in m.jumps]).reshape(-1, d)
    J = np.array([fam.sizes.mean_trunc_outer(eps, trunc) for fam in m.jumps]).reshape(-1, d, d)
    E = np.array([fam.sizes.mean_bigjump(eps, delta_g) for fam in m.jumps]).reshape(-1)

    bh_paths = acc_lam @ I if len(I) else np.zeros((n_paths, d))
    ct_paths = eps**2 * acc_c
    if len(J):
        ct_paths = ct_paths + np.einsum("nk,kij->nij", acc_lam, J)
    flow_paths = acc_lam @ E if len(E) else np.zeros(n_paths)

    bh, bh_se = _mean_se(bh_paths)
    ct, ct_se = _mean_se(ct_paths)
    fl, fl_se = _mean_se(flow_paths)
    return CharacteristicsEstimate(eps, t, n_paths, bh, bh_se, ct, ct_se, float(fl), float(fl_se))


def estimate_characteristics(m: Model, eps: float, t: float, n_paths: int, seed: int,
                             trunc: TruncationFn = TruncationFn(),
                             delta_g: float = BIGJUMP_DELTA,
                             dt: float = DT_BASE,
                             start_sampler=None) -> CharacteristicsEstimate:
    """All three characteristics from one shared path farm."""
    acc_c, acc_lam = _intensity_integrals(m, eps, t, n_paths, seed, dt, start_sampler)
    return assemble_estimate(m, eps, t, acc_c, acc_lam, trunc, delta_g)


def estimate_Bh(m, eps, t, trunc, n_paths, seed, dt=DT_BASE, start_sampler=None):
    """Monte Carlo estimate of B(h) at time t; returns (vector, SE vector)."""
    est = estimate_characteristics(m, eps, t, n_paths, seed, trunc=trunc, dt=dt,
                                   start_sampler=start_sampler)
    return est.Bh, est.Bh_se


def estimate_Ctilde(m, eps, t, trunc, n_paths, seed, dt=DT_BASE, start_sampler=None):
    """Monte Carlo estimate of Ctilde(h) at time t; returns (matrix, SE matrix)."""
    est = estimate_characteristics(m, eps, t, n_paths, seed, trunc=trunc, dt=dt,
                                   start_sampler=start_sampler)
    return est.Ctilde, est.Ctilde_se


def estimate_bigjump_flow(m, eps, t, n_paths, seed, delta_g=BIGJUMP_DELTA,
                          dt=DT_BASE, start_sampler=None):
    """Monte Carlo estimate of the large-jump flow integral; (scalar, SE)."""
    if delta_g <= 0.0:
        raise ValueError("the test function must vanish on a ball around the origin")
    est = estimate_characteristics(m, eps, t, n_paths, seed, delta_g=delta_g, dt=dt,
                                   start_sampler=start_sampler)
    return est.flow, est.flow_se


@dataclass(frozen=True, eq=False)
class CharacteristicsSweep:
    estimates: tuple
    sigma: np.ndarray
    t: float
    verdicts: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        rows = []
        for e in self.estimates:
            rows.append({
                "eps": e.eps,
                "Bh": [float(v) for v in e.Bh],
                "Bh_se": [float(v) for v in e.Bh_se],
                "Ctilde": [float(v) for v in e.Ctilde.ravel()],
                "Ctilde_se": [float(v) for v in e.Ctilde_se.ravel()],
                "Ctilde_dev": float(np.max(np.abs(e.Ctilde - self.t * self.sigma))),
                "bigjump": e.flow,
                "bigjump_se": e.flow_se,
            })
        return {
            "t": self.t,
            "sigma": [float(v) for v in np.asarray(self.sigma).ravel()],
            "estimates": rows,
            "verdicts": dict(self.verdicts),
        }


def sweep_integrals(m: Model, eps_list, t: float, n_paths: int, seed: int,
                    dt: float = DT_BASE, start_sampler=None) -> list:
    """Path integrals per eps, reusable across truncation choices."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    return [
        (eps,) + _intensity_integrals(m, eps, t, n_paths, seed + i, dt, start_sampler)
        for i, eps in enumerate(eps_list)
    ]


def sweep_verdicts(estimates, sigma, t: float) -> dict:
    """Convergence verdicts: |B(h)| nonincreasing up to 2 SE with final value
    <= 3 SE; |Ctilde - t Sigma| <= 3 SE at the final eps; the big-jump flow
    strictly decreasing until it hits zero, with final value <= 1e-3."""
    bh_mag = [float(np.max(np.abs(e.Bh))) for e in estimates]
    bh_se = [float(np.max(e.Bh_se)) for e in estimates]
    bh_monotone = all(
        bh_mag[i + 1] <= bh_mag[i] + 2.0 * (bh_se[i] + bh_se[i + 1])
        for i in range(len(estimates) - 1))
    last = estimates[-1]
    bh_final = bool(np.all(np.abs(last.Bh) <= 3.0 * last.Bh_se + 1e-15))

    ct_dev = np.abs(last.Ctilde - t * np.asarray(sigma))
    ct_final = bool(np.all(ct_dev <= 3.0 * last.Ctilde_se + 1e-15))

    flows = [e.flow for e in estimates]
    flow_decreasing = all(
        (b < a) or (a == 0.0 and b == 0.0) for a, b in zip(flows, flows[1:]))
    flow_final = flows[-1] <= 1e-3

    return {
        "Bh_nonincreasing": bh_monotone,
        "Bh_final_within_3se": bh_final,
        "Ctilde_final_within_3se": ct_final,
        "bigjump_decreasing": flow_decreasing,
        "bigjump_final_below_1e3": flow_final,
    }


def characteristics_sweep(m: Model, eps_list, t: float, n_paths: int, seed: int,
                          sigma: np.ndarray,
                          trunc: TruncationFn = TruncationFn(),
                          delta_g: float = BIGJUMP_DELTA,
                          dt: float = DT_BASE,
                          start_sampler=None,
                          integrals=None) -> CharacteristicsSweep:
    """Estimates over a decreasing eps list plus the convergence verdicts.

    Precomputed ``integrals`` (from sweep_integrals) may be supplied to
    evaluate several truncation choices from one set of farms.
    """
    if integrals is None:
        integrals = sweep_integrals(m, eps_list, t, n_paths, seed, dt, start_sampler)
    estimates = [assemble_estimate(m, eps, t, acc_c, acc_lam, trunc, delta_g)
                 for eps, acc_c, acc_lam in integrals]
    verdicts = sweep_verdicts(estimates, sigma, t)
    return CharacteristicsSweep(tuple(estimates), np.asarray(sigma, dtype=float), t, verdicts)
