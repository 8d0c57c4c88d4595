"""First-exit sampling and Monte Carlo Dirichlet solutions.

Exit detection is step-based: the first Euler grid point or jump landing
outside the domain retires the path, with the event time and state recorded.
The Brownian reference arm reuses the same Euler machinery with constant
coefficients, so both arms share the first-order discretization bias.

Caveat: excursions that cross and return between grid points go undetected,
and the scheme cannot distinguish a path touching the boundary from one
crossing it; both effects sit inside the O(sqrt(dt)) detection bias.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .engine import Farm, FeynmanKacObserver
from .model import Model
from .sim import brownian_model, scaled_model

#: default step cap before a path is declared censored
MAX_STEPS = 1_000_000


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.radius <= 0.0:
            raise ValueError("ball radius must be > 0")
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.linalg.norm(X - self.center, axis=1) < self.radius


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X > self.lo) & (X < self.hi), axis=1)


@dataclass(frozen=True, eq=False)
class Annulus:
    center: np.ndarray
    r_inner: float
    r_outer: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not (0.0 < self.r_inner < self.r_outer):
            raise ValueError("annulus needs 0 < r_inner < r_outer")
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        r = np.linalg.norm(X - self.center, axis=1)
        return (r > self.r_inner) & (r < self.r_outer)


@dataclass(frozen=True)
class ScaledProcess:
    """The rescaled process eps * F_{t / eps^2} of a periodic model."""

    model: Model
    eps: float


@dataclass(frozen=True)
class BrownianProcess:
    """Zero-drift Brownian motion with a fixed covariance matrix."""

    sigma: np.ndarray


def _as_model(process) -> Model:
    if isinstance(process, ScaledProcess):
        return scaled_model(process.model, process.eps)
    if isinstance(process, BrownianProcess):
        return brownian_model(process.sigma)
    if isinstance(process, Model):
        return process
    raise TypeError("process must be ScaledProcess, BrownianProcess or Model")


@dataclass(frozen=True, eq=False)
class ExitSamples:
    """First-exit times and points; censored paths carry nan entries."""

    times: np.ndarray
    points: np.ndarray
    censored: np.ndarray

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    def valid_times(self) -> np.ndarray:
        return self.times[~self.censored]

    def mean_exit_time(self) -> tuple:
        t = self.valid_times()
        return float(t.mean()), float(t.std(ddof=1) / np.sqrt(len(t)))


def _run_until_exit(farm: Farm, domain, dt: float, max_steps: int,
                    observers=(), window_steps: int = 4096):
    steps_done = 0
    while steps_done < max_steps and np.any(farm.active):
        window = min(window_steps, max_steps - steps_done)
        farm.run(window * dt, observers=observers, domain=domain)
        steps_done += window
    return farm


def exit_samples(process, domain, x0, n: int, dt: float, seed: int,
                 max_steps: int = MAX_STEPS) -> ExitSamples:
    """Simulate n paths until their first step or jump outside the domain."""
    model = _as_model(process)
    if domain.dim != model.dim:
        raise ValueError("domain dimension does not match the process")
    x0 = np.asarray(x0, dtype=float)
    if not bool(domain.contains(x0[None])[0]):
        raise ValueError("start point must lie in the domain interior")
    farm = Farm(model, n, x0, dt, seed)
    _run_until_exit(farm, domain, dt, max_steps)
    return ExitSamples(farm.exit_time.copy(), farm.exit_point.copy(), ~farm.exited)


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """Dirichlet data on a domain: potential a <= 0, source f, boundary g.

    All three are vectorized callables of the state (or None for zero);
    the sign of a is enforced on every sampled state.
    """

    domain: object
    a: object = None
    f: object = None
    g: object = None


@dataclass(frozen=True, eq=False)
class DirichletValue:
    point: np.ndarray
    value: float
    se: float
    n_effective: int
    n_censored: int


def dirichlet_mc(problem: DirichletProblem, process, points, n: int, dt: float,
                 seed: int, max_steps: int = MAX_STEPS) -> list:
    """Monte Carlo Dirichlet values u(x) at the requested interior points.

    Uses the stochastic representation
        u(x) = E[ g(X_T) exp(int_0^T a) - int_0^T f(X_s) exp(int_0^s a) ds ],
    with T the first exit time.  Censored paths are excluded and counted.
    Restricted to diffusion processes (no jump families).
    """
    model = _as_model(process)
    if model.has_jumps():
        raise ValueError("the Dirichlet representation applies to diffusion processes")
    domain = problem.domain
    out = []
    for j, x in enumerate(np.atleast_2d(np.asarray(points, dtype=float))):
        if not bool(domain.contains(x[None])[0]):
            raise ValueError(f"point {x} is not inside the domain")
        farm = Farm(model, n, x, dt, seed, path_offset=j * n)
        fk = FeynmanKacObserver(problem.a, problem.f)
        _run_until_exit(farm, domain, dt, max_steps, observers=[fk])
        done = farm.exited
        n_eff = int(done.sum())
        if n_eff == 0:
            raise RuntimeError("every path was censored; increase max_steps")
        if problem.g is None:
            terminal = np.zeros(n_eff)
        else:
            terminal = np.asarray(problem.g(farm.exit_point[done]), dtype=float).reshape(n_eff)
        vals = terminal * np.exp(fk.A[done]) - fk.P[done]
        se = float(vals.std(ddof=1) / np.sqrt(n_eff)) if n_eff > 1 else 0.0
        out.append(DirichletValue(x, float(vals.mean()), se, n_eff, int(n - n_eff)))
    return out


def exits_to_csv(samples: ExitSamples, fh):
    writer = csv.writer(fh)
    d = samples.points.shape[1]
    writer.writerow(["time"] + [f"exit{i + 1}" for i in range(d)] + ["censored"])
    for t, p, c in zip(samples.times, samples.points, samples.censored):
        row = ["" if c else repr(float(t))]
        row += ["" if c else repr(float(v)) for v in p]
        row.append(int(c))
        writer.writerow(row)
