"""Path simulation: single trajectories, path farms and diffusive rescaling."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .engine import Farm, PathRecorder
from .fields import Period, PeriodicField
from .model import JumpFamily, Model, SizeDistribution, ensure_valid

#: default Euler step for scaled sampling
DT_BASE = 1e-3


@dataclass(frozen=True)
class SimConfig:
    """Settings for one simulation run."""

    dt: float
    horizon: float
    n_paths: int
    seed: int
    epsilon: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.dt <= 0.1):
            raise ValueError("dt must lie in (0, 0.1]")
        if not self.dt < self.horizon:
            raise ValueError("dt must be smaller than the horizon")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True, eq=False)
class PathSample:
    """One trajectory: event times, states, and accepted jump marks."""

    times: np.ndarray          # (nevents,), strictly increasing, starts at 0
    states: np.ndarray         # (nevents, dim)
    jump_marks: tuple          # ((time, jump vector), ...)
    seed: int
    path_index: int

    def __post_init__(self):
        if np.any(np.diff(self.times) < 0.0):
            raise ValueError("event times must be nondecreasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("states must be finite")


def _collect_paths(farm: Farm, recorder: PathRecorder, seed: int, path_offset: int):
    out = []
    for i in range(farm.n_paths):
        out.append(PathSample(
            times=np.asarray(recorder.times[i]),
            states=np.asarray(recorder.states[i]),
            jump_marks=tuple((t, np.asarray(y)) for t, y in recorder.marks[i]),
            seed=seed,
            path_index=path_offset + i,
        ))
    return out


def simulate_path(m: Model, x0, cfg: SimConfig, path_index: int = 0) -> PathSample:
    """Simulate one trajectory on the stream keyed by (cfg.seed, path_index)."""
    farm = Farm(m, 1, x0, cfg.dt, cfg.seed, path_offset=path_index)
    recorder = PathRecorder()
    farm.run(cfg.horizon, recorder=recorder)
    return _collect_paths(farm, recorder, cfg.seed, path_index)[0]


def run_paths(m: Model, x0, cfg: SimConfig, path_offset: int = 0) -> list:
    """Simulate cfg.n_paths trajectories with full recording."""
    farm = Farm(m, cfg.n_paths, x0, cfg.dt, cfg.seed, path_offset=path_offset)
    recorder = PathRecorder()
    farm.run(cfg.horizon, recorder=recorder)
    return _collect_paths(farm, recorder, cfg.seed, path_offset)


def scaled_samples(m: Model, eps: float, t: float, n: int, seed: int,
                   dt: float = DT_BASE, x0=None, path_offset: int = 0,
                   start_sampler=None) -> np.ndarray:
    """n independent samples of eps * F_{t / eps^2}, started from the origin.

    The Euler step stays at ``dt`` regardless of eps; only the horizon grows
    as the scaling sharpens.
    """
    if eps <= 0.0 or t < 0.0:
        raise ValueError("need eps > 0 and t >= 0")
    if x0 is None:
        x0 = np.zeros(m.dim)
    farm = Farm(m, n, x0, dt, seed, path_offset=path_offset, start_sampler=start_sampler)
    farm.run(t / eps**2)
    return eps * farm.X


def scaled_model(m: Model, eps: float) -> Model:
    """The model of the rescaled process eps * F_{t / eps^2}.

    Coefficients become x -> c(x / eps) with period eps * tau, the drift picks
    up a 1/eps factor, intensities a 1/eps^2 factor, and jump sizes shrink by
    eps.
    """
    if eps <= 0.0:
        raise ValueError("eps must be > 0")
    period = Period(m.period.tau * eps)
    drift = m.drift.scaled(value_factor=1.0 / eps, period_factor=eps)
    diffusion = m.diffusion.scaled(period_factor=eps)
    families = []
    for fam in m.jumps:
        intensity = fam.intensity.scaled(value_factor=eps**-2, period_factor=eps)
        if fam.sizes.kind == "atoms":
            sizes = SizeDistribution.atoms(
                fam.sizes.weights, eps * fam.sizes.points, symmetric=fam.sizes.symmetric)
        else:
            sizes = SizeDistribution.uniform_ball(eps * fam.sizes.radius, m.dim)
        families.append(JumpFamily(intensity, sizes))
    return Model(m.dim, period, drift, diffusion, tuple(families))


def brownian_model(sigma: np.ndarray, dim: int | None = None) -> Model:
    """Constant-coefficient diffusion with covariance matrix sigma.

    Shares the Euler machinery with periodic models so that reference and
    scaled arms carry the same discretization bias.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = sigma.shape[0] if dim is None else dim
    period = Period(np.ones(d))
    return Model.diffusion_only(PeriodicField.constant(sigma, period))


def scaling_identity_check(m: Model, eps: float, t: float, seed: int,
                           dt: float = DT_BASE, x0=None, tol: float = 1e-10) -> bool:
    """Pathwise check of the diffusive rescaling for continuous models.

    Simulating the rescaled model with step eps^2 dt and matched noise must
    reproduce eps times the base path at matched times.
    """
    if m.has_jumps():
        raise ValueError("the pathwise scaling identity needs a model without jumps")
    ensure_valid(m)
    if x0 is None:
        x0 = np.zeros(m.dim)
    x0 = np.asarray(x0, dtype=float)
    n_steps = int(np.ceil(t / dt - 1e-12))

    base = Farm(m, 1, x0, dt, seed)
    base_rec = PathRecorder()
    base.run(t, recorder=base_rec)

    resc = Farm(scaled_model(m, eps), 1, eps * x0, eps**2 * dt, seed)
    resc_rec = PathRecorder()
    resc.run(eps**2 * t, recorder=resc_rec)

    a = eps * np.asarray(base_rec.states[0])
    b = np.asarray(resc_rec.states[0])
    if a.shape != b.shape or len(a) != n_steps + 1:
        return False
    return bool(np.max(np.abs(a - b)) <= tol)


def dump_paths_csv(samples, fh):
    """Write paths as CSV rows (pathId, t, x1..xd, isJump)."""
    if not samples:
        raise ValueError("no paths to write")
    d = samples[0].states.shape[1]
    writer = csv.writer(fh)
    writer.writerow(["pathId", "t"] + [f"x{i + 1}" for i in range(d)] + ["isJump"])
    for s in samples:
        jump_times = {float(t) for t, _ in s.jump_marks}
        for t, x in zip(s.times, s.states):
            flag = 1 if float(t) in jump_times else 0
            writer.writerow([s.path_index, repr(float(t))]
                            + [repr(float(v)) for v in x] + [flag])
