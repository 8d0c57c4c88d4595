"""Shipped example models used by the verification suite and the CLI.

Three models exercise the main regimes:

* ``harmonic_1d``   - pure diffusion, d=1, c(x) = 2 + sin(2 pi x); the grid
  invariant law is proportional to 1/c and the effective variance equals the
  harmonic mean of c, sqrt(3).
* ``periodic_jump_1d`` - d=1 diffusion with three jump families: symmetric
  atoms with periodic intensity, a wide uniform-ball law driving the
  large-jump flow, and an asymmetric unit-ball family that makes the drift
  compensator active.
* ``diag2d``        - d=2 diagonal diffusion with periodic entries, the
  Dirichlet-convergence example.

``levy_atoms_2d`` builds the constant-coefficient model whose covariance is
known exactly.
"""
from __future__ import annotations

import numpy as np

from .fields import MATRIX, SCALAR, VECTOR, Period, PeriodicField
from .model import JumpFamily, Model, SizeDistribution


def harmonic_1d() -> Model:
    period = Period([1.0])
    c = PeriodicField.from_terms(MATRIX, period, [
        ([0], [[2.0]], [[0.0]]),
        ([1], [[0.0]], [[1.0]]),
    ])
    return Model.diffusion_only(c)


def periodic_jump_1d() -> Model:
    period = Period([1.0])
    c = PeriodicField.constant(np.array([[1.0]]), period)
    sym_atoms = JumpFamily(
        PeriodicField.from_terms(SCALAR, period, [([0], 2.0, 0.0), ([1], 0.0, 1.0)]),
        SizeDistribution.atoms([0.5, 0.5], [[1.0], [-1.0]]),
    )
    wide_atoms = JumpFamily(
        PeriodicField.from_terms(SCALAR, period, [([0], 0.5, 0.0), ([1], 0.0, 0.25)]),
        SizeDistribution.atoms([0.5, 0.5], [[2.5], [-2.5]]),
    )
    skew_atoms = JumpFamily(
        PeriodicField.from_terms(SCALAR, period, [([0], 1.0, 0.0), ([1], 0.0, 0.5)]),
        SizeDistribution.atoms([0.6, 0.4], [[0.5], [-0.5]]),
    )
    return Model(1, period, PeriodicField.zero(VECTOR, period), c,
                 (sym_atoms, wide_atoms, skew_atoms))


def diag2d() -> Model:
    period = Period([1.0, 1.0])
    c = PeriodicField.from_terms(MATRIX, period, [
        ([0, 0], [[2.0, 0.0], [0.0, 2.0]], [[0.0, 0.0], [0.0, 0.0]]),
        ([1, 0], [[0.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]),
        ([0, 1], [[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]),
    ])
    return Model.diffusion_only(c)


def levy_atoms_2d() -> Model:
    """Constant coefficients: c = I and unit atoms +-e1 at rate 1."""
    period = Period([1.0, 1.0])
    c = PeriodicField.constant(np.eye(2), period)
    fam = JumpFamily(
        PeriodicField.constant(1.0, period),
        SizeDistribution.atoms([0.5, 0.5], [[1.0, 0.0], [-1.0, 0.0]]),
    )
    return Model(2, period, PeriodicField.zero(VECTOR, period), c, (fam,))


def sine_drift_1d() -> Model:
    """d=1 unit diffusion with drift sin(2 pi x); the corrector example."""
    period = Period([1.0])
    c = PeriodicField.constant(np.array([[1.0]]), period)
    b = PeriodicField.from_terms(VECTOR, period, [([1], [0.0], [1.0])])
    return Model.diffusion_only(c, drift=b)


#: the shipped example models, by CLI name
SHIPPED = {
    "harmonic1d": harmonic_1d,
    "jump1d": periodic_jump_1d,
    "diag2d": diag2d,
}

#: additional named constructors accepted in configs
NAMED = dict(SHIPPED, levy2d=levy_atoms_2d, sinedrift1d=sine_drift_1d)
