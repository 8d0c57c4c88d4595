import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homogjump.fields import MATRIX, Period, PeriodicField, VECTOR
from homogjump.model import JumpFamily, Model, SizeDistribution
from homogjump.sim import brownian_model
from homogjump.torus import (InvariantMeasure, OracleError, TorusGrid, fit_log_slope,
                             grid_generator, occupation_invariant, project_torus,
                             stationary_solve, tv_decay, tv_distance, uniformized_chain)

P1 = Period([1.0])


def test_project_examples():
    assert project_torus([0.0], [1.0])[0] == 0.0
    assert project_torus([2.3], [1.0])[0] == pytest.approx(0.3)
    np.testing.assert_allclose(project_torus([-0.25, 5.5], [1.0, 2.0]), [0.75, 1.5])


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-100, 100), tau=st.floats(0.1, 7))
def test_projection_range_and_idempotence(x, tau):
    y = project_torus([x], [tau])
    assert 0.0 <= y[0] < tau
    np.testing.assert_array_equal(project_torus(y, [tau]), y)


def test_grid_cells_and_volume():
    grid = TorusGrid(Period([1.0, 2.0]), (4, 8))
    assert grid.n_cells == 32
    assert grid.cell_volume == pytest.approx((0.25) * (0.25))
    centers = grid.centers()
    assert np.all(centers >= 0)
    assert np.all(centers[:, 0] < 1.0) and np.all(centers[:, 1] < 2.0)
    idx = grid.cell_index(centers)
    assert np.array_equal(idx, np.arange(32))


def test_grid_generator_diffusion_rates():
    # d=1, c=1, res=4: neighbor rates 1/(2 h^2) = 8
    m = brownian_model(np.array([[1.0]]))
    grid = TorusGrid(m.period, (4,))
    Q = grid_generator(m, grid)
    assert Q[0, 1] == pytest.approx(8.0)
    assert Q[0, 3] == pytest.approx(8.0)  # periodic wraparound
    np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-12)


def test_grid_generator_pure_jump_shift():
    fam = JumpFamily(PeriodicField.constant(1.0, P1),
                     SizeDistribution.atoms([1.0], [[0.5]], symmetric=False))
    m = Model(1, P1, PeriodicField.zero(VECTOR, P1),
              PeriodicField.zero(MATRIX, P1), (fam,))
    grid = TorusGrid(P1, (4,))
    Q = grid_generator(m, grid)
    for i in range(4):
        assert Q[i, (i + 2) % 4] == pytest.approx(1.0)
    np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-12)


def test_grid_generator_drops_unresolvable_atom():
    fam = JumpFamily(PeriodicField.constant(1.0, P1),
                     SizeDistribution.atoms([1.0], [[0.05]], symmetric=False))
    m = Model(1, P1, PeriodicField.zero(VECTOR, P1),
              PeriodicField.zero(MATRIX, P1), (fam,))
    grid = TorusGrid(P1, (4,))
    with pytest.warns(UserWarning, match="maps to its source cell"):
        Q = grid_generator(m, grid)
    np.testing.assert_allclose(Q, 0.0, atol=0)


def test_grid_generator_rejects_full_matrix():
    c = PeriodicField.constant(np.array([[1.0, 0.3], [0.3, 1.0]]), Period([1.0, 1.0]))
    with pytest.raises(OracleError, match="diagonal"):
        grid_generator(Model.diffusion_only(c), TorusGrid(Period([1.0, 1.0]), (8, 8)))


def test_stationary_single_cell():
    grid = TorusGrid(P1, (1,))
    pi = stationary_solve(np.zeros((1, 1)), grid)
    assert pi.weights[0] == 1.0


def test_stationary_ring_uniform():
    m = brownian_model(np.array([[1.0]]))
    grid = TorusGrid(m.period, (16,))
    pi = stationary_solve(grid_generator(m, grid), grid)
    np.testing.assert_allclose(pi.weights, 1.0 / 16, atol=1e-12)


def test_stationary_harmonic_inverse_c(harmonic, harmonic_pi):
    centers = harmonic_pi.grid.centers()[:, 0]
    inv_c = 1.0 / (2.0 + np.sin(2 * np.pi * centers))
    analytic = inv_c / inv_c.sum()
    # birth-death balance makes the discrete law exactly proportional to 1/c
    np.testing.assert_allclose(harmonic_pi.weights, analytic, rtol=1e-10)


def test_stationary_residual_and_one_step_invariance(harmonic, harmonic_pi):
    grid = harmonic_pi.grid
    Q = grid_generator(harmonic, grid)
    assert np.max(np.abs(harmonic_pi.weights @ Q)) <= 1e-10 * np.max(np.abs(Q))
    P, _ = uniformized_chain(Q)
    step = harmonic_pi.weights @ P
    assert np.abs(step - harmonic_pi.weights).sum() <= 1e-10


def test_occupation_constant_model_uniform():
    m = brownian_model(np.array([[1.0]]))
    grid = TorusGrid(m.period, (32,))
    occ = occupation_invariant(m, grid, burn_in=15.0, T=5000.0, dt=2e-3, seed=21,
                               n_chains=16)
    assert tv_distance(occ.weights, np.full(32, 1.0 / 32)) <= 0.02


def test_occupation_matches_analytic_harmonic(harmonic):
    grid = TorusGrid(P1, (64,))
    occ = occupation_invariant(harmonic, grid, burn_in=30.0, T=20000.0, dt=2e-3,
                               seed=5, n_chains=32)
    centers = grid.centers()[:, 0]
    inv_c = 1.0 / (2.0 + np.sin(2 * np.pi * centers))
    assert tv_distance(occ.weights, inv_c / inv_c.sum()) <= 0.02


def test_occupation_two_seeds_consistent(harmonic):
    grid = TorusGrid(P1, (32,))
    kw = dict(burn_in=20.0, T=8000.0, dt=2e-3, n_chains=16)
    a = occupation_invariant(harmonic, grid, seed=1, **kw)
    b = occupation_invariant(harmonic, grid, seed=2, **kw)
    assert tv_distance(a.weights, b.weights) <= 0.03


def test_tv_decay_t0_and_large_t(harmonic, harmonic_pi):
    grid64 = TorusGrid(P1, (64,))
    Q = grid_generator(harmonic, grid64)
    pairs = tv_decay(Q, grid64, [0.0, 0.4, 0.8])
    pi = stationary_solve(Q, grid64).weights
    assert pairs[0][1] == pytest.approx(1.0 - pi.min(), abs=1e-12)
    assert pairs[-1][1] <= 1e-8


def test_tv_decay_slope_matches_spectral_gap():
    m = brownian_model(np.array([[1.0]]))
    grid = TorusGrid(m.period, (16,))
    Q = grid_generator(m, grid)
    # late enough that higher modes (4x the gap) have died off
    pairs = tv_decay(Q, grid, np.linspace(0.15, 0.4, 6))
    slope, r2 = fit_log_slope(pairs)
    gap = np.sort(np.linalg.eigvals(Q).real)[-2]
    assert r2 > 0.999
    assert slope == pytest.approx(gap, rel=0.05)


def test_tv_decay_monotone_negative_slope(harmonic):
    grid = TorusGrid(P1, (64,))
    Q = grid_generator(harmonic, grid)
    pairs = tv_decay(Q, grid, np.linspace(0.03, 0.15, 9))
    tvs = [tv for _, tv in pairs]
    assert all(b <= a for a, b in zip(tvs, tvs[1:]))
    slope, r2 = fit_log_slope(pairs)
    assert slope < 0.0
    assert r2 >= 0.99


def test_tv_decay_needs_three_points(harmonic):
    grid = TorusGrid(P1, (16,))
    Q = grid_generator(harmonic, grid)
    with pytest.raises(ValueError, match="3 time points"):
        tv_decay(Q, grid, [0.1, 0.2])


def test_invariant_measure_validates():
    grid = TorusGrid(P1, (4,))
    with pytest.raises(ValueError):
        InvariantMeasure(grid, np.array([0.5, 0.5, 0.5, 0.5]), "occupation")
