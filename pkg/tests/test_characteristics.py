import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homogjump.characteristics import (TruncationFn, bigjump_g, characteristics_sweep,
                                       estimate_Bh, estimate_bigjump_flow, estimate_Ctilde,
                                       estimate_characteristics)
from homogjump.fields import MATRIX, SCALAR, VECTOR, Period, PeriodicField
from homogjump.model import JumpFamily, Model, SizeDistribution
from homogjump.sim import brownian_model

P1 = Period([1.0])


def test_truncation_identity_inside_delta():
    h = TruncationFn(0.5)
    y = np.array([[0.2, 0.1], [0.0, -0.4]])
    np.testing.assert_allclose(h(y), y, atol=0)


def test_truncation_vanishes_beyond_two_delta():
    h = TruncationFn(0.5)
    np.testing.assert_allclose(h(np.array([[1.5, 0.0]])), 0.0, atol=0)


@settings(max_examples=60, deadline=None)
@given(y1=st.floats(-3, 3), y2=st.floats(-3, 3), delta=st.floats(0.1, 2))
def test_truncation_odd_and_bounded(y1, y2, delta):
    h = TruncationFn(delta)
    y = np.array([[y1, y2]])
    np.testing.assert_allclose(h(-y), -h(y), atol=1e-14)
    assert np.linalg.norm(h(y)) <= delta * 2.0 + 1e-12  # |h| <= delta: rho * r <= delta
    assert np.linalg.norm(h(y)) <= delta + 1e-12


def test_ball_trunc_outer_matches_monte_carlo():
    dist = SizeDistribution.uniform_ball(3.0, 2)
    h = TruncationFn(1.0)
    eps = 0.5
    closed = dist.mean_trunc_outer(eps, h)
    rng = np.random.default_rng(1)
    y = dist.decode(rng.random(200_000), rng.standard_normal((200_000, 2)))
    hv = h(eps * y)
    mc = np.einsum("ni,nj->ij", hv, hv) / len(y)
    np.testing.assert_allclose(closed, mc, atol=4e-3)


def test_ball_bigjump_matches_quadrature():
    dist = SizeDistribution.uniform_ball(4.0, 1)
    # uniform on [-4, 4]: E[g(eps y)] at eps=0.5 equals 0.5 (hand integral)
    assert dist.mean_bigjump(0.5, 0.5) == pytest.approx(0.5, abs=1e-14)
    assert dist.mean_bigjump(0.125, 0.5) == 0.0


def test_symmetric_families_give_zero_Bh(jump1d):
    h = TruncationFn(1.0)
    for fam in jump1d.jumps:
        if fam.sizes.symmetric:
            np.testing.assert_allclose(fam.sizes.mean_trunc_minus_id(0.5, h), 0.0, atol=0)


def test_no_jumps_estimates_vanish(harmonic):
    bh, se = estimate_Bh(harmonic, 0.5, 0.5, TruncationFn(), 200, 3, dt=5e-3)
    np.testing.assert_allclose(bh, 0.0, atol=0)
    flow, fse = estimate_bigjump_flow(harmonic, 0.5, 0.5, 200, 3, dt=5e-3)
    assert flow == 0.0


def test_constant_model_Ctilde_deterministic(levy2d):
    # constant coefficients: the integrand has no path dependence at all
    ct, se = estimate_Ctilde(levy2d, 0.25, 1.0, TruncationFn(), 200, 5, dt=5e-3)
    assert np.max(se) <= 1e-14
    sigma = np.array([[2.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(ct, sigma, atol=1e-10)


def test_t_zero_gives_zero_matrix(levy2d):
    ct, _ = estimate_Ctilde(levy2d, 0.25, 0.0, TruncationFn(), 50, 5, dt=5e-3)
    np.testing.assert_allclose(ct, 0.0, atol=0)


def test_bigjump_dead_zone_exact_zero():
    # atoms at |y| = 1 scaled by eps < delta_g land inside the dead zone
    fam = JumpFamily(PeriodicField.constant(2.0, P1),
                     SizeDistribution.atoms([0.5, 0.5], [[1.0], [-1.0]]))
    m = Model(1, P1, PeriodicField.zero(VECTOR, P1),
              PeriodicField.constant(np.array([[1.0]]), P1), (fam,))
    flow, se = estimate_bigjump_flow(m, 0.25, 1.0, 300, 9, delta_g=0.5, dt=5e-3)
    assert flow == 0.0 and se == 0.0


def test_skewed_family_Bh_trend(jump1d):
    # sharpened truncation: the asymmetric family is outside the identity zone
    # at eps = 0.5 and back inside for smaller eps
    h = TruncationFn(0.2)
    vals = []
    for i, eps in enumerate((0.5, 0.25, 0.125)):
        bh, se = estimate_Bh(jump1d, eps, 1.0, h, 400, 11 + i, dt=2e-3)
        vals.append((abs(bh[0]), se[0]))
    mags = [v for v, _ in vals]
    assert mags[0] > 0.02
    assert all(b <= a + 2.0 * (sa + sb) for (a, sa), (b, sb) in zip(vals, vals[1:]))
    assert mags[-1] <= 3.0 * vals[-1][1] + 1e-15


def test_sweep_verdicts_on_jump_model(jump1d):
    from homogjump.effective import sigma_effective
    from homogjump.torus import TorusGrid, grid_generator, stationary_solve

    grid = TorusGrid(P1, (256,))
    pi = stationary_solve(grid_generator(jump1d, grid), grid)
    sigma = sigma_effective(jump1d, pi).sigma
    sweep = characteristics_sweep(jump1d, [0.5, 0.25], 0.25, 600, 17, sigma, dt=2e-3)
    assert sweep.verdicts["bigjump_decreasing"]
    doc = sweep.to_dict()
    assert len(doc["estimates"]) == 2


def test_sweep_requires_decreasing_eps(jump1d):
    with pytest.raises(ValueError, match="decreasing"):
        characteristics_sweep(jump1d, [0.25, 0.5], 1.0, 100, 1, np.eye(1))


def test_bigjump_needs_dead_zone(jump1d):
    with pytest.raises(ValueError, match="vanish"):
        estimate_bigjump_flow(jump1d, 0.5, 1.0, 100, 1, delta_g=0.0)
