import numpy as np
import pytest

from homogjump.convergence import (ClassificationError, classify_longtime, convergence_sweep,
                                   drift_admissibility)
from homogjump.convergence import test_gaussian as gaussian_report
from homogjump.torus import TorusGrid, grid_generator, stationary_solve
from homogjump.sim import brownian_model


def _gauss_samples(seed, n, sigma, t=1.0):
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(np.asarray(sigma) * t)
    return rng.standard_normal((n, len(L))) @ L.T


def test_null_case_passes():
    sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
    passes = 0
    for rep in range(20):
        rep_report = gaussian_report(_gauss_samples(rep, 3000, sigma), sigma, 1.0)
        passes += sum(p > 0.01 for _, p in rep_report.ks_pvalues)
        total_dirs = len(rep_report.ks_pvalues)
    assert passes >= 0.95 * 20 * total_dirs


def test_degenerate_alternative_rejected():
    report = gaussian_report(np.zeros((2000, 2)), np.eye(2), 1.0)
    assert report.cf_distance == pytest.approx(1.0 - np.exp(-2.0), abs=1e-9)
    assert report.min_ks_pvalue < 1e-10


def test_covariance_within_se_null():
    sigma = np.diag([1.0, 3.0])
    report = gaussian_report(_gauss_samples(7, 20000, sigma), sigma, 1.0)
    assert report.cov_error <= 4.0 * np.max(report.cov_se)


def test_permutation_invariance():
    sigma = np.eye(2)
    X = _gauss_samples(3, 2000, sigma)
    a = gaussian_report(X, sigma, 1.0)
    b = gaussian_report(X[::-1], sigma, 1.0)
    assert a.cov_error == pytest.approx(b.cov_error, abs=1e-12)
    assert a.cf_distance == pytest.approx(b.cf_distance, abs=1e-12)
    for (_, pa), (_, pb) in zip(a.ks_pvalues, b.ks_pvalues):
        assert pa == pytest.approx(pb, abs=1e-12)


def test_linear_map_keeps_pass_rates():
    sigma = np.eye(2)
    L = np.array([[2.0, 0.0], [0.7, 0.5]])
    sigma_t = L @ L.T
    hits_x, hits_y = 0, 0
    trials = 100
    for s in range(trials):
        X = _gauss_samples(1000 + s, 1000, sigma)
        rx = gaussian_report(X, sigma, 1.0)
        ry = gaussian_report(X @ L.T, sigma_t, 1.0)
        hits_x += all(p > 0.01 for _, p in rx.ks_pvalues)
        hits_y += all(p > 0.01 for _, p in ry.ks_pvalues)
    assert abs(hits_x - hits_y) <= 5


def test_degenerate_direction_skipped():
    sigma = np.diag([1.0, 0.0])
    X = _gauss_samples(5, 2000, np.diag([1.0, 1e-30]))
    report = gaussian_report(X, sigma, 1.0)
    assert report.skipped  # the dead axis is flagged, not tested
    assert all(u != (0.0, 1.0) for u, _ in report.ks_pvalues)


def test_needs_enough_samples():
    with pytest.raises(ValueError, match="1000"):
        gaussian_report(np.zeros((10, 1)), np.eye(1), 1.0)


def test_sweep_constant_model_exact_all_eps():
    m = brownian_model(np.eye(1))
    sweep = convergence_sweep(m, [0.5, 0.25], 0.5, 1500, 4, dt=5e-3)
    assert sweep.all_ks_pass
    assert sweep.cf_nonincreasing


def test_sweep_requires_decreasing(harmonic):
    with pytest.raises(ValueError, match="decreasing"):
        convergence_sweep(harmonic, [0.25, 0.5], 1.0, 1000, 1)


def test_classify_examples():
    v = classify_longtime(1, [[np.sqrt(3.0)]])
    assert v.classification == "recurrent" and not v.ergodic
    v = classify_longtime(2, np.diag([2.0, 1.0]))
    assert v.classification == "recurrent" and not v.ergodic
    v = classify_longtime(3, np.eye(3))
    assert v.classification == "transient" and not v.ergodic


def test_classify_scale_invariant():
    for scale in (1e-6, 1.0, 1e6):
        assert classify_longtime(2, scale * np.eye(2)).classification == "recurrent"
        assert classify_longtime(3, scale * np.eye(3)).classification == "transient"


def test_classify_refuses_degenerate():
    with pytest.raises(ClassificationError):
        classify_longtime(2, np.diag([1.0, 0.0]))


def test_drift_admissibility(harmonic, sinedrift, harmonic_pi):
    v = drift_admissibility(harmonic, harmonic_pi)
    assert v.admissible and np.allclose(v.bbar, 0.0)

    from homogjump.fields import PeriodicField, Period
    from homogjump.model import Model
    P1 = Period([1.0])
    const_drift = Model.diffusion_only(
        PeriodicField.constant(np.array([[1.0]]), P1),
        drift=PeriodicField.constant(np.array([0.5]), P1))
    grid = TorusGrid(P1, (64,))
    pi = stationary_solve(grid_generator(const_drift, grid), grid)
    v = drift_admissibility(const_drift, pi)
    assert v.admissible
    np.testing.assert_allclose(v.bbar, [0.5], atol=1e-12)

    grid = TorusGrid(P1, (256,))
    pi = stationary_solve(grid_generator(sinedrift, grid), grid)
    v = drift_admissibility(sinedrift, pi)
    assert not v.admissible
    assert "no diffusive homogenization" in v.message
