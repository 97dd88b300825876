"""Monte Carlo engine tests: covariance construction, exact Gaussian
sampling, determinism under parallelism, and the simulation invariants."""

import math

import numpy as np
import pytest

from vixsmile.mc import (
    CovarianceNotPSDError,
    PathBatch,
    SimGrid,
    _cholesky_with_jitter,
    build_vix_sampler,
    estimate_mean,
    sample_rv,
    sample_vix,
)
from vixsmile.model import ModelParams, kernel
from vixsmile.specfun import QuadSpec, integrate


def mk(v0=0.04, H=0.3, beta=0.0, gamma=1.0, nu=2.0, eta=0.0):
    return ModelParams(v0=v0, H=H, beta=beta, gamma=gamma, nu=nu, eta=eta)


# ---------------------------------------------------------------------------
# grid and batch validation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        {"T": 0.0},
        {"T": -1.0},
        {"delta": 0.0},
        {"n_inner": 1},
        {"n_paths": 0},
        {"chunk_size": 0},
        {"seed": -1},
    ],
)
def test_simgrid_validation(kwargs):
    base = dict(T=0.1, delta=30 / 365, n_inner=8, n_paths=100, seed=1, chunk_size=64)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SimGrid(**base)


def test_pathbatch_rejects_nonpositive_samples():
    grid = SimGrid(T=0.1, n_paths=3)
    with pytest.raises(ValueError):
        PathBatch("vix", np.array([1.0, 0.0, 2.0]), grid, mk())
    with pytest.raises(ValueError):
        PathBatch("spot", np.array([1.0, 1.0, 1.0]), grid, mk())


# ---------------------------------------------------------------------------
# VIX sampler construction
# ---------------------------------------------------------------------------

def test_vix_sampler_brownian_closed_form():
    # H = 1/2, beta = 0: all covariance entries equal T.
    grid = SimGrid(T=0.3, n_inner=2, n_paths=10)
    sampler = build_vix_sampler(mk(H=0.5), grid)
    np.testing.assert_allclose(sampler.cov, 0.3, rtol=1e-10)


def test_vix_sampler_covariance_matches_brute_force():
    params = mk(H=0.3, beta=0.0)
    grid = SimGrid(T=0.1, delta=30 / 365, n_inner=8, n_paths=10)
    sampler = build_vix_sampler(params, grid)
    nodes = sampler.nodes
    for i in range(8):
        for j in range(i, 8):
            t1, t2 = float(nodes[i]), float(nodes[j])
            # brute-force midpoint rule after removing the true endpoint
            # power law at u = T (both factors singular only at node 0)
            alpha = (params.H - 0.5) * ((t1 == grid.T) + (t2 == grid.T))
            q = 1.0 / (1.0 + alpha)
            n = 200_000
            w_max = grid.T ** (1.0 + alpha)
            w = (np.arange(n) + 0.5) * (w_max / n)
            tau = w ** q
            u = grid.T - tau
            jac = q * w ** (q - 1.0)
            vals = (t1 - u) ** (params.H - 0.5) * (t2 - u) ** (params.H - 0.5) * jac
            oracle = float(np.sum(vals)) * (w_max / n)
            assert sampler.cov[i, j] == pytest.approx(oracle, abs=1e-7), (i, j)


def test_vix_sampler_degenerates_at_tiny_maturity():
    grid = SimGrid(T=1e-8, n_inner=8, n_paths=4000, seed=3)
    sampler = build_vix_sampler(mk(H=0.3, nu=2.0), grid)
    assert np.max(np.abs(sampler.cov)) < 1e-3
    batch = sample_vix(sampler)
    assert float(np.std(batch.samples)) < 1e-3
    assert float(np.mean(batch.samples)) == pytest.approx(0.2, abs=1e-3)


def test_cholesky_jitter_rejects_indefinite_matrix():
    with pytest.raises(CovarianceNotPSDError):
        _cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_vix_samples_constant_without_volvol():
    grid = SimGrid(T=0.2, n_inner=16, n_paths=500, seed=5)
    sampler = build_vix_sampler(mk(nu=0.0, eta=0.0), grid)
    batch = sample_vix(sampler)
    np.testing.assert_allclose(batch.samples, 0.2, rtol=1e-13)


def test_rv_samples_constant_without_volvol():
    grid = SimGrid(T=0.2, n_inner=16, n_paths=500, seed=5)
    batch = sample_rv(mk(nu=0.0, eta=0.0), grid)
    np.testing.assert_allclose(batch.samples, 0.04, rtol=1e-13)
    mean, stderr = estimate_mean(batch)
    assert mean == pytest.approx(0.04, rel=1e-13)
    assert stderr == pytest.approx(0.0, abs=1e-16)


def test_rv_martingale_mean():
    grid = SimGrid(T=0.25, n_inner=32, n_paths=40_000, seed=11)
    batch = sample_rv(mk(H=0.3, nu=2.0), grid)
    mean, stderr = estimate_mean(batch)
    assert abs(mean - 0.04) <= 4.0 * stderr


def test_instantaneous_variance_martingale_at_nodes():
    # E[v_t] = v0 at every interior node of the realized-variance grid.
    from vixsmile.mc import _chunk_rng, _rv_variance_paths, _rv_variance_state

    params = mk(H=0.3, beta=0.5, gamma=0.5, nu=2.0, eta=0.5)
    grid = SimGrid(T=0.5, n_inner=8, n_paths=60_000, seed=17)
    _, chol, node_vars = _rv_variance_state(params, grid)
    v = _rv_variance_paths(params, chol, node_vars, _chunk_rng(17, 0), grid.n_paths)
    means = v.mean(axis=1)
    stderrs = v.std(axis=1, ddof=1) / math.sqrt(grid.n_paths)
    assert np.all(np.abs(means - params.v0) <= 4.0 * stderrs)


def test_positivity_of_samples():
    grid = SimGrid(T=0.25, n_inner=16, n_paths=20_000, seed=23)
    vix_batch = sample_vix(build_vix_sampler(mk(H=0.1, nu=3.0), grid))
    rv_batch = sample_rv(mk(H=0.1, nu=3.0), grid)
    assert float(np.min(vix_batch.samples)) > 0.0
    assert float(np.min(rv_batch.samples)) > 0.0


def test_determinism_across_worker_counts_and_runs():
    grid = SimGrid(T=0.1, n_inner=8, n_paths=10_000, seed=99, chunk_size=4096)
    sampler = build_vix_sampler(mk(H=0.3, nu=2.0), grid)
    reference = sample_vix(sampler, workers=1).samples
    for workers in (2, 4):
        assert np.array_equal(sample_vix(sampler, workers=workers).samples, reference)
    assert np.array_equal(sample_vix(sampler, workers=1).samples, reference)
    rv_ref = sample_rv(mk(H=0.3, nu=2.0), grid, workers=1).samples
    assert np.array_equal(sample_rv(mk(H=0.3, nu=2.0), grid, workers=3).samples, rv_ref)


def test_seed_changes_samples():
    grid = SimGrid(T=0.1, n_inner=8, n_paths=1000, seed=1)
    sampler = build_vix_sampler(mk(H=0.3, nu=2.0), grid)
    a = sample_vix(sampler, seed=1).samples
    b = sample_vix(sampler, seed=2).samples
    assert not np.array_equal(a, b)


def test_stderr_halves_with_four_times_the_paths():
    grid = SimGrid(T=0.25, n_inner=8, n_paths=2000, seed=0)
    sampler = build_vix_sampler(mk(H=0.3, nu=2.0), grid)
    for rep in range(10):
        small = sample_vix(sampler, n_paths=2000, seed=1000 + rep)
        large = sample_vix(sampler, n_paths=8000, seed=2000 + rep)
        _, se_small = estimate_mean(small)
        _, se_large = estimate_mean(large)
        assert 0.4 <= se_large / se_small <= 0.6, rep


def test_grid_refinement_below_noise():
    # Doubling n_inner moves the ATM call price by less than 2 MC stderr.
    from vixsmile.pricing import price_call

    params = mk(H=0.3, nu=2.0)
    prices = {}
    for n_inner in (32, 64):
        grid = SimGrid(T=0.25, n_inner=n_inner, n_paths=50_000, seed=31)
        batch = sample_vix(build_vix_sampler(params, grid))
        forward, _ = estimate_mean(batch)
        prices[n_inner] = price_call(batch, forward)
    diff = abs(prices[64].value - prices[32].value)
    noise = math.hypot(prices[64].stderr, prices[32].stderr)
    assert diff <= 2.0 * noise


def test_variance_derivative_pathwise_bump():
    # A finite-difference bump of one driving Gaussian increment reproduces
    # the model's closed-form variance derivative on a coarse Euler grid.
    params = mk(H=0.3, beta=0.5, gamma=0.6, nu=1.5, eta=0.5)
    n_steps, t_end = 16, 0.5
    dt = t_end / n_steps
    t_left = np.arange(n_steps) * dt
    rng = np.random.default_rng(7)
    dw = rng.standard_normal(n_steps) * math.sqrt(dt)

    a1 = params.nu * math.sqrt(2.0 * params.H)
    a2 = params.eta * math.sqrt(2.0 * params.H)

    def variance_at_end(increments):
        lags = t_end - t_left
        weights = kernel(params, lags)
        factor = float(weights @ increments)
        var = float(weights @ weights) * dt  # discretised Var(B_t)
        mix = params.gamma * math.exp(a1 * factor - 0.5 * a1 ** 2 * var)
        mix += (1.0 - params.gamma) * math.exp(a2 * factor - 0.5 * a2 ** 2 * var)
        return params.v0 * mix, factor, var

    v_base, factor, var = variance_at_end(dw)
    bump_index, eps = 4, 1e-7
    bumped = dw.copy()
    bumped[bump_index] += eps
    v_bumped, _, _ = variance_at_end(bumped)
    fd = (v_bumped - v_base) / eps

    s = float(t_left[bump_index])
    wick1 = math.exp(a1 * factor - 0.5 * a1 ** 2 * var)
    wick2 = math.exp(a2 * factor - 0.5 * a2 ** 2 * var)
    analytic = (
        params.v0
        * (params.gamma * params.nu * wick1 + (1.0 - params.gamma) * params.eta * wick2)
        * math.sqrt(2.0 * params.H)
        * (t_end - s) ** (params.H - 0.5)
        * math.exp(-params.beta * (t_end - s))
    )
    assert fd == pytest.approx(analytic, rel=1e-2)


# ---------------------------------------------------------------------------
# estimate_mean
# ---------------------------------------------------------------------------

def test_estimate_mean_constant_batch():
    grid = SimGrid(T=0.1, n_paths=5)
    batch = PathBatch("vix", np.full(5, 1.7), grid, mk())
    mean, stderr = estimate_mean(batch)
    assert mean == 1.7
    assert stderr == 0.0


def test_estimate_mean_rejects_single_path():
    grid = SimGrid(T=0.1, n_paths=1)
    batch = PathBatch("vix", np.array([1.0]), grid, mk())
    with pytest.raises(ValueError):
        estimate_mean(batch)


def test_estimate_mean_reproducible():
    grid = SimGrid(T=0.1, n_inner=8, n_paths=9000, seed=64, chunk_size=2048)
    sampler = build_vix_sampler(mk(H=0.4, nu=1.0), grid)
    values = {
        estimate_mean(sample_vix(sampler, workers=w))[0] for w in (1, 2, 4)
    }
    assert len(values) == 1
