import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ebdiscrim import (BootstrapResult, DomainError, ExperimentDesign, build_grid, default_weighting, j_stat,
                       kappa_quantile, likelihood_matrix, marginal, project, simulate)
from ebdiscrim.gmm import bootstrap_jopt, check_weighting, fit_dataset, weighting_root
from oracle import non_mixture_pmf, projected_gradient_jopt


def test_default_weighting():
    W = default_weighting(np.full(4, 0.25), 1000)
    np.testing.assert_allclose(W, np.diag(np.full(4, 16 / 3)))
    W = default_weighting(np.array([1.0, 0, 0, 0]), 100)
    np.testing.assert_allclose(np.diag(W), 400.0)


def test_user_weighting_passthrough():
    g, d = build_grid(3), ExperimentDesign(1)
    A = likelihood_matrix(g, d)
    fit = project(np.full(4, 0.25), A, np.eye(4), 10)
    assert fit.W is not None and np.array_equal(fit.W, np.eye(4))


def test_check_weighting_rejects():
    with pytest.raises(DomainError):
        check_weighting(np.ones((2, 3)))
    with pytest.raises(DomainError):
        check_weighting(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(DomainError):
        check_weighting(np.diag([1.0, -1.0]))


def test_weighting_root():
    r = np.random.default_rng(0)
    X = r.normal(size=(5, 5))
    W = X @ X.T
    R = weighting_root(W)
    np.testing.assert_allclose(R.T @ R, W, atol=1e-10)
    D = np.diag([1.0, 4.0])
    np.testing.assert_array_equal(weighting_root(D), np.diag([1.0, 2.0]))


def test_j_stat_examples():
    f = np.array([0.3, 0.2, 0.5])
    assert j_stat(f, f, np.eye(3), 50) == 0
    fbar = np.zeros(9)
    f = fbar.copy()
    f[:2] = [0.1, -0.1]
    assert j_stat(f, fbar, np.eye(9), 100) == pytest.approx(2.0)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 10_000))
def test_j_stat_dense_oracle(seed, n):
    r = np.random.default_rng(seed)
    f, fbar = r.dirichlet(np.ones(9)), r.dirichlet(np.ones(9))
    X = r.normal(size=(9, 9))
    W = X @ X.T
    ref = n * sum((f[i] - fbar[i]) * W[i, j] * (f[j] - fbar[j]) for i in range(9) for j in range(9))
    assert j_stat(f, fbar, W, n) == pytest.approx(ref, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_representable_projects_exactly(seed):
    g, d = build_grid(6), ExperimentDesign(3)
    A = likelihood_matrix(g, d)
    fbar = marginal(np.random.default_rng(seed).dirichlet(np.ones(36)), A)
    fit = project(fbar, A, default_weighting(fbar, 500), 500)
    assert fit.ok
    assert fit.J_opt < 1e-6
    np.testing.assert_allclose(fit.f_proj, fbar, atol=1e-7)
    assert np.all(fit.pi_proj >= 0) and fit.pi_proj.sum() == pytest.approx(1, abs=1e-8)
    np.testing.assert_array_equal(fit.f_proj, A.entries @ fit.pi_proj)


def test_two_point_fit_on_corners():
    A = likelihood_matrix(build_grid(2), ExperimentDesign(1))
    fbar = np.array([0.5, 0.5, 0, 0])
    fit = project(fbar, A, default_weighting(fbar, 100), 100)
    assert fit.J_opt < 1e-8


@pytest.mark.parametrize("K", [3, 5])
def test_non_mixture_matches_projected_gradient(K):
    d = ExperimentDesign(2)
    A = likelihood_matrix(build_grid(K), d)
    fbar = non_mixture_pmf(d)
    n = 200
    W = default_weighting(fbar, n)
    fit = project(fbar, A, W, n)
    ref = projected_gradient_jopt(fbar, A.entries, W, n)
    assert fit.J_opt > 0.01
    assert fit.J_opt == pytest.approx(ref, abs=1e-5)


def test_projection_minimal_and_scale_consistent():
    g, d = build_grid(5), ExperimentDesign(2)
    A = likelihood_matrix(g, d)
    r = np.random.default_rng(8)
    fbar = r.dirichlet(np.ones(9))
    W = default_weighting(fbar, 300)
    fit = project(fbar, A, W, 300)
    assert fit.J_opt > 0
    for _ in range(100):
        pi = r.dirichlet(np.full(25, 0.5))
        assert fit.J_opt <= j_stat(A.entries @ pi, fbar, W, 300) + 1e-9
    fit2 = project(fbar, A, W, 600)
    assert fit2.J_opt == pytest.approx(2 * fit.J_opt, rel=1e-6)
    f = A.entries @ r.dirichlet(np.ones(25))
    assert j_stat(f, fbar, W, 600) == pytest.approx(2 * j_stat(f, fbar, W, 300), rel=1e-12)


def test_project_shape_errors():
    A = likelihood_matrix(build_grid(3), ExperimentDesign(1))
    with pytest.raises(DomainError):
        project(np.ones(3) / 3, A, np.eye(3), 10)
    with pytest.raises(DomainError):
        project(np.ones(4) / 4, A, np.eye(3), 10)


def test_kappa_quantile_examples():
    assert kappa_quantile(np.arange(1, 101), 0.05) == 95
    assert kappa_quantile(np.full(17, 3.5), 0.01) == 3.5
    assert kappa_quantile(BootstrapResult(np.arange(1, 201), 0, 200), 0.01) == 198
    with pytest.raises(DomainError):
        kappa_quantile(np.arange(5), 1.5)
    with pytest.raises(DomainError):
        kappa_quantile(np.array([]), 0.05)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.floats(0.01, 0.5))
def test_kappa_quantile_is_order_statistic(reps, alpha):
    q = kappa_quantile(np.array(reps), alpha)
    assert q in reps
    assert np.mean(np.array(reps) <= q) >= 1 - alpha - 1e-12


@pytest.fixture(scope="module")
def boot_setup():
    g, d = build_grid(5), ExperimentDesign(2)
    A = likelihood_matrix(g, d)
    pi = np.random.default_rng(4).dirichlet(np.ones(25))
    data = simulate(pi, g, d, 400, 12)
    return A, data, fit_dataset(data, A)


def test_bootstrap_deterministic(boot_setup):
    A, data, fit = boot_setup
    a = bootstrap_jopt(data, fit, A, data.n, 1, seed=5)
    b = bootstrap_jopt(data, fit, A, data.n, 1, seed=5)
    assert a.replicates.shape == (1,) and a.replicates[0] == b.replicates[0]
    many = bootstrap_jopt(data, fit, A, data.n, 6, seed=5)
    # replicate b depends only on (seed, b)
    assert many.replicates[0] == a.replicates[0]
    assert many.n_failed == 0 and many.scheme == "parametric-proj"


def test_bootstrap_threads_match_serial(boot_setup):
    A, data, fit = boot_setup
    a = bootstrap_jopt(data, fit, A, data.n, 8, seed=9)
    b = bootstrap_jopt(data, fit, A, data.n, 8, seed=9, threads=3)
    np.testing.assert_array_equal(a.replicates, b.replicates)


def test_bootstrap_rejects(boot_setup):
    A, data, fit = boot_setup
    with pytest.raises(DomainError):
        bootstrap_jopt(data, fit, A, data.n + 1, 5, seed=0)
    with pytest.raises(DomainError):
        bootstrap_jopt(data, fit, A, data.n, 0, seed=0)


def test_bootstrap_concentrates_for_representable_large_n():
    g, d = build_grid(5), ExperimentDesign(2)
    A = likelihood_matrix(g, d)
    pi = np.random.default_rng(2).dirichlet(np.ones(25))
    n = 100_000
    data = simulate(pi, g, d, n, 1)
    fit = fit_dataset(data, A)
    boot = bootstrap_jopt(data, fit, A, n, 50, seed=3)
    ref = stats.chi2.ppf(0.95, d.pattern_count - 1)
    assert np.median(boot.replicates) < ref
    assert np.all(boot.replicates >= 0)
