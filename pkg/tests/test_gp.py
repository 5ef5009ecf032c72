import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bbsaddle.gp import (
    Dataset,
    Hyperparams,
    HyperparameterWarning,
    NumericalError,
    append_observation,
    fit,
    kernel_with_derivs,
    log_marginal_likelihood,
    optimize_hyperparameters,
    posterior_eval,
)

from conftest import central_diff, dense_posterior, rel_err

finite = st.floats(-3, 3, allow_nan=False)


class TestHyperparams:
    @pytest.mark.parametrize("kw", [dict(signal_variance=0, length_scale=1),
                                    dict(signal_variance=1, length_scale=-1),
                                    dict(signal_variance=1, length_scale=1, noise_variance=-1e-3)])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            Hyperparams(**kw)


class TestDataset:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Dataset([[0.0, 0.0]], [1.0, 2.0], 1, 1)

    def test_outside_box(self):
        with pytest.raises(ValueError):
            Dataset([[2.0, 0.0]], [1.0], 1, 1, lo=[-1, -1], hi=[1, 1])

    def test_empty(self):
        assert len(Dataset(np.empty((0, 2)), [], 1, 1)) == 0


class TestKernel:
    def test_identical_inputs(self):
        v, g, _ = kernel_with_derivs(np.ones(3), np.ones(3), Hyperparams(2.0, 0.5))
        assert v == 2.0
        assert np.all(g == 0)

    def test_substitution(self):
        v, _, _ = kernel_with_derivs(np.array([1.0, 1.0]), np.zeros(2), Hyperparams(1.0, 1.0))
        assert v == pytest.approx(np.exp(-1.0), rel=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_with_derivs(np.zeros(2), np.zeros(3), Hyperparams(1.0, 1.0))

    def test_derivatives_match_fd(self):
        rng = np.random.default_rng(1)
        hp = Hyperparams(1.3, 0.9)
        for _ in range(10):
            xi, xj = rng.normal(size=4), rng.normal(size=4)
            _, g, H = kernel_with_derivs(xi, xj, hp)
            g_fd = central_diff(lambda q: kernel_with_derivs(q, xj, hp)[0], xi)
            H_fd = central_diff(lambda q: kernel_with_derivs(q, xj, hp)[1], xi)
            assert rel_err(g, g_fd) < 1e-6
            assert rel_err(H, H_fd) < 1e-6

    @given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite))
    def test_symmetry(self, a, b):
        hp = Hyperparams(0.7, 1.1)
        assert kernel_with_derivs(a, b, hp)[0] == kernel_with_derivs(b, a, hp)[0]


class TestFit:
    def test_single_point_interpolates(self):
        s = fit(Dataset([[0.3, -0.2]], [3.0], 1, 1), Hyperparams(1.0, 1.0, 0.0))
        post = posterior_eval(s, np.array([0.3, -0.2]))
        assert post.mean == pytest.approx(3.0, abs=1e-8)
        assert post.std < 1e-8

    def test_two_point_weights_dense_oracle(self):
        hp = Hyperparams(1.0, 1.0, 0.01)
        s = fit(Dataset([[0.0], [1.0]], [1.0, 2.0], 1, 0), hp)
        K = np.array([[1.0, np.exp(-0.5)], [np.exp(-0.5), 1.0]]) + 0.01 * np.eye(2)
        assert rel_err(s.weights, np.linalg.solve(K, [1.0, 2.0])) < 1e-10

    def test_duplicate_point_uses_jitter(self):
        s = fit(Dataset([[0.5, 0.5], [0.5, 0.5]], [1.0, 1.0], 1, 1), Hyperparams(1.0, 1.0, 0.0))
        assert s.jitter > 0

    def test_hopeless_matrix_raises(self):
        # NaN observations poison nothing, but a NaN length scale cannot factor
        X = np.zeros((3, 2))
        X[1, 0] = np.nan
        with pytest.raises((NumericalError, ValueError)):
            fit(Dataset(X, [0.0, 0.0, 0.0], 1, 1), Hyperparams(1.0, 1.0, 0.0))

    def test_empty_dataset_is_prior(self):
        s = fit(Dataset(np.empty((0, 2)), [], 1, 1), Hyperparams(4.0, 1.0))
        post = posterior_eval(s, np.zeros(2))
        assert post.mean == 0.0
        assert post.std == pytest.approx(2.0)
        assert np.all(post.mean_grad == 0)


class TestPosterior:
    def test_two_point_dense_oracle(self):
        hp = Hyperparams(1.0, 1.0, 0.01)
        X, r = np.array([[0.0], [1.0]]), np.array([1.0, 2.0])
        s = fit(Dataset(X, r, 1, 0), hp)
        post = posterior_eval(s, np.array([0.5]))
        mean, var = dense_posterior(X, r, hp, np.array([0.5]))
        assert rel_err(post.mean, mean) < 1e-10
        assert rel_err(post.std, np.sqrt(var)) < 1e-10
        g_fd = central_diff(lambda q: posterior_eval(s, q).mean, np.array([0.5]))
        sg_fd = central_diff(lambda q: posterior_eval(s, q).std, np.array([0.5]))
        assert rel_err(post.mean_grad, g_fd) < 1e-5
        # by symmetry the std gradient vanishes at 0.5, so compare absolutely
        assert rel_err(post.std_grad, sg_fd, floor=1.0) < 1e-5

    def test_dense_oracle_50_points(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(-2, 2, (50, 3))
        r = rng.normal(size=50)
        hp = Hyperparams(2.0, 1.2, 0.05)
        s = fit(Dataset(X, r, 1, 2), hp)
        for p in rng.uniform(-2, 2, (20, 3)):
            post = posterior_eval(s, p, derivs=False)
            mean, var = dense_posterior(X, r, hp, p)
            assert rel_err(post.mean, mean) < 1e-10
            assert rel_err(post.std**2, var) < 1e-10

    def test_derivatives_match_fd(self, random_surrogate):
        s = random_surrogate(n=15, d=3)
        rng = np.random.default_rng(2)
        for p in rng.uniform(-1, 1, (10, 3)):
            post = posterior_eval(s, p)
            assert rel_err(post.mean_grad, central_diff(lambda q: posterior_eval(s, q).mean, p)) < 1e-5
            assert rel_err(post.mean_hess, central_diff(lambda q: posterior_eval(s, q).mean_grad, p)) < 1e-5
            assert rel_err(post.std_grad, central_diff(lambda q: posterior_eval(s, q).std, p)) < 1e-5
            assert rel_err(post.std_hess, central_diff(lambda q: posterior_eval(s, q).std_grad, p)) < 1e-5

    def test_hessians_symmetric(self, random_surrogate):
        s = random_surrogate()
        post = posterior_eval(s, np.array([0.1, 0.2]))
        np.testing.assert_array_equal(post.mean_hess, post.mean_hess.T)
        np.testing.assert_array_equal(post.std_hess, post.std_hess.T)

    def test_dimension_mismatch(self, random_surrogate):
        with pytest.raises(ValueError):
            posterior_eval(random_surrogate(), np.zeros(3))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 2, elements=st.floats(-5, 5)), st.integers(0, 10_000))
    def test_variance_bounded_by_prior(self, p, seed):
        rng = np.random.default_rng(seed)
        hp = Hyperparams(1.7, 0.8, 0.0)
        s = fit(Dataset(rng.uniform(-1, 1, (8, 2)), rng.normal(size=8), 1, 1), hp)
        std = posterior_eval(s, p, derivs=False).std
        assert 0.0 <= std**2 <= hp.signal_variance + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_noiseless_interpolation(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-3, 3, (10, 2))
        r = rng.normal(size=10)
        s = fit(Dataset(X, r, 1, 1), Hyperparams(1.0, 0.5, 0.0))
        for x, v in zip(X, r):
            post = posterior_eval(s, x, derivs=False)
            assert post.std < 1e-8
            assert abs(post.mean - v) < 1e-8


class TestLogMarginalLikelihood:
    def test_scalar_zero(self):
        d = Dataset([[0.0, 0.0]], [0.0], 1, 1)
        assert log_marginal_likelihood(d, Hyperparams(0.5, 1.0, 0.5)) == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_scalar_closed_form(self):
        d = Dataset([[0.0, 0.0]], [2.0], 1, 1)
        want = -0.5 - 0.5 * np.log(4.0) - 0.5 * np.log(2 * np.pi)
        assert log_marginal_likelihood(d, Hyperparams(3.0, 1.0, 1.0)) == pytest.approx(want, rel=1e-14)

    def test_three_points_dense(self):
        X = np.array([[0.0, 0.1], [0.5, -0.3], [1.0, 0.9]])
        r = np.array([0.3, -1.0, 2.0])
        hp = Hyperparams(1.4, 0.6, 0.02)
        d2 = ((X[:, None] - X[None]) ** 2).sum(-1)
        K = hp.signal_variance * np.exp(-0.5 * d2 / hp.length_scale**2) + hp.noise_variance * np.eye(3)
        want = -0.5 * r @ np.linalg.solve(K, r) - 0.5 * np.log(np.linalg.det(K)) - 1.5 * np.log(2 * np.pi)
        assert rel_err(log_marginal_likelihood(Dataset(X, r, 1, 1), hp), want) < 1e-10

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_marginal_likelihood(Dataset(np.empty((0, 2)), [], 1, 1), Hyperparams(1, 1))


class TestOptimizeHyperparameters:
    def test_recovers_length_scale(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(0, 10, (100, 1))
        true = Hyperparams(1.0, 1.0, 1e-4)
        d2 = (X - X.T) ** 2
        K = np.exp(-0.5 * d2) + 1e-4 * np.eye(100)
        r = np.linalg.cholesky(K) @ rng.standard_normal(100)
        d = Dataset(X, r, 1, 0)
        hp = optimize_hyperparameters(d, Hyperparams(1.0, 3.0, true.noise_variance), restarts=5, rng=0)
        assert 0.5 < hp.length_scale < 2.0

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000))
    def test_never_worse_than_init(self, seed):
        rng = np.random.default_rng(seed)
        d = Dataset(rng.uniform(-1, 1, (12, 2)), rng.normal(size=12), 1, 1)
        init = Hyperparams(rng.uniform(0.1, 3), rng.uniform(0.1, 2), 0.01)
        hp = optimize_hyperparameters(d, init, restarts=2, rng=seed)
        assert log_marginal_likelihood(d, hp) >= log_marginal_likelihood(d, init) - 1e-12
        assert hp.noise_variance == init.noise_variance

    def test_single_observation(self):
        d = Dataset([[0.2, 0.3]], [1.5], 1, 1)
        hp = optimize_hyperparameters(d, Hyperparams(1.0, 1.0, 0.1), restarts=2, rng=0)
        assert isinstance(hp, Hyperparams)

    def test_failure_warns_and_keeps_init(self, monkeypatch):
        import bbsaddle.gp as gp

        def boom(*a, **k):
            raise ValueError("forced")

        monkeypatch.setattr(gp, "minimize", boom)
        d = Dataset([[0.0, 0.0], [1.0, 1.0]], [0.0, 1.0], 1, 1)
        init = Hyperparams(1.0, 1.0, 0.1)
        with pytest.warns(HyperparameterWarning):
            assert gp.optimize_hyperparameters(d, init, restarts=1, rng=0) == init


class TestAppend:
    def test_interpolates_new_point(self, random_surrogate):
        s = random_surrogate(noise=0.0)
        p = np.array([0.37, -0.81])
        post = posterior_eval(append_observation(s, p, 4.2), p)
        assert post.mean == pytest.approx(4.2, abs=1e-7)
        assert post.std < 1e-7

    def test_matches_fresh_fit(self):
        rng = np.random.default_rng(3)
        X, r = rng.uniform(-1, 1, (10, 2)), rng.normal(size=10)
        hp = Hyperparams(1.0, 0.6, 0.01)
        s = fit(Dataset(X[:1], r[:1], 1, 1), hp)
        for x, v in zip(X[1:], r[1:]):
            s = append_observation(s, x, v)
        ref = fit(Dataset(X, r, 1, 1), hp)
        for p in rng.uniform(-1, 1, (10, 2)):
            a, b = posterior_eval(s, p, derivs=False), posterior_eval(ref, p, derivs=False)
            assert rel_err(a.mean, b.mean) < 1e-9
            assert rel_err(a.std, b.std) < 1e-9

    def test_repeated_variance_closed_form(self):
        hp = Hyperparams(2.0, 1.0, 0.1)
        p = np.zeros(2)
        s = fit(Dataset([p], [0.0], 1, 1), hp)
        prev = np.inf
        for m in range(1, 31):
            if m > 1:
                s = append_observation(s, p, 0.0)
            var = posterior_eval(s, p, derivs=False).std ** 2
            k = hp.signal_variance
            assert var == pytest.approx(k - k * k * m / (k * m + hp.noise_variance), abs=1e-9)
            assert var < prev
            prev = var

    def test_wrong_dimension(self, random_surrogate):
        with pytest.raises(ValueError):
            append_observation(random_surrogate(), np.zeros(3), 0.0)

    def test_empty_surrogate(self):
        s = fit(Dataset(np.empty((0, 2)), [], 1, 1), Hyperparams(1.0, 1.0))
        s = append_observation(s, np.zeros(2), 1.0)
        assert len(s.dataset) == 1


def test_no_warnings_on_normal_fit(random_surrogate):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        random_surrogate()
