import math

import numpy as np
import pytest

from blockrate import (BlockShape, FitError, NewtonOptions, design_matrix,
                       fit_ml, index_maps, init_params, inv_scales,
                       neg_log_likelihood, nll_gradient, nll_hessian,
                       sample_block, solve_spd3, solve_spd3_batch)

SHAPE22 = BlockShape(2, 2)
SHAPE88 = BlockShape(8, 8)


def random_problem(rng, shape=SHAPE88):
    g = np.array([rng.uniform(-1, 1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)])
    w = rng.uniform(0.1, 3.0, size=shape.size)
    return g, w, design_matrix(shape)


class TestInvScales:
    def test_zero_params(self):
        s = inv_scales(np.zeros(3), design_matrix(SHAPE88))
        assert np.all(s == 1.0)

    def test_intercept_only(self):
        s = inv_scales(np.array([math.log(2.0), 0, 0]), design_matrix(SHAPE22))
        np.testing.assert_allclose(s, 2.0, rtol=1e-15)

    def test_row_slope(self):
        # at row index 2 a slope of ln 2 quadruples the scale
        A = design_matrix(BlockShape(3, 1))
        s = inv_scales(np.array([0.0, math.log(2.0), 0.0]), A)
        assert s[2] == pytest.approx(4.0, rel=1e-15)

    def test_bound_violation(self):
        with pytest.raises(FitError):
            inv_scales(np.array([41.0, 0.0, 0.0]), design_matrix(SHAPE22))


class TestNegLogLikelihood:
    def test_unit_w_zero_g(self):
        A = design_matrix(SHAPE22)
        assert neg_log_likelihood(np.zeros(3), np.ones(4), A) == 4.0

    @pytest.mark.parametrize("shape", [SHAPE22, BlockShape(3, 5), SHAPE88])
    def test_equals_block_size(self, shape):
        A = design_matrix(shape)
        assert neg_log_likelihood(np.zeros(3), np.ones(shape.size), A) == shape.size

    @pytest.mark.parametrize("delta", [0.3, -0.7, 1.5])
    def test_intercept_shift_identity(self, delta):
        # L((delta,0,0); w = exp(-delta)) = K - K*delta
        A = design_matrix(SHAPE88)
        w = np.full(64, math.exp(-delta))
        L = neg_log_likelihood(np.array([delta, 0.0, 0.0]), w, A)
        assert L == pytest.approx(64 - 64 * delta, rel=1e-14)


class TestGradient:
    def test_stationary_at_matched_scales(self):
        A = design_matrix(SHAPE88)
        grad = nll_gradient(np.zeros(3), np.ones(64), A)
        np.testing.assert_array_equal(grad, 0.0)

    def test_doubled_w(self):
        A = design_matrix(SHAPE22)
        grad = nll_gradient(np.zeros(3), 2 * np.ones(4), A)
        np.testing.assert_array_equal(grad, [4.0, 2.0, 2.0])

    def test_matches_finite_difference(self):
        rng = np.random.default_rng(21)
        h = 1e-6
        for _ in range(25):
            g, w, A = random_problem(rng)
            grad = nll_gradient(g, w, A)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd = (neg_log_likelihood(g + e, w, A)
                      - neg_log_likelihood(g - e, w, A)) / (2 * h)
                assert grad[i] == pytest.approx(fd, rel=1e-6)


class TestHessian:
    def test_unit_case_is_gram_matrix(self):
        A = design_matrix(SHAPE22)
        H = nll_hessian(np.zeros(3), np.ones(4), A)
        np.testing.assert_array_equal(H, [[4, 2, 2], [2, 2, 1], [2, 1, 2]])

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            g, w, A = random_problem(rng)
            H = nll_hessian(g, w, A)
            np.testing.assert_array_equal(H, H.T)

    def test_matches_gradient_finite_difference(self):
        rng = np.random.default_rng(31)
        h = 1e-6
        for _ in range(25):
            g, w, A = random_problem(rng)
            H = nll_hessian(g, w, A)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd = (nll_gradient(g + e, w, A) - nll_gradient(g - e, w, A)) / (2 * h)
                np.testing.assert_allclose(H[:, i], fd, rtol=1e-5)


class TestInitParams:
    def test_unit_w_2x2(self):
        maps = index_maps(SHAPE22)
        g = init_params(np.ones(4), maps)
        expected_g0 = -math.log((1 + 2 * math.exp(0.05) + math.exp(0.1)) / 4)
        assert g[0] == pytest.approx(expected_g0, abs=1e-15)
        assert g[1] == 0.05 and g[2] == 0.05

    def test_scaling_shifts_intercept(self):
        rng = np.random.default_rng(3)
        maps = index_maps(SHAPE88)
        w = rng.uniform(0.2, 2.0, size=64)
        for c in (2.0, 0.125, 7.5):
            g_scaled = init_params(c * w, maps)
            g_base = init_params(w, maps)
            assert g_scaled[0] == pytest.approx(g_base[0] - math.log(c), rel=1e-14)
            assert g_scaled[1] == g_base[1] and g_scaled[2] == g_base[2]

    def test_intercept_gradient_is_stationary(self):
        rng = np.random.default_rng(17)
        maps = index_maps(SHAPE88)
        A = design_matrix(SHAPE88)
        for _ in range(100):
            w = rng.uniform(0.01, 4.0, size=64)
            g = init_params(w, maps)
            assert abs(nll_gradient(g, w, A)[0]) <= 1e-12

    def test_rejects_zero_w(self):
        with pytest.raises(ValueError):
            init_params(np.zeros(4), index_maps(SHAPE22))


class TestSolveSpd3:
    def test_identity(self):
        x = solve_spd3(np.eye(3), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(x, [1.0, 2.0, 3.0])

    def test_diagonal(self):
        x = solve_spd3(np.diag([2.0, 2.0, 2.0]), np.array([2.0, 4.0, 6.0]))
        np.testing.assert_allclose(x, [1.0, 2.0, 3.0], rtol=1e-15)

    def test_constructed_rhs(self):
        H = np.array([[4.0, 2, 2], [2, 2, 1], [2, 1, 2]])
        x = solve_spd3(H, H @ np.ones(3))
        np.testing.assert_allclose(x, 1.0, rtol=1e-12)

    def test_residual_bound(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            M = rng.normal(size=(3, 3))
            H = M @ M.T + 0.5 * np.eye(3)
            b = rng.normal(size=3)
            x = solve_spd3(H, b)
            assert np.max(np.abs(H @ x - b)) <= 1e-10 * max(np.max(np.abs(b)), 1e-30)

    def test_rejects_non_spd(self):
        with pytest.raises(np.linalg.LinAlgError):
            solve_spd3(np.diag([1.0, -1.0, 1.0]), np.ones(3))
        with pytest.raises(np.linalg.LinAlgError):
            solve_spd3(np.zeros((3, 3)), np.ones(3))

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(14)
        Ms = rng.normal(size=(50, 3, 3))
        Hs = Ms @ np.transpose(Ms, (0, 2, 1)) + np.eye(3)
        bs = rng.normal(size=(50, 3))
        xs = solve_spd3_batch(Hs, bs)
        for H, b, x in zip(Hs, bs, xs):
            np.testing.assert_array_equal(solve_spd3(H, b), x)

    def test_batch_rejects_non_spd_member(self):
        Hs = np.stack([np.eye(3), np.diag([1.0, 1.0, -1.0])])
        with pytest.raises(np.linalg.LinAlgError):
            solve_spd3_batch(Hs, np.ones((2, 3)))


class TestFitMl:
    def fit(self, w, shape=SHAPE88, **kw):
        opts = NewtonOptions(**kw) if kw else NewtonOptions()
        return fit_ml(w, design_matrix(shape), index_maps(shape), opts)

    def test_uniform_w_one(self):
        result = self.fit(np.ones(64))
        assert result.converged
        np.testing.assert_allclose(result.g, 0.0, atol=1e-9)

    def test_uniform_w_two(self):
        result = self.fit(2 * np.ones(64))
        assert result.converged
        np.testing.assert_allclose(result.g, [-math.log(2.0), 0.0, 0.0], atol=1e-9)

    def test_hessian_is_spd_and_gradient_small(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            w = rng.uniform(0.05, 5.0, size=64)
            result = self.fit(w)
            assert result.converged
            assert result.grad_norm <= 1e-9
            np.linalg.cholesky(result.hessian)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(23)
        w = rng.uniform(0.1, 2.0, size=64)
        base = self.fit(w)
        for c in (3.0, 0.2):
            scaled = self.fit(c * w)
            assert scaled.g[0] == pytest.approx(base.g[0] - math.log(c), abs=1e-8)
            assert scaled.g[1] == pytest.approx(base.g[1], abs=1e-8)
            assert scaled.g[2] == pytest.approx(base.g[2], abs=1e-8)

    def test_shuffle_unshuffle_identical(self):
        rng = np.random.default_rng(29)
        w = rng.uniform(0.1, 2.0, size=64)
        perm = rng.permutation(64)
        restored = np.empty_like(w)
        restored[perm] = w[perm]
        assert restored.tobytes() == w.tobytes()
        a = self.fit(w)
        b = self.fit(restored)
        assert a.g.tobytes() == b.g.tobytes()

    def test_non_convergence_is_flagged(self):
        rng = np.random.default_rng(4)
        w = rng.uniform(0.05, 5.0, size=64)
        result = self.fit(w, max_iters=1)
        assert not result.converged
        assert result.iterations == 1
        assert result.grad_norm > 1e-9

    def test_rejects_non_positive_w(self):
        w = np.ones(64)
        w[3] = 0.0
        with pytest.raises(ValueError):
            self.fit(w)

    def test_rejects_single_row_blocks(self):
        shape = BlockShape(1, 8)
        with pytest.raises(ValueError):
            fit_ml(np.ones(8), design_matrix(shape), index_maps(shape))

    def test_bound_violation_raises(self):
        # magnitudes around 1e-19 need an intercept beyond the exponent bound
        with pytest.raises(FitError):
            self.fit(np.full(64, 1e-19))

    def test_ml_consistency(self):
        # mean fitted parameters over many sampled blocks track the truth
        rng = np.random.default_rng(42)
        g_true = np.array([1.0, 0.1, 0.2])
        A, maps = design_matrix(SHAPE88), index_maps(SHAPE88)
        fits = np.empty((1000, 3))
        for i in range(1000):
            block = sample_block(g_true, SHAPE88, rng)
            w = np.maximum(np.abs(block.values), 1e-12)
            fits[i] = fit_ml(w, A, maps).g
        bias = fits.mean(axis=0) - g_true
        assert np.all(np.abs(bias) <= 0.05)


class TestSampleBlock:
    def test_magnitude_mean_at_fixed_position(self):
        g = np.array([0.3, 0.2, 0.1])
        shape = SHAPE22
        s = inv_scales(g, design_matrix(shape))
        rng = np.random.default_rng(77)
        draws = np.vstack([sample_block(g, shape, rng).values for _ in range(100_000)])
        for k in range(4):
            assert np.abs(draws[:, k]).mean() == pytest.approx(1.0 / s[k], rel=0.02)

    def test_variance_and_symmetry(self):
        rng = np.random.default_rng(6)
        draws = np.concatenate(
            [sample_block(np.zeros(3), SHAPE88, rng).values for _ in range(2000)])
        assert draws.var() == pytest.approx(2.0, rel=0.05)
        stderr = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean()) <= 3 * stderr

    def test_deterministic(self):
        a = sample_block(np.array([0.5, 0.0, 0.1]), SHAPE88, np.random.default_rng(123))
        b = sample_block(np.array([0.5, 0.0, 0.1]), SHAPE88, np.random.default_rng(123))
        assert a.values.tobytes() == b.values.tobytes()


class TestNewtonOptions:
    def test_defaults(self):
        opts = NewtonOptions()
        assert opts.grad_tol == 1e-9
        assert opts.max_iters == 25
        assert opts.damping == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            NewtonOptions(grad_tol=0.0)
        with pytest.raises(ValueError):
            NewtonOptions(max_iters=0)
