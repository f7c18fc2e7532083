import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockrate import (AdjustParams, BlockData, BlockShape, Domain, add_noise,
                       adjust_block, shrink, shrink_deriv)

TAU = 0.4


class TestShrink:
    def test_zero(self):
        assert shrink(0.0, TAU) == 0.0

    def test_known_values(self):
        # direct evaluation of c**3 / (c**2 + tau)
        assert shrink(1.0, TAU) == pytest.approx(1.0 / 1.4, rel=1e-15)
        assert shrink(-3.0, TAU) == pytest.approx(-27.0 / 9.4, rel=1e-15)

    def test_approaches_identity(self):
        # |shrink(c) - c| = tau * |c| / (c**2 + tau) <= tau / |c|
        c = np.concatenate([np.linspace(0.01, 50, 500), -np.linspace(0.01, 50, 500)])
        gap = np.abs(shrink(c, TAU) - c)
        assert np.all(gap <= TAU / np.abs(c) + 1e-15)

    def test_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            shrink(1.0, 0.0)


class TestShrinkDeriv:
    def test_zero_exactly(self):
        assert shrink_deriv(0.0, TAU) == 0.0

    def test_known_value(self):
        assert shrink_deriv(1.0, TAU) == pytest.approx(1.0 + 0.24 / 1.96, rel=1e-15)

    def test_asymptote(self):
        assert shrink_deriv(100.0, TAU) == pytest.approx(1.0, abs=1e-4)

    def test_bounds_on_grid(self):
        # extremum of the correction term sits at c**2 = 3*tau, giving 1.125
        c = np.linspace(-60, 60, 200001)
        y = shrink_deriv(c, TAU)
        assert np.all(y >= 0.0)
        assert np.all(y <= 1.125)
        assert y.max() == pytest.approx(1.125, abs=1e-6)

    def test_matches_finite_difference(self):
        rng = np.random.default_rng(11)
        c = rng.uniform(-20, 20, size=1000)
        h = 1e-6
        fd = (shrink(c + h, TAU) - shrink(c - h, TAU)) / (2 * h)
        assert np.max(np.abs(shrink_deriv(c, TAU) - fd)) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(1e-3, 10.0))
def test_shrink_symmetries(c, tau):
    assert shrink(-c, tau) == -shrink(c, tau)
    assert shrink_deriv(-c, tau) == shrink_deriv(c, tau)
    assert abs(shrink(c, tau)) <= abs(c) + 1e-12
    assert math.copysign(1.0, shrink(c, tau)) == math.copysign(1.0, c) or shrink(c, tau) == 0.0


class TestAddNoise:
    def test_eps_zero(self):
        t = np.array([0.5, -2.0, 3.0])
        w, eta = add_noise(t, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(w, np.abs(t))
        assert np.all(eta == 0.0)

    def test_noise_bound(self):
        t = np.random.default_rng(1).normal(size=256)
        w, eta = add_noise(t, 0.05, np.random.default_rng(2))
        assert np.all(np.abs(eta) < 0.05)
        assert np.all(np.abs(w - np.abs(t)) <= np.abs(eta) + 1e-15)

    def test_deterministic(self):
        t = np.linspace(-1, 1, 64)
        w1, e1 = add_noise(t, 0.05, np.random.default_rng(99))
        w2, e2 = add_noise(t, 0.05, np.random.default_rng(99))
        assert w1.tobytes() == w2.tobytes()
        assert e1.tobytes() == e2.tobytes()

    def test_zero_floor(self):
        w, _ = add_noise(np.zeros(4), 0.0, np.random.default_rng(0))
        assert np.all(w == 1e-12)


class TestAdjustBlock:
    def scaled(self, values):
        values = np.asarray(values, dtype=float)
        rows = 1 if values.size < 4 else 2
        return BlockData(BlockShape(rows, values.size // rows), Domain.SCALED_COEFF, values)

    def test_zero_block_noise_dominates(self):
        block = self.scaled(np.zeros(64))
        adj = adjust_block(block, AdjustParams(), np.random.default_rng(3))
        assert np.all(adj.t == 0.0)
        assert np.all(adj.w < 0.05)
        assert np.all(adj.w > 0.0)

    def test_unit_block(self):
        block = self.scaled(np.ones(64))
        adj = adjust_block(block, AdjustParams(eps=0.0), np.random.default_rng(0))
        np.testing.assert_allclose(adj.t, 1.0 / 1.4, rtol=1e-15)
        np.testing.assert_allclose(adj.y, 1.0 + 0.24 / 1.96, rtol=1e-15)
        np.testing.assert_allclose(adj.w, 1.0 / 1.4, rtol=1e-15)

    def test_sign_flip_keeps_magnitudes_without_noise(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=64)
        params = AdjustParams(eps=0.0)
        pos = adjust_block(self.scaled(values), params, np.random.default_rng(0))
        neg = adjust_block(self.scaled(-values), params, np.random.default_rng(0))
        np.testing.assert_array_equal(pos.w, neg.w)
        np.testing.assert_array_equal(pos.t, -neg.t)

    def test_rejects_wrong_domain(self):
        block = BlockData(BlockShape(2, 2), Domain.PIXEL_RESIDUAL, np.ones(4))
        with pytest.raises(ValueError):
            adjust_block(block, AdjustParams(), np.random.default_rng(0))


class TestAdjustParams:
    def test_defaults(self):
        params = AdjustParams()
        assert params.tau == 0.4
        assert params.eps == 0.05

    def test_validation(self):
        with pytest.raises(ValueError):
            AdjustParams(tau=0.0)
        with pytest.raises(ValueError):
            AdjustParams(eps=-0.1)
