"""Scikit-learn style block-rate estimators.

Each estimator maps an array of blocks, shape ``(n_blocks, K)`` with one
flattened scaled-coefficient block per row, to estimated bits per block.
``fit(X, y)`` calibrates the estimator's scale factor against reference
bit counts ``y`` (total-bits ratio), after which ``predict`` applies it;
an unfitted estimator predicts with the factor given at construction.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .adjust import AdjustParams, shrink
from .baselines import (adaptive_codelength_oracle, calibrate, log_rate,
                        rho_domain_rate)
from .blocks import BlockData, BlockShape, Domain, quantize_round
from .mlfit import NewtonOptions
from .rate import RateParams, estimate_block
from .streams import derive_block_stream


def check_blocks(X, size: int | None = None) -> np.ndarray:
    """Validate a 2D array of flattened blocks and return it as float64."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2D array of blocks, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("need at least one block")
    if size is not None and X.shape[1] != size:
        raise ValueError(f"blocks have {X.shape[1]} coefficients, expected {size}")
    if not np.all(np.isfinite(X)):
        raise ValueError("block values must be finite")
    return X


class _CalibratedMixin:
    """Shared calibration logic; subclasses define _raw_bits and _factor."""

    def fit(self, X, y):
        """Calibrate the scale factor so total predicted bits match y."""
        raw = self._raw_bits(X)
        y = np.asarray(y, dtype=np.float64)
        self.calibration_ = calibrate(raw, y)
        self.factor_ = self.calibration_.factor
        return self

    def _effective_factor(self) -> float:
        factor = getattr(self, "factor_", None)
        return self._factor() if factor is None else factor

    def predict(self, X):
        """Estimated bits per block, using the calibrated factor if fit."""
        return self._effective_factor() * self._raw_bits(X)


class LaplaceRateEstimator(_CalibratedMixin, BaseEstimator):
    """Rate estimator backed by the per-block frequency-decay Laplace model.

    Parameters
    ----------
    block_shape : (rows, cols) of every input block.
    alpha : calibration factor used before fitting.
    tau, eps : coefficient shrinkage strength and noise half-width.
    seed : base seed; row i of X uses the stream for (frame 0, block i),
        so estimates are reproducible and order independent.
    grad_tol, max_iters : Newton solver settings.
    """

    def __init__(self, block_shape=(8, 8), alpha=1.0, tau=0.4, eps=0.05,
                 seed=0, grad_tol=1e-9, max_iters=25):
        self.block_shape = block_shape
        self.alpha = alpha
        self.tau = tau
        self.eps = eps
        self.seed = seed
        self.grad_tol = grad_tol
        self.max_iters = max_iters

    def _shape(self) -> BlockShape:
        return BlockShape(*self.block_shape)

    def _factor(self) -> float:
        return self.alpha

    def _params(self, alpha: float) -> RateParams:
        return RateParams(
            alpha=alpha,
            adjust=AdjustParams(tau=self.tau, eps=self.eps),
            newton=NewtonOptions(grad_tol=self.grad_tol, max_iters=self.max_iters),
        )

    def estimate(self, X, want_gradient=False):
        """Full per-block results (rate, fit, probabilities, gradient)."""
        shape = self._shape()
        X = check_blocks(X, shape.size)
        params = self._params(self._effective_factor())
        out = []
        for i, row in enumerate(X):
            block = BlockData(shape, Domain.SCALED_COEFF, row)
            rng = derive_block_stream(self.seed, 0, i)
            out.append(estimate_block(block, params, rng, want_gradient))
        return out

    def _raw_bits(self, X) -> np.ndarray:
        shape = self._shape()
        X = check_blocks(X, shape.size)
        params = self._params(1.0)
        bits = np.empty(X.shape[0])
        for i, row in enumerate(X):
            block = BlockData(shape, Domain.SCALED_COEFF, row)
            rng = derive_block_stream(self.seed, 0, i)
            bits[i] = estimate_block(block, params, rng).rate_bits
        return bits

    def gradient(self, X) -> np.ndarray:
        """Per-coefficient gradients of bits-per-coefficient, one row each."""
        return np.vstack([e.gradient for e in self.estimate(X, want_gradient=True)])


class LogRateEstimator(_CalibratedMixin, BaseEstimator):
    """Per-coefficient logarithmic rate, mu * sum(log2(1 + |c|))."""

    def __init__(self, mu=1.0):
        self.mu = mu

    def _factor(self) -> float:
        return self.mu

    def _raw_bits(self, X) -> np.ndarray:
        X = check_blocks(X)
        return np.array([log_rate(row, 1.0) for row in X])


class RhoDomainEstimator(_CalibratedMixin, BaseEstimator):
    """Zero-fraction rate model on quantized shrunk coefficients."""

    def __init__(self, theta=1.0, tau=0.4):
        self.theta = theta
        self.tau = tau

    def _factor(self) -> float:
        return self.theta

    def _raw_bits(self, X) -> np.ndarray:
        X = check_blocks(X)
        levels = quantize_round(shrink(X, self.tau))
        return np.array([rho_domain_rate(row, 1.0) for row in levels])


class AdaptiveCodeOracle(BaseEstimator):
    """Adaptive-codelength reference bits for quantized shrunk blocks."""

    def __init__(self, tau=0.4):
        self.tau = tau

    def fit(self, X=None, y=None):
        return self

    def predict(self, X) -> np.ndarray:
        X = check_blocks(X)
        levels = quantize_round(shrink(X, self.tau))
        return np.array([adaptive_codelength_oracle(row) for row in levels])
