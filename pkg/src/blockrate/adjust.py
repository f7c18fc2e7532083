"""Coefficient shrinkage and noise injection ahead of the model fit.

Small coefficient magnitudes are shrunk toward zero to emulate dead-zone
quantization, then a little uniform noise keeps the fit well posed when a
block is nearly empty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockData, Domain

# Replaces exact zeros in the fitting magnitudes; keeps the likelihood
# finite and its Hessian positive definite.
MAGNITUDE_FLOOR = 1e-12


@dataclass(frozen=True)
class AdjustParams:
    """Shrinkage strength `tau` and noise half-width `eps`."""

    tau: float = 0.4
    eps: float = 0.05

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")


@dataclass
class AdjustedBlock:
    """Adjusted coefficients and derived vectors, all of length K.

    t   : shrunk coefficients, shrink(c)
    eta : the uniform noise sample that was added (frozen per estimate)
    w   : fitting magnitudes |t + eta|, floored away from exact zero
    y   : shrinkage slopes shrink_deriv(c), used by the rate gradient
    """

    t: np.ndarray
    eta: np.ndarray
    w: np.ndarray
    y: np.ndarray


def shrink(c, tau: float):
    """Odd shrinkage c**3 / (c**2 + tau); near-identity for large |c|."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    c = np.asarray(c, dtype=np.float64)
    return c * c * c / (c * c + tau)


def shrink_deriv(c, tau: float):
    """Derivative of :func:`shrink`: 1 + tau*(c**2 - tau)/(c**2 + tau)**2.

    Even, zero at the origin, and bounded by 1.125 for every tau.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    c = np.asarray(c, dtype=np.float64)
    c2 = c * c
    return 1.0 + tau * (c2 - tau) / (c2 + tau) ** 2


def add_noise(t: np.ndarray, eps: float, rng: np.random.Generator):
    """Return (w, eta) with eta ~ U(-eps, eps) i.i.d. and w = |t + eta|.

    eps == 0 draws nothing and returns w = |t| with eta = 0.  Exact zeros
    in w are floored at MAGNITUDE_FLOOR.  Bitwise reproducible for a fixed
    generator state.
    """
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    t = np.asarray(t, dtype=np.float64)
    if eps == 0:
        eta = np.zeros_like(t)
    else:
        eta = rng.uniform(-eps, eps, size=t.shape)
    w = np.abs(t + eta)
    w[w == 0.0] = MAGNITUDE_FLOOR
    return w, eta


def adjust_block(block: BlockData, params: AdjustParams,
                 rng: np.random.Generator) -> AdjustedBlock:
    """Shrink a scaled-coefficient block and add the fitting noise."""
    if block.domain is not Domain.SCALED_COEFF:
        raise ValueError(f"adjust_block expects a scaled block, got {block.domain.value}")
    t = shrink(block.values, params.tau)
    w, eta = add_noise(t, params.eps, rng)
    y = shrink_deriv(block.values, params.tau)
    return AdjustedBlock(t=t, eta=eta, w=w, y=y)
