"""Finite-difference verification of the closed-form rate gradient.

The oracle freezes the noise vector, perturbs one raw coefficient at a
time, reruns the pipeline (shrinkage, magnitudes, a fresh model fit,
rate), and forms the central difference.  Beyond the pipeline primitives
themselves it shares nothing with the closed-form path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .adjust import MAGNITUDE_FLOOR, AdjustParams, adjust_block, shrink
from .blocks import BlockShape, design_matrix, index_maps
from .mlfit import NewtonOptions, fit_ml, sample_block
from .rate import estimate_rate, rate_gradient

# Refit tolerance for oracle evaluations.  Tight enough that solver
# residue is invisible next to the finite-difference truncation error,
# loose enough to stay above the float64 gradient roundoff floor.
_REFIT_OPTS = NewtonOptions(grad_tol=1e-11, max_iters=60)

# Components whose magnitude stays below this are skipped entirely.
MASK_FLOOR = 1e-8

# Relative errors are measured against max(|a|, |b|, DENOM_FLOOR): below
# DENOM_FLOOR the central difference's own noise (~1e-10 absolute at
# h = 1e-5 in float64) would dominate a literal relative comparison, so
# tiny components are effectively held to 1e-9 absolute agreement.
DENOM_FLOOR = 1e-5


def draw_model_params(rng: np.random.Generator,
                      intercept_range=(-1.6, 1.4),
                      slope_range=(0.0, 0.12)) -> np.ndarray:
    """Random generating parameters; the defaults span fitted inverse
    scales of roughly 0.2 to 20 on 8x8 blocks."""
    return np.array([
        rng.uniform(*intercept_range),
        rng.uniform(*slope_range),
        rng.uniform(*slope_range),
    ])


def pipeline_rate(c: np.ndarray, eta: np.ndarray, shape: BlockShape,
                  tau: float, alpha: float,
                  opts: NewtonOptions = _REFIT_OPTS) -> float:
    """Bits per coefficient for raw coefficients c under frozen noise."""
    t = shrink(c, tau)
    w = np.abs(t + eta)
    w[w == 0.0] = MAGNITUDE_FLOOR
    fit = fit_ml(w, design_matrix(shape), index_maps(shape), opts)
    rate, _ = estimate_rate(t, fit.s, alpha)
    return rate


def finite_difference_gradient(c: np.ndarray, eta: np.ndarray,
                               shape: BlockShape, tau: float, alpha: float,
                               h: float = 1e-5) -> np.ndarray:
    """Central finite differences of :func:`pipeline_rate` in each c_k."""
    grad = np.empty(c.size)
    for k in range(c.size):
        hi = c.copy()
        hi[k] += h
        lo = c.copy()
        lo[k] -= h
        grad[k] = (pipeline_rate(hi, eta, shape, tau, alpha)
                   - pipeline_rate(lo, eta, shape, tau, alpha)) / (2.0 * h)
    return grad


@dataclass
class GradCheckReport:
    blocks: int
    components_checked: int
    components_skipped: int
    max_rel_error: float
    median_rel_error: float
    s_min: float
    s_max: float
    elapsed_seconds: float


def run_gradcheck(blocks: int = 200, shape: BlockShape = BlockShape(8, 8),
                  tau: float = 0.4, eps: float = 0.05, alpha: float = 1.0,
                  seed: int = 20240, h: float = 1e-5) -> GradCheckReport:
    """Compare the closed-form gradient against the refit oracle.

    Blocks are sampled from randomized generating parameters; one master
    generator drives parameters, coefficients, and noise, so the run is
    fully reproducible from the seed.
    """
    rng = np.random.default_rng(seed)
    params = AdjustParams(tau=tau, eps=eps)
    design = design_matrix(shape)
    maps = index_maps(shape)
    started = time.perf_counter()

    rel_errors = []
    skipped = 0
    s_min, s_max = np.inf, 0.0

    for _ in range(blocks):
        g_true = draw_model_params(rng)
        block = sample_block(g_true, shape, rng)
        adjusted = adjust_block(block, params, rng)
        fit = fit_ml(adjusted.w, design, maps, _REFIT_OPTS)
        s_min = min(s_min, float(fit.s.min()))
        s_max = max(s_max, float(fit.s.max()))
        closed = rate_gradient(block.values, adjusted.t, adjusted.eta,
                               adjusted.y, fit, design, alpha)
        oracle = finite_difference_gradient(block.values, adjusted.eta,
                                            shape, tau, alpha, h)
        magnitude = np.maximum(np.abs(closed), np.abs(oracle))
        mask = magnitude > MASK_FLOOR
        skipped += int(np.count_nonzero(~mask))
        rel = np.abs(closed - oracle)[mask] / np.maximum(magnitude[mask], DENOM_FLOOR)
        rel_errors.append(rel)

    rel_all = np.concatenate(rel_errors) if rel_errors else np.array([0.0])
    return GradCheckReport(
        blocks=blocks,
        components_checked=int(rel_all.size),
        components_skipped=skipped,
        max_rel_error=float(rel_all.max()),
        median_rel_error=float(np.median(rel_all)),
        s_min=s_min,
        s_max=s_max,
        elapsed_seconds=time.perf_counter() - started,
    )
