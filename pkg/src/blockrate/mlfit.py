"""Per-block maximum-likelihood fit of the frequency-decay scale model.

The magnitudes w of a block are modeled as exponential with per-coefficient
rate s_k = exp(g0 + g1*row_k + g2*col_k).  The negative log-likelihood

    L(g) = w . s(g) - sum(A g)

is smooth and convex with a closed-form gradient and 3x3 Hessian, so a few
damped Newton steps solve each block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import BlockData, BlockShape, Domain, IndexMaps, design_matrix

# Largest allowed magnitude of the per-coefficient exponent (A g)_k; keeps
# exp() far from overflow/underflow.
PARAM_BOUND = 40.0

# Step acceptance slack, scaled by 1 + |L|.  Near the optimum the true
# decrease falls below one ulp of L; without slack the line search rejects
# every step and the solver stalls just above tolerance.
_ACCEPT_SLACK = 1e-14

_LEVENBERG_START = 1e-6
_LEVENBERG_MAX = 1e12


class FitError(RuntimeError):
    """Raised when a block cannot be fit (exponent bound or damping failure)."""


@dataclass(frozen=True)
class NewtonOptions:
    grad_tol: float = 1e-9
    max_iters: int = 25
    damping: float = 0.0

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")


@dataclass
class FitResult:
    """Outcome of a block fit.

    g          : fitted 3-vector (intercept, row slope, column slope)
    s          : per-coefficient inverse scales exp(A g)
    hessian    : 3x3 likelihood Hessian at g, symmetric positive definite
    iterations : accepted Newton updates
    converged  : True iff the gradient infinity norm reached grad_tol
    grad_norm  : final gradient infinity norm
    """

    g: np.ndarray
    s: np.ndarray
    hessian: np.ndarray
    iterations: int
    converged: bool
    grad_norm: float


def _check_bound(exponent: np.ndarray) -> None:
    worst = np.max(np.abs(exponent))
    if worst > PARAM_BOUND:
        raise FitError(
            f"model exponent magnitude {worst:.3g} exceeds bound {PARAM_BOUND:g}"
        )


def inv_scales(g: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Per-coefficient inverse scales s_k = exp((A g)_k)."""
    exponent = design @ np.asarray(g, dtype=np.float64)
    _check_bound(exponent)
    return np.exp(exponent)


def neg_log_likelihood(g: np.ndarray, w: np.ndarray, design: np.ndarray) -> float:
    """L(g) = w . s(g) - sum(A g)."""
    exponent = design @ np.asarray(g, dtype=np.float64)
    _check_bound(exponent)
    return float(w @ np.exp(exponent) - exponent.sum())


def nll_gradient(g: np.ndarray, w: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Gradient A^T (w * s(g) - 1) of the negative log-likelihood."""
    s = inv_scales(g, design)
    return design.T @ (w * s - 1.0)


def nll_hessian(g: np.ndarray, w: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Hessian A^T diag(w * s(g)) A; positive definite whenever w > 0."""
    s = inv_scales(g, design)
    return _weighted_gram(w * s, design)


def _weighted_gram(d: np.ndarray, design: np.ndarray) -> np.ndarray:
    """A^T diag(d) A assembled from its six unique entries, exactly symmetric."""
    row, col = design[:, 1], design[:, 2]
    h00 = d.sum()
    h01 = d @ row
    h02 = d @ col
    h11 = d @ (row * row)
    h12 = d @ (row * col)
    h22 = d @ (col * col)
    return np.array([[h00, h01, h02], [h01, h11, h12], [h02, h12, h22]])


def init_params(w: np.ndarray, maps: IndexMaps) -> np.ndarray:
    """Starting point for the Newton fit.

    Slopes start at 0.05; the intercept is chosen so the likelihood is
    stationary along it:  g0 = -log(mean(w * exp(0.05*row + 0.05*col))).
    """
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise ValueError("fitting magnitudes sum to zero; noise floor missing upstream")
    g1 = g2 = 0.05
    g0 = -math.log(float(np.mean(w * np.exp(g1 * maps.row + g2 * maps.col))))
    return np.array([g0, g1, g2])


def solve_spd3(hess: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive-definite 3x3 system by Cholesky.

    Raises ``np.linalg.LinAlgError`` when a pivot is not positive, which
    the Newton loop treats as a request for Levenberg damping.
    """
    h00, h01, h02 = hess[0]
    h11, h12 = hess[1, 1], hess[1, 2]
    h22 = hess[2, 2]
    if not h00 > 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    l00 = math.sqrt(h00)
    l10 = h01 / l00
    l20 = h02 / l00
    d1 = h11 - l10 * l10
    if not d1 > 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    l11 = math.sqrt(d1)
    l21 = (h12 - l20 * l10) / l11
    d2 = h22 - l20 * l20 - l21 * l21
    if not d2 > 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    l22 = math.sqrt(d2)
    y0 = rhs[0] / l00
    y1 = (rhs[1] - l10 * y0) / l11
    y2 = (rhs[2] - l20 * y0 - l21 * y1) / l22
    x2 = y2 / l22
    x1 = (y1 - l21 * x2) / l11
    x0 = (y0 - l10 * x1 - l20 * x2) / l00
    return np.array([x0, x1, x2])


def solve_spd3_batch(hess: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`solve_spd3` for stacked systems.

    hess has shape (B, 3, 3) and rhs (B, 3).  Any non-SPD member raises.
    """
    h00, h01, h02 = hess[:, 0, 0], hess[:, 0, 1], hess[:, 0, 2]
    h11, h12, h22 = hess[:, 1, 1], hess[:, 1, 2], hess[:, 2, 2]
    with np.errstate(invalid="ignore"):
        l00 = np.sqrt(h00)
        l10 = h01 / l00
        l20 = h02 / l00
        l11 = np.sqrt(h11 - l10 * l10)
        l21 = (h12 - l20 * l10) / l11
        l22 = np.sqrt(h22 - l20 * l20 - l21 * l21)
        y0 = rhs[:, 0] / l00
        y1 = (rhs[:, 1] - l10 * y0) / l11
        y2 = (rhs[:, 2] - l20 * y0 - l21 * y1) / l22
        x2 = y2 / l22
        x1 = (y1 - l21 * x2) / l11
        x0 = (y0 - l10 * x1 - l20 * x2) / l00
    out = np.stack([x0, x1, x2], axis=1)
    if not np.all(np.isfinite(out)):
        raise np.linalg.LinAlgError("a stacked matrix is not positive definite")
    return out


def fit_ml(w: np.ndarray, design: np.ndarray, maps: IndexMaps,
           opts: NewtonOptions = NewtonOptions()) -> FitResult:
    """Newton maximum-likelihood fit of the scale model to magnitudes w.

    Each iteration solves H step = grad and accepts the first candidate
    along the halved step that does not increase L (up to 20 halvings);
    if none is acceptable the Hessian is Levenberg-damped with escalating
    lambda.  Non-convergence within ``opts.max_iters`` is reported through
    the ``converged`` flag, never silently.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (design.shape[0],):
        raise ValueError(f"w has shape {w.shape}, expected ({design.shape[0]},)")
    if not np.all(w > 0):
        raise ValueError("all fitting magnitudes must be positive (noise floor)")
    if maps.row.max() < 1 or maps.col.max() < 1:
        raise ValueError("fit requires blocks of at least 2x2")

    g = init_params(w, maps)
    exponent = design @ g
    _check_bound(exponent)
    ws = w * np.exp(exponent)
    loss = float(ws.sum() - exponent.sum())
    grad = design.T @ (ws - 1.0)
    grad_norm = float(np.max(np.abs(grad)))

    iterations = 0
    while grad_norm > opts.grad_tol and iterations < opts.max_iters:
        hess = _weighted_gram(ws, design)
        lam = opts.damping
        accepted = False
        while not accepted:
            try:
                step = solve_spd3(_damped(hess, lam), grad)
            except np.linalg.LinAlgError:
                lam = _escalate(lam)
                continue
            slack = _ACCEPT_SLACK * (1.0 + abs(loss))
            for _ in range(21):
                g_new = g - step
                exponent = design @ g_new
                if np.max(np.abs(exponent)) <= PARAM_BOUND:
                    ws_new = w * np.exp(exponent)
                    loss_new = float(ws_new.sum() - exponent.sum())
                    if math.isfinite(loss_new) and loss_new <= loss + slack:
                        g, loss, ws = g_new, loss_new, ws_new
                        accepted = True
                        break
                step = 0.5 * step
            if not accepted:
                lam = _escalate(lam)
        grad = design.T @ (ws - 1.0)
        grad_norm = float(np.max(np.abs(grad)))
        iterations += 1

    hess = _weighted_gram(ws, design)
    return FitResult(
        g=g,
        s=np.exp(design @ g),
        hessian=hess,
        iterations=iterations,
        converged=grad_norm <= opts.grad_tol,
        grad_norm=grad_norm,
    )


def _damped(hess: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0.0:
        return hess
    return hess + lam * np.eye(3)


def _escalate(lam: float) -> float:
    lam = _LEVENBERG_START if lam < _LEVENBERG_START else 10.0 * lam
    if lam > _LEVENBERG_MAX:
        raise FitError("no acceptable Newton step even with maximal damping")
    return lam


def sample_block(g: np.ndarray, shape: BlockShape,
                 rng: np.random.Generator) -> BlockData:
    """Draw a block of zero-mean Laplace coefficients with scales 1/s_k(g).

    Inverse-CDF sampling from one uniform vector, so coefficient magnitudes
    are exponential with rate s_k.  Deterministic for a fixed generator.
    """
    s = inv_scales(np.asarray(g, dtype=np.float64), design_matrix(shape))
    v = rng.random(shape.size) - 0.5
    # 1 - 2|v| can reach 0 only when random() returns exactly 0; clamp so the
    # tail stays finite.
    arg = np.maximum(-2.0 * np.abs(v), -1.0 + 1e-16)
    values = -np.sign(v) * np.log1p(arg) / s
    return BlockData(shape, Domain.SCALED_COEFF, values)
