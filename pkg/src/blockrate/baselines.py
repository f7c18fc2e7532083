"""Comparison estimators, a stand-in codelength oracle, and calibration.

The oracle is a deterministic two-part adaptive code: a Krichevsky-Trofimov
estimated zero flag per coefficient, then sign plus adaptively coded unary
magnitude for the nonzero ones.  It plays the role of real encoder bits at
desk scale, so estimator accuracy can be judged by the spread of
estimated/actual ratios after calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_LN2 = math.log(2.0)

MAX_LEVEL = 1 << 15
_UNARY_CONTEXTS = 16

HIST_BIN_WIDTH = 0.1
HIST_MAX_RATIO = 4.0


def log_rate(c: np.ndarray, mu: float) -> float:
    """Per-coefficient logarithmic rate: mu * sum(log2(1 + |c_k|))."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    c = np.asarray(c, dtype=np.float64)
    return mu * float(np.sum(np.log2(1.0 + np.abs(c))))


def log_rate_gradient(c: np.ndarray, mu: float) -> np.ndarray:
    """Gradient of :func:`log_rate`; subgradient 0 at exact zeros."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    c = np.asarray(c, dtype=np.float64)
    return mu * np.sign(c) / ((1.0 + np.abs(c)) * _LN2)


def rho_domain_rate(levels: np.ndarray, theta: float) -> float:
    """Zero-fraction rate model: theta * K * (1 - rho), rho = zeros / K.

    Depends on the levels only through the number of zeros, so it is
    permutation invariant and non-differentiable by design.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    levels = np.asarray(levels)
    return theta * float(np.count_nonzero(levels))


class _KTCounter:
    """Sequential binary probability (count + 1/2) / (total + 1)."""

    __slots__ = ("zeros", "ones")

    def __init__(self):
        self.zeros = 0
        self.ones = 0

    def bits(self, bit: int) -> float:
        count = self.ones if bit else self.zeros
        p = (count + 0.5) / (self.zeros + self.ones + 1.0)
        if bit:
            self.ones += 1
        else:
            self.zeros += 1
        return -math.log2(p)


def adaptive_codelength_oracle(levels: np.ndarray) -> float:
    """Ideal codelength in bits of quantized levels in flattened order.

    Per coefficient: a KT-estimated zero/nonzero flag; for nonzero levels a
    sign bit at probability 1/2 plus (magnitude - 1) in adaptive unary,
    with one KT estimator per unary position (positions beyond 15 share
    the last one).  Fresh estimator state per call, no coder state.
    """
    levels = np.asarray(levels)
    if levels.size and np.max(np.abs(levels)) > MAX_LEVEL:
        raise ValueError(f"level magnitude exceeds {MAX_LEVEL}")
    flag = _KTCounter()
    unary = [_KTCounter() for _ in range(_UNARY_CONTEXTS)]
    bits = 0.0
    for level in levels:
        level = int(level)
        if level == 0:
            bits += flag.bits(0)
            continue
        bits += flag.bits(1)
        bits += 1.0  # sign
        remaining = abs(level) - 1
        pos = 0
        while True:
            ctx = unary[min(pos, _UNARY_CONTEXTS - 1)]
            if remaining > pos:
                bits += ctx.bits(1)
                pos += 1
            else:
                bits += ctx.bits(0)
                break
    return bits


@dataclass
class CalibrationResult:
    """Scale factor fit by total-bits ratio, with ratio spread statistics."""

    factor: float
    mean_ratio: float
    ratio_stddev: float
    sample_count: int


def calibrate(raw_estimates, actual_bits) -> CalibrationResult:
    """Fit factor = sum(actual) / sum(raw) and report calibrated ratio stats.

    The factor makes sum(factor * raw) / sum(actual) equal 1 exactly.
    Ratio statistics are population moments over samples with positive
    actual bits.
    """
    raw = np.asarray(raw_estimates, dtype=np.float64)
    actual = np.asarray(actual_bits, dtype=np.float64)
    if raw.shape != actual.shape or raw.ndim != 1 or raw.size == 0:
        raise ValueError("need two equal-length, non-empty vectors")
    total_raw = raw.sum()
    if not total_raw > 0:
        raise ValueError("raw estimates sum to zero; nothing to calibrate")
    factor = float(actual.sum() / total_raw)
    usable = actual > 0
    ratios = factor * raw[usable] / actual[usable]
    return CalibrationResult(
        factor=factor,
        mean_ratio=float(ratios.mean()) if ratios.size else float("nan"),
        ratio_stddev=float(ratios.std()) if ratios.size else float("nan"),
        sample_count=int(ratios.size),
    )


@dataclass
class GroupStats:
    count: int
    mean: float
    stddev: float
    overflow: int


@dataclass
class RatioStats:
    """Histogram and spread of estimated/actual ratios.

    Bins of width 0.1 cover (0, 4]; ratios above 4 land in the overflow
    count, and samples with non-positive actual bits are excluded (and
    counted).  Ratios of exactly 0 are clamped into the first bin.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    overflow: int
    excluded: int
    overall: GroupStats
    groups: dict = field(default_factory=dict)


def _group_stats(ratios: np.ndarray) -> GroupStats:
    return GroupStats(
        count=int(ratios.size),
        mean=float(ratios.mean()),
        stddev=float(ratios.std()),
        overflow=int(np.count_nonzero(ratios > HIST_MAX_RATIO)),
    )


def ratio_stats(estimates, actuals, group_keys=None) -> RatioStats:
    """Per-group and overall spread of estimate/actual, plus a histogram."""
    est = np.asarray(estimates, dtype=np.float64)
    act = np.asarray(actuals, dtype=np.float64)
    if est.shape != act.shape or est.ndim != 1 or est.size == 0:
        raise ValueError("need two equal-length, non-empty vectors")
    if group_keys is not None and len(group_keys) != est.size:
        raise ValueError("group_keys length must match the samples")

    usable = act > 0
    excluded = int(np.count_nonzero(~usable))
    ratios = est[usable] / act[usable]
    if ratios.size == 0:
        raise ValueError("no samples with positive actual bits")

    n_bins = int(round(HIST_MAX_RATIO / HIST_BIN_WIDTH))
    edges = np.linspace(0.0, HIST_MAX_RATIO, n_bins + 1)
    in_range = ratios <= HIST_MAX_RATIO
    idx = np.clip(np.ceil(ratios[in_range] / HIST_BIN_WIDTH).astype(int) - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)

    groups = {}
    if group_keys is not None:
        keys = np.asarray(group_keys)[usable]
        for key in sorted(set(keys.tolist())):
            groups[key] = _group_stats(ratios[keys == key])

    return RatioStats(
        bin_edges=edges,
        counts=counts,
        overflow=int(np.count_nonzero(~in_range)),
        excluded=excluded,
        overall=_group_stats(ratios),
        groups=groups,
    )
