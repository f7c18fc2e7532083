"""Differentiable bit-rate estimation for blocks of video transform coefficients.

Fits a frequency-decaying Laplace model to each block by Newton maximum
likelihood, evaluates an entropy-based rate estimate, and provides the
exact gradient of that estimate with respect to the raw coefficients so
the estimator can stand in for a real encoder during gradient training.
"""

from .adjust import AdjustParams, AdjustedBlock, add_noise, adjust_block, shrink, shrink_deriv
from .baselines import (CalibrationResult, GroupStats, RatioStats,
                        adaptive_codelength_oracle, calibrate, log_rate,
                        log_rate_gradient, ratio_stats, rho_domain_rate)
from .blocks import (BlockData, BlockShape, Domain, IndexMaps, dct2_forward,
                     dct2_inverse, design_matrix, index_maps, qp_to_step,
                     quantize_round, scale_by_q)
from .dumpio import BlockRecord, DumpFormatError, DumpHeader, read_block_dump, write_block_dump
from .estimators import (AdaptiveCodeOracle, LaplaceRateEstimator,
                         LogRateEstimator, RhoDomainEstimator, check_blocks)
from .gradcheck import GradCheckReport, finite_difference_gradient, run_gradcheck
from .mlfit import (FitError, FitResult, NewtonOptions, fit_ml, init_params,
                    inv_scales, neg_log_likelihood, nll_gradient, nll_hessian,
                    sample_block, solve_spd3, solve_spd3_batch)
from .rate import (RateEstimate, RateParams, bin_probability, estimate_block,
                   estimate_rate, laplace_cdf, rate_gradient, rate_gradient_batch)
from .records import EstimateRecord, parse_line, read_record_lines
from .streams import derive_block_stream, derive_stream_seed, splitmix64

__version__ = "0.1.0"

__all__ = [
    "AdjustParams", "AdjustedBlock", "add_noise", "adjust_block", "shrink", "shrink_deriv",
    "CalibrationResult", "GroupStats", "RatioStats", "adaptive_codelength_oracle",
    "calibrate", "log_rate", "log_rate_gradient", "ratio_stats", "rho_domain_rate",
    "BlockData", "BlockShape", "Domain", "IndexMaps", "dct2_forward", "dct2_inverse",
    "design_matrix", "index_maps", "qp_to_step", "quantize_round", "scale_by_q",
    "BlockRecord", "DumpFormatError", "DumpHeader", "read_block_dump", "write_block_dump",
    "AdaptiveCodeOracle", "LaplaceRateEstimator", "LogRateEstimator",
    "RhoDomainEstimator", "check_blocks",
    "GradCheckReport", "finite_difference_gradient", "run_gradcheck",
    "FitError", "FitResult", "NewtonOptions", "fit_ml", "init_params", "inv_scales",
    "neg_log_likelihood", "nll_gradient", "nll_hessian", "sample_block",
    "solve_spd3", "solve_spd3_batch",
    "RateEstimate", "RateParams", "bin_probability", "estimate_block", "estimate_rate",
    "laplace_cdf", "rate_gradient", "rate_gradient_batch",
    "EstimateRecord", "parse_line", "read_record_lines",
    "derive_block_stream", "derive_stream_seed", "splitmix64",
    "__version__",
]
