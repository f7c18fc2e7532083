"""Block geometry, the frequency design matrix, and transform/quantizer utilities.

A block of M x N pixels is handled as a flat vector of K = M*N values in
row-major order.  Every per-block vector in this package (residuals,
coefficients, noise, magnitudes) has length K and is indexed from zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.fft


class Domain(enum.Enum):
    """What the values of a block represent."""

    PIXEL_RESIDUAL = "residual"
    TRANSFORM_COEFF = "transform"
    SCALED_COEFF = "scaled"


@dataclass(frozen=True)
class BlockShape:
    """Block geometry: `rows` x `cols` pixels, `size` coefficients."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"block shape must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class IndexMaps:
    """Row/column frequency index of each flattened position.

    ``row[k] = k // cols`` and ``col[k] = k - cols * row[k]``.
    """

    row: np.ndarray
    col: np.ndarray


@dataclass
class BlockData:
    """One block's values together with their domain tag."""

    shape: BlockShape
    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.shape.size,):
            raise ValueError(
                f"expected {self.shape.size} values for a "
                f"{self.shape.rows}x{self.shape.cols} block, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("block values must be finite")


def index_maps(shape: BlockShape) -> IndexMaps:
    """Return the per-position row/column frequency indexes of a block."""
    k = np.arange(shape.size)
    row = k // shape.cols
    col = k - shape.cols * row
    return IndexMaps(row=row, col=col)


def design_matrix(shape: BlockShape) -> np.ndarray:
    """K x 3 matrix with columns (1, row index, column index).

    Full rank (3) whenever both block dimensions are at least 2.
    """
    maps = index_maps(shape)
    return np.column_stack([
        np.ones(shape.size),
        maps.row.astype(np.float64),
        maps.col.astype(np.float64),
    ])


def _require_domain(block: BlockData, domain: Domain, op: str) -> None:
    if block.domain is not domain:
        raise ValueError(f"{op} expects a {domain.value} block, got {block.domain.value}")


def dct2_forward(block: BlockData) -> BlockData:
    """Orthonormal 2D DCT-II of a residual block.

    Unitary normalization, so energy is preserved and the DC coefficient
    of a constant block equals sqrt(K) times the constant.
    """
    _require_domain(block, Domain.PIXEL_RESIDUAL, "dct2_forward")
    pixels = block.values.reshape(block.shape.rows, block.shape.cols)
    coeffs = scipy.fft.dctn(pixels, type=2, norm="ortho")
    return BlockData(block.shape, Domain.TRANSFORM_COEFF, coeffs.ravel())


def dct2_inverse(block: BlockData) -> BlockData:
    """Exact inverse of :func:`dct2_forward`."""
    _require_domain(block, Domain.TRANSFORM_COEFF, "dct2_inverse")
    coeffs = block.values.reshape(block.shape.rows, block.shape.cols)
    pixels = scipy.fft.idctn(coeffs, type=2, norm="ortho")
    return BlockData(block.shape, Domain.PIXEL_RESIDUAL, pixels.ravel())


def scale_by_q(block: BlockData, q: float) -> BlockData:
    """Divide transform coefficients by the quantizer step size."""
    if not q > 0:
        raise ValueError(f"quantizer step must be positive, got {q}")
    _require_domain(block, Domain.TRANSFORM_COEFF, "scale_by_q")
    return BlockData(block.shape, Domain.SCALED_COEFF, block.values / q)


def qp_to_step(qp: int) -> float:
    """Map an HEVC-style quantization parameter to a step size.

    Uses the standard rule Q = 2**((QP - 4) / 6); kept in one place so an
    alternate mapping is a one-line change.
    """
    qp = int(qp)
    if not 0 <= qp <= 51:
        raise ValueError(f"QP must be in [0, 51], got {qp}")
    return 2.0 ** ((qp - 4) / 6.0)


def quantize_round(t: np.ndarray) -> np.ndarray:
    """Round half away from zero; the bin of level l is (l - 1/2, l + 1/2].

    Reference quantizer used by the codelength oracle and the zero-fraction
    baseline; 0.5 maps to 1 and -0.5 maps to -1.
    """
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("cannot quantize non-finite values")
    return np.copysign(np.floor(np.abs(t) + 0.5), t).astype(np.int64)
