"""Binary block-dump files.

Layout (all integers unsigned little-endian):

  header: magic ``RDB1`` (4 bytes), version u16 = 1, domain u16
          (0 = pixel residuals, 1 = scaled coefficients), rows u16,
          cols u16, reserved u16, quantizer step as IEEE-754 binary64,
          block count u64.
  record: frame id u32, block id u32, then rows*cols values as binary64.

Reading is lazy and validates the declared count, per-record completeness,
and value finiteness; every failure reports its byte offset.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .blocks import BlockShape, Domain

MAGIC = b"RDB1"
VERSION = 1

_HEADER = struct.Struct("<4sHHHHHdQ")
_RECORD_HEAD = struct.Struct("<II")

_DOMAIN_FLAGS = {Domain.PIXEL_RESIDUAL: 0, Domain.SCALED_COEFF: 1}
_FLAG_DOMAINS = {0: Domain.PIXEL_RESIDUAL, 1: Domain.SCALED_COEFF}


class DumpFormatError(Exception):
    """Malformed dump file; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class DumpHeader:
    domain: Domain
    shape: BlockShape
    q: float
    count: int


@dataclass
class BlockRecord:
    frame_id: int
    block_id: int
    values: np.ndarray


def write_block_dump(path, domain: Domain, shape: BlockShape, q: float,
                     records: Sequence[tuple[int, int, np.ndarray]]) -> None:
    """Write a dump of (frame_id, block_id, values) records."""
    if domain not in _DOMAIN_FLAGS:
        raise ValueError(f"dump files carry residual or scaled blocks, not {domain.value}")
    if not math.isfinite(q):
        raise ValueError("quantizer step must be finite")
    with open(path, "wb") as out:
        out.write(_HEADER.pack(MAGIC, VERSION, _DOMAIN_FLAGS[domain],
                               shape.rows, shape.cols, 0, float(q), len(records)))
        for frame_id, block_id, values in records:
            values = np.ascontiguousarray(values, dtype="<f8")
            if values.shape != (shape.size,):
                raise ValueError(f"record has {values.size} values, expected {shape.size}")
            if not np.all(np.isfinite(values)):
                raise ValueError("record values must be finite")
            out.write(_RECORD_HEAD.pack(int(frame_id), int(block_id)))
            out.write(values.tobytes())


def read_block_dump(path) -> tuple[DumpHeader, Iterator[BlockRecord]]:
    """Validate the header and return it with a lazy record iterator."""
    stream = open(path, "rb")
    try:
        header = _read_header(stream)
    except Exception:
        stream.close()
        raise
    return header, _iter_records(stream, header)


def _read_header(stream) -> DumpHeader:
    raw = stream.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise DumpFormatError("file too short for a dump header", len(raw))
    magic, version, flag, rows, cols, _reserved, q, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DumpFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise DumpFormatError(f"unsupported version {version}", 4)
    if flag not in _FLAG_DOMAINS:
        raise DumpFormatError(f"unknown domain flag {flag}", 6)
    if rows < 1 or cols < 1:
        raise DumpFormatError(f"invalid block shape {rows}x{cols}", 8)
    if not math.isfinite(q):
        raise DumpFormatError("non-finite quantizer step in header", 14)
    return DumpHeader(_FLAG_DOMAINS[flag], BlockShape(rows, cols), q, count)


def _iter_records(stream, header: DumpHeader) -> Iterator[BlockRecord]:
    record_bytes = _RECORD_HEAD.size + 8 * header.shape.size
    with stream:
        offset = _HEADER.size
        for index in range(header.count):
            raw = stream.read(record_bytes)
            if len(raw) < record_bytes:
                raise DumpFormatError(
                    f"truncated record {index} of {header.count}", offset + len(raw))
            frame_id, block_id = _RECORD_HEAD.unpack_from(raw)
            values = np.frombuffer(raw, dtype="<f8", offset=_RECORD_HEAD.size).copy()
            if not np.all(np.isfinite(values)):
                raise DumpFormatError(f"non-finite value in record {index}", offset)
            yield BlockRecord(frame_id, block_id, values)
            offset += record_bytes
        if stream.read(1):
            raise DumpFormatError(
                f"trailing data after the {header.count} declared records", offset)
