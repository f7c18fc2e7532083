"""Line-oriented result records: space-separated ``key:value`` pairs.

Human-inspectable, diff-friendly, and trivially parsed.  Floats are
written with ``repr`` so files round-trip bit-exactly and identical runs
produce byte-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def fmt_num(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def format_line(pairs) -> str:
    """Join (key, value) pairs into one record line."""
    return " ".join(f"{key}:{value}" for key, value in pairs)


def parse_line(line: str) -> dict:
    """Parse one record line into a key -> string dict."""
    fields = {}
    for token in line.split():
        key, sep, value = token.partition(":")
        if not sep:
            raise ValueError(f"malformed record token {token!r}")
        fields[key] = value
    return fields


@dataclass
class EstimateRecord:
    """One estimator's result for one block."""

    frame_id: int
    block_id: int
    estimator: str
    q: float
    rate_bits: float
    rate_per_coeff: float
    iterations: int
    converged: bool
    gradient: np.ndarray | None = None

    def to_line(self) -> str:
        pairs = [
            ("frame", self.frame_id),
            ("block", self.block_id),
            ("estimator", self.estimator),
            ("q", fmt_num(self.q)),
            ("rate_bits", fmt_num(self.rate_bits)),
            ("rate_per_coeff", fmt_num(self.rate_per_coeff)),
            ("iterations", self.iterations),
            ("converged", fmt_num(self.converged)),
        ]
        if self.gradient is not None:
            pairs.append(("gradient", ",".join(repr(float(v)) for v in self.gradient)))
        return format_line(pairs)

    @classmethod
    def from_line(cls, line: str) -> "EstimateRecord":
        fields = parse_line(line)
        gradient = None
        if "gradient" in fields:
            gradient = np.array([float(v) for v in fields["gradient"].split(",")])
        return cls(
            frame_id=int(fields["frame"]),
            block_id=int(fields["block"]),
            estimator=fields["estimator"],
            q=float(fields["q"]),
            rate_bits=float(fields["rate_bits"]),
            rate_per_coeff=float(fields["rate_per_coeff"]),
            iterations=int(fields["iterations"]),
            converged=fields["converged"] == "1",
            gradient=gradient,
        )


def read_record_lines(path) -> list[dict]:
    """All non-empty, non-comment record lines of a file, parsed."""
    out = []
    with open(path, "r", encoding="ascii") as stream:
        for line in stream:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(parse_line(line))
    return out
