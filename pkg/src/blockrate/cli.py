"""Command-line interface: estimate, gradcheck, calibrate, synth, stats.

Exit codes: 0 success, 1 usage error, 2 input-format error, 3 estimation
failures occurred (or a gradient check exceeding its tolerance).
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .adjust import AdjustParams, shrink
from .baselines import (adaptive_codelength_oracle, calibrate, log_rate,
                        log_rate_gradient, ratio_stats, rho_domain_rate)
from .blocks import (BlockData, BlockShape, Domain, dct2_forward, qp_to_step,
                     quantize_round, scale_by_q)
from .dumpio import DumpFormatError, read_block_dump, write_block_dump
from .gradcheck import run_gradcheck
from .mlfit import FitError, NewtonOptions, sample_block
from .rate import RateParams, estimate_block
from .records import EstimateRecord, fmt_num, format_line, read_record_lines
from .streams import derive_block_stream

ESTIMATOR_NAMES = ("proposed", "lograte", "rhodomain", "oracle")

USAGE_ERROR = 1
FORMAT_ERROR = 2
ESTIMATION_ERROR = 3


class UsageError(Exception):
    """Bad flag combination or value; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockrate",
                     description="Differentiable block bit-rate estimation tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", parents=[], help="estimate rates for a block dump")
    est.add_argument("--input", required=True, help="block dump file")
    est.add_argument("--output", required=True, help="estimate records file to write")
    est.add_argument("--estimators", default="proposed",
                     help="comma list of " + "|".join(ESTIMATOR_NAMES))
    est.add_argument("--tau", type=float, default=0.4)
    est.add_argument("--eps", type=float, default=0.05)
    est.add_argument("--alpha", type=float, default=1.0)
    est.add_argument("--mu", type=float, default=1.0)
    est.add_argument("--theta", type=float, default=1.0)
    est.add_argument("--q", type=float, default=None, help="override quantizer step")
    est.add_argument("--qp", type=int, default=None, help="override step via QP")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--grad", action="store_true", help="emit gradients")
    est.add_argument("--threads", type=int, default=1)
    est.add_argument("--grad-tol", type=float, default=1e-9)
    est.add_argument("--max-iters", type=int, default=25)
    est.set_defaults(func=cmd_estimate)

    gc = sub.add_parser("gradcheck", help="verify the closed-form gradient")
    gc.add_argument("--blocks", type=int, default=200)
    gc.add_argument("--rows", type=int, default=8)
    gc.add_argument("--cols", type=int, default=8)
    gc.add_argument("--tau", type=float, default=0.4)
    gc.add_argument("--eps", type=float, default=0.05)
    gc.add_argument("--alpha", type=float, default=1.0)
    gc.add_argument("--seed", type=int, default=20240)
    gc.add_argument("--step", type=float, default=1e-5, help="finite-difference step")
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)

    cal = sub.add_parser("calibrate", help="fit scale factors against actual bits")
    cal.add_argument("--estimates", required=True, help="estimate records file")
    cal.add_argument("--actual", required=True, help="records file with reference bits")
    cal.add_argument("--output", required=True)
    cal.add_argument("--group-key", default=None,
                     help="estimate-record field to group ratio stats by (e.g. q)")
    cal.add_argument("--actual-estimator", default=None,
                     help="estimator name to take reference bits from")
    cal.set_defaults(func=cmd_calibrate)

    syn = sub.add_parser("synth", help="write a synthetic coefficient dump")
    syn.add_argument("--g0", type=float, required=True)
    syn.add_argument("--g1", type=float, required=True)
    syn.add_argument("--g2", type=float, required=True)
    syn.add_argument("--rows", type=int, default=8)
    syn.add_argument("--cols", type=int, default=8)
    syn.add_argument("--count", type=int, required=True)
    syn.add_argument("--q", type=float, default=1.0)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--blocks-per-frame", type=int, default=100)
    syn.add_argument("--output", required=True)
    syn.set_defaults(func=cmd_synth)

    st = sub.add_parser("stats", help="ratio histogram and spread from joined records")
    st.add_argument("--records", required=True,
                    help="records with estimate: and actual: fields")
    st.add_argument("--group-key", default=None)
    st.add_argument("--output", default=None, help="default: stdout")
    st.set_defaults(func=cmd_stats)

    return parser


def _resolve_step(args, header) -> float:
    if args.q is not None and args.qp is not None:
        raise UsageError("give either --q or --qp, not both")
    if args.qp is not None:
        return qp_to_step(args.qp)
    if args.q is not None:
        if not args.q > 0:
            raise UsageError("--q must be positive")
        return args.q
    return header.q


def _estimate_one(record, header, q, names, args, rate_params):
    """All estimator records for one block; returns (records, failures)."""
    shape = header.shape
    if header.domain is Domain.PIXEL_RESIDUAL:
        block = BlockData(shape, Domain.PIXEL_RESIDUAL, record.values)
        c = scale_by_q(dct2_forward(block), q).values
    else:
        c = record.values
    lines, failures = [], []
    levels = None
    for name in names:
        gradient = None
        iterations = 0
        try:
            if name == "proposed":
                rng = derive_block_stream(args.seed, record.frame_id, record.block_id)
                est = estimate_block(BlockData(shape, Domain.SCALED_COEFF, c),
                                     rate_params, rng, want_gradient=args.grad)
                bits, per_coeff = est.rate_bits, est.rate_per_coeff
                iterations, gradient = est.fit.iterations, est.gradient
            elif name == "lograte":
                bits = log_rate(c, args.mu)
                per_coeff = bits / shape.size
                if args.grad:
                    gradient = log_rate_gradient(c, args.mu) / shape.size
            else:
                if levels is None:
                    levels = quantize_round(shrink(c, args.tau))
                if name == "rhodomain":
                    bits = rho_domain_rate(levels, args.theta)
                else:
                    bits = adaptive_codelength_oracle(levels)
                per_coeff = bits / shape.size
        except FitError as exc:
            failures.append((record.frame_id, record.block_id, name, str(exc)))
            continue
        lines.append(EstimateRecord(
            frame_id=record.frame_id,
            block_id=record.block_id,
            estimator=name,
            q=q,
            rate_bits=bits,
            rate_per_coeff=per_coeff,
            iterations=iterations,
            converged=True,
            gradient=gradient,
        ))
    return lines, failures


def cmd_estimate(args) -> int:
    names = [n.strip() for n in args.estimators.split(",") if n.strip()]
    unknown = [n for n in names if n not in ESTIMATOR_NAMES]
    if not names or unknown:
        raise UsageError(f"unknown estimators {unknown}; choose from {ESTIMATOR_NAMES}")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")

    header, blocks = read_block_dump(args.input)
    q = _resolve_step(args, header)
    if header.domain is Domain.PIXEL_RESIDUAL and not q > 0:
        raise ValueError("residual dumps need a positive quantizer step (header or --q/--qp)")
    rate_params = RateParams(
        alpha=args.alpha,
        adjust=AdjustParams(tau=args.tau, eps=args.eps),
        newton=NewtonOptions(grad_tol=args.grad_tol, max_iters=args.max_iters),
    )
    block_list = list(blocks)

    def worker(record):
        return _estimate_one(record, header, q, names, args, rate_params)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(worker, block_list))
    else:
        results = [worker(record) for record in block_list]

    totals = {}
    failures = []
    with open(args.output, "w", encoding="ascii") as out:
        for recs, fails in results:
            failures.extend(fails)
            for rec in recs:
                out.write(rec.to_line() + "\n")
                key = (rec.frame_id, rec.estimator)
                count, bits = totals.get(key, (0, 0.0))
                totals[key] = (count + 1, bits + rec.rate_bits)

    for (frame_id, name) in sorted(totals):
        count, bits = totals[(frame_id, name)]
        print(format_line([("frame", frame_id), ("estimator", name),
                           ("blocks", count), ("total_bits", fmt_num(bits))]))
    print(format_line([("blocks", len(block_list)), ("records", sum(c for c, _ in totals.values())),
                       ("failures", len(failures))]))
    for frame_id, block_id, name, message in failures:
        print(f"FAILED frame:{frame_id} block:{block_id} estimator:{name} error:{message}",
              file=sys.stderr)
    return ESTIMATION_ERROR if failures else 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(blocks=args.blocks, shape=BlockShape(args.rows, args.cols),
                           tau=args.tau, eps=args.eps, alpha=args.alpha,
                           seed=args.seed, h=args.step)
    print(format_line([
        ("blocks", report.blocks),
        ("components", report.components_checked),
        ("skipped", report.components_skipped),
        ("max_rel_error", fmt_num(report.max_rel_error)),
        ("median_rel_error", fmt_num(report.median_rel_error)),
        ("s_min", fmt_num(report.s_min)),
        ("s_max", fmt_num(report.s_max)),
        ("seconds", fmt_num(report.elapsed_seconds)),
    ]))
    if report.max_rel_error > args.tolerance:
        print(f"gradient check FAILED: {report.max_rel_error!r} > {args.tolerance!r}",
              file=sys.stderr)
        return ESTIMATION_ERROR
    return 0


def _reference_bits(rows, chosen_estimator):
    """Map (frame, block) -> reference bits from parsed record lines."""
    estimators = {row.get("estimator") for row in rows if "estimator" in row}
    if chosen_estimator is None and len(estimators) > 1:
        raise ValueError(
            f"reference file mixes estimators {sorted(estimators)}; pass --actual-estimator")
    bits = {}
    for row in rows:
        if chosen_estimator is not None and row.get("estimator") != chosen_estimator:
            continue
        value = row.get("rate_bits", row.get("bits"))
        if value is None:
            continue
        bits[(int(row["frame"]), int(row["block"]))] = float(value)
    if not bits:
        raise ValueError("no usable reference bits found")
    return bits


def cmd_calibrate(args) -> int:
    est_rows = read_record_lines(args.estimates)
    if not est_rows:
        raise ValueError("estimates file is empty")
    reference = _reference_bits(read_record_lines(args.actual), args.actual_estimator)

    by_estimator = {}
    for row in est_rows:
        by_estimator.setdefault(row["estimator"], []).append(row)

    out_lines = []
    missing_total = 0
    for name in sorted(by_estimator):
        rows = by_estimator[name]
        joined = [(row, reference.get((int(row["frame"]), int(row["block"])))) for row in rows]
        missing = sum(1 for _, bits in joined if bits is None)
        missing_total += missing
        if missing:
            print(f"calibrate: {missing} records of {name} have no reference bits",
                  file=sys.stderr)
        usable = [(row, bits) for row, bits in joined if bits is not None]
        if not usable:
            raise ValueError(f"no joined samples for estimator {name}")
        raw = np.array([float(row["rate_bits"]) for row, _ in usable])
        actual = np.array([bits for _, bits in usable])
        result = calibrate(raw, actual)
        calibrated = result.factor * raw
        keys = None
        if args.group_key is not None:
            keys = [row.get(args.group_key, "?") for row, _ in usable]
        stats = ratio_stats(calibrated, actual, keys)

        out_lines.append(format_line([
            ("type", "calibration"), ("estimator", name),
            ("factor", fmt_num(result.factor)),
            ("mean_ratio", fmt_num(result.mean_ratio)),
            ("ratio_stddev", fmt_num(result.ratio_stddev)),
            ("samples", result.sample_count), ("missing", missing),
        ]))
        out_lines.extend(_stats_lines(name, stats, args.group_key))
        for (row, bits), value in zip(usable, calibrated):
            pairs = [("type", "ratio"), ("estimator", name),
                     ("frame", row["frame"]), ("block", row["block"]),
                     ("estimate", fmt_num(value)), ("actual", fmt_num(bits))]
            if args.group_key is not None:
                pairs.append((args.group_key, row.get(args.group_key, "?")))
            out_lines.append(format_line(pairs))

    with open(args.output, "w", encoding="ascii") as out:
        out.write("\n".join(out_lines) + "\n")
    return 0


def _stats_lines(name, stats, group_key):
    lines = [format_line([
        ("type", "ratiostats"), ("estimator", name), ("group", "all"),
        ("samples", stats.overall.count),
        ("mean", fmt_num(stats.overall.mean)),
        ("stddev", fmt_num(stats.overall.stddev)),
        ("overflow", stats.overflow), ("excluded", stats.excluded),
    ])]
    for key, group in stats.groups.items():
        lines.append(format_line([
            ("type", "ratiostats"), ("estimator", name),
            ("group", f"{group_key}={key}"), ("samples", group.count),
            ("mean", fmt_num(group.mean)), ("stddev", fmt_num(group.stddev)),
            ("overflow", group.overflow),
        ]))
    for i in range(len(stats.counts)):
        if stats.counts[i]:
            lines.append(format_line([
                ("type", "histbin"), ("estimator", name),
                ("lo", fmt_num(stats.bin_edges[i])), ("hi", fmt_num(stats.bin_edges[i + 1])),
                ("count", int(stats.counts[i])),
            ]))
    return lines


def cmd_synth(args) -> int:
    if args.count < 0:
        raise ValueError("--count must be non-negative")
    if args.blocks_per_frame < 1:
        raise ValueError("--blocks-per-frame must be at least 1")
    shape = BlockShape(args.rows, args.cols)
    g = np.array([args.g0, args.g1, args.g2])
    records = []
    for i in range(args.count):
        frame_id = i // args.blocks_per_frame
        block_id = i % args.blocks_per_frame
        rng = derive_block_stream(args.seed, frame_id, block_id)
        block = sample_block(g, shape, rng)
        records.append((frame_id, block_id, block.values))
    write_block_dump(args.output, Domain.SCALED_COEFF, shape, args.q, records)
    print(format_line([("written", args.count), ("output", args.output)]))
    return 0


def cmd_stats(args) -> int:
    rows = read_record_lines(args.records)
    rows = [row for row in rows if "estimate" in row and "actual" in row]
    if not rows:
        raise ValueError("no records with estimate and actual fields")
    by_estimator = {}
    for row in rows:
        by_estimator.setdefault(row.get("estimator", "all"), []).append(row)

    lines = []
    for name in sorted(by_estimator):
        group = by_estimator[name]
        estimates = np.array([float(row["estimate"]) for row in group])
        actuals = np.array([float(row["actual"]) for row in group])
        keys = None
        if args.group_key is not None:
            keys = [row.get(args.group_key, "?") for row in group]
        stats = ratio_stats(estimates, actuals, keys)
        lines.extend(_stats_lines(name, stats, args.group_key))

    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="ascii") as out:
            out.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except DumpFormatError as exc:
        print(f"input format error: {exc}", file=sys.stderr)
        return FORMAT_ERROR
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return FORMAT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FORMAT_ERROR


if __name__ == "__main__":
    sys.exit(main())
