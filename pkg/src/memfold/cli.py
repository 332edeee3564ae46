"""Command-line interface.

Exit codes are a stable contract for CI gates:

  0  success
  1  I/O failure (missing/unreadable file, unwritable output)
  2  parse or validation failure (diagnostics on stderr)
  3  configuration does not match the model (e.g. unknown frozen module)
  4  predicted adjusted peak exceeds --capacity-bytes

Set MEMFOLD_COLOR=0 to force plain table output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .ir import IRError, ModelIR, decode_ir, parse_ir, validate_ir
from .policy import ConfigError, ConfigMismatchError, TrainConfig, parse_config
from .report import (
    MemoryReport,
    REPORT_FORMATS,
    mape,
    predict_peak,
    render_report,
    report_from_obj,
    report_to_obj,
    sweep_dp,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_PARSE = 2
EXIT_MISMATCH = 3
EXIT_CAPACITY = 4


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def _load_inputs(ir_path: str, cfg_path: str) -> tuple[ModelIR, TrainConfig]:
    ir = parse_ir(_read(ir_path))
    cfg = parse_config(_read(cfg_path))
    return ir, cfg


def cmd_predict(args: argparse.Namespace) -> int:
    try:
        ir, cfg = _load_inputs(args.ir, args.config)
    except OSError as exc:
        return _fail(f"cannot read {exc.filename}: {exc.strerror}", EXIT_IO)
    except (IRError, ConfigError) as exc:
        return _fail(str(exc), EXIT_PARSE)
    try:
        report = predict_peak(ir, cfg)
    except ConfigMismatchError as exc:
        return _fail(str(exc), EXIT_MISMATCH)
    try:
        _emit(render_report(report, args.format), args.out)
    except OSError as exc:
        return _fail(f"cannot write {exc.filename}: {exc.strerror}", EXIT_IO)
    if args.capacity_bytes is not None and report.m_peak_adjusted > args.capacity_bytes:
        return _fail(
            f"predicted peak {report.m_peak_adjusted} B exceeds capacity "
            f"{args.capacity_bytes} B",
            EXIT_CAPACITY,
        )
    return EXIT_OK


def _parse_dp_range(spec: str) -> list[int]:
    if ".." in spec:
        lo_text, _, hi_text = spec.partition("..")
        lo, hi = int(lo_text), int(hi_text)
    else:
        lo = hi = int(spec)
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid dp range {spec!r} (need 1 <= lo <= hi)")
    return list(range(lo, hi + 1))


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        dp_values = _parse_dp_range(args.dp)
    except ValueError as exc:
        return _fail(str(exc), EXIT_PARSE)
    try:
        ir, cfg = _load_inputs(args.ir, args.config)
    except OSError as exc:
        return _fail(f"cannot read {exc.filename}: {exc.strerror}", EXIT_IO)
    except (IRError, ConfigError) as exc:
        return _fail(str(exc), EXIT_PARSE)
    try:
        results = sweep_dp(ir, cfg, dp_values)
    except ConfigMismatchError as exc:
        return _fail(str(exc), EXIT_MISMATCH)
    if args.format == "json":
        text = json.dumps([report_to_obj(r) for _, r in results], indent=2)
    else:
        rows = [
            (str(dp), str(r.m_peak), f"{r.m_peak / 2**30:.2f}",
             str(r.m_peak_adjusted), f"{r.m_peak_adjusted / 2**30:.2f}")
            for dp, r in results
        ]
        columns = ("dp", "m_peak B", "m_peak GiB", "m_peak_adjusted B", "adjusted GiB")
        widths = [max(len(columns[c]), *(len(row[c]) for row in rows)) for c in range(len(columns))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
        text = "\n".join(lines)
    try:
        _emit(text, args.out)
    except OSError as exc:
        return _fail(f"cannot write {exc.filename}: {exc.strerror}", EXIT_IO)
    return EXIT_OK


def _load_predictions(paths: list[str]) -> dict[int, MemoryReport]:
    """dp -> report from any mix of single-report and sweep-array JSON files."""
    predictions: dict[int, MemoryReport] = {}
    for path in paths:
        doc = json.loads(_read(path))
        objs = doc if isinstance(doc, list) else [doc]
        for obj in objs:
            report = report_from_obj(obj)
            predictions[report.config.dp_degree] = report
    return predictions


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        predictions = _load_predictions(args.reports)
        measured_text = _read(args.measured)
    except OSError as exc:
        return _fail(f"cannot read {exc.filename}: {exc.strerror}", EXIT_IO)
    except (ConfigError, json.JSONDecodeError, KeyError) as exc:
        return _fail(f"bad report file: {exc}", EXIT_PARSE)

    rows: list[tuple[int, int]] = []
    reader = csv.DictReader(measured_text.splitlines())
    if reader.fieldnames is None or not {"dp", "measured_bytes"} <= set(reader.fieldnames):
        return _fail("measured CSV must have header columns: dp,measured_bytes", EXIT_PARSE)
    try:
        for record in reader:
            rows.append((int(record["dp"]), int(record["measured_bytes"])))
    except (TypeError, ValueError) as exc:
        return _fail(f"bad measured CSV row: {exc}", EXIT_PARSE)
    if not rows:
        return _fail("measured CSV has no data rows", EXIT_PARSE)

    missing = [dp for dp, _ in rows if dp not in predictions]
    if missing:
        return _fail(f"no prediction for dp={missing} in the given reports", EXIT_MISMATCH)

    predicted = [predictions[dp].m_peak_adjusted for dp, _ in rows]
    measured = [m for _, m in rows]
    try:
        mean = mape(predicted, measured)
    except ValueError as exc:
        return _fail(str(exc), EXIT_PARSE)
    for (dp, meas), pred in zip(rows, predicted):
        ape = 100.0 * abs(pred - meas) / meas
        print(f"dp={dp} predicted={pred} measured={meas} ape={ape:.4f}%")
    print(f"MAPE: {mean:.4f}%")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        text = _read(args.ir)
    except OSError as exc:
        return _fail(f"cannot read {exc.filename}: {exc.strerror}", EXIT_IO)
    try:
        ir = decode_ir(text)
    except IRError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PARSE
    diags = validate_ir(ir)
    for diag in diags:
        print(str(diag), file=sys.stderr)
    return EXIT_PARSE if diags else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memfold",
        description="Predict peak GPU memory for a training run from a model IR "
        "and a training configuration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    predict = sub.add_parser("predict", help="predict peak memory for one configuration")
    predict.add_argument("ir", help="model IR (.mir.json)")
    predict.add_argument("config", help="training configuration (.tcfg.json)")
    predict.add_argument("--format", choices=REPORT_FORMATS, default="table")
    predict.add_argument("--out", help="write the report here instead of stdout")
    predict.add_argument(
        "--capacity-bytes",
        type=int,
        help="exit 4 if the adjusted peak exceeds this device capacity",
    )
    predict.set_defaults(func=cmd_predict)

    sweep = sub.add_parser("sweep", help="predict across a range of data-parallel degrees")
    sweep.add_argument("ir")
    sweep.add_argument("config")
    sweep.add_argument("--dp", required=True, help="inclusive range, e.g. 1..8, or a single value")
    sweep.add_argument("--format", choices=REPORT_FORMATS, default="table")
    sweep.add_argument("--out")
    sweep.set_defaults(func=cmd_sweep)

    compare = sub.add_parser(
        "compare", help="compare predicted reports against measured bytes (CSV: dp,measured_bytes)"
    )
    compare.add_argument("reports", nargs="+", help="report JSON files from predict/sweep")
    compare.add_argument("--measured", required=True, help="CSV of measured peaks")
    compare.set_defaults(func=cmd_compare)

    validate = sub.add_parser("validate", help="check an IR file; print one diagnostic per line")
    validate.add_argument("ir")
    validate.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
