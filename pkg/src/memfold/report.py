"""Whole-model aggregation: the peak prediction, sharding sweeps, and rendering.

The headline number is the plain double sum of the four per-layer factors
over every layer of every module; headroom and a fixed runtime baseline are
applied on top as ``m_peak_adjusted``. No liveness correction is applied to
the static sum — the allocation oracle exists to quantify that gap. All
arithmetic is in whole bytes with Python's unbounded integers, so totals
cannot silently wrap.
"""

from __future__ import annotations

import json
import math
import os
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any

from .ir import IRInvariantError, ModelIR, iter_layers, validate_ir
from .factors import FactorBreakdown, predict_layer
from .policy import TrainConfig, config_from_obj, config_to_obj, resolve_plan

REPORT_FORMATS = ("json", "table")


@dataclass(frozen=True)
class FactorTotals:
    m_param: int = 0
    m_opt: int = 0
    m_grad: int = 0
    m_act: int = 0

    def plus(self, fb: FactorBreakdown) -> "FactorTotals":
        return FactorTotals(
            self.m_param + fb.m_param,
            self.m_opt + fb.m_opt,
            self.m_grad + fb.m_grad,
            self.m_act + fb.m_act,
        )

    @property
    def total(self) -> int:
        return self.m_param + self.m_opt + self.m_grad + self.m_act


@dataclass(frozen=True)
class MemoryReport:
    """Per-layer, per-module and whole-model factor bytes plus the peak."""

    ir_name: str
    config: TrainConfig
    per_layer: tuple[FactorBreakdown, ...]
    per_module: dict[str, FactorTotals]
    totals: FactorTotals
    m_peak: int
    m_peak_adjusted: int


def adjusted_peak(m_peak: int, cfg: TrainConfig) -> int:
    # Fraction(str(...)) keeps decimal headroom factors exact (1.15 -> 23/20)
    # so adjustment stays integer-deterministic at any magnitude.
    scaled = Fraction(m_peak) * Fraction(str(cfg.headroom_factor))
    return math.ceil(scaled) + cfg.runtime_baseline_bytes


def predict_peak(ir: ModelIR, cfg: TrainConfig) -> MemoryReport:
    """Predict peak training memory for one model under one configuration.

    Deterministic, pure. Raises IRInvariantError if the IR does not validate
    and ConfigMismatchError if the config references unknown modules.
    """
    diags = validate_ir(ir)
    if diags:
        raise IRInvariantError(diags)
    plan = resolve_plan(ir, cfg)
    per_layer: list[FactorBreakdown] = []
    per_module: dict[str, FactorTotals] = {m.name: FactorTotals() for m in ir.modules}
    totals = FactorTotals()
    for (path, module, layer), entry in zip(iter_layers(ir), plan.entries):
        fb = predict_layer(layer, entry, cfg)
        per_layer.append(fb)
        per_module[module.name] = per_module[module.name].plus(fb)
        totals = totals.plus(fb)
    m_peak = totals.total
    return MemoryReport(
        ir_name=ir.name,
        config=cfg,
        per_layer=tuple(per_layer),
        per_module=per_module,
        totals=totals,
        m_peak=m_peak,
        m_peak_adjusted=adjusted_peak(m_peak, cfg),
    )


def sweep_dp(
    ir: ModelIR, cfg: TrainConfig, dp_values: list[int]
) -> list[tuple[int, MemoryReport]]:
    """One prediction per data-parallel degree, preserving input order."""
    if not dp_values:
        raise ValueError("dp_values must be non-empty")
    return [(dp, predict_peak(ir, replace(cfg, dp_degree=dp))) for dp in dp_values]


def mape(predicted: list[int], measured: list[int]) -> float:
    """Mean absolute percentage error of predictions against measurements."""
    if len(predicted) != len(measured) or not predicted:
        raise ValueError(
            f"need equal non-empty lists, got {len(predicted)} predictions "
            f"and {len(measured)} measurements"
        )
    if any(m <= 0 for m in measured):
        raise ValueError("measured values must be positive")
    return 100.0 * sum(abs(p - m) / m for p, m in zip(predicted, measured)) / len(measured)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _totals_obj(t: FactorTotals) -> dict[str, int]:
    return {"m_param": t.m_param, "m_opt": t.m_opt, "m_grad": t.m_grad, "m_act": t.m_act}


def report_to_obj(report: MemoryReport) -> dict[str, Any]:
    return {
        "ir_name": report.ir_name,
        "config": config_to_obj(report.config),
        "totals": _totals_obj(report.totals),
        "m_peak": report.m_peak,
        "m_peak_adjusted": report.m_peak_adjusted,
        "per_module": {name: _totals_obj(t) for name, t in report.per_module.items()},
        "per_layer": [
            {
                "path": fb.layer_path,
                "m_param": fb.m_param,
                "m_opt": fb.m_opt,
                "m_grad": fb.m_grad,
                "m_act": fb.m_act,
            }
            for fb in report.per_layer
        ],
    }


def report_from_obj(obj: dict[str, Any]) -> MemoryReport:
    def totals(o) -> FactorTotals:
        return FactorTotals(o["m_param"], o["m_opt"], o["m_grad"], o["m_act"])

    return MemoryReport(
        ir_name=obj["ir_name"],
        config=config_from_obj(obj["config"]),
        per_layer=tuple(
            FactorBreakdown(o["path"], o["m_param"], o["m_opt"], o["m_grad"], o["m_act"])
            for o in obj["per_layer"]
        ),
        per_module={name: totals(o) for name, o in obj["per_module"].items()},
        totals=totals(obj["totals"]),
        m_peak=obj["m_peak"],
        m_peak_adjusted=obj["m_peak_adjusted"],
    )


def parse_report(text: str) -> MemoryReport:
    return report_from_obj(json.loads(text))


_MIB = 2**20
_GIB = 2**30


def _styling_enabled() -> bool:
    if os.environ.get("MEMFOLD_COLOR", "") == "0":
        return False
    return sys.stdout.isatty()


def _render_table(report: MemoryReport) -> str:
    cfg = report.config
    header = [
        f"model: {report.ir_name}",
        "config: precision={} optimizer={} zero_stage={} dp={} mbs={} "
        "text_tokens={} image_patch_tokens={} frozen={}".format(
            cfg.precision.value,
            cfg.optimizer.value,
            cfg.zero_stage,
            cfg.dp_degree,
            cfg.micro_batch_size,
            cfg.text_token_count,
            cfg.image_patch_token_count,
            sorted(cfg.frozen_modules),
        ),
    ]
    columns = ["module", "param MiB", "opt MiB", "grad MiB", "act MiB", "total MiB", "total GiB"]

    def row(name: str, t: FactorTotals) -> list[str]:
        return [
            name,
            f"{t.m_param / _MIB:.2f}",
            f"{t.m_opt / _MIB:.2f}",
            f"{t.m_grad / _MIB:.2f}",
            f"{t.m_act / _MIB:.2f}",
            f"{t.total / _MIB:.2f}",
            f"{t.total / _GIB:.2f}",
        ]

    rows = [row(name, t) for name, t in report.per_module.items()]
    rows.append(row("TOTAL", report.totals))
    widths = [max(len(columns[c]), *(len(r[c]) for r in rows)) for c in range(len(columns))]

    def fmt(cells: list[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = "  ".join(c.rjust(w) for c, w in zip(cells[1:], widths[1:]))
        return f"{first}  {rest}"

    bold = _styling_enabled()
    head = fmt(columns)
    lines = header + ["", f"\x1b[1m{head}\x1b[0m" if bold else head, "-" * len(head)]
    lines += [fmt(r) for r in rows]
    lines += [
        "",
        f"m_peak:          {report.m_peak} B = {report.m_peak / _GIB:.2f} GiB",
        "m_peak_adjusted: {} B = {:.2f} GiB (headroom_factor={}, baseline={} B)".format(
            report.m_peak_adjusted,
            report.m_peak_adjusted / _GIB,
            cfg.headroom_factor,
            cfg.runtime_baseline_bytes,
        ),
    ]
    return "\n".join(lines)


def render_report(report: MemoryReport, format: str = "table") -> str:
    """Render a report as deterministic JSON or a human-readable table.

    JSON output has a stable key order, byte values as plain integers, and no
    timestamps, so identical inputs render byte-identically.
    """
    if format == "json":
        return json.dumps(report_to_obj(report), indent=2)
    if format == "table":
        return _render_table(report)
    raise ValueError(f"unknown report format {format!r} (expected one of {REPORT_FORMATS})")
