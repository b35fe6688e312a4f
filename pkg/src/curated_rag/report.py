"""Report emission: canonical JSON, CSV, and a static SVG chart.

The JSON form is hand-rendered with a fixed key order and rates pinned to four
decimals so that regenerating a report from the same run is byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
from html import escape
from pathlib import Path

from .bench import BenchmarkRun, MetricsReport
from .dataset import Category
from .utils import atomic_write_text

REPORT_FORMATS = ("json", "csv", "svg_chart")


def _fmt_rate(rate: float | None) -> str:
    return "null" if rate is None else f"{rate:.4f}"


def render_report_json(report: MetricsReport, run: BenchmarkRun) -> str:
    model_id = run.pipeline_config["backend"]["model_id"]
    mode = run.pipeline_config["mode"]
    lines = [
        "{",
        f'  "run_id": {json.dumps(run.run_id)},',
        f'  "model_id": {json.dumps(model_id)},',
        f'  "mode": {json.dumps(mode)},',
        '  "overall": {',
        f'    "rate": {_fmt_rate(report.overall_disagreement)},',
        f'    "judged": {report.judged_count},',
        f'    "unjudgeable": {report.unjudgeable_count},',
        f'    "errors": {report.pipeline_error_count}',
        "  },",
        '  "per_category": [',
    ]
    rows = []
    for cat in Category:
        entry = report.per_category[cat]
        rows.append(
            "    {"
            + f'"category": {json.dumps(cat.value)}, "rate": {_fmt_rate(entry.rate)}, "n": {entry.n}'
            + "}"
        )
    lines.append(",\n".join(rows))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_report_csv(report: MetricsReport, run: BenchmarkRun) -> str:
    model_id = run.pipeline_config["backend"]["model_id"]
    mode = run.pipeline_config["mode"]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["category", "model_id", "mode", "rate", "n"])
    for cat in Category:
        entry = report.per_category[cat]
        rate = "" if entry.rate is None else f"{entry.rate:.4f}"
        writer.writerow([cat.value, model_id, mode, rate, entry.n])
    overall = "" if report.overall_disagreement is None else f"{report.overall_disagreement:.4f}"
    writer.writerow(["overall", model_id, mode, overall, report.judged_count])
    return buffer.getvalue()


_CHART_WIDTH = 900
_BAR_HEIGHT = 22
_ROW_GAP = 14
_LABEL_WIDTH = 230
_TOP = 56


def render_category_chart(report: MetricsReport, run: BenchmarkRun) -> str:
    """Horizontal bar chart of disagreement by category, one labeled group each."""
    model_id = escape(run.pipeline_config["backend"]["model_id"])
    scale_width = _CHART_WIDTH - _LABEL_WIDTH - 80
    height = _TOP + len(Category) * (_BAR_HEIGHT + _ROW_GAP) + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CHART_WIDTH}" height="{height}" '
        f'font-family="sans-serif" font-size="13">',
        f'<text x="16" y="24" font-size="16">Factual disagreement by category ({model_id}, '
        f'{escape(run.pipeline_config["mode"])})</text>',
        f'<text x="16" y="42" fill="#555">judged={report.judged_count} '
        f"unjudgeable={report.unjudgeable_count} errors={report.pipeline_error_count}</text>",
    ]
    for i, cat in enumerate(Category):
        entry = report.per_category[cat]
        y = _TOP + i * (_BAR_HEIGHT + _ROW_GAP)
        parts.append(f'<g class="category-group" data-category="{cat.value}">')
        parts.append(
            f'<text x="{_LABEL_WIDTH - 8}" y="{y + _BAR_HEIGHT - 6}" text-anchor="end">{cat.value}</text>'
        )
        if entry.rate is None:
            parts.append(
                f'<text x="{_LABEL_WIDTH + 6}" y="{y + _BAR_HEIGHT - 6}" fill="#777">n/a (n=0)</text>'
            )
        else:
            bar = max(1, round(entry.rate * scale_width))
            parts.append(
                f'<rect x="{_LABEL_WIDTH}" y="{y}" width="{bar}" height="{_BAR_HEIGHT}" fill="#4878a8"/>'
            )
            parts.append(
                f'<text x="{_LABEL_WIDTH + bar + 6}" y="{y + _BAR_HEIGHT - 6}">'
                f"{entry.rate:.4f} (n={entry.n})</text>"
            )
        parts.append("</g>")
    axis_y = _TOP + len(Category) * (_BAR_HEIGHT + _ROW_GAP) + 6
    parts.append(
        f'<line x1="{_LABEL_WIDTH}" y1="{axis_y}" x2="{_LABEL_WIDTH + scale_width}" y2="{axis_y}" '
        f'stroke="#999"/>'
    )
    parts.append(f'<text x="{_LABEL_WIDTH}" y="{axis_y + 16}" fill="#555">0.0</text>')
    parts.append(
        f'<text x="{_LABEL_WIDTH + scale_width}" y="{axis_y + 16}" text-anchor="end" fill="#555">1.0</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(
    report: MetricsReport,
    run: BenchmarkRun,
    formats: set[str] | list[str] | tuple[str, ...],
    out_dir: str | Path,
) -> dict[str, Path]:
    """Write the requested report files; returns format -> path."""
    out_dir = Path(out_dir)
    unknown = set(formats) - set(REPORT_FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats: {sorted(unknown)} (have {REPORT_FORMATS})")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValueError(f"cannot create report directory {out_dir}: {exc}") from exc
    paths: dict[str, Path] = {}
    if "json" in formats:
        paths["json"] = out_dir / "report.json"
        atomic_write_text(paths["json"], render_report_json(report, run))
    if "csv" in formats:
        paths["csv"] = out_dir / "report.csv"
        atomic_write_text(paths["csv"], render_report_csv(report, run))
    if "svg_chart" in formats:
        paths["svg_chart"] = out_dir / "report_chart.svg"
        atomic_write_text(paths["svg_chart"], render_category_chart(report, run))
    return paths
