"""Text, CSV, and SVG emitters for flow outcomes and identification reports."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .integrator import FlowOutcome
from .separability import (
    DOUBLED_NONSEPARABLE,
    DOUBLED_SEPARATED,
    SINGLE,
    UNKNOWN,
    IdentificationReport,
)

__all__ = ["flow_csv", "report_text", "report_locations_csv", "report_edges_csv", "report_svg"]


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def flow_csv(outcome: FlowOutcome, dimension: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"x{i + 1}" for i in range(dimension)])
    for t, x in outcome.dense_samples:
        writer.writerow([_fmt(t)] + [_fmt(c) for c in x])
    return buf.getvalue()


def report_text(report: IdentificationReport) -> str:
    lines = []
    lines.append(f"identification report: {report.scenario}")
    lines.append(f"tags: {', '.join(_fmt(t) for t in report.tags)}")
    if report.box:
        box = " x ".join(f"[{_fmt(lo)}, {_fmt(hi)}]" for lo, hi in report.box)
        counts = " x ".join(str(c) for c in report.counts)
        lines.append(f"base grid: {counts} over {box}")
    lines.append(f"completion classes: {report.class_count}")
    lines.append("")
    lines.append("locations by classification:")
    for key in (SINGLE, DOUBLED_SEPARATED, DOUBLED_NONSEPARABLE, UNKNOWN):
        lines.append(f"  {key}: {report.classification_counts.get(key, 0)}")
    lines.append("")
    doubled = [c for c in report.cells if c.classification != SINGLE]
    if doubled:
        lines.append("doubled locations (position | classes | verdict | sheets lo/hi):")
        for cell in doubled:
            pos = ", ".join(_fmt(c) for c in cell.position)
            sheets = ("-" if cell.side_counts is None
                      else f"{cell.side_counts[0]}/{cell.side_counts[1]}")
            lines.append(f"  ({pos}) | {cell.class_count} | {cell.verdict} | {sheets}")
        lines.append("")
    lines.append(f"non-separable pairs: {len(report.edges)}")
    if report.unknown_cells:
        lines.append(f"unknown cells: {len(report.unknown_cells)}")
    lines.append(f"quotient diagnostic: {report.quotient_diagnostic}")
    lines.append("(verdicts are heuristic: separability is probed, not certified)")
    return "\n".join(lines) + "\n"


def report_locations_csv(report: IdentificationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    dim = len(report.cells[0].position) if report.cells else 0
    header = [f"x{i + 1}" for i in range(dim)]
    header += ["classes", "classification", "verdict", "sheets_lo", "sheets_hi"]
    writer.writerow(header)
    for cell in report.cells:
        row = [_fmt(c) for c in cell.position]
        row.append(str(cell.class_count))
        row.append(cell.classification)
        row.append(cell.verdict or "")
        if cell.side_counts is None:
            row += ["", ""]
        else:
            row += [str(cell.side_counts[0]), str(cell.side_counts[1])]
        writer.writerow(row)
    return buf.getvalue()


def report_edges_csv(report: IdentificationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    dim = len(report.edges[0].position) if report.edges else 2
    writer.writerow([f"x{i + 1}" for i in range(dim)] + ["class_a", "class_b"])
    for edge in report.edges:
        writer.writerow([_fmt(c) for c in edge.position] + [str(edge.class_a),
                                                            str(edge.class_b)])
    return buf.getvalue()


_COLORS = {
    SINGLE: "#b0b0b0",
    DOUBLED_SEPARATED: "#3465c0",
    DOUBLED_NONSEPARABLE: "#d02020",
    UNKNOWN: "#e8a820",
}


def report_svg(report: IdentificationReport, width: int = 640) -> str:
    """Static sketch of the doubled loci (2-D scenarios only).

    Locations are dots colored by classification; non-separable pairs carry a
    small vertical tick through the dot.
    """
    cells = [c for c in report.cells if len(c.position) == 2]
    if not cells:
        return ('<svg xmlns="http://www.w3.org/2000/svg" width="320" height="40" '
                'version="1.1"><text x="8" y="24" font-size="14">no 2-D location data'
                "</text></svg>")
    xs = [c.position[0] for c in cells]
    ys = [c.position[1] for c in cells]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    pad = 0.05 * max(x_hi - x_lo, y_hi - y_lo, 1.0)
    x_lo, x_hi = x_lo - pad, x_hi + pad
    y_lo, y_hi = y_lo - pad, y_hi + pad
    scale = (width - 20) / (x_hi - x_lo)
    height = int((y_hi - y_lo) * scale) + 60

    def sx(x: float) -> float:
        return 10 + (x - x_lo) * scale

    def sy(y: float) -> float:
        return 10 + (y_hi - y) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'version="1.1">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    r = max(1.5, scale * 0.018)
    for cell in cells:
        color = _COLORS.get(cell.classification, "#000000")
        cx, cy = sx(cell.position[0]), sy(cell.position[1])
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:.2f}" fill="{color}"/>')
        if cell.classification == DOUBLED_NONSEPARABLE:
            parts.append(
                f'<line x1="{cx:.2f}" y1="{cy - 2.5 * r:.2f}" x2="{cx:.2f}" '
                f'y2="{cy + 2.5 * r:.2f}" stroke="{color}" stroke-width="1"/>')
    legend_y = height - 34
    lx = 12.0
    for key in (SINGLE, DOUBLED_SEPARATED, DOUBLED_NONSEPARABLE, UNKNOWN):
        parts.append(f'<circle cx="{lx:.1f}" cy="{legend_y}" r="4" fill="{_COLORS[key]}"/>')
        parts.append(f'<text x="{lx + 8:.1f}" y="{legend_y + 4}" font-size="11">{key}</text>')
        lx += 24 + 7.2 * len(key)
    parts.append(
        f'<text x="12" y="{height - 12}" font-size="11">{report.scenario}: quotient '
        f"{report.quotient_diagnostic}</text>")
    parts.append("</svg>")
    return "\n".join(parts)
