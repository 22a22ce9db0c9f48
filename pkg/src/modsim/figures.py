"""CSV tables and small self-contained SVG line charts from regret reports."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "policy", "mean", "stderr"])
        for r in rows:
            w.writerow([_fmt(r[0]), r[1], _fmt(r[2]), _fmt(r[3])])


def curve_rows(curve):
    for label, (mean, se) in curve.series.items():
        for x, m, s in zip(curve.x, mean, se):
            yield x, label, float(m), float(s)


def line_chart_svg(curve, title: str = "", width: int = 640, height: int = 400) -> str:
    """Polyline per series with min/max axis labels and a legend."""
    ml, mr, mt, mb = 70, 180, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    xs = [float(x) for x in curve.x]
    ys = [float(v) for mean, _ in curve.series.values() for v in mean if math.isfinite(v)]
    if not xs or not ys:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    sx = lambda x: ml + (x - x0) / (x1 - x0) * pw
    sy = lambda y: mt + ph - (y - y0) / (y1 - y0) * ph
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml}" y="18" font-size="13">{escape(title)}</text>',
           f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
           f'<text x="{ml}" y="{mt + ph + 15}">{x0:g}</text>',
           f'<text x="{ml + pw}" y="{mt + ph + 15}" text-anchor="end">{x1:g}</text>',
           f'<text x="{ml - 5}" y="{mt + ph}" text-anchor="end">{y0:.3g}</text>',
           f'<text x="{ml - 5}" y="{mt + 10}" text-anchor="end">{y1:.3g}</text>',
           f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">'
           f'{escape(curve.xlabel)}</text>',
           f'<text x="14" y="{mt + ph / 2:.1f}" transform="rotate(-90 14 {mt + ph / 2:.1f})" '
           f'text-anchor="middle">{escape(curve.ylabel)}</text>']
    if y0 < 0 < y1:
        out.append(f'<line x1="{ml}" y1="{sy(0):.1f}" x2="{ml + pw}" y2="{sy(0):.1f}" '
                   f'stroke="#999" stroke-dasharray="4 3"/>')
    for i, (label, (mean, _)) in enumerate(curve.series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(float(x)):.1f},{sy(float(y)):.1f}"
                       for x, y in zip(curve.x, mean) if math.isfinite(float(y)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 12 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_figures(report, out_dir, names: dict | None = None) -> list[Path]:
    """Write the regret table plus one CSV and SVG per curve; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = names or {}
    paths = []
    table = [(r["x"] if r["x"] is not None else r["w"], r["policy"], r["mean"], r["stderr"])
             for r in report.rows]
    p = out / f"{names.get('table', report.scenario + '_regret')}.csv"
    write_csv(p, table)
    paths.append(p)
    for kind, curve in report.curves.items():
        stem = names.get(kind, f"{report.scenario}_{kind}")
        p = out / f"{stem}.csv"
        write_csv(p, curve_rows(curve))
        s = out / f"{stem}.svg"
        s.write_text(line_chart_svg(curve, f"{report.scenario}: {curve.ylabel} vs {curve.xlabel}"))
        paths += [p, s]
    return paths
