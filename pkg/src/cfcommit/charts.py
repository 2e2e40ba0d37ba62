"""Self-contained SVG line charts for simulation metrics.

Charts are assembled as plain SVG text so reports carry no plotting
dependency; every emitted document is well-formed XML.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

WIDTH = 760
HEIGHT = 420
MARGIN_LEFT = 64
MARGIN_RIGHT = 16
MARGIN_TOP = 40
MARGIN_BOTTOM = 48

# Metric families emitted by the report command: one chart per family.
METRIC_FAMILIES: dict[str, list[str]] = {
    "volumes": ["applications", "denials", "explanations_issued", "implementations"],
    "resolutions": ["resolved_honored", "resolved_broken", "resolved_void", "expired"],
    "events": ["uce_count", "paradigmatic_count"],
    "honoring": ["honoring_rate_running"],
    "override_cost": ["override_cost_running"],
    "accuracy": ["model_accuracy_vs_ground_truth"],
}


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / count
    return [lo + i * step for i in range(count + 1)]


def line_chart(
    title: str,
    x: list[float],
    series: dict[str, list[float]],
    y_label: str = "",
) -> str:
    """One SVG line chart: shared x axis, one polyline and legend entry per series."""
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    all_y = [v for values in series.values() for v in values] or [0.0]
    y_lo = min(0.0, min(all_y))
    y_hi = max(all_y)
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    x_lo = min(x) if x else 0.0
    x_hi = max(x) if x else 1.0
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    def sx(v: float) -> float:
        return MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v: float) -> float:
        return MARGIN_TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]
    axis_style = 'stroke="#333" stroke-width="1"'
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" '
        f'y2="{MARGIN_TOP + plot_h}" {axis_style}/>'
    )
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP + plot_h}" '
        f'x2="{MARGIN_LEFT + plot_w}" y2="{MARGIN_TOP + plot_h}" {axis_style}/>'
    )
    for tick in _ticks(y_lo, y_hi):
        y = sy(tick)
        parts.append(
            f'<line x1="{MARGIN_LEFT - 4}" y1="{y:.1f}" x2="{MARGIN_LEFT}" y2="{y:.1f}" {axis_style}/>'
        )
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(tick)}</text>'
        )
        parts.append(
            f'<line x1="{MARGIN_LEFT}" y1="{y:.1f}" x2="{MARGIN_LEFT + plot_w}" '
            f'y2="{y:.1f}" stroke="#ddd" stroke-width="0.5"/>'
        )
    for tick in _ticks(x_lo, x_hi):
        xx = sx(tick)
        parts.append(
            f'<line x1="{xx:.1f}" y1="{MARGIN_TOP + plot_h}" x2="{xx:.1f}" '
            f'y2="{MARGIN_TOP + plot_h + 4}" {axis_style}/>'
        )
        parts.append(
            f'<text x="{xx:.1f}" y="{MARGIN_TOP + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(tick)}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">step</text>'
    )
    if y_label:
        parts.append(
            f'<text x="16" y="{MARGIN_TOP + plot_h / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {MARGIN_TOP + plot_h / 2:.1f})">{escape(y_label)}</text>'
        )
    for idx, (name, values) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        points = " ".join(f"{sx(xv):.2f},{sy(yv):.2f}" for xv, yv in zip(x, values))
        if points:
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{points}"/>'
            )
        ly = MARGIN_TOP + 6 + idx * 16
        parts.append(
            f'<rect x="{MARGIN_LEFT + plot_w - 170}" y="{ly - 9}" width="10" height="10" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{MARGIN_LEFT + plot_w - 155}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def charts_for_metrics(rows: list[dict]) -> dict[str, str]:
    """One chart per metric family present in the rows (keyed by family name)."""
    x = [float(row["step"]) for row in rows]
    charts = {}
    for family, columns in METRIC_FAMILIES.items():
        present = [c for c in columns if rows and c in rows[0]]
        if not present and rows:
            continue
        series = {c: [float(row[c]) for row in rows] for c in present}
        charts[family] = line_chart(f"{family} per step", x, series, y_label=family)
    return charts
