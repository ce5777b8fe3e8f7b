"""Dependency-free SVG line charts with error bars.

Renders the two report styles the CLI exposes: paired accuracy curves
versus a swept axis, and a delta curve with a zero reference line. Output
is deterministic text, suitable for diffing in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError, ParseError
from .harness import read_csv_rows

WIDTH, HEIGHT = 840, 520
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 72, 28, 44, 64

COLOR_FINE = "#2a9d4b"
COLOR_COARSE = "#1f77b4"
COLOR_DELTA = "#b2332e"
MARKERS = ("circle", "square", "diamond")


@dataclass
class Series:
    name: str
    color: str
    # (x, y, spread_low, spread_high) per point
    points: list[tuple[float, float, float, float]]


@dataclass
class PlotSpec:
    title: str
    x_label: str
    y_label: str
    series: list[Series]
    x_scale: str = "linear"  # or "log2"
    zero_line: bool = False

    def validate(self):
        if self.x_scale not in ("linear", "log2"):
            raise ConfigError(f"x_scale must be 'linear' or 'log2', got {self.x_scale!r}")
        for s in self.series:
            for x, y, lo, hi in s.points:
                if not all(math.isfinite(v) for v in (x, y, lo, hi)):
                    raise ConfigError(f"series {s.name!r} has a non-finite point")
                if not lo <= y <= hi:
                    raise ConfigError(f"series {s.name!r}: spread [{lo}, {hi}] does not bracket {y}")
            if self.x_scale == "log2" and any(p[0] <= 0 for p in s.points):
                raise ConfigError("log2 x-axis needs strictly positive x values")


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_svg(spec: PlotSpec) -> str:
    spec.validate()
    xs, ys = [], []
    for s in spec.series:
        for x, y, lo, hi in s.points:
            xs.append(x)
            ys.extend((y, lo, hi))
    if spec.zero_line:
        ys.append(0.0)

    if spec.x_scale == "log2":
        to_x = lambda v: math.log2(v)
    else:
        to_x = lambda v: v
    x_lo = min((to_x(v) for v in xs), default=0.0)
    x_hi = max((to_x(v) for v in xs), default=1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo) or 0.05
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(v: float) -> float:
        return MARGIN_LEFT + (to_x(v) - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return MARGIN_TOP + (y_hi - v) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{spec.title}</text>',
    ]

    # axes frame
    out.append(
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444" stroke-width="1"/>'
    )

    if spec.x_scale == "log2":
        lo_e, hi_e = math.floor(x_lo), math.ceil(x_hi)
        x_ticks = [(2.0 ** e, f"{2 ** e:g}") for e in range(int(lo_e), int(hi_e) + 1)]
    else:
        x_ticks = [(t, _fmt(t)) for t in _nice_ticks(x_lo, x_hi)]
    for value, label in x_ticks:
        x = px(value) if spec.x_scale != "log2" else MARGIN_LEFT + (math.log2(value) - x_lo) / (x_hi - x_lo) * plot_w
        if x < MARGIN_LEFT - 1 or x > WIDTH - MARGIN_RIGHT + 1:
            continue
        y0 = MARGIN_TOP + plot_h
        out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(y0)}" x2="{_fmt(x)}" y2="{_fmt(y0 + 5)}" stroke="#444"/>')
        out.append(f'<text x="{_fmt(x)}" y="{_fmt(y0 + 20)}" text-anchor="middle">{label}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        out.append(f'<line x1="{MARGIN_LEFT - 5}" y1="{_fmt(y)}" x2="{MARGIN_LEFT}" y2="{_fmt(y)}" stroke="#444"/>')
        out.append(f'<text x="{MARGIN_LEFT - 9}" y="{_fmt(y + 4)}" text-anchor="end">{_fmt(t)}</text>')

    out.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2}" y="{HEIGHT - 14}" text-anchor="middle">{spec.x_label}</text>'
    )
    out.append(
        f'<text x="20" y="{MARGIN_TOP + plot_h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 20 {MARGIN_TOP + plot_h / 2})">{spec.y_label}</text>'
    )

    if spec.zero_line and y_lo < 0.0 < y_hi:
        y = py(0.0)
        out.append(
            f'<line class="zero-line" x1="{MARGIN_LEFT}" y1="{_fmt(y)}" '
            f'x2="{MARGIN_LEFT + plot_w}" y2="{_fmt(y)}" stroke="#888" stroke-dasharray="6 4"/>'
        )

    for index, s in enumerate(spec.series):
        marker = MARKERS[index % len(MARKERS)]
        pts = sorted(s.points)
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y, _, _ in pts)
        if len(pts) > 1:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{s.color}" stroke-width="2"/>')
        for x, y, lo, hi in pts:
            cx, cy = px(x), py(y)
            if hi > lo:
                out.append(
                    f'<line x1="{_fmt(cx)}" y1="{_fmt(py(lo))}" x2="{_fmt(cx)}" y2="{_fmt(py(hi))}" '
                    f'stroke="{s.color}" stroke-width="1.5"/>'
                )
                for bound in (lo, hi):
                    by = py(bound)
                    out.append(
                        f'<line x1="{_fmt(cx - 4)}" y1="{_fmt(by)}" x2="{_fmt(cx + 4)}" y2="{_fmt(by)}" '
                        f'stroke="{s.color}" stroke-width="1.5"/>'
                    )
            out.append(_marker_svg(marker, cx, cy, s.color))

    # legend, top right inside the frame
    lx = WIDTH - MARGIN_RIGHT - 190
    ly = MARGIN_TOP + 10
    for index, s in enumerate(spec.series):
        y = ly + 20 * index
        out.append(_marker_svg(MARKERS[index % len(MARKERS)], lx, y, s.color))
        out.append(f'<text x="{lx + 12}" y="{_fmt(y + 4)}">{s.name}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"


def _marker_svg(marker: str, cx: float, cy: float, color: str) -> str:
    if marker == "circle":
        return f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="3.5" fill="{color}"/>'
    if marker == "square":
        return f'<rect x="{_fmt(cx - 3)}" y="{_fmt(cy - 3)}" width="6" height="6" fill="{color}"/>'
    pts = f"{_fmt(cx)},{_fmt(cy - 4)} {_fmt(cx + 4)},{_fmt(cy)} {_fmt(cx)},{_fmt(cy + 4)} {_fmt(cx - 4)},{_fmt(cy)}"
    return f'<polygon points="{pts}" fill="{color}"/>'


def _series_from_rows(rows, x_key, y_key, lo_key, hi_key, name, color) -> Series:
    pts = [(r[x_key], r[y_key], r[lo_key], r[hi_key]) for r in rows]
    return Series(name=name, color=color, points=pts)


def plot_spec_from_csv(csv_path: str | Path, style: str) -> PlotSpec:
    """Build the plot for one sweep CSV. Styles: accuracy_vs_size (both
    accuracy series, log2 x) and delta_vs_axis (delta with zero line)."""
    rows = read_csv_rows(Path(csv_path))
    for required in ("axis_value", "acc_fine", "acc_coarse", "delta"):
        if rows and required not in rows[0]:
            raise ParseError(f"{csv_path}: missing column {required!r}")
    if style == "accuracy_vs_size":
        series = [
            _series_from_rows(rows, "axis_value", "acc_fine", "acc_fine_low", "acc_fine_high",
                              "fine-trained", COLOR_FINE),
            _series_from_rows(rows, "axis_value", "acc_coarse", "acc_coarse_low", "acc_coarse_high",
                              "coarse-trained", COLOR_COARSE),
        ]
        return PlotSpec(
            title="Coarse-task test accuracy",
            x_label="training set size",
            y_label="accuracy",
            series=series,
            x_scale="log2",
        )
    if style == "delta_vs_axis":
        xs = [r["axis_value"] for r in rows]
        log_x = bool(xs) and min(xs) > 0 and max(xs) / min(xs) >= 8
        series = [
            _series_from_rows(rows, "axis_value", "delta", "spread_low", "spread_high",
                              "fine minus coarse", COLOR_DELTA)
        ]
        return PlotSpec(
            title="Accuracy difference (fine minus coarse)",
            x_label="axis value",
            y_label="delta accuracy",
            series=series,
            x_scale="log2" if log_x else "linear",
            zero_line=True,
        )
    raise ConfigError(f"unknown plot style {style!r}")


def write_plot(csv_path: str | Path, style: str, out_path: str | Path) -> Path:
    svg = render_svg(plot_spec_from_csv(csv_path, style))
    out = Path(out_path)
    out.write_text(svg)
    return out
