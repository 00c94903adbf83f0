"""Radius-vs-wind line charts as plain SVG."""
from __future__ import annotations

from html import escape

import numpy as np

COLORS = ("#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#8c564b", "#17becf")
OVERLAY_COLOR = "#d4a017"
WIDTH, HEIGHT = 760, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 40, 60


def _nice_max(v: float, step: float) -> float:
    return max(step, step * np.ceil(v / step))


def profile_chart(
    title: str,
    series: list[tuple[str, np.ndarray, np.ndarray]],
    overlay: tuple[str, np.ndarray, np.ndarray] | None = None,
) -> str:
    """One chart. ``series`` holds (name, radii_km, wind_kt) lines drawn as given.

    The optional ``overlay`` (e.g. scatterometer winds) is drawn with point
    markers at its own radii.
    """
    if not series and overlay is None:
        raise ValueError("nothing to plot")
    for name, r, v in series:
        if len(r) != len(v):
            raise ValueError(f"series {name!r}: {len(r)} radii for {len(v)} values")
    all_r = [np.asarray(r) for _, r, _ in series] + ([np.asarray(overlay[1])] if overlay else [])
    all_v = [np.asarray(v) for _, _, v in series] + ([np.asarray(overlay[2])] if overlay else [])
    x_max = _nice_max(float(max(r.max() for r in all_r)), 100.0)
    y_max = _nice_max(float(max(v.max() for v in all_v)), 20.0)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(r):
        return LEFT + np.asarray(r, dtype=float) / x_max * pw

    def py(v):
        return TOP + ph - np.asarray(v, dtype=float) / y_max * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{LEFT + pw / 2:.1f}" y="24" text-anchor="middle" font-size="16" font-family="sans-serif">{escape(title)}</text>',
        '<g class="axes" stroke="#333" stroke-width="1">',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/>',
        "</g>",
        '<g class="ticks" font-size="11" font-family="sans-serif" fill="#333">',
    ]
    for t in np.arange(0.0, x_max + 1e-9, 100.0):
        out.append(f'<text x="{px(t):.1f}" y="{TOP + ph + 16}" text-anchor="middle">{t:.0f}</text>')
    for t in np.arange(0.0, y_max + 1e-9, 20.0):
        out.append(f'<text x="{LEFT - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.0f}</text>')
    out += [
        "</g>",
        f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle" font-size="13" font-family="sans-serif">radius (km)</text>',
        f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-size="13" font-family="sans-serif" transform="rotate(-90 18 {TOP + ph / 2:.1f})">wind (kt)</text>',
    ]
    legend = []
    for k, (name, r, v) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px(r), py(v)))
        out.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        legend.append((name, color))
    if overlay is not None:
        name, r, v = overlay
        xs, ys = px(r), py(v)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        out.append(f'<g class="overlay" data-name="{escape(name)}">')
        out.append(f'<polyline fill="none" stroke="{OVERLAY_COLOR}" stroke-width="1.5" stroke-dasharray="4 3" points="{pts}"/>')
        out += [f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{OVERLAY_COLOR}"/>' for x, y in zip(xs, ys)]
        out.append("</g>")
        legend.append((name, OVERLAY_COLOR))
    out.append('<g class="legend" font-size="12" font-family="sans-serif">')
    for k, (name, color) in enumerate(legend):
        y = TOP + 10 + 20 * k
        x = LEFT + pw + 16
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 24}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 30}" y="{y + 4}">{escape(name)}</text>')
    out += ["</g>", "</svg>"]
    return "\n".join(out) + "\n"
