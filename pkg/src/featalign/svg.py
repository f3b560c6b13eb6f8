"""Minimal self-contained SVG charts with byte-stable output."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(x: float) -> str:
    return f"{x:.2f}"


def _header(width: int, height: int, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def bar_chart(title: str, groups: Sequence[str], series: Sequence[tuple[str, Sequence[float]]],
              y_label: str = "accuracy") -> str:
    """Grouped bars; each series gives one value in [0, 1] per group."""
    left, top, plot_h, group_w = 60, 40, 240, max(60, 18 * max(1, len(series)) + 20)
    width = left + group_w * max(1, len(groups)) + 160
    height = top + plot_h + 90
    out = _header(width, height, title)
    base = top + plot_h
    for k in range(6):
        v = k / 5
        y = base - v * plot_h
        out.append(f'<line x1="{left}" y1="{_num(y)}" x2="{left + group_w * len(groups)}" y2="{_num(y)}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{_num(y + 4)}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<text x="14" y="{top + plot_h / 2:.0f}" transform="rotate(-90 14 {top + plot_h / 2:.0f})" '
               f'text-anchor="middle">{escape(y_label)}</text>')
    bar_w = (group_w - 20) / max(1, len(series))
    for g, name in enumerate(groups):
        x0 = left + g * group_w + 10
        for s, (_, values) in enumerate(series):
            v = min(max(float(values[g]), 0.0), 1.0)
            h = v * plot_h
            out.append(f'<rect x="{_num(x0 + s * bar_w)}" y="{_num(base - h)}" width="{_num(bar_w - 2)}" '
                       f'height="{_num(h)}" fill="{PALETTE[s % len(PALETTE)]}"/>')
        cx = left + g * group_w + group_w / 2
        out.append(f'<text x="{_num(cx)}" y="{base + 14}" text-anchor="end" '
                   f'transform="rotate(-35 {_num(cx)} {base + 14})">{escape(name)}</text>')
    out.append(f'<line x1="{left}" y1="{base}" x2="{left + group_w * len(groups)}" y2="{base}" stroke="black"/>')
    lx = left + group_w * len(groups) + 15
    for s, (label, _) in enumerate(series):
        y = top + 14 * s
        out.append(f'<rect x="{lx}" y="{y}" width="10" height="10" fill="{PALETTE[s % len(PALETTE)]}"/>')
        out.append(f'<text x="{lx + 14}" y="{y + 9}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def roc_chart(title: str, curves: Sequence[tuple[str, Sequence[tuple[float, float]]]]) -> str:
    """ROC curves given as (label, [(fpr, tpr), ...]) in plotting order."""
    left, top, size = 60, 40, 300
    width, height = left + size + 220, top + size + 50
    out = _header(width, height, title)
    base = top + size
    out.append(f'<rect x="{left}" y="{top}" width="{size}" height="{size}" fill="none" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{base}" x2="{left + size}" y2="{top}" stroke="#bbb" stroke-dasharray="4 3"/>')
    for k in range(6):
        v = k / 5
        out.append(f'<text x="{_num(left + v * size)}" y="{base + 14}" text-anchor="middle">{v:.1f}</text>')
        out.append(f'<text x="{left - 6}" y="{_num(base - v * size + 4)}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<text x="{left + size / 2:.0f}" y="{base + 32}" text-anchor="middle">false positive rate</text>')
    out.append(f'<text x="16" y="{top + size / 2:.0f}" transform="rotate(-90 16 {top + size / 2:.0f})" '
               f'text-anchor="middle">true positive rate</text>')
    for i, (label, pts) in enumerate(curves):
        coords = " ".join(f"{_num(left + f * size)},{_num(base - t * size)}" for f, t in pts)
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        y = top + 14 * i
        out.append(f'<rect x="{left + size + 15}" y="{y}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{left + size + 29}" y="{y + 9}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
