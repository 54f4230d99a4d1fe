"""Standalone SVG rendering of the two review graphics.

Hand-rolled on purpose: output must be byte-identical across runs and
platforms, so every float goes through one 6-significant-digit
formatter, elements are emitted in dataset order, and nothing depends on
fonts, scripts, or wall-clock time. One sub-panel per treatment arm with
shared axes; ungrouped (noise) terms draw in brown.
"""

from __future__ import annotations

import math
import os
from typing import Iterable

from .errors import EmptyDataset
from .visuals import EvdPoint, MapPoint, ReviewArtifacts, write_atomic

PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#e377c2",
    "#17becf",
    "#bcbd22",
    "#7f7f7f",
    "#aec7e8",
)
NOISE_COLOR = "#8c564b"

PANEL_W = 320.0
PANEL_H = 300.0
MARGIN = 46.0
GAP = 18.0
TITLE_H = 30.0
LEGEND_ROW_H = 18.0


def fmt(value: float) -> str:
    """Fixed 6-significant-digit float formatting; '-0' normalized."""
    text = format(float(value), ".6g")
    return "0" if text == "-0" else text


def esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )


def color_for(cluster_id: int, is_noise: bool) -> str:
    if is_noise or cluster_id < 0:
        return NOISE_COLOR
    return PALETTE[cluster_id % len(PALETTE)]


def _legend(entries: list[tuple[str, str]], x: float, y: float) -> list[str]:
    parts = [f'<g font-family="sans-serif" font-size="11">']
    for i, (color, label) in enumerate(entries):
        row_y = y + i * LEGEND_ROW_H
        parts.append(
            f'<circle cx="{fmt(x + 6)}" cy="{fmt(row_y)}" r="5" fill="{color}" fill-opacity="0.8"/>'
        )
        parts.append(
            f'<text x="{fmt(x + 18)}" y="{fmt(row_y + 4)}">{esc(label)}</text>'
        )
    parts.append("</g>")
    return parts


def _legend_entries(artifacts: ReviewArtifacts) -> list[tuple[str, str]]:
    seen: dict[int, str] = {}
    for p in artifacts.map_points or artifacts.evd_points:
        if not getattr(p, "is_noise", p.cluster_id < 0) and p.cluster_id not in seen:
            seen[p.cluster_id] = p.cluster_label or f"cluster {p.cluster_id}"
    entries = [
        (color_for(cid, False), f"{cid}: {label}") for cid, label in sorted(seen.items())
    ]
    if artifacts.ungrouped_terms:
        entries.append((NOISE_COLOR, f"ungrouped ({len(artifacts.ungrouped_terms)})"))
    return entries


def _panel_frame(title: str, x0: float, y0: float) -> list[str]:
    return [
        f'<rect x="{fmt(x0)}" y="{fmt(y0)}" width="{fmt(PANEL_W)}" height="{fmt(PANEL_H)}" '
        'fill="white" stroke="#444444" stroke-width="1"/>',
        f'<text x="{fmt(x0 + PANEL_W / 2)}" y="{fmt(y0 - 8)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{esc(title)}</text>',
    ]


def _svg_document(width: float, height: float, body: Iterable[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fmt(width)}" height="{fmt(height)}" '
        f'viewBox="0 0 {fmt(width)} {fmt(height)}">\n'
        '<rect width="100%" height="100%" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _linear(value: float, lo: float, hi: float, out_lo: float, out_hi: float) -> float:
    return out_lo + (value - lo) / (hi - lo) * (out_hi - out_lo)


def render_map_svg(artifacts: ReviewArtifacts, hide_zero_incidence: bool = False) -> str:
    points = [
        p
        for p in artifacts.map_points
        if not (hide_zero_incidence and p.incidence == 0)
    ]
    if not points:
        raise EmptyDataset("no map points to render")

    arms = [a for a in artifacts.arms]
    body: list[str] = []
    lo, hi = -1.08, 1.08
    for idx, arm in enumerate(arms):
        x0 = MARGIN + idx * (PANEL_W + GAP)
        y0 = TITLE_H + 14
        body.extend(_panel_frame(arm.arm_title, x0, y0))
        # axis ticks at -1, 0, 1
        for tick in (-1.0, 0.0, 1.0):
            tx = _linear(tick, lo, hi, x0, x0 + PANEL_W)
            ty = _linear(tick, lo, hi, y0 + PANEL_H, y0)
            body.append(
                f'<text x="{fmt(tx)}" y="{fmt(y0 + PANEL_H + 14)}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10" fill="#555555">{fmt(tick)}</text>'
            )
            if idx == 0:
                body.append(
                    f'<text x="{fmt(x0 - 8)}" y="{fmt(ty + 3)}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="10" fill="#555555">{fmt(tick)}</text>'
                )
        for p in points:
            if p.arm_id != arm.arm_id:
                continue
            cx = _linear(p.x, lo, hi, x0, x0 + PANEL_W)
            cy = _linear(p.y, lo, hi, y0 + PANEL_H, y0)
            color = color_for(p.cluster_id, p.is_noise)
            body.append(
                f'<circle cx="{fmt(cx)}" cy="{fmt(cy)}" r="{fmt(p.radius)}" fill="{color}" '
                f'fill-opacity="0.7" stroke="{color}" stroke-width="0.5">'
                f"<title>{esc(p.pt_name)} ({fmt(100 * p.incidence)}%)</title></circle>"
            )

    legend = _legend_entries(artifacts)
    legend_y = TITLE_H + 14 + PANEL_H + 40
    body.extend(_legend(legend, MARGIN, legend_y))
    width = MARGIN * 2 + len(arms) * PANEL_W + (len(arms) - 1) * GAP
    height = legend_y + len(legend) * LEGEND_ROW_H + 16
    title = f"Semantic map — {artifacts.study_id}"
    body.insert(
        0,
        f'<text x="{fmt(MARGIN)}" y="{fmt(TITLE_H - 8)}" font-family="sans-serif" '
        f'font-size="15" font-weight="bold">{esc(title)}</text>',
    )
    return _svg_document(width, height, body)


def _log_ticks(lo: float, hi: float) -> list[float]:
    candidates = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
    return [t for t in candidates if lo <= t <= hi]


def render_evd_svg(artifacts: ReviewArtifacts) -> str:
    points = list(artifacts.evd_points)
    if not points:
        raise EmptyDataset("no EVD points to render")

    y_values = [p.ebgm for p in points]
    y_lo = min(min(y_values) / 1.4, 0.7)
    y_hi = max(max(y_values) * 1.4, 1.4)
    log_lo, log_hi = math.log10(y_lo), math.log10(y_hi)
    x_lo, x_hi = -1.08, 1.08

    arms = [a for a in artifacts.arms]
    body: list[str] = []
    for idx, arm in enumerate(arms):
        x0 = MARGIN + idx * (PANEL_W + GAP)
        y0 = TITLE_H + 14
        body.extend(_panel_frame(arm.arm_title, x0, y0))
        ref_y = _linear(0.0, log_lo, log_hi, y0 + PANEL_H, y0)
        body.append(
            f'<line x1="{fmt(x0)}" y1="{fmt(ref_y)}" x2="{fmt(x0 + PANEL_W)}" y2="{fmt(ref_y)}" '
            'stroke="#888888" stroke-width="1" stroke-dasharray="4 3"/>'
        )
        for tick in (-1.0, 0.0, 1.0):
            tx = _linear(tick, x_lo, x_hi, x0, x0 + PANEL_W)
            body.append(
                f'<text x="{fmt(tx)}" y="{fmt(y0 + PANEL_H + 14)}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10" fill="#555555">{fmt(tick)}</text>'
            )
        if idx == 0:
            for tick in _log_ticks(y_lo, y_hi):
                ty = _linear(math.log10(tick), log_lo, log_hi, y0 + PANEL_H, y0)
                body.append(
                    f'<text x="{fmt(x0 - 8)}" y="{fmt(ty + 3)}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="10" fill="#555555">{fmt(tick)}</text>'
                )
        for p in points:
            if p.arm_id != arm.arm_id:
                continue
            cx = _linear(p.expectedness, x_lo, x_hi, x0, x0 + PANEL_W)
            cy = _linear(math.log10(p.ebgm), log_lo, log_hi, y0 + PANEL_H, y0)
            color = color_for(p.cluster_id, p.cluster_id < 0)
            radius = 3.0 + 9.0 * math.sqrt(p.incidence)
            body.append(
                f'<circle cx="{fmt(cx)}" cy="{fmt(cy)}" r="{fmt(radius)}" fill="{color}" '
                f'fill-opacity="0.7" stroke="{color}" stroke-width="0.5">'
                f"<title>{esc(p.pt_name)} EBGM {fmt(p.ebgm)}</title></circle>"
            )

    legend = _legend_entries(artifacts)
    legend_y = TITLE_H + 14 + PANEL_H + 40
    body.extend(_legend(legend, MARGIN, legend_y))
    width = MARGIN * 2 + len(arms) * PANEL_W + (len(arms) - 1) * GAP
    height = legend_y + len(legend) * LEGEND_ROW_H + 16
    title = f"Expectedness vs disproportionality — {artifacts.study_id}"
    body.insert(
        0,
        f'<text x="{fmt(MARGIN)}" y="{fmt(TITLE_H - 8)}" font-family="sans-serif" '
        f'font-size="15" font-weight="bold">{esc(title)}</text>',
    )
    return _svg_document(width, height, body)


def render_svg(artifacts: ReviewArtifacts, kind: str, out: str | os.PathLike) -> None:
    """Render one plot kind ('map' or 'evd') to a standalone SVG file."""
    if kind == "map":
        hide = bool(artifacts.config_snapshot.get("visuals.hide_zero_incidence", False))
        text = render_map_svg(artifacts, hide_zero_incidence=hide)
    elif kind == "evd":
        text = render_evd_svg(artifacts)
    else:
        raise ValueError(f"unknown plot kind: {kind!r}")
    write_atomic(out, text.encode())
