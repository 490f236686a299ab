"""Minimal, byte-deterministic SVG plots of singular-value spectra."""

from __future__ import annotations

import math

import numpy as np

from .spectral import SpectralReport

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50
COLORS = {"F": "#1f77b4", "GN": "#d62728", "F+GN": "#2ca02c"}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _axes(title: str, xlabel: str, ylabel: str) -> list[str]:
    x0, y0, x1, y1 = LEFT, H - BOTTOM, W - RIGHT, TOP
    return [
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="#000"/>',
        f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {H / 2})">{ylabel}</text>',
    ]


class _LogLog:
    def __init__(self, xmax: float, ymin: float, ymax: float):
        self.lx = (0.0, math.log10(max(xmax, 10.0)))
        self.ly = (math.log10(ymin), math.log10(ymax))
        if self.ly[1] - self.ly[0] < 1e-9:
            self.ly = (self.ly[0] - 1, self.ly[1] + 1)

    def x(self, v):
        return LEFT + (math.log10(v) - self.lx[0]) / (self.lx[1] - self.lx[0]) * (W - LEFT - RIGHT)

    def y(self, v):
        return H - BOTTOM - (math.log10(v) - self.ly[0]) / (self.ly[1] - self.ly[0]) * (H - TOP - BOTTOM)


def spectrum_svg(report: SpectralReport) -> str:
    """Log-log singular values of F, GN, F+GN with MP edges and threshold lines."""
    curves = {"F": report.sigma_base, "GN": report.sigma_noise, "F+GN": report.sigma_noisy}
    positive = np.concatenate([c[c > 0] for c in curves.values()] + [np.array([1.0])])
    refs = [v for v in (report.mp_lower, report.mp_upper, report.tau_star) if v > 0]
    lo = float(min(positive.min(), *refs)) if refs else float(positive.min())
    hi = float(max(positive.max(), *refs)) if refs else float(positive.max())
    ax = _LogLog(len(report.sigma_base), lo / 1.2, hi * 1.2)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">']
    out += _axes(f"Singular values (m={report.m}, n={report.n}, alpha={report.alpha:g})", "index", "singular value")
    for i, (name, vals) in enumerate(curves.items()):
        pts = " ".join(f"{_fmt(ax.x(j + 1))},{_fmt(ax.y(v))}" for j, v in enumerate(vals) if v > 0)
        if pts:
            out.append(f'<polyline fill="none" stroke="{COLORS[name]}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{W - RIGHT - 80}" y="{TOP + 16 + 14 * i}" font-size="11" fill="{COLORS[name]}">{name}</text>')
    for label, v, dash in (("MP lower", report.mp_lower, "4,3"), ("MP upper", report.mp_upper, "4,3"), ("tau*", report.tau_star, "1,3")):
        if v > 0:
            yy = _fmt(ax.y(v))
            out.append(f'<line x1="{LEFT}" y1="{yy}" x2="{W - RIGHT}" y2="{yy}" stroke="#555" stroke-dasharray="{dash}"/>')
            out.append(f'<text x="{LEFT + 4}" y="{yy}" font-size="10" fill="#555">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def overlap_svg(report: SpectralReport) -> str:
    """Per-index overlap ``|<v_i(F), v_i(F+GN)>|`` on a log x-axis."""
    ov = report.overlaps
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">']
    out += _axes(f"Singular-vector overlap (alpha={report.alpha:g})", "index", "|<v_i(F), v_i(F+GN)>|")
    if len(ov):
        lx = math.log10(max(len(ov), 10))

        def px(j):
            return LEFT + math.log10(j + 1) / lx * (W - LEFT - RIGHT)

        def py(v):
            return H - BOTTOM - v * (H - TOP - BOTTOM)

        pts = " ".join(f"{_fmt(px(j))},{_fmt(py(v))}" for j, v in enumerate(ov))
        out.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
