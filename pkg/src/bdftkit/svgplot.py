"""Static SVG Bode plots of measured FRF points against fitted models."""
from __future__ import annotations

import math

import numpy as np

from .bdft_model import discrete_frf_values, frf_values

PANEL_W, PANEL_H = 360, 170
MARGIN_L, MARGIN_T, GAP = 60, 40, 40
MODEL_COLORS = {"individual": "#2e9d3a", "average": "#2b5fd9", "truth": "#777777"}
POINT_COLOR = "#d62728"


def _f(x: float) -> str:
    return f"{x:.2f}"


def _model_curve(params, w, sample_rate):
    if sample_rate:
        return discrete_frf_values(params, w, sample_rate)
    return frf_values(params, w)


def _ticks(lo, hi, step):
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


def _panel(x0, y0, w_lo, w_hi, v_lo, v_hi, series, markers, ylabel, ystep):
    """One log-x panel; series are (w, values, color), markers (w, values)."""
    lx_lo, lx_hi = math.log10(w_lo), math.log10(w_hi)

    def px(w):
        return x0 + (math.log10(w) - lx_lo) / (lx_hi - lx_lo) * PANEL_W

    def py(v):
        v = min(max(v, v_lo), v_hi)
        return y0 + (v_hi - v) / (v_hi - v_lo) * PANEL_H

    out = [f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#000"/>']
    for d in range(math.floor(lx_lo), math.ceil(lx_hi) + 1):
        w = 10.0 ** d
        if w_lo <= w <= w_hi:
            out.append(f'<line x1="{_f(px(w))}" y1="{_f(y0)}" x2="{_f(px(w))}" y2="{_f(y0 + PANEL_H)}" stroke="#ddd"/>')
            out.append(f'<text x="{_f(px(w))}" y="{_f(y0 + PANEL_H + 14)}" font-size="10" text-anchor="middle">1e{d}</text>')
    for v in _ticks(v_lo, v_hi, ystep):
        out.append(f'<line x1="{_f(x0)}" y1="{_f(py(v))}" x2="{_f(x0 + PANEL_W)}" y2="{_f(py(v))}" stroke="#eee"/>')
        out.append(f'<text x="{_f(x0 - 4)}" y="{_f(py(v) + 3)}" font-size="10" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="{_f(x0 - 42)}" y="{_f(y0 + PANEL_H / 2)}" font-size="11" '
               f'transform="rotate(-90 {_f(x0 - 42)} {_f(y0 + PANEL_H / 2)})" text-anchor="middle">{ylabel}</text>')
    for w, vals, color in series:
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(w, vals))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    for w, vals in markers:
        for a, b in zip(w, vals):
            out.append(f'<circle cx="{_f(px(a))}" cy="{_f(py(b))}" r="3" fill="none" stroke="{POINT_COLOR}"/>')
    return out


def bode_svg(title: str, columns, sample_rate: float | None = None) -> str:
    """Bode magnitude (dB) and phase (deg) panels, one column per axis.

    `columns` is a list of (label, FrequencyResponse, {model_name: BdftParams}).
    Model curves use the bilinear discretization when `sample_rate` is set.
    """
    ncol = len(columns)
    width = MARGIN_L + ncol * (PANEL_W + MARGIN_L) + 20
    height = MARGIN_T + 2 * PANEL_H + GAP + 60
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<text x="{_f(width / 2)}" y="20" font-size="14" text-anchor="middle">{title}</text>',
    ]
    for c, (label, frf, models) in enumerate(columns):
        x0 = MARGIN_L + c * (PANEL_W + MARGIN_L)
        w_lo, w_hi = frf.omegas[0] / 3.0, frf.omegas[-1] * 3.0
        if sample_rate:
            w_hi = min(w_hi, 0.95 * math.pi * sample_rate)
        w = np.geomspace(w_lo, w_hi, 200)
        mag_series, ph_series = [], []
        for name in sorted(models):
            h = _model_curve(models[name], w, sample_rate)
            color = MODEL_COLORS.get(name, "#444")
            mag_series.append((w, 20 * np.log10(np.abs(h)), color))
            ph_series.append((w, np.degrees(np.unwrap(np.angle(h))), color))
        m_db = 20 * np.log10(np.abs(frf.values))
        m_ph = np.degrees(np.angle(frf.values))
        allmag = np.concatenate([m_db] + [s[1] for s in mag_series])
        v_hi = 10 * math.ceil(allmag.max() / 10 + 0.05)
        v_lo = max(10 * math.floor(allmag.min() / 10), v_hi - 80)
        # measured phases follow the model branch where one is shown
        if ph_series:
            ref = np.interp(frf.omegas, w, ph_series[0][1])
            m_ph = m_ph + 360.0 * np.round((ref - m_ph) / 360.0)
        allph = np.concatenate([m_ph] + [s[1] for s in ph_series])
        p_hi = 45 * math.ceil(allph.max() / 45 + 0.01)
        p_lo = 45 * math.floor(allph.min() / 45 - 0.01)
        body.append(f'<text x="{_f(x0 + PANEL_W / 2)}" y="{MARGIN_T - 8}" font-size="12" text-anchor="middle">{label}</text>')
        body += _panel(x0, MARGIN_T, w_lo, w_hi, v_lo, v_hi, mag_series, [(frf.omegas, m_db)], "magnitude [dB]", 10)
        body += _panel(x0, MARGIN_T + PANEL_H + GAP, w_lo, w_hi, p_lo, p_hi, ph_series,
                       [(frf.omegas, m_ph)], "phase [deg]", 45)
        body.append(f'<text x="{_f(x0 + PANEL_W / 2)}" y="{_f(MARGIN_T + 2 * PANEL_H + GAP + 32)}" '
                    f'font-size="11" text-anchor="middle">frequency [rad/s]</text>')
    ly = height - 10
    items = [("measured", POINT_COLOR)] + [(k, MODEL_COLORS.get(k, "#444")) for k in sorted({m for *_, ms in columns for m in ms})]
    for i, (name, color) in enumerate(items):
        body.append(f'<text x="{MARGIN_L + 110 * i}" y="{ly}" font-size="11" fill="{color}">{name}</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"
