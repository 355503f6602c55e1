"""Per-map forecast scoring, percentile exemplars and plain SVG charts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureSeries

__all__ = [
    "RmseCurve",
    "PercentileReport",
    "rmse_per_map",
    "rmse_curve",
    "percentiles",
    "persistence_baseline",
    "persistence_curve",
    "svg_lines",
    "curve_svg",
    "exemplar_svg",
]


def rmse_per_map(pred, truth, width: int = 16) -> float:
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.size != t.size or p.size != width:
        raise ValueError(f"expected {width} predicted and true values, got {p.size} and {t.size}")
    return float(np.sqrt(np.mean((p - t) ** 2)))


@dataclass
class RmseCurve:
    maps: np.ndarray  # 1-based map indices
    values: np.ndarray
    scale: str = "normalized"

    def __len__(self):
        return len(self.values)


def rmse_curve(preds: dict, series: FeatureSeries, scale: str = "normalized") -> RmseCurve:
    """``preds`` maps 1-based map index -> 16 predicted values."""
    maps = np.array(sorted(preds), dtype=np.int64)
    if len(maps) and maps[0] <= series.mu:
        raise ValueError(f"map {maps[0]} precedes the first forecastable map {series.mu + 1}")
    vals = np.array([rmse_per_map(preds[m], series.table[m - 1], series.width) for m in maps])
    return RmseCurve(maps, vals, scale)


@dataclass
class PercentileReport:
    levels: tuple
    maps: list
    rmse: list
    rule: str = "nearest-rank"

    def to_dict(self):
        return {
            "rule": self.rule,
            "picks": [{"percentile": p, "map": int(m), "rmse": float(r)}
                      for p, m, r in zip(self.levels, self.maps, self.rmse)],
        }


def percentiles(curve: RmseCurve, levels=(25, 50, 75, 100)) -> PercentileReport:
    """Nearest-rank picks: the value at sorted position ``ceil(p/100 * N)``.

    Ties are broken by map index (stable sort), so the pick is always an
    observed map.
    """
    n = len(curve)
    if n == 0:
        raise ValueError("empty RMSE curve")
    order = np.argsort(curve.values, kind="stable")
    maps, vals = [], []
    for p in levels:
        rank = max(1, math.ceil(p / 100.0 * n))
        j = order[rank - 1]
        maps.append(int(curve.maps[j]))
        vals.append(float(curve.values[j]))
    return PercentileReport(tuple(levels), maps, vals)


def persistence_baseline(series: FeatureSeries, zeta: int) -> np.ndarray:
    """Forecast map ``zeta`` (1-based) as a copy of map ``zeta - 1``."""
    if zeta < series.mu + 1 or zeta > series.num_maps:
        raise ValueError(f"map {zeta} outside forecastable range {series.mu + 1}..{series.num_maps}")
    return series.table[zeta - 2].copy()


def persistence_curve(series: FeatureSeries, maps, scale: str = "normalized") -> RmseCurve:
    preds = {int(m): persistence_baseline(series, int(m)) for m in maps}
    return rmse_curve(preds, series, scale)


# -- SVG -------------------------------------------------------------------

_COLORS = ("#222222", "#e377c2", "#1f77b4", "#ff7f0e")


def _fmt(v):
    return f"{v:.6g}"


def svg_lines(series, title="", xlabel="", ylabel="", width=640, height=360, markers=(), comment=""):
    """Render ``[(label, xs, ys), ...]`` as a standalone SVG line chart.

    ``markers`` is a list of ``(x, y)`` points drawn as crosses. Output is a
    pure function of the inputs so re-rendering gives identical bytes.
    """
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 45
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series] + [np.array([m[0] for m in markers], float)])
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series] + [np.array([m[1] for m in markers], float)])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def py(y):
        return pad_t + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    if comment:
        out.append(f"<!-- {comment} -->")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>')
    out.append(f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>')
    out.append(f'<text x="{pad_l + pw / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(f'<text x="14" y="{pad_t + ph / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {pad_t + ph / 2})">{ylabel}</text>')
    for v, anchor in ((y0, pad_t + ph), (y1, pad_t)):
        out.append(f'<text x="{pad_l - 6}" y="{anchor + 4}" text-anchor="end" font-size="10">{_fmt(v)}</text>')
    for v, anchor in ((x0, pad_l), (x1, pad_l + pw)):
        out.append(f'<text x="{anchor}" y="{pad_t + ph + 14}" text-anchor="middle" font-size="10">{_fmt(v)}</text>')
    for k, (label, xs, ys) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{pad_l + 8}" y="{pad_t + 14 + 14 * k}" font-size="11" fill="{color}">{label}</text>')
    for x, y in markers:
        cx, cy = px(x), py(y)
        out.append(f'<path d="M{cx - 4:.2f},{cy - 4:.2f}L{cx + 4:.2f},{cy + 4:.2f}M{cx - 4:.2f},{cy + 4:.2f}'
                   f'L{cx + 4:.2f},{cy - 4:.2f}" stroke="red" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curve_svg(curve: RmseCurve, report: PercentileReport | None = None, baseline: RmseCurve | None = None,
              comment=""):
    series = [("LSTM", curve.maps, curve.values)]
    if baseline is not None:
        series.append(("persistence", baseline.maps, baseline.values))
    markers = list(zip(report.maps, report.rmse)) if report else []
    return svg_lines(series, f"RMSE per map ({curve.scale})", "nozzle move", "RMSE", markers=markers,
                     comment=comment)


def exemplar_svg(series: FeatureSeries, zeta: int, pred, rmse: float, comment=""):
    """History window and ground truth of map ``zeta`` against the forecast."""
    w = series.width
    lo = (zeta - 1 - series.mu) * w
    truth = series.table[zeta - 1 - series.mu:zeta].ravel()
    xs = np.arange(lo, lo + truth.size)
    fx = np.arange((zeta - 1) * w, zeta * w)
    return svg_lines([("ground truth", xs, truth), ("forecast", fx, np.asarray(pred, float))],
                     f"map {zeta}: RMSE={rmse:.4g}", "feature index", "gradient feature", comment=comment)
