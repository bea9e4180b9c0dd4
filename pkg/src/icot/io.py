"""File formats: distributions, couplings, quantile tables, result tables, SVG curves.

Files are UTF-8 with numbers in ``repr`` precision (17 significant digits);
console output uses 12 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError
from .ot import Coupling, DiscreteDistribution

FILE_FMT = ".17g"
CONSOLE_FMT = ".12g"


def fmt(x, spec: str = FILE_FMT) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, spec)
    return "" if x is None else str(x)


def _json_ready(obj):
    """Replace non-finite floats (not valid JSON) by strings."""
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else fmt(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_json_ready(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def read_distribution(path: str | Path) -> tuple[DiscreteDistribution, dict]:
    """Load a distribution from CSV (coordinates..., weight) or JSON {points, weights, meta}."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
            dist = DiscreteDistribution(doc["points"], doc["weights"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: malformed distribution document ({exc})") from exc
        return dist, dict(doc.get("meta", {}))
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: empty file")
    if not _is_numeric_row(rows[0]):
        header, rows = rows[0], rows[1:]
        if header[-1].strip().lower() != "weight":
            raise InputError(f"{path}: last column must be 'weight'")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise InputError(f"{path}: need at least one coordinate column and a weight column")
    return DiscreteDistribution(arr[:, :-1], arr[:, -1]), {}


def _is_numeric_row(row) -> bool:
    try:
        [float(c) for c in row]
    except ValueError:
        return False
    return True


def distribution_csv(dist: DiscreteDistribution) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"x{k}" for k in range(dist.dim)] + ["weight"])
    for p, wt in zip(dist.points, dist.weights):
        w.writerow([fmt(v) for v in p] + [fmt(wt)])
    return out.getvalue()


def distribution_json(dist: DiscreteDistribution, meta: dict | None = None) -> str:
    return dumps_json({"points": dist.points, "weights": dist.weights, "meta": meta or {}})


def write_distribution(dist: DiscreteDistribution, path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    text = distribution_json(dist, meta) if path.suffix.lower() == ".json" else distribution_csv(dist)
    path.write_text(text, encoding="utf-8")


def coupling_csv(c: Coupling) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    for row in c.joint:
        w.writerow([fmt(v) for v in row])
    return out.getvalue()


def read_coupling(path: str | Path) -> Coupling:
    rows = [r for r in csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))) if r]
    try:
        return Coupling(np.array([[float(v) for v in r] for r in rows]))
    except ValueError as exc:
        raise InputError(f"{path}: malformed coupling ({exc})") from exc


def read_quantile_table(path: str | Path):
    """Two-column CSV (probability, quantile), optional header."""
    from .bounds import QuantileTable

    rows = [r for r in csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))) if r]
    if rows and not _is_numeric_row(rows[0]):
        rows = rows[1:]
    if any(len(r) != 2 for r in rows):
        raise InputError(f"{path}: quantile table needs exactly two columns")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    if arr.size == 0:
        raise InputError(f"{path}: empty quantile table")
    return QuantileTable(arr[:, 0], arr[:, 1])


def table_csv(header: list[str], rows: list[list], spec: str = FILE_FMT) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v, spec) for v in r])
    return out.getvalue()


def table_json(header: list[str], rows: list[list]) -> str:
    return dumps_json([dict(zip(header, r)) for r in rows])


def svg_lines(xs, series: dict[str, list], xlabel: str = "", ylabel: str = "", width: int = 480, height: int = 320) -> str:
    """Minimal line chart; one polyline per named series, finite points only."""
    pad = 48
    xs = np.asarray(xs, dtype=float)
    ys_all = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    ok = np.isfinite(ys_all)
    y0, y1 = (float(ys_all[ok].min()), float(ys_all[ok].max())) if ok.any() else (0.0, 1.0)
    if y1 == y0:
        y1 = y0 + 1.0
    fx = np.isfinite(xs)
    x0, x1 = float(xs[fx].min()), float(xs[fx].max())
    if x1 == x0:
        x1 = x0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{ylabel}</text>',
        f'<text x="{pad}" y="{height - pad + 14}" font-size="10">{x0:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 14}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    for k, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(x) and np.isfinite(y))
        colour = colours[k % len(colours)]
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * k}" font-size="11" text-anchor="end" fill="{colour}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
