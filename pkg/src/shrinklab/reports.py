"""CSV, JSON and SVG output for run records.

Table schemas (column order is fixed):

* shrink, cantor: sample_id, N, count, phi, deviation
* recur: events (sample_id, n); optional measures and envelope tables
* markov: cylinders (level, itinerary, start, length, K, sup_deriv), sorted by (level, start)
* mixing: n, pair_id, deviation
* converge-demo: family, point_id, x, hit_mid, hit_end

``record.json`` holds everything except wall-clock timings, which go to
``timings.json`` so that repeated runs produce identical payload bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .runner import RunRecord


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def record_payload(rec: RunRecord) -> dict:
    return {"config": rec.config, "code_version": rec.code_version, "summary": rec.summary,
            "verdicts": rec.verdicts, "extra": rec.extra,
            "tables": {t.name: {"header": t.header, "rows": len(t.rows)} for t in rec.tables},
            "overall": "PASS" if rec.passed else "FAIL"}


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def emit_report(rec: RunRecord, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    written = [_write(out / f"{t.name}.csv", table_csv(t.header, t.rows)) for t in rec.tables]
    written.append(_write(out / "record.json", to_json(record_payload(rec))))
    written.append(_write(out / "timings.json", to_json(rec.timings)))
    svg = count_chart(rec)
    if svg:
        written.append(_write(out / "count_vs_phi.svg", svg))
    return written


# ---------------------------------------------------------------------------
# SVG


def envelope(phi: float, eps: float) -> float:
    g = max(phi, math.e)
    return math.sqrt(g) * math.log(g) ** (1.5 + eps)


def count_chart(rec: RunRecord, width: int = 480, height: int = 320) -> str | None:
    """Mean count vs Phi with the Phi +- envelope curves, for counting experiments."""
    s = rec.summary
    if "mean_count" not in s or "phi" not in s or len(s["phi"]) < 2:
        return None
    eps = 0.1
    for sec in ("shrink", "cantor"):
        if sec in rec.config:
            eps = rec.config[sec].get("eps", eps)
    phi = [float(p) for p in s["phi"]]
    mean = [float(m) for m in s["mean_count"]]
    lo = [p - envelope(p, eps) for p in phi]
    hi = [p + envelope(p, eps) for p in phi]
    ys = mean + lo + hi + phi
    x0, x1 = min(phi), max(phi)
    y0, y1 = min(ys), max(ys)
    pad = 40

    def px(x):
        return pad + (x - x0) / ((x1 - x0) or 1) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / ((y1 - y0) or 1) * (height - 2 * pad)

    def path(xs, vs, color, dash=""):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, vs))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{extra} points="{pts}"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        path(phi, phi, "gray"),
        path(phi, lo, "gray", "4 3"),
        path(phi, hi, "gray", "4 3"),
        path(phi, mean, "crimson"),
        f'<text x="{width / 2}" y="{height - 8}" font-size="12" text-anchor="middle">Phi(N)</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" '
        f'text-anchor="middle">mean count</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
