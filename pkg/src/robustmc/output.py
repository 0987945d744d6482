"""CSV tables, SVG charts and the JSON-lines run log."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CURVE_HEADER = ("r", "phat", "lower", "upper", "m1", "m2")
CI_HEADER = ("k", "A_explicit_upper", "B_explicit_lower", "C_cp_upper", "D_cp_lower")
MARGIN_HEADER = ("stage", "radius", "N", "K", "verdict", "lower", "upper")


class OutputError(OSError):
    """Writing an artifact failed; ``path`` names the file."""

    def __init__(self, path, cause):
        super().__init__(f"cannot write {path}: {cause}")
        self.path = str(path)


def fmt(x) -> str:
    """12 significant digits for floats, plain digits for integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".12g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(path, exc.strerror or exc) from exc
    return path


def curve_rows(points):
    return [(p.r, p.estimate, p.bounds.lower, p.bounds.upper, p.m1, p.m2) for p in points]


def curve_csv(points) -> str:
    """Rows in the order given (descending radius within each curve)."""
    if not points:
        raise ValueError("curve has no points")
    return _csv_text(CURVE_HEADER, curve_rows(points))


def read_curve_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != CURVE_HEADER:
        raise ValueError(f"unexpected header {rows[0]}")
    return [(float(r), float(ph), float(lo), float(up), int(m1), int(m2))
            for r, ph, lo, up, m1, m2 in rows[1:]]


def ci_table_csv(n, explicit, cp) -> str:
    """Columns A..D are explicit upper/lower and Clopper-Pearson upper/lower."""
    (el, eu), (cl, cu) = explicit, cp
    return _csv_text(CI_HEADER, zip(range(n + 1), eu, el, cu, cl))


def margin_csv(records) -> str:
    rows = [(rec.stage, rec.radius, rec.outcome.trials, rec.outcome.successes,
             rec.outcome.verdict.name, rec.outcome.final_bounds.lower, rec.outcome.final_bounds.upper)
            for rec in records]
    return _csv_text(MARGIN_HEADER, rows)


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

_W, _H = 640, 420
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 70, 20, 36, 50


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(t)
        t += step
    return ticks


def svg_chart(lines, bands=(), hlines=(), title="", xlabel="", ylabel="", xlim=None, ylim=None) -> str:
    """Minimal line chart.

    ``lines``: iterable of ``(x, y, colour, label)``; ``bands``: ``(x, lo, hi,
    colour)`` filled between ``lo`` and ``hi``; ``hlines``: ``(y, colour,
    label)`` drawn dashed across the plot.
    """
    xs = [np.asarray(x, float) for x, *_ in lines] + [np.asarray(b[0], float) for b in bands]
    ys = ([np.asarray(y, float) for _, y, *_ in lines]
          + [np.asarray(b[1], float) for b in bands] + [np.asarray(b[2], float) for b in bands]
          + [np.array([h[0]]) for h in hlines])
    allx = np.concatenate(xs) if xs else np.array([0.0, 1.0])
    ally = np.concatenate(ys) if ys else np.array([0.0, 1.0])
    x0, x1 = xlim or (float(allx.min()), float(allx.max()))
    y0, y1 = ylim or (float(ally.min()), float(ally.max()))
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = _W - _PAD_L - _PAD_R, _H - _PAD_T - _PAD_B

    def px(x):
        return _PAD_L + (np.asarray(x, float) - x0) / (x1 - x0) * pw

    def py(y):
        return _PAD_T + (1 - (np.asarray(y, float) - y0) / (y1 - y0)) * ph

    def pts(x, y):
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(x), py(y)))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>']
    for x, lo, hi, colour in bands:
        x = np.asarray(x, float)
        poly = pts(np.concatenate([x, x[::-1]]), np.concatenate([np.asarray(hi, float), np.asarray(lo, float)[::-1]]))
        out.append(f'<polygon points="{poly}" fill="{colour}" fill-opacity="0.25" stroke="none"/>')
    for y, colour, label in hlines:
        yy = float(py(y))
        out.append(f'<line x1="{_PAD_L}" y1="{yy:.2f}" x2="{_PAD_L + pw}" y2="{yy:.2f}" '
                   f'stroke="{colour}" stroke-dasharray="6,4"/>')
        if label:
            out.append(f'<text x="{_PAD_L + pw - 4}" y="{yy - 4:.2f}" text-anchor="end" '
                       f'fill="{colour}">{escape(label)}</text>')
    for i, (x, y, colour, label) in enumerate(lines):
        out.append(f'<polyline points="{pts(x, y)}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        if label:
            ly = _PAD_T + 14 * (i + 1)
            out.append(f'<line x1="{_PAD_L + 8}" y1="{ly - 4}" x2="{_PAD_L + 28}" y2="{ly - 4}" stroke="{colour}"/>')
            out.append(f'<text x="{_PAD_L + 32}" y="{ly}">{escape(label)}</text>')
    # axes
    out.append(f'<rect x="{_PAD_L}" y="{_PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _nice_ticks(x0, x1):
        xx = float(px(t))
        out.append(f'<line x1="{xx:.2f}" y1="{_PAD_T + ph}" x2="{xx:.2f}" y2="{_PAD_T + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{xx:.2f}" y="{_PAD_T + ph + 16}" text-anchor="middle">{t:.6g}</text>')
    for t in _nice_ticks(y0, y1):
        yy = float(py(t))
        out.append(f'<line x1="{_PAD_L - 4}" y1="{yy:.2f}" x2="{_PAD_L}" y2="{yy:.2f}" stroke="black"/>')
        out.append(f'<text x="{_PAD_L - 6}" y="{yy + 4:.2f}" text-anchor="end">{t:.6g}</text>')
    out.append(f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{_PAD_L + pw / 2}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{_PAD_T + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_PAD_T + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def curve_svg(points, epsilon: float, title="Robustness degradation curve") -> str:
    if not points:
        raise ValueError("curve has no points")
    pts = sorted(points, key=lambda p: p.r)
    r = np.array([p.r for p in pts])
    ph = np.array([p.estimate for p in pts])
    lo = np.array([p.bounds.lower for p in pts])
    hi = np.array([p.bounds.upper for p in pts])
    return svg_chart([(r, ph, "#1f77b4", "proportion estimate")], bands=[(r, lo, hi, "#1f77b4")],
                     hlines=[(1 - epsilon, "#d62728", f"1 - eps = {1 - epsilon:g}")],
                     title=title, xlabel="uncertainty radius r", ylabel="proportion")


def ci_table_svg(n, explicit, cp, delta) -> str:
    k = np.arange(n + 1)
    (el, eu), (cl, cu) = explicit, cp
    return svg_chart([(k, eu, "#d62728", "A explicit upper"), (k, el, "#ff7f0e", "B explicit lower"),
                      (k, cu, "#1f77b4", "C Clopper-Pearson upper"), (k, cl, "#2ca02c", "D Clopper-Pearson lower")],
                     title=f"Confidence limits, N = {n}, delta = {delta:g}", xlabel="k",
                     ylabel="limit", ylim=(0.0, 1.0))


# --------------------------------------------------------------------------
# Run log
# --------------------------------------------------------------------------

def _clean(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


class RunLog:
    """Ordered structured records, one JSON object per line.

    The first record holds the configuration text, seed and version; that is
    enough to re-run the experiment. Only ``timestamp`` differs between
    replays.
    """

    def __init__(self, mode: str, seed: int, config_text: str, version: str):
        self.records = [{"record": "header", "mode": mode, "seed": seed, "version": version,
                         "config": config_text}]

    def add(self, stage: str, **fields):
        rec = {"record": "event", "stage": stage}
        rec.update({k: _clean(v) for k, v in fields.items()})
        self.records.append(rec)

    def add_comparisons(self, records):
        for rec in records:
            o = rec.outcome
            self.add(rec.stage, radius=rec.radius, N=o.trials, K=o.successes, verdict=o.verdict.name,
                     lower=o.final_bounds.lower, upper=o.final_bounds.upper)

    def add_curve(self, curve, index: int):
        self.add("curve", interval=index, a=curve.grid.a, b=curve.grid.b, l=curve.grid.l, N=curve.N,
                 delta=curve.delta, generated_samples=curve.generated_samples, stream=curve.seed)
        last = curve.points[-1]
        self.add("curve_endpoint", interval=index, radius=last.r, N=last.m1, K=last.m2,
                 lower=last.bounds.lower, upper=last.bounds.upper)

    def dumps(self, now=None) -> str:
        now = now or datetime.now(timezone.utc).isoformat(timespec="seconds")
        lines = []
        for rec in self.records:
            rec = dict(rec)
            rec["timestamp"] = now
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        return write_text(path, self.dumps())


def read_run_log(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def transcript(records) -> list:
    """Records without timestamps, for replay comparisons."""
    return [{k: v for k, v in rec.items() if k != "timestamp"} for rec in records]


def out_path(out_dir, name) -> Path:
    return Path(os.fspath(out_dir)) / name
