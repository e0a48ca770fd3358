"""Deterministic CSV, JSON and SVG output for experiment results.

Floats are written with ``repr`` (shortest round-trip form) and rows are
sorted by key, so identical results give byte-identical files.  Plots are
self-contained SVG documents with a plain-text ``.dat`` companion; each drawn
curve carries a ``data-column`` attribute naming the ``summary.csv`` column it
was drawn from.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

TRIAL_COLUMNS = ("experiment", "trial", "N", "alpha", "dfrak_r", "D_hat", "d_xstar",
                 "bound_binom", "bound_chernoff", "flags", "seed")
SUMMARY_LEAD = ("experiment", "stage", "N", "alpha", "R", "valid")
PLOT_MIN = 1e-6


class OutputError(OSError):
    """Writing an output file failed; the message names the path."""


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "|".join(fmt(x) for x in v)
    return str(v)


def _trial_key(rec):
    return (rec.experiment, -1 if rec.stage is None else rec.stage, rec.N,
            -1.0 if rec.alpha is None else rec.alpha, rec.trial)


def trial_rows(records) -> list[list[str]]:
    rows = []
    for rec in sorted(records, key=_trial_key):
        exp = rec.experiment if rec.stage is None else f"{rec.experiment}:t{rec.stage}"
        rows.append([fmt(v) for v in (exp, rec.trial, rec.N, rec.alpha, rec.dfrak_r, rec.D_hat,
                                      rec.d_xstar, rec.bound_binom, rec.bound_chernoff,
                                      "|".join(rec.flags), rec.seed)])
    return rows


def summary_columns(summary) -> list[str]:
    keys = set()
    for row in summary:
        keys.update(row)
    lead = [k for k in SUMMARY_LEAD if k in keys]
    return lead + sorted(keys - set(lead))


def _summary_key(row):
    return (row.get("experiment", ""), row.get("stage") or 0, row.get("N") or 0,
            -1.0 if row.get("alpha") is None else row["alpha"])


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


def write_trials_csv(records, path) -> Path:
    return _write(Path(path), _csv_text(TRIAL_COLUMNS, trial_rows(records)))


def write_summary_csv(summary, path) -> Path:
    cols = summary_columns(summary)
    rows = [[fmt(r.get(c)) for c in cols] for r in sorted(summary, key=_summary_key)]
    return _write(Path(path), _csv_text(cols, rows))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if hasattr(v, "item"):
        return v.item()
    return v


# ---------------------------------------------------------------- plots


def plot_series(summary) -> dict:
    """Plot groups ``{alpha: (x column, [(column, [(x, y), ...]), ...])}``."""
    cols = summary_columns(summary)
    ys = [c for c in cols if c.startswith("freq_") or c.startswith("bound_")]
    xcol = "stage" if any(r.get("stage") for r in summary) else "N"
    groups = {}
    for row in sorted(summary, key=_summary_key):
        a = row.get("alpha")
        groups.setdefault(a, {})
        for c in ys:
            v = row.get(c)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                continue
            groups[a].setdefault(c, []).append((row[xcol], v))
    return {a: (xcol, sorted(series.items())) for a, series in groups.items()}


_COLORS = ("#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#66526e", "#00798c", "#8d6a9f",
           "#3d3d3d")


def svg_plot(title: str, xcol: str, series, width=640, height=420) -> str:
    """Line plot with a log-scale probability axis; values below 1e-6 are clamped."""
    left, right, top, bottom = 70, 180, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = sorted({x for _, pts in series for x, _ in pts}) or [0, 1]
    x0, x1 = min(xs), max(xs)
    lx = x1 > x0 and x0 > 0 and x1 / x0 >= 10
    tx = (lambda x: math.log10(x)) if lx else float
    span = (tx(x1) - tx(x0)) or 1.0

    def px(x):
        return left + (tx(x) - tx(x0)) / span * pw

    lo_dec = -6

    def py(y):
        y = max(y, PLOT_MIN)
        return top + (0 - math.log10(y)) / (0 - lo_dec) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f"<title>{escape(title)}</title>",
           f'<desc>x: {escape(xcol)}; y (log10): '
           f'{escape(", ".join(c for c, _ in series))}</desc>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>']
    for d in range(lo_dec, 1):
        y = py(10.0**d)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" '
                   f'stroke="#ddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" font-size="11" '
                   f'text-anchor="end">1e{d}</text>')
    for x in xs:
        out.append(f'<text x="{px(x):.2f}" y="{top + ph + 18}" font-size="11" '
                   f'text-anchor="middle">{fmt(x)}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" font-size="12" '
               f'text-anchor="middle">{escape(xcol)}</text>')
    for i, (col, pts) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        dash = ' stroke-dasharray="6 3"' if col.startswith("bound_") else ""
        path = " ".join(f"{'M' if j == 0 else 'L'}{px(x):.2f},{py(y):.2f}"
                        for j, (x, y) in enumerate(pts))
        out.append(f'<path data-column="{escape(col)}" d="{path}" fill="none" '
                   f'stroke="{color}" stroke-width="1.8"{dash}/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="1.8"{dash}/>')
        out.append(f'<text x="{left + pw + 36}" y="{ly + 4}" font-size="11">{escape(col)}</text>')
    out.append(f'<text x="{left}" y="{top - 12}" font-size="13">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def dat_text(xcol: str, series) -> str:
    cols = [c for c, _ in series]
    xs = sorted({x for _, pts in series for x, _ in pts})
    lookup = {c: dict(pts) for c, pts in series}
    lines = ["# " + " ".join([xcol] + cols)]
    for x in xs:
        lines.append(" ".join([fmt(x)] + [fmt(lookup[c].get(x)) or "nan" for c in cols]))
    return "\n".join(lines) + "\n"


def _alpha_tag(a) -> str:
    return "all" if a is None else fmt(float(a))


def write_plots(summary, out_dir, title: str) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for a, (xcol, series) in sorted(plot_series(summary).items(),
                                    key=lambda kv: -1.0 if kv[0] is None else kv[0]):
        if not series:
            continue
        stem = f"plot_alpha_{_alpha_tag(a)}"
        t = title if a is None else f"{title}, alpha = {fmt(float(a))}"
        paths.append(_write(out_dir / f"{stem}.svg", svg_plot(t, xcol, series)))
        paths.append(_write(out_dir / f"{stem}.dat", dat_text(xcol, series)))
    return paths


def write_outputs(result, out_dir) -> list[Path]:
    """Write every artifact of ``result`` under ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    paths = [write_trials_csv(result.records, out_dir / "trials.csv"),
             write_summary_csv(result.summary, out_dir / "summary.csv")]
    for name, (header, rows) in sorted(result.extra_tables.items()):
        text = _csv_text(header, [[fmt(v) for v in row] for row in sorted(rows)])
        paths.append(_write(out_dir / f"{name}.csv", text))
    report = {"experiment": result.config.label, "config": result.config.to_dict(),
              "report": _jsonable(result.report)}
    paths.append(_write(out_dir / "report.json",
                        json.dumps(report, indent=2, sort_keys=True) + "\n"))
    if result.summary:
        paths += write_plots(result.summary, out_dir, result.config.label)
    return paths


__all__ = ["OutputError", "TRIAL_COLUMNS", "dat_text", "fmt", "plot_series", "svg_plot",
           "trial_rows", "write_outputs", "write_plots", "write_summary_csv", "write_trials_csv"]
