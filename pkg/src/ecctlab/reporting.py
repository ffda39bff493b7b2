"""Artifact emission: results CSV with a fixed column order, sweep summaries,
config snapshots referenced by hash, and dependency-free SVG plots.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

RESULT_COLUMNS = [
    "code", "n", "r", "L", "d", "u", "T", "P", "masked", "m", "ebn0_db", "seed",
    "train_ber", "test_ber", "gap", "normalized_gap", "log_lambda", "bound_total",
    "wall_time_s",
]

SUMMARY_COLUMNS = ["axis", "value", "trials", "median", "q1", "q3", "bound_median"]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(path, rows: list[dict]) -> None:
    """Rows are dicts keyed by RESULT_COLUMNS; column order is fixed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in RESULT_COLUMNS])


def read_records_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = dict(raw)
            for key in ("n", "r", "L", "d", "u", "T", "P", "m", "seed"):
                row[key] = int(row[key])
            for key in ("ebn0_db", "train_ber", "test_ber", "gap", "normalized_gap",
                        "log_lambda", "bound_total", "wall_time_s"):
                row[key] = float(row[key])
            row["masked"] = row["masked"] == "true"
            rows.append(row)
    return rows


def quartiles(values) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return float(med), float(q1), float(q3)


def summarize_sweep(axis: str, rows: list[dict]) -> list[dict]:
    """Median/q1/q3 of the normalized gap per axis value, plus bound medians."""
    key = {"T": "T", "L": "L", "m": "m"}[axis]
    by_value: dict[int, list[dict]] = {}
    for row in rows:
        by_value.setdefault(row[key], []).append(row)
    summary = []
    for value in sorted(by_value):
        group = by_value[value]
        med, q1, q3 = quartiles([r["normalized_gap"] for r in group])
        bound_med, _, _ = quartiles([r["bound_total"] for r in group])
        summary.append({
            "axis": axis, "value": value, "trials": len(group),
            "median": med, "q1": q1, "q3": q3, "bound_median": bound_med,
        })
    return summary


def write_summary_csv(path, summary: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary:
            writer.writerow([_fmt(row[col]) for col in SUMMARY_COLUMNS])


def write_config_snapshot(out_dir, config: dict) -> str:
    """Serialize the fully-resolved config and return its sha256 hex digest."""
    os.makedirs(out_dir, exist_ok=True)
    text = json.dumps(config, indent=2, sort_keys=True, default=str)
    path = os.path.join(out_dir, "config.json")
    with open(path, "w") as fh:
        fh.write(text + "\n")
    digest = hashlib.sha256(text.encode()).hexdigest()
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump({"config_sha256": digest}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return digest


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


@dataclass
class _Frame:
    width: int = 720
    height: int = 440
    left: int = 70
    right: int = 80
    top: int = 30
    bottom: int = 50


def _scale(value, lo, hi, out_lo, out_hi):
    if hi <= lo:
        return (out_lo + out_hi) / 2.0
    return out_lo + (value - lo) * (out_hi - out_lo) / (hi - lo)


def render_sweep_svg(
    summary: list[dict],
    axis: str,
    title: str = "",
    bound_label: str = "theorem bound",
) -> str:
    """Median line with q1-q3 boxes, plus the bound overlay on a right axis."""
    fr = _Frame()
    n_pts = len(summary)
    xs = [
        _scale(i, -0.5, n_pts - 0.5, fr.left, fr.width - fr.right)
        for i in range(n_pts)
    ]
    gaps = [(row["q1"], row["median"], row["q3"]) for row in summary]
    glo = min(q1 for q1, _, _ in gaps)
    ghi = max(q3 for _, _, q3 in gaps)
    pad = 0.1 * max(ghi - glo, 1e-12)
    glo, ghi = glo - pad, ghi + pad
    bounds_vals = [row["bound_median"] for row in summary]
    blo, bhi = min(bounds_vals), max(bounds_vals)
    bpad = 0.1 * max(bhi - blo, 1e-12)
    blo, bhi = blo - bpad, bhi + bpad

    def gy(v):
        return _scale(v, glo, ghi, fr.height - fr.bottom, fr.top)

    def by(v):
        return _scale(v, blo, bhi, fr.height - fr.bottom, fr.top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fr.width}" height="{fr.height}">',
        f'<rect width="{fr.width}" height="{fr.height}" fill="white"/>',
        f'<text x="{fr.width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{fr.left}" y1="{fr.top}" x2="{fr.left}" y2="{fr.height - fr.bottom}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{fr.left}" y1="{fr.height - fr.bottom}" x2="{fr.width - fr.right}" '
        f'y2="{fr.height - fr.bottom}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{fr.width - fr.right}" y1="{fr.top}" x2="{fr.width - fr.right}" '
        f'y2="{fr.height - fr.bottom}" stroke="steelblue"/>'
    )
    # boxes and median markers
    half = 12
    for x, (q1, med, q3) in zip(xs, gaps):
        parts.append(
            f'<rect x="{x - half}" y="{gy(q3)}" width="{2 * half}" height="{max(gy(q1) - gy(q3), 0.5)}" '
            'fill="lightgray" stroke="black"/>'
        )
        parts.append(
            f'<line x1="{x - half}" y1="{gy(med)}" x2="{x + half}" y2="{gy(med)}" '
            'stroke="black" stroke-width="2"/>'
        )
    med_path = " ".join(f"{x},{gy(med)}" for x, (_, med, _) in zip(xs, gaps))
    parts.append(f'<polyline points="{med_path}" fill="none" stroke="black"/>')
    bound_path = " ".join(f"{x},{by(v)}" for x, v in zip(xs, bounds_vals))
    parts.append(
        f'<polyline points="{bound_path}" fill="none" stroke="steelblue" stroke-dasharray="6 3"/>'
    )
    # tick labels
    for x, row in zip(xs, summary):
        parts.append(
            f'<text x="{x}" y="{fr.height - fr.bottom + 18}" text-anchor="middle" '
            f'font-size="12">{row["value"]}</text>'
        )
    parts.append(
        f'<text x="{fr.width / 2}" y="{fr.height - 12}" text-anchor="middle" font-size="12">'
        f"{axis}</text>"
    )
    for frac in (0.0, 0.5, 1.0):
        gv = glo + frac * (ghi - glo)
        bv = blo + frac * (bhi - blo)
        parts.append(
            f'<text x="{fr.left - 6}" y="{gy(gv) + 4}" text-anchor="end" font-size="10">{gv:.3g}</text>'
        )
        parts.append(
            f'<text x="{fr.width - fr.right + 6}" y="{by(bv) + 4}" text-anchor="start" '
            f'font-size="10" fill="steelblue">{bv:.3g}</text>'
        )
    parts.append(
        f'<text x="{fr.width - fr.right + 50}" y="{fr.top + 10}" text-anchor="end" '
        f'font-size="11" fill="steelblue">{bound_label}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
