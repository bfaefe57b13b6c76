"""Static SVG scatter plots of real and generated 2-D samples."""

from __future__ import annotations

import csv

import numpy as np

_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


class PlotError(ValueError):
    pass


def _color(k: int) -> str:
    return _PALETTE[k % len(_PALETTE)]


def read_samples_csv(path):
    """Read rows of (x, y, label, kind) where kind is 'real' or 'generated'."""
    real, gen = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = (float(row["x"]), float(row["y"]), int(row["label"]))
            (real if row["kind"] == "real" else gen).append(rec)
    return real, gen


def write_samples_csv(path, real_xy, real_labels, gen_xy, gen_labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label", "kind"])
        for (x, y), lab in zip(np.asarray(real_xy), real_labels):
            writer.writerow([repr(float(x)), repr(float(y)), int(lab), "real"])
        for (x, y), lab in zip(np.asarray(gen_xy), gen_labels):
            writer.writerow([repr(float(x)), repr(float(y)), int(lab), "generated"])


def emit_scatter_svg(samples_csv_path, out_path, width=640, height=640) -> None:
    """Render real points as circles and generated points as crosses."""
    real, gen = read_samples_csv(samples_csv_path)
    pts = real + gen
    if not pts:
        raise PlotError("no samples to plot")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    pad = 0.05 * max(np.ptp(xs), np.ptp(ys), 1e-9)
    x0, x1 = xs.min() - pad, xs.max() + pad
    y0, y1 = ys.min() - pad, ys.max() + pad

    def sx(x):
        return (x - x0) / (x1 - x0) * (width - 120) + 10

    def sy(y):
        return height - 10 - (y - y0) / (y1 - y0) * (height - 20)

    classes = sorted({p[2] for p in pts})
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for x, y, lab in real:
        parts.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" '
            f'fill="{_color(lab)}" fill-opacity="0.6"/>')
    for x, y, lab in gen:
        cx, cy = sx(x), sy(y)
        c = _color(lab)
        parts.append(
            f'<path d="M {cx - 3:.2f} {cy - 3:.2f} L {cx + 3:.2f} {cy + 3:.2f} '
            f'M {cx - 3:.2f} {cy + 3:.2f} L {cx + 3:.2f} {cy - 3:.2f}" '
            f'stroke="{c}" stroke-width="1.5"/>')
    for i, lab in enumerate(classes):
        ly = 20 + 18 * i
        parts.append(
            f'<circle cx="{width - 95}" cy="{ly}" r="4" fill="{_color(lab)}"/>')
        parts.append(
            f'<text x="{width - 85}" y="{ly + 4}" font-size="12" '
            f'font-family="sans-serif">class {lab}</text>')
    parts.append("</svg>")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


def require_2d(features: np.ndarray) -> None:
    if np.asarray(features).shape[1] != 2:
        raise PlotError(
            "scatter plotting needs 2-D features; skip plotting for this dataset")
