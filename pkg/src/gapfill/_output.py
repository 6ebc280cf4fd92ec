"""Artifact emission: atomic writes, CSV/JSON formatting, minimal SVG plots.

All writers are deterministic (sorted keys, fixed float formatting, no
timestamps) so identical runs produce identical bytes.  Files are written
to a temp path in the target directory and renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path: str, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(f"{v:.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    atomic_write(path, "\n".join(lines) + "\n")


def svg_plot(path: str, series, *, width: int = 640, height: int = 420,
             xlabel: str = "", ylabel: str = "", title: str = "") -> None:
    """Polyline/point plot without any plotting dependency.

    series is a list of dicts: {"x": [...], "y": [...], "kind": "line"|"points",
    "color": "#333"}.  Axes are linear with 5% padding.
    """
    xs = [float(v) for s in series for v in s["x"]]
    ys = [float(v) for s in series for v in s["y"]]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    padx, pady = 0.05 * (x1 - x0), 0.05 * (y1 - y0)
    x0, x1 = x0 - padx, x1 + padx
    y0, y1 = y0 - pady, y1 + pady
    ml, mr, mt, mb = 60, 15, 30, 45

    def px(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def py(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    # axes
    parts.append(f'<line x1="{ml}" y1="{height-mb}" x2="{width-mr}" y2="{height-mb}" '
                 'stroke="black"/>')
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height-mb}" stroke="black"/>')
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        parts.append(f'<text x="{px(xv):.1f}" y="{height-mb+16}" font-size="11" '
                     f'text-anchor="middle">{xv:.4g}</text>')
        parts.append(f'<text x="{ml-6}" y="{py(yv):.1f}" font-size="11" '
                     f'text-anchor="end">{yv:.4g}</text>')
    if title:
        parts.append(f'<text x="{width/2}" y="18" font-size="13" text-anchor="middle">'
                     f'{title}</text>')
    if xlabel:
        parts.append(f'<text x="{width/2}" y="{height-8}" font-size="12" '
                     f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="14" y="{height/2}" font-size="12" text-anchor="middle" '
                     f'transform="rotate(-90 14 {height/2})">{ylabel}</text>')
    for s in series:
        color = s.get("color", "#1f4e9c")
        if s.get("kind", "line") == "points":
            for x, y in zip(s["x"], s["y"]):
                parts.append(f'<circle cx="{px(float(x)):.2f}" cy="{py(float(y)):.2f}" '
                             f'r="1.6" fill="{color}"/>')
        else:
            pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}"
                           for x, y in zip(s["x"], s["y"]))
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                         'stroke-width="1.2"/>')
    parts.append("</svg>")
    atomic_write(path, "\n".join(parts) + "\n")
