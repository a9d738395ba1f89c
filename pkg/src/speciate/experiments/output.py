"""Run-directory persistence: CSV tables, SVG plots and the manifest."""

from __future__ import annotations

import hashlib
import io
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np


def format_csv(header: Sequence[str], rows) -> bytes:
    """Comma-delimited, LF line endings, floats as %.12g."""
    buf = io.StringIO(newline="")
    buf.write(",".join(header) + "\n")
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (bool, np.bool_)):
                cells.append(str(int(v)))
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                cells.append("%.12g" % v)
            else:
                cells.append(str(v))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue().encode("utf-8")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


_SVG_HEAD = '<?xml version="1.0" encoding="UTF-8"?>\n<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def svg_heatmap(matrix: np.ndarray, title: str = "", cell: int = 40) -> bytes:
    """Grey-scale heatmap with values printed in each cell; 0 white, 1 black."""
    m = np.asarray(matrix, dtype=np.float64)
    rows, cols = m.shape
    pad = 30
    w, h = cols * cell + 2 * pad, rows * cell + 2 * pad
    parts = [_SVG_HEAD.format(w=w, h=h)]
    parts.append(f'<text x="{pad}" y="{pad - 10}" font-size="12">{escape(title)}</text>\n')
    for i in range(rows):
        for j in range(cols):
            v = float(np.clip(m[i, j], 0.0, 1.0))
            g = int(round(255 * (1 - v)))
            x, y = pad + j * cell, pad + i * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({g},{g},{g})" stroke="#888"/>\n')
            color = "#fff" if v > 0.5 else "#000"
            parts.append(
                f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 4:.1f}" font-size="10" '
                f'text-anchor="middle" fill="{color}">{v:.2f}</text>\n'
            )
    parts.append("</svg>\n")
    return "".join(parts).encode("utf-8")


def svg_lines(x, series: dict[str, Sequence[float]], title: str = "", xlabel: str = "", width: int = 640, height: int = 400) -> bytes:
    """Line plot of named series against a shared x; non-finite points are skipped."""
    x = np.asarray(x, dtype=np.float64)
    pad = 50
    ys = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()]) if series else np.zeros(1)
    ys = ys[np.isfinite(ys)]
    y_lo, y_hi = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if y_hi - y_lo < 1e-300:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi - x_lo < 1e-300:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0

    def px(v):
        return pad + (v - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [_SVG_HEAD.format(w=width, h=height)]
    parts.append(f'<text x="{pad}" y="{pad - 20}" font-size="12">{escape(title)}</text>\n')
    parts.append(f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="#000"/>\n')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 10}" font-size="11" text-anchor="middle">{escape(xlabel)}</text>\n')
    parts.append(f'<text x="5" y="{pad + 4}" font-size="10">{y_hi:.3g}</text>\n')
    parts.append(f'<text x="5" y="{height - pad}" font-size="10">{y_lo:.3g}</text>\n')
    parts.append(f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x_lo:.3g}</text>\n')
    parts.append(f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x_hi:.3g}</text>\n')
    for k, (name, ys_) in enumerate(series.items()):
        ys_ = np.asarray(ys_, dtype=np.float64)
        ok = np.isfinite(ys_)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], ys_[ok]))
        color = _PALETTE[k % len(_PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>\n')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * (k + 1)}" font-size="10" fill="{color}">{escape(name)}</text>\n')
    parts.append("</svg>\n")
    return "".join(parts).encode("utf-8")


@dataclass
class RunManifest:
    kind: str
    config: dict
    seed: int
    version: str
    wall_clock: float
    outputs: list[dict] = field(default_factory=list)
    run_dir: str = ""

    def to_json(self) -> bytes:
        d = {
            "kind": self.kind,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "wall_clock": self.wall_clock,
            "outputs": self.outputs,
        }
        return (json.dumps(d, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")

    def digests(self) -> dict[str, str]:
        return {o["path"]: o["sha256"] for o in self.outputs}


def write_run(parent: str | Path, name: str, files: dict[str, bytes], manifest: RunManifest) -> Path:
    """Write ``files`` plus manifest.json into parent/name atomically.

    Everything lands in a temporary sibling directory first, which is renamed
    into place only once complete. An existing run of the same name gets a
    numeric suffix instead of being overwritten.
    """
    parent = Path(parent)
    parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{name}.", dir=parent))
    try:
        manifest.outputs = []
        for rel in sorted(files):
            data = files[rel]
            (tmp / rel).write_bytes(data)
            manifest.outputs.append({"path": rel, "sha256": sha256_bytes(data)})
        (tmp / "manifest.json").write_bytes(manifest.to_json())
        target = parent / name
        k = 1
        while True:
            try:
                os.rename(tmp, target)
                break
            except OSError:
                if not target.exists():
                    raise
                k += 1
                target = parent / f"{name}-{k}"
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    manifest.run_dir = str(target)
    return target
