"""DOT and SVG exports with edge thickness proportional to capacity.

Output is deterministic byte-for-byte for fixed inputs: stable iteration
order and fixed float formatting throughout.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ScenarioError
from .model import Instance

_SVG_WIDTH = 640.0
_SVG_MARGIN = 30.0
_MAX_PENWIDTH = 6.0
_MAX_STROKE = 8.0


def _positions(instance: Instance, layout) -> dict[str, tuple[float, float]]:
    if layout:
        missing = [v for v in instance.node_ids if v not in layout]
        if missing:
            raise ScenarioError(f"layout is missing nodes: {missing[:5]}")
        return {v: (float(layout[v][0]), float(layout[v][1]))
                for v in instance.node_ids}
    n = len(instance.node_ids)
    return {v: (100.0 * math.cos(2 * math.pi * i / n),
                100.0 * math.sin(2 * math.pi * i / n))
            for i, v in enumerate(instance.node_ids)}


def to_dot(instance: Instance, x: np.ndarray) -> str:
    """Undirected DOT graph; penwidth proportional to capacity, label the
    capacity at three decimals."""
    if not instance.is_incidence:
        raise ScenarioError("DOT export needs a graph instance")
    x = np.asarray(x, dtype=float)
    xmax = float(x.max()) if x.size and x.max() > 0 else 1.0
    lines = ["graph network {", "  node [shape=circle fontsize=10];"]
    for v in instance.node_ids:
        lines.append(f'  "{v}";')
    for i, meta in enumerate(instance.edge_meta):
        pw = _MAX_PENWIDTH * float(x[i]) / xmax
        lines.append(f'  "{meta.tail}" -- "{meta.head}" '
                     f'[penwidth={pw:.4f} label="{x[i]:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_svg(instance: Instance, x: np.ndarray, layout=None,
           terminals=None) -> str:
    """Self-contained SVG: lines with stroke width proportional to capacity,
    circles for nodes, terminals highlighted."""
    if not instance.is_incidence:
        raise ScenarioError("SVG export needs a graph instance")
    x = np.asarray(x, dtype=float)
    pos = _positions(instance, layout)
    xs = [p[0] for p in pos.values()]
    ys = [p[1] for p in pos.values()]
    span_x = max(xs) - min(xs) or 1.0
    span_y = max(ys) - min(ys) or 1.0
    scale = (_SVG_WIDTH - 2 * _SVG_MARGIN) / span_x
    height = span_y * scale + 2 * _SVG_MARGIN

    def to_px(p: tuple[float, float]) -> tuple[float, float]:
        px = _SVG_MARGIN + (p[0] - min(xs)) * scale
        py = _SVG_MARGIN + (max(ys) - p[1]) * scale
        return px, py

    xmax = float(x.max()) if x.size and x.max() > 0 else 1.0
    term_set = set(terminals or ())
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_WIDTH:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {_SVG_WIDTH:.0f} {height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for i, meta in enumerate(instance.edge_meta):
        sw = _MAX_STROKE * float(x[i]) / xmax
        if sw < 1e-3:
            continue
        x1, y1 = to_px(pos[meta.tail])
        x2, y2 = to_px(pos[meta.head])
        parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" '
                     f'y2="{y2:.2f}" stroke="#2b6cb0" stroke-width="{sw:.3f}" '
                     'stroke-linecap="round"/>')
    for v in instance.node_ids:
        cx, cy = to_px(pos[v])
        if v in term_set:
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5.0" '
                         'fill="#c53030"/>')
        else:
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2.0" '
                         'fill="#444444"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
