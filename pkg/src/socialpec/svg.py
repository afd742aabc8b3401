"""Static SVG figures: rollouts over ground truth, and motion-pattern banks."""
from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
# single-hue ramp, light to dark: lightness falls monotonically with the score
HEAT_LOW = np.array([255, 245, 235])
HEAT_HIGH = np.array([127, 39, 4])


class _Canvas:
    """World -> pixel mapping with y pointing up and a uniform scale."""

    def __init__(self, points: np.ndarray, size: int = 600, pad: float = 0.08):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = max(float(np.max(hi - lo)), 1e-6)
        self.center = (lo + hi) / 2
        self.scale = size * (1 - 2 * pad) / span
        self.size = size
        self.root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(size), height=str(size),
                               viewBox=f"0 0 {size} {size}")
        ET.SubElement(self.root, "rect", width="100%", height="100%", fill="white")

    def px(self, p) -> tuple[float, float]:
        p = np.asarray(p, dtype=np.float64)
        x = self.size / 2 + (p[..., 0] - self.center[0]) * self.scale
        y = self.size / 2 - (p[..., 1] - self.center[1]) * self.scale
        return x, y

    def points_attr(self, xy: np.ndarray) -> str:
        x, y = self.px(xy)
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(np.atleast_1d(x), np.atleast_1d(y)))

    def tostring(self) -> str:
        ET.indent(self.root)
        return ET.tostring(self.root, encoding="unicode", xml_declaration=True) + "\n"


def _polyline(parent, canvas: _Canvas, xy, **style) -> ET.Element:
    attrs = {"points": canvas.points_attr(xy), "fill": "none"}
    attrs.update({k.replace("_", "-"): str(v) for k, v in style.items()})
    return ET.SubElement(parent, "polyline", attrs)


def render_rollouts(observed: np.ndarray, samples: list[np.ndarray], truth: np.ndarray | None = None,
                    best: int | None = None, title: str = "") -> str:
    """One ``<g>`` per pedestrian: observed solid, truth dashed, samples faint, best sample bold.

    ``observed`` (M, t_h, 2); each sample and ``truth`` (M, t_pred, 2).
    Predicted polylines start at the last observed position.
    """
    observed = np.asarray(observed, dtype=np.float64)
    everything = [observed] + [np.asarray(s) for s in samples]
    if truth is not None:
        everything.append(np.asarray(truth))
    canvas = _Canvas(np.concatenate([a.reshape(-1, 2) for a in everything]))
    if title:
        ET.SubElement(canvas.root, "title").text = title
    for m in range(observed.shape[0]):
        color = PALETTE[m % len(PALETTE)]
        g = ET.SubElement(canvas.root, "g", {"id": f"ped-{m}", "class": "pedestrian"})
        anchor = observed[m, -1:]
        for i, s in enumerate(samples):
            if i != best:
                _polyline(g, canvas, np.concatenate([anchor, s[m]]), stroke=color, stroke_width=1,
                          stroke_opacity=0.25, **{"class": "sample"})
        if truth is not None:
            _polyline(g, canvas, np.concatenate([anchor, truth[m]]), stroke=color, stroke_width=2,
                      stroke_dasharray="6,4", **{"class": "truth"})
        if best is not None:
            _polyline(g, canvas, np.concatenate([anchor, samples[best][m]]), stroke=color, stroke_width=3,
                      **{"class": "best"})
        _polyline(g, canvas, observed[m], stroke=color, stroke_width=2.5, **{"class": "observed"})
    return canvas.tostring()


def heat_color(values) -> list[str]:
    """Map scores to hex colours on a light-to-dark ramp (larger score, darker colour)."""
    v = np.asarray(values, dtype=np.float64)
    span = float(v.max() - v.min()) if v.size else 0.0
    u = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    rgb = np.rint(HEAT_LOW[None] + u[:, None] * (HEAT_HIGH - HEAT_LOW)[None]).astype(int)
    return ["#%02x%02x%02x" % tuple(c) for c in rgb]


def render_patterns(patterns: np.ndarray, scores=None, context: np.ndarray | None = None,
                    target: np.ndarray | None = None, title: str = "") -> str:
    """Patterns (N, L, 2) as arrows in the ego frame, with the target marker at the origin.

    With ``scores`` (N,) each arrow is coloured by :func:`heat_color`;
    ``context`` (C, T, 2) and ``target`` (T, 2) trajectories are drawn underneath.
    """
    patterns = np.asarray(patterns, dtype=np.float64)
    extent = [patterns.reshape(-1, 2), np.zeros((1, 2))]
    for extra in (context, target):
        if extra is not None:
            extent.append(np.asarray(extra, dtype=np.float64).reshape(-1, 2))
    canvas = _Canvas(np.concatenate(extent))
    if title:
        ET.SubElement(canvas.root, "title").text = title
    defs = ET.SubElement(canvas.root, "defs")
    marker = ET.SubElement(defs, "marker", id="head", viewBox="0 0 10 10", refX="9", refY="5",
                           markerWidth="6", markerHeight="6", orient="auto-start-reverse")
    ET.SubElement(marker, "path", d="M 0 0 L 10 5 L 0 10 z", fill="context-stroke")
    if context is not None:
        g = ET.SubElement(canvas.root, "g", {"class": "context"})
        for c in np.asarray(context):
            _polyline(g, canvas, c, stroke="#999999", stroke_width=1.5, stroke_dasharray="3,3")
    if target is not None:
        g = ET.SubElement(canvas.root, "g", {"class": "target-history"})
        _polyline(g, canvas, target, stroke="#2ca02c", stroke_width=2)
    colors = heat_color(scores) if scores is not None else ["#1f77b4"] * len(patterns)
    g = ET.SubElement(canvas.root, "g", {"class": "patterns"})
    for j, (p, col) in enumerate(zip(patterns, colors)):
        attrs = {"class": "pattern", "marker-end": "url(#head)", "data-pattern": str(j)}
        if scores is not None:
            attrs["data-score"] = repr(float(scores[j]))
        line = _polyline(g, canvas, p, stroke=col, stroke_width=1.5)
        line.attrib.update(attrs)
    x, y = canvas.px(np.zeros(2))
    ET.SubElement(canvas.root, "polygon", {
        "class": "target", "fill": "#2ca02c", "stroke": "black",
        "points": f"{x + 9:.2f},{y:.2f} {x - 6:.2f},{y - 6:.2f} {x - 6:.2f},{y + 6:.2f}",
    })
    return canvas.tostring()
