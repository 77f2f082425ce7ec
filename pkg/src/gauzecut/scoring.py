"""Symmetric-difference scoring of intended versus achieved cut regions.

Curves live in normalized material coordinates over the unit square.  Open
curves are turned into regions by running both ends out to the nearest edge
of the cloth and following the boundary along the shorter arc between the two
exit points.  Regions are rasterized on a ``resolution x resolution`` grid of
cell centers and compared cell by cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import toggle_polygon

DEFAULT_RESOLUTION = 200

_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class RegionMask:
    resolution: int
    inside: np.ndarray  # (resolution, resolution) bool, row index = y

    def __post_init__(self):
        if self.inside.shape != (self.resolution, self.resolution):
            raise ScoringError("mask shape does not match resolution")

    @property
    def count(self) -> int:
        return int(self.inside.sum())


@dataclass(frozen=True)
class Score:
    count: int
    normalized: float


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counterclockwise)."""
    p = np.asarray(poly, float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _exit(point) -> tuple[np.ndarray, float]:
    """Foot of the perpendicular to the nearest square edge and its perimeter
    parameter ``s`` in [0, 4), counterclockwise from the origin."""
    x, y = float(np.clip(point[0], 0, 1)), float(np.clip(point[1], 0, 1))
    dists = [y, 1 - x, 1 - y, x]  # bottom, right, top, left
    edge = int(np.argmin(dists))
    if edge == 0:
        return np.array([x, 0.0]), x
    if edge == 1:
        return np.array([1.0, y]), 1.0 + y
    if edge == 2:
        return np.array([x, 1.0]), 3.0 - x
    return np.array([0.0, y]), (4.0 - y) % 4.0


def _ccw_corners(s0: float, s1: float) -> list[np.ndarray]:
    """Square corners met walking counterclockwise from ``s0`` to ``s1``."""
    span = (s1 - s0) % 4.0
    out = []
    k = np.floor(s0) + 1.0
    while k - s0 < span - 1e-15:
        out.append(_CORNERS[int(k) % 4])
        k += 1.0
    return out


def close_curve(curve, closed: bool) -> np.ndarray:
    """Closed polygon (m, 2) enclosing the region cut out by ``curve``.

    >>> close_curve([[0, 0.2], [0.2, 0]], closed=False).tolist()
    [[0.0, 0.2], [0.2, 0.0], [0.0, 0.0]]
    """
    pts = np.asarray(curve, float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ScoringError("curve needs at least 2 points")
    if closed:
        if len(pts) > 1 and np.allclose(pts[0], pts[-1], atol=1e-12):
            pts = pts[:-1]
        poly = pts
    else:
        a, sa = _exit(pts[0])
        b, sb = _exit(pts[-1])
        body = list(pts)
        if np.linalg.norm(a - pts[0]) > 1e-12:
            body.insert(0, a)
        if np.linalg.norm(b - pts[-1]) > 1e-12:
            body.append(b)
        ccw = (sb - sa) % 4.0
        if ccw <= 2.0 + 1e-12:
            # counterclockwise arc start -> end, traversed backwards
            back = _ccw_corners(sa, sb)[::-1]
        else:
            back = _ccw_corners(sb, sa)
        poly = np.array(body + back)
        # drop a repeated closing point (curve ending where it started)
        if len(poly) > 1 and np.allclose(poly[0], poly[-1], atol=1e-12):
            poly = poly[:-1]
    if len(poly) < 3 or abs(polygon_area(poly)) < 1e-12:
        raise ScoringError("closure has zero area")
    return poly


def rasterize(polygon, resolution: int = DEFAULT_RESOLUTION) -> RegionMask:
    """Even-odd fill of a closed polygon over the unit square."""
    mask = np.zeros((resolution, resolution), dtype=bool)
    toggle(mask, polygon)
    return RegionMask(resolution, mask)


def toggle(mask: np.ndarray, polygon) -> np.ndarray:
    """XOR the even-odd interior of ``polygon`` into ``mask`` in place."""
    p = np.ascontiguousarray(np.asarray(polygon, float))
    if len(p) >= 3:
        toggle_polygon(mask, np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]))
    return mask


def symmetric_difference(intended: RegionMask, achieved: RegionMask) -> Score:
    if intended.resolution != achieved.resolution:
        raise ScoringError(
            f"resolution mismatch: {intended.resolution} vs {achieved.resolution}")
    count = int(np.count_nonzero(intended.inside ^ achieved.inside))
    return Score(count, count / intended.resolution ** 2)


def intended_mask(pattern, resolution: int = DEFAULT_RESOLUTION) -> RegionMask:
    return rasterize(close_curve(pattern.polyline(), pattern.closed), resolution)


def achieved_pieces(points, hits, order) -> list[np.ndarray]:
    """Split the achieved cut trace into runs of consecutive hits.

    Points are visited in ``order`` (pattern arc-length order); every miss
    ends the current piece.  Single-point pieces enclose nothing and are
    dropped.
    """
    points = np.asarray(points, float)
    hits = np.asarray(hits, bool)
    pieces, cur = [], []
    for i in order:
        if hits[i]:
            cur.append(points[i])
        else:
            if len(cur) >= 2:
                pieces.append(np.array(cur))
            cur = []
    if len(cur) >= 2:
        pieces.append(np.array(cur))
    return pieces


def achieved_mask(points, hits, order, closed: bool,
                  resolution: int = DEFAULT_RESOLUTION) -> RegionMask:
    """Region enclosed by the achieved cuts, pieces XOR-accumulated.

    A fully hit closed pattern is one polygon.  A broken closed pattern has
    each piece closed by its own chord; open-pattern pieces close against the
    cloth boundary like the intended curve does.
    """
    pieces = achieved_pieces(points, hits, order)
    mask = np.zeros((resolution, resolution), dtype=bool)
    for piece in pieces:
        try:
            toggle(mask, close_curve(piece, closed=closed))
        except ScoringError:
            continue  # degenerate piece encloses nothing
    return RegionMask(resolution, mask)


def score_cuts(pattern, material_points_norm, hits, pattern_s,
               resolution: int = DEFAULT_RESOLUTION,
               intended: RegionMask | None = None) -> Score:
    """Score an episode's recorded cuts against the pattern."""
    order = np.argsort(np.asarray(pattern_s), kind="stable")
    if intended is None:
        intended = intended_mask(pattern, resolution)
    achieved = achieved_mask(material_points_norm, hits, order, pattern.closed, resolution)
    return symmetric_difference(intended, achieved)


def write_pbm(mask: RegionMask, path) -> Path:
    """Plain PBM (P1); 1 = inside, top row of the image is y = 1."""
    path = Path(path)
    img = mask.inside[::-1].astype(np.uint8)
    lines = [f"P1\n{mask.resolution} {mask.resolution}"]
    lines += [" ".join(map(str, row)) for row in img]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_pbm(path) -> RegionMask:
    tokens = [t for line in Path(path).read_text().splitlines()
              if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P1":
        raise ScoringError("not a plain PBM file")
    w, h = int(tokens[1]), int(tokens[2])
    if w != h:
        raise ScoringError("mask must be square")
    data = np.array(tokens[3:3 + w * h], dtype=np.uint8).reshape(h, w)
    return RegionMask(w, data[::-1].astype(bool))
