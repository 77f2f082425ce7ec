"""Pattern ingestion and cutting-trajectory planning.

A pattern is a non-self-intersecting polyline in normalized material
coordinates ([0, 1]^2 over the gauze).  Planning splits it into segments at
sharp turns (notch points), orders and orients the segments, and resamples
them at a fixed arc-length step to produce the waypoint list the cutting
arm follows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class Pattern:
    waypoints: np.ndarray  # (m, 2), closing point not repeated
    closed: bool

    @property
    def self_intersecting(self) -> bool:
        return _self_intersects(self.polyline())

    def polyline(self) -> np.ndarray:
        """Vertices including the closing point for closed patterns."""
        if self.closed:
            return np.vstack([self.waypoints, self.waypoints[:1]])
        return self.waypoints

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.polyline(), axis=0), axis=1).sum())


@dataclass
class CutTrajectory:
    """Executable cutting plan.

    ``flat`` holds the waypoints in material millimetres; ``pattern_s`` is
    each waypoint's arc-length position along the source pattern (used to
    reassemble the achieved curve in pattern order); ``notch_indices`` are
    the flat indices where a new cut begins.
    """

    segments: list[np.ndarray]
    pattern_s: list[np.ndarray]
    notch_points: set[int] = field(default_factory=set)

    @property
    def flat(self) -> np.ndarray:
        return np.vstack(self.segments)

    @property
    def flat_s(self) -> np.ndarray:
        return np.concatenate(self.pattern_s)

    @property
    def notch_indices(self) -> list[int]:
        out, start = [], 0
        for seg in self.segments:
            out.append(start)
            start += len(seg)
        return out

    @property
    def segment_ids(self) -> np.ndarray:
        return np.concatenate([np.full(len(s), i) for i, s in enumerate(self.segments)])

    def __len__(self) -> int:
        return sum(len(s) for s in self.segments)


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-15 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-15 <= c[0] <= max(a[0], b[0]) + 1e-15 and
                min(a[1], b[1]) - 1e-15 <= c[1] <= max(a[1], b[1]) + 1e-15)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2)) or
            (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def _self_intersects(poly: np.ndarray) -> bool:
    closed = len(poly) > 3 and np.allclose(poly[0], poly[-1], atol=1e-9)
    m = len(poly) - 1
    for i in range(m):
        for j in range(i + 2, m):
            if closed and i == 0 and j == m - 1:
                continue  # first and last edge share the closing vertex
            if _segments_cross(poly[i], poly[i + 1], poly[j], poly[j + 1]):
                return True
    return False


def make_pattern(points, closed: bool | None = None) -> Pattern:
    """Validate and normalize a point list into a :class:`Pattern`."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PatternError("pattern points must be (m, 2)")
    if not np.all(np.isfinite(pts)):
        raise PatternError("pattern contains non-finite coordinates")
    if np.any(pts < -1e-12) or np.any(pts > 1 + 1e-12):
        raise PatternError("pattern coordinates must lie in [0, 1]^2")
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > 1e-12:
            keep.append(i)
    pts = pts[keep]
    auto_closed = len(pts) > 2 and np.linalg.norm(pts[0] - pts[-1]) <= 1e-9
    if auto_closed:
        pts = pts[:-1]
    closed = auto_closed if closed is None else (closed or auto_closed)
    if len(pts) < 2:
        raise PatternError("pattern needs at least 2 distinct points")
    if closed and len(pts) < 3:
        raise PatternError("closed pattern needs at least 3 distinct points")
    pattern = Pattern(pts, bool(closed))
    if pattern.self_intersecting:
        raise PatternError("pattern self-intersects")
    return pattern


def load_pattern(source) -> Pattern:
    """Read a pattern file: one ``x,y`` per line, optional ``closed`` header."""
    text = Path(source).read_text()
    force_closed = False
    pts = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower() == "closed" and not pts:
            force_closed = True
            continue
        try:
            x, y = (float(t) for t in line.split(","))
        except ValueError:
            raise PatternError(f"{source}:{lineno}: expected 'x,y', got {line!r}") from None
        pts.append((x, y))
    if not pts:
        raise PatternError(f"{source}: no points")
    return make_pattern(pts, closed=True if force_closed else None)


def write_pattern(pattern: Pattern, path) -> Path:
    path = Path(path)
    lines = ["closed"] if pattern.closed else []
    lines += [f"{x:.12g},{y:.12g}" for x, y in pattern.waypoints]
    path.write_text("\n".join(lines) + "\n")
    return path


def circle_pattern(diameter_mm: float = 50.0, n: int = 100,
                   center=(0.5, 0.5), width_mm: float = 101.6) -> Pattern:
    r = diameter_mm / 2 / width_mm
    t = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)])
    return make_pattern(pts, closed=True)


def line_pattern(start, end, n: int = 2) -> Pattern:
    pts = np.linspace(np.asarray(start, float), np.asarray(end, float), n)
    return make_pattern(pts, closed=False)


def turning_angles(pattern: Pattern) -> np.ndarray:
    """Absolute heading change (degrees) at every waypoint.

    Endpoints of open patterns have no turn and get 0.
    """
    pts = pattern.waypoints
    m = len(pts)
    ang = np.zeros(m)
    idx = range(m) if pattern.closed else range(1, m - 1)
    for i in idx:
        a = pts[i] - pts[i - 1]
        b = pts[(i + 1) % m] - pts[i]
        cross = a[0] * b[1] - a[1] * b[0]
        ang[i] = abs(math.degrees(math.atan2(cross, float(a @ b))))
    return ang


def find_notches(pattern: Pattern, theta_max: float = 60.0) -> list[int]:
    """Waypoint indices where the turn exceeds ``theta_max`` degrees."""
    return [int(i) for i in np.flatnonzero(turning_angles(pattern) > theta_max)]


def split_segments(pattern: Pattern, notches: Sequence[int]) -> list[np.ndarray]:
    """Cut the pattern polyline at the notch vertices (shared by neighbours)."""
    pts = pattern.waypoints
    m = len(pts)
    notches = sorted(set(notches))
    if pattern.closed:
        if not notches:
            return [np.vstack([pts, pts[:1]])]
        segs = []
        for a, b in zip(notches, notches[1:] + [notches[0] + m]):
            idx = [i % m for i in range(a, b + 1)]
            segs.append(pts[idx])
        return segs
    cuts = [0] + [i for i in notches if 0 < i < m - 1] + [m - 1]
    return [pts[a:b + 1] for a, b in zip(cuts, cuts[1:])]


def _segment_arc(pattern: Pattern, notches: Sequence[int]) -> list[np.ndarray]:
    """Arc-length positions along the pattern of each segment's vertices."""
    poly = pattern.polyline()
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(poly, axis=0), axis=1))])
    m = len(pattern.waypoints)
    notches = sorted(set(notches))
    if pattern.closed:
        if not notches:
            return [s]
        total = s[-1]
        out = []
        for a, b in zip(notches, notches[1:] + [notches[0] + m]):
            out.append(np.array([s[i] if i < m else s[i - m] + total for i in range(a, b + 1)]))
        return out
    cuts = [0] + [i for i in notches if 0 < i < m - 1] + [m - 1]
    return [s[a:b + 1] for a, b in zip(cuts, cuts[1:])]


@dataclass(frozen=True)
class DirectedSegment:
    index: int
    reversed: bool
    points: np.ndarray

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]


def _directed(segments, order, flips) -> list[DirectedSegment]:
    return [DirectedSegment(i, bool(f), segments[i][::-1] if f else segments[i])
            for i, f in zip(order, flips)]


def travel_distance(directed: Sequence[DirectedSegment]) -> float:
    """Total air travel between the end of one segment and the next start."""
    return float(sum(np.linalg.norm(b.start - a.end) for a, b in zip(directed, directed[1:])))


def order_segments(segments: Sequence[np.ndarray],
                   scorer: Callable[[list[DirectedSegment]], float] | None = None,
                   mode: str = "greedy") -> list[DirectedSegment]:
    """Order and orient segments.

    ``exhaustive`` tries every permutation and direction assignment and keeps
    the first (lexicographic) maximizer of ``scorer``; it is limited to six
    segments.  ``greedy`` chains nearest endpoints starting from segment 0.
    """
    segments = [np.asarray(s, float) for s in segments]
    k = len(segments)
    if k < 1:
        raise PatternError("need at least one segment")
    if mode == "exhaustive":
        if k > 6:
            raise PatternError(f"exhaustive ordering limited to 6 segments, got {k}; use greedy")
        if scorer is None:
            scorer = lambda d: -travel_distance(d)  # noqa: E731
        best, best_score = None, -math.inf
        for order in itertools.permutations(range(k)):
            for flips in itertools.product((False, True), repeat=k):
                cand = _directed(segments, order, flips)
                score = scorer(cand)
                if score > best_score:
                    best, best_score = cand, score
        return best
    if mode != "greedy":
        raise PatternError(f"unknown ordering mode {mode!r}")
    chain = [DirectedSegment(0, False, segments[0])]
    left = list(range(1, k))
    while left:
        here = chain[-1].end
        choice = None
        for i in left:
            for flip in (False, True):
                start = segments[i][-1] if flip else segments[i][0]
                d = float(np.linalg.norm(start - here))
                if choice is None or d < choice[0] - 1e-15:
                    choice = (d, i, flip)
        _, i, flip = choice
        chain.append(DirectedSegment(i, flip, segments[i][::-1] if flip else segments[i]))
        left.remove(i)
    return chain


def worst_order_score(segments, scorer) -> float:
    """Minimum of ``scorer`` over all orderings (sensitivity probe)."""
    k = len(segments)
    return min(scorer(_directed(segments, o, f))
               for o in itertools.permutations(range(k))
               for f in itertools.product((False, True), repeat=k))


def resample(points: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform arc-length resampling; returns (points, arc positions).

    Uses ``ceil(L / step)`` intervals so the spacing never exceeds ``step``.
    """
    d = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(d)])
    total = s[-1]
    k = max(1, math.ceil(total / step - 1e-9))
    t = np.linspace(0.0, total, k + 1)
    out = np.column_stack([np.interp(t, s, points[:, 0]), np.interp(t, s, points[:, 1])])
    return out, t


def build_trajectory(pattern: Pattern, ordered: Sequence[DirectedSegment],
                     step_length: float = 2.0, width_mm: float = 101.6,
                     theta_max: float = 60.0) -> CutTrajectory:
    """Resample the ordered segments into material-millimetre waypoints."""
    if not step_length > 0:
        raise PatternError("step_length must be > 0")
    notches = find_notches(pattern, theta_max)
    arcs = _segment_arc(pattern, notches)
    segs, svals = [], []
    for ds in ordered:
        pts = ds.points * width_mm
        src_s = arcs[ds.index][::-1] if ds.reversed else arcs[ds.index]
        res, t = resample(pts, step_length)
        segs.append(res)
        # map resampled arc length back onto the pattern's own arc length
        local = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        svals.append(np.interp(t, local, src_s) * width_mm)
    notch_pts = set()
    notch_xy = [pattern.waypoints[i] * width_mm for i in notches]
    start = 0
    for seg in segs:
        for j, p in enumerate(seg):
            if any(np.linalg.norm(p - q) < 1e-9 for q in notch_xy):
                notch_pts.add(start + j)
        start += len(seg)
    return CutTrajectory(segs, svals, notch_pts)


def plan(pattern: Pattern, theta_max: float = 60.0, step_length: float = 2.0,
         mode: str = "greedy", scorer=None, width_mm: float = 101.6) -> CutTrajectory:
    notches = find_notches(pattern, theta_max)
    segments = split_segments(pattern, notches)
    if mode == "exhaustive" and len(segments) > 6:
        mode = "greedy"
    ordered = order_segments(segments, scorer, mode)
    return build_trajectory(pattern, ordered, step_length, width_mm, theta_max)


def write_trajectory_csv(traj: CutTrajectory, path) -> Path:
    path = Path(path)
    starts = set(traj.notch_indices)
    seg_ids = traj.segment_ids
    with path.open("w") as fh:
        fh.write("n,x_mm,y_mm,segment,segment_start,notch,pattern_s_mm\n")
        for n, ((x, y), s) in enumerate(zip(traj.flat, traj.flat_s)):
            fh.write(f"{n},{x:.9f},{y:.9f},{seg_ids[n]},{int(n in starts)},"
                     f"{int(n in traj.notch_points)},{s:.9f}\n")
    return path


def read_trajectory_csv(path) -> CutTrajectory:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    segs, svals, notch = [], [], set()
    for sid in np.unique(rows[:, 3]).astype(int):
        sel = rows[:, 3] == sid
        segs.append(rows[sel, 1:3].copy())
        svals.append(rows[sel, 6].copy())
    notch = {int(i) for i in np.flatnonzero(rows[:, 5] == 1)}
    return CutTrajectory(segs, svals, notch)
