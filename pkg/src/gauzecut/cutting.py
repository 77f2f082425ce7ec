"""Scissors model and cut-episode execution.

The cutting arm is position controlled in the world frame: for waypoint ``n``
it closes at the waypoint's rest (material) location, whatever piece of cloth
happens to lie underneath after tensioning.  The world frame coincides with
the material frame of the undeformed mesh, so an undisturbed cloth is cut
exactly where intended.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .cloth import ClothState
from .scoring import DEFAULT_RESOLUTION, Score, achieved_mask, score_cuts

REWARD_TOL_MM = 1.0
DEFAULT_SETTLE_STEPS = 20
DEFAULT_D_MAX_MM = 15.0


class CuttingError(ValueError):
    pass


@dataclass(frozen=True)
class CutEvent:
    step_index: int
    scissor_world: tuple[float, float, float]
    severed_vertices: tuple[int, ...]
    material_point: tuple[float, float] | None

    @property
    def hit(self) -> bool:
        return self.material_point is not None


def sever_at(state: ClothState, world_point, radius: float,
             step_index: int = 0) -> tuple[ClothState, CutEvent]:
    """Sever every vertex whose world position lies within ``radius``.

    The event records the material coordinate of the closest vertex inside
    the ball.  Nothing inside the ball means a miss and the state is left
    untouched.
    """
    if not radius > 0:
        raise CuttingError("radius must be > 0")
    w = np.asarray(world_point, dtype=float)
    d = np.linalg.norm(state.pos - w[:, None], axis=0)
    inside = np.flatnonzero(d <= radius)
    if inside.size == 0:
        return state, CutEvent(step_index, tuple(w), (), None)
    nearest = int(inside[np.argmin(d[inside])])
    newly = []
    for v in inside:
        if _kernels.sever_vertex(int(v), state.rows, state.cols, state.act,
                                 state.kw, state.severed):
            newly.append(int(v))
    state.refresh()
    mat = tuple(float(x) for x in state.material[:, nearest])
    return state, CutEvent(step_index, tuple(w), tuple(newly), mat)


def point_polyline_distance(points, polyline) -> np.ndarray:
    """Euclidean distance from each point (k, 2) to a polyline (m, 2)."""
    p = np.atleast_2d(np.asarray(points, float))
    a = np.asarray(polyline, float)[:-1]
    b = np.asarray(polyline, float)[1:]
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("kij,ij->ki", ap, ab) / denom, 0.0, 1.0)
    foot = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - foot, axis=2).min(axis=1)


@dataclass
class EpisodeResult:
    intended: np.ndarray        # (N, 2) waypoints, mm
    achieved: np.ndarray        # (N, 2) material points, mm (nan on miss)
    hits: np.ndarray            # (N,) bool
    rewards: np.ndarray         # (N,) int
    displacement: np.ndarray    # (N, 2) grasp displacement after each action, mm
    severed: list[tuple[int, ...]]
    score: Score | None
    final_state: ClothState | None = field(default=None, repr=False)

    @property
    def reward_total(self) -> int:
        return int(self.rewards.sum())

    @property
    def events(self) -> list[CutEvent]:
        out = []
        for n, (w, m, h, sev) in enumerate(zip(self.intended, self.achieved,
                                               self.hits, self.severed)):
            mat = (float(m[0]), float(m[1])) if h else None
            out.append(CutEvent(n, (float(w[0]), float(w[1]), float("nan")), sev, mat))
        return out

    def same_outcome(self, other: "EpisodeResult") -> bool:
        return (np.array_equal(self.achieved, other.achieved, equal_nan=True)
                and np.array_equal(self.rewards, other.rewards)
                and np.array_equal(self.displacement, other.displacement)
                and self.score == other.score)


def write_episode_csv(result: EpisodeResult, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("step,intended_x,intended_y,achieved_x,achieved_y,reward\n")
        for n in range(len(result.intended)):
            ix, iy = result.intended[n]
            ax, ay = result.achieved[n]
            fh.write(f"{n},{ix:.9f},{iy:.9f},{ax:.9f},{ay:.9f},{int(result.rewards[n])}\n")
    return path


def as_actions(tension, horizon: int) -> np.ndarray:
    """Action ids for ``horizon`` steps; short or empty policies pad with stay."""
    seq = getattr(tension, "actions", tension)
    seq = np.zeros(0, dtype=np.int64) if seq is None else np.asarray(seq, dtype=np.int64)
    out = np.full(horizon, _kernels.STAY, dtype=np.int64)
    k = min(horizon, len(seq))
    out[:k] = seq[:k]
    if np.any((out < 0) | (out > 4)):
        raise CuttingError("action ids must be in 0..4")
    return out


class EpisodeSpec:
    """Everything fixed about a cut episode except the tension actions.

    Instances are immutable after construction and :meth:`run` works on
    private copies, so one spec can be evaluated from many threads at once.
    """

    def __init__(self, state0: ClothState, trajectory, pattern, grasp: int | None,
                 settle_steps: int = DEFAULT_SETTLE_STEPS, radius: float | None = None,
                 d_max: float = DEFAULT_D_MAX_MM, width_mm: float | None = None,
                 resolution: int = DEFAULT_RESOLUTION, reward_tol: float = REWARD_TOL_MM):
        if grasp is None:
            grasp = -1
        if grasp != -1:
            state0.check_vertex(grasp)
        self.state0 = state0
        self.trajectory = trajectory
        self.pattern = pattern
        self.grasp = int(grasp)
        self.settle_steps = int(settle_steps)
        self.radius = state0.spacing / 2 if radius is None else float(radius)
        self.d_max = float(d_max)
        self.width_mm = (state0.spacing * (state0.cols - 1)) if width_mm is None else width_mm
        self.resolution = int(resolution)
        self.reward_tol = float(reward_tol)
        self.waypoints = np.ascontiguousarray(trajectory.flat, dtype=float)
        if len(self.waypoints) == 0:
            raise CuttingError("trajectory is empty")
        self.pattern_s = np.asarray(trajectory.flat_s, float)
        self.pattern_mm = pattern.polyline() * self.width_mm
        if self.radius <= 0:
            raise CuttingError("radius must be > 0")
        gm = state0.material[:, max(self.grasp, 0)]
        clearance = point_polyline_distance(gm[None], self.waypoints)[0]
        if self.grasp >= 0 and clearance < state0.spacing / 2:
            raise CuttingError(
                f"grasp vertex {self.grasp} lies on the cutting trajectory "
                f"({clearance:.3f} mm away)")
        # the intended region is enclosed by the planned trajectory, built the
        # same way as the achieved region so that a perfect run scores 0
        self.order = np.argsort(self.pattern_s, kind="stable")
        self.intended = achieved_mask(self.waypoints / self.width_mm,
                                      np.ones(self.horizon, bool), self.order,
                                      pattern.closed, self.resolution)

    @property
    def horizon(self) -> int:
        return len(self.waypoints)

    def rewards(self, achieved, hits) -> np.ndarray:
        r = np.zeros(len(hits), dtype=np.int64)
        if np.any(hits):
            d = point_polyline_distance(achieved[hits], self.pattern_mm)
            r[hits] = d <= self.reward_tol
        return r

    def run(self, tension=None, keep_state: bool = False,
            with_score: bool = True) -> EpisodeResult:
        s0 = self.state0
        p = s0.params
        n = self.horizon
        P, Q = s0.pos.copy(), s0.prev.copy()
        free, pin = s0.free.copy(), s0.pin.copy()
        act, kw, severed = s0.act.copy(), s0.kw.copy(), s0.severed.copy()
        acc = np.zeros(s0.n_vertices)
        T = np.zeros((4, 3, s0.n_vertices))
        actions = as_actions(tension, n)
        out_mat = np.zeros((n, 2))
        out_hit = np.zeros(n, dtype=np.bool_)
        out_disp = np.zeros((n, 2))
        out_nsev = np.zeros(n, dtype=np.int64)
        out_when = np.full(s0.n_vertices, -1, dtype=np.int64)
        _kernels.run_episode(
            P, Q, free, pin, s0.rest, act, kw, severed, s0.material, s0.rows,
            s0.cols, p.diagonals, np.asarray(p.gravity, float), p.alpha, p.delta,
            p.tau, p.dt, p.constraint_iterations, self.grasp, actions,
            self.waypoints, self.settle_steps, self.radius, self.d_max, 1.0,
            acc, T, out_mat, out_hit, out_disp, out_nsev, out_when)
        achieved = np.where(out_hit[:, None], out_mat, np.nan)
        rewards = self.rewards(out_mat, out_hit)
        score = None
        if with_score:
            score = score_cuts(self.pattern, out_mat / self.width_mm, out_hit,
                               self.pattern_s, self.resolution, self.intended)
        final = None
        if keep_state:
            final = s0.copy()
            final.pos, final.prev, final.free, final.pin = P, Q, free, pin
            final.act, final.kw, final.severed = act, kw, severed
        order = np.argsort(out_when, kind="stable")
        bounds = np.searchsorted(out_when[order], np.arange(n + 1))
        severed_steps = [tuple(int(v) for v in order[bounds[i]:bounds[i + 1]])
                         for i in range(n)]
        return EpisodeResult(self.waypoints.copy(), achieved, out_hit, rewards,
                             out_disp, severed_steps, score, final)


def run_cut_episode(state0: ClothState, trajectory, tension, grasp: int, pattern,
                    **kwargs) -> EpisodeResult:
    """One full episode: tension move, settle, cut, for every waypoint."""
    return EpisodeSpec(state0, trajectory, pattern, grasp, **kwargs).run(tension, keep_state=True)
