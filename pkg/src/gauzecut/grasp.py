"""Grasp-point selection by sampling candidates and training a policy for each."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import rng as rngmod
from .cutting import point_polyline_distance
from .tension import TensionPolicy, cem_train, evaluate

DEFAULT_K = 20
DEFAULT_MARGIN_MM = 5.0


class GraspError(ValueError):
    pass


@dataclass
class GraspCandidateReport:
    vertex: int
    material: tuple[float, float]
    policy: TensionPolicy | None
    score: float
    reward_total: int
    status: str = "ok"
    log: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def eligible_vertices(state, pattern, margin_mm: float = DEFAULT_MARGIN_MM,
                      width_mm: float | None = None) -> np.ndarray:
    """Free vertices farther than ``margin_mm`` from the pattern curve."""
    width_mm = state.spacing * (state.cols - 1) if width_mm is None else width_mm
    d = point_polyline_distance(state.material.T, pattern.polyline() * width_mm)
    return np.flatnonzero((d > margin_mm) & (state.free != 0.0))


def sample_candidates(state, k: int, pattern, margin_mm: float = DEFAULT_MARGIN_MM,
                      seed: int = 0, width_mm: float | None = None) -> list[int]:
    """``k`` distinct eligible vertices drawn uniformly without replacement."""
    if k < 1:
        raise GraspError("K must be >= 1")
    pool = eligible_vertices(state, pattern, margin_mm, width_mm)
    if k > len(pool):
        raise GraspError(f"K={k} exceeds the {len(pool)} eligible vertices")
    gen = rngmod.stream(seed, "grasp")
    return [int(v) for v in gen.choice(pool, size=k, replace=False)]


def select_grasp(candidates, make_env: Callable[[int], object], train_cfg: dict | None = None,
                 threads: int = 1) -> tuple[GraspCandidateReport, list[GraspCandidateReport]]:
    """Train and evaluate one policy per candidate; lowest score wins.

    ``make_env(vertex)`` builds the episode for a grasp vertex.  Every
    candidate gets the same training budget (``train_cfg`` is passed to
    :func:`cem_train`).  A candidate whose setup or training raises is
    reported with an error status and left out of the choice.  Ties go to
    the lowest vertex id.
    """
    candidates = sorted({int(v) for v in candidates})
    if not candidates:
        raise GraspError("need at least one candidate")
    cfg = dict(train_cfg or {})

    def one(v):
        try:
            env = make_env(v)
            policy, log = cem_train(env, **cfg)
            ev = evaluate(policy, env, cfg.get("lam"))
            mat = tuple(float(x) for x in env.state0.material[:, v]) if hasattr(env, "state0") else (math.nan, math.nan)
            return GraspCandidateReport(v, mat, policy, ev.score, ev.reward_total, "ok", log)
        except Exception as exc:  # recorded, not raised: other candidates may succeed
            return GraspCandidateReport(v, (math.nan, math.nan), None, math.nan, 0,
                                        f"error: {type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, candidates))
    else:
        reports = [one(v) for v in candidates]
    good = [r for r in reports if r.ok]
    if not good:
        raise GraspError("every grasp candidate failed: " + "; ".join(r.status for r in reports))
    best = min(good, key=lambda r: (r.score, r.vertex))
    return best, reports


def write_reports_csv(reports, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("vertex,mat_x,mat_y,score,reward_total,status\n")
        for r in sorted(reports, key=lambda r: r.vertex):
            status = r.status.replace(",", ";").replace("\n", " ")
            fh.write(f"{r.vertex},{r.material[0]:.9f},{r.material[1]:.9f},"
                     f"{r.score:.9f},{r.reward_total},{status}\n")
    return path
