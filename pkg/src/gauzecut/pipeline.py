"""Stage functions shared by the command line and the tests.

Each stage is a plain function of a :class:`~gauzecut.config.Scenario` (plus
the previous stage's in-memory products), so running the stages one by one
or through :func:`run_pipeline` gives the same numbers.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import cloth, planner, tension
from .config import Scenario
from .cutting import EpisodeSpec
from .grasp import sample_candidates, select_grasp


def cloth_params(sc: Scenario) -> cloth.ClothParams:
    c = sc.cloth
    return cloth.ClothParams(alpha=c.alpha, delta=c.delta, tau=c.tau,
                             gravity=tuple(float(g) for g in c.gravity),
                             constraint_iterations=c.constraint_iterations,
                             diagonals=c.diagonals)


def build_cloth(sc: Scenario) -> cloth.ClothState:
    """Mesh over the gauze square, settled under its pins before any cut."""
    c = sc.cloth
    state = cloth.new_mesh(c.rows, c.cols, c.width_mm / (c.cols - 1), c.pins, cloth_params(sc))
    if c.presettle_steps > 0:
        cloth.step(state, c.presettle_steps)
    return state


def load_pattern(sc: Scenario) -> planner.Pattern:
    if sc.pattern is None:
        return planner.circle_pattern(50.0, 100, width_mm=sc.cloth.width_mm)
    return planner.load_pattern(sc.resolve(sc.pattern))


def build_plan(sc: Scenario, pattern: planner.Pattern,
               state0: cloth.ClothState | None = None) -> planner.CutTrajectory:
    p = sc.planner
    scorer = None
    if p.ordering == "exhaustive":
        state0 = state0 if state0 is not None else build_cloth(sc)

        def scorer(directed):
            traj = planner.build_trajectory(pattern, directed, p.step_length,
                                            sc.cloth.width_mm, p.theta_max)
            env = make_env(sc, state0, traj, pattern, None)
            return -env.run(None).score.normalized

    return planner.plan(pattern, p.theta_max, p.step_length, p.ordering, scorer, sc.cloth.width_mm)


def make_env(sc: Scenario, state0, traj, pattern, grasp) -> EpisodeSpec:
    c = sc.cutting
    return EpisodeSpec(state0, traj, pattern, grasp, settle_steps=c.settle_steps,
                       radius=c.radius, d_max=sc.tension.d_max, width_mm=sc.cloth.width_mm,
                       resolution=c.resolution, reward_tol=c.reward_tol)


def train_cfg(sc: Scenario, threads: int = 1) -> dict:
    t = sc.tension
    return dict(iterations=t.iterations, population=t.population,
                elite_fraction=t.elite_fraction, seed=sc.seed, smoothing=t.smoothing,
                lam=t.lam, threads=threads)


def candidates(sc: Scenario, state0, pattern) -> list[int]:
    g = sc.grasp
    if g.candidates:
        return [int(v) for v in g.candidates]
    return sample_candidates(state0, g.k, pattern, g.margin, sc.seed, sc.cloth.width_mm)


def train(sc: Scenario, state0, traj, pattern, grasp: int, threads: int = 1):
    env = make_env(sc, state0, traj, pattern, grasp)
    return tension.cem_train(env, **train_cfg(sc, threads))


def grasp_search(sc: Scenario, state0, traj, pattern, threads: int = 1):
    cands = candidates(sc, state0, pattern)
    return select_grasp(cands, lambda v: make_env(sc, state0, traj, pattern, v),
                        train_cfg(sc, threads))


@dataclass
class ExecuteOutcome:
    trained: object
    no_tension: object
    orthogonal: object | None
    grasp: int


def execute(sc: Scenario, state0, traj, pattern, policy: tension.TensionPolicy) -> ExecuteOutcome:
    """Run the trained policy plus the no-tension and orthogonal baselines."""
    env = make_env(sc, state0, traj, pattern, policy.grasp)
    trained = env.run(policy, keep_state=True)
    base = env.run(None)
    orth = None
    if sc.tension.orthogonal_mm > 0:
        orth = env.run(tension.orthogonal_tension(traj, sc.tension.orthogonal_mm, policy.grasp,
                                                  sc.tension.d_max))
    return ExecuteOutcome(trained, base, orth, policy.grasp)


def bench(sc: Scenario, episodes: int, threads: int = 1, state0=None, traj=None,
          pattern=None, grasp=None) -> dict:
    """Time ``episodes`` full cut episodes (no-tension policy)."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    pattern = pattern or load_pattern(sc)
    state0 = state0 if state0 is not None else build_cloth(sc)
    traj = traj or build_plan(sc, pattern, state0)
    if grasp is None:
        grasp = candidates(sc, state0, pattern)[0] if sc.tension.grasp is None else sc.tension.grasp
    env = make_env(sc, state0, traj, pattern, grasp)
    env.run(None)  # compile and warm caches outside the timed region
    t0 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda _: env.run(None), range(episodes)))
    else:
        results = [env.run(None) for _ in range(episodes)]
    wall = time.perf_counter() - t0
    scores = np.array([r.score.count for r in results])
    steps = episodes * env.horizon * env.settle_steps
    return {
        "episodes": episodes,
        "threads": threads,
        "wall_s": wall,
        "episodes_per_s": episodes / wall,
        "steps_per_s": steps / wall,
        "horizon": env.horizon,
        "settle_steps": env.settle_steps,
        "identical_scores": bool(np.all(scores == scores[0])),
        "score_count": int(scores[0]),
    }
