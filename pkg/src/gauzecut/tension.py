"""Tensioning policies and the cross-entropy policy search.

The tensioning arm holds one grasp vertex and, before every cut, moves it
1 mm along one of the cardinal directions or stays put.  The simulator is
deterministic, so a policy over (time index, displacement) states is fully
described by its open-loop action sequence, which is what is stored and
searched here.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from ._kernels import ACTION_DX, ACTION_DY, MINUS_X, MINUS_Y, PLUS_X, PLUS_Y, STAY
from .cutting import DEFAULT_D_MAX_MM, REWARD_TOL_MM, CutEvent, point_polyline_distance

ACTION_TOKENS = ("stay", "+x", "-x", "+y", "-y")
N_ACTIONS = len(ACTION_TOKENS)


class PolicyError(ValueError):
    pass


@dataclass
class TensionPolicy:
    actions: np.ndarray  # (N,) action ids
    grasp: int = -1
    d_max: float = DEFAULT_D_MAX_MM

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        if np.any((self.actions < 0) | (self.actions >= N_ACTIONS)):
            raise PolicyError("action ids must be in 0..4")

    def __len__(self) -> int:
        return len(self.actions)

    def tokens(self) -> list[str]:
        return [ACTION_TOKENS[a] for a in self.actions]


def displacement_trace(actions, d_max: float = DEFAULT_D_MAX_MM, move_mm: float = 1.0) -> np.ndarray:
    """Grasp displacement after each action, with moves past ``d_max`` turned into stay."""
    d = np.zeros(2)
    out = np.zeros((len(actions), 2))
    for n, a in enumerate(np.asarray(actions, dtype=int)):
        nd = d + move_mm * np.array([ACTION_DX[a], ACTION_DY[a]])
        if np.all(np.abs(nd) <= d_max + 1e-9):
            d = nd
        out[n] = d
    return out


def reward(event: CutEvent, pattern_mm, tol: float = REWARD_TOL_MM) -> int:
    """1 when the cut landed within ``tol`` of the marked curve, else 0.

    ``pattern_mm`` is the pattern polyline in material millimetres (closing
    point included for closed patterns).
    """
    if event.material_point is None:
        return 0
    d = point_polyline_distance(np.array(event.material_point)[None], pattern_mm)[0]
    return int(d <= tol)


def no_tension(horizon: int = 0, grasp: int = -1, d_max: float = DEFAULT_D_MAX_MM) -> TensionPolicy:
    return TensionPolicy(np.full(horizon, STAY), grasp, d_max)


def _step_toward(d, target) -> int:
    # shrink components first so the path never leaves the disc that holds
    # both the current and the target displacement
    gaps = target - d
    best = None
    for k in (0, 1):
        if gaps[k] == 0:
            continue
        shrinking = abs(d[k] + np.sign(gaps[k])) < abs(d[k])
        key = (not shrinking, -abs(gaps[k]), k)
        if best is None or key < best[0]:
            best = (key, k)
    if best is None:
        return STAY
    k = best[1]
    if k == 0:
        return PLUS_X if gaps[0] > 0 else MINUS_X
    return PLUS_Y if gaps[1] > 0 else MINUS_Y


def orthogonal_tension(trajectory, magnitude_mm: float, grasp: int = -1,
                       d_max: float = DEFAULT_D_MAX_MM) -> TensionPolicy:
    """Pull toward the left normal of the local cut direction.

    The target displacement is the normal scaled by ``magnitude_mm`` and
    truncated to whole millimetres; every step takes one 1 mm move toward
    it, so the displacement ramps up and then follows the tangent around.
    """
    if magnitude_mm > d_max:
        raise PolicyError(f"magnitude {magnitude_mm} exceeds D_max {d_max}")
    if magnitude_mm < 0:
        raise PolicyError("magnitude must be >= 0")
    pts = np.asarray(trajectory.flat if hasattr(trajectory, "flat") else trajectory, float)
    n = len(pts)
    actions = np.zeros(n, dtype=np.int64)
    d = np.zeros(2)
    for i in range(n):
        j0, j1 = (i, i + 1) if i + 1 < n else (i - 1, i)
        t = pts[j1] - pts[j0]
        norm = np.hypot(*t)
        normal = np.array([-t[1], t[0]]) / norm if norm > 0 else np.zeros(2)
        target = np.trunc(magnitude_mm * normal + 0.0)
        a = _step_toward(d, target)
        actions[i] = a
        d = d + np.array([ACTION_DX[a], ACTION_DY[a]])
    return TensionPolicy(actions, grasp, d_max)


def write_policy(policy: TensionPolicy, path) -> Path:
    path = Path(path)
    lines = [f"# grasp={policy.grasp} d_max={policy.d_max:g}"] + policy.tokens()
    path.write_text("\n".join(lines) + "\n")
    return path


def read_policy(path) -> TensionPolicy:
    grasp, d_max, acts = -1, DEFAULT_D_MAX_MM, []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                if key == "grasp":
                    grasp = int(val)
                elif key == "d_max":
                    d_max = float(val)
            continue
        if line not in ACTION_TOKENS:
            raise PolicyError(f"unknown action token {line!r}")
        acts.append(ACTION_TOKENS.index(line))
    return TensionPolicy(np.array(acts, dtype=np.int64), grasp, d_max)


@dataclass(frozen=True)
class Evaluation:
    score: float        # normalized symmetric difference
    score_count: int
    reward_total: int
    fitness: float


def fitness_of(reward_total: float, score: float, horizon: int, lam: float | None = None) -> float:
    lam = 10.0 * horizon if lam is None else lam
    return float(reward_total - lam * score)


def evaluate(policy, env, lam: float | None = None) -> Evaluation:
    """Run one episode and report score, reward total and fitness."""
    res = env.run(policy)
    return Evaluation(res.score.normalized, res.score.count, res.reward_total,
                      fitness_of(res.reward_total, res.score.normalized, env.horizon, lam))


class RiggedEnv:
    """Test environment: ``good`` is the only rewarded action at every step.

    It mimics the episode interface (``horizon`` and ``run``) with a zero
    score so fitness is the reward count alone.
    """

    def __init__(self, horizon: int, good: int = PLUS_Y):
        self.horizon = horizon
        self.good = good

    def run(self, tension):
        from .cutting import as_actions
        from .scoring import Score

        acts = as_actions(tension, self.horizon)

        class _Result:
            pass

        r = _Result()
        r.rewards = (acts == self.good).astype(np.int64)
        r.reward_total = int(r.rewards.sum())
        r.score = Score(0, 0.0)
        return r


@dataclass(frozen=True)
class LogRow:
    iteration: int
    best_fitness: float
    mean_fitness: float
    best_score: float


def _sample(probs: np.ndarray, gen: np.random.Generator, count: int) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = gen.random((count, probs.shape[0]))
    return (u[:, :, None] >= cdf[None, :, :]).sum(axis=2).astype(np.int64)


def cem_train(env, iterations: int = 10, population: int = 32,
              elite_fraction: float = 0.125, seed: int = 0,
              smoothing: float = 0.05, lam: float | None = None,
              threads: int = 1, grasp: int | None = None,
              d_max: float | None = None) -> tuple[TensionPolicy, list[LogRow]]:
    """Cross-entropy search over open-loop action sequences.

    Each time step carries its own categorical distribution over the five
    actions, initially uniform.  Every iteration samples ``population``
    sequences, keeps the top ``ceil(elite_fraction * population)`` by
    fitness and refits each step's distribution to the elite action counts
    with additive smoothing.  With a population of at least two, the first
    iteration includes the all-stay sequence and every iteration also tries
    the per-step most likely sequence.  The best sequence ever seen is
    returned.

    Args:
        env: object with ``horizon`` and ``run(actions)``; must be deterministic.
        iterations: number of refit rounds (>= 1).
        population: samples per round.
        elite_fraction: share of the population kept as elite, in (0, 1].
        seed: seed of the ``"cem"`` random stream.
        smoothing: pseudo-count added to every action when refitting.
        lam: weight on the normalized score; default ``10 * horizon``.
        threads: episodes evaluated concurrently.

    Returns:
        The best policy and one log row per iteration.
    """
    if iterations < 1:
        raise PolicyError("iterations must be >= 1")
    if population < 1 or (population < 2 and elite_fraction != 1.0):
        raise PolicyError("population must be >= 2 unless elite_fraction is 1")
    if not 0.0 < elite_fraction <= 1.0:
        raise PolicyError("elite_fraction must be in (0, 1]")
    if smoothing < 0:
        raise PolicyError("smoothing must be >= 0")
    horizon = env.horizon
    n_elite = max(1, math.ceil(elite_fraction * population - 1e-9))
    gen = rngmod.stream(seed, "cem")
    probs = np.full((horizon, N_ACTIONS), 1.0 / N_ACTIONS)
    best_seq, best_fit, best_score = None, -math.inf, math.nan
    log: list[LogRow] = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def score(seq):
        res = env.run(seq)
        return (fitness_of(res.reward_total, res.score.normalized, horizon, lam),
                res.score.normalized)

    try:
        for it in range(1, iterations + 1):
            pop = _sample(probs, gen, population)
            extra = []
            if population >= 2:
                if it == 1:
                    pop[0] = STAY
                extra.append(probs.argmax(axis=1))
            cands = list(pop) + extra
            results = list(pool.map(score, cands)) if pool else [score(c) for c in cands]
            fits = np.array([r[0] for r in results])
            for c, (f, s) in zip(cands, results):
                if f > best_fit:
                    best_seq, best_fit, best_score = c.copy(), f, s
            elite_idx = np.argsort(-fits[:population], kind="stable")[:n_elite]
            elite = pop[elite_idx]
            counts = np.zeros((horizon, N_ACTIONS))
            for a in range(N_ACTIONS):
                counts[:, a] = (elite == a).sum(axis=0)
            probs = (counts + smoothing) / (n_elite + N_ACTIONS * smoothing)
            log.append(LogRow(it, best_fit, float(fits[:population].mean()), best_score))
    finally:
        if pool:
            pool.shutdown()
    g = getattr(env, "grasp", -1) if grasp is None else grasp
    dm = getattr(env, "d_max", DEFAULT_D_MAX_MM) if d_max is None else d_max
    return TensionPolicy(best_seq, g, dm), log


def write_log_csv(log: list[LogRow], path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("iteration,best_fitness,mean_fitness,best_score\n")
        for r in log:
            fh.write(f"{r.iteration},{r.best_fitness:.9f},{r.mean_fitness:.9f},{r.best_score:.9f}\n")
    return path
