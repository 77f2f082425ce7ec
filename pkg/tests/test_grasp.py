import math

import numpy as np
import pytest

from gauzecut import grasp
from gauzecut.cutting import EpisodeSpec
from gauzecut.grasp import GraspError

W = 101.6
CFG = dict(iterations=2, population=6, seed=0)


def test_eligible_excludes_pattern_band_and_pins(settled_gauze, circle):
    elig = grasp.eligible_vertices(settled_gauze, circle, 5.0)
    for v in (0, 24, 600, 624):
        assert v not in elig
    centre = np.array([0.5, 0.5]) * W
    r = np.linalg.norm(settled_gauze.material.T[elig] - centre, axis=1)
    assert np.all(np.abs(r - 25.0) > 5.0 - 0.05)


def test_k_equal_to_pool_returns_everything(settled_gauze, circle):
    pool = grasp.eligible_vertices(settled_gauze, circle, 5.0)
    got = grasp.sample_candidates(settled_gauze, len(pool), circle, 5.0, seed=3)
    assert sorted(got) == sorted(pool.tolist())


def test_too_large_margin_is_an_error(settled_gauze, circle):
    with pytest.raises(GraspError):
        grasp.sample_candidates(settled_gauze, 1, circle, margin_mm=200.0)
    with pytest.raises(GraspError):
        grasp.sample_candidates(settled_gauze, 0, circle)


def test_sampling_is_seeded(settled_gauze, circle):
    a = grasp.sample_candidates(settled_gauze, 20, circle, seed=11)
    b = grasp.sample_candidates(settled_gauze, 20, circle, seed=11)
    c = grasp.sample_candidates(settled_gauze, 20, circle, seed=12)
    assert a == b and a != c
    assert len(set(a)) == 20


def test_single_candidate_wins(settled_gauze, circle, circle_traj):
    best, reports = grasp.select_grasp(
        [80], lambda v: EpisodeSpec(settled_gauze, circle_traj, circle, v), CFG)
    assert best.vertex == 80 and len(reports) == 1 and best.ok


def test_tie_goes_to_lower_vertex():
    class Flat:
        horizon = 4

        def __init__(self, v):
            self.v = v

        def run(self, tension):
            from gauzecut.tension import RiggedEnv
            return RiggedEnv(4).run(tension)

    best, reports = grasp.select_grasp([9, 3, 7], Flat, CFG)
    assert [r.score for r in reports] == [0.0, 0.0, 0.0]
    assert best.vertex == 3


def test_failed_candidates_reported_not_chosen(settled_gauze, circle, circle_traj):
    on_path = int(np.argmin(np.linalg.norm(settled_gauze.material.T - circle_traj.flat[0], axis=1)))
    best, reports = grasp.select_grasp(
        [on_path, 80], lambda v: EpisodeSpec(settled_gauze, circle_traj, circle, v), CFG)
    assert len(reports) == 2
    bad = [r for r in reports if not r.ok]
    assert len(bad) == 1 and bad[0].vertex == on_path and "CuttingError" in bad[0].status
    assert math.isnan(bad[0].score)
    assert best.vertex == 80


def test_all_failing_is_an_error(settled_gauze, circle, circle_traj):
    def broken(v):
        raise RuntimeError("no arm")
    with pytest.raises(GraspError, match="every grasp candidate failed"):
        grasp.select_grasp([1, 2], broken, CFG)


def test_rigid_region_candidate_wins_contrast(contrast_scene):
    state, line, traj, rigid, loose = contrast_scene
    assert state.free[rigid] == 1.0 and state.free[loose] == 1.0
    best, reports = grasp.select_grasp(
        [loose, rigid], lambda v: EpisodeSpec(state, traj, line, v), CFG)
    by_vertex = {r.vertex: r for r in reports}
    assert by_vertex[rigid].score == 0.0
    assert best.vertex == rigid
    assert best.score == min(r.score for r in reports if r.ok)


def test_winner_is_minimum_over_reports(settled_gauze, circle, circle_traj):
    cands = grasp.sample_candidates(settled_gauze, 3, circle, seed=7)
    best, reports = grasp.select_grasp(
        cands, lambda v: EpisodeSpec(settled_gauze, circle_traj, circle, v), CFG)
    assert len(reports) == 3
    assert best.score == min(r.score for r in reports)


def test_reports_csv_is_deterministic(tmp_path, settled_gauze, circle, circle_traj):
    def run(name):
        cands = grasp.sample_candidates(settled_gauze, 2, circle, seed=5)
        _, reports = grasp.select_grasp(
            cands, lambda v: EpisodeSpec(settled_gauze, circle_traj, circle, v), CFG)
        return grasp.write_reports_csv(reports, tmp_path / name).read_bytes()

    a, b = run("a.csv"), run("b.csv")
    assert a == b
    assert a.decode().splitlines()[0] == "vertex,mat_x,mat_y,score,reward_total,status"
