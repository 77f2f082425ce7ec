"""Command-line entry point: ``gauzecut <command> [options]``.

Every command writes its CSV results into the output directory together with
``manifest.json`` (scenario hash, seed, versions, timestamp, output hashes).
Unless ``--no-figures`` is given, PNG figures go into ``<out>/figures``.  On
failure a machine-readable ``error.json`` is written and the exit status is
nonzero.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import platform
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, camera, cloth, config, cutting, pipeline, planner, stewart, sync, tension
from .rng import stream
from .grasp import write_reports_csv

OUT_ENV = "GAUZECUT_OUT"


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, args, scenario: config.Scenario):
        self.args = args
        self.scenario = scenario
        root = Path(os.environ.get(OUT_ENV, "runs"))
        out = args.out or scenario.resolve(scenario.output) or root / args.command
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []
        self.figures = not args.no_figures

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def figure(self, name: str) -> Path | None:
        return self.path(f"figures/{name}") if self.figures else None

    def manifest(self, extra: dict | None = None) -> Path:
        import numba
        import scipy

        def sha(p):
            return hashlib.sha256(p.read_bytes()).hexdigest()

        data = {
            "command": " ".join(self.args.argv),
            "scenario_sha256": self.scenario.digest(),
            "scenario": self.scenario.to_dict(),
            "seed": self.scenario.seed,
            "versions": {
                "gauzecut": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "numba": numba.__version__,
                "scipy": scipy.__version__,
                "platform": platform.platform(),
            },
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "outputs": {str(p.relative_to(self.out)): sha(p) for p in self.outputs if p.exists()},
        }
        if extra:
            data.update(extra)
        p = self.out / "manifest.json"
        p.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
        return p


def _write_rows(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return v


# -- cutting pipeline stages --------------------------------------------------

def _setup(run: Run):
    sc = run.scenario
    pattern = pipeline.load_pattern(sc)
    state0 = pipeline.build_cloth(sc)
    traj = pipeline.build_plan(sc, pattern, state0)
    return pattern, state0, traj


def _stage_plan(run: Run, pattern, traj):
    planner.write_trajectory_csv(traj, run.path("trajectory.csv"))
    if run.figures:
        from . import plotting
        plotting.plot_trajectory(pattern, traj, run.figure("trajectory.png"), run.scenario.cloth.width_mm)
    return {"waypoints": len(traj), "segments": len(traj.segments),
            "notches": len(traj.notch_points)}


def _write_policy_outputs(run: Run, policy, log):
    tension.write_policy(policy, run.path("policy.txt"))
    tension.write_log_csv(log, run.path("train_log.csv"))
    if run.figures:
        from . import plotting
        plotting.plot_training(log, run.figure("training.png"))


def _stage_grasp(run: Run, state0, traj, pattern):
    best, reports = pipeline.grasp_search(run.scenario, state0, traj, pattern, run.args.threads)
    write_reports_csv(reports, run.path("grasp_reports.csv"))
    _write_policy_outputs(run, best.policy, best.log)
    if run.figures:
        from . import plotting
        plotting.plot_grasp_reports(reports, best, run.figure("grasp_scores.png"))
    return best


def _stage_execute(run: Run, state0, traj, pattern, policy):
    sc = run.scenario
    out = pipeline.execute(sc, state0, traj, pattern, policy)
    cutting.write_episode_csv(out.trained, run.path("episode.csv"))
    rows = []
    for name, res in (("trained", out.trained), ("no_tension", out.no_tension),
                      ("orthogonal", out.orthogonal)):
        if res is not None:
            rows.append([name, out.grasp, res.score.count, _fmt(res.score.normalized),
                         res.reward_total])
    _write_rows(run.path("score.csv"),
                ["policy", "grasp", "score_count", "score_normalized", "reward_total"], rows)
    cloth.write_snapshot_csv(out.trained.final_state, run.path("final_cloth.csv"))
    if run.figures:
        from . import plotting
        w = sc.cloth.width_mm
        plotting.plot_episode(out.trained, run.figure("episode_trained.png"), w,
                              f"trained: score {out.trained.score.count}")
        plotting.plot_episode(out.no_tension, run.figure("episode_no_tension.png"), w,
                              f"no tension: score {out.no_tension.score.count}")
    return out


def _policy_for_execute(run: Run):
    path = Path(run.args.policy) if run.args.policy else run.out / "policy.txt"
    if path.exists():
        return tension.read_policy(path)
    g = run.scenario.tension.grasp
    if g is None:
        raise config.ConfigError(f"no policy at {path} and no tension.grasp in the scenario")
    return tension.no_tension(0, g, run.scenario.tension.d_max)


def cmd_plan(run: Run):
    pattern = pipeline.load_pattern(run.scenario)
    state0 = pipeline.build_cloth(run.scenario) if run.scenario.planner.ordering == "exhaustive" else None
    traj = pipeline.build_plan(run.scenario, pattern, state0)
    return _stage_plan(run, pattern, traj)


def cmd_train(run: Run):
    pattern, state0, traj = _setup(run)
    g = run.args.grasp if run.args.grasp is not None else run.scenario.tension.grasp
    if g is None:
        g = pipeline.candidates(run.scenario, state0, pattern)[0]
    policy, log = pipeline.train(run.scenario, state0, traj, pattern, g, run.args.threads)
    _write_policy_outputs(run, policy, log)
    return {"grasp": g, "best_fitness": log[-1].best_fitness}


def cmd_grasp(run: Run):
    pattern, state0, traj = _setup(run)
    best = _stage_grasp(run, state0, traj, pattern)
    return {"grasp": best.vertex, "score": best.score}


def cmd_execute(run: Run):
    pattern, state0, traj = _setup(run)
    out = _stage_execute(run, state0, traj, pattern, _policy_for_execute(run))
    return {"score": out.trained.score.count, "no_tension_score": out.no_tension.score.count}


def cmd_pipeline(run: Run):
    pattern, state0, traj = _setup(run)
    info = _stage_plan(run, pattern, traj)
    best = _stage_grasp(run, state0, traj, pattern)
    out = _stage_execute(run, state0, traj, pattern, best.policy)
    info.update(grasp=best.vertex, score=out.trained.score.count,
                no_tension_score=out.no_tension.score.count)
    return info


def cmd_bench(run: Run):
    counts = [1] + ([run.args.threads] if run.args.threads > 1 else [])
    rows = [pipeline.bench(run.scenario, run.args.episodes, t) for t in counts]
    keys = list(rows[0])
    _write_rows(run.path("bench.csv"), keys, [[_fmt(r[k]) for k in keys] for r in rows])
    if run.figures and len(rows) > 1:
        from . import plotting
        plotting.plot_bench(rows, run.figure("bench.png"))
    return {"bench": rows}


# -- platform, sync and camera utilities --------------------------------------

def _dims(sc: config.Scenario) -> stewart.PlatformDims:
    return stewart.PlatformDims(**sc.platform.dims)


def cmd_stewart(run: Run):
    sc, a = run.scenario, run.args
    dims = _dims(sc)
    if a.action == "ik":
        if a.poses:
            poses = stewart.read_poses_csv(a.poses)
        else:
            vals = a.pose if a.pose else [0, 0, dims.Z_home, 0, 0, 0]
            poses = [stewart.PlatformPose.from_array(vals)]
        sols = [stewart.inverse_kinematics(p, dims, quantize=a.quantize) for p in poses]
        stewart.write_angles_csv(sols, run.path("angles.csv"))
        return {"max_residual": max(max(abs(r) for r in s.residuals) for s in sols)}
    if a.action == "fk":
        angles = stewart.read_angles_csv(a.angles_csv) if a.angles_csv else [np.array(a.angles)]
        poses = [stewart.forward_kinematics(x, dims) for x in angles]
        stewart.write_poses_csv(poses, run.path("poses.csv"))
        return {"poses": len(poses)}
    m = sc.platform.motion
    mode = stewart.motion_mode(a.axis or m.axis, a.mode or m.mode,
                               m.A if a.A is None else a.A,
                               m.omega if a.omega is None else a.omega, dims)
    t = np.arange(0.0, m.duration + 1e-12, 1.0 / m.rate)
    y = mode.value(t)
    rows, worst = [], 0.0
    for ti, yi in zip(t, y):
        pose = mode(float(ti))
        try:
            sol = stewart.inverse_kinematics(pose, dims)
            ang = sol.angles
            worst = max(worst, max(abs(r) for r in sol.residuals))
        except stewart.Unreachable:
            ang = (float("nan"),) * 6
        rows.append([f"{ti:.6f}", _fmt(yi)] + [_fmt(v) for v in ang] + [int(stewart.range_check(pose, dims))])
    _write_rows(run.path("mode.csv"), ["t", "value", "a1", "a2", "a3", "a4", "a5", "a6", "in_range"], rows)
    if run.figures:
        from . import plotting
        plotting.plot_series(t, {mode.mode: y}, run.figure("mode.png"),
                             ylabel=f"{mode.axis} offset")
    return {"samples": len(t), "max_residual": worst}


def _model(sc: config.Scenario) -> sync.DisturbanceModel:
    s = sc.sync
    axes = {k: sync.Sinusoid(float(v["A"]), float(v["omega"]), float(v.get("phi", 0.0)))
            for k, v in s.axes.items()}
    return sync.DisturbanceModel(axes, s.sigma_omega_rel, s.sigma_phi, s.latency_mean, s.latency_jitter)


def cmd_sync(run: Run):
    sc, s = run.scenario, run.scenario.sync
    model = _model(sc)
    if run.args.action == "budget":
        reps = {}
        for name in ("full_sync", "intermittent"):
            ctrl = sync.controller_from_name(name, s.window_s)
            reps[name] = sync.error_budget(model, ctrl, s.trials, sc.seed, s.horizon_s, s.dt)
        sync.write_budget_csv(reps, run.path("budget.csv"))
        keys = ["rms", "worst_case", "worst_rms", "analytic_phase_only", "analytic_with_latency",
                "analytic_latency_increment", "physical_phase_only", "physical_with_latency"]
        _write_rows(run.path("budget_summary.csv"), ["controller"] + keys,
                    [[n] + [_fmt(getattr(r, k)) for k in keys] for n, r in reps.items()])
        if run.figures:
            from . import plotting
            plotting.plot_budget(reps, run.figure("budget.png"))
        return {k: getattr(reps["full_sync"], k) for k in keys}
    truth = model.axis()
    g = stream(sc.seed, "estimate")
    est = sync.Sinusoid(truth.A, truth.omega * (1 + s.sigma_omega_rel * g.standard_normal()),
                        truth.phi + s.sigma_phi * g.standard_normal())
    commanded = np.zeros(int(round(s.path_s / s.dt)))
    series, summary, rows = {}, {}, []
    for name in ("open_loop", "full_sync", "intermittent"):
        ctrl = sync.controller_from_name(name, s.window_s)
        tr = sync.execute(ctrl, commanded, truth, est, dt=s.dt, seed=sc.seed, jitter=s.latency_jitter)
        sync.write_trace_csv(tr, run.path(f"trace_{name}.csv"))
        rows.append([name, _fmt(tr.rms_error), _fmt(tr.max_error), _fmt(tr.completion_time)])
        summary[name] = tr.max_error
        series[name] = tr
    _write_rows(run.path("run_summary.csv"), ["controller", "rms", "max", "completion_s"], rows)
    if run.figures:
        from . import plotting
        tmax = series["open_loop"].t
        plotting.plot_series(tmax, {n: np.interp(tmax, tr.t, np.where(tr.active, tr.error, np.nan))
                                    for n, tr in series.items()},
                             run.figure("sync_errors.png"), ylabel="tracking error")
    return summary


def cmd_camera(run: Run):
    a = run.args
    C = camera.read_matrix_csv(a.camera)
    samples = camera.read_matrix_csv(a.samples)
    T = camera.read_matrix_csv(a.transform)
    camera.CameraModel(C, samples)
    fit = camera.rigid_inverse_map(C, T, samples)
    camera.write_transform_csv(fit, run.path("f_rigid.csv"))
    pose = camera.pose_for_camera_motion(fit.transform, _dims(run.scenario), a.mm_per_unit)
    out_of_range = isinstance(pose, camera.OutOfRange)
    p = pose.clamped if out_of_range else pose
    _write_rows(run.path("pose.csv"), ["x", "y", "z", "roll", "pitch", "yaw", "out_of_range"],
                [[_fmt(v) for v in p.as_array()] + [int(out_of_range)]])
    return {"max_residual": float(fit.residuals.max()), "out_of_range": out_of_range}


COMMANDS = {
    "plan": cmd_plan, "train": cmd_train, "grasp": cmd_grasp, "execute": cmd_execute,
    "pipeline": cmd_pipeline, "bench": cmd_bench, "stewart": cmd_stewart, "sync": cmd_sync,
    "camera": cmd_camera,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="YAML scenario file")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--episodes", type=int, default=100, help="episodes for bench")
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    ap = argparse.ArgumentParser(prog="gauzecut", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("plan", parents=[common], help="pattern -> trajectory CSV")
    p = sub.add_parser("train", parents=[common], help="train a tension policy")
    p.add_argument("--grasp", type=int)
    sub.add_parser("grasp", parents=[common], help="grasp-point search")
    p = sub.add_parser("execute", parents=[common], help="run and score a policy")
    p.add_argument("--policy", help="policy file (default <out>/policy.txt)")
    sub.add_parser("pipeline", parents=[common], help="plan, grasp search, execute")
    sub.add_parser("bench", parents=[common], help="episode throughput")

    st = sub.add_parser("stewart", help="platform kinematics").add_subparsers(dest="action", required=True)
    p = st.add_parser("ik", parents=[common])
    p.add_argument("--pose", type=float, nargs=6, metavar=("X", "Y", "Z", "ROLL", "PITCH", "YAW"))
    p.add_argument("--poses", help="CSV of poses")
    p.add_argument("--quantize", action="store_true")
    p = st.add_parser("fk", parents=[common])
    p.add_argument("--angles", type=float, nargs=6)
    p.add_argument("--angles-csv")
    p = st.add_parser("mode", parents=[common])
    p.add_argument("--axis", choices=stewart.AXES)
    p.add_argument("--mode", choices=("sinusoid", "breathing"))
    p.add_argument("--A", type=float)
    p.add_argument("--omega", type=float)

    sy = sub.add_parser("sync", help="motion-compensation studies").add_subparsers(dest="action", required=True)
    sy.add_parser("budget", parents=[common])
    sy.add_parser("run", parents=[common])

    ca = sub.add_parser("camera", help="camera rig").add_subparsers(dest="action", required=True)
    p = ca.add_parser("map", parents=[common])
    p.add_argument("--camera", required=True, help="3x4 camera matrix CSV")
    p.add_argument("--samples", required=True, help="k x 3 workspace samples CSV")
    p.add_argument("--transform", required=True, help="3x3 image transform CSV")
    p.add_argument("--mm-per-unit", type=float, default=1.0)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = ["gauzecut"] + argv
    run = None
    try:
        sc = config.load(args.scenario) if args.scenario else config.from_dict({})
        if args.seed is not None:
            sc.seed = args.seed
        if args.threads < 1:
            raise config.ConfigError("--threads must be >= 1")
        run = Run(args, sc)
        info = COMMANDS[args.command](run)
        run.manifest({"result": info})
        print(json.dumps({"status": "ok", "command": args.command, "out": str(run.out),
                          "result": info}, default=str))
        return 0
    except Exception as exc:  # every failure becomes a machine-readable record
        record = {"status": "error", "command": args.command, "type": type(exc).__name__,
                  "message": str(exc), "traceback": traceback.format_exc(limit=5)}
        out = run.out if run is not None else Path(
            args.out or Path(os.environ.get(OUT_ENV, "runs")) / args.command)
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(record, indent=2) + "\n")
        print(json.dumps(record), file=sys.stderr)
        return 2 if isinstance(exc, (config.ConfigError, FileNotFoundError)) else 1


if __name__ == "__main__":
    sys.exit(main())
