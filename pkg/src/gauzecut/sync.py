"""Periodic-disturbance estimation and cutting-under-motion controllers.

All positions are in the gauze frame (millimetres by convention) and times
in seconds.  A disturbance is ``D(t) = A sin(2 pi omega (t + phi))``.  The
robot commands a path ``c`` defined in the gauze frame; the tracking error is
where the tool ends up relative to the gauze minus where it should be.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from . import rng as rngmod

PHASE_RMSE_S = 0.22
PERIOD_REL_RMSE = 0.03
LATENCY_JITTER_S = 0.576
DEFAULT_WINDOW_S = 0.25
# time-to-distance scale under which a 0.22 s phase error is 1 mm
UNIT_SLOPE_MM_PER_S = 1.0 / PHASE_RMSE_S


class SyncError(ValueError):
    pass


@dataclass(frozen=True)
class Sinusoid:
    A: float
    omega: float   # Hz
    phi: float = 0.0  # s

    def __post_init__(self):
        if self.A < 0 or not self.omega > 0:
            raise SyncError("need A >= 0 and omega > 0")

    def __call__(self, t):
        return self.A * np.sin(2 * np.pi * self.omega * (np.asarray(t, float) + self.phi))

    def velocity(self, t):
        w = 2 * np.pi * self.omega
        return self.A * w * np.cos(w * (np.asarray(t, float) + self.phi))

    @property
    def peak_slope(self) -> float:
        return self.A * 2 * np.pi * self.omega

    @property
    def peak_curvature(self) -> float:
        return self.A * (2 * np.pi * self.omega) ** 2

    def extrema(self, t0: float, t1: float) -> np.ndarray:
        """Times of maxima and minima in [t0, t1]."""
        half = 0.5 / self.omega
        first = 0.25 / self.omega - self.phi
        k0 = math.ceil((t0 - first) / half - 1e-12)
        k1 = math.floor((t1 - first) / half + 1e-12)
        return first + half * np.arange(k0, k1 + 1)


@dataclass(frozen=True)
class DisturbanceModel:
    axes: dict = field(default_factory=lambda: {"x": Sinusoid(25.0, 0.2, 0.0)})
    sigma_omega_rel: float = PERIOD_REL_RMSE
    sigma_phi: float = PHASE_RMSE_S
    latency_mean: float = 0.0
    latency_jitter: float = LATENCY_JITTER_S

    def __post_init__(self):
        if min(self.sigma_omega_rel, self.sigma_phi, self.latency_jitter) < 0:
            raise SyncError("noise parameters must be >= 0")
        if not self.axes:
            raise SyncError("need at least one axis")

    def axis(self, name: str | None = None) -> Sinusoid:
        return self.axes[name] if name else next(iter(self.axes.values()))


@dataclass(frozen=True)
class OpenLoop:
    name = "open_loop"


@dataclass(frozen=True)
class FullSync:
    name = "full_sync"


@dataclass(frozen=True)
class Intermittent:
    window_s: float = DEFAULT_WINDOW_S
    name = "intermittent"

    def __post_init__(self):
        if not self.window_s > 0:
            raise SyncError("window must be > 0")


def controller_from_name(name: str, window_s: float = DEFAULT_WINDOW_S):
    if name in ("open_loop", "openloop", "none"):
        return OpenLoop()
    if name in ("full_sync", "fullsync", "full"):
        return FullSync()
    if name in ("intermittent",):
        return Intermittent(window_s)
    raise SyncError(f"unknown controller {name!r}")


@dataclass(frozen=True)
class FitResult:
    A: float
    omega: float
    phi: float
    offset: float
    rmse: float

    @property
    def sinusoid(self) -> Sinusoid:
        return Sinusoid(self.A, self.omega, self.phi)


def fit_sinusoid(t, y) -> FitResult:
    """Fit ``A sin(2 pi omega (t + phi)) + offset`` to samples.

    A coarse scan over candidate frequencies (linear least squares at each)
    picks the starting point and nonlinear least squares refines it.  The
    result is canonical: ``A > 0`` and ``phi`` in ``[0, 1/omega)``.

    Raises:
        SyncError: too few samples, constant data, fewer than two periods
            or fewer than 8 samples per period, or a failed refinement.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.shape != y.shape or t.ndim != 1 or len(t) < 5:
        raise SyncError("need at least 5 (t, value) samples")
    order = np.argsort(t)
    t, y = t[order], y[order]
    span = t[-1] - t[0]
    if not span > 0 or np.ptp(y) <= 1e-12 * max(1.0, np.abs(y).max()):
        raise SyncError("data are constant; amplitude is unidentifiable")
    rate = (len(t) - 1) / span
    tc = t - t[0]
    freqs = np.linspace(1.0 / span, rate / 2, max(200, 20 * int(span * rate / 2)))

    def linfit(f):
        X = np.column_stack([np.sin(2 * np.pi * f * tc), np.cos(2 * np.pi * f * tc), np.ones_like(tc)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        return coef, float(np.sum((X @ coef - y) ** 2))

    errs = [linfit(f)[1] for f in freqs]
    f0 = freqs[int(np.argmin(errs))]
    coef0, _ = linfit(f0)

    def resid(p):
        a, b, c, f = p
        w = 2 * np.pi * f * tc
        return a * np.sin(w) + b * np.cos(w) + c - y

    sol = least_squares(resid, np.r_[coef0, f0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=2000)
    if not sol.success:
        raise SyncError(f"refinement failed: {sol.message}")
    a, b, c, f = sol.x
    if f < 0:
        f, a = -f, -a  # sin(-x) = -sin(x), cos(-x) = cos(x)
    A = math.hypot(a, b)
    if A <= 0 or not f > 0:
        raise SyncError("degenerate fit")
    if f * span < 2.0 - 1e-9:
        raise SyncError(f"only {f * span:.2f} periods of data; need >= 2")
    if rate < 8 * f - 1e-9:
        raise SyncError(f"{rate / f:.1f} samples per period; need >= 8")
    period = 1.0 / f
    # a sin(w tc) + b cos(w tc) = A sin(w tc + psi), tc = t - t0
    psi = math.atan2(b, a)
    phi = (psi / (2 * np.pi * f) - t[0]) % period
    if period - phi < 1e-9 * period:
        phi = 0.0
    rmse = float(np.sqrt(np.mean(sol.fun ** 2)))
    return FitResult(float(A), float(f), float(phi), float(c), rmse)


@dataclass
class Trace:
    t: np.ndarray
    error: np.ndarray        # tracking error in the gauze frame
    active: np.ndarray       # bool, robot advancing along the path
    progress: np.ndarray     # commanded-path index reached
    completion_time: float

    @property
    def max_error(self) -> float:
        e = np.abs(self.error[self.active])
        return float(e.max()) if e.size else 0.0

    @property
    def rms_error(self) -> float:
        e = self.error[self.active]
        return float(np.sqrt(np.mean(e ** 2))) if e.size else 0.0


def execute(controller, commanded, truth: Sinusoid, estimate: Sinusoid | None = None,
            latency: float | None = None, dt: float = 0.005, seed: int = 0,
            jitter: float = LATENCY_JITTER_S, t0: float = 0.0,
            max_time: float | None = None) -> Trace:
    """Simulate one controller cutting along ``commanded``.

    ``commanded`` holds gauze-frame positions sampled every ``dt`` at the
    nominal cutting speed, so its length sets the open-loop duration.
    ``estimate`` defaults to the truth; ``latency`` defaults to a uniform
    draw in ``[0, jitter]`` from the ``"latency"`` stream of ``seed``.

    Open loop ignores the motion, so the error is ``-D(t)``.  Full
    synchronization adds the estimate, delayed by the latency, to the
    command: error ``D_hat(t - latency) - D(t)``.  Intermittent
    synchronization advances only inside windows centred on the estimated
    extrema (shifted by the latency) and offsets by the estimated extremum
    value: error ``D_hat(t_k) - D(t)`` inside windows.
    """
    commanded = np.asarray(commanded, float)
    n_cmd = len(commanded)
    if n_cmd < 1:
        raise SyncError("commanded path is empty")
    est = truth if estimate is None else estimate
    if latency is None:
        latency = float(rngmod.stream(seed, "latency").uniform(0.0, jitter))
    if isinstance(controller, (OpenLoop, FullSync)):
        t = t0 + dt * np.arange(n_cmd)
        if isinstance(controller, OpenLoop):
            err = -truth(t)
        else:
            err = est(t - latency) - truth(t)
        return Trace(t, err, np.ones(n_cmd, bool), np.arange(n_cmd), float(n_cmd * dt))
    if not isinstance(controller, Intermittent):
        raise SyncError(f"unknown controller {controller!r}")
    half = controller.window_s / 2
    limit = max_time if max_time is not None else (
        n_cmd * dt * (2.0 / (controller.window_s * 2 * est.omega)) + 4.0 / est.omega + 1.0)
    t = t0 + dt * np.arange(int(math.ceil(limit / dt)) + 1)
    centers = est.extrema(t0 - 1.0 / est.omega, t[-1] + 1.0 / est.omega)
    idx = np.searchsorted(centers, t - latency)
    left = centers[np.clip(idx - 1, 0, len(centers) - 1)]
    right = centers[np.clip(idx, 0, len(centers) - 1)]
    near = np.where(np.abs(t - latency - left) <= np.abs(t - latency - right), left, right)
    active = np.abs(t - latency - near) <= half + 1e-12
    progress = np.minimum(np.cumsum(active), n_cmd)
    done = np.flatnonzero(progress >= n_cmd)
    end = done[0] + 1 if done.size else len(t)
    active = active[:end]
    err = np.where(active, est(near[:end]) - truth(t[:end]), 0.0)
    return Trace(t[:end], err, active, progress[:end],
                 float(end * dt) if done.size else math.inf)


@dataclass(frozen=True)
class BudgetReport:
    trials: int
    rms: float
    worst_case: float
    worst_rms: float                 # RMS over trials of each trial's worst error
    analytic_phase_only: float       # unit slope times sigma_phi
    analytic_with_latency: float     # unit slope times (sigma_phi + jitter)
    analytic_latency_increment: float
    physical_phase_only: float       # true slope A 2 pi omega times sigma_phi
    physical_with_latency: float
    per_trial: tuple = field(default=(), repr=False)  # (rms, worst) per trial


def error_budget(model: DisturbanceModel, controller=None, trials: int = 1000,
                 seed: int = 0, horizon_s: float | None = None, dt: float = 0.01,
                 axis: str | None = None) -> BudgetReport:
    """Monte-Carlo tracking error under estimation noise and latency.

    Every trial perturbs the true disturbance into an estimate (relative
    frequency error and additive phase error, both Gaussian) and draws a
    latency uniformly in ``[mean, mean + jitter]``, then runs the
    controller for ``horizon_s`` (default one period).  Trial ``k`` uses its
    own substream, so results do not depend on evaluation order.
    """
    if trials < 1:
        raise SyncError("trials must be >= 1")
    controller = controller or FullSync()
    truth = model.axis(axis)
    horizon = (1.0 / truth.omega) if horizon_s is None else horizon_s
    n = max(2, int(round(horizon / dt)) + 1)
    commanded = np.zeros(n)
    per_trial = []
    sq_sum, count = 0.0, 0
    for k in range(trials):
        g = rngmod.stream(seed, "budget", k)
        z_w, z_p, u = g.standard_normal(), g.standard_normal(), g.random()
        est = Sinusoid(truth.A, truth.omega * max(1e-9, 1 + model.sigma_omega_rel * z_w),
                       truth.phi + model.sigma_phi * z_p)
        lat = model.latency_mean + model.latency_jitter * u
        tr = execute(controller, commanded, truth, est, latency=lat, dt=dt)
        e = tr.error[tr.active]
        sq_sum += float(np.sum(e ** 2))
        count += e.size
        per_trial.append((float(np.sqrt(np.mean(e ** 2))) if e.size else 0.0,
                          float(np.abs(e).max()) if e.size else 0.0))
    worst = np.array([w for _, w in per_trial])
    unit_p = UNIT_SLOPE_MM_PER_S * model.sigma_phi
    unit_t = UNIT_SLOPE_MM_PER_S * (model.sigma_phi + model.latency_jitter)
    return BudgetReport(
        trials=trials,
        rms=math.sqrt(sq_sum / max(count, 1)),
        worst_case=float(worst.max()),
        worst_rms=float(np.sqrt(np.mean(worst ** 2))),
        analytic_phase_only=unit_p,
        analytic_with_latency=unit_t,
        analytic_latency_increment=unit_t - unit_p,
        physical_phase_only=truth.peak_slope * model.sigma_phi,
        physical_with_latency=truth.peak_slope * (model.sigma_phi + model.latency_jitter),
        per_trial=tuple(per_trial),
    )


def window_width_from_curvature(estimate: Sinusoid, tolerance: float) -> float:
    """Window over which a parabola with the extremum's curvature stays
    within ``tolerance``: ``2 sqrt(2 tol / |C''|)``.  Zero curvature gives
    ``inf`` (any window works)."""
    if not tolerance > 0:
        raise SyncError("tolerance must be > 0")
    c2 = abs(estimate.peak_curvature)
    if c2 == 0:
        return math.inf
    return 2.0 * math.sqrt(2.0 * tolerance / c2)


def intermittent_window_bound(A: float, omega: float, window_s: float, offset_s: float = 0.0) -> float:
    """Largest disturbance change inside a window whose centre is
    ``offset_s`` away from the true extremum: ``A (1 - cos(2 pi omega (w/2 + |offset|)))``."""
    return A * (1 - math.cos(2 * math.pi * omega * (window_s / 2 + abs(offset_s))))


def write_budget_csv(reports: dict, path) -> Path:
    """Rows of (trial, controller, rms, worst) for each controller's report."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("trial,controller,rms,worst\n")
        for name, rep in reports.items():
            for k, (r, w) in enumerate(rep.per_trial):
                fh.write(f"{k},{name},{r:.9f},{w:.9f}\n")
    return path


def write_trace_csv(trace: Trace, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("t,error,active,progress\n")
        for t, e, a, p in zip(trace.t, trace.error, trace.active, trace.progress):
            fh.write(f"{t:.6f},{e:.9f},{int(a)},{int(p)}\n")
    return path


def with_noise(model: DisturbanceModel, **changes) -> DisturbanceModel:
    return replace(model, **changes)
