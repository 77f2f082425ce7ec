"""Rotary-servo Stewart platform: layout, inverse/forward kinematics, motion modes.

Lengths are centimetres and angles degrees at the public interface.  Poses
are absolute: ``z`` is the plate height above the servo-axis plane, so the
home pose is ``(0, 0, Z_home, 0, 0, 0)``.  The soft range applies to the
offset from home.

Layout convention: base pairs are centred at 0, 120 and 240 degrees with the
two members ``theta_b`` apart; each platform anchor sits ``theta_p / 2`` from
the midpoint between neighbouring base pairs, so every rod leans toward the
adjacent pair.  Each horn swings in the vertical plane tangent to the base
circle, pointing away from its pair centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

TRANSLATION_RANGE_CM = 1.27
ROTATION_RANGE_DEG = 15.0
XL320_STEP_DEG = 0.29
CLOCK_QUANTUM_S = 5e-6
AXES = ("x", "y", "z", "roll", "pitch", "yaw")


class KinematicsError(ValueError):
    pass


class Unreachable(KinematicsError):
    pass


class NonConvergence(KinematicsError):
    def __init__(self, message, pose=None, residual=math.nan):
        super().__init__(message)
        self.pose = pose
        self.residual = residual


@dataclass(frozen=True)
class PlatformDims:
    L1: float = 2.0
    L2: float = 6.0
    Z_home: float = 5.1
    L_OB: float = 8.1
    L_OP: float = 8.1
    theta_b: float = 31.0
    theta_p: float = 23.5
    servo_limit: float = 90.0

    def __post_init__(self):
        for name in ("L1", "L2", "Z_home", "L_OB", "L_OP"):
            if not getattr(self, name) > 0:
                raise KinematicsError(f"{name} must be > 0")
        for name in ("theta_b", "theta_p"):
            if not 0 < getattr(self, name) < 120:
                raise KinematicsError(f"{name} must be in (0, 120) degrees")


@dataclass(frozen=True)
class PlatformPose:
    x: float = 0.0
    y: float = 0.0
    z: float = 5.1
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw])

    @classmethod
    def from_array(cls, a) -> "PlatformPose":
        return cls(*(float(v) for v in a))

    def offset(self, dims: "PlatformDims | None" = None) -> np.ndarray:
        """Pose relative to home: (x, y, z - Z_home, roll, pitch, yaw)."""
        z0 = (dims or PlatformDims()).Z_home
        return self.as_array() - np.array([0.0, 0.0, z0, 0.0, 0.0, 0.0])

    @classmethod
    def home(cls, dims: PlatformDims | None = None) -> "PlatformPose":
        return cls(z=(dims or PlatformDims()).Z_home)


@dataclass(frozen=True)
class ServoAngles:
    angles: tuple[float, ...]            # degrees
    residuals: tuple[float, ...] = field(default=(0.0,) * 6)
    in_range: bool = True

    def as_array(self) -> np.ndarray:
        return np.array(self.angles)


@dataclass(frozen=True)
class Layout:
    B: np.ndarray      # (6, 3) base anchors
    P: np.ndarray      # (6, 3) platform anchors, platform frame
    beta: np.ndarray   # (6,) horn azimuths, radians


def attachment_layout(dims: PlatformDims | None = None) -> Layout:
    dims = dims or PlatformDims()
    B, P, beta = np.zeros((6, 3)), np.zeros((6, 3)), np.zeros(6)
    for i in range(6):
        c = 120.0 * (i // 2)
        sgn = -1.0 if i % 2 == 0 else 1.0
        ab = math.radians(c + sgn * dims.theta_b / 2)
        ap = math.radians(c + sgn * (60.0 - dims.theta_p / 2))
        B[i] = dims.L_OB * math.cos(ab), dims.L_OB * math.sin(ab), 0.0
        P[i] = dims.L_OP * math.cos(ap), dims.L_OP * math.sin(ap), 0.0
        beta[i] = ab + sgn * math.pi / 2
    return Layout(B, P, beta)


def rotation(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """R = Rz(yaw) Ry(pitch) Rx(roll), angles in degrees."""
    r, p, y = np.radians([roll, pitch, yaw])
    cr, sr, cp, sp, cy, sy = math.cos(r), math.sin(r), math.cos(p), math.sin(p), math.cos(y), math.sin(y)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def euler_from_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`rotation`; (roll, pitch, yaw) in degrees."""
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return math.degrees(roll), math.degrees(pitch), math.degrees(yaw)


def _anchors(pose: np.ndarray, layout: Layout) -> np.ndarray:
    R = rotation(*pose[3:])
    return layout.P @ R.T + pose[:3]


def horn_tips(angles_deg, layout: Layout, dims: PlatformDims) -> np.ndarray:
    a = np.radians(np.asarray(angles_deg, float))
    return layout.B + dims.L1 * np.column_stack(
        [np.cos(a) * np.cos(layout.beta), np.cos(a) * np.sin(layout.beta), np.sin(a)])


def leg_residuals(pose, angles_deg, dims: PlatformDims | None = None,
                  layout: Layout | None = None) -> np.ndarray:
    """Tip-to-anchor distance minus rod length, per leg (cm)."""
    dims = dims or PlatformDims()
    layout = layout or attachment_layout(dims)
    p = pose.as_array() if isinstance(pose, PlatformPose) else np.asarray(pose, float)
    d = _anchors(p, layout) - horn_tips(angles_deg, layout, dims)
    return np.linalg.norm(d, axis=1) - dims.L2


def range_check(pose: PlatformPose, dims: PlatformDims | None = None) -> bool:
    """Inclusive soft-range test on the offset from home."""
    dims = dims or PlatformDims()
    eps = 1e-9
    off = pose.offset(dims)
    return bool(np.all(np.abs(off[:3]) <= TRANSLATION_RANGE_CM + eps)
                and np.all(np.abs(off[3:]) <= ROTATION_RANGE_DEG + eps))


def inverse_kinematics(pose: PlatformPose, dims: PlatformDims | None = None,
                       quantize: bool = False) -> ServoAngles:
    """Closed-form horn angles for a pose.

    Raises:
        Unreachable: some leg cannot reach its anchor, or needs a horn angle
            past the servo limit.
    """
    dims = dims or PlatformDims()
    layout = attachment_layout(dims)
    p = pose.as_array()
    if not np.all(np.isfinite(p)):
        raise KinematicsError("pose must be finite")
    q = _anchors(p, layout) - layout.B
    e = 2 * dims.L1 * q[:, 2]
    f = 2 * dims.L1 * (np.cos(layout.beta) * q[:, 0] + np.sin(layout.beta) * q[:, 1])
    g = np.einsum("ij,ij->i", q, q) - (dims.L2 ** 2 - dims.L1 ** 2)
    h = np.hypot(e, f)
    bad = np.flatnonzero(np.abs(g) > h)
    if bad.size:
        raise Unreachable(f"legs {bad.tolist()} cannot reach pose {pose}")
    alpha = np.degrees(np.arcsin(g / h) - np.arctan2(f, e))
    alpha = (alpha + 180.0) % 360.0 - 180.0
    if np.any(np.abs(alpha) > dims.servo_limit):
        raise Unreachable(f"horn angles {alpha.round(3).tolist()} exceed the servo limit")
    if quantize:
        alpha = np.round(alpha / XL320_STEP_DEG) * XL320_STEP_DEG
    res = leg_residuals(p, alpha, dims, layout)
    return ServoAngles(tuple(float(a) for a in alpha), tuple(float(r) for r in res),
                       range_check(pose, dims))


def forward_kinematics(angles, dims: PlatformDims | None = None,
                       initial_guess: PlatformPose | None = None,
                       max_iter: int = 100, tol: float = 1e-12) -> PlatformPose:
    """Pose reproducing the given horn angles, by Gauss-Newton on leg residuals.

    Raises:
        NonConvergence: residual norm still above 1e-8 cm after ``max_iter``
            iterations; the exception carries the last pose and residual.
    """
    dims = dims or PlatformDims()
    layout = attachment_layout(dims)
    ang = angles.as_array() if isinstance(angles, ServoAngles) else np.asarray(angles, float)
    if ang.shape != (6,) or not np.all(np.isfinite(ang)):
        raise KinematicsError("need six finite angles")
    tips = horn_tips(ang, layout, dims)
    x = (initial_guess or PlatformPose.home(dims)).as_array()

    def resid(v):
        return np.linalg.norm(_anchors(v, layout) - tips, axis=1) - dims.L2

    r = resid(x)
    for _ in range(max_iter):
        if np.linalg.norm(r) < tol:
            break
        J = np.empty((6, 6))
        for k in range(6):
            h = 1e-6
            d = np.zeros(6)
            d[k] = h
            J[:, k] = (resid(x + d) - resid(x - d)) / (2 * h)
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        x = x + dx
        r = resid(x)
    norm = float(np.linalg.norm(r))
    pose = PlatformPose.from_array(x)
    if not np.isfinite(norm) or norm >= 1e-8:
        raise NonConvergence(f"forward kinematics residual {norm:.3g} cm", pose, norm)
    return pose


def quantize_time(t, quantum: float = CLOCK_QUANTUM_S):
    return np.round(np.asarray(t, float) / quantum) * quantum


def breathing(t, A: float, omega: float) -> np.ndarray:
    """(exp(sin(omega t)) - 1/e) 2A / (e - 1/e); spans [0, 2A]."""
    e = math.e
    return (np.exp(np.sin(omega * np.asarray(t, float))) - 1 / e) * 2 * A / (e - 1 / e)


def sinusoid(t, A: float, omega: float) -> np.ndarray:
    return A * np.sin(2 * np.pi * omega * np.asarray(t, float))


@dataclass(frozen=True)
class MotionMode:
    axis: str
    mode: str
    A: float
    omega: float
    dims: PlatformDims = PlatformDims()
    quantum: float = CLOCK_QUANTUM_S

    @property
    def rotational(self) -> bool:
        return self.axis in ("roll", "pitch", "yaw")

    @property
    def in_range(self) -> bool:
        lim = ROTATION_RANGE_DEG if self.rotational else TRANSLATION_RANGE_CM
        span = 2 * self.A if (self.mode == "breathing" and not self.rotational) else self.A
        return span <= lim + 1e-12

    def value(self, t) -> np.ndarray:
        """Axis offset at (quantized) time ``t``."""
        tq = quantize_time(t, self.quantum) if self.quantum else np.asarray(t, float)
        if self.mode == "sinusoid":
            return sinusoid(tq, self.A, self.omega)
        y = breathing(tq, self.A, self.omega)
        return y - self.A if self.rotational else y

    def __call__(self, t: float) -> PlatformPose:
        v = np.zeros(6)
        v[2] = self.dims.Z_home
        v[AXES.index(self.axis)] += float(self.value(t))
        return PlatformPose.from_array(v)


def motion_mode(axis: str, mode: str, A: float, omega: float,
                dims: PlatformDims | None = None, quantum: float = CLOCK_QUANTUM_S) -> MotionMode:
    """Pose sampler ``t -> PlatformPose`` moving one axis.

    Sinusoid: ``A sin(2 pi omega t)``.  Breathing: the exponential-of-sine
    profile in ``omega t``; on rotational axes it is shifted down by ``A``.
    """
    if axis not in AXES:
        raise KinematicsError(f"unknown axis {axis!r}; expected one of {AXES}")
    if mode not in ("sinusoid", "breathing"):
        raise KinematicsError(f"unknown motion mode {mode!r}")
    if A < 0 or not omega > 0:
        raise KinematicsError("need A >= 0 and omega > 0")
    return MotionMode(axis, mode, float(A), float(omega), dims or PlatformDims(), quantum)


def write_poses_csv(poses, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("x,y,z,roll,pitch,yaw\n")
        for p in poses:
            fh.write(",".join(f"{v:.12g}" for v in p.as_array()) + "\n")
    return path


def read_poses_csv(path) -> list[PlatformPose]:
    a = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [PlatformPose.from_array(r) for r in a]


def write_angles_csv(solutions, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("a1,a2,a3,a4,a5,a6,max_residual,in_range\n")
        for s in solutions:
            fh.write(",".join(f"{v:.12g}" for v in s.angles)
                     + f",{max(abs(r) for r in s.residuals):.3e},{int(s.in_range)}\n")
    return path


def read_angles_csv(path) -> list[np.ndarray]:
    a = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [r[:6] for r in a]


PoseSampler = Callable[[float], PlatformPose]
