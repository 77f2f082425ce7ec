"""Movable-camera math: turn a desired image-space motion into a rigid
world-frame motion the platform can execute.

A desired image transform ``T`` (3x3, homogeneous image coordinates) is
pulled back to the world through the pseudo-inverse of the camera matrix,
``x' = pinv(C^T C) C^T T C x``, at a cloud of workspace samples.  Each
pulled-back point is then moved along its viewing ray to ``w = 1`` (for an
affine camera, whose rays are parallel, it keeps its original depth).  That map
is generally not rigid, so the nearest rigid transform is fitted to the
sample correspondences (Kabsch/Procrustes) and its residuals are reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stewart import (ROTATION_RANGE_DEG, TRANSLATION_RANGE_CM, PlatformDims, PlatformPose,
                      euler_from_rotation, range_check)


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    C: np.ndarray        # (3, 4)
    samples: np.ndarray  # (k, 3) world points

    def __post_init__(self):
        C = np.asarray(self.C, float)
        if C.shape != (3, 4) or np.linalg.matrix_rank(C) < 3:
            raise CameraError("camera matrix must be 3x4 with rank 3")
        s = np.asarray(self.samples, float)
        if s.ndim != 2 or s.shape[1] != 3 or len(s) < 4:
            raise CameraError("need at least 4 workspace samples")
        if np.linalg.matrix_rank(s - s.mean(axis=0), tol=1e-9) < 3:
            raise CameraError("workspace samples are coplanar")


@dataclass(frozen=True)
class RigidTransform:
    R: np.ndarray  # (3, 3)
    t: np.ndarray  # (3,)

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, float) @ self.R.T + self.t

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self`` after ``other``."""
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)

    def row(self) -> np.ndarray:
        """12 numbers: the rows of ``[R | t]``."""
        return np.hstack([self.R, self.t[:, None]]).reshape(-1)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class RigidFit:
    transform: RigidTransform
    residuals: np.ndarray   # per-sample distance between fitted and mapped points
    mapped: np.ndarray      # x' for each sample


@dataclass(frozen=True)
class OutOfRange:
    clamped: PlatformPose
    requested: PlatformPose


def project(C, x) -> np.ndarray:
    """Pinhole projection with perspective divide.

    >>> project(np.hstack([np.eye(3), np.zeros((3, 1))]), [1, 2, 2]).tolist()
    [0.5, 1.0]
    """
    C = np.asarray(C, float)
    h = C @ np.append(np.asarray(x, float), 1.0)
    if abs(h[2]) < 1e-12:
        raise CameraError("point lies on the principal plane (w = 0)")
    return h[:2] / h[2]


def pullback_matrix(C) -> np.ndarray:
    """``pinv(C^T C) C^T``, the 4x3 map from image to homogeneous world.

    For a rank-3 ``C`` this equals ``pinv(C)``, which is computed directly:
    forming ``C^T C`` squares the condition number, and real intrinsics
    (focal lengths in the hundreds of pixels) make that lose digits.

    >>> C = np.array([[800.0, 0, 320, 5], [0, 800, 240, -3], [0, 0, 1, 300]])
    >>> bool(np.allclose(pullback_matrix(C), np.linalg.pinv(C.T @ C) @ C.T, atol=1e-9))
    True
    """
    C = np.asarray(C, float)
    return np.linalg.pinv(C)


def kabsch(src, dst) -> RigidTransform:
    """Least-squares rotation and translation mapping ``src`` onto ``dst``."""
    src, dst = np.asarray(src, float), np.asarray(dst, float)
    if len(src) < 3 or np.linalg.matrix_rank(src - src.mean(0), tol=1e-9) < 2:
        raise CameraError("sample set is rank deficient")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return RigidTransform(R, cd - R @ cs)


def rigid_inverse_map(C, T, samples) -> RigidFit:
    """Nearest rigid world motion to the pulled-back image transform ``T``."""
    C = np.asarray(C, float)
    T = np.asarray(T, float)
    if T.shape != (3, 3):
        raise CameraError("T must be a 3x3 homogeneous image transform")
    samples = np.asarray(samples, float)
    M = pullback_matrix(C) @ T @ C
    h = np.hstack([samples, np.ones((len(samples), 1))]) @ M.T
    # The pseudo-inverse returns the minimum-norm point of each viewing ray,
    # which drops the camera-centre component.  Slide back along the centre
    # direction (null space of C, invisible in the image) to reach w = 1.
    # For an affine camera the centre is at infinity (w = 0); the lost
    # component is then pure depth, which the image cannot see, so each
    # sample keeps its own.
    centre = np.linalg.svd(C)[2][-1]
    if abs(centre[3]) > 1e-12:
        h = h + np.outer((1.0 - h[:, 3]) / centre[3], centre)
    else:
        src = np.hstack([samples, np.ones((len(samples), 1))])
        h = h + np.outer((src - h) @ centre, centre)
    keep = np.abs(h[:, 3]) > 1e-12
    if keep.sum() < 4:
        raise CameraError("too few samples map to finite points")
    mapped = h[keep, :3] / h[keep, 3:4]
    fit = kabsch(samples[keep], mapped)
    res = np.linalg.norm(fit.apply(samples[keep]) - mapped, axis=1)
    return RigidFit(fit, res, mapped)


def pose_for_camera_motion(f_rigid: RigidTransform, dims: PlatformDims | None = None,
                           mm_per_unit: float = 1.0):
    """Platform pose (offset from home) realizing ``f_rigid``.

    World units are millimetres by default; poses are centimetres and
    degrees.  Out-of-range motions come back as :class:`OutOfRange` holding
    the pose clamped to the soft range.
    """
    dims = dims or PlatformDims()
    roll, pitch, yaw = euler_from_rotation(f_rigid.R)
    t_cm = np.asarray(f_rigid.t, float) * mm_per_unit / 10.0
    pose = PlatformPose.from_array([t_cm[0], t_cm[1], dims.Z_home + t_cm[2], roll, pitch, yaw])
    if range_check(pose, dims):
        return pose
    lim_t, lim_r = TRANSLATION_RANGE_CM, ROTATION_RANGE_DEG
    c = np.clip(t_cm, -lim_t, lim_t)
    r = np.clip([roll, pitch, yaw], -lim_r, lim_r)
    return OutOfRange(PlatformPose.from_array([c[0], c[1], dims.Z_home + c[2], *r]), pose)


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, comments="#")


def write_transform_csv(fit: RigidFit, path) -> Path:
    path = Path(path)
    names = [f"r{i}{j}" for i in range(3) for j in range(4)]
    names = [n if n[-1] != "3" else f"t{n[1]}" for n in names]
    with path.open("w") as fh:
        fh.write(",".join(names) + ",max_residual\n")
        fh.write(",".join(f"{v:.12g}" for v in fit.transform.row())
                 + f",{fit.residuals.max():.6e}\n")
    return path
