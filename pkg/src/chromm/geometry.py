"""Rigid/similarity transforms, quaternions, pinhole cameras, ray
triangulation, and Umeyama alignment.

Conventions used throughout the package:

* rotations are 3x3 row-major matrices at every interface; quaternions
  appear only inside rotation averaging,
* a camera's ``world_from_cam`` maps camera-frame points to world-frame
  points (``p_w = R p_c + t``) with the translation already expressed at
  the scene's current scale; ``scene_scale`` records the global factor
  that produced it,
* all operations here are pure functions on immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateAlignment,
    DegenerateAverage,
    DegenerateRays,
    InvalidDepth,
    NeedFallback,
)

# Module tolerances; the config layer may pass overrides to the operations
# that take explicit keyword arguments.
ORTHONORMALITY_TOL = 1e-9
UNIT_NORM_TOL = 1e-9
PARALLEL_RAY_TOL = 1e-6
TRIANGULATION_CONDITION_LIMIT = 1e8
QUATERNION_DEGENERATE_NORM = 1e-9


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


def rotation_from_axis_angle(vectors) -> np.ndarray:
    """Rodrigues formula, vectorized over leading axes: (..., 3) -> (..., 3, 3)."""
    v = np.asarray(vectors, dtype=float)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    small = theta < 1e-12
    axis = np.where(small, 0.0, v / np.where(small, 1.0, theta))
    theta = theta[..., 0]
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zero = np.zeros_like(x)
    k = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    eye = np.broadcast_to(np.eye(3), k.shape)
    s = np.sin(theta)[..., None, None]
    c = (1.0 - np.cos(theta))[..., None, None]
    return eye + s * k + c * (k @ k)


def axis_angle_from_rotation(matrix) -> np.ndarray:
    """Inverse of :func:`rotation_from_axis_angle` for a single matrix."""
    q = Quaternion.from_matrix(matrix)
    w = min(1.0, max(-1.0, q.w))
    angle = 2.0 * math.acos(w)
    s = math.sqrt(max(0.0, 1.0 - w * w))
    if s < 1e-12:
        return np.zeros(3)
    axis = np.array([q.x, q.y, q.z]) / s
    if angle > math.pi:
        angle -= 2.0 * math.pi
    return axis * angle


def is_rotation(matrix, tol: float = ORTHONORMALITY_TOL) -> bool:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3):
        return False
    return (
        np.abs(m @ m.T - np.eye(3)).max() <= tol
        and abs(np.linalg.det(m) - 1.0) <= tol
    )


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z); q and -q denote the same rotation."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if n < QUATERNION_DEGENERATE_NORM:
            raise DegenerateAverage("quaternion norm too small to normalize")
        if abs(n - 1.0) > UNIT_NORM_TOL:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, matrix) -> "Quaternion":
        """Shepperd's method: branch on the largest diagonal combination."""
        m = np.asarray(matrix, dtype=float)
        t = np.trace(m)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            return cls((0.25 * s), (m[2, 1] - m[1, 2]) / s,
                       (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s,
                       (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                       0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                   (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def dot(self, other: "Quaternion") -> float:
        return (self.w * other.w + self.x * other.x
                + self.y * other.y + self.z * other.z)

    def same_rotation(self, other: "Quaternion", tol: float = 1e-9) -> bool:
        """Equality as rotations: q and -q compare equal."""
        return min(
            float(np.abs(self.as_array() - other.as_array()).max()),
            float(np.abs(self.as_array() + other.as_array()).max()),
        ) <= tol


def average_quaternions(qs: list[Quaternion]) -> Quaternion:
    """Sign-aligned arithmetic quaternion mean.

    Every input is flipped to the hemisphere of the first, the component-wise
    mean is taken, and the result renormalized. Deterministic and exact for
    identical inputs; the Markley eigen-decomposition mean is a documented
    alternative, not used here.
    """
    if not qs:
        raise ValueError("average_quaternions needs a non-empty list")
    first = qs[0]
    acc = np.zeros(4)
    for q in qs:
        a = q.as_array()
        if first.dot(q) < 0.0:
            a = -a
        acc += a
    acc /= len(qs)
    n = np.linalg.norm(acc)
    if n < QUATERNION_DEGENERATE_NORM:
        raise DegenerateAverage("quaternion mean vanished (antipodal inputs)")
    acc /= n
    return Quaternion(*acc)


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * rotation @ x + translation. SE(3) is the scale == 1 case."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", _as_vec3(self.translation))
        if not self.scale > 0.0:
            raise ValueError(f"similarity scale must be positive, got {self.scale}")
        if not is_rotation(self.rotation):
            raise ValueError("rotation must be orthonormal with determinant +1")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or a stack (..., 3)."""
        p = np.asarray(points, dtype=float)
        return self.scale * (p @ self.rotation.T) + self.translation

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """self o inner: apply ``inner`` first."""
        return SimilarityTransform(
            self.scale * inner.scale,
            self.rotation @ inner.rotation,
            self.scale * (self.rotation @ inner.translation) + self.translation,
        )

    def inverse(self) -> "SimilarityTransform":
        rt = self.rotation.T
        return SimilarityTransform(
            1.0 / self.scale, rt, -(rt @ self.translation) / self.scale
        )

    @property
    def is_rigid(self) -> bool:
        return self.scale == 1.0


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics K, SE(3) world_from_cam, global scene scale."""

    intrinsics: np.ndarray
    world_from_cam: SimilarityTransform
    scene_scale: float = 1.0

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=float)
        object.__setattr__(self, "intrinsics", k)
        if k.shape != (3, 3):
            raise ValueError("intrinsics must be 3x3")
        fx, fy = k[0, 0], k[1, 1]
        if not (fx > 0 and fy > 0):
            raise ValueError("focal lengths must be positive")
        if k[2, 2] != 1.0 or k[0, 1] != 0.0 or any(k[i, j] != 0.0 for i, j in ((1, 0), (2, 0), (2, 1))):
            raise ValueError("intrinsics must be upper-triangular with zero skew and K[2,2] = 1")
        if self.world_from_cam.scale != 1.0:
            raise ValueError("world_from_cam must be rigid (scale exactly 1)")
        if not self.scene_scale > 0.0:
            raise ValueError("scene_scale must be positive")

    @classmethod
    def make(cls, fx, fy, cx, cy, world_from_cam=None, scene_scale=1.0) -> "Camera":
        k = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(k, world_from_cam or SimilarityTransform.identity(), scene_scale)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.world_from_cam.translation

    def cam_from_world(self, points) -> np.ndarray:
        return self.world_from_cam.inverse().apply(points)

    def back_project(self, u: float, v: float) -> np.ndarray:
        """Camera-frame direction K^-1 [u, v, 1]^T (unnormalized, z = 1)."""
        k = self.intrinsics
        return np.array([(u - k[0, 2]) / k[0, 0], (v - k[1, 2]) / k[1, 1], 1.0])

    def project_camera_point(self, point) -> np.ndarray:
        """Perspective projection of camera-frame points (..., 3) -> (..., 2) px."""
        p = np.asarray(point, dtype=float)
        z = p[..., 2]
        k = self.intrinsics
        u = k[0, 0] * p[..., 0] / z + k[0, 2]
        v = k[1, 1] * p[..., 1] / z + k[1, 2]
        return np.stack([u, v], axis=-1)

    def project_world_point(self, point) -> np.ndarray:
        return self.project_camera_point(self.cam_from_world(point))


@dataclass(frozen=True)
class Ray:
    """World-frame ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec3(self.origin))
        d = _as_vec3(self.direction)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise ValueError("ray direction must be nonzero")
        if abs(n - 1.0) > UNIT_NORM_TOL:
            d = d / n
        object.__setattr__(self, "direction", d)

    def point_at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def unproject_head(cam: Camera, u: float, v: float,
                   d_coarse: float, delta_d: float) -> np.ndarray:
    """Head unprojection: (d_coarse + delta_d) * K^-1 [u, v, 1]^T, camera frame.

    The z component equals the final depth by construction.
    """
    d = d_coarse + delta_d
    if not d > 0.0:
        raise InvalidDepth(f"final depth must be positive, got {d}")
    return d * cam.back_project(u, v)


def pixel_ray(cam: Camera, u: float, v: float) -> Ray:
    """World-frame viewing ray through pixel (u, v)."""
    direction = cam.world_from_cam.rotation @ cam.back_project(u, v)
    return Ray(cam.center, direction)


def _ray_sort_key(ray: Ray):
    return tuple(ray.origin) + tuple(ray.direction)


def triangulate_rays(
    rays: list[Ray],
    condition_limit: float = TRIANGULATION_CONDITION_LIMIT,
    parallel_tol: float = PARALLEL_RAY_TOL,
) -> np.ndarray:
    """Point minimizing the sum of squared point-to-ray distances.

    Closed-form 3x3 solve of sum_i (I - d_i d_i^T) x = sum_i (I - d_i d_i^T) o_i.
    Rays are summed in a canonical sorted order so the result is exactly
    permutation-invariant.
    """
    if len(rays) < 2:
        raise NeedFallback("triangulation needs at least two rays")
    ordered = sorted(rays, key=_ray_sort_key)
    dirs = np.stack([r.direction for r in ordered])
    if _all_parallel(dirs, parallel_tol):
        raise DegenerateRays("all rays parallel within angular tolerance")
    a = np.zeros((3, 3))
    b = np.zeros(3)
    for r in ordered:
        m = np.eye(3) - np.outer(r.direction, r.direction)
        a += m
        b += m @ r.origin
    if np.linalg.cond(a) > condition_limit:
        raise DegenerateRays("near-parallel bundle: ill-conditioned normal system")
    return np.linalg.solve(a, b)


def _all_parallel(dirs: np.ndarray, tol: float) -> bool:
    ref = dirs[0]
    dots = np.clip(np.abs(dirs @ ref), -1.0, 1.0)
    return bool(np.all(np.arccos(dots) < tol))


def umeyama(src, dst, with_scale: bool = True,
            rank_tol: float = 1e-9) -> SimilarityTransform:
    """Least-squares Sim(3) (or SE(3) when ``with_scale`` is off) from src to dst.

    Standard SVD construction with the determinant sign correction; degenerate
    for fewer than 3 pairs or a covariance of rank < 2 (collinear points).
    """
    x = np.asarray(src, dtype=float)
    y = np.asarray(dst, dtype=float)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != 3:
        raise ValueError("umeyama expects matching Nx3 arrays")
    n = x.shape[0]
    if n < 3:
        raise DegenerateAlignment(f"need at least 3 point pairs, got {n}")
    mx = x.mean(axis=0)
    my = y.mean(axis=0)
    dx = x - mx
    dy = y - my
    cov = dy.T @ dx / n
    u, d, vt = np.linalg.svd(cov)
    var_x = (dx * dx).sum() / n
    if var_x < rank_tol or d[1] <= rank_tol * max(d[0], rank_tol):
        raise DegenerateAlignment("rank-deficient covariance (collinear or coincident points)")
    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2] = -1.0
    rot = u @ np.diag(s) @ vt
    scale = float((d * s).sum() / var_x) if with_scale else 1.0
    if with_scale and not scale > 0.0:
        raise DegenerateAlignment("non-positive optimal scale")
    t = my - scale * (rot @ mx)
    return SimilarityTransform(scale, rot, t)


def alignment_residual(transform: SimilarityTransform, src, dst) -> float:
    """Mean Euclidean distance after applying ``transform`` to ``src``."""
    diff = transform.apply(np.asarray(src, dtype=float)) - np.asarray(dst, dtype=float)
    return float(np.linalg.norm(diff, axis=-1).mean())
