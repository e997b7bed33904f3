"""Deterministic toy articulated skeleton.

Maps (pose, shape, root rotation, head translation) to 3D joints. The model
is intentionally simple: 24 joints on a fixed tree, one shape coefficient
scaling every bone linearly, and the head joint acting as the root pivot for
world placement. Pose slots 24..51 (hands, jaw articulation in a full-body
model) and shape coefficients 1..9 are carried through untouched so the
fusion math sees realistically shaped parameter vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BehindCamera
from .geometry import Camera, is_rotation, rotation_from_axis_angle

POSE_SLOTS = 52
SHAPE_DIM = 10
JOINT_COUNT = 24

JOINT_NAMES = (
    "pelvis", "spine1", "spine2", "neck", "head",
    "l_hip", "l_knee", "l_ankle", "l_foot",
    "r_hip", "r_knee", "r_ankle", "r_foot",
    "l_clavicle", "l_shoulder", "l_elbow", "l_wrist", "l_hand",
    "r_clavicle", "r_shoulder", "r_elbow", "r_wrist", "r_hand",
    "jaw",
)

_PARENTS = (
    -1, 0, 1, 2, 3,
    0, 5, 6, 7,
    0, 9, 10, 11,
    2, 13, 14, 15, 16,
    2, 18, 19, 20, 21,
    4,
)

# Rest offsets from the parent joint, meters. The pelvis -> head chain runs
# straight along +y and sums to 0.60 m, a fixed constant of the model.
_REST_OFFSETS = (
    (0.0, 0.0, 0.0),
    (0.0, 0.15, 0.0),
    (0.0, 0.15, 0.0),
    (0.0, 0.20, 0.0),
    (0.0, 0.10, 0.0),
    (0.09, -0.05, 0.0),
    (0.0, -0.40, 0.0),
    (0.0, -0.40, 0.0),
    (0.0, -0.05, 0.12),
    (-0.09, -0.05, 0.0),
    (0.0, -0.40, 0.0),
    (0.0, -0.40, 0.0),
    (0.0, -0.05, 0.12),
    (0.08, 0.12, 0.0),
    (0.10, 0.02, 0.0),
    (0.26, 0.0, 0.0),
    (0.25, 0.0, 0.0),
    (0.08, 0.0, 0.0),
    (-0.08, 0.12, 0.0),
    (-0.10, 0.02, 0.0),
    (-0.26, 0.0, 0.0),
    (-0.25, 0.0, 0.0),
    (-0.08, 0.0, 0.0),
    (0.0, 0.06, 0.05),
)


@dataclass(frozen=True)
class Skeleton:
    """Joint tree with fixed rest offsets; head and pelvis are distinguished."""

    parent_index: tuple
    rest_offsets: np.ndarray
    head_index: int = 4
    pelvis_index: int = 0

    def __post_init__(self):
        offsets = np.asarray(self.rest_offsets, dtype=float)
        object.__setattr__(self, "rest_offsets", offsets)
        object.__setattr__(self, "parent_index", tuple(int(p) for p in self.parent_index))
        n = len(self.parent_index)
        if offsets.shape != (n, 3):
            raise ValueError("rest_offsets must be (J, 3)")
        roots = [j for j, p in enumerate(self.parent_index) if p < 0]
        if roots != [self.pelvis_index]:
            raise ValueError("parent graph must be a tree rooted at the pelvis")
        for j, p in enumerate(self.parent_index):
            if p >= j and p >= 0:
                raise ValueError("parents must precede children")

    @property
    def joint_count(self) -> int:
        return len(self.parent_index)

    def head_pelvis_rest_length(self) -> float:
        """Rest-pose head-to-pelvis distance at beta = 0."""
        pos = np.zeros((self.joint_count, 3))
        for j, p in enumerate(self.parent_index):
            if p >= 0:
                pos[j] = pos[p] + self.rest_offsets[j]
        return float(np.linalg.norm(pos[self.head_index] - pos[self.pelvis_index]))

    def to_dict(self) -> dict:
        return {
            "jointNames": list(JOINT_NAMES[: self.joint_count]),
            "parents": list(self.parent_index),
            "restOffsets": self.rest_offsets.tolist(),
            "headIndex": self.head_index,
            "pelvisIndex": self.pelvis_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Skeleton":
        return cls(
            parent_index=tuple(data["parents"]),
            rest_offsets=np.asarray(data["restOffsets"], dtype=float),
            head_index=int(data["headIndex"]),
            pelvis_index=int(data["pelvisIndex"]),
        )


DEFAULT_SKELETON = Skeleton(_PARENTS, np.array(_REST_OFFSETS))

AXIS_ANGLE_MAX_NORM = np.pi + 1e-6


@dataclass(frozen=True, eq=False)
class BodyParams:
    """Pose (52x3 axis-angle), shape (10,), root rotation, head translation.

    The frame of root_rotation / head_translation is the caller's business:
    observations carry camera-frame values, fused humans world-frame ones.
    """

    theta: np.ndarray
    beta: np.ndarray
    root_rotation: np.ndarray
    head_translation: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        rot = np.asarray(self.root_rotation, dtype=float)
        trans = np.asarray(self.head_translation, dtype=float)
        if theta.shape != (POSE_SLOTS, 3):
            raise ValueError(f"theta must be ({POSE_SLOTS}, 3)")
        if beta.shape != (SHAPE_DIM,):
            raise ValueError(f"beta must be ({SHAPE_DIM},)")
        if trans.shape != (3,):
            raise ValueError("head_translation must be a 3-vector")
        norms = np.linalg.norm(theta, axis=1)
        if norms.max(initial=0.0) > AXIS_ANGLE_MAX_NORM:
            raise ValueError("axis-angle rows must have norm <= pi")
        if not is_rotation(rot):
            raise ValueError("root_rotation must be orthonormal with det +1")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "root_rotation", rot)
        object.__setattr__(self, "head_translation", trans)

    @classmethod
    def rest(cls) -> "BodyParams":
        return cls(np.zeros((POSE_SLOTS, 3)), np.zeros(SHAPE_DIM), np.eye(3), np.zeros(3))


def batch_canonical_joints(thetas, betas, skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """Forward kinematics for N bodies at once: (N,52,3),(N,10) -> (N,J,3).

    Root-relative: the pelvis sits at the origin and root_rotation is not
    applied. Bone lengths scale by (1 + 0.1 * beta[0]).
    """
    thetas = np.asarray(thetas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    n = thetas.shape[0]
    j_count = skeleton.joint_count
    local = rotation_from_axis_angle(thetas[:, :j_count])
    bone_scale = 1.0 + 0.1 * betas[:, 0]
    global_rot = np.empty((n, j_count, 3, 3))
    pos = np.zeros((n, j_count, 3))
    for j, parent in enumerate(skeleton.parent_index):
        if parent < 0:
            global_rot[:, j] = local[:, j]
            continue
        offset = skeleton.rest_offsets[j]
        pos[:, j] = pos[:, parent] + bone_scale[:, None] * (global_rot[:, parent] @ offset)
        global_rot[:, j] = global_rot[:, parent] @ local[:, j]
    return pos


def canonical_joints(params: BodyParams, skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    return batch_canonical_joints(params.theta[None], params.beta[None], skeleton)[0]


def batch_world_joints(canonical, root_rotations, head_translations,
                       skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """Place canonical joints in the world: rotate about the head joint, then
    translate so the head lands at head_translation. (N,J,3) -> (N,J,3)."""
    canonical = np.asarray(canonical, dtype=float)
    roots = np.asarray(root_rotations, dtype=float)
    taus = np.asarray(head_translations, dtype=float)
    centered = canonical - canonical[:, skeleton.head_index : skeleton.head_index + 1]
    rotated = np.einsum("nij,nkj->nki", roots, centered)
    return rotated + taus[:, None, :]


def world_joints(params: BodyParams, skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    canon = canonical_joints(params, skeleton)
    return batch_world_joints(
        canon[None], params.root_rotation[None], params.head_translation[None], skeleton
    )[0]


def head_pelvis_length_2d(cam: Camera, params: BodyParams,
                          skeleton: Skeleton = DEFAULT_SKELETON) -> float:
    """Pixel distance between the projected head and pelvis joints.

    ``params`` must be expressed in the camera frame; only the intrinsics of
    ``cam`` are used.
    """
    joints = world_joints(params, skeleton)
    head = joints[skeleton.head_index]
    pelvis = joints[skeleton.pelvis_index]
    if head[2] <= 0.0 or pelvis[2] <= 0.0:
        raise BehindCamera("head or pelvis joint has non-positive camera depth")
    px = cam.project_camera_point(np.stack([head, pelvis]))
    return float(np.linalg.norm(px[0] - px[1]))


def lift_to_world(body: BodyParams, cam: Camera) -> BodyParams:
    """Re-express camera-frame body params in the world frame of ``cam``."""
    return replace(
        body,
        root_rotation=cam.world_from_cam.rotation @ body.root_rotation,
        head_translation=cam.world_from_cam.apply(body.head_translation),
    )
