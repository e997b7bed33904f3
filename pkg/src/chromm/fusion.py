"""Multi-view fusion of per-view observations into world-space human states.

View-invariant parameters (canonical pose, shape) are averaged directly;
the view-dependent root rotation is lifted to the world frame per view and
averaged as quaternions; the head position comes from multi-view ray
triangulation (with single-view and degenerate fallbacks to the lifted
depth-based unprojection).

Three strategies expose the fusion ablation:

* ``avg_tri``     - parameter mean + triangulated head (default),
* ``maxpool_tri`` - component-wise max-pool of theta/beta + triangulated head
                    (a deterministic stand-in for neural token max-pooling,
                    which needs encoders that are out of scope here),
* ``only_avg``    - parameter mean + head as the mean of per-view lifted
                    translations (no triangulation).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .association import GlobalIdentityMap
from .bodymodel import DEFAULT_SKELETON, Skeleton
from .config import PipelineConfig, Tolerances
from .errors import DegenerateAverage, DegenerateRays
from .geometry import (
    Camera,
    Quaternion,
    average_quaternions,
    axis_angle_from_rotation,
    pixel_ray,
    rotation_from_axis_angle,
    triangulate_rays,
)
from .tracking import Observation, Tracklet

log = logging.getLogger("chromm.fusion")


@dataclass(frozen=True)
class FusedState:
    """World-frame human state at one timestep."""

    theta: np.ndarray
    beta: np.ndarray
    root_rotation: np.ndarray
    head_position: np.ndarray
    views: tuple[int, ...]


@dataclass
class GlobalHuman:
    """Per-timestep fused states of one global identity."""

    global_id: int
    states: dict[int, FusedState]

    @property
    def timesteps(self) -> tuple[int, ...]:
        return tuple(self.states)


def _canonical_order(observations: list[Observation]) -> list[Observation]:
    # fixed summation order makes every fuser exactly permutation-invariant
    return sorted(observations, key=lambda o: (o.view_id, o.timestep))


def fuse_invariant(observations: list[Observation], strategy: str = "avg_tri",
                   theta_mean_mode: str = "axis_angle") -> tuple[np.ndarray, np.ndarray]:
    """Fuse the view-invariant components (theta, beta) across views."""
    observations = _canonical_order(observations)
    thetas = np.stack([o.body.theta for o in observations])
    betas = np.stack([o.body.beta for o in observations])
    if strategy == "maxpool_tri":
        return thetas.max(axis=0), betas.max(axis=0)
    beta = betas.mean(axis=0)
    if theta_mean_mode == "per_joint_quaternion" and len(observations) > 1:
        theta = np.empty_like(thetas[0])
        rots = rotation_from_axis_angle(thetas)
        for j in range(theta.shape[0]):
            mean_q = average_quaternions([Quaternion.from_matrix(rots[n, j])
                                          for n in range(len(observations))])
            theta[j] = axis_angle_from_rotation(mean_q.to_matrix())
        return theta, beta
    return thetas.mean(axis=0), beta


def fuse_root_rotation(observations: list[Observation],
                       cams: dict[tuple[int, int], Camera]) -> np.ndarray:
    """Lift per-view camera-frame root rotations to world and average them."""
    qs = []
    for o in _canonical_order(observations):
        cam = cams[(o.view_id, o.timestep)]
        qs.append(Quaternion.from_matrix(cam.world_from_cam.rotation @ o.body.root_rotation))
    return average_quaternions(qs).to_matrix()


def _lifted_translations(observations: list[Observation],
                         cams: dict[tuple[int, int], Camera]) -> np.ndarray:
    return np.stack([
        cams[(o.view_id, o.timestep)].world_from_cam.apply(o.body.head_translation)
        for o in _canonical_order(observations)
    ])


def fuse_head_position(observations: list[Observation],
                       cams: dict[tuple[int, int], Camera],
                       strategy: str = "avg_tri",
                       tolerances: Tolerances = Tolerances()) -> np.ndarray:
    """World head position: ray triangulation over the views' head keypoints.

    One view falls back to the lifted depth-based unprojection; a degenerate
    ray bundle falls back to the across-view mean of lifted translations.
    """
    if strategy == "only_avg" or len(observations) == 1:
        return _lifted_translations(observations, cams).mean(axis=0)
    rays = [
        pixel_ray(cams[(o.view_id, o.timestep)], o.head_keypoint[0], o.head_keypoint[1])
        for o in _canonical_order(observations)
    ]
    try:
        return triangulate_rays(
            rays,
            condition_limit=tolerances.triangulation_condition_limit,
            parallel_tol=tolerances.parallel_ray_tolerance,
        )
    except DegenerateRays:
        log.warning("degenerate ray bundle; falling back to depth-based average")
        return _lifted_translations(observations, cams).mean(axis=0)


def fuse_all(tracklets_by_view: dict[int, list[Tracklet]],
             identity_map: GlobalIdentityMap,
             cams: dict[tuple[int, int], Camera],
             cfg: PipelineConfig,
             skeleton: Skeleton = DEFAULT_SKELETON,
             tolerances: Tolerances = Tolerances()) -> list[GlobalHuman]:
    """Populate one GlobalHuman per identity from its member tracklets.

    Iteration order (ascending global id, then timestep, contributors sorted
    by view then track id) is fixed so output is deterministic.
    """
    by_key = {
        (view_id, t.track_id): t
        for view_id, tracklets in tracklets_by_view.items()
        for t in tracklets
    }
    members: dict[int, list[tuple[int, int]]] = {}
    for key, gid in identity_map.mapping.items():
        members.setdefault(gid, []).append(key)
    humans = []
    for gid in sorted(members):
        cells: dict[int, list[Observation]] = {}
        for key in sorted(members[gid]):
            for t, obs in by_key[key].frames.items():
                cells.setdefault(t, []).append(obs)
        states: dict[int, FusedState] = {}
        for t in sorted(cells):
            group = sorted(cells[t], key=lambda o: o.view_id)
            theta, beta = fuse_invariant(group, cfg.fusion_strategy, cfg.theta_mean_mode)
            try:
                rotation = fuse_root_rotation(group, cams)
            except DegenerateAverage:
                log.warning("degenerate rotation average for id %d at t %d; "
                            "using first view", gid, t)
                o = group[0]
                rotation = cams[(o.view_id, o.timestep)].world_from_cam.rotation \
                    @ o.body.root_rotation
            head = fuse_head_position(group, cams, cfg.fusion_strategy, tolerances)
            states[t] = FusedState(
                theta, beta, rotation, head, tuple(o.view_id for o in group)
            )
        humans.append(GlobalHuman(gid, states))
    return humans
