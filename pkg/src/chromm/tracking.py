"""Per-view temporal tracking.

Consecutive-frame token matching through an optimal-transport problem with a
dustbin row/column (solved by Sinkhorn iterations, then hardened to a
one-to-one assignment), followed by temporal joint-displacement outlier
filtering. There is no re-identification across temporal gaps: a person who
vanishes for one frame comes back as a new tracklet.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bodymodel import (
    DEFAULT_SKELETON,
    BodyParams,
    Skeleton,
    batch_canonical_joints,
    batch_world_joints,
)
from .config import PipelineConfig
from .geometry import Camera

log = logging.getLogger("chromm.tracking")


@dataclass(frozen=True, eq=False)
class Observation:
    """One detected person in one view at one timestep (camera-frame body)."""

    view_id: int
    timestep: int
    token: np.ndarray
    body: BodyParams
    head_keypoint: np.ndarray
    pelvis_keypoint: np.ndarray | None
    pelvis_from_coarse: bool
    coarse_depth: float

    def __post_init__(self):
        token = np.asarray(self.token, dtype=float)
        head = np.asarray(self.head_keypoint, dtype=float)
        pelvis = self.pelvis_keypoint
        if pelvis is not None:
            pelvis = np.asarray(pelvis, dtype=float)
            if pelvis.shape != (2,):
                raise ValueError("pelvis_keypoint must be a 2-vector or None")
        if head.shape != (2,):
            raise ValueError("head_keypoint must be a 2-vector")
        if not np.all(np.isfinite(token)):
            raise ValueError("token must be finite")
        if not self.coarse_depth > 0.0:
            raise ValueError("coarse_depth must be positive")
        if self.view_id < 0 or self.timestep < 0:
            raise ValueError("view_id and timestep must be non-negative")
        object.__setattr__(self, "token", token)
        object.__setattr__(self, "head_keypoint", head)
        object.__setattr__(self, "pelvis_keypoint", pelvis)


@dataclass
class Tracklet:
    """Time-indexed chain of observations sharing one per-view track id."""

    view_id: int
    track_id: int
    frames: dict[int, Observation] = field(default_factory=dict)

    def __post_init__(self):
        ts = list(self.frames)
        if ts != sorted(ts):
            raise ValueError("tracklet frames must be in ascending timestep order")
        for t, obs in self.frames.items():
            if obs.view_id != self.view_id:
                raise ValueError("all observations of a tracklet share its view")
            if obs.timestep != t:
                raise ValueError("frame key must equal the observation timestep")

    @property
    def timesteps(self) -> tuple[int, ...]:
        return tuple(self.frames)

    def add(self, obs: Observation):
        if self.frames and obs.timestep <= next(reversed(self.frames)):
            raise ValueError("observations must be appended in time order")
        if obs.view_id != self.view_id:
            raise ValueError("observation view does not match tracklet view")
        self.frames[obs.timestep] = obs

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class MatchResult:
    """Hardened assignment between two consecutive frames."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_prev: tuple[int, ...]
    unmatched_curr: tuple[int, ...]
    converged: bool
    iterations: int


def match_consecutive(prev: list[Observation], curr: list[Observation],
                      cfg: PipelineConfig) -> MatchResult:
    """Match detections of frame t-1 to frame t by token distance.

    Builds the (P+1) x (C+1) cost matrix with a dustbin row/column at cost
    gamma_match (corner included, which makes a pair worth matching exactly
    when its distance is below gamma_match), runs Sinkhorn, and hardens the
    plan greedily by descending transport mass with one-to-one enforcement:
    a pair is kept only if its mass also beats both of its dustbin entries
    and its token distance does not exceed gamma_match.
    """
    p_count, c_count = len(prev), len(curr)
    if p_count == 0 or c_count == 0:
        return MatchResult((), tuple(range(p_count)), tuple(range(c_count)), True, 0)
    dist = kernels.token_distance_matrix(
        np.stack([o.token for o in prev]), np.stack([o.token for o in curr])
    )
    cost = np.full((p_count + 1, c_count + 1), cfg.gamma_match)
    cost[:p_count, :c_count] = dist
    row_mass = np.ones(p_count + 1)
    row_mass[p_count] = c_count
    col_mass = np.ones(c_count + 1)
    col_mass[c_count] = p_count
    plan, iterations, converged = kernels.sinkhorn_plan(
        cost, row_mass, col_mass,
        cfg.sinkhorn_epsilon, cfg.sinkhorn_max_iterations, cfg.sinkhorn_tolerance,
    )
    if not converged:
        log.debug("sinkhorn did not converge after %d iterations", iterations)
    order = sorted(
        ((i, j) for i in range(p_count) for j in range(c_count)),
        key=lambda ij: (-plan[ij], ij),
    )
    used_prev = np.zeros(p_count, dtype=bool)
    used_curr = np.zeros(c_count, dtype=bool)
    pairs = []
    for i, j in order:
        if used_prev[i] or used_curr[j]:
            continue
        if plan[i, j] < plan[i, c_count] or plan[i, j] < plan[p_count, j]:
            continue
        if dist[i, j] > cfg.gamma_match:
            continue
        pairs.append((i, j))
        used_prev[i] = True
        used_curr[j] = True
    return MatchResult(
        tuple(pairs),
        tuple(np.flatnonzero(~used_prev)),
        tuple(np.flatnonzero(~used_curr)),
        converged,
        iterations,
    )


def build_tracklets(observations_by_view: dict[int, list[Observation]],
                    cfg: PipelineConfig) -> dict[int, list[Tracklet]]:
    """Chain consecutive-frame matches into tracklets, one list per view.

    Unmatched detections open new tracklets with a fresh per-view id; a frame
    gap (missing timestep) breaks every chain across it.
    """
    result: dict[int, list[Tracklet]] = {}
    for view_id in sorted(observations_by_view):
        per_frame: dict[int, list[Observation]] = {}
        for obs in observations_by_view[view_id]:
            per_frame.setdefault(obs.timestep, []).append(obs)
        tracklets: list[Tracklet] = []
        next_id = 0
        prev_obs: list[Observation] = []
        prev_owner: list[Tracklet] = []
        prev_t: int | None = None
        for t in sorted(per_frame):
            curr = per_frame[t]
            owners: list[Tracklet] = [None] * len(curr)  # type: ignore[list-item]
            if prev_t is not None and t == prev_t + 1 and prev_obs:
                match = match_consecutive(prev_obs, curr, cfg)
                for i, j in match.pairs:
                    prev_owner[i].add(curr[j])
                    owners[j] = prev_owner[i]
            for j, obs in enumerate(curr):
                if owners[j] is None:
                    tracklet = Tracklet(view_id, next_id, {obs.timestep: obs})
                    next_id += 1
                    tracklets.append(tracklet)
                    owners[j] = tracklet
            prev_obs, prev_owner, prev_t = curr, owners, t
        result[view_id] = tracklets
    return result


def tracklet_world_joints(tracklet: Tracklet, cams: dict[tuple[int, int], Camera],
                          skeleton: Skeleton = DEFAULT_SKELETON) -> np.ndarray:
    """World-frame joints for every frame of a tracklet, in timestep order."""
    obs = list(tracklet.frames.values())
    thetas = np.stack([o.body.theta for o in obs])
    betas = np.stack([o.body.beta for o in obs])
    roots = []
    taus = []
    for o in obs:
        cam = cams[(o.view_id, o.timestep)]
        roots.append(cam.world_from_cam.rotation @ o.body.root_rotation)
        taus.append(cam.world_from_cam.apply(o.body.head_translation))
    canon = batch_canonical_joints(thetas, betas, skeleton)
    return batch_world_joints(canon, np.stack(roots), np.stack(taus), skeleton)


def filter_outliers(tracklet: Tracklet, cams: dict[tuple[int, int], Camera],
                    gamma_outlier: float,
                    skeleton: Skeleton = DEFAULT_SKELETON) -> Tracklet:
    """Drop frames whose mean joint displacement from the last surviving
    frame exceeds gamma_outlier. Sequential: each survivor becomes the new
    reference, so the pass is idempotent."""
    if len(tracklet) <= 1:
        return tracklet
    joints = tracklet_world_joints(tracklet, cams, skeleton)
    timesteps = tracklet.timesteps
    keep = [0]
    for idx in range(1, len(timesteps)):
        delta = kernels.mean_displacement(joints[idx], joints[keep[-1]])
        if delta > gamma_outlier:
            log.debug(
                "view %d track %d: dropping frame %d (displacement %.3f m)",
                tracklet.view_id, tracklet.track_id, timesteps[idx], delta,
            )
            continue
        keep.append(idx)
    if len(keep) == len(timesteps):
        return tracklet
    frames = {timesteps[i]: tracklet.frames[timesteps[i]] for i in keep}
    return Tracklet(tracklet.view_id, tracklet.track_id, frames)
