"""Deterministic synthetic scenario generation and association scoring.

This module is the ground-truth oracle for the end-to-end tests: it builds
multi-person trajectories, camera rigs, and per-view observations with
scrambled within-frame order, optional noise, occlusions, and a deliberately
corrupted scene scale (camera translations and depths written at
``scale_error`` times the true scale while bodies stay metric, mimicking a
near-metric scene predictor).

All randomness comes from one ``numpy.random.Generator`` seeded with PCG64;
regenerating with the same seed and config is bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .association import GlobalIdentityMap
from .bodymodel import (
    DEFAULT_SKELETON,
    POSE_SLOTS,
    SHAPE_DIM,
    BodyParams,
    Skeleton,
    batch_canonical_joints,
    batch_world_joints,
)
from .config import ScenarioConfig
from .geometry import (
    Camera,
    SimilarityTransform,
    axis_angle_from_rotation,
    rotation_from_axis_angle,
)
from .metrics import transform_camera
from .tracking import Observation, Tracklet

# Extra whole-body canonical rotation used by the identical-position /
# distinct-pose ambiguity fixture (radians, about the x axis).
AMBIGUITY_TILT = 1.2

_MAX_AXIS_ANGLE = math.pi - 1e-3


@dataclass
class Scenario:
    """Ground truth plus the derived (possibly corrupted) observations."""

    seed: int
    config: ScenarioConfig
    skeleton: Skeleton
    true_scale: float
    corrupted_scale: float
    true_humans: dict[int, dict[int, BodyParams]]
    true_cams: dict[tuple[int, int], Camera]
    cams: dict[tuple[int, int], Camera]
    observations: list[Observation]
    true_identity: list[int]

    def observations_by_view(self) -> dict[int, list[Observation]]:
        grouped: dict[int, list[Observation]] = {}
        for obs in self.observations:
            grouped.setdefault(obs.view_id, []).append(obs)
        return grouped

    def true_world_joints(self, person: int, timestep: int) -> np.ndarray:
        body = self.true_humans[person][timestep]
        canon = batch_canonical_joints(body.theta[None], body.beta[None], self.skeleton)
        return batch_world_joints(
            canon, body.root_rotation[None], body.head_translation[None], self.skeleton
        )[0]


def _clamp_axis_angle(theta: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(theta, axis=-1, keepdims=True)
    factor = np.where(norms > _MAX_AXIS_ANGLE, _MAX_AXIS_ANGLE / np.where(norms > 0, norms, 1.0), 1.0)
    return theta * factor


def _yaw(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _look_at(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-from-camera rotation for a camera at ``center`` looking at
    ``target``; +z forward, +y down in the image (no roll)."""
    forward = target - center
    forward = forward / np.linalg.norm(forward)
    down = np.array([0.0, -1.0, 0.0])
    y_cam = down - np.dot(down, forward) * forward
    y_cam = y_cam / np.linalg.norm(y_cam)
    x_cam = np.cross(y_cam, forward)
    return np.column_stack([x_cam, y_cam, forward])


def _initial_positions(rng: np.random.Generator, cfg: ScenarioConfig) -> np.ndarray:
    positions = []
    for _ in range(cfg.people):
        for _attempt in range(256):
            candidate = rng.uniform(-0.8 * cfg.walk_radius, 0.8 * cfg.walk_radius, 2)
            if all(np.linalg.norm(candidate - p) >= cfg.min_person_distance for p in positions):
                positions.append(candidate)
                break
        else:
            # crowded config: accept the last candidate rather than fail
            positions.append(candidate)
    return np.asarray(positions)


def _generate_trajectories(rng: np.random.Generator, cfg: ScenarioConfig):
    """Smoothed random walks (OU-style velocity) in the ground plane plus a
    slowly drifting heading per person."""
    m, t = cfg.people, cfg.timesteps
    pos = np.empty((m, t, 2))
    yaw = np.empty((m, t))
    current = _initial_positions(rng, cfg)
    velocity = np.zeros((m, 2))
    heading = rng.uniform(-math.pi, math.pi, m)
    for step in range(t):
        pos[:, step] = current
        yaw[:, step] = heading
        velocity = cfg.walk_damping * velocity + cfg.walk_step * rng.normal(size=(m, 2))
        current = current + velocity
        radius = np.linalg.norm(current, axis=1)
        outside = radius > cfg.walk_radius
        if outside.any():
            current[outside] *= (cfg.walk_radius / radius[outside])[:, None]
            velocity[outside] = 0.0
        heading = heading + 0.06 * rng.normal(size=m)
    return pos, yaw


def _generate_thetas(rng: np.random.Generator, cfg: ScenarioConfig) -> np.ndarray:
    """(M, T, 52, 3) canonical poses: per-person base plus a smooth wiggle."""
    m, t = cfg.people, cfg.timesteps
    base = cfg.pose_amplitude * rng.normal(size=(m, POSE_SLOTS, 3))
    thetas = np.empty((m, t, POSE_SLOTS, 3))
    wiggle = np.zeros((m, POSE_SLOTS, 3))
    for step in range(t):
        thetas[:, step] = _clamp_axis_angle(base + wiggle)
        wiggle = 0.9 * wiggle + 0.3 * cfg.pose_amplitude * rng.normal(size=(m, POSE_SLOTS, 3))
    return thetas


def _compose_pelvis_tilt(theta: np.ndarray, tilt: np.ndarray) -> np.ndarray:
    """Return theta with the pelvis slot composed with an extra rotation, so
    the whole canonical body is rigidly tilted."""
    out = theta.copy()
    pelvis = rotation_from_axis_angle(theta[0])
    out[0] = axis_angle_from_rotation(tilt @ pelvis)
    return out


def generate(cfg: ScenarioConfig) -> Scenario:
    """Build a scenario from a config; same config + seed is bit-identical."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    skeleton = DEFAULT_SKELETON
    corrupted_scale = cfg.scale_error * cfg.true_scale
    m_count, t_count, v_count = cfg.people, cfg.timesteps, cfg.views
    if cfg.ambiguous_pair and m_count != 2:
        raise ValueError("ambiguous_pair scenarios require scenario.people = 2")

    archetypes = rng.normal(size=(m_count, cfg.token_dim))
    archetypes = cfg.token_separation * archetypes / np.linalg.norm(archetypes, axis=1, keepdims=True)
    betas = np.clip(rng.normal(0.0, 0.3, size=(m_count, SHAPE_DIM)), -1.0, 1.0)
    positions, yaws = _generate_trajectories(rng, cfg)
    thetas = _generate_thetas(rng, cfg)

    tilt = rotation_from_axis_angle(np.array([AMBIGUITY_TILT, 0.0, 0.0]))
    if cfg.ambiguous_pair:
        # person 1 mirrors person 0's world joints exactly: same trajectory,
        # canonical pose rigidly tilted, root rotation compensating.
        positions[1] = positions[0]
        yaws[1] = yaws[0]
        betas[1] = betas[0]
        for step in range(t_count):
            thetas[1, step] = _compose_pelvis_tilt(thetas[0, step], tilt)

    true_humans: dict[int, dict[int, BodyParams]] = {m: {} for m in range(m_count)}
    for m in range(m_count):
        for t in range(t_count):
            root = _yaw(yaws[m, t])
            if cfg.ambiguous_pair and m == 1:
                root = root @ tilt.T
            head = np.array([positions[m, t, 0], cfg.target_height, positions[m, t, 1]])
            true_humans[m][t] = BodyParams(thetas[m, t], betas[m], root, head)

    # cameras on a circle, optionally orbiting, aimed at the scene center
    target = np.array([0.0, cfg.target_height, 0.0])
    true_cams: dict[tuple[int, int], Camera] = {}
    cams: dict[tuple[int, int], Camera] = {}
    half = cfg.image_size_px / 2.0
    for v in range(v_count):
        for t in range(t_count):
            angle = 2.0 * math.pi * v / v_count + math.radians(cfg.camera_orbit_deg) * t
            center = np.array([
                cfg.camera_radius * math.cos(angle),
                cfg.camera_height,
                cfg.camera_radius * math.sin(angle),
            ])
            rot = _look_at(center, target)
            pose = SimilarityTransform(1.0, rot, center)
            true_cams[(v, t)] = Camera.make(cfg.focal_px, cfg.focal_px, half, half,
                                            pose, cfg.true_scale)
            corrupted_pose = SimilarityTransform(1.0, rot, center * cfg.scale_error)
            cams[(v, t)] = Camera.make(cfg.focal_px, cfg.focal_px, half, half,
                                       corrupted_pose, corrupted_scale)

    # true world joints once per (m, t)
    flat_thetas = thetas.reshape(m_count * t_count, POSE_SLOTS, 3)
    flat_betas = np.repeat(betas, t_count, axis=0)
    flat_roots = np.stack([
        true_humans[m][t].root_rotation for m in range(m_count) for t in range(t_count)
    ])
    flat_heads = np.stack([
        true_humans[m][t].head_translation for m in range(m_count) for t in range(t_count)
    ])
    canon = batch_canonical_joints(flat_thetas, flat_betas, skeleton)
    world = batch_world_joints(canon, flat_roots, flat_heads, skeleton)
    joints_world = world.reshape(m_count, t_count, skeleton.joint_count, 3)

    token_sigma = cfg.token_noise / math.sqrt(2.0 * cfg.token_dim)
    observations: list[Observation] = []
    true_identity: list[int] = []
    for v in range(v_count):
        for t in range(t_count):
            cam_true = true_cams[(v, t)]
            frame: list[tuple[Observation, int]] = []
            for m in range(m_count):
                if rng.random() < cfg.occlusion_rate:
                    continue
                body_true = true_humans[m][t]
                head_world = body_true.head_translation
                head_cam = cam_true.cam_from_world(head_world)
                if head_cam[2] <= 0.0:
                    continue
                head_px = cam_true.project_world_point(head_world)
                pelvis_world = joints_world[m, t, skeleton.pelvis_index]
                pelvis_px = cam_true.project_world_point(pelvis_world)
                head_px = head_px + cfg.keypoint_noise_px * rng.normal(size=2)
                from_coarse = rng.random() < cfg.pelvis_coarse_rate
                pelvis_noise = cfg.keypoint_noise_px + (cfg.coarse_pelvis_noise_px if from_coarse else 0.0)
                pelvis_px = pelvis_px + pelvis_noise * rng.normal(size=2)
                depth = cfg.scale_error * head_cam[2] * (1.0 + cfg.param_noise * rng.normal())
                depth = max(depth, 0.05)
                theta_obs = _clamp_axis_angle(
                    body_true.theta + cfg.param_noise * rng.normal(size=(POSE_SLOTS, 3))
                )
                beta_obs = betas[m] + cfg.param_noise * rng.normal(size=SHAPE_DIM)
                rot_cam = cam_true.world_from_cam.rotation.T @ body_true.root_rotation
                rot_cam = rot_cam @ rotation_from_axis_angle(cfg.param_noise * rng.normal(size=3))
                tau_cam = depth * cam_true.back_project(head_px[0], head_px[1])
                token = archetypes[m] + token_sigma * rng.normal(size=cfg.token_dim)
                obs = Observation(
                    view_id=v,
                    timestep=t,
                    token=token,
                    body=BodyParams(theta_obs, beta_obs, rot_cam, tau_cam),
                    head_keypoint=head_px,
                    pelvis_keypoint=pelvis_px,
                    pelvis_from_coarse=from_coarse,
                    coarse_depth=float(depth),
                )
                frame.append((obs, m))
            order = rng.permutation(len(frame))
            for idx in order:
                observations.append(frame[idx][0])
                true_identity.append(frame[idx][1])

    return Scenario(
        seed=cfg.seed,
        config=cfg,
        skeleton=skeleton,
        true_scale=cfg.true_scale,
        corrupted_scale=corrupted_scale,
        true_humans=true_humans,
        true_cams=true_cams,
        cams=cams,
        observations=observations,
        true_identity=true_identity,
    )


@dataclass(frozen=True)
class AssociationScores:
    """Pairwise re-identification contingency over cross-view observation
    pairs at shared timesteps; percentages, None on a zero denominator."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    true_positive: int = 0
    false_positive: int = 0
    true_negative: int = 0
    false_negative: int = 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "truePositive": self.true_positive,
            "falsePositive": self.false_positive,
            "trueNegative": self.true_negative,
            "falseNegative": self.false_negative,
        }


def _score_pairs(predicted_gid: dict[int, int], scenario: Scenario) -> AssociationScores:
    """Pairwise contingency core: predicted_gid maps flat observation indices
    (into scenario.observations) to predicted global ids. Observations with
    no predicted identity (dropped by outlier filtering) are excluded."""
    frames: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for idx, (obs, true_m) in enumerate(zip(scenario.observations, scenario.true_identity)):
        if idx in predicted_gid:
            frames.setdefault((obs.timestep, obs.view_id), []).append((idx, true_m))
    tp = fp = tn = fn = 0
    timesteps = sorted({t for t, _ in frames})
    for t in timesteps:
        views = sorted(v for tt, v in frames if tt == t)
        for i, v1 in enumerate(views):
            for v2 in views[i + 1:]:
                for idx1, m1 in frames[(t, v1)]:
                    for idx2, m2 in frames[(t, v2)]:
                        same_pred = predicted_gid[idx1] == predicted_gid[idx2]
                        same_true = m1 == m2
                        if same_pred and same_true:
                            tp += 1
                        elif same_pred and not same_true:
                            fp += 1
                        elif not same_pred and same_true:
                            fn += 1
                        else:
                            tn += 1
    total = tp + fp + tn + fn
    accuracy = 100.0 * (tp + tn) / total if total else None
    precision = 100.0 * tp / (tp + fp) if (tp + fp) else None
    recall = 100.0 * tp / (tp + fn) if (tp + fn) else None
    return AssociationScores(accuracy, precision, recall, tp, fp, tn, fn)


def score_association(identity_map: GlobalIdentityMap,
                      tracklets_by_view: dict[int, list[Tracklet]],
                      scenario: Scenario) -> AssociationScores:
    """Score predicted identities against the scenario's true ones over all
    cross-view observation pairs at shared timesteps."""
    flat_index = {id(obs): i for i, obs in enumerate(scenario.observations)}
    predicted: dict[int, int] = {}
    for view_id, tracklets in tracklets_by_view.items():
        for tracklet in tracklets:
            gid = identity_map.mapping[(view_id, tracklet.track_id)]
            for obs in tracklet.frames.values():
                predicted[flat_index[id(obs)]] = gid
    return _score_pairs(predicted, scenario)


def score_association_indexed(mapping: dict[tuple[int, int], int],
                              observation_index: dict[tuple[int, int], list[tuple[int, int]]],
                              scenario: Scenario) -> AssociationScores:
    """Same scoring, but from a serialized result's tracklet frame table."""
    predicted: dict[int, int] = {}
    for key, entries in observation_index.items():
        gid = mapping[key]
        for _t, obs_idx in entries:
            predicted[obs_idx] = gid
    return _score_pairs(predicted, scenario)


def random_similarity(rng: np.random.Generator,
                      scale_range: tuple[float, float] = (0.5, 2.0),
                      translation_scale: float = 5.0) -> SimilarityTransform:
    """Random Sim(3) with a uniformly sampled rotation axis/angle."""
    axis_angle = rng.normal(size=3)
    axis_angle = axis_angle / np.linalg.norm(axis_angle) * rng.uniform(0.0, math.pi)
    return SimilarityTransform(
        float(rng.uniform(*scale_range)),
        rotation_from_axis_angle(axis_angle),
        rng.uniform(-translation_scale, translation_scale, 3),
    )


def split_with_transforms(scenario: Scenario, boundaries: list[tuple[int, int]],
                          seed: int) -> list[dict]:
    """Cut a scenario into chunks and move every chunk after the first into
    its own random Sim(3) frame (camera poses transformed, camera-frame
    observation depths/translations rescaled consistently).

    Returns one dict per chunk: {"range", "observations", "cams", "transform"}.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    chunks = []
    for index, (start, stop) in enumerate(boundaries):
        transform = SimilarityTransform.identity() if index == 0 else random_similarity(rng)
        cams = {
            (v, t): transform_camera(cam, transform)
            for (v, t), cam in scenario.cams.items()
            if start <= t < stop
        }
        observations = []
        for obs in scenario.observations:
            if not start <= obs.timestep < stop:
                continue
            body = replace(
                obs.body,
                head_translation=obs.body.head_translation * transform.scale,
            )
            observations.append(replace(
                obs,
                body=body,
                coarse_depth=obs.coarse_depth * transform.scale,
            ))
        chunks.append({
            "range": (start, stop),
            "observations": observations,
            "cams": cams,
            "transform": transform,
        })
    return chunks
