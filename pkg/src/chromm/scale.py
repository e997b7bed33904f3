"""Head-pelvis scale adjustment.

The scene (cameras + points) arrives at a near-metric scale while bodies are
metric. For every usable observation we compare the projected model
head-pelvis pixel length against the detected one; the global mean ratio r
rescales the scene (s* = r * s). Pairs with a tiny detected length are gated
out to avoid ratio blow-up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bodymodel import DEFAULT_SKELETON, Skeleton, head_pelvis_length_2d
from .errors import BehindCamera, NoValidPairs
from .geometry import Camera, SimilarityTransform
from .tracking import Observation

log = logging.getLogger("chromm.scale")


@dataclass(frozen=True)
class PairRatio:
    view_id: int
    timestep: int
    person_index: int
    smpl_length_px: float
    image_length_px: float
    ratio: float
    pelvis_from_coarse: bool


@dataclass(frozen=True)
class ScaleReport:
    pairs: tuple[PairRatio, ...]
    global_ratio: float
    input_scale: float
    adjusted_scale: float
    estimator: str

    def __post_init__(self):
        if self.adjusted_scale != self.global_ratio * self.input_scale:
            raise ValueError("adjusted scale must equal ratio * input scale")


def pair_ratio(obs: Observation, cam: Camera,
               min_image_length_px: float = 2.0,
               skeleton: Skeleton = DEFAULT_SKELETON) -> tuple[float, float, float] | None:
    """(model px length, detected px length, ratio) or None to skip the pair.

    Skipped when no pelvis keypoint exists, the detected length is below the
    gate, or a joint projects behind the camera.
    """
    if obs.pelvis_keypoint is None:
        return None
    image_length = float(np.linalg.norm(obs.head_keypoint - obs.pelvis_keypoint))
    if image_length < min_image_length_px:
        return None
    try:
        smpl_length = head_pelvis_length_2d(cam, obs.body, skeleton)
    except BehindCamera:
        return None
    ratio = smpl_length / image_length
    if not (np.isfinite(ratio) and ratio > 0.0):
        return None
    return smpl_length, image_length, ratio


def global_ratio(ratios: list[float], estimator: str = "mean") -> float:
    """Aggregate per-pair ratios; the paper's definition is the plain mean."""
    if not ratios:
        raise NoValidPairs("no valid head-pelvis pairs")
    if estimator == "median":
        return float(np.median(ratios))
    return float(np.mean(ratios))


def build_scale_report(observations: list[Observation],
                       cams: dict[tuple[int, int], Camera],
                       input_scale: float,
                       min_image_length_px: float = 2.0,
                       estimator: str = "mean",
                       skeleton: Skeleton = DEFAULT_SKELETON) -> ScaleReport:
    """Collect ratios over all observations and form the adjusted scale."""
    pairs = []
    person_counter: dict[tuple[int, int], int] = {}
    for obs in observations:
        frame = (obs.view_id, obs.timestep)
        index = person_counter.get(frame, 0)
        person_counter[frame] = index + 1
        cam = cams.get(frame)
        if cam is None:
            continue
        entry = pair_ratio(obs, cam, min_image_length_px, skeleton)
        if entry is None:
            continue
        smpl_length, image_length, ratio = entry
        pairs.append(PairRatio(obs.view_id, obs.timestep, index,
                               smpl_length, image_length, ratio,
                               obs.pelvis_from_coarse))
    r = global_ratio([p.ratio for p in pairs], estimator)
    return ScaleReport(tuple(pairs), r, input_scale, r * input_scale, estimator)


def apply_scale(scene_points: np.ndarray | None,
                cams: dict[tuple[int, int], Camera],
                factor: float) -> tuple[np.ndarray | None, dict[tuple[int, int], Camera]]:
    """Rescale the scene by s*/s: camera world translations and scene points
    multiply by the factor; rotations and intrinsics stay untouched."""
    if not factor > 0.0:
        raise ValueError("scale factor must be positive")
    new_cams = {
        key: Camera(
            cam.intrinsics,
            SimilarityTransform(1.0, cam.world_from_cam.rotation,
                                cam.world_from_cam.translation * factor),
            cam.scene_scale * factor,
        )
        for key, cam in cams.items()
    }
    points = None if scene_points is None else np.asarray(scene_points, dtype=float) * factor
    return points, new_cams
