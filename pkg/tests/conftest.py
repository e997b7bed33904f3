import dataclasses
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chromm.bodymodel import POSE_SLOTS, SHAPE_DIM, BodyParams
from chromm.config import Config
from chromm.geometry import Camera, SimilarityTransform, rotation_from_axis_angle
from chromm.tracking import Observation


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_camera(fx=600.0, fy=600.0, cx=256.0, cy=256.0, rotation=None,
                translation=(0.0, 0.0, 0.0), scene_scale=1.0) -> Camera:
    pose = SimilarityTransform(
        1.0,
        np.eye(3) if rotation is None else np.asarray(rotation, dtype=float),
        np.asarray(translation, dtype=float),
    )
    return Camera.make(fx, fy, cx, cy, pose, scene_scale)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    v = v / np.linalg.norm(v) * rng.uniform(0.0, np.pi)
    return rotation_from_axis_angle(v)


def random_similarity(rng: np.random.Generator, scale_range=(0.5, 2.0)) -> SimilarityTransform:
    return SimilarityTransform(
        float(rng.uniform(*scale_range)),
        random_rotation(rng),
        rng.uniform(-5.0, 5.0, 3),
    )


def make_body(theta=None, beta=None, rotation=None, head=(0.0, 0.0, 0.0)) -> BodyParams:
    return BodyParams(
        np.zeros((POSE_SLOTS, 3)) if theta is None else theta,
        np.zeros(SHAPE_DIM) if beta is None else beta,
        np.eye(3) if rotation is None else rotation,
        np.asarray(head, dtype=float),
    )


def make_observation(view_id=0, timestep=0, token=None, body=None,
                     head_keypoint=(256.0, 256.0), pelvis_keypoint=(256.0, 300.0),
                     pelvis_from_coarse=False, coarse_depth=3.0) -> Observation:
    return Observation(
        view_id=view_id,
        timestep=timestep,
        token=np.zeros(4) if token is None else np.asarray(token, dtype=float),
        body=body or make_body(head=(0.0, 0.0, coarse_depth)),
        head_keypoint=np.asarray(head_keypoint, dtype=float),
        pelvis_keypoint=None if pelvis_keypoint is None else np.asarray(pelvis_keypoint, dtype=float),
        pelvis_from_coarse=pelvis_from_coarse,
        coarse_depth=coarse_depth,
    )


def config_with(**pipeline_overrides) -> Config:
    base = Config()
    return dataclasses.replace(
        base, pipeline=dataclasses.replace(base.pipeline, **pipeline_overrides)
    )
