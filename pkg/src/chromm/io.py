"""Serialization of scenario, observations, result, and metrics files.

All files are JSON with a ``schema`` version tag ("chromm-io/1") and a
``kind`` discriminator; field names are lower-camel-case; arrays are
row-major; units are meters, pixels, and radians as declared per field in
docs/schema.md. Serialization is deterministic: fixed key order and Python's
shortest round-trip float repr, so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from . import kernels
from .association import AssociationResult, EdgeMatches, GlobalIdentityMap, ViewGraph
from .bodymodel import BodyParams, Skeleton
from .config import Config, PipelineConfig, ScenarioConfig, Tolerances, validate
from .errors import ConfigError
from .fusion import FusedState, GlobalHuman
from .geometry import Camera, SimilarityTransform
from .pipeline import PipelineResult
from .scale import PairRatio, ScaleReport
from .synth import Scenario
from .tracking import Observation, Tracklet

SCHEMA = "chromm-io/1"


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(part.capitalize() for part in rest)


def _camel_keys(d: dict) -> dict:
    return {_camel(k): v for k, v in d.items()}


def _snake(name: str) -> str:
    out = []
    for ch in name:
        if ch.isupper():
            out.append("_")
            out.append(ch.lower())
        else:
            out.append(ch)
    return "".join(out)


def _snake_keys(d: dict) -> dict:
    return {_snake(k): v for k, v in d.items()}


def dump_json(data: dict, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _camera_to_dict(cam: Camera) -> dict:
    return {
        "intrinsics": cam.intrinsics.tolist(),
        "rotation": cam.world_from_cam.rotation.tolist(),
        "translation": cam.world_from_cam.translation.tolist(),
        "sceneScale": float(cam.scene_scale),
    }


def _camera_from_dict(data: dict) -> Camera:
    return Camera(
        np.asarray(data["intrinsics"], dtype=float),
        SimilarityTransform(1.0, np.asarray(data["rotation"], dtype=float),
                            np.asarray(data["translation"], dtype=float)),
        float(data["sceneScale"]),
    )


def _cameras_to_list(cams: dict[tuple[int, int], Camera]) -> list:
    by_view: dict[int, list] = {}
    for (view_id, t) in sorted(cams):
        by_view.setdefault(view_id, []).append(
            {"timestep": t, **_camera_to_dict(cams[(view_id, t)])}
        )
    return [{"viewId": v, "frames": frames} for v, frames in sorted(by_view.items())]


def _cameras_from_list(data: list) -> dict[tuple[int, int], Camera]:
    cams = {}
    for entry in data:
        for frame in entry["frames"]:
            cams[(int(entry["viewId"]), int(frame["timestep"]))] = _camera_from_dict(frame)
    return cams


def _body_to_dict(body: BodyParams) -> dict:
    return {
        "theta": body.theta.tolist(),
        "beta": body.beta.tolist(),
        "rootRotation": body.root_rotation.tolist(),
        "headTranslation": body.head_translation.tolist(),
    }


def _body_from_dict(data: dict) -> BodyParams:
    return BodyParams(
        np.asarray(data["theta"], dtype=float),
        np.asarray(data["beta"], dtype=float),
        np.asarray(data["rootRotation"], dtype=float),
        np.asarray(data["headTranslation"], dtype=float),
    )


def _observation_to_dict(obs: Observation) -> dict:
    return {
        "viewId": obs.view_id,
        "timestep": obs.timestep,
        "token": obs.token.tolist(),
        **_body_to_dict(obs.body),
        "headKeypoint": obs.head_keypoint.tolist(),
        "pelvisKeypoint": None if obs.pelvis_keypoint is None else obs.pelvis_keypoint.tolist(),
        "pelvisFromCoarse": obs.pelvis_from_coarse,
        "coarseDepth": float(obs.coarse_depth),
    }


def _observation_from_dict(data: dict) -> Observation:
    pelvis = data.get("pelvisKeypoint")
    return Observation(
        view_id=int(data["viewId"]),
        timestep=int(data["timestep"]),
        token=np.asarray(data["token"], dtype=float),
        body=_body_from_dict(data),
        head_keypoint=np.asarray(data["headKeypoint"], dtype=float),
        pelvis_keypoint=None if pelvis is None else np.asarray(pelvis, dtype=float),
        pelvis_from_coarse=bool(data["pelvisFromCoarse"]),
        coarse_depth=float(data["coarseDepth"]),
    )


def save_scenario(scenario: Scenario, path: str):
    cfg = scenario.config
    data = {
        "schema": SCHEMA,
        "kind": "scenario",
        "seed": scenario.seed,
        "counts": {"timesteps": cfg.timesteps, "views": cfg.views, "people": cfg.people},
        "trueScale": float(scenario.true_scale),
        "corruptedScale": float(scenario.corrupted_scale),
        "generator": _camel_keys(asdict(cfg)),
        "skeleton": scenario.skeleton.to_dict(),
        "trueCameras": _cameras_to_list(scenario.true_cams),
        "cameras": _cameras_to_list(scenario.cams),
        "trueHumans": [
            {
                "personId": m,
                "states": [
                    {"timestep": t, **_body_to_dict(body)}
                    for t, body in sorted(states.items())
                ],
            }
            for m, states in sorted(scenario.true_humans.items())
        ],
        "observations": [_observation_to_dict(o) for o in scenario.observations],
        "trueIdentity": list(scenario.true_identity),
    }
    dump_json(data, path)


def load_scenario(path: str) -> Scenario:
    data = load_json(path)
    if data.get("kind") != "scenario":
        raise ConfigError(f"{path} is not a scenario file (kind={data.get('kind')!r})")
    cfg = ScenarioConfig(**_snake_keys(data["generator"]))
    true_humans: dict[int, dict[int, BodyParams]] = {}
    for person in data["trueHumans"]:
        true_humans[int(person["personId"])] = {
            int(state["timestep"]): _body_from_dict(state) for state in person["states"]
        }
    return Scenario(
        seed=int(data["seed"]),
        config=cfg,
        skeleton=Skeleton.from_dict(data["skeleton"]),
        true_scale=float(data["trueScale"]),
        corrupted_scale=float(data["corruptedScale"]),
        true_humans=true_humans,
        true_cams=_cameras_from_list(data["trueCameras"]),
        cams=_cameras_from_list(data["cameras"]),
        observations=[_observation_from_dict(o) for o in data["observations"]],
        true_identity=[int(m) for m in data["trueIdentity"]],
    )


def load_pipeline_input(path: str):
    """Accept either a scenario file or a bare observations file.

    Returns (observations, cams, skeleton, scene_points, scenario_or_None).
    """
    data = load_json(path)
    kind = data.get("kind")
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"{path}: unsupported schema {data.get('schema')!r}")
    if kind == "scenario":
        scenario = load_scenario(path)
        return scenario.observations, dict(scenario.cams), scenario.skeleton, None, scenario
    if kind == "observations":
        observations = [_observation_from_dict(o) for o in data["observations"]]
        cams = _cameras_from_list(data["cameras"])
        skeleton = Skeleton.from_dict(data["skeleton"])
        points = data.get("scenePoints")
        points = None if points is None else np.asarray(points, dtype=float)
        return observations, cams, skeleton, points, None
    raise ConfigError(f"{path}: cannot run the pipeline on kind={kind!r}")


def save_observations(observations: list[Observation],
                      cams: dict[tuple[int, int], Camera],
                      skeleton: Skeleton, path: str,
                      scene_points=None):
    data = {
        "schema": SCHEMA,
        "kind": "observations",
        "skeleton": skeleton.to_dict(),
        "cameras": _cameras_to_list(cams),
        "observations": [_observation_to_dict(o) for o in observations],
        "scenePoints": None if scene_points is None else np.asarray(scene_points).tolist(),
    }
    dump_json(data, path)


def _human_to_dict(human: GlobalHuman) -> dict:
    return {
        "globalId": human.global_id,
        "states": [
            {
                "timestep": t,
                "theta": s.theta.tolist(),
                "beta": s.beta.tolist(),
                "rootRotation": s.root_rotation.tolist(),
                "headPosition": s.head_position.tolist(),
                "views": list(s.views),
            }
            for t, s in sorted(human.states.items())
        ],
    }


def _human_from_dict(data: dict) -> GlobalHuman:
    states = {
        int(s["timestep"]): FusedState(
            np.asarray(s["theta"], dtype=float),
            np.asarray(s["beta"], dtype=float),
            np.asarray(s["rootRotation"], dtype=float),
            np.asarray(s["headPosition"], dtype=float),
            tuple(int(v) for v in s["views"]),
        )
        for s in data["states"]
    }
    return GlobalHuman(int(data["globalId"]), states)


def save_result(result: PipelineResult, config: Config, path: str):
    scale = result.scale_report
    pipeline_echo = asdict(config.pipeline)
    # execution detail, not semantics: output must not depend on the thread cap
    pipeline_echo.pop("threads")
    data = {
        "schema": SCHEMA,
        "kind": "result",
        "kernelBackend": kernels.BACKEND,
        "config": {
            "pipeline": _camel_keys(pipeline_echo),
            "tolerances": _camel_keys(asdict(config.tolerances)),
        },
        "warnings": list(result.warnings),
        "stitchedFromChunks": result.stitched_from_chunks,
        "cameras": _cameras_to_list(result.cameras),
        "identityMap": [
            {"viewId": v, "trackId": k, "globalId": g}
            for (v, k), g in sorted(result.association.identity_map.mapping.items())
        ],
        "tracklets": [
            {
                "viewId": v,
                "trackId": k,
                "frames": [[t, idx] for t, idx in entries],
            }
            for (v, k), entries in sorted(result.observation_index.items())
        ],
        "association": {
            "meanCameraCenters": {
                str(v): c.tolist()
                for v, c in sorted(result.association.view_graph.mean_centers.items())
            },
            "edges": [
                {
                    "viewA": e.view_a,
                    "viewB": e.view_b,
                    "matches": [[a, b, cost] for a, b, cost in e.matches],
                }
                for e in result.association.edges
            ],
        },
        "globalHumans": [_human_to_dict(h) for h in result.humans],
        "scaleReport": None if scale is None else {
            "pairs": [
                {
                    "viewId": p.view_id,
                    "timestep": p.timestep,
                    "personIndex": p.person_index,
                    "smplLengthPx": p.smpl_length_px,
                    "imageLengthPx": p.image_length_px,
                    "ratio": p.ratio,
                    "pelvisFromCoarse": p.pelvis_from_coarse,
                }
                for p in scale.pairs
            ],
            "globalRatio": scale.global_ratio,
            "inputScale": scale.input_scale,
            "adjustedScale": scale.adjusted_scale,
            "estimator": scale.estimator,
        },
        "scenePoints": None if result.scene_points is None else result.scene_points.tolist(),
    }
    dump_json(data, path)


def load_result(path: str) -> PipelineResult:
    """Rebuild a PipelineResult view of a result file (for evaluation)."""
    data = load_json(path)
    if data.get("kind") != "result":
        raise ConfigError(f"{path} is not a result file (kind={data.get('kind')!r})")
    mapping = {
        (int(e["viewId"]), int(e["trackId"])): int(e["globalId"])
        for e in data["identityMap"]
    }
    identity_map = GlobalIdentityMap(mapping)
    edges = tuple(
        EdgeMatches(
            int(e["viewA"]), int(e["viewB"]),
            tuple((int(a), int(b), float(c)) for a, b, c in e["matches"]),
        )
        for e in data["association"]["edges"]
    )
    centers = {
        int(v): np.asarray(c, dtype=float)
        for v, c in data["association"]["meanCameraCenters"].items()
    }
    scale = None
    if data["scaleReport"] is not None:
        s = data["scaleReport"]
        scale = ScaleReport(
            tuple(
                PairRatio(int(p["viewId"]), int(p["timestep"]), int(p["personIndex"]),
                          float(p["smplLengthPx"]), float(p["imageLengthPx"]),
                          float(p["ratio"]), bool(p["pelvisFromCoarse"]))
                for p in s["pairs"]
            ),
            float(s["globalRatio"]), float(s["inputScale"]),
            float(s["adjustedScale"]), s["estimator"],
        )
    points = data.get("scenePoints")
    observation_index = {
        (int(t["viewId"]), int(t["trackId"])): [(int(a), int(b)) for a, b in t["frames"]]
        for t in data["tracklets"]
    }
    return PipelineResult(
        tracklets_by_view={},
        association=AssociationResult(ViewGraph(centers, ()), edges, identity_map),
        humans=[_human_from_dict(h) for h in data["globalHumans"]],
        scale_report=scale,
        cameras=_cameras_from_list(data["cameras"]),
        scene_points=None if points is None else np.asarray(points, dtype=float),
        observation_index=observation_index,
        warnings=list(data["warnings"]),
        stitched_from_chunks=int(data.get("stitchedFromChunks", 0)),
    )


def _transform_to_dict(t: SimilarityTransform) -> dict:
    return {
        "scale": float(t.scale),
        "rotation": t.rotation.tolist(),
        "translation": t.translation.tolist(),
    }


def save_metrics(report_dict: dict, path: str):
    dump_json({"schema": SCHEMA, "kind": "metrics", **report_dict}, path)


def load_config_from_result(data: dict) -> Config:
    """Reconstruct the effective config stored inside a result file."""
    return validate(Config(
        pipeline=PipelineConfig(**_snake_keys(data["config"]["pipeline"])),
        scenario=ScenarioConfig(),
        tolerances=Tolerances(**_snake_keys(data["config"]["tolerances"])),
    ))
