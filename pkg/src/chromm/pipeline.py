"""Pipeline orchestration: tracking -> association -> fusion -> scale
adjustment -> optional chunk stitching.

All stages are deterministic for a fixed input and config; the --threads
setting only parallelizes independent per-edge work and never changes the
output.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .association import AssociationResult, associate
from .bodymodel import DEFAULT_SKELETON, Skeleton
from .config import Config
from .errors import ChrommError, NoValidPairs, PipelineStageError
from .fusion import FusedState, GlobalHuman, fuse_all
from .geometry import Camera
from .metrics import ChunkResult, StitchedSequence, stitch_chunks
from .scale import ScaleReport, apply_scale, build_scale_report
from .tracking import Observation, Tracklet, build_tracklets, filter_outliers

log = logging.getLogger("chromm.pipeline")


@dataclass
class PipelineResult:
    tracklets_by_view: dict[int, list[Tracklet]]
    association: AssociationResult
    humans: list[GlobalHuman]
    scale_report: ScaleReport | None
    cameras: dict[tuple[int, int], Camera]
    scene_points: np.ndarray | None
    observation_index: dict[tuple[int, int], list[tuple[int, int]]]
    warnings: list[str] = field(default_factory=list)
    stitched_from_chunks: int = 0


def _index_tracklets(tracklets_by_view: dict[int, list[Tracklet]],
                     observations: list[Observation]) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """(view, track) -> [(timestep, flat observation index)]; ties the result
    file back to the input observations for evaluation."""
    flat_index = {id(obs): i for i, obs in enumerate(observations)}
    table: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for view_id in sorted(tracklets_by_view):
        for tracklet in tracklets_by_view[view_id]:
            table[(view_id, tracklet.track_id)] = [
                (t, flat_index[id(obs)]) for t, obs in tracklet.frames.items()
            ]
    return table


def run_pipeline(observations: list[Observation],
                 cams: dict[tuple[int, int], Camera],
                 config: Config,
                 skeleton: Skeleton = DEFAULT_SKELETON,
                 scene_points: np.ndarray | None = None) -> PipelineResult:
    """Run every stage on one consistent set of observations and cameras."""
    cfg = config.pipeline
    warnings: list[str] = []
    executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        try:
            grouped: dict[int, list[Observation]] = {}
            for obs in observations:
                grouped.setdefault(obs.view_id, []).append(obs)
            tracklets_by_view = build_tracklets(grouped, cfg)
            tracklets_by_view = {
                view_id: [
                    filter_outliers(t, cams, cfg.gamma_outlier, skeleton)
                    for t in tracklets
                ]
                for view_id, tracklets in tracklets_by_view.items()
            }
        except ChrommError:
            raise
        except Exception as exc:
            raise PipelineStageError("tracking", str(exc)) from exc

        try:
            association = associate(tracklets_by_view, cams, cfg, skeleton,
                                     executor=executor)
        except ChrommError:
            raise
        except Exception as exc:
            raise PipelineStageError("association", str(exc)) from exc

        try:
            humans = fuse_all(tracklets_by_view, association.identity_map, cams,
                              cfg, skeleton, config.tolerances)
        except ChrommError:
            raise
        except Exception as exc:
            raise PipelineStageError("fusion", str(exc)) from exc

        scale_report = None
        if cfg.scale_adjustment and observations:
            scene_scales = {cam.scene_scale for cam in cams.values()}
            input_scale = sorted(scene_scales)[0]
            if len(scene_scales) > 1:
                warnings.append("cameras carry inconsistent scene scales; using the smallest")
            try:
                scale_report = build_scale_report(
                    observations, cams, input_scale,
                    cfg.min_image_length_px, cfg.scale_estimator, skeleton,
                )
                factor = scale_report.global_ratio
                scene_points, cams = apply_scale(scene_points, cams, factor)
                # fused head anchors are scene-derived (linear in camera
                # centers and depths), so they move with the scene
                humans = [
                    GlobalHuman(h.global_id, {
                        t: FusedState(s.theta, s.beta, s.root_rotation,
                                      s.head_position * factor, s.views)
                        for t, s in h.states.items()
                    })
                    for h in humans
                ]
            except NoValidPairs:
                warnings.append("scale adjustment skipped: no valid head-pelvis pairs")
                log.warning("scale adjustment skipped: no valid head-pelvis pairs")
    finally:
        if executor is not None:
            executor.shutdown()

    return PipelineResult(
        tracklets_by_view=tracklets_by_view,
        association=association,
        humans=humans,
        scale_report=scale_report,
        cameras=cams,
        scene_points=scene_points,
        observation_index=_index_tracklets(tracklets_by_view, observations),
        warnings=warnings,
    )


def _chunk_ranges(timesteps: list[int], size: int, overlap: int) -> list[tuple[int, int]]:
    """Split [min_t, max_t] into windows of ``size`` sharing ``overlap``
    boundary frames (stride size - overlap)."""
    lo, hi = min(timesteps), max(timesteps) + 1
    stride = max(1, size - overlap)
    ranges = []
    start = lo
    while True:
        stop = min(start + size, hi)
        ranges.append((start, stop))
        if stop >= hi:
            break
        start += stride
    return ranges


def run_chunked_pipeline(observations: list[Observation],
                         cams: dict[tuple[int, int], Camera],
                         config: Config,
                         skeleton: Skeleton = DEFAULT_SKELETON,
                         scene_points: np.ndarray | None = None
                         ) -> tuple[PipelineResult, StitchedSequence]:
    """Process the sequence in chunks and stitch the per-chunk results.

    The per-chunk pipeline runs are independent reconstructions; stitching
    aligns them through shared camera geometry and merges identities across
    boundaries.
    """
    cfg = config.pipeline
    timesteps = sorted({t for _v, t in cams})
    ranges = _chunk_ranges(timesteps, cfg.chunk_size, cfg.chunk_overlap)
    chunk_results = []
    for start, stop in ranges:
        chunk_obs = [o for o in observations if start <= o.timestep < stop]
        chunk_cams = {k: c for k, c in cams.items() if start <= k[1] < stop}
        result = run_pipeline(chunk_obs, chunk_cams, config, skeleton, scene_points=None)
        chunk_results.append(result)
    try:
        stitched = stitch_chunks(
            [ChunkResult(r.cameras, r.humans, r.scene_points) for r in chunk_results],
            cfg.stitch_link_threshold,
        )
    except ChrommError:
        raise
    except Exception as exc:
        raise PipelineStageError("stitching", str(exc)) from exc
    combined = PipelineResult(
        tracklets_by_view={},
        association=chunk_results[0].association,
        humans=stitched.humans,
        scale_report=chunk_results[0].scale_report,
        cameras=stitched.cameras,
        scene_points=stitched.scene_points,
        observation_index={},
        warnings=sum((r.warnings for r in chunk_results), []),
        stitched_from_chunks=len(chunk_results),
    )
    return combined, stitched
