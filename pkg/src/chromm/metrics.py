"""World-space evaluation metrics and chunk stitching.

Monocular-protocol metrics (WA-MPJPE, W-MPJPE, RTE) operate on whole
sequences and are reported in millimeters / percent; the multi-view
single-frame protocol (W-MPJPE-dagger, GA-MPJPE, PA-MPJPE) is reported in
meters. Every metric aligns predictions onto ground truth with the transform
group that defines it and is exactly zero on identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateAlignment, StitchFailure
from .fusion import FusedState, GlobalHuman
from .geometry import Camera, SimilarityTransform, umeyama

from . import kernels


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated metric values; a field is None when its protocol's inputs
    were unavailable. Invariant: pa_mpjpe <= ga_mpjpe <= w_mpjpe_dagger."""

    wa_mpjpe_mm: float | None = None
    w_mpjpe_mm: float | None = None
    rte_percent: float | None = None
    rte_is_absolute: bool = False
    w_mpjpe_dagger_m: float | None = None
    ga_mpjpe_m: float | None = None
    pa_mpjpe_m: float | None = None

    def to_dict(self) -> dict:
        return {
            "waMpjpe": self.wa_mpjpe_mm,
            "wMpjpe": self.w_mpjpe_mm,
            "rte": self.rte_percent,
            "rteIsAbsolute": self.rte_is_absolute,
            "wMpjpeDagger": self.w_mpjpe_dagger_m,
            "gaMpjpe": self.ga_mpjpe_m,
            "paMpjpe": self.pa_mpjpe_m,
        }


def _mean_error_after(transform: SimilarityTransform, pred, gt) -> float:
    aligned = transform.apply(pred)
    return float(np.linalg.norm(aligned - gt, axis=-1).mean())


def wa_mpjpe(pred_joints, gt_joints) -> float:
    """Sim(3) fit over the concatenated joints of all frames; mm."""
    pred = np.asarray(pred_joints, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt_joints, dtype=float).reshape(-1, 3)
    transform = umeyama(pred, gt, with_scale=True)
    return 1000.0 * _mean_error_after(transform, pred, gt)


def w_mpjpe(pred_joints, gt_joints) -> float:
    """Sim(3) fit on the first two frames only, applied to all frames; mm.

    Inputs are (F, ..., J, 3) with the leading axis indexing frames.
    """
    pred = np.asarray(pred_joints, dtype=float)
    gt = np.asarray(gt_joints, dtype=float)
    if pred.shape[0] < 2:
        raise DegenerateAlignment("w_mpjpe needs at least two frames")
    transform = umeyama(pred[:2].reshape(-1, 3), gt[:2].reshape(-1, 3), with_scale=True)
    return 1000.0 * _mean_error_after(transform, pred.reshape(-1, 3), gt.reshape(-1, 3))


class RteResult(NamedTuple):
    value: float
    is_absolute: bool


def rte(pred_root, gt_root, min_path: float = 1e-6) -> RteResult:
    """Root translation error after SE(3) alignment, as a percentage of the
    ground-truth path length. Static trajectories (path below ``min_path``)
    report the absolute mean error in meters instead, flagged."""
    pred = np.asarray(pred_root, dtype=float)
    gt = np.asarray(gt_root, dtype=float)
    if pred.shape[0] < 2:
        raise DegenerateAlignment("rte needs at least two frames")
    path = float(np.linalg.norm(np.diff(gt, axis=0), axis=1).sum())
    if path < min_path:
        # static ground truth cannot anchor a rigid fit; report the raw error
        return RteResult(float(np.linalg.norm(pred - gt, axis=-1).mean()), True)
    transform = umeyama(pred, gt, with_scale=False)
    error = _mean_error_after(transform, pred, gt)
    return RteResult(100.0 * error / path, False)


class MultiviewFrameMetrics(NamedTuple):
    w_mpjpe_dagger_m: float | None
    ga_mpjpe_m: float | None
    pa_mpjpe_m: float | None


def _camera_probe_points(cams: list[Camera], probe: float = 0.1) -> np.ndarray:
    """Camera centers plus probe points along each camera axis, so an SE(3)
    is fully determined even with two cameras."""
    points = []
    for cam in cams:
        center = cam.center
        rot = cam.world_from_cam.rotation
        points.append(center)
        for axis in range(3):
            points.append(center + probe * rot[:, axis])
    return np.asarray(points)


def multiview_frame_metrics(pred_joints, gt_joints,
                            pred_cams: list[Camera],
                            gt_cams: list[Camera]) -> MultiviewFrameMetrics:
    """Single-timestep multi-person metrics (meters).

    pred_joints/gt_joints are (P, J, 3) with identity correspondence along P.
    W-MPJPE-dagger aligns predicted camera poses onto ground-truth ones with
    SE(3); GA-MPJPE fits one Sim(3) over all persons jointly; PA-MPJPE fits a
    Sim(3) per person. Degenerate sub-metrics come back as None.
    """
    pred = np.asarray(pred_joints, dtype=float)
    gt = np.asarray(gt_joints, dtype=float)
    w_dagger = None
    try:
        cam_fit = umeyama(_camera_probe_points(pred_cams),
                          _camera_probe_points(gt_cams), with_scale=False)
        w_dagger = _mean_error_after(cam_fit, pred.reshape(-1, 3), gt.reshape(-1, 3))
    except DegenerateAlignment:
        pass
    ga = None
    try:
        fit = umeyama(pred.reshape(-1, 3), gt.reshape(-1, 3), with_scale=True)
        ga = _mean_error_after(fit, pred.reshape(-1, 3), gt.reshape(-1, 3))
    except DegenerateAlignment:
        pass
    pa = None
    try:
        per_person = [
            _mean_error_after(umeyama(pred[p], gt[p], with_scale=True), pred[p], gt[p])
            for p in range(pred.shape[0])
        ]
        pa = float(np.mean(per_person))
    except DegenerateAlignment:
        pass
    return MultiviewFrameMetrics(w_dagger, ga, pa)


@dataclass
class ChunkResult:
    """One independently reconstructed chunk: its cameras, humans, and
    optional scene points, all in the chunk's own world frame."""

    cameras: dict[tuple[int, int], Camera]
    humans: list[GlobalHuman]
    scene_points: np.ndarray | None = None


@dataclass
class StitchedSequence:
    cameras: dict[tuple[int, int], Camera]
    humans: list[GlobalHuman]
    scene_points: np.ndarray | None
    chunk_transforms: list[SimilarityTransform]


def transform_camera(cam: Camera, t: SimilarityTransform) -> Camera:
    """Re-express a camera in a Sim(3)-transformed world frame."""
    return Camera(
        cam.intrinsics,
        SimilarityTransform(
            1.0,
            t.rotation @ cam.world_from_cam.rotation,
            t.apply(cam.world_from_cam.translation),
        ),
        cam.scene_scale * t.scale,
    )


def transform_human(human: GlobalHuman, t: SimilarityTransform) -> GlobalHuman:
    states = {
        ts: FusedState(
            s.theta, s.beta, t.rotation @ s.root_rotation, t.apply(s.head_position), s.views
        )
        for ts, s in human.states.items()
    }
    return GlobalHuman(human.global_id, states)


def _chunk_alignment(left: ChunkResult, right: ChunkResult,
                     left_index: int) -> SimilarityTransform:
    """Sim(3) carrying the right chunk's frame onto the left chunk's.

    Shared (view, timestep) camera frames are the correspondence when the
    chunks overlap in time; disjoint chunks (the fixed-rig protocol) fall
    back to per-view mean centers over the views both chunks contain.
    """
    shared = sorted(set(left.cameras) & set(right.cameras))
    if shared:
        src = np.asarray([right.cameras[k].center for k in shared])
        dst = np.asarray([left.cameras[k].center for k in shared])
    else:
        views = sorted({v for v, _ in left.cameras} & {v for v, _ in right.cameras})
        if len(views) < 3:
            raise StitchFailure(left_index, left_index + 1,
                                f"only {len(views)} shared views and no shared frames")
        src = np.asarray([
            np.mean([c.center for (v, _), c in sorted(right.cameras.items()) if v == view], axis=0)
            for view in views
        ])
        dst = np.asarray([
            np.mean([c.center for (v, _), c in sorted(left.cameras.items()) if v == view], axis=0)
            for view in views
        ])
    try:
        return umeyama(src, dst, with_scale=True)
    except DegenerateAlignment as exc:
        raise StitchFailure(left_index, left_index + 1, str(exc))


def _link_identities(accumulated: dict[int, GlobalHuman],
                     incoming: list[GlobalHuman],
                     link_threshold: float) -> dict[int, int]:
    """Map incoming chunk-local ids onto accumulated global ids by head
    proximity (shared timesteps preferred, else the chunk boundary frames)."""
    acc_ids = sorted(accumulated)
    if not acc_ids or not incoming:
        return {}
    cost = np.full((len(incoming), len(acc_ids)), 1e12)
    for i, human in enumerate(incoming):
        for j, acc_id in enumerate(acc_ids):
            acc = accumulated[acc_id]
            common = sorted(set(human.states) & set(acc.states))
            if common:
                d = np.mean([
                    np.linalg.norm(human.states[t].head_position - acc.states[t].head_position)
                    for t in common
                ])
            else:
                d = np.linalg.norm(
                    human.states[min(human.states)].head_position
                    - acc.states[max(acc.states)].head_position
                )
            cost[i, j] = d
    rows, cols = kernels.solve_assignment(cost)
    return {
        incoming[i].global_id: acc_ids[j]
        for i, j in zip(rows, cols)
        if cost[i, j] < link_threshold
    }


def stitch_chunks(chunks: list[ChunkResult],
                  link_threshold: float = 0.75) -> StitchedSequence:
    """Chain per-chunk reconstructions into one continuous sequence.

    Each adjacent pair contributes a Sim(3) (later chunk onto earlier);
    transforms compose left to right so everything lands in the first chunk's
    frame. On shared timesteps the earlier chunk's state wins.
    """
    if not chunks:
        raise ValueError("no chunks to stitch")
    transforms = [SimilarityTransform.identity()]
    for k in range(1, len(chunks)):
        pair = _chunk_alignment(chunks[k - 1], chunks[k], k - 1)
        transforms.append(transforms[k - 1].compose(pair))
    cameras: dict[tuple[int, int], Camera] = {}
    humans: dict[int, GlobalHuman] = {}
    points_parts = []
    next_id = 0
    for k, chunk in enumerate(chunks):
        t = transforms[k]
        moved_cams = {key: transform_camera(c, t) for key, c in chunk.cameras.items()}
        for key in sorted(moved_cams):
            cameras.setdefault(key, moved_cams[key])
        moved_humans = [transform_human(h, t) for h in sorted(chunk.humans, key=lambda h: h.global_id)]
        links = _link_identities(humans, moved_humans, link_threshold)
        for human in moved_humans:
            target = links.get(human.global_id)
            if target is None:
                target = next_id
                next_id += 1
                humans[target] = GlobalHuman(target, {})
            for ts in sorted(human.states):
                humans[target].states.setdefault(ts, human.states[ts])
        next_id = max(next_id, max(humans) + 1 if humans else 0)
        if chunk.scene_points is not None:
            points_parts.append(t.apply(chunk.scene_points))
    merged_humans = [
        GlobalHuman(gid, dict(sorted(humans[gid].states.items())))
        for gid in sorted(humans)
    ]
    points = np.concatenate(points_parts) if points_parts else None
    return StitchedSequence(cameras, merged_humans, points, transforms)
