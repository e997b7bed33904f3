"""Evaluation of pipeline results against a synthetic scenario.

Builds predicted/ground-truth joint correspondences from the fused states,
computes the sequence metrics (mono protocol: WA-MPJPE, W-MPJPE, RTE) and the
per-frame multi-view metrics (W-MPJPE-dagger, GA-MPJPE, PA-MPJPE), and scores
the re-identification contingency when the result still references its input
observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bodymodel import Skeleton, batch_canonical_joints, batch_world_joints
from .errors import EvaluationError
from .fusion import FusedState
from .geometry import umeyama
from .kernels import solve_assignment
from .metrics import (
    MetricsReport,
    MultiviewFrameMetrics,
    multiview_frame_metrics,
    rte,
    wa_mpjpe,
)
from .pipeline import PipelineResult
from .synth import AssociationScores, Scenario

TRAJECTORY_LINK_THRESHOLD = 1.0


@dataclass
class Evaluation:
    report: MetricsReport
    association: AssociationScores | None
    person_map: dict[int, int]  # predicted global id -> true person id
    alignments: dict

    def to_dict(self) -> dict:
        return {
            "protocolFields": self.report.to_dict(),
            "association": None if self.association is None else self.association.to_dict(),
            "personMap": {str(k): v for k, v in sorted(self.person_map.items())},
            "alignments": self.alignments,
        }


def _fused_joints(states: list[FusedState], skeleton: Skeleton) -> np.ndarray:
    thetas = np.stack([s.theta for s in states])
    betas = np.stack([s.beta for s in states])
    roots = np.stack([s.root_rotation for s in states])
    heads = np.stack([s.head_position for s in states])
    canon = batch_canonical_joints(thetas, betas, skeleton)
    return batch_world_joints(canon, roots, heads, skeleton)


def _match_identities(result: PipelineResult, scenario: Scenario) -> dict[int, int]:
    """Predicted global id -> true person id.

    Majority vote over the observations each identity covers when the result
    still references its inputs; otherwise (stitched results) trajectories
    are matched by head proximity.
    """
    if result.observation_index:
        votes: dict[int, dict[int, int]] = {}
        for (view_id, track_id), entries in result.observation_index.items():
            gid = result.association.identity_map.mapping[(view_id, track_id)]
            for _t, obs_idx in entries:
                if obs_idx >= len(scenario.true_identity):
                    raise EvaluationError(
                        "result references an observation the scenario does not contain"
                    )
                m = scenario.true_identity[obs_idx]
                votes.setdefault(gid, {}).setdefault(m, 0)
                votes[gid][m] += 1
        return {
            gid: min(counts, key=lambda m: (-counts[m], m))
            for gid, counts in votes.items()
        }
    mapping: dict[int, int] = {}
    humans = result.humans
    people = sorted(scenario.true_humans)
    if humans and people:
        cost = np.full((len(humans), len(people)), 1e12)
        for i, human in enumerate(humans):
            for j, m in enumerate(people):
                common = sorted(set(human.states) & set(scenario.true_humans[m]))
                if not common:
                    continue
                cost[i, j] = float(np.mean([
                    np.linalg.norm(
                        human.states[t].head_position
                        - scenario.true_humans[m][t].head_translation
                    )
                    for t in common
                ]))
        rows, cols = solve_assignment(cost)
        for i, j in zip(rows, cols):
            if cost[i, j] < TRAJECTORY_LINK_THRESHOLD:
                mapping[humans[i].global_id] = people[j]
    if not mapping:
        raise EvaluationError("no predicted identity corresponds to any true person")
    return mapping


def evaluate(result: PipelineResult, scenario: Scenario,
             protocol: str = "all") -> Evaluation:
    """Compute the requested metric protocol(s) for a result."""
    if protocol not in ("mono", "multiview", "all"):
        raise EvaluationError(f"unknown protocol {protocol!r}")
    skeleton = scenario.skeleton
    person_map = _match_identities(result, scenario)

    # per true person: common timesteps and joint stacks
    pred_states: dict[int, dict[int, FusedState]] = {}
    for human in result.humans:
        m = person_map.get(human.global_id)
        if m is None:
            continue
        target = pred_states.setdefault(m, {})
        for t, state in human.states.items():
            target.setdefault(t, state)
    cells: list[tuple[int, int]] = []  # (person, timestep)
    for m in sorted(pred_states):
        for t in sorted(pred_states[m]):
            if t in scenario.true_humans[m]:
                cells.append((m, t))
    if not cells:
        raise EvaluationError("predictions and ground truth share no (person, timestep) cells")

    pred_joints = _fused_joints(
        [pred_states[m][t] for m, t in cells], skeleton
    )
    gt_joints = np.stack([scenario.true_world_joints(m, t) for m, t in cells])

    wa = w = rte_value = None
    rte_absolute = False
    alignments: dict = {}
    if protocol in ("mono", "all"):
        wa_fit = umeyama(pred_joints.reshape(-1, 3), gt_joints.reshape(-1, 3), with_scale=True)
        wa = wa_mpjpe(pred_joints, gt_joints)
        alignments["wa"] = {
            "scale": float(wa_fit.scale),
            "rotation": wa_fit.rotation.tolist(),
            "translation": wa_fit.translation.tolist(),
        }
        frame_ts = sorted({t for _m, t in cells})
        if len(frame_ts) >= 2:
            first_two = set(frame_ts[:2])
            sel = [i for i, (_m, t) in enumerate(cells) if t in first_two]
            w_fit = umeyama(pred_joints[sel].reshape(-1, 3),
                            gt_joints[sel].reshape(-1, 3), with_scale=True)
            w = 1000.0 * float(np.linalg.norm(
                w_fit.apply(pred_joints.reshape(-1, 3)) - gt_joints.reshape(-1, 3), axis=-1
            ).mean())
            alignments["w"] = {
                "scale": float(w_fit.scale),
                "rotation": w_fit.rotation.tolist(),
                "translation": w_fit.translation.tolist(),
            }
        percents = []
        absolutes = []
        for m in sorted(pred_states):
            ts = sorted(t for t in pred_states[m] if t in scenario.true_humans[m])
            if len(ts) < 2:
                continue
            pred_roots = _fused_joints(
                [pred_states[m][t] for t in ts], skeleton
            )[:, skeleton.pelvis_index]
            gt_roots = np.stack([
                scenario.true_world_joints(m, t)[skeleton.pelvis_index] for t in ts
            ])
            value, is_absolute = rte(pred_roots, gt_roots)
            (absolutes if is_absolute else percents).append(value)
        if percents:
            rte_value = float(np.mean(percents))
        elif absolutes:
            rte_value = float(np.mean(absolutes))
            rte_absolute = True

    dagger = ga = pa = None
    if protocol in ("multiview", "all"):
        per_frame: list[MultiviewFrameMetrics] = []
        frame_ts = sorted({t for _m, t in cells})
        cell_index = {(m, t): i for i, (m, t) in enumerate(cells)}
        for t in frame_ts:
            people = [m for m in sorted(pred_states) if (m, t) in cell_index]
            if not people:
                continue
            views = sorted(v for (v, tt) in result.cameras if tt == t)
            pred_cams = [result.cameras[(v, t)] for v in views]
            gt_cams = [scenario.true_cams[(v, t)] for v in views if (v, t) in scenario.true_cams]
            if len(gt_cams) != len(pred_cams) or not pred_cams:
                continue
            idx = [cell_index[(m, t)] for m in people]
            per_frame.append(multiview_frame_metrics(
                pred_joints[idx], gt_joints[idx], pred_cams, gt_cams
            ))
        daggers = [f.w_mpjpe_dagger_m for f in per_frame if f.w_mpjpe_dagger_m is not None]
        gas = [f.ga_mpjpe_m for f in per_frame if f.ga_mpjpe_m is not None]
        pas = [f.pa_mpjpe_m for f in per_frame if f.pa_mpjpe_m is not None]
        dagger = float(np.mean(daggers)) if daggers else None
        ga = float(np.mean(gas)) if gas else None
        pa = float(np.mean(pas)) if pas else None

    association = None
    if result.observation_index:
        from .synth import score_association_indexed

        association = score_association_indexed(
            result.association.identity_map.mapping,
            result.observation_index,
            scenario,
        )

    report = MetricsReport(
        wa_mpjpe_mm=wa,
        w_mpjpe_mm=w,
        rte_percent=rte_value,
        rte_is_absolute=rte_absolute,
        w_mpjpe_dagger_m=dagger,
        ga_mpjpe_m=ga,
        pa_mpjpe_m=pa,
    )
    return Evaluation(report, association, person_map, alignments)
