"""Cross-view identity association.

A k-nearest-neighbor view connectivity graph (by mean camera centers) selects
which view pairs to compare; tracklet pairs are scored by a position + pose
joint cost over their overlapping timesteps, matched one-to-one per edge with
an exact assignment solver, gated by a threshold, and merged into global
identities with an ascending-cost union-find that refuses to place two
same-view tracklets with overlapping timesteps into one identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bodymodel import DEFAULT_SKELETON, Skeleton, batch_canonical_joints, batch_world_joints
from .config import PipelineConfig
from .geometry import Camera
from .tracking import Tracklet

INFEASIBLE = 1e12


@dataclass(frozen=True)
class ViewGraph:
    mean_centers: dict[int, np.ndarray]
    edges: tuple[tuple[int, int], ...]


def build_view_graph(cams: dict[tuple[int, int], Camera], k: int) -> ViewGraph:
    """Connect each view to its k nearest neighbors by mean camera center."""
    centers: dict[int, np.ndarray] = {}
    grouped: dict[int, list[np.ndarray]] = {}
    for (view_id, _t), cam in cams.items():
        grouped.setdefault(view_id, []).append(cam.center)
    for view_id in sorted(grouped):
        centers[view_id] = np.mean(grouped[view_id], axis=0)
    views = sorted(centers)
    k_eff = min(k, len(views) - 1)
    edges: set[tuple[int, int]] = set()
    for v in views:
        by_distance = sorted(
            (float(np.linalg.norm(centers[v] - centers[o])), o)
            for o in views if o != v
        )
        for _d, o in by_distance[:k_eff]:
            edges.add((min(v, o), max(v, o)))
    return ViewGraph(centers, tuple(sorted(edges)))


@dataclass(frozen=True)
class TrackletJoints:
    """Per-frame world and canonical joints of one tracklet (FK run once)."""

    timesteps: np.ndarray
    world: np.ndarray
    canonical: np.ndarray


def compute_tracklet_joints(tracklet: Tracklet, cams: dict[tuple[int, int], Camera],
                            skeleton: Skeleton = DEFAULT_SKELETON) -> TrackletJoints:
    obs = list(tracklet.frames.values())
    thetas = np.stack([o.body.theta for o in obs])
    betas = np.stack([o.body.beta for o in obs])
    roots = np.stack([
        cams[(o.view_id, o.timestep)].world_from_cam.rotation @ o.body.root_rotation
        for o in obs
    ])
    taus = np.stack([
        cams[(o.view_id, o.timestep)].world_from_cam.apply(o.body.head_translation)
        for o in obs
    ])
    canon = batch_canonical_joints(thetas, betas, skeleton)
    world = batch_world_joints(canon, roots, taus, skeleton)
    return TrackletJoints(np.array(tracklet.timesteps), world, canon)


def tracklet_cost(a: Tracklet, b: Tracklet, cams: dict[tuple[int, int], Camera],
                  weights: tuple[float, float] = (0.8, 0.2),
                  skeleton: Skeleton = DEFAULT_SKELETON,
                  joints_a: TrackletJoints | None = None,
                  joints_b: TrackletJoints | None = None) -> float | None:
    """Mean position/pose joint distance over overlapping timesteps.

    Returns None when the tracklets never coexist (the NoOverlap sentinel);
    callers exclude such pairs from the cost matrix.
    """
    if joints_a is None:
        joints_a = compute_tracklet_joints(a, cams, skeleton)
    if joints_b is None:
        joints_b = compute_tracklet_joints(b, cams, skeleton)
    common, idx_a, idx_b = np.intersect1d(
        joints_a.timesteps, joints_b.timesteps, return_indices=True
    )
    if common.size == 0:
        return None
    w_position, w_pose = weights
    return kernels.joint_pair_cost(
        joints_a.world[idx_a], joints_a.canonical[idx_a],
        joints_b.world[idx_b], joints_b.canonical[idx_b],
        w_position, w_pose,
    )


def match_view_pair(tracklets_a: list[Tracklet], tracklets_b: list[Tracklet],
                    cams: dict[tuple[int, int], Camera], gamma_reid: float,
                    weights: tuple[float, float] = (0.8, 0.2),
                    skeleton: Skeleton = DEFAULT_SKELETON,
                    joints_a: list[TrackletJoints] | None = None,
                    joints_b: list[TrackletJoints] | None = None
                    ) -> list[tuple[int, int, float]]:
    """Optimal one-to-one assignment between two views' tracklets.

    NoOverlap pairs enter the matrix as a large finite cost and can never
    survive the gamma_reid gate. Returns (index_a, index_b, cost) triples.
    """
    if not tracklets_a or not tracklets_b:
        return []
    if joints_a is None:
        joints_a = [compute_tracklet_joints(t, cams, skeleton) for t in tracklets_a]
    if joints_b is None:
        joints_b = [compute_tracklet_joints(t, cams, skeleton) for t in tracklets_b]
    cost = np.full((len(tracklets_a), len(tracklets_b)), INFEASIBLE)
    for i, ta in enumerate(tracklets_a):
        for j, tb in enumerate(tracklets_b):
            value = tracklet_cost(ta, tb, cams, weights, skeleton,
                                  joints_a[i], joints_b[j])
            if value is not None:
                cost[i, j] = value
    if not (cost < INFEASIBLE).any():
        return []
    rows, cols = kernels.solve_assignment(cost)
    matches = []
    for i, j in zip(rows, cols):
        if cost[i, j] < gamma_reid:
            matches.append((int(i), int(j), float(cost[i, j])))
    return matches


@dataclass(frozen=True)
class EdgeMatches:
    """Gated matches of one view-graph edge, as tracklet track ids."""

    view_a: int
    view_b: int
    matches: tuple[tuple[int, int, float], ...]


@dataclass(frozen=True)
class GlobalIdentityMap:
    """(view_id, track_id) -> dense global id, deterministically numbered."""

    mapping: dict[tuple[int, int], int]

    def global_ids(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.mapping.values())))

    def members(self, global_id: int) -> list[tuple[int, int]]:
        return sorted(k for k, g in self.mapping.items() if g == global_id)


class _UnionFind:
    def __init__(self, nodes):
        self.parent = {n: n for n in nodes}

    def find(self, n):
        root = n
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[n] != root:
            self.parent[n], n = root, self.parent[n]
        return root

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def merge_global_ids(edge_matches: list[EdgeMatches],
                     tracklets_by_view: dict[int, list[Tracklet]]) -> GlobalIdentityMap:
    """Union-find over tracklets, processing matches in ascending cost order.

    A union is rejected when it would put two tracklets of one view with
    overlapping timesteps into the same identity. Components are numbered by
    their lexicographically smallest (view_id, track_id) member.
    """
    nodes = [
        (view_id, t.track_id)
        for view_id in sorted(tracklets_by_view)
        for t in tracklets_by_view[view_id]
    ]
    timesteps = {
        (view_id, t.track_id): frozenset(t.timesteps)
        for view_id in sorted(tracklets_by_view)
        for t in tracklets_by_view[view_id]
    }
    uf = _UnionFind(nodes)
    # root -> per-view union of member timesteps
    coverage: dict[tuple[int, int], dict[int, set[int]]] = {
        n: {n[0]: set(timesteps[n])} for n in nodes
    }
    flat = []
    for edge in edge_matches:
        for track_a, track_b, cost in edge.matches:
            flat.append((cost, edge.view_a, edge.view_b, track_a, track_b))
    for cost, view_a, view_b, track_a, track_b in sorted(flat):
        a = uf.find((view_a, track_a))
        b = uf.find((view_b, track_b))
        if a == b:
            continue
        cov_a, cov_b = coverage[a], coverage[b]
        conflict = any(
            cov_a[view].intersection(cov_b[view])
            for view in cov_a.keys() & cov_b.keys()
        )
        if conflict:
            continue
        uf.union(a, b)
        root = uf.find(a)
        merged = cov_a if root == a else cov_b
        other = cov_b if root == a else cov_a
        for view, ts in other.items():
            merged.setdefault(view, set()).update(ts)
        coverage[root] = merged
    components: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for n in nodes:
        components.setdefault(uf.find(n), []).append(n)
    ordered = sorted(components.values(), key=min)
    mapping: dict[tuple[int, int], int] = {}
    for global_id, members in enumerate(ordered):
        for n in members:
            mapping[n] = global_id
    return GlobalIdentityMap(mapping)


@dataclass(frozen=True)
class AssociationResult:
    view_graph: ViewGraph
    edges: tuple[EdgeMatches, ...]
    identity_map: GlobalIdentityMap


def associate(tracklets_by_view: dict[int, list[Tracklet]],
              cams: dict[tuple[int, int], Camera], cfg: PipelineConfig,
              skeleton: Skeleton = DEFAULT_SKELETON,
              executor=None) -> AssociationResult:
    """Run the full cross-view association stage.

    Per-edge cost matrices are independent; when an executor is supplied they
    are evaluated concurrently and collected in deterministic edge order.
    """
    graph = build_view_graph(cams, cfg.view_graph_k)
    weights = cfg.effective_weights()
    joints: dict[int, list[TrackletJoints]] = {
        view_id: [compute_tracklet_joints(t, cams, skeleton) for t in tracklets]
        for view_id, tracklets in sorted(tracklets_by_view.items())
    }

    def solve_edge(edge: tuple[int, int]) -> EdgeMatches:
        view_a, view_b = edge
        tracklets_a = tracklets_by_view.get(view_a, [])
        tracklets_b = tracklets_by_view.get(view_b, [])
        matches = match_view_pair(
            tracklets_a, tracklets_b, cams, cfg.gamma_reid, weights, skeleton,
            joints.get(view_a, []), joints.get(view_b, []),
        )
        as_track_ids = tuple(
            (tracklets_a[i].track_id, tracklets_b[j].track_id, cost)
            for i, j, cost in matches
        )
        return EdgeMatches(view_a, view_b, as_track_ids)

    mapper = executor.map if executor is not None else map
    edges = tuple(mapper(solve_edge, graph.edges))
    identity_map = merge_global_ids(list(edges), tracklets_by_view)
    return AssociationResult(graph, edges, identity_map)
