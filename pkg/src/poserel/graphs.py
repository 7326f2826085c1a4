"""Person-Object Graph (POG) and Person-Pose Graph (PPG) construction.

For one labeled person pair the POG covers {person A, person B, union box,
objects} with person-object edges gated by keypoint-box intersection, and
the PPG covers both persons' 17 COCO keypoints with skeleton edges inside
each person and distance-weighted edges between them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from poserel.errors import DataError, DataWarning, ShapeError
from poserel.geometry import keypoint_hits_box, normalized_distance
from poserel.numerics import Matrix
from poserel.scene import (
    MIN_HEATMAP_PEAKS,
    NUM_KEYPOINTS,
    PersonAnnotation,
    RelationInstance,
    Scene,
)

KEYPOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

# The 19 canonical COCO skeleton bones, as (keypoint, keypoint) slot pairs.
_COCO_SKELETON = (
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12),
    (5, 11), (6, 12), (5, 6), (5, 7), (6, 8), (7, 9), (8, 10),
    (1, 2), (0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 6),
)

_ACTIVE = frozenset({0, 9, 10, 15, 16})  # nose, wrists, ankles

KEYPOINT_FEATURE_DIM = 30  # top-10 heatmap peaks as (x, y, score) triples


@dataclass
class RelationGraph:
    """A built graph: node kinds, symmetric weighted adjacency, node features."""

    node_kinds: list[str]
    adjacency: Matrix
    features: Matrix


def active_keypoint_indices() -> frozenset[int]:
    """Keypoint slots allowed to emit inter-person edges: nose, wrists, ankles."""
    return _ACTIVE


def coco_skeleton_edges() -> tuple[tuple[int, int], ...]:
    """The 19 canonical COCO bone pairs as 0-based keypoint slot pairs."""
    return _COCO_SKELETON


def keypoint_feature_vector(person: PersonAnnotation, keypoint_index: int,
                            image_w: float, image_h: float) -> list[float]:
    """30-element node feature: the top-10 heatmap peaks of one keypoint as
    (x/image_w, y/image_h, score) triples in descending-score order.

    Fewer than 10 available peaks are padded with (0, 0, 0) triples and
    flagged with a DataWarning. Positions are clamped to [0, 1].
    """
    peaks = person.heatmap_peaks[keypoint_index]
    if len(peaks) < MIN_HEATMAP_PEAKS:
        warnings.warn(
            f"keypoint {keypoint_index} has {len(peaks)} heatmap peaks; "
            f"padding to {MIN_HEATMAP_PEAKS}", DataWarning, stacklevel=2)
    vec: list[float] = []
    for rank in range(MIN_HEATMAP_PEAKS):
        if rank < len(peaks):
            x, y, score = peaks[rank]
            vec.append(min(max(x / image_w, 0.0), 1.0))
            vec.append(min(max(y / image_h, 0.0), 1.0))
            vec.append(score)
        else:
            vec.extend((0.0, 0.0, 0.0))
    return vec


def _person_feature(person: PersonAnnotation, who: str) -> list[float]:
    if person.feature is None:
        raise DataError(f"unresolved feature ref for person {who}: "
                        f"{person.feature_ref}")
    return list(person.feature)


def build_pog(scene: Scene, instance: RelationInstance, dilation: float = 0.0,
              min_keypoint_confidence: float = 0.0,
              pose_gating: bool = True) -> RelationGraph:
    """Build the Person-Object Graph for one labeled pair.

    Nodes are (person A, person B, union, objects in scene order). Person and
    object cliques get weight-1 edges. A person-object edge exists iff any of
    that person's keypoints (at or above the confidence threshold) hits the
    object box dilated by `dilation`; the union node's object edges are the
    logical OR of the two persons'. With pose_gating False every person node
    connects to every object node instead.

    Person rows of the feature matrix come from the person feature refs; the
    union row uses the pair's union feature when present, else the elementwise
    mean of the two person features; object rows come from object feature refs.
    """
    person_a = scene.persons[instance.person_a]
    person_b = scene.persons[instance.person_b]
    m = len(scene.objects)
    n = 3 + m

    feat_a = _person_feature(person_a, "A")
    feat_b = _person_feature(person_b, "B")
    if len(feat_a) != len(feat_b):
        raise ShapeError("person feature dimensions differ within one pair")
    if instance.union_feature is not None:
        feat_union = list(instance.union_feature)
        if len(feat_union) != len(feat_a):
            raise ShapeError("union feature dimension differs from person features")
    else:
        feat_union = [(a + b) / 2.0 for a, b in zip(feat_a, feat_b)]

    rows = [feat_a, feat_b, feat_union]
    node_kinds = ["person_a", "person_b", "union"]
    for oi, obj in enumerate(scene.objects):
        if obj.feature is None:
            raise DataError(f"unresolved feature ref for object {oi}: "
                            f"{obj.feature_ref}")
        if len(obj.feature) != len(feat_a):
            raise ShapeError(f"object {oi} feature dimension differs from persons")
        rows.append(list(obj.feature))
        node_kinds.append(f"object[{oi}]")

    adj = Matrix.zeros(n, n)
    d = adj.data

    def set_edge(i: int, j: int, w: float):
        d[i * n + j] = w
        d[j * n + i] = w

    # person clique (A, B, union)
    set_edge(0, 1, 1.0)
    set_edge(0, 2, 1.0)
    set_edge(1, 2, 1.0)
    # object clique
    for i in range(m):
        for j in range(i + 1, m):
            set_edge(3 + i, 3 + j, 1.0)
    # person-object gating
    for p_node, person in ((0, person_a), (1, person_b)):
        for oi, obj in enumerate(scene.objects):
            if pose_gating:
                hit = any(
                    kp.confidence >= min_keypoint_confidence
                    and keypoint_hits_box(kp, obj.box, dilation)
                    for kp in person.keypoints)
            else:
                hit = True
            if hit:
                set_edge(p_node, 3 + oi, 1.0)
    # union node: OR of the two persons' object edges
    for oi in range(m):
        if d[0 * n + 3 + oi] == 1.0 or d[1 * n + 3 + oi] == 1.0:
            set_edge(2, 3 + oi, 1.0)

    return RelationGraph(node_kinds, adj, Matrix.from_rows(rows))


def build_ppg(scene: Scene, instance: RelationInstance,
              min_keypoint_confidence: float = 0.0) -> RelationGraph:
    """Build the Person-Pose Graph for one labeled pair.

    34 nodes: person A's keypoints 0..16 then person B's. Intra-person edges
    follow the COCO skeleton with weight 1. Every active keypoint (nose,
    wrists, ankles) of one person at or above the confidence threshold
    connects to all 17 keypoints of the other with weight
    2 - normalized_distance; when both directions apply they agree, and the
    weight is written once. Node features are the 30-D keypoint vectors.
    """
    person_a = scene.persons[instance.person_a]
    person_b = scene.persons[instance.person_b]
    for who, person in (("A", person_a), ("B", person_b)):
        if len(person.keypoints) != NUM_KEYPOINTS:
            raise DataError(f"person {who} has {len(person.keypoints)} keypoints, "
                            f"expected {NUM_KEYPOINTS}")

    n = 2 * NUM_KEYPOINTS
    adj = Matrix.zeros(n, n)
    d = adj.data

    def set_edge(i: int, j: int, w: float):
        d[i * n + j] = w
        d[j * n + i] = w

    for i, j in _COCO_SKELETON:
        set_edge(i, j, 1.0)
        set_edge(NUM_KEYPOINTS + i, NUM_KEYPOINTS + j, 1.0)

    for src_person, dst_person, src_off, dst_off in (
            (person_a, person_b, 0, NUM_KEYPOINTS),
            (person_b, person_a, NUM_KEYPOINTS, 0)):
        for k in _ACTIVE:
            kp = src_person.keypoints[k]
            if kp.confidence < min_keypoint_confidence:
                continue
            for k2 in range(NUM_KEYPOINTS):
                other = dst_person.keypoints[k2]
                w = 2.0 - normalized_distance(kp, other, scene.width, scene.height)
                set_edge(src_off + k, dst_off + k2, w)

    node_kinds = [f"pose_a[{i}]" for i in range(NUM_KEYPOINTS)]
    node_kinds += [f"pose_b[{i}]" for i in range(NUM_KEYPOINTS)]
    rows = [keypoint_feature_vector(person_a, i, scene.width, scene.height)
            for i in range(NUM_KEYPOINTS)]
    rows += [keypoint_feature_vector(person_b, i, scene.width, scene.height)
             for i in range(NUM_KEYPOINTS)]
    return RelationGraph(node_kinds, adj, Matrix.from_rows(rows))
