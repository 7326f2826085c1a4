"""In-memory scene annotations: persons, objects, and labeled person pairs.

A Scene carries everything graph construction needs for one image. Feature
vectors referenced by (matrix name, row) pairs are resolved by the loader
and attached to the annotations; builders require them to be present.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from poserel.errors import DataError
from poserel.geometry import Box, Keypoint

NUM_KEYPOINTS = 17
MIN_HEATMAP_PEAKS = 10
DEFAULT_MAX_OBJECTS = 5

FeatureRef = tuple[str, int]


@dataclass
class PersonAnnotation:
    """One detected person: box, 17 COCO keypoints, per-keypoint heatmap peaks."""

    box: Box
    keypoints: list[Keypoint]
    heatmap_peaks: list[list[tuple[float, float, float]]]
    feature_ref: FeatureRef
    feature: Optional[list[float]] = None


@dataclass
class ObjectAnnotation:
    """One detected contextual object."""

    box: Box
    category: str
    confidence: float
    feature_ref: FeatureRef
    feature: Optional[list[float]] = None


@dataclass
class RelationInstance:
    """A labeled person pair: indices into Scene.persons plus a class index."""

    person_a: int
    person_b: int
    label: int
    union_feature_ref: Optional[FeatureRef] = None
    union_feature: Optional[list[float]] = None


@dataclass
class Scene:
    """One image's annotations and its labeled person pairs."""

    image_id: str
    width: int
    height: int
    persons: list[PersonAnnotation]
    objects: list[ObjectAnnotation] = field(default_factory=list)
    global_feature_ref: Optional[FeatureRef] = None
    global_feature: Optional[list[float]] = None
    pairs: list[RelationInstance] = field(default_factory=list)


def validate_scene(scene: Scene, num_classes: Optional[int] = None,
                   max_objects: int = DEFAULT_MAX_OBJECTS) -> None:
    """Check every Scene/PersonAnnotation invariant; raise DataError with a
    locator string on the first violation.

    num_classes of None skips label-bound checks (used when a scene is loaded
    without a manifest, e.g. for ad hoc prediction).
    """
    def fail(where: str, msg: str):
        raise DataError(f"{where}: {msg}")

    if scene.width <= 0 or scene.height <= 0:
        fail("scene", f"image dimensions must be positive, got "
                      f"{scene.width}x{scene.height}")
    if len(scene.objects) > max_objects:
        fail("objects", f"at most {max_objects} objects allowed, got {len(scene.objects)}")
    if scene.pairs and len(scene.persons) < 2:
        fail("persons", "scenes with labeled pairs need at least 2 persons")

    for pi, person in enumerate(scene.persons):
        where = f"persons[{pi}]"
        if len(person.keypoints) != NUM_KEYPOINTS:
            fail(where, f"keypoint count must be {NUM_KEYPOINTS}, "
                        f"got {len(person.keypoints)}")
        for ki, kp in enumerate(person.keypoints):
            if kp.index != ki:
                fail(f"{where}.keypoints[{ki}]", f"keypoint slot index {kp.index} "
                                                 f"does not match position {ki}")
            if not (0 <= kp.x <= scene.width and 0 <= kp.y <= scene.height):
                fail(f"{where}.keypoints[{ki}]", f"keypoint ({kp.x}, {kp.y}) outside "
                                                 f"{scene.width}x{scene.height} image")
        if len(person.heatmap_peaks) != NUM_KEYPOINTS:
            fail(where, f"heatmap_peaks must have {NUM_KEYPOINTS} entries, "
                        f"got {len(person.heatmap_peaks)}")
        for ki, peaks in enumerate(person.heatmap_peaks):
            if len(peaks) < MIN_HEATMAP_PEAKS:
                fail(f"{where}.heatmap_peaks[{ki}]",
                     f"need at least {MIN_HEATMAP_PEAKS} peaks, got {len(peaks)}")
            scores = [p[2] for p in peaks]
            if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
                fail(f"{where}.heatmap_peaks[{ki}]",
                     "peaks must be sorted by descending score")

    for oi, obj in enumerate(scene.objects):
        if not 0.0 <= obj.confidence <= 1.0:
            fail(f"objects[{oi}]", f"confidence must be in [0, 1], got {obj.confidence}")

    n = len(scene.persons)
    for qi, pair in enumerate(scene.pairs):
        where = f"pairs[{qi}]"
        if pair.person_a == pair.person_b:
            fail(where, "pair must reference two distinct persons")
        for idx in (pair.person_a, pair.person_b):
            if not 0 <= idx < n:
                fail(where, f"person index {idx} out of range for {n} persons")
        if pair.label < 0:
            fail(where, f"label must be >= 0, got {pair.label}")
        if num_classes is not None and pair.label >= num_classes:
            fail(where, f"label {pair.label} out of range for {num_classes} classes")
