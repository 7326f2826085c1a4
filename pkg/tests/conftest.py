"""Shared test helpers: adversarial random scenes for construction oracles.

These scenes are intentionally messier than the synthetic generator's output
(arbitrary keypoint placement, variable object counts) so that graph
construction is exercised on both sides of every gate.
"""

from __future__ import annotations

import random

import pytest

from poserel.data import (
    SyntheticConfig,
    dataset_instances,
    generate_synthetic,
    load_manifest,
)
from poserel.geometry import Box, Keypoint
from poserel.scene import (
    ObjectAnnotation,
    PersonAnnotation,
    RelationInstance,
    Scene,
)


def random_box(rng: random.Random, width: int, height: int) -> Box:
    x1 = rng.uniform(0, width - 80)
    y1 = rng.uniform(0, height - 80)
    return Box(x1, y1, x1 + rng.uniform(20, 75), y1 + rng.uniform(20, 75))


def random_peaks(rng: random.Random, width: int, height: int,
                 count: int = 10) -> list[tuple[float, float, float]]:
    scores = sorted((rng.random() for _ in range(count)), reverse=True)
    return [(rng.uniform(0, width - 1), rng.uniform(0, height - 1), s)
            for s in scores]


def random_person(rng: random.Random, width: int, height: int,
                  feature_dim: int) -> PersonAnnotation:
    return PersonAnnotation(
        box=random_box(rng, width, height),
        keypoints=[Keypoint(rng.uniform(0, width), rng.uniform(0, height),
                            rng.random(), index=i) for i in range(17)],
        heatmap_peaks=[random_peaks(rng, width, height) for _ in range(17)],
        feature_ref=("region", 0),
        feature=[rng.uniform(-1, 1) for _ in range(feature_dim)],
    )


@pytest.fixture(scope="session")
def synthetic_small(tmp_path_factory):
    """120 rule-clean synthetic training instances plus the class count."""
    out = tmp_path_factory.mktemp("synth_small")
    manifest = generate_synthetic(
        SyntheticConfig(num_scenes=120, num_classes=6, seed=404), out)
    _, scenes = load_manifest(manifest)
    return dataset_instances(scenes), 6


def random_scene(rng: random.Random, num_objects: int | None = None,
                 feature_dim: int = 8, global_dim: int = 5,
                 num_classes: int = 4) -> Scene:
    width, height = 320, 240
    if num_objects is None:
        num_objects = rng.randrange(0, 6)
    objects = [
        ObjectAnnotation(
            box=random_box(rng, width, height),
            category=f"cat{rng.randrange(3)}",
            confidence=rng.random(),
            feature_ref=("region", 0),
            feature=[rng.uniform(-1, 1) for _ in range(feature_dim)],
        )
        for _ in range(num_objects)
    ]
    return Scene(
        image_id=f"test_{rng.randrange(10 ** 6)}",
        width=width,
        height=height,
        persons=[random_person(rng, width, height, feature_dim)
                 for _ in range(2)],
        objects=objects,
        global_feature=[rng.uniform(-1, 1) for _ in range(global_dim)],
        pairs=[RelationInstance(0, 1, rng.randrange(num_classes))],
    )
