"""Dataset files: the binary feature store, scene/manifest JSON, and the
synthetic scene generator used for desk-scale end-to-end runs.

Scene JSON keys: image_id, width, height, persons[], objects[],
global_feature_ref, pairs[]. Person keys: box[4], keypoints[17][3],
heatmap_peaks[17][>=10][3], feature_ref. Object keys: box[4], category,
confidence, feature_ref. Pair keys: a, b, label, and optionally
union_feature_ref. Feature refs are [matrix_name, row] pairs into the store.

Manifest JSON keys: class_names[], feature_store, scenes[], split; paths are
relative to the manifest's directory.
"""

from __future__ import annotations

import json
import math
import random
import struct
import sys
from array import array
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from poserel.errors import DataError, FormatError, InvalidInputError
from poserel.geometry import Box, Keypoint, keypoint_hits_box, normalized_distance
from poserel.numerics import Matrix
from poserel.scene import (
    DEFAULT_MAX_OBJECTS,
    NUM_KEYPOINTS,
    ObjectAnnotation,
    PersonAnnotation,
    RelationInstance,
    Scene,
    validate_scene,
)

FEATURE_MAGIC = b"FMAT"
FEATURE_VERSION = 1

SPLITS = ("train", "val", "test")


class FeatureStore:
    """Named float64 matrices; refs are (name, row) pairs."""

    def __init__(self, matrices: dict[str, Matrix]):
        self.matrices = matrices

    def get(self, ref: tuple[str, int], context: str = "") -> list[float]:
        name, row = ref
        where = f"{context}: " if context else ""
        m = self.matrices.get(name)
        if m is None:
            raise DataError(f"{where}feature matrix {name!r} not in store")
        if not 0 <= row < m.rows:
            raise DataError(f"{where}row {row} out of range for {name!r} "
                            f"({m.rows} rows)")
        return m.row(row)


def write_feature_store(path, matrices: dict[str, Matrix]) -> None:
    """FMAT container: magic, u32 version, u32 count, then per entry
    (u16 name length, name, u32 rows, u32 cols, row-major little-endian f64)."""
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", FEATURE_VERSION, len(matrices)))
        for name, m in matrices.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<II", m.rows, m.cols))
            data = m.data
            if sys.byteorder == "big":
                data = array("d", data)
                data.byteswap()
            fh.write(data.tobytes())


def read_feature_store(path) -> FeatureStore:
    """Read an FMAT container written by write_feature_store (bit-exact)."""
    def read_exact(fh, count: int) -> bytes:
        buf = fh.read(count)
        if len(buf) != count:
            raise FormatError(f"{path}: truncated feature store")
        return buf

    with open(path, "rb") as fh:
        if fh.read(4) != FEATURE_MAGIC:
            raise FormatError(f"{path}: not a feature store (bad magic)")
        version, count = struct.unpack("<II", read_exact(fh, 8))
        if version != FEATURE_VERSION:
            raise FormatError(f"{path}: unsupported feature store version {version}")
        matrices: dict[str, Matrix] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", read_exact(fh, 2))
            name = read_exact(fh, name_len).decode("utf-8")
            rows, cols = struct.unpack("<II", read_exact(fh, 8))
            if rows * cols > 1 << 28:
                raise FormatError(f"{path}: entry {name!r} dimension overflow")
            data = array("d")
            data.frombytes(read_exact(fh, 8 * rows * cols))
            if sys.byteorder == "big":
                data.byteswap()
            matrices[name] = Matrix(rows, cols, data, validate=False)
    return FeatureStore(matrices)


@dataclass
class DatasetManifest:
    """Class names (defining label indices), scene paths, store path, split."""

    class_names: list[str]
    feature_store: str
    scenes: list[str]
    split: str


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise DataError(f"{where}: {msg}")


def _as_ref(value, where: str) -> tuple[str, int]:
    _require(isinstance(value, list) and len(value) == 2
             and isinstance(value[0], str) and isinstance(value[1], int),
             where, f"feature ref must be [name, row], got {value!r}")
    return value[0], value[1]


def _as_box(value, where: str) -> Box:
    _require(isinstance(value, list) and len(value) == 4
             and all(isinstance(v, (int, float)) for v in value),
             where, f"box must be [x1, y1, x2, y2], got {value!r}")
    try:
        return Box(*[float(v) for v in value])
    except InvalidInputError as exc:
        raise DataError(f"{where}: {exc}") from exc


def parse_scene(doc: dict, where: str) -> Scene:
    """Build a Scene (refs unresolved) from a parsed JSON document."""
    _require(isinstance(doc, dict), where, "scene document must be an object")
    for key in ("image_id", "width", "height", "persons"):
        _require(key in doc, where, f"missing key {key!r}")

    persons: list[PersonAnnotation] = []
    for pi, pdoc in enumerate(doc["persons"]):
        pwhere = f"{where}: persons[{pi}]"
        for key in ("box", "keypoints", "heatmap_peaks", "feature_ref"):
            _require(key in pdoc, pwhere, f"missing key {key!r}")
        kps_doc = pdoc["keypoints"]
        _require(isinstance(kps_doc, list) and len(kps_doc) == NUM_KEYPOINTS,
                 pwhere, f"keypoint count must be {NUM_KEYPOINTS}, "
                         f"got {len(kps_doc) if isinstance(kps_doc, list) else '?'}")
        keypoints = []
        for ki, kdoc in enumerate(kps_doc):
            _require(isinstance(kdoc, list) and len(kdoc) == 3,
                     f"{pwhere}.keypoints[{ki}]", "keypoint must be [x, y, confidence]")
            try:
                keypoints.append(Keypoint(float(kdoc[0]), float(kdoc[1]),
                                          float(kdoc[2]), index=ki))
            except InvalidInputError as exc:
                raise DataError(f"{pwhere}.keypoints[{ki}]: {exc}") from exc
        peaks_doc = pdoc["heatmap_peaks"]
        _require(isinstance(peaks_doc, list) and len(peaks_doc) == NUM_KEYPOINTS,
                 pwhere, f"heatmap_peaks must have {NUM_KEYPOINTS} entries")
        heatmap_peaks = []
        for ki, plist in enumerate(peaks_doc):
            entry = []
            for t in plist:
                _require(isinstance(t, list) and len(t) == 3,
                         f"{pwhere}.heatmap_peaks[{ki}]",
                         "each peak must be [x, y, score]")
                entry.append((float(t[0]), float(t[1]), float(t[2])))
            heatmap_peaks.append(entry)
        persons.append(PersonAnnotation(
            box=_as_box(pdoc["box"], f"{pwhere}.box"),
            keypoints=keypoints,
            heatmap_peaks=heatmap_peaks,
            feature_ref=_as_ref(pdoc["feature_ref"], f"{pwhere}.feature_ref"),
        ))

    objects: list[ObjectAnnotation] = []
    for oi, odoc in enumerate(doc.get("objects", [])):
        owhere = f"{where}: objects[{oi}]"
        for key in ("box", "category", "confidence", "feature_ref"):
            _require(key in odoc, owhere, f"missing key {key!r}")
        objects.append(ObjectAnnotation(
            box=_as_box(odoc["box"], f"{owhere}.box"),
            category=str(odoc["category"]),
            confidence=float(odoc["confidence"]),
            feature_ref=_as_ref(odoc["feature_ref"], f"{owhere}.feature_ref"),
        ))

    pairs: list[RelationInstance] = []
    for qi, qdoc in enumerate(doc.get("pairs", [])):
        qwhere = f"{where}: pairs[{qi}]"
        for key in ("a", "b", "label"):
            _require(key in qdoc and isinstance(qdoc[key], int),
                     qwhere, f"missing or non-integer key {key!r}")
        union_ref = None
        if qdoc.get("union_feature_ref") is not None:
            union_ref = _as_ref(qdoc["union_feature_ref"],
                                f"{qwhere}.union_feature_ref")
        pairs.append(RelationInstance(person_a=qdoc["a"], person_b=qdoc["b"],
                                      label=qdoc["label"],
                                      union_feature_ref=union_ref))

    global_ref = None
    if doc.get("global_feature_ref") is not None:
        global_ref = _as_ref(doc["global_feature_ref"],
                             f"{where}: global_feature_ref")

    return Scene(
        image_id=str(doc["image_id"]),
        width=int(doc["width"]),
        height=int(doc["height"]),
        persons=persons,
        objects=objects,
        global_feature_ref=global_ref,
        pairs=pairs,
    )


def scene_to_doc(scene: Scene) -> dict:
    """Inverse of parse_scene (refs only; resolved features are not written)."""
    doc = {
        "image_id": scene.image_id,
        "width": scene.width,
        "height": scene.height,
        "persons": [
            {
                "box": [p.box.x1, p.box.y1, p.box.x2, p.box.y2],
                "keypoints": [[kp.x, kp.y, kp.confidence] for kp in p.keypoints],
                "heatmap_peaks": [[[x, y, s] for (x, y, s) in peaks]
                                  for peaks in p.heatmap_peaks],
                "feature_ref": list(p.feature_ref),
            }
            for p in scene.persons
        ],
        "objects": [
            {
                "box": [o.box.x1, o.box.y1, o.box.x2, o.box.y2],
                "category": o.category,
                "confidence": o.confidence,
                "feature_ref": list(o.feature_ref),
            }
            for o in scene.objects
        ],
        "global_feature_ref": list(scene.global_feature_ref)
        if scene.global_feature_ref else None,
        "pairs": [
            {"a": q.person_a, "b": q.person_b, "label": q.label,
             **({"union_feature_ref": list(q.union_feature_ref)}
                if q.union_feature_ref else {})}
            for q in scene.pairs
        ],
    }
    return doc


def resolve_scene_features(scene: Scene, store: FeatureStore, where: str = "",
                           d_region: Optional[int] = None,
                           d_global: Optional[int] = None) -> tuple[int, int]:
    """Attach feature vectors for every ref in the scene; returns the region
    and global dimensions seen (0 where absent), checking consistency with
    any expected dimensions passed in."""
    seen_region = d_region or 0
    seen_global = d_global or 0
    for pi, person in enumerate(scene.persons):
        vec = store.get(person.feature_ref, f"{where}: persons[{pi}]")
        if seen_region and len(vec) != seen_region:
            raise DataError(f"{where}: persons[{pi}]: feature dim {len(vec)} "
                            f"!= expected {seen_region}")
        seen_region = len(vec)
        person.feature = vec
    for oi, obj in enumerate(scene.objects):
        vec = store.get(obj.feature_ref, f"{where}: objects[{oi}]")
        if seen_region and len(vec) != seen_region:
            raise DataError(f"{where}: objects[{oi}]: feature dim {len(vec)} "
                            f"!= expected {seen_region}")
        seen_region = len(vec)
        obj.feature = vec
    for qi, pair in enumerate(scene.pairs):
        if pair.union_feature_ref is not None:
            vec = store.get(pair.union_feature_ref, f"{where}: pairs[{qi}]")
            if seen_region and len(vec) != seen_region:
                raise DataError(f"{where}: pairs[{qi}]: union feature dim "
                                f"{len(vec)} != expected {seen_region}")
            pair.union_feature = vec
    if scene.global_feature_ref is not None:
        vec = store.get(scene.global_feature_ref, f"{where}: global_feature_ref")
        if seen_global and len(vec) != seen_global:
            raise DataError(f"{where}: global feature dim {len(vec)} "
                            f"!= expected {seen_global}")
        seen_global = len(vec)
        scene.global_feature = vec
    return seen_region, seen_global


def load_scene(path, store: Optional[FeatureStore] = None,
               num_classes: Optional[int] = None,
               max_objects: int = DEFAULT_MAX_OBJECTS) -> Scene:
    """Load and fully validate one scene file, resolving refs when a store
    is given."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    scene = parse_scene(doc, str(path))
    try:
        validate_scene(scene, num_classes=num_classes, max_objects=max_objects)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if store is not None:
        resolve_scene_features(scene, store, str(path))
    return scene


def load_manifest(path, max_objects: int = DEFAULT_MAX_OBJECTS
                  ) -> tuple[DatasetManifest, list[Scene]]:
    """Load a manifest plus all its scenes, fully validated and resolved."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: manifest not found")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc

    for key in ("class_names", "feature_store", "scenes", "split"):
        _require(key in doc, str(path), f"missing key {key!r}")
    class_names = doc["class_names"]
    _require(isinstance(class_names, list) and class_names,
             str(path), "class_names must be a non-empty list")
    _require(len(set(class_names)) == len(class_names),
             str(path), "class_names must be unique")
    _require(doc["split"] in SPLITS,
             str(path), f"split must be one of {SPLITS}, got {doc['split']!r}")

    base = path.parent
    store_path = base / doc["feature_store"]
    _require(store_path.exists(), str(path),
             f"feature store {store_path} does not exist")
    store = read_feature_store(store_path)

    manifest = DatasetManifest(
        class_names=list(class_names),
        feature_store=str(doc["feature_store"]),
        scenes=list(doc["scenes"]),
        split=doc["split"],
    )

    scenes: list[Scene] = []
    num_classes = len(class_names)
    d_region = d_global = 0
    for rel in manifest.scenes:
        scene_path = base / rel
        _require(scene_path.exists(), str(path),
                 f"scene file {scene_path} does not exist")
        scene = load_scene(scene_path, store=None, num_classes=num_classes,
                           max_objects=max_objects)
        d_region, d_global = resolve_scene_features(
            scene, store, str(scene_path),
            d_region=d_region or None, d_global=d_global or None)
        scenes.append(scene)
    return manifest, scenes


def dataset_instances(scenes: Sequence[Scene]) -> list[tuple[Scene, RelationInstance]]:
    """Flatten scenes into (scene, labeled pair) training instances."""
    return [(scene, pair) for scene in scenes for pair in scene.pairs]


# ---------------------------------------------------------------------------
# Synthetic scene generation
# ---------------------------------------------------------------------------
#
# Labels are planted through two annotation cues plus a global-feature cue:
#   * category cue: one wrist of person A lands inside exactly one object box,
#     and that object's category index gives the label's coarse group;
#   * distance cue: the nose-to-nose normalized distance falls in one of B
#     quantized bins, giving the label's fine part;
#   * the global feature carries the coarse group direction only, so the
#     global branch alone cannot recover the full label.
# label = coarse * B + fine, with B = ceil(C / 5) distance bins and
# G = ceil(C / B) object categories (G <= 5 keeps scenes within the object cap).

_DIST_LO = 0.08
_DIST_HI = 0.60

# body plan: (x, y) as fractions of the person box, COCO keypoint order
_BODY_PLAN = (
    (0.50, 0.12), (0.45, 0.08), (0.55, 0.08), (0.40, 0.10), (0.60, 0.10),
    (0.30, 0.25), (0.70, 0.25), (0.25, 0.40), (0.75, 0.40),
    (0.20, 0.55), (0.80, 0.55), (0.35, 0.55), (0.65, 0.55),
    (0.35, 0.75), (0.65, 0.75), (0.35, 0.95), (0.65, 0.95),
)


@dataclass
class SyntheticConfig:
    """Knobs for the synthetic scene generator."""

    num_scenes: int = 600
    num_classes: int = 6
    seed: int = 0
    rule_noise: float = 0.0
    split: str = "train"
    feature_dim: int = 64
    global_dim: int = 32
    image_width: int = 640
    image_height: int = 480
    feature_noise: float = 0.1
    feature_signal: float = 2.0

    def validate(self) -> None:
        if self.num_scenes < 1:
            raise InvalidInputError("num_scenes must be >= 1")
        if self.num_classes < 2:
            raise InvalidInputError(f"need at least 2 classes, "
                                    f"got {self.num_classes}")
        if not 0.0 <= self.rule_noise < 1.0:
            raise InvalidInputError("rule_noise must be in [0, 1)")
        if self.split not in SPLITS:
            raise InvalidInputError(f"split must be one of {SPLITS}")
        groups, bins = rule_structure(self.num_classes)
        if self.feature_dim < groups + 1:
            raise InvalidInputError(
                f"feature_dim must be >= {groups + 1} for {self.num_classes} classes")
        if self.global_dim < groups:
            raise InvalidInputError(
                f"global_dim must be >= {groups} for {self.num_classes} classes")
        if self.image_width < 640 or self.image_height < 480:
            raise InvalidInputError("image must be at least 640x480")
        # far-distance noses must still fit horizontally with box margins
        diag = math.hypot(self.image_width, self.image_height)
        if 133.0 + _DIST_HI * diag > self.image_width:
            raise InvalidInputError(
                "image too tall relative to width for distance planting")


def rule_structure(num_classes: int) -> tuple[int, int]:
    """(category groups G, distance bins B) with G*B >= num_classes, G <= 5."""
    bins = math.ceil(num_classes / DEFAULT_MAX_OBJECTS)
    groups = math.ceil(num_classes / bins)
    return groups, bins


def synthetic_class_names(num_classes: int) -> list[str]:
    return [f"relation_{c}" for c in range(num_classes)]


def _gauss_vector(rng: random.Random, dim: int, sigma: float,
                  hot: Optional[int] = None, signal: float = 1.0) -> list[float]:
    vec = [rng.gauss(0.0, sigma) for _ in range(dim)]
    if hot is not None:
        vec[hot] += signal
    return vec


def _make_peaks(rng: random.Random, x: float, y: float,
                width: int, height: int) -> list[tuple[float, float, float]]:
    score = 0.8 + 0.15 * rng.random()
    peaks = [(x, y, score)]
    for _ in range(9):
        score *= 0.6 + 0.2 * rng.random()
        px = min(max(x + rng.gauss(0.0, 12.0), 0.0), width - 1.0)
        py = min(max(y + rng.gauss(0.0, 12.0), 0.0), height - 1.0)
        peaks.append((px, py, score))
    return peaks


def _make_person(rng: random.Random, nose_x: float, nose_y: float,
                 width: int, height: int) -> tuple[Box, list[Keypoint]]:
    box = Box(nose_x - 45.0, nose_y - 30.0, nose_x + 45.0, nose_y + 170.0)
    keypoints = []
    bw, bh = box.x2 - box.x1, box.y2 - box.y1
    for ki, (fx, fy) in enumerate(_BODY_PLAN):
        if ki == 0:
            kx, ky = nose_x, nose_y
        else:
            kx = box.x1 + fx * bw + rng.uniform(-3.0, 3.0)
            ky = box.y1 + fy * bh + rng.uniform(-3.0, 3.0)
            kx = min(max(kx, box.x1 + 1.0), box.x2 - 1.0)
            ky = min(max(ky, box.y1 + 1.0), box.y2 - 1.0)
        keypoints.append(Keypoint(kx, ky, 0.85 + 0.1 * rng.random(), index=ki))
    return box, keypoints


def _build_synthetic_scene(rng: random.Random, scene_idx: int, label: int,
                           stored_label: int, cfg: SyntheticConfig,
                           region_rows: list[list[float]],
                           global_rows: list[list[float]],
                           region_name: str, global_name: str) -> Scene:
    groups, bins = rule_structure(cfg.num_classes)
    coarse, fine = divmod(label, bins)
    width, height = cfg.image_width, cfg.image_height
    diag = math.hypot(width, height)

    # objects: one per category, shuffled order, disjoint slots along the top
    object_slots = list(range(groups))
    rng.shuffle(object_slots)
    objects = []
    slot_boxes = {}
    for g in object_slots:
        jx = rng.uniform(-8.0, 8.0)
        jy = rng.uniform(-8.0, 8.0)
        box = Box(40.0 + 120.0 * g + jx, 40.0 + jy,
                  120.0 + 120.0 * g + jx, 120.0 + jy)
        slot_boxes[g] = box
        row_idx = len(region_rows)
        region_rows.append(_gauss_vector(rng, cfg.feature_dim, cfg.feature_noise,
                                         hot=g, signal=cfg.feature_signal))
        objects.append(ObjectAnnotation(
            box=box, category=f"cat{g}", confidence=0.85 + 0.1 * rng.random(),
            feature_ref=(region_name, row_idx)))

    # persons: nose separation encodes the distance bin
    bin_w = (_DIST_HI - _DIST_LO) / bins
    target = _DIST_LO + (fine + 0.5) * bin_w + rng.uniform(-bin_w / 5, bin_w / 5)
    nose_y = 250.0 + rng.uniform(-10.0, 10.0)
    nose_ax = 80.0 + rng.uniform(-8.0, 8.0)
    nose_bx = nose_ax + target * diag
    box_a, kps_a = _make_person(rng, nose_ax, nose_y, width, height)
    box_b, kps_b = _make_person(rng, nose_bx, nose_y, width, height)

    # contact cue: person A's right wrist inside the coarse-group object box
    touch = slot_boxes[coarse]
    cx = (touch.x1 + touch.x2) / 2 + rng.uniform(-10.0, 10.0)
    cy = (touch.y1 + touch.y2) / 2 + rng.uniform(-10.0, 10.0)
    kps_a[10] = Keypoint(cx, cy, kps_a[10].confidence, index=10)

    persons = []
    for kps, box in ((kps_a, box_a), (kps_b, box_b)):
        row_idx = len(region_rows)
        region_rows.append(_gauss_vector(rng, cfg.feature_dim, cfg.feature_noise,
                                         hot=groups, signal=cfg.feature_signal))
        persons.append(PersonAnnotation(
            box=box, keypoints=kps,
            heatmap_peaks=[_make_peaks(rng, kp.x, kp.y, width, height)
                           for kp in kps],
            feature_ref=(region_name, row_idx)))

    global_row_idx = len(global_rows)
    global_rows.append(_gauss_vector(rng, cfg.global_dim, cfg.feature_noise,
                                     hot=coarse, signal=cfg.feature_signal))

    return Scene(
        image_id=f"synthetic_{cfg.split}_{scene_idx:05d}",
        width=width, height=height,
        persons=persons, objects=objects,
        global_feature_ref=(global_name, global_row_idx),
        pairs=[RelationInstance(0, 1, stored_label)],
    )


def generate_synthetic(cfg: SyntheticConfig, out_dir) -> Path:
    """Emit scene files, the feature store, and a manifest; returns the
    manifest path. Deterministic for a fixed config."""
    cfg.validate()
    rng = random.Random(cfg.seed)
    out_dir = Path(out_dir)
    scene_dir = out_dir / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)

    region_name = "region_features"
    global_name = "global_features"
    region_rows: list[list[float]] = []
    global_rows: list[list[float]] = []

    scene_paths: list[str] = []
    for s in range(cfg.num_scenes):
        label = s % cfg.num_classes
        stored = label
        if cfg.rule_noise > 0.0 and rng.random() < cfg.rule_noise:
            stored = rng.randrange(cfg.num_classes)
        scene = _build_synthetic_scene(rng, s, label, stored, cfg,
                                       region_rows, global_rows,
                                       region_name, global_name)
        rel = f"scenes/{cfg.split}_{s:05d}.json"
        (out_dir / rel).write_text(
            json.dumps(scene_to_doc(scene), sort_keys=True))
        scene_paths.append(rel)

    store_rel = f"{cfg.split}_features.fmat"
    write_feature_store(out_dir / store_rel, {
        region_name: Matrix.from_rows(region_rows),
        global_name: Matrix.from_rows(global_rows),
    })

    manifest = {
        "class_names": synthetic_class_names(cfg.num_classes),
        "feature_store": store_rel,
        "scenes": scene_paths,
        "split": cfg.split,
    }
    manifest_path = out_dir / f"{cfg.split}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    (out_dir / f"{cfg.split}_generation_config.json").write_text(
        json.dumps(cfg.__dict__, indent=1, sort_keys=True))
    return manifest_path


def recover_rule_label(scene: Scene, num_classes: int) -> int:
    """Re-derive the planted label of a synthetic scene from its annotations:
    the touched object's category index is the coarse group and the quantized
    nose distance is the fine part. Raises DataError when the cues are absent."""
    groups, bins = rule_structure(num_classes)
    coarse = None
    for person in scene.persons:
        for wrist in (9, 10):
            kp = person.keypoints[wrist]
            for obj in scene.objects:
                if keypoint_hits_box(kp, obj.box):
                    coarse = int(obj.category.removeprefix("cat"))
    if coarse is None:
        raise DataError(f"scene {scene.image_id}: no wrist-object contact found")
    nose_a = scene.persons[scene.pairs[0].person_a].keypoints[0]
    nose_b = scene.persons[scene.pairs[0].person_b].keypoints[0]
    dist = normalized_distance(nose_a, nose_b, scene.width, scene.height)
    bin_w = (_DIST_HI - _DIST_LO) / bins
    fine = min(max(int((dist - _DIST_LO) / bin_w), 0), bins - 1)
    return coarse * bins + fine
