"""Command line interface.

Subcommands: gen-synth, train, eval, predict, inspect-graph. Option values
are resolved as command line > config file (--config, JSON) > defaults, and
the effective configuration is echoed into every output artifact.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from poserel import engine, metrics
from poserel.backend import active_backend
from poserel.data import (
    SyntheticConfig,
    dataset_instances,
    generate_synthetic,
    load_manifest,
    load_scene,
    read_feature_store,
)
from poserel.errors import PoserelError
from poserel.graphs import active_keypoint_indices, build_pog, build_ppg

_CONFIG_KEYS = set(engine.TrainConfig().to_dict())


_PATH_KEYS = {"train_manifest", "val_manifest", "test_manifest", "checkpoint",
              "report", "out"}


def _load_config_file(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise PoserelError(f"{path}: config file must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS - _PATH_KEYS - {"variant"}
    if unknown:
        raise PoserelError(f"{path}: unknown config keys {sorted(unknown)}")
    return doc


def _resolve_path(args, file_cfg: dict, flag: str, file_key: str):
    """Command line > config file; error when a required path is absent."""
    value = getattr(args, flag, None) or file_cfg.get(file_key)
    if value is None:
        raise PoserelError(f"--{flag.replace('_', '-')} is required "
                           f"(or set {file_key!r} in the config file)")
    return value


def _build_train_config(args) -> engine.TrainConfig:
    """Merge defaults, config file, and explicit command-line overrides."""
    file_cfg = _load_config_file(args.config) if args.config else {}
    variant = args.variant or file_cfg.get("variant") or "mgr"
    overrides = {k: v for k, v in file_cfg.items() if k in _CONFIG_KEYS}
    for key in ("seed", "epochs", "batch_size", "lr0", "momentum",
                "weight_decay", "dilation", "min_keypoint_confidence",
                "lr_decay_period_epochs", "pog_hidden", "ppg_hidden"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    # variant flags always win over stale flags from the config file
    for key in ("use_global", "use_pog", "use_ppg", "pose_gating_on"):
        overrides.pop(key, None)
    config = engine.TrainConfig.for_variant(variant, **overrides)
    config.validate()
    return config


def _parse_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise PoserelError(f"--pair must be A,B with two person indices, got {text!r}")
    return int(parts[0]), int(parts[1])


def cmd_gen_synth(args) -> int:
    base = SyntheticConfig(
        num_classes=args.classes,
        seed=args.seed if args.seed is not None else 0,
        rule_noise=args.rule_noise,
        feature_dim=args.feature_dim,
        global_dim=args.global_dim,
    )
    base.validate()
    out = Path(args.out)
    counts = {"train": args.train_scenes, "val": args.val_scenes,
              "test": args.test_scenes}
    for offset, (split, count) in enumerate(counts.items()):
        cfg = SyntheticConfig(**{**base.__dict__, "split": split,
                                 "num_scenes": count,
                                 "seed": base.seed + offset})
        manifest = generate_synthetic(cfg, out)
        print(f"wrote {manifest}")
    return 0


def cmd_train(args) -> int:
    config = _build_train_config(args)
    file_cfg = _load_config_file(args.config) if args.config else {}
    manifest_path = _resolve_path(args, file_cfg, "manifest", "train_manifest")
    manifest, scenes = load_manifest(manifest_path)
    instances = dataset_instances(scenes)
    num_classes = len(manifest.class_names)

    out = Path(_resolve_path(args, file_cfg, "out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    params, history = engine.train(instances, config, num_classes=num_classes)

    checkpoint_path = out / "checkpoint.bin"
    engine.save_checkpoint(checkpoint_path, params, config)

    density = engine.mean_pog_adjacency_density(instances, config)
    history_doc = {
        "config": config.to_dict(),
        "class_names": manifest.class_names,
        "num_instances": len(instances),
        "pog_mean_adjacency_density": density,
        "epochs": [h.to_dict() for h in history],
    }
    history_path = out / "history.json"
    history_path.write_text(json.dumps(history_doc, indent=1, sort_keys=True))

    print(f"trained on {len(instances)} instances "
          f"({len(history)} epochs, backend {active_backend()})")
    if density is not None:
        print(f"mean POG adjacency density: {density:.4f}")
    if history:
        print(f"final epoch: loss {history[-1].mean_loss:.4f}, "
              f"train accuracy {history[-1].train_accuracy:.4f}")
    print(f"wrote {checkpoint_path}")
    print(f"wrote {history_path}")
    return 0


def cmd_eval(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    checkpoint_path = _resolve_path(args, file_cfg, "checkpoint", "checkpoint")
    manifest_path = _resolve_path(args, file_cfg, "manifest", "test_manifest")
    params, config = engine.load_checkpoint(checkpoint_path)
    manifest, scenes = load_manifest(manifest_path)
    instances = dataset_instances(scenes)
    if not instances:
        raise PoserelError(f"{manifest_path}: no labeled pairs to evaluate")

    prob_matrix = []
    labels = []
    for scene, inst in instances:
        probs, _ = engine.predict(scene, inst, params, config)
        prob_matrix.append(probs)
        labels.append(inst.label)
    report = metrics.evaluate(prob_matrix, labels, len(manifest.class_names))

    doc = {"config": config.to_dict(), "class_names": manifest.class_names,
           **report.to_dict()}
    out = Path(_resolve_path(args, file_cfg, "out", "report"))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=1, sort_keys=True))

    print(f"evaluated {report.num_instances} instances")
    print(f"overall accuracy: {report.overall_accuracy:.4f}")
    print(f"mAP: {report.map:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_predict(args) -> int:
    params, config = engine.load_checkpoint(args.checkpoint)
    store = read_feature_store(args.features)
    scene = load_scene(args.scene, store=store)
    a, b = _parse_pair(args.pair)
    if not (0 <= a < len(scene.persons) and 0 <= b < len(scene.persons)) or a == b:
        raise PoserelError(f"pair ({a}, {b}) invalid for "
                           f"{len(scene.persons)} persons")
    instance = next((p for p in scene.pairs
                     if (p.person_a, p.person_b) == (a, b)), None)
    if instance is None:
        from poserel.scene import RelationInstance
        instance = RelationInstance(a, b, label=0)
    probs, pred = engine.predict(scene, instance, params, config)
    for c, p in enumerate(probs):
        print(f"class {c}: {p:.6f}")
    print(f"predicted class: {pred}")
    return 0


def _print_graph(graph, title: str) -> None:
    print(f"{title}: {len(graph.node_kinds)} nodes")
    for i, kind in enumerate(graph.node_kinds):
        print(f"  [{i:2d}] {kind}")
    print("adjacency:")
    n = graph.adjacency.rows
    for i in range(n):
        row = " ".join(f"{graph.adjacency[i, j]:6.4f}" for j in range(n))
        print(f"  {row}")


def cmd_inspect_graph(args) -> int:
    store = read_feature_store(args.features)
    scene = load_scene(args.scene, store=store)
    a, b = _parse_pair(args.pair)
    from poserel.scene import RelationInstance
    instance = RelationInstance(a, b, label=0)

    if args.graph in ("pog", "both"):
        pog = build_pog(scene, instance, dilation=args.dilation,
                        min_keypoint_confidence=args.min_keypoint_confidence)
        _print_graph(pog, "POG")
    if args.graph in ("ppg", "both"):
        ppg = build_ppg(scene, instance,
                        min_keypoint_confidence=args.min_keypoint_confidence)
        _print_graph(ppg, "PPG")
        print("active inter-person edges (weight = 2 - normalized distance):")
        n = ppg.adjacency.rows
        for k in sorted(active_keypoint_indices()):
            for k2 in range(17):
                w = ppg.adjacency[k, 17 + k2]
                if w != 0.0:
                    print(f"  pose_a[{k}] -- pose_b[{k2}]: {w:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poserel",
        description="Pose-guided graph reasoning for pairwise social "
                    "relation recognition.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate synthetic train/val/test data")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rule-noise", dest="rule_noise", type=float, default=0.0)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=64)
    p.add_argument("--global-dim", dest="global_dim", type=int, default=32)
    p.add_argument("--train-scenes", dest="train_scenes", type=int, default=600)
    p.add_argument("--val-scenes", dest="val_scenes", type=int, default=200)
    p.add_argument("--test-scenes", dest="test_scenes", type=int, default=200)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train a model variant")
    p.add_argument("--manifest", default=None,
                   help="training manifest (or train_manifest in --config)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--variant", choices=sorted(engine.VARIANTS), default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", dest="lr0", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--lr-decay-period", dest="lr_decay_period_epochs",
                   type=int, default=None)
    p.add_argument("--pog-hidden", dest="pog_hidden", type=int, default=None)
    p.add_argument("--ppg-hidden", dest="ppg_hidden", type=int, default=None)
    p.add_argument("--dilation", type=float, default=None)
    p.add_argument("--min-keypoint-confidence", dest="min_keypoint_confidence",
                   type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", default=None,
                   help="evaluation manifest (or test_manifest in --config)")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", default=None, help="report JSON path")
    p.add_argument("--config", default=None, help="JSON config file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict one pair in one scene")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--features", required=True, help="feature store path")
    p.add_argument("--pair", required=True, help="person indices A,B")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect-graph", help="print graphs for one pair")
    p.add_argument("--scene", required=True)
    p.add_argument("--features", required=True, help="feature store path")
    p.add_argument("--pair", required=True, help="person indices A,B")
    p.add_argument("--graph", choices=("pog", "ppg", "both"), default="both")
    p.add_argument("--dilation", type=float, default=0.0)
    p.add_argument("--min-keypoint-confidence", dest="min_keypoint_confidence",
                   type=float, default=0.0)
    p.set_defaults(func=cmd_inspect_graph)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PoserelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
