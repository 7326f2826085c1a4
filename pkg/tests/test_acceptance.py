"""End-to-end acceptance suite.

Each criterion runs at its stated tolerance and prints one PASS/FAIL line
(visible with `pytest tests/test_acceptance.py -s`). Numbered:

 1. gradient oracle           5. ablation gating check
 2. construction oracles      6. metric oracle
 3. normalization             7. determinism
 4. synthetic learnability    8. object-permutation invariance
"""

import json
import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import random_scene
from test_graphs import brute_force_pog_adjacency, brute_force_ppg_adjacency
from test_metrics import brute_force_ap

from poserel.cli import main as cli_main
from poserel.data import (
    SyntheticConfig,
    dataset_instances,
    generate_synthetic,
    load_manifest,
)
from poserel.engine import (
    GcnLayerParams,
    ModelDims,
    ModelParams,
    TrainConfig,
    instance_loss,
    normalize_adjacency,
    predict,
    train,
)
from poserel.errors import UndefinedMetricError
from poserel.graphs import RelationGraph, build_pog, build_ppg
from poserel.metrics import average_precision, evaluate
from poserel.numerics import (
    Matrix,
    finite_diff_grad,
    glorot_init,
    matmul,
    max_relative_error,
    relu,
)
from poserel.engine import fuse_scores, _instance_pass, _Prepared


@contextmanager
def criterion(num: int, title: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {num} FAIL: {title}")
        raise
    print(f"\nACCEPTANCE {num} PASS: {title}")


@pytest.fixture(scope="module")
def learnability_data(tmp_path_factory):
    """600 train / 200 test rule-clean instances as required by criterion 4."""
    out = tmp_path_factory.mktemp("accept_synth")
    train_manifest = generate_synthetic(
        SyntheticConfig(num_scenes=600, num_classes=6, seed=100), out)
    test_manifest = generate_synthetic(
        SyntheticConfig(num_scenes=200, num_classes=6, seed=200, split="test"),
        out)
    _, train_scenes = load_manifest(train_manifest)
    _, test_scenes = load_manifest(test_manifest)
    return dataset_instances(train_scenes), dataset_instances(test_scenes)


def _toy_graph(rng, n, d, weighted):
    adj = Matrix.zeros(n, n)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.7:
                w = 1.0 + rng.random() if weighted else 1.0
                adj.data[i * n + j] = adj.data[j * n + i] = w
    feats = Matrix.from_rows([[rng.uniform(-1, 1) for _ in range(d)]
                              for _ in range(n)])
    return RelationGraph([f"n{i}" for i in range(n)], adj, feats)


def _toy_params(rng, d_region, d_ppg, d_global, h_pog, h_ppg, c):
    return ModelParams(
        pog_layers=[GcnLayerParams(glorot_init(d_region, h_pog, rng)),
                    GcnLayerParams(glorot_init(h_pog, h_pog, rng))],
        ppg_layers=[GcnLayerParams(glorot_init(d_ppg, h_ppg, rng)),
                    GcnLayerParams(glorot_init(h_ppg, h_ppg, rng))],
        classifier_w=glorot_init(h_pog + h_ppg, c, rng),
        classifier_b=Matrix.zeros(1, c),
        global_w=glorot_init(d_global, c, rng),
        global_b=Matrix.zeros(1, c),
        dims=ModelDims(d_region, d_global, c),
        seed=0,
    )


def _min_abs_hidden_preactivation(pog, ppg, params, config):
    """Smallest |pre-activation| feeding a ReLU; used to reject instances
    where finite differences would straddle the kink."""
    smallest = math.inf
    for graph, layers in ((pog, params.pog_layers), (ppg, params.ppg_layers)):
        norm = normalize_adjacency(graph.adjacency)
        x = graph.features
        for li, layer in enumerate(layers):
            z = matmul(matmul(norm, x), layer.weight)
            if li < len(layers) - 1:
                smallest = min(smallest, min(abs(v) for v in z.data))
                x = relu(z)
            else:
                x = z
    return smallest


def test_criterion_1_gradient_oracle():
    with criterion(1, "analytic gradients match central finite differences "
                      "(h=1e-5, max relative error < 1e-4, 20 instances)"):
        started = time.monotonic()
        rng = random.Random(1001)
        checked = 0
        worst = 0.0
        while checked < 20:
            n_pog, n_ppg = rng.randint(3, 8), rng.randint(3, 8)
            d_region, d_ppg = rng.randint(2, 8), rng.randint(2, 8)
            d_global = rng.randint(2, 8)
            h_pog, h_ppg = rng.randint(2, 4), rng.randint(2, 4)
            c = rng.randint(2, 6)
            config = TrainConfig.for_variant("mgr", pog_hidden=h_pog,
                                             ppg_hidden=h_ppg)
            pog = _toy_graph(rng, n_pog, d_region, weighted=False)
            ppg = _toy_graph(rng, n_ppg, d_ppg, weighted=True)
            gfeat = [rng.uniform(-1, 1) for _ in range(d_global)]
            params = _toy_params(rng, d_region, d_ppg, d_global,
                                 h_pog, h_ppg, c)
            if _min_abs_hidden_preactivation(pog, ppg, params, config) < 1e-3:
                continue  # reject kink-adjacent instances, keep drawing
            label = rng.randrange(c)

            named = params.named_parameters()
            grads = {k: Matrix.zeros(m.rows, m.cols) for k, m in named.items()}
            prep = _Prepared(normalize_adjacency(pog.adjacency), pog.features,
                             normalize_adjacency(ppg.adjacency), ppg.features,
                             gfeat, label)
            _instance_pass(prep, params, config, grads)

            def loss_fn(named_params):
                p = params.with_parameters(named_params)
                return instance_loss((pog, ppg, gfeat), p, config, label=label)

            fd = finite_diff_grad(loss_fn, named, h=1e-5)
            for name in named:
                err = max_relative_error(grads[name].data, fd[name].data)
                worst = max(worst, err)
                assert err < 1e-4, f"instance {checked}, {name}: {err:.3e}"
            checked += 1
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"gradient oracle took {elapsed:.1f}s"
        print(f"\n  worst relative error {worst:.3e} over 20 instances "
              f"({elapsed:.1f}s)")


def test_criterion_2_construction_oracles():
    with criterion(2, "POG/PPG adjacencies equal brute force on 200 scenes; "
                      "PPG has 34 nodes and 38 intra-person entries"):
        rng = random.Random(1002)
        for _ in range(200):
            scene = random_scene(rng)
            inst = scene.pairs[0]
            dilation = rng.choice([0.0, 0.0, 4.0])
            min_conf = rng.choice([0.0, 0.25])

            pog = build_pog(scene, inst, dilation=dilation,
                            min_keypoint_confidence=min_conf)
            expected = brute_force_pog_adjacency(scene, inst, dilation, min_conf)
            assert (np.array(pog.adjacency.to_rows()) == expected).all()

            ppg = build_ppg(scene, inst, min_keypoint_confidence=min_conf)
            expected = brute_force_ppg_adjacency(scene, inst, min_conf)
            assert (np.array(ppg.adjacency.to_rows()) == expected).all()

            assert len(ppg.node_kinds) == 34
            intra = sum(
                1 for i in range(34) for j in range(i + 1, 34)
                if (i < 17) == (j < 17) and ppg.adjacency[i, j] != 0.0)
            assert intra == 38


def test_criterion_3_normalization():
    with criterion(3, "normalization symmetric to 1e-12, equals dense "
                      "reference, exact on the 2-node example"):
        two = normalize_adjacency(Matrix.from_rows([[0, 1], [1, 0]]))
        assert two.to_rows() == [[0.5, 0.5], [0.5, 0.5]]

        rng = random.Random(1003)
        for _ in range(50):
            if rng.random() < 0.5:
                scene = random_scene(rng)
                adjacency = build_ppg(scene, scene.pairs[0]).adjacency
            else:
                adjacency = _toy_graph(rng, rng.randint(1, 12), 2,
                                       weighted=True).adjacency
            got = np.array(normalize_adjacency(adjacency).to_rows())
            assert np.abs(got - got.T).max() <= 1e-12
            n = adjacency.rows
            a = np.array(adjacency.to_rows()) + np.eye(n)
            d_inv_sqrt = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
            ref = d_inv_sqrt @ a @ d_inv_sqrt
            assert np.abs(got - ref).max() <= 1e-12


def _accuracy(variant, train_data, test_data, epochs=40):
    config = TrainConfig.for_variant(variant, epochs=epochs, seed=0,
                                     pog_hidden=48, ppg_hidden=32,
                                     lr_decay_period_epochs=30)
    params, _ = train(train_data, config, num_classes=6)
    probs, labels = [], []
    for scene, inst in test_data:
        p, _ = predict(scene, inst, params, config)
        probs.append(p)
        labels.append(inst.label)
    return evaluate(probs, labels, 6).overall_accuracy


def test_criterion_4_synthetic_learnability(learnability_data):
    with criterion(4, "mgr reaches >= 90% test accuracy within 50 epochs in "
                      "under 5 minutes; global alone scores strictly lower"):
        train_data, test_data = learnability_data
        assert len(train_data) == 600 and len(test_data) == 200
        started = time.monotonic()
        mgr_acc = _accuracy("mgr", train_data, test_data)
        elapsed = time.monotonic() - started
        global_acc = _accuracy("global", train_data, test_data)
        print(f"\n  mgr {mgr_acc:.3f} in {elapsed:.0f}s (40 epochs), "
              f"global {global_acc:.3f}")
        assert elapsed < 300.0, f"mgr training took {elapsed:.1f}s"
        assert mgr_acc >= 0.90
        assert global_acc < mgr_acc


def test_criterion_5_ablation_gating(learnability_data):
    with criterion(5, "pog beats pog-no-pose by >= 5 accuracy points on "
                      "wrist-contact data"):
        train_data, test_data = learnability_data
        pog_acc = _accuracy("pog", train_data, test_data)
        no_pose_acc = _accuracy("pog-no-pose", train_data, test_data)
        print(f"\n  pog {pog_acc:.3f} vs pog-no-pose {no_pose_acc:.3f}")
        assert pog_acc >= no_pose_acc + 0.05


def test_criterion_6_metric_oracle():
    with criterion(6, "AP reproduces 5/6 and matches brute force on 1000 "
                      "random sets; fusion sums to 1 and degenerates cleanly"):
        ap = average_precision([0.9, 0.5, 0.3], [True, False, True])
        assert ap == pytest.approx(5 / 6, abs=1e-12)

        rng = random.Random(1006)
        for _ in range(1000):
            n = rng.randint(1, 50)
            scores = [rng.choice([rng.random(), round(rng.random(), 1)])
                      for _ in range(n)]
            positives = [rng.random() < 0.35 for _ in range(n)]
            if not any(positives):
                positives[rng.randrange(n)] = True
            got = average_precision(scores, positives)
            assert abs(got - brute_force_ap(scores, positives)) <= 1e-12

        with pytest.raises(UndefinedMetricError):
            average_precision([0.1], [False])

        for _ in range(100):
            c = rng.randint(2, 8)
            g = [rng.random() for _ in range(c)]
            g = [v / sum(g) for v in g]
            r = [rng.random() for _ in range(c)]
            r = [v / sum(r) for v in r]
            fused = fuse_scores(g, r, 0.4, 0.6)
            assert abs(sum(fused) - 1.0) <= 1e-12
            assert fuse_scores(g, r, 0.0, 1.0) == r
            assert fuse_scores(g, r, 1.0, 0.0) == g


def test_criterion_7_determinism(tmp_path):
    with criterion(7, "two identical train+eval runs produce bitwise-equal "
                      "checkpoints and reports"):
        data_dir = tmp_path / "data"
        assert cli_main(["gen-synth", "--out", str(data_dir), "--seed", "77",
                         "--train-scenes", "60", "--val-scenes", "12",
                         "--test-scenes", "24"]) == 0
        artifacts = []
        for run in ("run1", "run2"):
            out = tmp_path / run
            assert cli_main(["train",
                             "--manifest", str(data_dir / "train_manifest.json"),
                             "--out", str(out), "--variant", "mgr",
                             "--epochs", "5", "--seed", "13",
                             "--pog-hidden", "16", "--ppg-hidden", "12"]) == 0
            report = out / "report.json"
            assert cli_main(["eval",
                             "--manifest", str(data_dir / "test_manifest.json"),
                             "--checkpoint", str(out / "checkpoint.bin"),
                             "--out", str(report)]) == 0
            artifacts.append((
                (out / "checkpoint.bin").read_bytes(),
                (out / "history.json").read_bytes(),
                report.read_bytes(),
            ))
        assert artifacts[0][0] == artifacts[1][0], "checkpoints differ"
        assert artifacts[0][1] == artifacts[1][1], "histories differ"
        assert artifacts[0][2] == artifacts[1][2], "reports differ"


def test_criterion_8_permutation_invariance():
    with criterion(8, "permuting the object list changes prediction "
                      "probabilities by < 1e-9 per component"):
        rng = random.Random(1008)
        config = TrainConfig.for_variant("mgr", epochs=2, seed=21,
                                         pog_hidden=12, ppg_hidden=8,
                                         batch_size=4)
        warmup = []
        for _ in range(8):
            scene = random_scene(rng, feature_dim=6, global_dim=4,
                                 num_classes=4)
            warmup.append((scene, scene.pairs[0]))
        params, _ = train(warmup, config, num_classes=4)

        from poserel.scene import Scene
        for _ in range(50):
            scene = random_scene(rng, num_objects=rng.randint(2, 5),
                                 feature_dim=6, global_dim=4, num_classes=4)
            perm = list(range(len(scene.objects)))
            rng.shuffle(perm)
            permuted = Scene(
                image_id=scene.image_id, width=scene.width,
                height=scene.height, persons=scene.persons,
                objects=[scene.objects[p] for p in perm],
                global_feature=scene.global_feature, pairs=scene.pairs)
            base, _ = predict(scene, scene.pairs[0], params, config)
            moved, _ = predict(permuted, scene.pairs[0], params, config)
            assert max(abs(a - b) for a, b in zip(base, moved)) < 1e-9
