import math
import random

import numpy as np
import pytest

from conftest import random_scene
from poserel.engine import (
    GcnLayerParams,
    ModelParams,
    TrainConfig,
    VARIANTS,
    _instance_pass,
    _Prepared,
    fuse_scores,
    forward_instance,
    gcn_layer_forward,
    init_params,
    instance_loss,
    learning_rate,
    load_checkpoint,
    mean_pog_adjacency_density,
    normalize_adjacency,
    pool_nodes,
    predict,
    save_checkpoint,
    train,
)
from poserel.errors import (
    ConfigError,
    InvalidInputError,
    ShapeError,
    SingularDegreeError,
    TrainingDivergedError,
)
from poserel.graphs import RelationGraph, build_pog
from poserel.numerics import (
    Matrix,
    finite_diff_grad,
    max_relative_error,
    softmax,
)
from poserel.scene import Scene


def as_np(m: Matrix):
    return np.array(m.to_rows())


def rand_symmetric_graph(rng, n, d, weighted=True):
    adj = Matrix.zeros(n, n)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.7:
                w = 1.0 + rng.random() if weighted else 1.0
                adj.data[i * n + j] = adj.data[j * n + i] = w
    feats = Matrix.from_rows([[rng.uniform(-1, 1) for _ in range(d)]
                              for _ in range(n)])
    return RelationGraph([f"n{i}" for i in range(n)], adj, feats)


class TestNormalizeAdjacency:
    def test_single_node(self):
        assert normalize_adjacency(Matrix.from_rows([[0.0]])).to_rows() == [[1.0]]

    def test_two_node_exact(self):
        out = normalize_adjacency(Matrix.from_rows([[0, 1], [1, 0]]))
        assert out.to_rows() == [[0.5, 0.5], [0.5, 0.5]]

    def test_matches_dense_reference(self):
        rng = random.Random(10)
        for _ in range(20):
            n = rng.randint(1, 12)
            g = rand_symmetric_graph(rng, n, 3)
            got = as_np(normalize_adjacency(g.adjacency))
            a = as_np(g.adjacency) + np.eye(n)
            d_inv_sqrt = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
            ref = d_inv_sqrt @ a @ d_inv_sqrt
            np.testing.assert_allclose(got, ref, atol=1e-12)
            assert (got == got.T).all()

    def test_spectral_bound_on_weighted_graphs(self):
        rng = random.Random(11)
        for _ in range(10):
            g = rand_symmetric_graph(rng, rng.randint(2, 12), 3, weighted=True)
            eigs = np.linalg.eigvalsh(as_np(normalize_adjacency(g.adjacency)))
            assert eigs.max() <= 1 + 1e-9

    def test_zero_degree_without_self_loops(self):
        adj = Matrix.from_rows([[0, 0], [0, 0]])
        with pytest.raises(SingularDegreeError):
            normalize_adjacency(adj, add_self_loops=False)

    def test_isolated_node_fine_with_self_loops(self):
        adj = Matrix.from_rows([[0, 0], [0, 0]])
        assert normalize_adjacency(adj).to_rows() == [[1.0, 0.0], [0.0, 1.0]]

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInputError):
            normalize_adjacency(Matrix.from_rows([[0, 1], [0, 0]]))

    def test_rejects_nonsquare(self):
        with pytest.raises(InvalidInputError):
            normalize_adjacency(Matrix.zeros(2, 3))


class TestGcnLayer:
    def test_identity_propagation(self):
        x = Matrix.from_rows([[1, 2], [3, 4]])
        eye = Matrix.from_rows([[1, 0], [0, 1]])
        layer = GcnLayerParams(Matrix.from_rows([[1, 0], [0, 1]]))
        out = gcn_layer_forward(eye, x, layer)
        assert out.to_rows() == x.to_rows()

    def test_symmetric_two_node_graph_mixes_equally(self):
        norm = normalize_adjacency(Matrix.from_rows([[0, 1], [1, 0]]))
        x = Matrix.from_rows([[1.0, 2.0], [1.0, 2.0]])
        layer = GcnLayerParams(Matrix.from_rows([[1, 0], [0, 1]]))
        out = gcn_layer_forward(norm, x, layer)
        assert out.row(0) == out.row(1)

    def test_matches_numpy_reference(self):
        rng = random.Random(12)
        for _ in range(15):
            n, d_in, d_out = rng.randint(2, 8), rng.randint(1, 6), rng.randint(1, 6)
            g = rand_symmetric_graph(rng, n, d_in)
            norm = normalize_adjacency(g.adjacency)
            w = Matrix.from_rows([[rng.uniform(-1, 1) for _ in range(d_out)]
                                  for _ in range(d_in)])
            got = as_np(gcn_layer_forward(norm, g.features, GcnLayerParams(w)))
            ref = np.maximum(as_np(norm) @ as_np(g.features) @ as_np(w), 0.0)
            np.testing.assert_allclose(got, ref, atol=1e-12)
            got_linear = as_np(gcn_layer_forward(norm, g.features,
                                                 GcnLayerParams(w),
                                                 apply_activation=False))
            ref_linear = as_np(norm) @ as_np(g.features) @ as_np(w)
            np.testing.assert_allclose(got_linear, ref_linear, atol=1e-12)

    def test_shape_mismatch(self):
        norm = Matrix.from_rows([[1.0]])
        x = Matrix.from_rows([[1.0, 2.0]])
        with pytest.raises(ShapeError):
            gcn_layer_forward(norm, x, GcnLayerParams(Matrix.zeros(3, 2)))


class TestPoolNodes:
    def test_single_row(self):
        assert pool_nodes(Matrix.from_rows([[1.0, 2.0, 3.0]])) == [1.0, 2.0, 3.0]

    def test_midpoint(self):
        m = Matrix.from_rows([[0.0] * 4, [2.0] * 4])
        assert pool_nodes(m) == [1.0] * 4

    def test_permutation_invariant(self):
        rng = random.Random(13)
        rows = [[rng.uniform(-1, 1) for _ in range(3)] for _ in range(6)]
        base = pool_nodes(Matrix.from_rows(rows))
        shuffled = pool_nodes(Matrix.from_rows(rows[::-1]))
        assert all(abs(a - b) < 1e-12 for a, b in zip(base, shuffled))

    def test_empty_matrix_unconstructible(self):
        with pytest.raises(ShapeError):
            Matrix.zeros(0, 4)


class TestFuseScores:
    def test_degenerate_weights(self):
        g = [0.25, 0.75]
        r = [0.9, 0.1]
        assert fuse_scores(g, r, 0.0, 1.0) == r
        assert fuse_scores(g, r, 1.0, 0.0) == g

    def test_paper_weights_uniform_plus_onehot(self):
        c = 5
        uniform = [1.0 / c] * c
        onehot = [0.0] * c
        onehot[2] = 1.0
        fused = fuse_scores(uniform, onehot, 0.4, 0.6)
        assert fused[2] == pytest.approx(0.4 / c + 0.6, abs=1e-12)
        for j in (0, 1, 3, 4):
            assert fused[j] == pytest.approx(0.4 / c, abs=1e-12)

    def test_output_is_distribution(self):
        rng = random.Random(14)
        for _ in range(20):
            g = softmax([rng.uniform(-3, 3) for _ in range(6)])
            r = softmax([rng.uniform(-3, 3) for _ in range(6)])
            fused = fuse_scores(g, r, 0.4, 0.6)
            assert sum(fused) == pytest.approx(1.0, abs=1e-12)
            assert all(v >= 0 for v in fused)

    def test_bad_weight_sum(self):
        with pytest.raises(ConfigError):
            fuse_scores([1.0], [1.0], 0.5, 0.6)


class TestConfig:
    def test_variant_table(self):
        assert set(VARIANTS) == {"global", "pog", "pog-no-pose", "pog+ppg", "mgr"}
        cfg = TrainConfig.for_variant("pog-no-pose")
        assert cfg.use_pog and not cfg.pose_gating_on and not cfg.use_global

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            TrainConfig.for_variant("everything")

    def test_fusion_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            TrainConfig(fusion_weight_global=0.5, fusion_weight_graph=0.6).validate()

    def test_some_branch_required(self):
        with pytest.raises(ConfigError):
            TrainConfig(use_global=False, use_pog=False, use_ppg=False).validate()

    def test_lr_schedule(self):
        cfg = TrainConfig(lr0=0.01, lr_decay_factor=0.1, lr_decay_period_epochs=20)
        assert learning_rate(cfg, 0) == 0.01
        assert learning_rate(cfg, 19) == 0.01
        assert learning_rate(cfg, 25) == pytest.approx(0.001)
        assert learning_rate(cfg, 45) == pytest.approx(0.0001)


def toy_setup(rng, config, n_pog=5, n_ppg=6, d_region=6, d_global=4,
              num_classes=3):
    """Random toy instance (graphs + params) for gradient checks."""
    pog = rand_symmetric_graph(rng, n_pog, d_region, weighted=False) \
        if config.use_pog else None
    ppg = rand_symmetric_graph(rng, n_ppg, 30, weighted=True) \
        if config.use_ppg else None
    gfeat = [rng.uniform(-1, 1) for _ in range(d_global)] \
        if config.use_global else None
    params = init_params(config, d_region, d_global, num_classes,
                         rng=random.Random(rng.randrange(10 ** 6)))
    label = rng.randrange(num_classes)
    return pog, ppg, gfeat, params, label


def analytic_grads(pog, ppg, gfeat, params, config, label):
    from poserel.engine import normalize_adjacency as norm
    prep = _Prepared(
        norm(pog.adjacency) if pog is not None else None,
        pog.features if pog is not None else None,
        norm(ppg.adjacency) if ppg is not None else None,
        ppg.features if ppg is not None else None,
        gfeat, label)
    named = params.named_parameters()
    grads = {k: Matrix.zeros(m.rows, m.cols) for k, m in named.items()}
    _instance_pass(prep, params, config, grads)
    return grads


class TestForwardInstance:
    def test_logits_shape_pog_only(self):
        rng = random.Random(15)
        config = TrainConfig.for_variant("pog", pog_hidden=4)
        pog, ppg, gfeat, params, _ = toy_setup(rng, config)
        graph_logits, global_logits = forward_instance(pog, None, None,
                                                       params, config)
        assert global_logits is None
        assert len(graph_logits) == 3
        assert all(math.isfinite(v) for v in graph_logits)

    def test_zero_weights_give_bias(self):
        rng = random.Random(16)
        config = TrainConfig.for_variant("pog+ppg", pog_hidden=4, ppg_hidden=3)
        pog, ppg, _, params, _ = toy_setup(rng, config)
        named = params.named_parameters()
        zeroed = {k: Matrix.zeros(m.rows, m.cols) for k, m in named.items()}
        bias = Matrix.from_rows([[0.5, -1.0, 2.0]])
        zeroed["classifier.bias"] = bias
        params = params.with_parameters(zeroed)
        graph_logits, _ = forward_instance(pog, ppg, None, params, config)
        assert graph_logits == [0.5, -1.0, 2.0]

    def test_missing_graph_rejected(self):
        rng = random.Random(17)
        config = TrainConfig.for_variant("pog", pog_hidden=4)
        _, _, _, params, _ = toy_setup(rng, config)
        with pytest.raises(InvalidInputError):
            forward_instance(None, None, None, params, config)

    def test_gradients_match_finite_differences(self):
        rng = random.Random(18)
        config = TrainConfig.for_variant("mgr", pog_hidden=4, ppg_hidden=3)
        checked = 0
        while checked < 5:
            pog, ppg, gfeat, params, label = toy_setup(rng, config)
            grads = analytic_grads(pog, ppg, gfeat, params, config, label)
            named = params.named_parameters()

            def loss_fn(named_params):
                p = params.with_parameters(named_params)
                return instance_loss((pog, ppg, gfeat), p, config, label=label)

            fd = finite_diff_grad(loss_fn, named, h=1e-5)
            for name in named:
                err = max_relative_error(grads[name].data, fd[name].data)
                assert err < 1e-4, f"{name}: {err}"
            checked += 1


def tiny_dataset(rng, n_scenes, num_classes=3):
    scenes = []
    for _ in range(n_scenes):
        scene = random_scene(rng, feature_dim=6, global_dim=4,
                             num_classes=num_classes)
        scenes.append((scene, scene.pairs[0]))
    return scenes


class TestTrain:
    def test_zero_epochs_returns_initial_params(self):
        rng = random.Random(19)
        data = tiny_dataset(rng, 6)
        config = TrainConfig.for_variant("mgr", epochs=0, pog_hidden=4,
                                         ppg_hidden=3, seed=5)
        params, history = train(data, config, num_classes=3)
        assert history == []
        expected = init_params(config, 6, 4, 3, rng=random.Random(5))
        for name, m in params.named_parameters().items():
            assert m.data == expected.named_parameters()[name].data

    def test_empty_dataset_rejected(self):
        config = TrainConfig.for_variant("mgr")
        with pytest.raises(InvalidInputError):
            train([], config)

    def test_bitwise_deterministic(self):
        rng = random.Random(20)
        data = tiny_dataset(rng, 10)
        config = TrainConfig.for_variant("mgr", epochs=3, pog_hidden=4,
                                         ppg_hidden=3, seed=9, batch_size=4)
        p1, h1 = train(data, config, num_classes=3)
        p2, h2 = train(data, config, num_classes=3)
        for name, m in p1.named_parameters().items():
            assert m.data == p2.named_parameters()[name].data
        assert [e.to_dict() for e in h1] == [e.to_dict() for e in h2]

    def test_history_lr_follows_schedule(self):
        rng = random.Random(21)
        data = tiny_dataset(rng, 4)
        config = TrainConfig.for_variant("global", epochs=5, seed=1,
                                         lr_decay_period_epochs=2,
                                         lr_decay_factor=0.5, lr0=0.08)
        _, history = train(data, config, num_classes=3)
        assert [h.lr for h in history] == [0.08, 0.08, 0.04, 0.04, 0.02]

    def test_divergence_aborts_with_diagnostics(self):
        rng = random.Random(22)
        data = tiny_dataset(rng, 6)
        config = TrainConfig.for_variant("mgr", epochs=50, lr0=1e18,
                                         pog_hidden=4, ppg_hidden=3, seed=2)
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(data, config, num_classes=3)

    def test_loss_decreases_on_separable_data(self, synthetic_small):
        instances, num_classes = synthetic_small
        config = TrainConfig.for_variant("mgr", epochs=11, seed=0,
                                         pog_hidden=16, ppg_hidden=12)
        _, history = train(instances, config, num_classes=num_classes)
        assert history[10].mean_loss < history[1].mean_loss

    def test_separable_data_learned_within_50_epochs(self, synthetic_small):
        instances, num_classes = synthetic_small
        config = TrainConfig.for_variant("mgr", epochs=35, seed=0,
                                         pog_hidden=32, ppg_hidden=24,
                                         lr_decay_period_epochs=30)
        _, history = train(instances, config, num_classes=num_classes)
        assert max(h.train_accuracy for h in history) >= 0.95


class TestPredict:
    def test_probabilities_sum_to_one(self):
        rng = random.Random(23)
        data = tiny_dataset(rng, 6)
        config = TrainConfig.for_variant("mgr", epochs=1, pog_hidden=4,
                                         ppg_hidden=3, seed=3)
        params, _ = train(data, config, num_classes=3)
        scene, inst = data[0]
        probs, pred = predict(scene, inst, params, config)
        assert sum(probs) == pytest.approx(1.0, abs=1e-9)
        assert pred == int(np.argmax(probs))

    def test_single_head_equals_softmax_of_logits(self):
        rng = random.Random(24)
        config = TrainConfig.for_variant("pog", pog_hidden=4)
        pog, _, _, params, _ = toy_setup(rng, config)
        graph_logits, _ = forward_instance(pog, None, None, params, config)
        scene = random_scene(random.Random(25), feature_dim=6)
        pg = build_pog(scene, scene.pairs[0])
        logits, _ = forward_instance(pg, None, None, params, config)
        probs, _ = predict(scene, scene.pairs[0], params, config)
        np.testing.assert_allclose(probs, softmax(logits), atol=1e-12)

    def test_object_permutation_leaves_prediction_unchanged(self):
        rng = random.Random(26)
        config = TrainConfig.for_variant("mgr", epochs=0, pog_hidden=8,
                                         ppg_hidden=6, seed=11)
        data = tiny_dataset(rng, 4)
        params, _ = train(data, config, num_classes=3)
        for _ in range(10):
            scene = random_scene(rng, num_objects=rng.randint(2, 5),
                                 feature_dim=6, global_dim=4)
            perm = list(range(len(scene.objects)))
            rng.shuffle(perm)
            permuted = Scene(
                image_id=scene.image_id, width=scene.width, height=scene.height,
                persons=scene.persons,
                objects=[scene.objects[p] for p in perm],
                global_feature=scene.global_feature, pairs=scene.pairs)
            base, _ = predict(scene, scene.pairs[0], params, config)
            moved, _ = predict(permuted, scene.pairs[0], params, config)
            assert max(abs(a - b) for a, b in zip(base, moved)) < 1e-9

    def test_gating_variant_density_ordering(self):
        rng = random.Random(27)
        data = tiny_dataset(rng, 12)
        gated = TrainConfig.for_variant("pog", pog_hidden=4)
        dense = TrainConfig.for_variant("pog-no-pose", pog_hidden=4)
        d_gated = mean_pog_adjacency_density(data, gated)
        d_dense = mean_pog_adjacency_density(data, dense)
        assert d_dense >= d_gated
        no_pog = TrainConfig.for_variant("global")
        assert mean_pog_adjacency_density(data, no_pog) is None


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        rng = random.Random(28)
        data = tiny_dataset(rng, 6)
        config = TrainConfig.for_variant("mgr", epochs=2, pog_hidden=4,
                                         ppg_hidden=3, seed=6)
        params, _ = train(data, config, num_classes=3)
        path = tmp_path / "model.bin"
        save_checkpoint(path, params, config)
        loaded_params, loaded_config = load_checkpoint(path)
        assert loaded_config.to_dict() == config.to_dict()
        named = params.named_parameters()
        loaded = loaded_params.named_parameters()
        assert set(named) == set(loaded)
        for name in named:
            assert named[name].data == loaded[name].data
        save_checkpoint(tmp_path / "again.bin", loaded_params, loaded_config)
        assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        from poserel.errors import FormatError
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_variant_checkpoints_only_carry_their_branches(self, tmp_path):
        rng = random.Random(29)
        data = tiny_dataset(rng, 4)
        config = TrainConfig.for_variant("global", epochs=1, seed=8)
        params, _ = train(data, config, num_classes=3)
        path = tmp_path / "global.bin"
        save_checkpoint(path, params, config)
        loaded, _ = load_checkpoint(path)
        assert loaded.pog_layers == []
        assert loaded.classifier_w is None
        assert loaded.global_w is not None
