"""GCN reasoning engine: symmetric-normalized graph convolution layers,
node pooling, the joint graph classifier, the global linear branch, weighted
score fusion, and the SGD-with-momentum training loop.

Training is fully deterministic for a fixed config: one random.Random stream
seeded with config.seed is consumed first by parameter initialization (POG
layers, then PPG layers, then the classifier, then the global head, row-major
within each matrix) and afterwards by the per-epoch shuffle, and all kernels
use a fixed accumulation order.
"""

from __future__ import annotations

import json
import math
import random
import struct
import sys
from array import array
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from poserel.backend import kernels
from poserel.errors import (
    ConfigError,
    DataError,
    FormatError,
    InvalidInputError,
    ShapeError,
    SingularDegreeError,
    TrainingDivergedError,
)
from poserel.graphs import (
    KEYPOINT_FEATURE_DIM,
    RelationGraph,
    build_pog,
    build_ppg,
)
from poserel.metrics import argmax_lowest
from poserel.numerics import (
    Matrix,
    OptimizerState,
    glorot_init,
    matmul,
    matmul_nt,
    matmul_tn,
    relu,
    relu_backward,
    sgd_momentum_step,
    softmax,
    softmax_cross_entropy,
)
from poserel.scene import RelationInstance, Scene

CHECKPOINT_MAGIC = b"MGRP"
CHECKPOINT_VERSION = 1

# Table-2-style ablation variants: which branches exist and whether
# person-object edges are gated by keypoint-box intersection.
VARIANTS: dict[str, dict[str, bool]] = {
    "global": {"use_global": True, "use_pog": False, "use_ppg": False,
               "pose_gating_on": True},
    "pog": {"use_global": False, "use_pog": True, "use_ppg": False,
            "pose_gating_on": True},
    "pog-no-pose": {"use_global": False, "use_pog": True, "use_ppg": False,
                    "pose_gating_on": False},
    "pog+ppg": {"use_global": False, "use_pog": True, "use_ppg": True,
                "pose_gating_on": True},
    "mgr": {"use_global": True, "use_pog": True, "use_ppg": True,
            "pose_gating_on": True},
}


@dataclass
class TrainConfig:
    """Optimizer hyperparameters, schedule, variant flags, and fusion weights."""

    lr0: float = 0.01
    momentum: float = 0.9
    lr_decay_factor: float = 0.1
    lr_decay_period_epochs: int = 20
    epochs: int = 60
    batch_size: int = 16
    weight_decay: float = 0.0
    fusion_weight_global: float = 0.4
    fusion_weight_graph: float = 0.6
    use_global: bool = True
    use_pog: bool = True
    use_ppg: bool = True
    pose_gating_on: bool = True
    seed: int = 0
    dilation: float = 0.0
    min_keypoint_confidence: float = 0.0
    num_gcn_layers: int = 2
    pog_hidden: int = 256
    ppg_hidden: int = 64

    def validate(self) -> None:
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_decay_factor <= 0:
            raise ConfigError("lr_decay_factor must be positive")
        if self.lr_decay_period_epochs < 1:
            raise ConfigError("lr_decay_period_epochs must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.fusion_weight_global < 0 or self.fusion_weight_graph < 0:
            raise ConfigError("fusion weights must be >= 0")
        if abs(self.fusion_weight_global + self.fusion_weight_graph - 1.0) > 1e-9:
            raise ConfigError("fusion weights must sum to 1")
        if not (self.use_global or self.use_pog or self.use_ppg):
            raise ConfigError("at least one branch must be enabled")
        if self.num_gcn_layers < 1:
            raise ConfigError("num_gcn_layers must be >= 1")
        if self.pog_hidden < 1 or self.ppg_hidden < 1:
            raise ConfigError("hidden widths must be >= 1")
        if self.dilation < 0:
            raise ConfigError("dilation must be >= 0")
        if not 0.0 <= self.min_keypoint_confidence <= 1.0:
            raise ConfigError("min_keypoint_confidence must be in [0, 1]")

    @classmethod
    def for_variant(cls, name: str, **overrides) -> "TrainConfig":
        """Config for a named ablation variant; extra keyword args override."""
        if name not in VARIANTS:
            raise ConfigError(
                f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
        merged = {**VARIANTS[name], **overrides}
        return cls(**merged)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GcnLayerParams:
    """Weights of one graph convolution layer."""

    weight: Matrix


@dataclass
class ModelDims:
    """Input dimensions the parameters were built for (0 when branch disabled)."""

    d_region: int
    d_global: int
    num_classes: int


@dataclass
class ModelParams:
    """All trainable parameters; disabled branches hold no matrices."""

    pog_layers: list[GcnLayerParams]
    ppg_layers: list[GcnLayerParams]
    classifier_w: Optional[Matrix]
    classifier_b: Optional[Matrix]
    global_w: Optional[Matrix]
    global_b: Optional[Matrix]
    dims: ModelDims
    seed: int

    def named_parameters(self) -> dict[str, Matrix]:
        """Parameters in their canonical (documented) order."""
        named: dict[str, Matrix] = {}
        for i, layer in enumerate(self.pog_layers):
            named[f"pog.layer{i}.weight"] = layer.weight
        for i, layer in enumerate(self.ppg_layers):
            named[f"ppg.layer{i}.weight"] = layer.weight
        if self.classifier_w is not None:
            named["classifier.weight"] = self.classifier_w
            named["classifier.bias"] = self.classifier_b
        if self.global_w is not None:
            named["global.weight"] = self.global_w
            named["global.bias"] = self.global_b
        return named

    def with_parameters(self, named: dict[str, Matrix]) -> "ModelParams":
        """Copy of this structure with matrices replaced by the given ones."""
        pog = [GcnLayerParams(named[f"pog.layer{i}.weight"])
               for i in range(len(self.pog_layers))]
        ppg = [GcnLayerParams(named[f"ppg.layer{i}.weight"])
               for i in range(len(self.ppg_layers))]
        return ModelParams(
            pog_layers=pog,
            ppg_layers=ppg,
            classifier_w=named.get("classifier.weight"),
            classifier_b=named.get("classifier.bias"),
            global_w=named.get("global.weight"),
            global_b=named.get("global.bias"),
            dims=self.dims,
            seed=self.seed,
        )


@dataclass
class EpochStats:
    """One training epoch: learning rate, mean loss, and train accuracy."""

    epoch: int
    lr: float
    mean_loss: float
    train_accuracy: float

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(config: TrainConfig, d_region: int, d_global: int,
                num_classes: int,
                rng: Optional[random.Random] = None) -> ModelParams:
    """Seeded Glorot initialization of every enabled branch.

    Draw order: POG layers, PPG layers, classifier weight, global weight
    (biases start at zero and consume no draws).
    """
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    rng = rng if rng is not None else random.Random(config.seed)
    L = config.num_gcn_layers

    pog_layers: list[GcnLayerParams] = []
    if config.use_pog:
        dims = [d_region] + [config.pog_hidden] * L
        pog_layers = [GcnLayerParams(glorot_init(dims[i], dims[i + 1], rng))
                      for i in range(L)]
    ppg_layers: list[GcnLayerParams] = []
    if config.use_ppg:
        dims = [KEYPOINT_FEATURE_DIM] + [config.ppg_hidden] * L
        ppg_layers = [GcnLayerParams(glorot_init(dims[i], dims[i + 1], rng))
                      for i in range(L)]

    classifier_w = classifier_b = None
    if config.use_pog or config.use_ppg:
        d_in = (config.pog_hidden if config.use_pog else 0) + \
               (config.ppg_hidden if config.use_ppg else 0)
        classifier_w = glorot_init(d_in, num_classes, rng)
        classifier_b = Matrix.zeros(1, num_classes)

    global_w = global_b = None
    if config.use_global:
        if d_global < 1:
            raise ConfigError("global branch enabled but d_global < 1")
        global_w = glorot_init(d_global, num_classes, rng)
        global_b = Matrix.zeros(1, num_classes)

    return ModelParams(
        pog_layers=pog_layers,
        ppg_layers=ppg_layers,
        classifier_w=classifier_w,
        classifier_b=classifier_b,
        global_w=global_w,
        global_b=global_b,
        dims=ModelDims(d_region=d_region if config.use_pog else 0,
                       d_global=d_global if config.use_global else 0,
                       num_classes=num_classes),
        seed=config.seed,
    )


def normalize_adjacency(adjacency: Matrix, add_self_loops: bool = True) -> Matrix:
    """Symmetric degree normalization D^-1/2 (A + I) D^-1/2.

    Entries are computed as a_ij / sqrt(d_i * d_j) for i <= j and mirrored,
    so the output is exactly symmetric. Raises SingularDegreeError for a
    zero-degree row when self-loops are disabled.
    """
    n = adjacency.rows
    if adjacency.cols != n:
        raise InvalidInputError(f"adjacency must be square, got "
                                f"{adjacency.rows}x{adjacency.cols}")
    a = adjacency.data
    for i in range(n):
        for j in range(i + 1, n):
            if a[i * n + j] != a[j * n + i]:
                raise InvalidInputError("adjacency must be symmetric")
    for v in a:
        if v < 0:
            raise InvalidInputError("adjacency weights must be >= 0")

    loop = 1.0 if add_self_loops else 0.0
    degrees = []
    for i in range(n):
        deg = 0.0
        base = i * n
        for j in range(n):
            deg += a[base + j]
        deg += loop
        if deg == 0.0:
            raise SingularDegreeError(
                f"node {i} has zero degree and self-loops are disabled")
        degrees.append(deg)

    out = Matrix.zeros(n, n)
    o = out.data
    for i in range(n):
        for j in range(i, n):
            v = a[i * n + j] + (loop if i == j else 0.0)
            if v != 0.0:
                v = v / math.sqrt(degrees[i] * degrees[j])
            o[i * n + j] = v
            o[j * n + i] = v
    return out


def gcn_layer_forward(norm_adj: Matrix, x: Matrix, layer: GcnLayerParams,
                      apply_activation: bool = True) -> Matrix:
    """One graph convolution: sigma(norm_adj @ X @ W), sigma = ReLU or identity."""
    z = matmul(matmul(norm_adj, x), layer.weight)
    return relu(z) if apply_activation else z


def pool_nodes(x: Matrix) -> list[float]:
    """Columnwise arithmetic mean over all nodes."""
    n, d = x.rows, x.cols
    data = x.data
    out = [0.0] * d
    for i in range(n):
        base = i * d
        for j in range(d):
            out[j] += data[base + j]
    return [v / n for v in out]


def fuse_scores(global_probs: Sequence[float], graph_probs: Sequence[float],
                w_global: float, w_graph: float) -> list[float]:
    """Convex combination of the two class distributions."""
    if w_global < 0 or w_graph < 0 or abs(w_global + w_graph - 1.0) > 1e-9:
        raise ConfigError(
            f"fusion weights must be >= 0 and sum to 1, got "
            f"({w_global}, {w_graph})")
    if len(global_probs) != len(graph_probs):
        raise ShapeError("fusion inputs must have equal length")
    return [w_global * g + w_graph * r
            for g, r in zip(global_probs, graph_probs)]


def _row_matrix(values: Sequence[float]) -> Matrix:
    return Matrix(1, len(values), array("d", values), validate=False)


def _branch_forward(norm_adj: Matrix, feats: Matrix,
                    layers: list[GcnLayerParams], keep_trace: bool):
    """Run all layers of one branch; optionally keep (input, A@input, pre-act)
    per layer for the backward pass. Returns (pooled vector, traces)."""
    x = feats
    traces = []
    last = len(layers) - 1
    for li, layer in enumerate(layers):
        s = matmul(norm_adj, x)
        z = matmul(s, layer.weight)
        if keep_trace:
            traces.append((x, s, z))
        x = z if li == last else relu(z)
    return pool_nodes(x), traces


def _branch_backward(norm_adj: Matrix, layers: list[GcnLayerParams],
                     traces, n_nodes: int,
                     d_pooled: Sequence[float]) -> list[Matrix]:
    """Gradients of the branch's layer weights given the pooled-output grad."""
    d = len(d_pooled)
    dh = Matrix(n_nodes, d,
                array("d", [v / n_nodes for v in d_pooled] * n_nodes),
                validate=False)
    grads: list[Optional[Matrix]] = [None] * len(layers)
    last = len(layers) - 1
    for li in range(last, -1, -1):
        _, s, z = traces[li]
        dz = dh if li == last else relu_backward(z, dh)
        grads[li] = matmul_tn(s, dz)
        if li > 0:
            dh = matmul(norm_adj, matmul_nt(dz, layers[li].weight))
    return grads  # type: ignore[return-value]


def _head_logits(row: Sequence[float], w: Matrix, b: Matrix) -> list[float]:
    out = matmul(_row_matrix(row), w)
    return [out.data[j] + b.data[j] for j in range(w.cols)]


def forward_instance(pog: Optional[RelationGraph], ppg: Optional[RelationGraph],
                     global_feature: Optional[Sequence[float]],
                     params: ModelParams, config: TrainConfig
                     ) -> tuple[Optional[list[float]], Optional[list[float]]]:
    """Forward pass for one instance.

    Each enabled GCN branch runs on its normalized adjacency and is pooled;
    pooled vectors are concatenated into the graph classifier. The global
    branch is a linear head over the supplied global feature. Disabled
    branches yield None logits.
    """
    pooled: list[float] = []
    if config.use_pog:
        if pog is None:
            raise InvalidInputError("use_pog is enabled but no POG was supplied")
        p, _ = _branch_forward(normalize_adjacency(pog.adjacency), pog.features,
                               params.pog_layers, keep_trace=False)
        pooled.extend(p)
    if config.use_ppg:
        if ppg is None:
            raise InvalidInputError("use_ppg is enabled but no PPG was supplied")
        p, _ = _branch_forward(normalize_adjacency(ppg.adjacency), ppg.features,
                               params.ppg_layers, keep_trace=False)
        pooled.extend(p)

    graph_logits = None
    if pooled:
        graph_logits = _head_logits(pooled, params.classifier_w, params.classifier_b)

    global_logits = None
    if config.use_global:
        if global_feature is None:
            raise InvalidInputError("use_global is enabled but no global feature "
                                    "was supplied")
        global_logits = _head_logits(global_feature, params.global_w, params.global_b)
    return graph_logits, global_logits


def _probs(graph_logits: Optional[Sequence[float]],
           global_logits: Optional[Sequence[float]],
           config: TrainConfig) -> list[float]:
    """Fused class distribution; single-head variants skip fusion."""
    if graph_logits is not None and global_logits is not None:
        return fuse_scores(softmax(global_logits), softmax(graph_logits),
                           config.fusion_weight_global, config.fusion_weight_graph)
    if graph_logits is not None:
        return softmax(graph_logits)
    return softmax(global_logits)


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """lr0 multiplied by the decay factor once per decay period (0-indexed)."""
    return config.lr0 * config.lr_decay_factor ** (epoch // config.lr_decay_period_epochs)


@dataclass
class _Prepared:
    """Per-instance cache: graphs are built and normalized once."""

    pog_norm: Optional[Matrix]
    pog_feats: Optional[Matrix]
    ppg_norm: Optional[Matrix]
    ppg_feats: Optional[Matrix]
    global_feature: Optional[list[float]]
    label: int


def _prepare_instance(scene: Scene, instance: RelationInstance,
                      config: TrainConfig) -> _Prepared:
    pog_norm = pog_feats = ppg_norm = ppg_feats = None
    if config.use_pog:
        g = build_pog(scene, instance, dilation=config.dilation,
                      min_keypoint_confidence=config.min_keypoint_confidence,
                      pose_gating=config.pose_gating_on)
        pog_norm = normalize_adjacency(g.adjacency)
        pog_feats = g.features
    if config.use_ppg:
        g = build_ppg(scene, instance,
                      min_keypoint_confidence=config.min_keypoint_confidence)
        ppg_norm = normalize_adjacency(g.adjacency)
        ppg_feats = g.features
    global_feature = None
    if config.use_global:
        if scene.global_feature is None:
            raise DataError(f"scene {scene.image_id}: global branch enabled but "
                            f"no global feature is attached")
        global_feature = list(scene.global_feature)
    return _Prepared(pog_norm, pog_feats, ppg_norm, ppg_feats,
                     global_feature, instance.label)


def _instance_pass(prep: _Prepared, params: ModelParams, config: TrainConfig,
                   grads: Optional[dict[str, Matrix]],
                   compute_loss: bool = True) -> tuple[float, list[float]]:
    """Forward (and, when `grads` is given, backward with accumulation).

    Returns (loss, fused class probabilities); the loss is 0.0 when
    compute_loss is off (prediction needs no label).
    """
    pooled_parts: list[list[float]] = []
    traces = {}
    if config.use_pog:
        p, tr = _branch_forward(prep.pog_norm, prep.pog_feats,
                                params.pog_layers, keep_trace=grads is not None)
        pooled_parts.append(p)
        traces["pog"] = tr
    if config.use_ppg:
        p, tr = _branch_forward(prep.ppg_norm, prep.ppg_feats,
                                params.ppg_layers, keep_trace=grads is not None)
        pooled_parts.append(p)
        traces["ppg"] = tr

    need_loss = compute_loss or grads is not None
    loss = 0.0
    graph_logits = global_logits = None
    d_graph_logits = d_global_logits = None
    pooled: list[float] = []
    if pooled_parts:
        for part in pooled_parts:
            pooled.extend(part)
        graph_logits = _head_logits(pooled, params.classifier_w, params.classifier_b)
        if need_loss:
            l, d_graph_logits = softmax_cross_entropy(graph_logits, prep.label)
            loss += l
    if config.use_global:
        global_logits = _head_logits(prep.global_feature, params.global_w,
                                     params.global_b)
        if need_loss:
            l, d_global_logits = softmax_cross_entropy(global_logits, prep.label)
            loss += l

    if grads is not None:
        if graph_logits is not None:
            dlog = _row_matrix(d_graph_logits)
            f_row = _row_matrix(pooled)
            kernels.add_scaled(grads["classifier.weight"].data,
                               matmul_tn(f_row, dlog).data, 1.0)
            kernels.add_scaled(grads["classifier.bias"].data, dlog.data, 1.0)
            df = matmul_nt(dlog, params.classifier_w).data
            offset = 0
            if config.use_pog:
                width = config.pog_hidden
                d_pooled = df[offset:offset + width]
                offset += width
                for i, g in enumerate(_branch_backward(
                        prep.pog_norm, params.pog_layers, traces["pog"],
                        prep.pog_feats.rows, d_pooled)):
                    kernels.add_scaled(grads[f"pog.layer{i}.weight"].data,
                                       g.data, 1.0)
            if config.use_ppg:
                width = config.ppg_hidden
                d_pooled = df[offset:offset + width]
                for i, g in enumerate(_branch_backward(
                        prep.ppg_norm, params.ppg_layers, traces["ppg"],
                        prep.ppg_feats.rows, d_pooled)):
                    kernels.add_scaled(grads[f"ppg.layer{i}.weight"].data,
                                       g.data, 1.0)
        if global_logits is not None:
            dlog = _row_matrix(d_global_logits)
            g_row = _row_matrix(prep.global_feature)
            kernels.add_scaled(grads["global.weight"].data,
                               matmul_tn(g_row, dlog).data, 1.0)
            kernels.add_scaled(grads["global.bias"].data, dlog.data, 1.0)

    return loss, _probs(graph_logits, global_logits, config)


def instance_loss(prep_or_graphs, params: ModelParams, config: TrainConfig,
                  label: Optional[int] = None) -> float:
    """Total loss (sum of enabled heads' cross-entropies) for one instance.

    Accepts a _Prepared cache entry, or a (pog, ppg, global_feature) triple
    plus a label; used by the finite-difference gradient oracle in tests.
    """
    if isinstance(prep_or_graphs, _Prepared):
        prep = prep_or_graphs
    else:
        pog, ppg, global_feature = prep_or_graphs
        prep = _Prepared(
            normalize_adjacency(pog.adjacency) if pog is not None else None,
            pog.features if pog is not None else None,
            normalize_adjacency(ppg.adjacency) if ppg is not None else None,
            ppg.features if ppg is not None else None,
            list(global_feature) if global_feature is not None else None,
            label,
        )
    loss, _ = _instance_pass(prep, params, config, grads=None)
    return loss


def train(dataset: Sequence[tuple[Scene, RelationInstance]], config: TrainConfig,
          num_classes: Optional[int] = None
          ) -> tuple[ModelParams, list[EpochStats]]:
    """Minibatch SGD with momentum over all enabled heads' cross-entropies.

    Graphs are built and normalized once per instance and cached. Gradients
    are summed over each minibatch in a fixed instance order and divided by
    the batch length. The learning rate is multiplied by lr_decay_factor
    every lr_decay_period_epochs. Returns the trained parameters and
    per-epoch statistics.
    """
    config.validate()
    if not dataset:
        raise InvalidInputError("training dataset is empty")

    labels = [inst.label for _, inst in dataset]
    if num_classes is None:
        num_classes = max(labels) + 1
    if any(not 0 <= l < num_classes for l in labels):
        raise InvalidInputError(f"labels must be in [0, {num_classes})")

    prepared = [_prepare_instance(scene, inst, config) for scene, inst in dataset]
    d_region = prepared[0].pog_feats.cols if config.use_pog else 0
    d_global = len(prepared[0].global_feature) if config.use_global else 0

    rng = random.Random(config.seed)
    params = init_params(config, d_region, d_global, num_classes, rng=rng)
    named = params.named_parameters()
    opt_state = OptimizerState.zeros_like(named)

    history: list[EpochStats] = []
    n = len(prepared)
    for epoch in range(config.epochs):
        lr = learning_rate(config, epoch)
        order = list(range(n))
        rng.shuffle(order)
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = {name: Matrix.zeros(p.rows, p.cols)
                     for name, p in named.items()}
            batch_loss = 0.0
            for idx in batch:
                prep = prepared[idx]
                loss, probs = _instance_pass(prep, params, config, grads)
                batch_loss += loss
                if argmax_lowest(probs) == prep.label:
                    epoch_correct += 1
            if not math.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch "
                    f"{start // config.batch_size}, lr {lr}")
            scale = 1.0 / len(batch)
            for g in grads.values():
                kernels.scale_inplace(g.data, scale)
            named = sgd_momentum_step(named, grads, opt_state, lr,
                                      config.momentum, config.weight_decay)
            params = params.with_parameters(named)
            epoch_loss += batch_loss
        history.append(EpochStats(epoch=epoch, lr=lr,
                                  mean_loss=epoch_loss / n,
                                  train_accuracy=epoch_correct / n))
    return params, history


def predict(scene: Scene, instance: RelationInstance, params: ModelParams,
            config: TrainConfig) -> tuple[list[float], int]:
    """Class distribution and argmax prediction (lowest-index tie-break)."""
    prep = _prepare_instance(scene, instance, config)
    _, probs = _instance_pass(prep, params, config, grads=None,
                              compute_loss=False)
    return probs, argmax_lowest(probs)


def mean_pog_adjacency_density(dataset: Sequence[tuple[Scene, RelationInstance]],
                               config: TrainConfig) -> Optional[float]:
    """Mean fraction of nonzero off-diagonal POG adjacency entries.

    None when the POG branch is disabled or no instance has off-diagonal slots.
    """
    if not config.use_pog:
        return None
    total = 0
    nonzero = 0
    for scene, inst in dataset:
        g = build_pog(scene, inst, dilation=config.dilation,
                      min_keypoint_confidence=config.min_keypoint_confidence,
                      pose_gating=config.pose_gating_on)
        n = g.adjacency.rows
        d = g.adjacency.data
        for i in range(n):
            for j in range(n):
                if i != j:
                    total += 1
                    if d[i * n + j] != 0.0:
                        nonzero += 1
    return nonzero / total if total else None


def _write_matrix(fh, name: str, m: Matrix) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<II", m.rows, m.cols))
    data = m.data
    if sys.byteorder == "big":
        data = array("d", data)
        data.byteswap()
    fh.write(data.tobytes())


def _read_exact(fh, count: int) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError("checkpoint truncated")
    return buf


def _read_matrix(fh) -> tuple[str, Matrix]:
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, name_len).decode("utf-8")
    rows, cols = struct.unpack("<II", _read_exact(fh, 8))
    data = array("d")
    data.frombytes(_read_exact(fh, 8 * rows * cols))
    if sys.byteorder == "big":
        data.byteswap()
    return name, Matrix(rows, cols, data, validate=False)


def save_checkpoint(path, params: ModelParams, config: TrainConfig) -> None:
    """Binary checkpoint: magic, version, config echo, named parameter matrices.

    Round-trips bit-exactly through load_checkpoint.
    """
    named = params.named_parameters()
    echo = json.dumps(
        {"train_config": config.to_dict(), "dims": asdict(params.dims),
         "seed": params.seed},
        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(echo)))
        fh.write(echo)
        fh.write(struct.pack("<I", len(named)))
        for name, m in named.items():
            _write_matrix(fh, name, m)


def load_checkpoint(path) -> tuple[ModelParams, TrainConfig]:
    """Load a checkpoint written by save_checkpoint."""
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a model checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        (echo_len,) = struct.unpack("<I", _read_exact(fh, 4))
        echo = json.loads(_read_exact(fh, echo_len).decode("utf-8"))
        config = TrainConfig(**echo["train_config"])
        dims = ModelDims(**echo["dims"])
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        named: dict[str, Matrix] = {}
        for _ in range(count):
            name, m = _read_matrix(fh)
            named[name] = m

    L = config.num_gcn_layers
    try:
        pog = [GcnLayerParams(named.pop(f"pog.layer{i}.weight")) for i in range(L)] \
            if config.use_pog else []
        ppg = [GcnLayerParams(named.pop(f"ppg.layer{i}.weight")) for i in range(L)] \
            if config.use_ppg else []
        params = ModelParams(
            pog_layers=pog,
            ppg_layers=ppg,
            classifier_w=named.pop("classifier.weight") if (config.use_pog or config.use_ppg) else None,
            classifier_b=named.pop("classifier.bias") if (config.use_pog or config.use_ppg) else None,
            global_w=named.pop("global.weight") if config.use_global else None,
            global_b=named.pop("global.bias") if config.use_global else None,
            dims=dims,
            seed=echo["seed"],
        )
    except KeyError as exc:
        raise FormatError(f"{path}: checkpoint missing parameter {exc}") from exc
    if named:
        raise FormatError(f"{path}: checkpoint has unexpected parameters "
                          f"{sorted(named)}")
    return params, config
