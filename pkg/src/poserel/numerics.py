"""Dense float64 linear algebra, activations, losses, initialization, and
SGD with momentum, plus a finite-difference gradient oracle.

Matrices are immutable by convention after construction; every operation
returns a fresh Matrix. The heavy kernels are dispatched to the backend
selected in poserel.backend; results are bit-identical across backends.
"""

from __future__ import annotations

import math
import random
from array import array
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from poserel.backend import kernels
from poserel.errors import InvalidInputError, ShapeError


class Matrix:
    """Dense row-major float64 matrix backed by a flat array('d')."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data=None, validate: bool = True):
        if rows <= 0 or cols <= 0:
            raise ShapeError(f"matrix dimensions must be positive, got {rows}x{cols}")
        if data is None:
            data = array("d", bytes(8 * rows * cols))
        elif not isinstance(data, array) or data.typecode != "d":
            data = array("d", data)
        if len(data) != rows * cols:
            raise ShapeError(
                f"data length {len(data)} does not match shape {rows}x{cols}")
        if validate:
            for v in data:
                if not math.isfinite(v):
                    raise InvalidInputError("matrix values must be finite")
        self.rows = rows
        self.cols = cols
        self.data = data

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(rows, cols, validate=False)

    @classmethod
    def from_rows(cls, rows_of_values: Sequence[Sequence[float]]) -> "Matrix":
        nrows = len(rows_of_values)
        if nrows == 0:
            raise ShapeError("cannot build a matrix from zero rows")
        ncols = len(rows_of_values[0])
        flat = array("d")
        for r in rows_of_values:
            if len(r) != ncols:
                raise ShapeError("ragged rows")
            flat.extend(r)
        return cls(nrows, ncols, flat)

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        return self.data[i * self.cols + j]

    def row(self, i: int) -> list[float]:
        return list(self.data[i * self.cols:(i + 1) * self.cols])

    def to_rows(self) -> list[list[float]]:
        return [self.row(i) for i in range(self.rows)]

    def copy(self) -> "Matrix":
        return Matrix(self.rows, self.cols, array("d", self.data), validate=False)

    def transpose(self) -> "Matrix":
        out = Matrix.zeros(self.cols, self.rows)
        d, o = self.data, out.data
        for i in range(self.rows):
            for j in range(self.cols):
                o[j * self.rows + i] = d[i * self.cols + j]
        return out

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard product A @ B with deterministic left-to-right accumulation."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    out = Matrix.zeros(a.rows, b.cols)
    kernels.matmul(a.rows, a.cols, b.cols, a.data, b.data, out.data)
    return out


def matmul_tn(a: Matrix, b: Matrix) -> Matrix:
    """A^T @ B without materializing the transpose."""
    if a.rows != b.rows:
        raise ShapeError(f"matmul_tn shape mismatch: {a.rows}x{a.cols} vs {b.rows}x{b.cols}")
    out = Matrix.zeros(a.cols, b.cols)
    kernels.matmul_tn(a.cols, a.rows, b.cols, a.data, b.data, out.data)
    return out


def matmul_nt(a: Matrix, b: Matrix) -> Matrix:
    """A @ B^T without materializing the transpose."""
    if a.cols != b.cols:
        raise ShapeError(f"matmul_nt shape mismatch: {a.rows}x{a.cols} vs {b.rows}x{b.cols}")
    out = Matrix.zeros(a.rows, b.rows)
    kernels.matmul_nt(a.rows, a.cols, b.rows, a.data, b.data, out.data)
    return out


def relu(x: Matrix) -> Matrix:
    """Elementwise max(0, x)."""
    out = Matrix.zeros(x.rows, x.cols)
    kernels.relu(x.data, out.data)
    return out


def relu_backward(pre: Matrix, grad_out: Matrix) -> Matrix:
    """Gradient through ReLU: passes grad_out where the pre-activation was > 0."""
    if (pre.rows, pre.cols) != (grad_out.rows, grad_out.cols):
        raise ShapeError("relu_backward shape mismatch")
    out = Matrix.zeros(pre.rows, pre.cols)
    kernels.relu_grad(pre.data, grad_out.data, out.data)
    return out


def softmax(logits: Sequence[float]) -> list[float]:
    """Numerically stable softmax (max-subtracted)."""
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    z = sum(exps)
    return [e / z for e in exps]


def softmax_cross_entropy(logits: Sequence[float], label: int) -> tuple[float, list[float]]:
    """Loss -log softmax(logits)[label] and its gradient w.r.t. the logits.

    Stable for extreme logits; the gradient is softmax(logits) - onehot(label).
    """
    c = len(logits)
    if not 0 <= label < c:
        raise InvalidInputError(f"label {label} out of range for {c} classes")
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    z = sum(exps)
    loss = math.log(z) - (logits[label] - m)
    grad = [e / z for e in exps]
    grad[label] -= 1.0
    return loss, grad


def glorot_init(rows: int, cols: int, rng_seed: int | random.Random) -> Matrix:
    """Glorot-uniform matrix: values uniform in +/- sqrt(6 / (rows + cols)).

    `rng_seed` is either an integer seed or an existing random.Random stream
    (the latter lets a caller draw several matrices from one documented stream).
    Values are drawn row-major.
    """
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"matrix dimensions must be positive, got {rows}x{cols}")
    rng = rng_seed if isinstance(rng_seed, random.Random) else random.Random(rng_seed)
    bound = math.sqrt(6.0 / (rows + cols))
    flat = array("d", (rng.uniform(-bound, bound) for _ in range(rows * cols)))
    return Matrix(rows, cols, flat, validate=False)


@dataclass
class OptimizerState:
    """Per-parameter velocity buffers plus a step counter."""

    velocities: dict[str, Matrix]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, Matrix]) -> "OptimizerState":
        return cls({name: Matrix.zeros(p.rows, p.cols) for name, p in params.items()})


def sgd_momentum_step(params: dict[str, Matrix], grads: dict[str, Matrix],
                      state: OptimizerState, lr: float, momentum: float,
                      weight_decay: float = 0.0) -> dict[str, Matrix]:
    """One SGD step: v <- momentum*v + grad; param <- param - lr*v.

    Returns fresh parameter matrices; velocity buffers are updated in place.
    """
    new_params: dict[str, Matrix] = {}
    for name, p in params.items():
        g = grads[name]
        v = state.velocities[name]
        if (p.rows, p.cols) != (g.rows, g.cols) or (p.rows, p.cols) != (v.rows, v.cols):
            raise ShapeError(f"parameter/gradient/velocity shape mismatch for {name!r}")
        out = Matrix.zeros(p.rows, p.cols)
        kernels.sgd_update(p.data, g.data, v.data, out.data, lr, momentum, weight_decay)
        new_params[name] = out
    state.step += 1
    return new_params


def finite_diff_grad(loss_fn: Callable[[dict[str, Matrix]], float],
                     params: dict[str, Matrix],
                     h: float = 1e-5) -> dict[str, Matrix]:
    """Central-difference gradient oracle: (f(p+h*e) - f(p-h*e)) / 2h per coordinate.

    Evaluates loss_fn 2x per coordinate; intended for small test problems.
    """
    if h <= 0:
        raise InvalidInputError(f"step size must be positive, got {h}")
    grads: dict[str, Matrix] = {}
    for name, p in params.items():
        g = Matrix.zeros(p.rows, p.cols)
        perturbed = dict(params)
        for idx in range(len(p.data)):
            orig = p.data[idx]
            bumped = p.copy()
            bumped.data[idx] = orig + h
            perturbed[name] = bumped
            f_plus = loss_fn(perturbed)
            bumped.data[idx] = orig - h
            f_minus = loss_fn(perturbed)
            g.data[idx] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g
    return grads


def max_relative_error(a: Iterable[float], b: Iterable[float],
                       floor: float = 1e-6) -> float:
    """max |a_i - b_i| / max(|a_i|, |b_i|, floor) over paired elements.

    The floor keeps the ratio meaningful where both gradients are tiny and
    finite-difference roundoff (~1e-11 at h=1e-5) would otherwise dominate.
    """
    worst = 0.0
    for x, y in zip(a, b):
        err = abs(x - y) / max(abs(x), abs(y), floor)
        if err > worst:
            worst = err
    return worst
