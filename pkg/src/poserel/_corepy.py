"""Pure-Python compute kernels.

Fallback used when the compiled extension (poserel._core) is unavailable.
Each function matches its compiled counterpart exactly, including per-element
accumulation order, so the two backends produce bit-identical results.

All buffers are flat row-major float64 sequences (array('d') in practice).
Shape checks live in poserel.numerics; kernels assume consistent sizes.
"""

from __future__ import annotations


def matmul(m: int, k: int, n: int, a, b, out) -> None:
    """out = A @ B with A (m x k), B (k x n); accumulation over t ascending."""
    for i in range(m):
        row = [0.0] * n
        ia = i * k
        for t in range(k):
            av = a[ia + t]
            ib = t * n
            for j in range(n):
                row[j] += av * b[ib + j]
        io = i * n
        for j in range(n):
            out[io + j] = row[j]


def matmul_tn(m: int, k: int, n: int, a, b, out) -> None:
    """out = A^T @ B with A (k x m), B (k x n); accumulation over t ascending."""
    for i in range(m):
        row = [0.0] * n
        for t in range(k):
            av = a[t * m + i]
            ib = t * n
            for j in range(n):
                row[j] += av * b[ib + j]
        io = i * n
        for j in range(n):
            out[io + j] = row[j]


def matmul_nt(m: int, k: int, n: int, a, b, out) -> None:
    """out = A @ B^T with A (m x k), B (n x k); accumulation over t ascending."""
    for i in range(m):
        ia = i * k
        io = i * n
        for j in range(n):
            ib = j * k
            acc = 0.0
            for t in range(k):
                acc += a[ia + t] * b[ib + t]
            out[io + j] = acc


def relu(x, out) -> None:
    for i in range(len(x)):
        v = x[i]
        out[i] = v if v > 0.0 else 0.0


def relu_grad(pre, gout, gin) -> None:
    """gin = gout where the pre-activation was positive, else 0."""
    for i in range(len(pre)):
        gin[i] = gout[i] if pre[i] > 0.0 else 0.0


def add_scaled(dst, src, scale: float) -> None:
    """dst += scale * src, elementwise."""
    for i in range(len(dst)):
        dst[i] += scale * src[i]


def scale_inplace(dst, scale: float) -> None:
    for i in range(len(dst)):
        dst[i] *= scale


def sgd_update(param, grad, vel, new_param, lr: float, momentum: float,
               weight_decay: float) -> None:
    """v = momentum*v + (g + weight_decay*p); new_p = p - lr*v.

    `vel` is updated in place; `param` is left untouched.
    """
    for i in range(len(param)):
        g = grad[i] + weight_decay * param[i]
        v = momentum * vel[i] + g
        vel[i] = v
        new_param[i] = param[i] - lr * v
