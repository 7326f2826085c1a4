# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled compute kernels.

Bit-identical to poserel._corepy: identical per-element accumulation order,
compiled with -ffp-contract=off so no FMA contraction changes rounding.
"""


def matmul(Py_ssize_t m, Py_ssize_t k, Py_ssize_t n,
           double[::1] a, double[::1] b, double[::1] out):
    """out = A @ B with A (m x k), B (k x n); accumulation over t ascending."""
    cdef Py_ssize_t i, j, t, ia, ib, io
    cdef double av
    for i in range(m):
        io = i * n
        for j in range(n):
            out[io + j] = 0.0
        ia = i * k
        for t in range(k):
            av = a[ia + t]
            ib = t * n
            for j in range(n):
                out[io + j] += av * b[ib + j]


def matmul_tn(Py_ssize_t m, Py_ssize_t k, Py_ssize_t n,
              double[::1] a, double[::1] b, double[::1] out):
    """out = A^T @ B with A (k x m), B (k x n); accumulation over t ascending."""
    cdef Py_ssize_t i, j, t, ib, io
    cdef double av
    for i in range(m):
        io = i * n
        for j in range(n):
            out[io + j] = 0.0
        for t in range(k):
            av = a[t * m + i]
            ib = t * n
            for j in range(n):
                out[io + j] += av * b[ib + j]


def matmul_nt(Py_ssize_t m, Py_ssize_t k, Py_ssize_t n,
              double[::1] a, double[::1] b, double[::1] out):
    """out = A @ B^T with A (m x k), B (n x k); accumulation over t ascending."""
    cdef Py_ssize_t i, j, t, ia, ib, io
    cdef double acc
    for i in range(m):
        ia = i * k
        io = i * n
        for j in range(n):
            ib = j * k
            acc = 0.0
            for t in range(k):
                acc += a[ia + t] * b[ib + t]
            out[io + j] = acc


def relu(double[::1] x, double[::1] out):
    cdef Py_ssize_t i
    cdef double v
    for i in range(x.shape[0]):
        v = x[i]
        out[i] = v if v > 0.0 else 0.0


def relu_grad(double[::1] pre, double[::1] gout, double[::1] gin):
    """gin = gout where the pre-activation was positive, else 0."""
    cdef Py_ssize_t i
    for i in range(pre.shape[0]):
        gin[i] = gout[i] if pre[i] > 0.0 else 0.0


def add_scaled(double[::1] dst, double[::1] src, double scale):
    """dst += scale * src, elementwise."""
    cdef Py_ssize_t i
    for i in range(dst.shape[0]):
        dst[i] += scale * src[i]


def scale_inplace(double[::1] dst, double scale):
    cdef Py_ssize_t i
    for i in range(dst.shape[0]):
        dst[i] *= scale


def sgd_update(double[::1] param, double[::1] grad, double[::1] vel,
               double[::1] new_param, double lr, double momentum,
               double weight_decay):
    """v = momentum*v + (g + weight_decay*p); new_p = p - lr*v.

    `vel` is updated in place; `param` is left untouched.
    """
    cdef Py_ssize_t i
    cdef double g, v
    for i in range(param.shape[0]):
        g = grad[i] + weight_decay * param[i]
        v = momentum * vel[i] + g
        vel[i] = v
        new_param[i] = param[i] - lr * v
