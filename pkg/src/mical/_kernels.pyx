# cython: language_level=3
"""Compiled hot kernels: binary-chain message passing and critic training.

Semantics match ``mical._fallback`` exactly; see that module for the
argument conventions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, fabs, INFINITY
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _lse2(double a, double b) noexcept nogil:
    cdef double m = a if a > b else b
    if m == -INFINITY:
        return -INFINITY
    return m + log1p(exp(-fabs(a - b)))


def chain_forward(double[:, ::1] log_g, double[:, ::1] log_trans, double[::1] log_init):
    cdef Py_ssize_t n = log_g.shape[0]
    cdef Py_ssize_t k
    cdef double a0, a1, p0, p1, z
    cdef double t00 = log_trans[0, 0], t01 = log_trans[0, 1]
    cdef double t10 = log_trans[1, 0], t11 = log_trans[1, 1]
    log_fwd_a = np.empty((n, 2))
    log_z_a = np.empty(n)
    cdef double[:, ::1] fw = log_fwd_a
    cdef double[::1] zf = log_z_a
    with nogil:
        a0 = log_init[0] + log_g[0, 0]
        a1 = log_init[1] + log_g[0, 1]
        z = _lse2(a0, a1)
        fw[0, 0] = a0 - z
        fw[0, 1] = a1 - z
        zf[0] = z
        for k in range(1, n):
            p0 = fw[k - 1, 0]
            p1 = fw[k - 1, 1]
            a0 = log_g[k, 0] + _lse2(p0 + t00, p1 + t10)
            a1 = log_g[k, 1] + _lse2(p0 + t01, p1 + t11)
            z = _lse2(a0, a1)
            fw[k, 0] = a0 - z
            fw[k, 1] = a1 - z
            zf[k] = z
    return log_fwd_a, log_z_a


def chain_backward(double[:, ::1] log_g, double[:, ::1] log_trans):
    cdef Py_ssize_t n = log_g.shape[0]
    cdef Py_ssize_t k
    cdef double b0, b1, q0, q1, z
    cdef double t00 = log_trans[0, 0], t01 = log_trans[0, 1]
    cdef double t10 = log_trans[1, 0], t11 = log_trans[1, 1]
    cdef double ln2 = log(2.0)
    log_bwd_a = np.empty((n, 2))
    log_z_a = np.empty(n)
    cdef double[:, ::1] bw = log_bwd_a
    cdef double[::1] zb = log_z_a
    with nogil:
        bw[n - 1, 0] = -ln2
        bw[n - 1, 1] = -ln2
        zb[n - 1] = ln2
        for k in range(n - 2, -1, -1):
            q0 = log_g[k + 1, 0] + bw[k + 1, 0]
            q1 = log_g[k + 1, 1] + bw[k + 1, 1]
            b0 = _lse2(t00 + q0, t01 + q1)
            b1 = _lse2(t10 + q0, t11 + q1)
            z = _lse2(b0, b1)
            bw[k, 0] = b0 - z
            bw[k, 1] = b1 - z
            zb[k] = z
    return log_bwd_a, log_z_a


# Row-major C[m, n] = op(A) @ op(B) through column-major dgemm.
cdef inline void _mm(double* a, double* b, double* c, int m, int n, int k,
                     bint trans_a, bint trans_b) noexcept nogil:
    # column-major: C^T (n x m) = op(B)^T (n x k) @ op(A)^T (k x m)
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'T' if trans_a else b'N'
    cdef int lda = k if trans_b else n
    cdef int ldb = m if trans_a else k
    cdef int ldc = n
    cdef double one = 1.0, zero = 0.0
    dgemm(&ta, &tb, &n, &m, &k, &one, b, &lda, a, &ldb, &zero, c, &ldc)


cdef void _forward(double[:, ::1] z, double[:, ::1] w1, double[::1] b1,
                   double[:, ::1] w2, double[::1] b2, double[::1] w3, double b3,
                   double[:, ::1] a1, double[:, ::1] a2, double[:, ::1] h2,
                   double[::1] out) noexcept nogil:
    # a1 holds relu(layer1) after this call; a2 keeps pre-activations of layer 2
    cdef Py_ssize_t r, c
    cdef Py_ssize_t rows = z.shape[0], h = w1.shape[1]
    cdef double acc, v
    for r in range(rows):
        for c in range(h):
            v = z[r, 0] * w1[0, c] + z[r, 1] * w1[1, c] + b1[c]
            a1[r, c] = v if v > 0.0 else 0.0
    _mm(&a1[0, 0], &w2[0, 0], &a2[0, 0], <int>rows, <int>h, <int>h, False, False)
    for r in range(rows):
        acc = b3
        for c in range(h):
            v = a2[r, c] + b2[c]
            a2[r, c] = v
            v = v if v > 0.0 else 0.0
            h2[r, c] = v
            acc = acc + v * w3[c]
        out[r] = acc


def critic_forward(double[::1] x, double[::1] y, double[:, ::1] w1, double[::1] b1,
                   double[:, ::1] w2, double[::1] b2, double[::1] w3, double[::1] b3):
    cdef Py_ssize_t n = x.shape[0], h = w1.shape[1]
    cdef Py_ssize_t chunk = 2048 if n > 2048 else n
    cdef Py_ssize_t start, rows, r
    out_a = np.empty(n)
    cdef double[::1] out = out_a
    cdef double[:, ::1] z = np.empty((chunk, 2))
    cdef double[:, ::1] a1 = np.empty((chunk, h))
    cdef double[:, ::1] a2 = np.empty((chunk, h))
    cdef double[:, ::1] h2 = np.empty((chunk, h))
    with nogil:
        start = 0
        while start < n:
            rows = chunk if n - start > chunk else n - start
            for r in range(rows):
                z[r, 0] = x[start + r]
                z[r, 1] = y[start + r]
            _forward(z[:rows], w1, b1, w2, b2, w3, b3[0], a1[:rows], a2[:rows],
                     h2[:rows], out[start:start + rows])
            start += rows
    return out_a


cdef inline double _sigmoid(double v) noexcept nogil:
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    cdef double e = exp(v)
    return e / (1.0 + e)


cdef inline void _adam(double* p, double* g, double* m, double* v, Py_ssize_t size,
                       double lr, double beta1, double beta2, double eps,
                       double c1, double c2) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(size):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def critic_train(double[::1] x, double[::1] y, cnp.int64_t[:, ::1] idx,
                 cnp.int64_t[:, ::1] pidx, list params, list m, list v,
                 long t0, double lr, double beta1, double beta2, double eps):
    cdef double[:, ::1] w1 = params[0]
    cdef double[::1] b1 = params[1]
    cdef double[:, ::1] w2 = params[2]
    cdef double[::1] b2 = params[3]
    cdef double[::1] w3 = params[4]
    cdef double[::1] b3 = params[5]
    cdef double[:, ::1] mw1 = m[0], vw1 = v[0], mw2 = m[2], vw2 = v[2]
    cdef double[::1] mb1 = m[1], vb1 = v[1], mb2 = m[3], vb2 = v[3]
    cdef double[::1] mw3 = m[4], vw3 = v[4], mb3 = m[5], vb3 = v[5]

    cdef Py_ssize_t steps = idx.shape[0], batch = idx.shape[1]
    cdef Py_ssize_t h = w1.shape[1], rows = 2 * batch
    cdef Py_ssize_t s, r, c
    cdef long t = t0
    cdef double c1, c2, go_r, acc, gb3

    cdef double[:, ::1] z = np.empty((rows, 2))
    cdef double[:, ::1] a1 = np.empty((rows, h))
    cdef double[:, ::1] a2 = np.empty((rows, h))
    cdef double[:, ::1] h2 = np.empty((rows, h))
    cdef double[:, ::1] d1 = np.empty((rows, h))
    cdef double[::1] out = np.empty(rows)
    cdef double[::1] go = np.empty(rows)
    cdef double[:, ::1] gw1 = np.empty((2, h))
    cdef double[::1] gb1 = np.empty(h)
    cdef double[:, ::1] gw2 = np.empty((h, h))
    cdef double[::1] gb2 = np.empty(h)
    cdef double[::1] gw3 = np.empty(h)
    cdef double[::1] gb3v = np.empty(1)

    with nogil:
        for s in range(steps):
            for r in range(batch):
                z[r, 0] = x[idx[s, r]]
                z[r, 1] = y[idx[s, r]]
                z[batch + r, 0] = x[idx[s, r]]
                z[batch + r, 1] = y[pidx[s, r]]
            _forward(z, w1, b1, w2, b2, w3, b3[0], a1, a2, h2, out)

            gb3 = 0.0
            for r in range(batch):
                go[r] = -_sigmoid(-out[r]) / batch
                go[batch + r] = _sigmoid(out[batch + r]) / batch
            for r in range(rows):
                gb3 += go[r]
            gb3v[0] = gb3

            for c in range(h):
                gw3[c] = 0.0
                gb2[c] = 0.0
            # h2 becomes d2 = outer(go, w3) * (a2 > 0) after gw3 is accumulated
            for r in range(rows):
                go_r = go[r]
                for c in range(h):
                    gw3[c] += h2[r, c] * go_r
                    if a2[r, c] > 0.0:
                        h2[r, c] = go_r * w3[c]
                    else:
                        h2[r, c] = 0.0
                    gb2[c] += h2[r, c]
            # gw2 = relu(a1)^T @ d2 ; d1 = d2 @ w2^T
            _mm(&a1[0, 0], &h2[0, 0], &gw2[0, 0], <int>h, <int>h, <int>rows, True, False)
            _mm(&h2[0, 0], &w2[0, 0], &d1[0, 0], <int>rows, <int>h, <int>h, False, True)

            for c in range(h):
                gw1[0, c] = 0.0
                gw1[1, c] = 0.0
                gb1[c] = 0.0
            for r in range(rows):
                for c in range(h):
                    if a1[r, c] > 0.0:
                        acc = d1[r, c]
                        gw1[0, c] += z[r, 0] * acc
                        gw1[1, c] += z[r, 1] * acc
                        gb1[c] += acc

            t += 1
            c1 = 1.0 - beta1 ** t
            c2 = 1.0 - beta2 ** t
            _adam(&w1[0, 0], &gw1[0, 0], &mw1[0, 0], &vw1[0, 0], 2 * h, lr, beta1, beta2, eps, c1, c2)
            _adam(&b1[0], &gb1[0], &mb1[0], &vb1[0], h, lr, beta1, beta2, eps, c1, c2)
            _adam(&w2[0, 0], &gw2[0, 0], &mw2[0, 0], &vw2[0, 0], h * h, lr, beta1, beta2, eps, c1, c2)
            _adam(&b2[0], &gb2[0], &mb2[0], &vb2[0], h, lr, beta1, beta2, eps, c1, c2)
            _adam(&w3[0], &gw3[0], &mw3[0], &vw3[0], h, lr, beta1, beta2, eps, c1, c2)
            _adam(&b3[0], &gb3v[0], &mb3[0], &vb3[0], 1, lr, beta1, beta2, eps, c1, c2)
    return t
