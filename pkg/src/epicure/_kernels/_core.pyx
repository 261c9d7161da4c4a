# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: SGNS batch updates and role-constrained walk steps.

Semantics mirror epicure._kernels.ref exactly; the walk kernel is
draw-for-draw identical, the SGNS kernel agrees up to summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, pow, sqrt

cnp.import_array()


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) noexcept nogil:
    cdef double m = x if x > 0.0 else 0.0
    return log1p(exp(-fabs(x))) + m


def sgns_batch(
    cnp.int64_t[::1] centers,
    cnp.int64_t[::1] contexts,
    cnp.int64_t[:, ::1] negatives,
    cnp.float64_t[:, ::1] emb,
    cnp.float64_t[:, ::1] ctx,
    cnp.float64_t[:, ::1] m_emb,
    cnp.float64_t[:, ::1] v_emb,
    cnp.float64_t[:, ::1] m_ctx,
    cnp.float64_t[:, ::1] v_ctx,
    long t,
    double lr,
    double beta1,
    double beta2,
    double eps,
):
    cdef Py_ssize_t n = centers.shape[0]
    cdef Py_ssize_t k = negatives.shape[1]
    cdef Py_ssize_t dim = emb.shape[1]
    cdef Py_ssize_t rows = emb.shape[0]

    grad_e_arr = np.zeros((rows, dim), dtype=np.float64)
    grad_c_arr = np.zeros((rows, dim), dtype=np.float64)
    touched_e_arr = np.zeros(rows, dtype=np.uint8)
    touched_c_arr = np.zeros(rows, dtype=np.uint8)
    cdef cnp.float64_t[:, ::1] grad_e = grad_e_arr
    cdef cnp.float64_t[:, ::1] grad_c = grad_c_arr
    cdef cnp.uint8_t[::1] touched_e = touched_e_arr
    cdef cnp.uint8_t[::1] touched_c = touched_c_arr

    cdef double loss = 0.0
    cdef double inv_n = 1.0 / n
    cdef double dot, g
    cdef Py_ssize_t i, j, d, w, c, nn
    cdef double bc1 = 1.0 - pow(beta1, t)
    cdef double bc2 = 1.0 - pow(beta2, t)
    cdef double m_hat, v_hat

    with nogil:
        for i in range(n):
            w = centers[i]
            c = contexts[i]
            dot = 0.0
            for d in range(dim):
                dot += emb[w, d] * ctx[c, d]
            loss += _softplus(-dot)
            g = (_sigmoid(dot) - 1.0) * inv_n
            for d in range(dim):
                grad_e[w, d] += g * ctx[c, d]
                grad_c[c, d] += g * emb[w, d]
            touched_e[w] = 1
            touched_c[c] = 1
            for j in range(k):
                nn = negatives[i, j]
                dot = 0.0
                for d in range(dim):
                    dot += emb[w, d] * ctx[nn, d]
                loss += _softplus(dot)
                g = _sigmoid(dot) * inv_n
                for d in range(dim):
                    grad_e[w, d] += g * ctx[nn, d]
                    grad_c[nn, d] += g * emb[w, d]
                touched_c[nn] = 1

        for w in range(rows):
            if touched_e[w]:
                for d in range(dim):
                    g = grad_e[w, d]
                    m_emb[w, d] = beta1 * m_emb[w, d] + (1.0 - beta1) * g
                    v_emb[w, d] = beta2 * v_emb[w, d] + (1.0 - beta2) * g * g
                    m_hat = m_emb[w, d] / bc1
                    v_hat = v_emb[w, d] / bc2
                    emb[w, d] -= lr * m_hat / (sqrt(v_hat) + eps)
            if touched_c[w]:
                for d in range(dim):
                    g = grad_c[w, d]
                    m_ctx[w, d] = beta1 * m_ctx[w, d] + (1.0 - beta1) * g
                    v_ctx[w, d] = beta2 * v_ctx[w, d] + (1.0 - beta2) * g * g
                    m_hat = m_ctx[w, d] / bc1
                    v_hat = v_ctx[w, d] / bc2
                    ctx[w, d] -= lr * m_hat / (sqrt(v_hat) + eps)

    return loss * inv_n


def generate_walk_batch(
    cnp.int32_t[::1] starts,
    cnp.int32_t[::1] pat_lo,
    cnp.int32_t[::1] pat_hi,
    cnp.int64_t[::1] pat_offsets,
    cnp.float64_t[:, ::1] uniforms,
    cnp.int64_t[::1] indptr,
    cnp.int32_t[::1] nbr,
    cnp.float64_t[::1] cumw,
    cnp.int64_t[:, ::1] bucket_starts,
    long walk_length,
    cnp.int32_t[:, ::1] out_tokens,
    cnp.int32_t[::1] out_lens,
):
    cdef Py_ssize_t n_walks = starts.shape[0]
    cdef Py_ssize_t w, pos, slot, plen, base_off
    cdef Py_ssize_t cur, a, b, lo_idx, hi_idx, mid
    cdef double lo_base, total, target

    with nogil:
        for w in range(n_walks):
            cur = starts[w]
            out_tokens[w, 0] = <cnp.int32_t> cur
            base_off = pat_offsets[w]
            plen = pat_offsets[w + 1] - base_off
            pos = 1
            while pos < walk_length:
                slot = base_off + (pos % plen)
                a = bucket_starts[cur, pat_lo[slot]]
                b = bucket_starts[cur, pat_hi[slot]]
                if a == b:
                    break
                lo_base = cumw[a - 1] if a > indptr[cur] else 0.0
                total = cumw[b - 1] - lo_base
                target = lo_base + uniforms[w, pos - 1] * total
                # first index in [a, b) with cumw[idx] > target (searchsorted side="right")
                lo_idx = a
                hi_idx = b
                while lo_idx < hi_idx:
                    mid = (lo_idx + hi_idx) >> 1
                    if cumw[mid] <= target:
                        lo_idx = mid + 1
                    else:
                        hi_idx = mid
                if lo_idx >= b:
                    lo_idx = b - 1
                cur = nbr[lo_idx]
                out_tokens[w, pos] = <cnp.int32_t> cur
                pos += 1
            out_lens[w] = <cnp.int32_t> pos
