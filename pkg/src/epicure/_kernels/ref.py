"""Pure-numpy reference kernels.

These are the fallback implementations selected when the compiled extension
is unavailable. The walk kernel is draw-for-draw identical to the compiled
one (both consume pre-drawn uniforms and use the same prefix-sum search), so
walk corpora do not depend on which backend ran. The SGNS kernel matches the
compiled one up to float summation order.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x), stable for large |x|
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _scatter_sum(rows: np.ndarray, grads: np.ndarray, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-summed gradients via per-column bincount (input-order accumulation,
    matching the compiled kernel bit for bit); returns (touched, dense) where
    dense holds the summed gradients for the touched rows."""
    dense = np.empty((n_rows, grads.shape[1]))
    for j in range(grads.shape[1]):
        dense[:, j] = np.bincount(rows, weights=grads[:, j], minlength=n_rows)
    mask = np.zeros(n_rows, dtype=bool)
    mask[rows] = True
    touched = np.flatnonzero(mask)
    return touched, dense[touched]


def _adam_rows(param, m, v, rows, grads, lr, beta1, beta2, eps, t):
    m[rows] = beta1 * m[rows] + (1.0 - beta1) * grads
    v[rows] = beta2 * v[rows] + (1.0 - beta2) * grads * grads
    m_hat = m[rows] / (1.0 - beta1**t)
    v_hat = v[rows] / (1.0 - beta2**t)
    param[rows] -= lr * m_hat / (np.sqrt(v_hat) + eps)


# one-hot scatter buffer cap: (model rows x batch size) elements
_DENSE_SCATTER_LIMIT = 32_000_000


def sgns_gradients(
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    emb: np.ndarray,
    ctx: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Mean per-pair loss and row-summed gradients at the current parameters.

    Returns (loss, rows_e, grads_e, rows_c, grads_c) where rows_* are the
    unique touched rows of the center/context matrices and grads_* the summed
    gradients of the mean batch loss with respect to those rows.
    """
    n, k = negatives.shape
    negflat = negatives.reshape(-1)
    vw = emb[centers]
    uc = ctx[contexts]
    un = ctx[negflat].reshape(n, k, -1)

    pos_logit = np.einsum("nd,nd->n", vw, uc)
    neg_logit = np.einsum("nd,nkd->nk", vw, un)
    loss = (_softplus(-pos_logit).sum() + _softplus(neg_logit).sum()) / n

    g_pos = (_sigmoid(pos_logit) - 1.0) / n
    g_neg = _sigmoid(neg_logit) / n

    d_vw = g_pos[:, None] * uc + np.einsum("nk,nkd->nd", g_neg, un)
    rows_e, grads_e = _scatter_sum(centers, d_vw, emb.shape[0])

    n_rows = ctx.shape[0]
    if n_rows * n <= _DENSE_SCATTER_LIMIT:
        # context-side gradients are a weighted one-hot combination of the
        # center vectors, so the whole scatter collapses into one matmul
        pair_idx = np.arange(n)
        weights = np.zeros((n_rows, n))
        weights[contexts, pair_idx] = g_pos
        np.add.at(weights, (negflat, np.repeat(pair_idx, k)), g_neg.reshape(-1))
        mask = np.zeros(n_rows, dtype=bool)
        mask[contexts] = True
        mask[negflat] = True
        rows_c = np.flatnonzero(mask)
        grads_c = weights[rows_c] @ vw
    else:
        d_uc = g_pos[:, None] * vw
        d_un = g_neg[:, :, None] * vw[:, None, :]
        rows_c, grads_c = _scatter_sum(
            np.concatenate([contexts, negflat]),
            np.concatenate([d_uc, d_un.reshape(n * k, -1)]),
            n_rows,
        )
    return float(loss), rows_e, grads_e, rows_c, grads_c


def sgns_batch(
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    emb: np.ndarray,
    ctx: np.ndarray,
    m_emb: np.ndarray,
    v_emb: np.ndarray,
    m_ctx: np.ndarray,
    v_ctx: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> float:
    """One batch of skip-gram negative sampling with per-row adaptive moments.

    Gradients are taken at the pre-update parameters for the whole batch
    (mean per-pair loss); moment state is then advanced only on rows that
    appear in the batch, with bias correction using the global step count t.
    Returns the mean per-pair loss.
    """
    loss, rows_e, grads_e, rows_c, grads_c = sgns_gradients(centers, contexts, negatives, emb, ctx)
    _adam_rows(emb, m_emb, v_emb, rows_e, grads_e, lr, beta1, beta2, eps, t)
    _adam_rows(ctx, m_ctx, v_ctx, rows_c, grads_c, lr, beta1, beta2, eps, t)
    return loss


def generate_walk_batch(
    starts: np.ndarray,
    pat_lo: np.ndarray,
    pat_hi: np.ndarray,
    pat_offsets: np.ndarray,
    uniforms: np.ndarray,
    indptr: np.ndarray,
    nbr: np.ndarray,
    cumw: np.ndarray,
    bucket_starts: np.ndarray,
    walk_length: int,
    out_tokens: np.ndarray,
    out_lens: np.ndarray,
) -> None:
    """Advance a batch of role-constrained walks over the bucketed adjacency.

    Each walk w starts at starts[w] and must place, at position p, a node
    from the bucket range [pat_lo, pat_hi) of its cyclic pattern at p % len.
    A step draws from the current node's neighbors inside that range with
    probability proportional to edge weight, using uniforms[w, p-1]; when no
    neighbor conforms the walk truncates.
    """
    for w in range(len(starts)):
        cur = int(starts[w])
        out_tokens[w, 0] = cur
        plen = int(pat_offsets[w + 1] - pat_offsets[w])
        base_off = int(pat_offsets[w])
        pos = 1
        while pos < walk_length:
            slot = base_off + (pos % plen)
            a = int(bucket_starts[cur, pat_lo[slot]])
            b = int(bucket_starts[cur, pat_hi[slot]])
            if a == b:
                break
            lo_base = cumw[a - 1] if a > int(indptr[cur]) else 0.0
            total = cumw[b - 1] - lo_base
            target = lo_base + uniforms[w, pos - 1] * total
            idx = a + int(np.searchsorted(cumw[a:b], target, side="right"))
            if idx >= b:
                idx = b - 1
            cur = int(nbr[idx])
            out_tokens[w, pos] = cur
            pos += 1
        out_lens[w] = pos
