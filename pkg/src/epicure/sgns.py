"""Skip-gram negative-sampling trainer over walk corpora.

Center/context pairs come from a symmetric window over each walk; negatives
are drawn from the unigram^0.75 distribution of walk tokens. Updates use a
sparse adaptive-moment scheme: only rows appearing in a batch have their
first/second moment state advanced. Single-worker mode is bit-deterministic
for a fixed (corpus, config); multi-worker mode (compiled backend only)
trades that determinism for speed.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .artifacts import read_blob, sha256_text, write_blob
from .walks import WalkCorpus

logger = logging.getLogger(__name__)


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 300
    window: int = 7
    negatives: int = 5
    batch_size: int = 32768
    lr: float = 0.0025
    epochs: int = 20
    seed: int = 42
    neg_exponent: float = 0.75
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    workers: int = 1

    def __post_init__(self):
        if self.dim < 2:
            raise TrainError("dim must be >= 2")
        for name in ("window", "negatives", "batch_size", "epochs", "workers"):
            if getattr(self, name) < 1:
                raise TrainError(f"{name} must be positive")
        if self.lr < 0 or self.neg_exponent < 0:
            raise TrainError("lr and neg_exponent must be non-negative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def hash(self) -> str:
        return sha256_text(repr(sorted(self.to_dict().items())))[:16]


@dataclass
class EmbeddingMatrix:
    node_ids: np.ndarray  # int64, row -> node id, sorted ascending
    names: list[str]  # row -> node name
    vectors: np.ndarray  # center vectors, (rows, dim)
    n_ingredient_rows: int  # ingredient rows are the prefix (node id < n_ingredients)
    context: np.ndarray | None = None  # training-only
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.node_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row_of(self, node_id: int) -> int | None:
        row = int(np.searchsorted(self.node_ids, node_id))
        if row < len(self.node_ids) and self.node_ids[row] == node_id:
            return row
        return None


def window_pairs(tokens: np.ndarray, offsets: np.ndarray, window: int) -> np.ndarray:
    """All (center, context) pairs within `window` positions inside each walk,
    both directions, self-pairs dropped. Deterministic order: by offset
    distance 1..window, forward pairs then backward pairs."""
    if window < 1:
        raise TrainError("window must be >= 1")
    lens = np.diff(offsets)
    walk_of = np.repeat(np.arange(len(lens), dtype=np.int64), lens)
    parts = []
    for j in range(1, window + 1):
        if len(tokens) <= j:
            break
        a = tokens[:-j]
        b = tokens[j:]
        mask = (walk_of[:-j] == walk_of[j:]) & (a != b)
        fa, fb = a[mask], b[mask]
        parts.append(np.stack([fa, fb], axis=1))
        parts.append(np.stack([fb, fa], axis=1))
    if not parts:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(parts).astype(np.int64)


def extract_pairs(corpus: WalkCorpus, window: int) -> np.ndarray:
    """(center, context) node-id pairs over the whole corpus."""
    return window_pairs(corpus.tokens, corpus.offsets, window)


def batch_loss(
    emb: np.ndarray, ctx: np.ndarray, centers: np.ndarray, contexts: np.ndarray, negatives: np.ndarray
) -> float:
    """Mean per-pair SGNS loss at the given parameters (no update)."""
    loss, *_ = _kernels.ref.sgns_gradients(centers, contexts, negatives, emb, ctx)
    return loss


def noise_distribution(token_counts: np.ndarray, exponent: float) -> np.ndarray:
    """Cumulative noise distribution over rows from raw token counts."""
    weights = np.power(token_counts.astype(np.float64), exponent)
    total = weights.sum()
    if total <= 0:
        raise TrainError("noise table degenerate: no token mass")
    return np.cumsum(weights / total)


def sample_negatives(cum: np.ndarray, rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    draws = np.searchsorted(cum, rng.random((n, k)), side="right")
    return np.minimum(draws, len(cum) - 1).astype(np.int64)


def train(corpus: WalkCorpus, cfg: TrainConfig, variant: str | None = None) -> EmbeddingMatrix:
    """Train center/context matrices over the walk corpus.

    Rows cover exactly the nodes present in the corpus. With workers == 1 the
    result is bit-deterministic for fixed inputs; workers > 1 requires the
    compiled backend and is documented as non-deterministic (row updates from
    concurrent sub-batches may interleave).
    """
    if corpus.n_tokens == 0:
        raise TrainError("walk corpus is empty")
    node_ids = np.unique(corpus.tokens).astype(np.int64)
    row_tokens = np.searchsorted(node_ids, corpus.tokens)
    pairs = window_pairs(row_tokens, corpus.offsets, cfg.window)
    if len(pairs) == 0:
        raise TrainError("no training pairs: all walks are pairless")

    n_rows = len(node_ids)
    counts = np.bincount(row_tokens, minlength=n_rows)
    cum_noise = noise_distribution(counts, cfg.neg_exponent)

    rng = np.random.default_rng(cfg.seed)
    emb = (rng.random((n_rows, cfg.dim)) - 0.5) / cfg.dim
    ctx = np.zeros((n_rows, cfg.dim), dtype=np.float64)
    m_emb = np.zeros_like(emb)
    v_emb = np.zeros_like(emb)
    m_ctx = np.zeros_like(ctx)
    v_ctx = np.zeros_like(ctx)

    workers = cfg.workers
    if workers > 1 and not _kernels.HAVE_COMPILED:
        logger.warning("multi-worker training needs the compiled backend; falling back to 1 worker")
        workers = 1
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    step = 0
    n_pairs = len(pairs)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_pairs)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n_pairs, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            centers = pairs[idx, 0]
            contexts = pairs[idx, 1]
            negatives = sample_negatives(cum_noise, rng, len(idx), cfg.negatives)
            step += 1
            if pool is None:
                loss = _kernels.sgns_batch(
                    centers, contexts, negatives, emb, ctx, m_emb, v_emb, m_ctx, v_ctx,
                    step, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                )
            else:
                chunks = np.array_split(np.arange(len(idx)), workers)
                futures = [
                    pool.submit(
                        _kernels.sgns_batch,
                        centers[c], contexts[c], negatives[c], emb, ctx,
                        m_emb, v_emb, m_ctx, v_ctx,
                        step, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                    )
                    for c in chunks
                    if len(c)
                ]
                loss = float(np.mean([f.result() for f in futures]))
            if not np.isfinite(loss):
                raise TrainError(
                    f"non-finite loss at epoch {epoch} step {step}: "
                    f"batch rows {np.unique(centers)[:8].tolist()}..., lr={cfg.lr}"
                )
            epoch_loss += loss
            n_batches += 1
        logger.info("epoch %d/%d: mean loss %.6f", epoch + 1, cfg.epochs, epoch_loss / n_batches)
    if pool is not None:
        pool.shutdown()

    if not (np.isfinite(emb).all() and np.isfinite(ctx).all()):
        raise TrainError("training produced non-finite parameters")
    names = [corpus.node_names[i] for i in node_ids]
    n_ing_rows = int(np.searchsorted(node_ids, corpus.n_ingredients))
    return EmbeddingMatrix(
        node_ids=node_ids,
        names=names,
        vectors=emb,
        n_ingredient_rows=n_ing_rows,
        context=ctx,
        meta={
            "variant": variant or corpus.schema.variant,
            "config_hash": cfg.hash(),
            "config": cfg.to_dict(),
            "n_pairs": int(n_pairs),
        },
    )


def save_embedding(model: EmbeddingMatrix, path: str | Path) -> None:
    write_blob(
        path,
        "embedding",
        {
            "dim": model.dim,
            "rows": model.n_rows,
            "variant": model.meta.get("variant"),
            "config_hash": model.meta.get("config_hash"),
            "names": model.names,
            "n_ingredient_rows": model.n_ingredient_rows,
            "meta": {k: v for k, v in model.meta.items() if k not in ("variant", "config_hash")},
        },
        {
            "node_ids": model.node_ids.astype(np.int64),
            "vectors": model.vectors.astype(np.float32),
        },
    )


def load_embedding(path: str | Path) -> EmbeddingMatrix:
    header, arrays = read_blob(path, expect_kind="embedding")
    meta = dict(header.get("meta", {}))
    meta["variant"] = header.get("variant")
    meta["config_hash"] = header.get("config_hash")
    return EmbeddingMatrix(
        node_ids=arrays["node_ids"],
        names=header["names"],
        vectors=arrays["vectors"].astype(np.float64),
        n_ingredient_rows=header["n_ingredient_rows"],
        context=None,
        meta=meta,
    )
