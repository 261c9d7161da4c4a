"""Intrinsic geometry and label-recovery metrics.

Isotropy diagnostics (participation ratio, average pairwise cosine, PCA
variance shares) plus clustering metrics against single-label food groups
and multi-label cuisine regions, with subsample-bootstrap confidence
intervals. All cosine-based metrics operate on length-normalized copies.
"""

from __future__ import annotations

import logging
from collections import Counter

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score

logger = logging.getLogger(__name__)

EXACT_PAIR_LIMIT = 4096
SUBSAMPLE_PAIRS = 1_000_000


class GeometryError(ValueError):
    pass


def unit_rows(X: np.ndarray, warn: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Length-normalized copy plus the mask of rows that had nonzero norm."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    ok = norms > 0
    if warn and not ok.all():
        logger.warning("excluding %d zero-norm rows", int((~ok).sum()))
    U = X[ok] / norms[ok, None]
    return U, ok


def participation_ratio(X: np.ndarray) -> float:
    """(sum of eigenvalues)^2 / sum of squared eigenvalues of the
    mean-centered covariance; ranges 1..dim."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise GeometryError("participation ratio needs at least 2 rows")
    s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    lam = s * s
    total = lam.sum()
    if total <= 0:
        raise GeometryError("zero covariance: all rows identical")
    return float(total * total / (lam * lam).sum())


def pca_variance_shares(X: np.ndarray, tops: tuple[int, ...] = (10, 50)) -> list[float]:
    X = np.asarray(X, dtype=np.float64)
    s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    lam = s * s
    total = lam.sum()
    if total <= 0:
        raise GeometryError("zero covariance: all rows identical")
    return [float(lam[: min(k, len(lam))].sum() / total) for k in tops]


def avg_pairwise_cosine(X: np.ndarray, exact_limit: int = EXACT_PAIR_LIMIT, seed: int = 0) -> float:
    """Mean cosine over unordered row pairs: exact up to `exact_limit` rows,
    a seeded uniform subsample of 10^6 pairs beyond that."""
    U, _ = unit_rows(X)
    n = len(U)
    if n < 2:
        raise GeometryError("average pairwise cosine needs at least 2 nonzero rows")
    if n <= exact_limit:
        gram_total = 0.0
        block = 1024
        for lo in range(0, n, block):
            gram_total += float((U[lo : lo + block] @ U.T).sum())
        return (gram_total - n) / (n * (n - 1))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=SUBSAMPLE_PAIRS)
    j = rng.integers(0, n - 1, size=SUBSAMPLE_PAIRS)
    j[j >= i] += 1
    return float(np.einsum("nd,nd->n", U[i], U[j]).mean())


def nmi_from_table(table: np.ndarray) -> float:
    """Normalized mutual information (arithmetic-mean normalization) from a
    contingency table; fractional mass is allowed, which is what makes the
    multi-label soft variant possible."""
    table = np.asarray(table, dtype=np.float64)
    total = table.sum()
    if total <= 0:
        raise GeometryError("empty contingency table")
    p = table / total
    pi = p.sum(axis=1)
    pj = p.sum(axis=0)
    nz = p > 0
    outer = np.outer(pi, pj)
    mi = float((p[nz] * (np.log(p[nz]) - np.log(outer[nz]))).sum())
    h_u = float(-(pi[pi > 0] * np.log(pi[pi > 0])).sum())
    h_v = float(-(pj[pj > 0] * np.log(pj[pj > 0])).sum())
    denom = 0.5 * (h_u + h_v)
    if denom == 0.0:
        return 1.0  # both partitions trivial
    return max(0.0, mi / denom)


def _kmeans_assign(U: np.ndarray, k: int, seed: int) -> np.ndarray:
    if len(U) < k:
        raise GeometryError(f"k-means needs >= {k} rows, got {len(U)}")
    km = KMeans(n_clusters=k, n_init=10, random_state=seed)
    return km.fit_predict(U)


def kmeans_label_nmi(X: np.ndarray, labels: list[str], seed: int = 0) -> float:
    """NMI between labels and a k-means partition (k = number of labels) of
    the cosine-normalized rows."""
    U, ok = unit_rows(X)
    labels = [l for l, keep in zip(labels, ok) if keep]
    classes = sorted(set(labels))
    y = np.asarray([classes.index(l) for l in labels])
    clusters = _kmeans_assign(U, len(classes), seed)
    table = np.zeros((len(classes), clusters.max() + 1))
    np.add.at(table, (y, clusters), 1.0)
    return nmi_from_table(table)


def soft_nmi(X: np.ndarray, tag_sets: list[tuple[str, ...]], seed: int = 0) -> float:
    """Multi-label NMI: each item spreads mass 1/|tags| over its regions in a
    fractional contingency table against hard k-means clusters."""
    U, ok = unit_rows(X)
    tag_sets = [t for t, keep in zip(tag_sets, ok) if keep]
    regions = sorted({t for tags in tag_sets for t in tags})
    if not regions:
        raise GeometryError("no tags in multi-label subset")
    clusters = _kmeans_assign(U, len(regions), seed)
    table = np.zeros((len(regions), clusters.max() + 1))
    ridx = {r: i for i, r in enumerate(regions)}
    for tags, c in zip(tag_sets, clusters):
        share = 1.0 / len(tags)
        for t in tags:
            table[ridx[t], c] += share
    return nmi_from_table(table)


def _knn_indices(U: np.ndarray, k: int) -> np.ndarray:
    sims = U @ U.T
    np.fill_diagonal(sims, -np.inf)
    k = min(k, len(U) - 1)
    part = np.argpartition(-sims, k - 1, axis=1)[:, :k]
    # order the k neighbors by (cosine desc, index asc) for determinism
    rows = np.arange(len(U))[:, None]
    order = np.lexsort((part, -sims[rows, part]), axis=1)
    return part[rows, order]


def knn_purity(X: np.ndarray, labels: list[str], k: int = 5) -> float:
    """Mean fraction of the k nearest labeled neighbors sharing the label."""
    U, ok = unit_rows(X)
    y = np.asarray([l for l, keep in zip(labels, ok) if keep])
    nbrs = _knn_indices(U, k)
    return float((y[nbrs] == y[:, None]).mean())


def knn_jaccard_purity(X: np.ndarray, tag_sets: list[tuple[str, ...]], k: int = 5) -> float:
    """Mean over items of the mean Jaccard overlap between the item's tag set
    and each of its k nearest neighbors' tag sets."""
    U, ok = unit_rows(X)
    tags = [frozenset(t) for t, keep in zip(tag_sets, ok) if keep]
    nbrs = _knn_indices(U, k)
    scores = []
    for i, row in enumerate(nbrs):
        s = tags[i]
        vals = [len(s & tags[j]) / len(s | tags[j]) if (s | tags[j]) else 1.0 for j in row]
        scores.append(float(np.mean(vals)))
    return float(np.mean(scores))


def label_silhouette(X: np.ndarray, labels: list[str]) -> float:
    """Cosine-distance silhouette; labels with fewer than 2 members excluded."""
    U, ok = unit_rows(X)
    y = [l for l, keep in zip(labels, ok) if keep]
    counts = Counter(y)
    keep = np.asarray([counts[l] >= 2 for l in y])
    dropped = sorted({l for l in y if counts[l] < 2})
    if dropped:
        logger.warning("silhouette: excluding singleton labels %s", dropped)
    y_kept = [l for l, k_ in zip(y, keep) if k_]
    if len(set(y_kept)) < 2:
        raise GeometryError("silhouette needs at least 2 labels with >=2 members")
    return float(silhouette_score(U[keep], y_kept, metric="cosine"))


def bootstrap_ci(
    metric, n: int, n_iter: int = 200, frac: float = 0.8, seed: int = 0
) -> tuple[float, float]:
    """2.5/97.5 percentiles of `metric` over seeded bootstrap resamples of
    size 0.8n (drawn with replacement). Iterations where the metric is
    undefined on the resample contribute nan and are ignored."""
    rng = np.random.default_rng(seed)
    m = max(1, int(round(frac * n)))
    vals = np.asarray([metric(np.sort(rng.integers(0, n, size=m))) for _ in range(n_iter)])
    lo, hi = np.nanpercentile(vals, [2.5, 97.5])
    return float(lo), float(hi)


def cluster_metrics(
    X: np.ndarray,
    labels,
    mode: str = "single",
    k: int = 5,
    seed: int = 0,
    ci_iters: int = 200,
) -> dict:
    """Label-recovery block for one labeled subset: NMI (soft NMI for
    multi-label), kNN@k purity (Jaccard purity for multi-label) and cosine
    silhouette, each with a 95% bootstrap CI."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) != len(labels) or len(X) == 0:
        raise GeometryError("labels must be nonempty and aligned with rows")

    if mode == "single":
        specs = [
            ("nmi", lambda idx: kmeans_label_nmi(X[idx], [labels[i] for i in idx], seed)),
            ("knn5_purity", lambda idx: knn_purity(X[idx], [labels[i] for i in idx], k)),
            ("silhouette", lambda idx: label_silhouette(X[idx], [labels[i] for i in idx])),
        ]
    elif mode == "multi":
        specs = [
            ("soft_nmi", lambda idx: soft_nmi(X[idx], [labels[i] for i in idx], seed)),
            ("knn5_jaccard", lambda idx: knn_jaccard_purity(X[idx], [labels[i] for i in idx], k)),
            (
                "silhouette",
                lambda idx: label_silhouette(X[idx], [sorted(labels[i])[0] for i in idx]),
            ),
        ]
    else:
        raise GeometryError(f"unknown mode {mode!r}")

    def _guarded(fn):
        def inner(idx):
            try:
                return fn(idx)
            except GeometryError:
                return np.nan  # degenerate resample (e.g. a label collapsed)

        return inner

    full = np.arange(len(X))
    out = {"n": len(X)}
    for i, (name, fn) in enumerate(specs):
        value = _guarded(fn)(full)
        if np.isnan(value):
            logger.warning("%s undefined on this labeled subset, reported as nan", name)
            out[name] = {"value": None, "ci95": [None, None]}
            continue
        lo, hi = bootstrap_ci(_guarded(fn), len(X), n_iter=ci_iters, seed=seed + i)
        out[name] = {"value": value, "ci95": [lo, hi]}
    return out


def geometry_report(model, vocab, seed: int = 0, ci_iters: int = 200) -> dict:
    """Per-model intrinsic-geometry report over ingredient rows."""
    X = model.vectors[: model.n_ingredient_rows]
    top10, top50 = pca_variance_shares(X)
    report = {
        "variant": model.meta.get("variant"),
        "n_ingredients": int(model.n_ingredient_rows),
        "isotropy": {
            "participation_ratio": participation_ratio(X),
            "avg_pairwise_cosine": avg_pairwise_cosine(X, seed=seed),
            "pca_top10_variance": top10,
            "pca_top50_variance": top50,
        },
    }

    fg_rows, fg_labels = [], []
    cu_rows, cu_tags = [], []
    for row in range(model.n_ingredient_rows):
        entry = vocab.entries[int(model.node_ids[row])]
        if entry.food_group is not None:
            fg_rows.append(row)
            fg_labels.append(entry.food_group)
        if entry.cuisine_tags:
            cu_rows.append(row)
            cu_tags.append(entry.cuisine_tags)

    if len(set(fg_labels)) >= 2:
        report["food_group"] = cluster_metrics(
            X[fg_rows], fg_labels, mode="single", seed=seed, ci_iters=ci_iters
        )
    if len({t for tags in cu_tags for t in tags}) >= 2:
        report["cuisine"] = cluster_metrics(
            X[cu_rows], cu_tags, mode="multi", seed=seed, ci_iters=ci_iters
        )
    return report
