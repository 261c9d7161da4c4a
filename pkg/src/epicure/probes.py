"""Supervised direction quality.

Continuous probes are scored by repeated 5-fold cross-validation: a ridge
direction is fit on each training split (regularization chosen by an inner
3-fold grid), test ingredients are projected onto the unit weight vector, and
Spearman rho is computed on the pooled out-of-fold projections. Cuisine
macro-regions use a one-vs-rest difference-of-means direction and report
Cohen's d of the out-of-fold projections.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .graphs import COMPOUND_CATEGORIES
from .ingest import MACRO_REGIONS, CanonicalVocabulary

logger = logging.getLogger(__name__)

MIN_PROBE_N = 10
LAMBDA_GRID = tuple(10.0**e for e in range(-3, 4))

STRATUM_BAKED_CF = "baked_in_cf"
STRATUM_HELD_CF = "held_out_cf"
STRATUM_USDA = "usda"
STRATUM_CUISINE = "cuisine"
STRATUM_OTHER = "other"


class ProbeError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeResult:
    name: str
    stratum: str
    kind: str  # "spearman_rho" | "cohens_d"
    estimate: float
    ci95: tuple[float, float]
    n: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "stratum": self.stratum,
            "kind": self.kind,
            "estimate": self.estimate,
            "ci95": list(self.ci95),
            "n": self.n,
        }


def probe_stratum(name: str) -> str:
    if name.startswith("cf_"):
        return STRATUM_BAKED_CF if name[3:] in COMPOUND_CATEGORIES else STRATUM_HELD_CF
    if name.startswith("usda_"):
        return STRATUM_USDA
    return STRATUM_OTHER


def _ridge_direction(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    d = X.shape[1]
    w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(d), Xc.T @ yc)
    norm = np.linalg.norm(w)
    if norm == 0:
        return w
    return w / norm


def _ridge_mse(X_tr, y_tr, X_va, y_va, lam) -> float:
    Xc = X_tr - X_tr.mean(axis=0)
    yc = y_tr - y_tr.mean()
    w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X_tr.shape[1]), Xc.T @ yc)
    pred = (X_va - X_tr.mean(axis=0)) @ w + y_tr.mean()
    return float(np.mean((pred - y_va) ** 2))


def _select_lambda(X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> float:
    n = len(y)
    if n < 6:
        return LAMBDA_GRID[len(LAMBDA_GRID) // 2]
    folds = np.array_split(rng.permutation(n), 3)
    best_lam, best_mse = None, np.inf
    for lam in LAMBDA_GRID:
        mses = []
        for f in folds:
            tr = np.setdiff1d(np.arange(n), f)
            if len(tr) < 2 or len(f) < 1:
                continue
            mses.append(_ridge_mse(X[tr], y[tr], X[f], y[f], lam))
        mse = float(np.mean(mses)) if mses else np.inf
        if mse < best_mse:
            best_mse, best_lam = mse, lam
    return best_lam if best_lam is not None else LAMBDA_GRID[len(LAMBDA_GRID) // 2]


def _safe_spearman(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return 0.0
    rho = spearmanr(a, b).statistic
    return float(rho) if np.isfinite(rho) else 0.0


def continuous_direction_cv(
    X: np.ndarray,
    scores: np.ndarray,
    folds: int = 5,
    repeats: int = 5,
    seed: int = 0,
) -> tuple[float, tuple[float, float], list[float]]:
    """Mean pooled out-of-fold Spearman rho over repeats, with a percentile
    CI over the per-(repeat, fold) rho values."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(scores, dtype=np.float64)
    n = len(y)
    if n < MIN_PROBE_N:
        raise ProbeError(f"need >= {MIN_PROBE_N} scored ingredients, got {n}")
    if np.all(y == y[0]):
        raise ProbeError("constant scores: rank correlation undefined")

    rng = np.random.default_rng(seed)
    per_repeat = []
    per_fold_vals = []
    for _ in range(repeats):
        order = rng.permutation(n)
        fold_idx = np.array_split(order, folds)
        proj = np.empty(n)
        for f in fold_idx:
            tr = np.setdiff1d(np.arange(n), f)
            lam = _select_lambda(X[tr], y[tr], rng)
            w = _ridge_direction(X[tr], y[tr], lam)
            proj[f] = X[f] @ w
            per_fold_vals.append(_safe_spearman(proj[f], y[f]))
        per_repeat.append(_safe_spearman(proj, y))
    estimate = float(np.mean(per_repeat))
    lo, hi = np.percentile(per_fold_vals, [2.5, 97.5])
    return estimate, (float(lo), float(hi)), per_repeat


def _cohens_d(proj: np.ndarray, positive: np.ndarray) -> float | None:
    pos, neg = proj[positive], proj[~positive]
    if len(pos) < 2 or len(neg) < 2:
        return None
    var_pooled = ((len(pos) - 1) * pos.var(ddof=1) + (len(neg) - 1) * neg.var(ddof=1)) / (
        len(pos) + len(neg) - 2
    )
    if var_pooled <= 0:
        return None
    return abs(float((pos.mean() - neg.mean()) / np.sqrt(var_pooled)))


def cuisine_direction_cv(
    X: np.ndarray,
    positive: np.ndarray,
    folds: int = 5,
    repeats: int = 5,
    seed: int = 0,
) -> tuple[float, tuple[float, float], list[float]]:
    """One-vs-rest Cohen's |d| of out-of-fold projections onto the
    difference-of-class-means direction, cross-validated like the continuous
    probes. `positive` marks region-tagged rows within the cuisine-specific
    subset."""
    X = np.asarray(X, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n = len(positive)
    if positive.sum() < MIN_PROBE_N:
        raise ProbeError(f"need >= {MIN_PROBE_N} tagged ingredients, got {int(positive.sum())}")

    rng = np.random.default_rng(seed)
    per_repeat = []
    per_fold_vals = []
    for _ in range(repeats):
        order = rng.permutation(n)
        fold_idx = np.array_split(order, folds)
        proj = np.full(n, np.nan)
        for f in fold_idx:
            tr = np.setdiff1d(np.arange(n), f)
            if positive[tr].sum() < 2 or (~positive[tr]).sum() < 2:
                logger.warning("fold skipped: fewer than 2 members in a class")
                continue
            direction = X[tr][positive[tr]].mean(axis=0) - X[tr][~positive[tr]].mean(axis=0)
            norm = np.linalg.norm(direction)
            if norm == 0:
                continue
            proj[f] = X[f] @ (direction / norm)
            d_fold = _cohens_d(proj[f], positive[f])
            if d_fold is not None:
                per_fold_vals.append(d_fold)
        seen = ~np.isnan(proj)
        d_rep = _cohens_d(proj[seen], positive[seen])
        if d_rep is not None:
            per_repeat.append(d_rep)
    if not per_repeat:
        raise ProbeError("no usable folds for region probe")
    estimate = float(np.mean(per_repeat))
    lo, hi = np.percentile(per_fold_vals if per_fold_vals else per_repeat, [2.5, 97.5])
    return estimate, (float(lo), float(hi)), per_repeat


def stratified_report(
    model,
    vocab: CanonicalVocabulary,
    folds: int = 5,
    repeats: int = 5,
    seed: int = 0,
) -> dict:
    """All probes with sufficient n, grouped by stratum, plus stratum means.

    Multi-label ingredients count as positive for each of their regions; the
    one-vs-rest negative class is the rest of the cuisine-specific subset.
    """
    X = model.vectors[: model.n_ingredient_rows]
    row_of = {int(model.node_ids[r]): r for r in range(model.n_ingredient_rows)}

    results: list[ProbeResult] = []
    for probe_i, probe in enumerate(sorted(vocab.score_names())):
        ids, vals = vocab.score_column(probe)
        rows = [(row_of[int(i)], v) for i, v in zip(ids, vals) if int(i) in row_of]
        if len(rows) < MIN_PROBE_N:
            logger.warning("probe %s skipped: only %d scored ingredients in model", probe, len(rows))
            continue
        r_idx = np.asarray([r for r, _ in rows])
        y = np.asarray([v for _, v in rows])
        try:
            est, ci, _ = continuous_direction_cv(
                X[r_idx], y, folds=folds, repeats=repeats, seed=seed + probe_i
            )
        except ProbeError as exc:
            logger.warning("probe %s skipped: %s", probe, exc)
            continue
        results.append(ProbeResult(probe, probe_stratum(probe), "spearman_rho", est, ci, len(rows)))

    specific_rows, specific_tags = [], []
    for row in range(model.n_ingredient_rows):
        entry = vocab.entries[int(model.node_ids[row])]
        if entry.cuisine_tags:
            specific_rows.append(row)
            specific_tags.append(set(entry.cuisine_tags))
    if specific_rows:
        Xc = X[np.asarray(specific_rows)]
        for region_i, region in enumerate(MACRO_REGIONS):
            positive = np.asarray([region in tags for tags in specific_tags])
            if positive.sum() < MIN_PROBE_N:
                logger.warning(
                    "region %s skipped: only %d tagged ingredients", region, int(positive.sum())
                )
                continue
            est, ci, _ = cuisine_direction_cv(
                Xc, positive, folds=folds, repeats=repeats, seed=seed + 1000 + region_i
            )
            results.append(
                ProbeResult(region, STRATUM_CUISINE, "cohens_d", est, ci, int(positive.sum()))
            )

    strata: dict[str, list[float]] = {}
    for r in results:
        strata.setdefault(r.stratum, []).append(r.estimate)
    report = {
        "variant": model.meta.get("variant"),
        "probes": [r.to_dict() for r in results],
        "stratum_means": {s: float(np.mean(v)) for s, v in sorted(strata.items())},
    }
    if not results:
        logger.warning("no probes with sufficient coverage; empty report")
    return report
