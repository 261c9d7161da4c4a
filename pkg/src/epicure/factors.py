"""Emergent geometry: stable independent factors and mixture modes.

Factors are independent components extracted from the food-group-residualized
embedding, kept only when reproducible across seeds (Hungarian-matched) and
across disjoint row halves. Each factor's top-quartile ingredients, and the
high-quartile of every supervised property, are partitioned into
Gaussian-mixture modes (BIC-selected K with a six-member floor) summarized by
a unit-mean pole vector and a coherence score against a random-pair baseline.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.decomposition import FastICA
from sklearn.mixture import GaussianMixture

from .artifacts import read_json, write_json
from .ingest import CanonicalVocabulary
from .sgns import EmbeddingMatrix

logger = logging.getLogger(__name__)

SPLIT_HALF_THRESHOLD = 0.6
MIN_MODE_MEMBERS = 6
MIN_QUARTILE_MEMBERS = 18
K_RANGE = (3, 4, 5, 6, 7)
GMM_RESTARTS = 20
VARIANCE_FLOOR = 1e-6
BASELINE_PAIRS = 10_000


class FactorError(ValueError):
    pass


def residualize(X: np.ndarray, groups: list[str | None]) -> np.ndarray:
    """Remove group structure: labeled rows are centered on their group mean
    (the least-squares fit of each coordinate on one-hot group indicators
    plus intercept), unlabeled rows on the grand mean of labeled rows."""
    X = np.asarray(X, dtype=np.float64)
    if len(groups) != len(X):
        raise FactorError("groups must align with rows")
    labeled = [i for i, g in enumerate(groups) if g is not None]
    if not labeled:
        raise FactorError("no labeled rows to residualize against")
    grand = X[labeled].mean(axis=0)
    out = X - grand
    by_group: dict[str, list[int]] = {}
    for i in labeled:
        by_group.setdefault(groups[i], []).append(i)
    for rows in by_group.values():
        out[rows] = X[rows] - X[rows].mean(axis=0)
    return out


def match_components(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hungarian assignment of B's rows to A's rows maximizing |cosine|.
    Returns (col_of_row, matched_abs_cos) indexed by A's rows."""
    An = A / np.linalg.norm(A, axis=1, keepdims=True)
    Bn = B / np.linalg.norm(B, axis=1, keepdims=True)
    C = np.abs(An @ Bn.T)
    rows, cols = linear_sum_assignment(-C)
    col_of_row = np.empty(len(A), dtype=np.int64)
    matched = np.empty(len(A))
    col_of_row[rows] = cols
    matched[rows] = C[rows, cols]
    return col_of_row, matched


@dataclass
class FactorSet:
    components: np.ndarray  # (n_components, dim) unit rows, stability-descending
    stability: np.ndarray  # mean matched |cos| against the other seeds
    split_half: np.ndarray  # |cos| between half-fit counterparts
    kept: np.ndarray  # split_half > threshold

    @property
    def n_kept(self) -> int:
        return int(self.kept.sum())


ICA_TOL = 5e-3  # per-fit tolerance is loose on purpose: reproducibility is
# enforced by the cross-seed matching and the split-half filter, and tighter
# tolerances stall on strongly anisotropic embeddings whose whitened tail
# dimensions sit in a near-degenerate eigenvalue plateau


def _fit_ica(
    X: np.ndarray, n_components: int, random_state: int, max_iter: int
) -> tuple[np.ndarray | None, bool]:
    """Returns (unit component rows or None on failure, converged flag)."""
    ica = FastICA(
        n_components=n_components,
        algorithm="parallel",
        whiten="unit-variance",
        fun="logcosh",
        max_iter=max_iter,
        tol=ICA_TOL,
        random_state=random_state,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            ica.fit(X)
        except (ValueError, np.linalg.LinAlgError):
            return None, False
    comps = ica.components_
    if not np.isfinite(comps).all():
        return None, False
    return comps / np.linalg.norm(comps, axis=1, keepdims=True), ica.n_iter_ < max_iter


def fastica_multiseed(
    X_resid: np.ndarray,
    n_components: int = 20,
    seeds: int = 10,
    base_seed: int = 0,
    max_iter: int = 1000,
) -> FactorSet:
    """Multi-seed-stable independent components of the residualized embedding.

    Components are matched across seeds by Hungarian assignment on |cosine|;
    the seed with the highest mean matched cosine against the others is kept.
    Per-factor stability is that mean; split-half stability is the |cosine|
    between counterparts fit on two disjoint random halves of the rows. The
    set is sorted stability-descending and factors are kept only above the
    split-half threshold. Components are oriented so projection skewness is
    positive.
    """
    X_resid = np.asarray(X_resid, dtype=np.float64)
    if X_resid.shape[0] < 10 * n_components:
        raise FactorError(
            f"need at least {10 * n_components} rows for {n_components} components, got {X_resid.shape[0]}"
        )

    runs, all_fits = [], []
    for s in range(seeds):
        comps, converged = _fit_ica(X_resid, n_components, base_seed + s, max_iter)
        if comps is None:
            logger.warning("ICA seed %d produced no usable fit, excluded", s)
            continue
        all_fits.append(comps)
        if not converged:
            logger.warning("ICA seed %d did not converge in %d iterations, excluded", s, max_iter)
            continue
        runs.append(comps)
    if len(runs) < 3:
        # structureless (e.g. near-Gaussian) data rarely converges at all; the
        # stability protocol still needs fits to measure, so fall back to the
        # final states rather than refusing — split-half then drops the junk
        if len(all_fits) < 3:
            raise FactorError(f"only {len(all_fits)} of {seeds} ICA seeds produced fits, need >= 3")
        logger.warning(
            "only %d of %d ICA seeds converged; using all %d final fits (low-confidence factors)",
            len(runs), seeds, len(all_fits),
        )
        runs = all_fits

    n_runs = len(runs)
    pair_matched = np.zeros((n_runs, n_runs, n_components))
    for a in range(n_runs):
        for b in range(n_runs):
            if a == b:
                continue
            _, matched = match_components(runs[a], runs[b])
            pair_matched[a, b] = matched
    mean_score = pair_matched.sum(axis=(1, 2)) / ((n_runs - 1) * n_components)
    best = int(np.argmax(mean_score))
    components = runs[best].copy()
    stability = pair_matched[best].sum(axis=0) / (n_runs - 1)

    rng = np.random.default_rng(base_seed)
    perm = rng.permutation(X_resid.shape[0])
    half_a, half_b = perm[: len(perm) // 2], perm[len(perm) // 2 :]
    comps_a, conv_a = _fit_ica(X_resid[half_a], n_components, base_seed + 10_001, max_iter)
    comps_b, conv_b = _fit_ica(X_resid[half_b], n_components, base_seed + 10_002, max_iter)
    if not (conv_a and conv_b):
        logger.warning("split-half ICA fit did not converge; stability values may be pessimistic")
    split_half = np.zeros(n_components)
    if comps_a is not None and comps_b is not None:
        map_a, _ = match_components(components, comps_a)
        map_b, _ = match_components(components, comps_b)
        for f in range(n_components):
            split_half[f] = abs(float(comps_a[map_a[f]] @ comps_b[map_b[f]]))

    proj = X_resid @ components.T
    centered = proj - proj.mean(axis=0)
    skew = (centered**3).mean(axis=0)
    components[skew < 0] *= -1.0

    order = np.lexsort((np.arange(n_components), -stability))
    return FactorSet(
        components=components[order],
        stability=stability[order],
        split_half=split_half[order],
        kept=split_half[order] > SPLIT_HALF_THRESHOLD,
    )


@dataclass
class Mode:
    source: str
    mode_id: int
    member_ids: list[int]  # ingredient ids
    pole: np.ndarray  # unit vector in embedding space
    coherence: float = 0.0  # mean member-to-pole cosine
    pairwise_coherence: float = 0.0  # mean within-mode pairwise cosine
    label: str = ""


@dataclass
class ModeAtlas:
    variant: str
    modes: list[Mode]
    baseline: float  # random-pair mean cosine of the parent model
    factor_stability: list[float] = field(default_factory=list)
    factor_split_half: list[float] = field(default_factory=list)
    factor_kept: list[bool] = field(default_factory=list)

    def emergent_modes(self) -> list[Mode]:
        return [m for m in self.modes if m.source.startswith("F_")]

    def find(self, source: str, mode_id: int) -> Mode | None:
        for m in self.modes:
            if m.source == source and m.mode_id == mode_id:
                return m
        return None


def _pca_coords(X: np.ndarray, n_dims: int) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    return Xc @ vt[:n_dims].T


def _gmm_fit(coords: np.ndarray, k: int, seed: int) -> tuple[GaussianMixture, np.ndarray, float]:
    gm = GaussianMixture(
        n_components=k,
        covariance_type="diag",
        n_init=GMM_RESTARTS,
        random_state=seed,
        reg_covar=VARIANCE_FLOOR,
        max_iter=200,
    )
    assign = gm.fit_predict(coords)
    return gm, assign, float(gm.bic(coords))


def modes_from_members(
    X: np.ndarray,
    member_rows: np.ndarray,
    member_ids: np.ndarray,
    source: str,
    seed: int,
    pca_dim: int | None = None,
    min_members: int = MIN_MODE_MEMBERS,
) -> list[Mode]:
    """Partition a member set into Gaussian-mixture modes in PCA-reduced
    space; BIC selects K among fits where every component keeps at least
    `min_members` hard-assigned members, falling back to dropping undersized
    components and finally to a single whole-set mode.

    member_rows index X; member_ids[k] is the ingredient id of member_rows[k].
    """
    members = np.asarray(member_rows)
    member_ids = np.asarray(member_ids)
    if len(member_ids) != len(members):
        raise FactorError("member_ids must align with member_rows")
    sub = X[members]
    if pca_dim is None:
        pca_dim = min(10, len(members) - 1, X.shape[1])
    coords = _pca_coords(sub, pca_dim)

    fits = {}
    for k in K_RANGE:
        if k > len(members):
            continue
        _, assign, bic = _gmm_fit(coords, k, seed)
        counts = np.bincount(assign, minlength=k)
        fits[k] = (assign, bic, counts)

    chosen_assign = None
    valid = [(bic, k) for k, (_, bic, counts) in fits.items() if (counts >= min_members).all()]
    if valid:
        _, k_star = min(valid)
        chosen_assign = fits[k_star][0]
        keep_comps = np.arange(k_star)
    else:
        chosen_assign = None
        for k in sorted(fits, reverse=True):
            assign, _, counts = fits[k]
            ok = np.flatnonzero(counts >= min_members)
            if len(ok) >= 2:
                chosen_assign, keep_comps = assign, ok
                break

    modes: list[Mode] = []
    if chosen_assign is None:
        groups = [np.arange(len(members))]
    else:
        groups = [np.flatnonzero(chosen_assign == c) for c in keep_comps]

    for local in groups:
        rows = members[local]
        mean_vec = X[rows].mean(axis=0)
        norm = np.linalg.norm(mean_vec)
        if norm == 0:
            logger.warning("mode in %s has zero-mean member vectors, skipped", source)
            continue
        modes.append(
            Mode(
                source=source,
                mode_id=len(modes),
                member_ids=[int(i) for i in member_ids[local]],
                pole=mean_vec / norm,
            )
        )
    return modes


def discover_modes(
    X: np.ndarray,
    projections: np.ndarray,
    member_ids: np.ndarray,
    source: str,
    seed: int,
    pca_dim: int | None = None,
    min_quartile: int = MIN_QUARTILE_MEMBERS,
) -> list[Mode]:
    """Modes of the top-quartile rows by projection value."""
    proj = np.asarray(projections, dtype=np.float64)
    thr = np.quantile(proj, 0.75)
    top = np.flatnonzero(proj >= thr)
    if len(top) < min_quartile:
        logger.warning("source %s skipped: quartile set has %d < %d members", source, len(top), min_quartile)
        return []
    return modes_from_members(X, top, np.asarray(member_ids)[top], source, seed, pca_dim=pca_dim)


def random_pair_baseline(X: np.ndarray, n_pairs: int = BASELINE_PAIRS, seed: int = 0) -> float:
    U = X / np.linalg.norm(X, axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    n = len(U)
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n - 1, size=n_pairs)
    j[j >= i] += 1
    return float(np.einsum("nd,nd->n", U[i], U[j]).mean())


def score_mode_coherence(atlas: ModeAtlas, X: np.ndarray, row_of: dict[int, int],
                         n_baseline_pairs: int = BASELINE_PAIRS, seed: int = 0) -> ModeAtlas:
    """Fill per-mode coherence (mean member-to-pole cosine, primary) and the
    within-mode mean pairwise cosine (secondary), plus the random-pair
    baseline of the parent model."""
    for mode in atlas.modes:
        rows = [row_of[i] for i in mode.member_ids]
        vecs = X[rows]
        units = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
        mode.coherence = float((units @ mode.pole).mean())
        gram = units @ units.T
        n = len(rows)
        mode.pairwise_coherence = 1.0 if n < 2 else float((gram.sum() - n) / (n * (n - 1)))
    atlas.baseline = random_pair_baseline(X, n_baseline_pairs, seed)
    return atlas


def _default_label(mode: Mode, X: np.ndarray, row_of: dict[int, int], names_of: dict[int, str]) -> str:
    rows = np.asarray([row_of[i] for i in mode.member_ids])
    units = X[rows] / np.linalg.norm(X[rows], axis=1, keepdims=True)
    sims = units @ mode.pole
    top = np.asarray(mode.member_ids)[np.lexsort((rows, -sims))[:3]]
    return ", ".join(names_of[int(i)] for i in top)


def build_atlas(
    model: EmbeddingMatrix,
    vocab: CanonicalVocabulary,
    n_components: int = 20,
    seeds: int = 10,
    seed: int = 0,
    labels: dict[str, str] | None = None,
) -> ModeAtlas:
    """Factor and property modes for one trained model.

    Emergent sources are the kept factors (projections of the residualized
    embedding); supervised sources are the NOVA class, every continuous probe
    score, and food-group binaries (label membership standing in for the
    high-quartile).
    """
    X = model.vectors[: model.n_ingredient_rows]
    ids = model.node_ids[: model.n_ingredient_rows].astype(np.int64)
    row_of = {int(node_id): r for r, node_id in enumerate(ids)}
    names_of = {int(i): vocab.name_of(int(i)) for i in ids}
    groups = [vocab.entries[int(i)].food_group for i in ids]

    X_resid = residualize(X, groups)
    factors = fastica_multiseed(X_resid, n_components=n_components, seeds=seeds, base_seed=seed)

    modes: list[Mode] = []
    for f in range(len(factors.components)):
        if not factors.kept[f]:
            continue
        proj = X_resid @ factors.components[f]
        modes.extend(discover_modes(X, proj, ids, f"F_{f}", seed=seed + 17 * f))

    nova_rows = np.asarray([r for r, i in enumerate(ids) if vocab.entries[int(i)].nova_class is not None])
    if len(nova_rows) >= MIN_QUARTILE_MEMBERS:
        nova_vals = np.asarray([vocab.entries[int(ids[r])].nova_class for r in nova_rows], dtype=float)
        modes.extend(
            discover_modes(X[nova_rows], nova_vals, ids[nova_rows], "nova", seed=seed + 101)
        )

    for probe_i, probe in enumerate(sorted(vocab.score_names())):
        p_ids, p_vals = vocab.score_column(probe)
        keep = [k for k, i in enumerate(p_ids) if int(i) in row_of]
        if len(keep) < MIN_QUARTILE_MEMBERS:
            continue
        rows = np.asarray([row_of[int(p_ids[k])] for k in keep])
        modes.extend(
            discover_modes(X[rows], p_vals[keep], ids[rows], probe, seed=seed + 211 + probe_i)
        )

    fg_values = sorted({g for g in groups if g is not None})
    for g_i, g in enumerate(fg_values):
        rows = np.flatnonzero([grp == g for grp in groups])
        if len(rows) < MIN_QUARTILE_MEMBERS:
            continue
        modes.extend(
            modes_from_members(X, rows, ids[rows], f"fg_{g}", seed=seed + 307 + g_i)
        )

    atlas = ModeAtlas(
        variant=model.meta.get("variant", ""),
        modes=modes,
        baseline=0.0,
        factor_stability=[float(v) for v in factors.stability],
        factor_split_half=[float(v) for v in factors.split_half],
        factor_kept=[bool(v) for v in factors.kept],
    )
    score_mode_coherence(atlas, X, row_of, seed=seed)
    labels = labels or {}
    for mode in atlas.modes:
        mode.label = labels.get(f"{mode.source}/M{mode.mode_id}") or _default_label(
            mode, X, row_of, names_of
        )
    logger.info(
        "atlas for %s: %d modes (%d emergent) over %d sources, baseline %.3f",
        atlas.variant,
        len(atlas.modes),
        len(atlas.emergent_modes()),
        len({m.source for m in atlas.modes}),
        atlas.baseline,
    )
    return atlas


def save_atlas(atlas: ModeAtlas, path: str | Path) -> None:
    write_json(
        path,
        {
            "variant": atlas.variant,
            "baseline": atlas.baseline,
            "factors": {
                "stability": atlas.factor_stability,
                "split_half": atlas.factor_split_half,
                "kept": atlas.factor_kept,
            },
            "modes": [
                {
                    "source": m.source,
                    "mode_id": m.mode_id,
                    "label": m.label,
                    "member_ids": m.member_ids,
                    "pole": [float(v) for v in m.pole],
                    "coherence": m.coherence,
                    "pairwise_coherence": m.pairwise_coherence,
                }
                for m in atlas.modes
            ],
        },
    )


def load_atlas(path: str | Path) -> ModeAtlas:
    data = read_json(path)
    modes = [
        Mode(
            source=m["source"],
            mode_id=m["mode_id"],
            member_ids=[int(i) for i in m["member_ids"]],
            pole=np.asarray(m["pole"], dtype=np.float64),
            coherence=m["coherence"],
            pairwise_coherence=m["pairwise_coherence"],
            label=m["label"],
        )
        for m in data["modes"]
    ]
    return ModeAtlas(
        variant=data["variant"],
        modes=modes,
        baseline=data["baseline"],
        factor_stability=data["factors"]["stability"],
        factor_split_half=data["factors"]["split_half"],
        factor_kept=data["factors"]["kept"],
    )
