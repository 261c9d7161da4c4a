"""Query-time primitives over a trained model.

Everything here is read-only over an immutable ModelBundle: top-K cosine
pairings, closest-mode lookup, supervised pole construction, direction
blending, and rotation of a seed toward a pole by a fixed angle on the unit
sphere (cos(query, seed) == cos(angle) exactly).
"""

from __future__ import annotations

import difflib
import logging
from dataclasses import dataclass, field

import numpy as np

from .factors import Mode, ModeAtlas
from .ingest import MACRO_REGIONS, CanonicalVocabulary, normalize_name
from .sgns import EmbeddingMatrix

logger = logging.getLogger(__name__)

PARALLEL_TOL = 1e-9
MIN_POLE_POSITIVES = 5


class OperatorError(ValueError):
    """Bad query against a valid model (maps to HTTP 400)."""


class UnknownIngredientError(KeyError):
    """Seed not in the model; carries close-match suggestions (HTTP 404)."""

    def __init__(self, name: str, suggestions: list[str]):
        super().__init__(name)
        self.name = name
        self.suggestions = suggestions

    def __str__(self):
        return f"unknown ingredient {self.name!r} (close matches: {', '.join(self.suggestions) or 'none'})"


@dataclass
class ModelBundle:
    """One variant's immutable query state: embedding, atlas, vocabulary."""

    name: str
    model: EmbeddingMatrix
    vocab: CanonicalVocabulary
    atlas: ModeAtlas | None = None
    geometry_report: dict | None = None
    probes_report: dict | None = None
    unit: np.ndarray = field(init=False)
    _row_by_name: dict[str, int] = field(init=False)

    def __post_init__(self):
        X = self.model.vectors[: self.model.n_ingredient_rows]
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        self.unit = X / norms
        self._row_by_name = {
            self.model.names[r]: r for r in range(self.model.n_ingredient_rows)
        }

    @property
    def n_ingredients(self) -> int:
        return self.model.n_ingredient_rows

    def ingredient_names(self) -> list[str]:
        return self.model.names[: self.model.n_ingredient_rows]

    def row_of_name(self, name: str) -> int:
        key = normalize_name(name)
        row = self._row_by_name.get(key)
        if row is None:
            close = difflib.get_close_matches(key, self._row_by_name.keys(), n=5, cutoff=0.5)
            prefixed = [n for n in sorted(self._row_by_name) if n.startswith(key)][:5]
            seen: dict[str, None] = {}
            for s in prefixed + close:
                seen.setdefault(s, None)
            raise UnknownIngredientError(name, list(seen)[:5])
        return row

    def id_of_row(self, row: int) -> int:
        return int(self.model.node_ids[row])

    def row_of_id(self, node_id: int) -> int | None:
        row = self.model.row_of(node_id)
        if row is None or row >= self.model.n_ingredient_rows:
            return None
        return row


def ranked_neighbors(bundle: ModelBundle, query: np.ndarray, k: int,
                     exclude_rows: tuple[int, ...] = ()) -> list[tuple[str, float]]:
    """Top-k ingredient rows by cosine against a query vector, ties broken by
    row index; uses an argpartition shortlist that matches a full scan."""
    sims = bundle.unit @ np.asarray(query, dtype=np.float64)
    for r in exclude_rows:
        sims[r] = -np.inf
    n = len(sims)
    k_eff = min(k, n - len(set(exclude_rows)))
    if k_eff <= 0:
        return []
    shortlist = np.argpartition(-sims, k_eff - 1)[:k_eff]
    # widen to every row tied with the shortlist floor so boundary ties
    # resolve by row index exactly as a full scan would
    floor = sims[shortlist].min()
    cand = np.flatnonzero(np.isfinite(sims) & (sims >= floor))
    order = np.lexsort((cand, -sims[cand]))
    top = cand[order][:k_eff]
    return [(bundle.model.names[r], float(sims[r])) for r in top]


def nearest_neighbors(bundle: ModelBundle, seed: str, k: int = 5) -> list[tuple[str, float]]:
    """Top-k cosine pairings for a seed ingredient, seed excluded, compound
    rows never considered."""
    row = bundle.row_of_name(seed)
    return ranked_neighbors(bundle, bundle.unit[row], k, exclude_rows=(row,))


def closest_mode(bundle: ModelBundle, seed: str, include_supervised: bool = False) -> tuple[Mode, float]:
    """The atlas mode whose pole is cosine-closest to the seed; emergent
    (factor-sourced) modes only unless include_supervised is set. Ties break
    by (source, mode_id)."""
    if bundle.atlas is None or not bundle.atlas.modes:
        raise OperatorError(f"model {bundle.name!r} has no mode atlas")
    modes = bundle.atlas.modes if include_supervised else bundle.atlas.emergent_modes()
    if not modes:
        raise OperatorError("atlas has no emergent modes")
    row = bundle.row_of_name(seed)
    q = bundle.unit[row]
    best: tuple[float, str, int, Mode] | None = None
    for m in modes:
        cos = float(q @ m.pole)
        key = (-cos, m.source, m.mode_id)
        if best is None or key < (-best[0], best[1], best[2]):
            best = (cos, m.source, m.mode_id, m)
    return best[3], best[0]


def _mean_of_rows(bundle: ModelBundle, rows: list[int]) -> np.ndarray:
    return bundle.model.vectors[rows].mean(axis=0)


def supervised_pole(bundle: ModelBundle, kind: str, value: str = "", style: str = "diff") -> np.ndarray:
    """Unit pole from labeled tags.

    cuisine:<region> — tagged vs the rest of the cuisine-specific subset;
    food_group:<group> — that group vs other grouped ingredients;
    nova:processed — class 4 vs classes 1-2;
    score:<probe> — top quartile vs bottom quartile of the scored subset.
    style="mean" uses the positive mean alone instead of the difference.
    """
    vocab = bundle.vocab
    entry_of = lambda row: vocab.entries[bundle.id_of_row(row)]
    rows = range(bundle.n_ingredients)

    if kind == "cuisine":
        region = normalize_name(value)
        if region not in MACRO_REGIONS:
            raise OperatorError(f"unknown cuisine region {value!r}")
        labeled = [r for r in rows if entry_of(r).cuisine_tags]
        pos = [r for r in labeled if region in entry_of(r).cuisine_tags]
        neg = [r for r in labeled if region not in entry_of(r).cuisine_tags]
    elif kind == "food_group":
        group = normalize_name(value)
        labeled = [r for r in rows if entry_of(r).food_group is not None]
        pos = [r for r in labeled if entry_of(r).food_group == group]
        neg = [r for r in labeled if entry_of(r).food_group != group]
    elif kind == "nova":
        if value not in ("", "processed"):
            raise OperatorError("nova pole supports only 'processed' (class 4 vs classes 1-2)")
        pos = [r for r in rows if entry_of(r).nova_class == 4]
        neg = [r for r in rows if entry_of(r).nova_class in (1, 2)]
    elif kind == "score":
        scored = [(r, entry_of(r).continuous_scores[value]) for r in rows
                  if value in entry_of(r).continuous_scores]
        if len(scored) < 2 * MIN_POLE_POSITIVES:
            raise OperatorError(f"probe {value!r} has only {len(scored)} scored ingredients in model")
        vals = np.asarray([v for _, v in scored])
        hi, lo = np.quantile(vals, 0.75), np.quantile(vals, 0.25)
        pos = [r for (r, v) in scored if v >= hi]
        neg = [r for (r, v) in scored if v <= lo]
    else:
        raise OperatorError(f"unknown supervised pole kind {kind!r}")

    if len(pos) < MIN_POLE_POSITIVES:
        raise OperatorError(
            f"pole {kind}:{value} has {len(pos)} positives, needs >= {MIN_POLE_POSITIVES}"
        )
    direction = _mean_of_rows(bundle, pos)
    if style == "diff":
        if not neg:
            raise OperatorError(f"pole {kind}:{value} has an empty complement")
        direction = direction - _mean_of_rows(bundle, neg)
    elif style != "mean":
        raise OperatorError(f"unknown pole style {style!r}")
    norm = np.linalg.norm(direction)
    if norm < PARALLEL_TOL:
        raise OperatorError(f"pole {kind}:{value} is numerically zero")
    return direction / norm


def blend_directions(poles: list[np.ndarray]) -> np.ndarray:
    """Unit-normalized arithmetic mean of unit input directions."""
    if len(poles) < 2:
        raise OperatorError("blend needs at least 2 directions")
    units = []
    for p in poles:
        norm = np.linalg.norm(p)
        if norm == 0:
            raise OperatorError("cannot blend a zero direction")
        units.append(np.asarray(p, dtype=np.float64) / norm)
    mean = np.mean(units, axis=0)
    norm = np.linalg.norm(mean)
    if norm < PARALLEL_TOL:
        raise OperatorError("blend degenerate: directions cancel (antipodal targets)")
    return mean / norm


def rotate_toward(seed_unit: np.ndarray, target: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a unit seed toward a target by angle_deg on the unit sphere.

    The rotated query is s*cos(theta) + d_perp*sin(theta) where d_perp is the
    unit component of the target orthogonal to the seed, so the query keeps
    unit norm and its cosine to the seed is exactly cos(theta). angle 0
    returns the seed itself.
    """
    if angle_deg == 0.0:
        return seed_unit
    d = np.asarray(target, dtype=np.float64)
    d_perp = d - (d @ seed_unit) * seed_unit
    norm = np.linalg.norm(d_perp)
    if norm < PARALLEL_TOL:
        if d @ seed_unit < 0:
            raise OperatorError("target is antipodal to the seed; rotation undefined")
        raise OperatorError("target indistinguishable from seed; rotation undefined")
    if angle_deg == 90.0:
        return d_perp / norm  # exact endpoint (cos(pi/2) is not 0.0 in floats)
    theta = np.deg2rad(angle_deg)
    return seed_unit * np.cos(theta) + (d_perp / norm) * np.sin(theta)


def slerp_rotate(
    bundle: ModelBundle, seed: str, target: np.ndarray, angle_deg: float, k: int = 5
) -> tuple[list[tuple[str, float]], np.ndarray]:
    """Neighbors of the rotated query, seed excluded. Returns (ranked, query)."""
    if not 0.0 <= angle_deg <= 90.0:
        raise OperatorError(f"angle {angle_deg} outside [0, 90]")
    row = bundle.row_of_name(seed)
    q = rotate_toward(bundle.unit[row], target, angle_deg)
    return ranked_neighbors(bundle, q, k, exclude_rows=(row,)), q


def resolve_target(bundle: ModelBundle, target: dict) -> tuple[np.ndarray, dict]:
    """Resolve a rotation-target spec into a unit pole.

    Specs: {"kind": "supervised", "spec": "cuisine:south_asian"},
    {"kind": "mode", "source": "F_3", "mode_id": 2},
    {"kind": "blend", "parts": [<spec>, ...]}.
    Returns (pole, resolved-description dict).
    """
    kind = target.get("kind")
    if kind == "supervised":
        spec = target.get("spec", "")
        if ":" not in spec:
            raise OperatorError(f"supervised target spec must be kind:value, got {spec!r}")
        pole_kind, value = spec.split(":", 1)
        pole = supervised_pole(bundle, pole_kind, value, style=target.get("style", "diff"))
        return pole, {"kind": "supervised", "spec": spec}
    if kind == "mode":
        if bundle.atlas is None:
            raise OperatorError(f"model {bundle.name!r} has no mode atlas")
        source, mode_id = target.get("source"), int(target.get("mode_id", -1))
        mode = bundle.atlas.find(source, mode_id)
        if mode is None:
            raise OperatorError(f"mode {source}/M{mode_id} not in atlas")
        return mode.pole, {"kind": "mode", "source": source, "mode_id": mode_id, "label": mode.label}
    if kind == "blend":
        parts = target.get("parts", [])
        resolved = [resolve_target(bundle, p) for p in parts]
        pole = blend_directions([p for p, _ in resolved])
        return pole, {"kind": "blend", "parts": [d for _, d in resolved]}
    raise OperatorError(f"unknown target kind {kind!r}")


def brute_force_neighbors(bundle: ModelBundle, query: np.ndarray, k: int,
                          exclude_rows: tuple[int, ...] = ()) -> list[tuple[str, float]]:
    """Exhaustive O(V) oracle with the same (cosine desc, row asc) order;
    kept alongside the accelerated path so tests can compare them."""
    sims = []
    q = np.asarray(query, dtype=np.float64)
    for r in range(bundle.n_ingredients):
        if r in exclude_rows:
            continue
        sims.append((-float(bundle.unit[r] @ q), r))
    sims.sort()
    return [(bundle.model.names[r], -neg) for neg, r in sims[:k]]
