"""Role-constrained random walk generation for the three schema variants.

A walk template is a short cyclic pattern of node roles (ingredient I,
chemical hub H, non-hub N, or typed compound C[x]); at step position p the
walker must move to a neighbor whose role matches pattern[p % len(pattern)],
drawn with probability proportional to edge weight, truncating when no
neighbor conforms. The three variants differ only in which templates each
round samples: the co-occurrence schema emits one pure I-I template, the
blended schema adds repeated I-I templates on top of the compound metapaths,
and the chemistry schema drops the I-I templates entirely.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .artifacts import read_blob, write_blob, write_json
from .graphs import COMPOUND_CATEGORIES, TypedGraph

logger = logging.getLogger(__name__)

VARIANTS = ("cooc", "core", "chem")
N_TYPES = len(COMPOUND_CATEGORIES)
N_CROSS_TEMPLATES = 2 * N_TYPES

# role buckets in neighbor ordering: 0 = hub, 1 = non-hub, 2+t = compound type t
_BUCKET_HUB = 0
_BUCKET_NONHUB = 1
N_BUCKETS = 2 + N_TYPES

KIND_PURE_II = "pure_ii"
KIND_WITHIN = "within_type"
KIND_VIA = "via_compound"
KIND_CROSS = "cross_type"
KIND_IDS = {KIND_PURE_II: 0, KIND_WITHIN: 1, KIND_VIA: 2, KIND_CROSS: 3}
KIND_NAMES = {v: k for k, v in KIND_IDS.items()}
_NO_TYPE = 255


class WalkError(ValueError):
    pass


@dataclass(frozen=True)
class WalkSchema:
    variant: str
    ii_repeat: int = 0
    n_types: int = N_TYPES
    walks_per_node: int = 100
    walk_length: int = 50
    rng_seed: int = 42

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise WalkError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.variant == "chem" and self.ii_repeat != 0:
            raise WalkError("chem schema requires ii_repeat = 0")
        if self.variant == "core" and self.ii_repeat < 1:
            raise WalkError("core schema requires ii_repeat >= 1")
        if self.walks_per_node < 1 or self.walk_length < 1:
            raise WalkError("walks_per_node and walk_length must be positive")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "ii_repeat": self.ii_repeat,
            "n_types": self.n_types,
            "walks_per_node": self.walks_per_node,
            "walk_length": self.walk_length,
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True)
class WalkTemplate:
    kind: str
    type_x: int | None = None
    type_y: int | None = None

    def pattern(self) -> list[tuple[int, int]]:
        """Cyclic role pattern as (lo, hi) bucket bounds per position."""
        ing = (0, 2)
        hub = (_BUCKET_HUB, _BUCKET_HUB + 1)
        non = (_BUCKET_NONHUB, _BUCKET_NONHUB + 1)
        if self.kind == KIND_PURE_II:
            return [ing, ing]
        cx = (2 + self.type_x, 3 + self.type_x)
        if self.kind == KIND_WITHIN:
            return [hub, cx, hub]
        if self.kind == KIND_VIA:
            return [non, hub, cx, hub, non]
        cy = (2 + self.type_y, 3 + self.type_y)
        return [cx, hub, non, hub, cy]

    def roles(self) -> list[str]:
        names = {(0, 2): "I", (0, 1): "H", (1, 2): "N"}
        out = []
        for lo, hi in self.pattern():
            out.append(names.get((lo, hi), f"C[{COMPOUND_CATEGORIES[lo - 2]}]"))
        return out


def _repair_coverage(xs: np.ndarray, ys: np.ndarray, n_types: int) -> tuple[np.ndarray, np.ndarray]:
    """Adjust sampled (x, y) cross-type pairs so every type appears as both
    source and target, changing as few slots as possible."""
    xs, ys = xs.copy(), ys.copy()
    for axis_vals, other_vals in ((xs, ys), (ys, xs)):
        counts = np.bincount(axis_vals, minlength=n_types)
        for missing in range(n_types):
            if counts[missing] > 0:
                continue
            placed = False
            for i in range(len(axis_vals)):
                if counts[axis_vals[i]] > 1 and other_vals[i] != missing:
                    counts[axis_vals[i]] -= 1
                    axis_vals[i] = missing
                    counts[missing] += 1
                    placed = True
                    break
            if not placed:
                return xs, ys  # caller falls back to the deterministic cover
    return xs, ys


def _covering(xs: np.ndarray, ys: np.ndarray, n_types: int) -> bool:
    return (
        len(np.unique(xs)) == n_types
        and len(np.unique(ys)) == n_types
        and bool(np.all(xs != ys))
    )


def sample_round_templates(schema: WalkSchema, rng: np.random.Generator) -> list[WalkTemplate]:
    """Template set for one walk round.

    Co-occurrence schema: a single pure I-I template. Otherwise: one
    within-type and one via-compound template per type, plus 2n sampled
    cross-type pairs repaired so every type occurs at least once as source
    and once as target, plus ii_repeat pure I-I templates.
    """
    if schema.variant == "cooc":
        return [WalkTemplate(KIND_PURE_II)]

    n = schema.n_types
    templates = [WalkTemplate(KIND_WITHIN, t) for t in range(n)]
    templates += [WalkTemplate(KIND_VIA, t) for t in range(n)]

    xs = rng.integers(0, n, size=N_CROSS_TEMPLATES).astype(np.int64)
    ys = (xs + 1 + rng.integers(0, n - 1, size=N_CROSS_TEMPLATES)) % n  # y != x by construction
    xs, ys = _repair_coverage(xs, ys, n)
    if not _covering(xs, ys, n):
        # provably valid cover: each type twice as source, shifted targets
        xs = np.concatenate([np.arange(n), np.arange(n)])
        shift = 1 + int(rng.integers(0, n - 1))
        ys = np.concatenate([(np.arange(n) + shift) % n, (np.arange(n) + n - shift) % n])
    templates += [WalkTemplate(KIND_CROSS, int(x), int(y)) for x, y in zip(xs, ys)]

    templates += [WalkTemplate(KIND_PURE_II) for _ in range(schema.ii_repeat)]
    return templates


@dataclass
class WalkIndex:
    """Bucketed CSR adjacency shared by both walk kernels."""

    n_ingredients: int
    n_compounds: int
    node_bucket: np.ndarray  # int32 per node
    indptr: np.ndarray  # int64 [n_nodes + 1]
    nbr: np.ndarray  # int32, neighbors sorted by (bucket, id) within each node
    cumw: np.ndarray  # float64 inclusive prefix weights within each node slice
    bucket_starts: np.ndarray  # int64 [n_nodes, N_BUCKETS + 1]

    @property
    def n_nodes(self) -> int:
        return self.n_ingredients + self.n_compounds


def build_walk_index(graph: TypedGraph) -> WalkIndex:
    V, C = graph.n_ingredients, graph.n_compounds
    n = V + C
    cat_idx = {c: i for i, c in enumerate(COMPOUND_CATEGORIES)}
    node_bucket = np.empty(n, dtype=np.int32)
    node_bucket[:V] = np.where(graph.hub_flags, _BUCKET_HUB, _BUCKET_NONHUB)
    for j, cat in enumerate(graph.compound_categories):
        node_bucket[V + j] = 2 + cat_idx[cat]

    comp_nodes = graph.ic_comp.astype(np.int64) + V
    src = np.concatenate([graph.ii_i, graph.ii_j, graph.ic_ing, comp_nodes]).astype(np.int64)
    dst = np.concatenate([graph.ii_j, graph.ii_i, comp_nodes, graph.ic_ing]).astype(np.int64)
    wts = np.concatenate(
        [graph.ii_w, graph.ii_w, np.ones(len(graph.ic_ing)), np.ones(len(graph.ic_ing))]
    ).astype(np.float64)

    order = np.lexsort((dst, node_bucket[dst], src))
    src, dst, wts = src[order], dst[order], wts[order]
    indptr = np.searchsorted(src, np.arange(n + 1)).astype(np.int64)

    cumw = np.empty_like(wts)
    bucket_starts = np.empty((n, N_BUCKETS + 1), dtype=np.int64)
    bucket_range = np.arange(N_BUCKETS + 1)
    for node in range(n):
        s, e = indptr[node], indptr[node + 1]
        cumw[s:e] = np.cumsum(wts[s:e])
        bucket_starts[node] = s + np.searchsorted(node_bucket[dst[s:e]], bucket_range)

    return WalkIndex(
        n_ingredients=V,
        n_compounds=C,
        node_bucket=node_bucket,
        indptr=indptr,
        nbr=dst.astype(np.int32),
        cumw=cumw,
        bucket_starts=bucket_starts,
    )


@dataclass
class WalkCorpus:
    """Flat token storage: walk w is tokens[offsets[w]:offsets[w+1]]."""

    tokens: np.ndarray  # int32
    offsets: np.ndarray  # int64 [n_walks + 1]
    kinds: np.ndarray  # uint8 template-kind id per walk
    type_x: np.ndarray  # uint8, 255 when not applicable
    type_y: np.ndarray
    schema: WalkSchema
    node_names: list[str]
    n_ingredients: int

    @property
    def n_walks(self) -> int:
        return len(self.kinds)

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def walk(self, w: int) -> np.ndarray:
        return self.tokens[self.offsets[w] : self.offsets[w + 1]]

    def template(self, w: int) -> WalkTemplate:
        kind = KIND_NAMES[int(self.kinds[w])]
        tx = None if self.type_x[w] == _NO_TYPE else int(self.type_x[w])
        ty = None if self.type_y[w] == _NO_TYPE else int(self.type_y[w])
        return WalkTemplate(kind, tx, ty)

    def census(self) -> dict:
        out = {}
        for kind, kid in KIND_IDS.items():
            mask = self.kinds == kid
            out[kind] = {"walks": int(mask.sum()), "tokens": int((np.diff(self.offsets))[mask].sum())}
        return out


def _walk_rng(seed: int, node: int, round_idx: int) -> np.random.Generator:
    # independent per-(node, round) streams: output is invariant to worker scheduling
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, node, round_idx)))


def _round_rng(seed: int, round_idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0, round_idx)))


def generate_walks(graph: TypedGraph, schema: WalkSchema) -> WalkCorpus:
    """Emit walks_per_node rounds of template walks over the typed graph.

    Each template starts from every node whose role matches its pattern's
    first position (pure I-I and via-compound templates start at ingredient
    nodes, within-type at hubs, cross-type at compound nodes of the source
    type); a start with no conforming first step yields a kept length-1 walk.
    """
    if graph.n_ingredients == 0:
        raise WalkError("graph has no ingredient nodes")
    if schema.variant == "cooc" and graph.n_compounds:
        raise WalkError("co-occurrence schema expects a graph without compound nodes")

    index = build_walk_index(graph)
    L = schema.walk_length
    n_nodes = index.n_nodes

    tokens_parts: list[np.ndarray] = []
    lens_parts: list[np.ndarray] = []
    kinds_all: list[np.ndarray] = []
    tx_all: list[np.ndarray] = []
    ty_all: list[np.ndarray] = []

    for round_idx in range(schema.walks_per_node):
        templates = sample_round_templates(schema, _round_rng(schema.rng_seed, round_idx))
        pats = [t.pattern() for t in templates]
        starts_ok = []  # per template: bool per node bucket
        for pat in pats:
            lo, hi = pat[0]
            starts_ok.append((index.node_bucket >= lo) & (index.node_bucket < hi))

        for node in range(n_nodes):
            t_ids = [ti for ti in range(len(templates)) if starts_ok[ti][node]]
            if not t_ids:
                continue
            nw = len(t_ids)
            pat_lo = np.asarray([b[0] for ti in t_ids for b in pats[ti]], dtype=np.int32)
            pat_hi = np.asarray([b[1] for ti in t_ids for b in pats[ti]], dtype=np.int32)
            pat_offsets = np.zeros(nw + 1, dtype=np.int64)
            np.cumsum([len(pats[ti]) for ti in t_ids], out=pat_offsets[1:])
            starts = np.full(nw, node, dtype=np.int32)
            uniforms = _walk_rng(schema.rng_seed, node, round_idx).random((nw, max(L - 1, 1)))
            out_tokens = np.zeros((nw, L), dtype=np.int32)
            out_lens = np.zeros(nw, dtype=np.int32)
            _kernels.generate_walk_batch(
                starts,
                pat_lo,
                pat_hi,
                pat_offsets,
                uniforms,
                index.indptr,
                index.nbr,
                index.cumw,
                index.bucket_starts,
                L,
                out_tokens,
                out_lens,
            )
            for row in range(nw):
                tokens_parts.append(out_tokens[row, : out_lens[row]])
            lens_parts.append(out_lens)
            kinds_all.append(np.asarray([KIND_IDS[templates[ti].kind] for ti in t_ids], dtype=np.uint8))
            tx_all.append(
                np.asarray(
                    [_NO_TYPE if templates[ti].type_x is None else templates[ti].type_x for ti in t_ids],
                    dtype=np.uint8,
                )
            )
            ty_all.append(
                np.asarray(
                    [_NO_TYPE if templates[ti].type_y is None else templates[ti].type_y for ti in t_ids],
                    dtype=np.uint8,
                )
            )

    lens = np.concatenate(lens_parts) if lens_parts else np.zeros(0, dtype=np.int32)
    offsets = np.zeros(len(lens) + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    corpus = WalkCorpus(
        tokens=np.concatenate(tokens_parts) if tokens_parts else np.zeros(0, dtype=np.int32),
        offsets=offsets,
        kinds=np.concatenate(kinds_all) if kinds_all else np.zeros(0, dtype=np.uint8),
        type_x=np.concatenate(tx_all) if tx_all else np.zeros(0, dtype=np.uint8),
        type_y=np.concatenate(ty_all) if ty_all else np.zeros(0, dtype=np.uint8),
        schema=schema,
        node_names=graph.node_names(),
        n_ingredients=graph.n_ingredients,
    )
    logger.info(
        "generated %d walks / %d tokens for %s (%d rounds)",
        corpus.n_walks,
        corpus.n_tokens,
        schema.variant,
        schema.walks_per_node,
    )
    return corpus


def validate_walk_roles(corpus: WalkCorpus, graph: TypedGraph) -> int:
    """Replay every walk against its template pattern; returns the number of
    non-conforming walks (0 means full conformance)."""
    index = build_walk_index(graph)
    bad = 0
    for w in range(corpus.n_walks):
        pat = corpus.template(w).pattern()
        toks = corpus.walk(w)
        for pos, tok in enumerate(toks):
            lo, hi = pat[pos % len(pat)]
            if not (lo <= index.node_bucket[tok] < hi):
                bad += 1
                break
    return bad


def save_walks(corpus: WalkCorpus, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_blob(
        out_dir / "walks.bin",
        "walk_corpus",
        {
            "schema": corpus.schema.to_dict(),
            "node_names": corpus.node_names,
            "n_ingredients": corpus.n_ingredients,
        },
        {
            "tokens": corpus.tokens.astype(np.int32),
            "offsets": corpus.offsets.astype(np.int64),
            "kinds": corpus.kinds.astype(np.uint8),
            "type_x": corpus.type_x.astype(np.uint8),
            "type_y": corpus.type_y.astype(np.uint8),
        },
    )
    write_json(
        out_dir / "walks_meta.json",
        {
            "schema": corpus.schema.to_dict(),
            "seed": corpus.schema.rng_seed,
            "n_walks": corpus.n_walks,
            "n_tokens": corpus.n_tokens,
            "template_census": corpus.census(),
        },
    )


def load_walks(out_dir: str | Path) -> WalkCorpus:
    header, arrays = read_blob(Path(out_dir) / "walks.bin", expect_kind="walk_corpus")
    return WalkCorpus(
        tokens=arrays["tokens"],
        offsets=arrays["offsets"],
        kinds=arrays["kinds"],
        type_x=arrays["type_x"],
        type_y=arrays["type_y"],
        schema=WalkSchema(**header["schema"]),
        node_names=header["node_names"],
        n_ingredients=header["n_ingredients"],
    )
