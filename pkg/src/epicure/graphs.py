"""Co-occurrence and typed compound graph construction.

The ingredient-ingredient graph keeps only positive-NPMI pairs computed over
recipe-level presence. The typed graph adds one compound node per (compound,
flavor category) and drops typed nodes whose ingredient degree falls below a
minimum, after which ingredients with at least one surviving compound edge
are flagged as chemical hubs.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import read_blob, write_blob
from .ingest import CanonicalVocabulary, MatchedCorpus, normalize_name

logger = logging.getLogger(__name__)

#: Flavor-category registry for typed compound nodes (14 named + 1 residual).
COMPOUND_CATEGORIES = (
    "balsamic",
    "citrus",
    "earthy",
    "fatty",
    "floral",
    "fruity",
    "green",
    "meaty",
    "minty",
    "nutty",
    "spicy",
    "vegetable",
    "wine_like",
    "woody",
    "other",
)
_CATEGORY_SET = frozenset(COMPOUND_CATEGORIES)


class GraphError(ValueError):
    pass


@dataclass
class CoocGraph:
    n_nodes: int
    edges_i: np.ndarray  # int32, i < j
    edges_j: np.ndarray
    weights: np.ndarray  # float64 NPMI in (0, 1]
    retained: np.ndarray  # bool per ingredient: survived min-frequency filter

    @property
    def n_edges(self) -> int:
        return len(self.weights)


@dataclass
class TypedGraph:
    n_ingredients: int
    ingredient_names: list[str]
    compound_sources: list[str]  # source compound id per typed node
    compound_categories: list[str]  # one category per typed node
    ii_i: np.ndarray
    ii_j: np.ndarray
    ii_w: np.ndarray
    ic_ing: np.ndarray  # int32 ingredient id per I-C edge
    ic_comp: np.ndarray  # int32 typed-node index per I-C edge
    hub_flags: np.ndarray  # bool per ingredient
    retained: np.ndarray = field(default=None)  # type: ignore[assignment]

    @property
    def n_compounds(self) -> int:
        return len(self.compound_sources)

    @property
    def n_nodes(self) -> int:
        return self.n_ingredients + self.n_compounds

    def compound_node_names(self) -> list[str]:
        return [f"c:{src}:{cat}" for src, cat in zip(self.compound_sources, self.compound_categories)]

    def node_names(self) -> list[str]:
        return self.ingredient_names + self.compound_node_names()


def compute_npmi_graph(
    corpus: MatchedCorpus,
    min_recipe_count: int = 20,
    count_pairless_in_marginals: bool = True,
) -> CoocGraph:
    """Build the positive-NPMI ingredient-ingredient graph.

    Probabilities are recipe-level presence over N matched recipes; pairs are
    counted once per recipe from recipes with at least two retained ids.
    Ingredients seen in fewer than `min_recipe_count` recipes are removed
    before any pair counting. Pairless (single-match) recipes count toward
    marginal frequencies by default; flip `count_pairless_in_marginals` to
    restrict both N and the marginals to pair-bearing recipes.
    """
    if min_recipe_count < 1:
        raise GraphError("min_recipe_count must be >= 1")
    V = corpus.vocab_size
    counts = np.zeros(V, dtype=np.int64)
    n_usable = 0
    for ids in corpus.recipes:
        if len(ids) == 0:
            continue
        if len(ids) < 2 and not count_pairless_in_marginals:
            continue
        counts[ids] += 1
        n_usable += 1
    if n_usable == 0:
        raise GraphError("no usable recipes: every recipe has zero matched ingredients")

    retained = counts >= min_recipe_count
    pair_counts: dict[tuple[int, int], int] = {}
    for ids in corpus.recipes:
        kept = [int(i) for i in ids if retained[i]]
        if len(kept) < 2:
            continue
        for a_pos in range(len(kept) - 1):
            a = kept[a_pos]
            for b in kept[a_pos + 1 :]:
                key = (a, b)  # ids arrive sorted, so a < b
                pair_counts[key] = pair_counts.get(key, 0) + 1

    edges_i, edges_j, weights = [], [], []
    for (a, b) in sorted(pair_counts):
        n_ab = pair_counts[(a, b)]
        p_ab = n_ab / n_usable
        if p_ab == 1.0:
            npmi = 1.0  # limit convention: pmi -> -ln p(a,b) as p(a)=p(b)=p(a,b)->1
        else:
            # single log of the integer ratio: exact independence
            # (n_ab * N == n_a * n_b) lands on 0.0 and is dropped
            pmi = math.log(n_ab * n_usable / (counts[a] * counts[b]))
            npmi = pmi / (-math.log(p_ab))
        if npmi > 0.0:
            edges_i.append(a)
            edges_j.append(b)
            weights.append(npmi)

    logger.info(
        "npmi graph: %d/%d ingredients retained (min count %d), %d positive edges over %d recipes",
        int(retained.sum()),
        V,
        min_recipe_count,
        len(weights),
        n_usable,
    )
    return CoocGraph(
        n_nodes=V,
        edges_i=np.asarray(edges_i, dtype=np.int32),
        edges_j=np.asarray(edges_j, dtype=np.int32),
        weights=np.asarray(weights, dtype=np.float64),
        retained=retained,
    )


def _read_compound_rows(path: Path) -> list[tuple[str, str, list[str]]]:
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:3]] != ["ingredient_name", "compound_id", "categories"]:
            raise GraphError(f"{path}: expected header ingredient_name,compound_id,categories")
        for row_no, row in enumerate(reader, start=2):
            if not row or all(c == "" for c in row):
                continue
            if len(row) < 3:
                raise GraphError(f"{path}:{row_no}: expected 3 columns, got {len(row)}")
            cats = []
            for part in row[2].split("|"):
                cat = normalize_name(part)
                if cat not in _CATEGORY_SET:
                    raise GraphError(f"{path}:{row_no}: category {part!r} outside the {len(COMPOUND_CATEGORIES)}-type registry")
                cats.append(cat)
            rows.append((row[0], row[1].strip(), cats))
    return rows


def build_typed_graph(
    cooc: CoocGraph,
    compound_file: str | Path | None,
    vocab: CanonicalVocabulary,
    min_compound_degree: int = 2,
) -> TypedGraph:
    """Attach typed compound nodes to the co-occurrence graph.

    A compound tagged with k categories yields k typed nodes sharing the same
    ingredient links. The degree filter runs once over pre-removal degrees;
    hub flags are recomputed afterwards. Passing no compound file yields the
    pure ingredient graph (no compounds, no hubs), which is what the
    co-occurrence-only walk schema consumes.
    """
    names = vocab.names
    if len(names) != cooc.n_nodes:
        raise GraphError(f"vocabulary size {len(names)} != graph node count {cooc.n_nodes}")

    comp_cats: dict[str, set[str]] = {}
    comp_links: dict[str, set[int]] = {}
    n_skipped = 0
    if compound_file is not None:
        for ing_name, comp_id, cats in _read_compound_rows(Path(compound_file)):
            ing = vocab.id_of(ing_name)
            if ing is None:
                logger.warning("compound file: ingredient %r not in vocabulary, row skipped", ing_name)
                n_skipped += 1
                continue
            comp_cats.setdefault(comp_id, set()).update(cats)
            comp_links.setdefault(comp_id, set()).add(ing)

    sources, categories, ic_ing, ic_comp = [], [], [], []
    for comp_id in sorted(comp_cats):
        members = sorted(comp_links[comp_id])
        if len(members) < min_compound_degree:
            continue  # every typed replica of this compound falls below the degree floor
        for cat in sorted(comp_cats[comp_id]):
            node = len(sources)
            sources.append(comp_id)
            categories.append(cat)
            for ing in members:
                ic_ing.append(ing)
                ic_comp.append(node)

    hub_flags = np.zeros(cooc.n_nodes, dtype=bool)
    if ic_ing:
        hub_flags[np.asarray(ic_ing, dtype=np.int64)] = True

    logger.info(
        "typed graph: %d typed compound nodes, %d I-C edges, %d hub ingredients (%d rows skipped)",
        len(sources),
        len(ic_ing),
        int(hub_flags.sum()),
        n_skipped,
    )
    return TypedGraph(
        n_ingredients=cooc.n_nodes,
        ingredient_names=names,
        compound_sources=sources,
        compound_categories=categories,
        ii_i=cooc.edges_i,
        ii_j=cooc.edges_j,
        ii_w=cooc.weights,
        ic_ing=np.asarray(ic_ing, dtype=np.int32),
        ic_comp=np.asarray(ic_comp, dtype=np.int32),
        hub_flags=hub_flags,
        retained=cooc.retained,
    )


def save_typed_graph(graph: TypedGraph, path: str | Path, params: dict | None = None) -> None:
    header = {
        "n_ingredients": graph.n_ingredients,
        "ingredient_names": graph.ingredient_names,
        "compound_sources": graph.compound_sources,
        "compound_categories": graph.compound_categories,
        "params": params or {},
    }
    write_blob(
        path,
        "typed_graph",
        header,
        {
            "ii_i": graph.ii_i.astype(np.int32),
            "ii_j": graph.ii_j.astype(np.int32),
            "ii_w": graph.ii_w.astype(np.float64),
            "ic_ing": graph.ic_ing.astype(np.int32),
            "ic_comp": graph.ic_comp.astype(np.int32),
            "hub_flags": graph.hub_flags.astype(np.uint8),
            "retained": graph.retained.astype(np.uint8),
        },
    )


def load_typed_graph(path: str | Path) -> TypedGraph:
    header, arrays = read_blob(path, expect_kind="typed_graph")
    return TypedGraph(
        n_ingredients=header["n_ingredients"],
        ingredient_names=header["ingredient_names"],
        compound_sources=header["compound_sources"],
        compound_categories=header["compound_categories"],
        ii_i=arrays["ii_i"],
        ii_j=arrays["ii_j"],
        ii_w=arrays["ii_w"],
        ic_ing=arrays["ic_ing"],
        ic_comp=arrays["ic_comp"],
        hub_flags=arrays["hub_flags"].astype(bool),
        retained=arrays["retained"].astype(bool),
    )
