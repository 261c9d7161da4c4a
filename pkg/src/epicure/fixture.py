"""Bundled toy corpus: 200 ingredients, 5,000 recipes, 30 compounds.

Two planted cuisines (east_asian vs mediterranean) never co-occur in a
recipe, so recipe context separates them sharply in every variant. A planted
chemistry trait (cf_citrus) varies only *within* each cuisine's hub pool and
is expressed purely through shared compounds, so co-occurrence walks cannot
see it while compound-mediated walks can — the property the walk-schema
comparison is built to expose. Compound links never bridge the two cuisines.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

N_INGREDIENTS = 200
N_RECIPES = 5000
N_COMPOUNDS = 30

_A_POOL = range(0, 60)  # east_asian
_B_POOL = range(60, 120)  # mediterranean
_SHARED = range(110, 120)  # tagged with both regions
_UNIVERSAL_A = range(120, 160)  # untagged, used by cuisine-A recipes
_UNIVERSAL_B = range(160, 200)
# hubs and the citrus-affine trait interleave with non-hubs at period 4, so
# neither is visible to the id-locality recipe structure: hub status and the
# trait reach the embedding only through compound-mediated walks
_A_HUBS = tuple(i for i in _A_POOL if i % 4 in (0, 1))
_B_HUBS = tuple(i for i in _B_POOL if i % 4 in (0, 1))
_A_HIGH = set(i for i in _A_POOL if i % 4 == 0)
_B_HIGH = set(i for i in _B_POOL if i % 4 == 0)

_FOOD_GROUPS = ("protein", "vegetable", "spice", "dairy", "grain")


def _name(i: int) -> str:
    return f"ing_{i:03d}"


def write_toy_corpus(out_dir: str | Path, seed: int = 7) -> dict[str, Path]:
    """Write vocab.csv, recipes.jsonl, compounds.csv and a ready-to-run
    pipeline config into out_dir; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    hubs = sorted(set(_A_HUBS) | set(_B_HUBS))
    high = _A_HIGH | _B_HIGH

    cf_citrus = {}
    for i in range(N_INGREDIENTS):
        base = 2.0 if i in high else 0.0
        cf_citrus[i] = round(float(base + rng.normal(0.0, 0.3)), 4)
    cf_sweet = {int(i): round(float(rng.normal(0.0, 1.0)), 4) for i in rng.choice(N_INGREDIENTS, 80, replace=False)}
    protein = {}
    for i in range(N_INGREDIENTS):
        shift = 1.0 if i in _A_POOL else (-1.0 if i in _B_POOL else 0.0)
        protein[i] = round(float(shift + rng.normal(0.0, 1.0)), 4)

    vocab_lines = ["name,flavordb_id,usda_id,food_group,nova,cuisine_tags,score:cf_citrus,score:cf_sweet,score:usda_protein_g"]
    for i in range(N_INGREDIENTS):
        if i in _SHARED:
            tags = "east_asian|mediterranean"
        elif i in _A_POOL:
            tags = "east_asian"
        elif i in _B_POOL:
            tags = "mediterranean"
        else:
            tags = ""
        fdb = f"fdb{i}" if i in hubs else ""
        row = [
            _name(i),
            fdb,
            f"usda{i}",
            _FOOD_GROUPS[i % len(_FOOD_GROUPS)],
            str(1 + i % 4),
            tags,
            "" if i not in cf_citrus else repr(cf_citrus[i]),
            "" if i not in cf_sweet else repr(cf_sweet[i]),
            repr(protein[i]),
        ]
        vocab_lines.append(",".join(row))
    vocab_path = out_dir / "vocab.csv"
    vocab_path.write_text("\n".join(vocab_lines) + "\n", encoding="utf-8")

    # compounds: per cuisine side, citrus compounds link trait-high hubs,
    # fatty and earthy link trait-low hubs; one degree-1 compound exercises
    # the degree filter and one dual-category compound exercises replication
    def _links(comp_rows, comp_id, cats, pool, n_links):
        chosen = rng.choice(sorted(pool), size=n_links, replace=False)
        for ing in chosen:
            comp_rows.append(f"{_name(int(ing))},{comp_id},{cats}")

    comp_rows = ["ingredient_name,compound_id,categories"]
    a_high, b_high = sorted(_A_HIGH), sorted(_B_HIGH)
    a_low = sorted(set(_A_HUBS) - _A_HIGH)
    b_low = sorted(set(_B_HUBS) - _B_HIGH)
    for c in range(5):
        _links(comp_rows, f"cmp_citrus_a{c}", "citrus", a_high, 6)
        _links(comp_rows, f"cmp_citrus_b{c}", "citrus", b_high, 6)
    for c in range(4):
        _links(comp_rows, f"cmp_fatty_a{c}", "fatty", a_low, 6)
        _links(comp_rows, f"cmp_fatty_b{c}", "fatty", b_low, 6)
    for c in range(4):
        _links(comp_rows, f"cmp_earthy_a{c}", "earthy", sorted(_A_HUBS), 5)
        _links(comp_rows, f"cmp_earthy_b{c}", "earthy", sorted(_B_HUBS), 5)
    _links(comp_rows, "cmp_dual_a", "fatty|earthy", a_low, 5)
    _links(comp_rows, "cmp_dual_b", "fatty|earthy", b_low, 5)
    _links(comp_rows, "cmp_lonely_a", "citrus", a_high, 1)
    _links(comp_rows, "cmp_lonely_b", "earthy", b_low, 1)
    compounds_path = out_dir / "compounds.csv"
    compounds_path.write_text("\n".join(comp_rows) + "\n", encoding="utf-8")

    # recipes sample around a random anchor inside their cuisine pool (smooth
    # within-pool neighborhoods) and draw universal fillers with a popularity
    # gradient, so the embedding spreads continuously instead of collapsing
    # into exchangeable point masses
    def _local_draw(pool: np.ndarray, k: int) -> np.ndarray:
        anchor = rng.integers(len(pool))
        dist = np.abs(np.arange(len(pool)) - anchor)
        dist = np.minimum(dist, len(pool) - dist)
        w = np.exp(-dist / 3.0)
        return rng.choice(pool, size=k, replace=False, p=w / w.sum())

    uni_a, uni_b = np.asarray(_UNIVERSAL_A), np.asarray(_UNIVERSAL_B)
    pop_a = 1.0 / (np.arange(len(uni_a)) + 5.0)
    pop_b = 1.0 / (np.arange(len(uni_b)) + 5.0)
    recipes_path = out_dir / "recipes.jsonl"
    with recipes_path.open("w", encoding="utf-8") as fh:
        for r in range(N_RECIPES):
            if rng.random() < 0.5:
                pool, uni, pop = np.asarray(_A_POOL), uni_a, pop_a
            else:
                pool, uni, pop = np.asarray(_B_POOL), uni_b, pop_b
            k_pool = int(rng.integers(4, 7))
            k_uni = int(rng.integers(2, 4))
            members = list(_local_draw(pool, k_pool)) + list(
                rng.choice(uni, size=k_uni, replace=False, p=pop / pop.sum())
            )
            fh.write(json.dumps({"id": f"r{r:05d}", "ingredients": [_name(int(i)) for i in members]}) + "\n")

    config_path = out_dir / "epicure.ini"
    config_path.write_text(
        "\n".join(
            [
                "[inputs]",
                "vocab = vocab.csv",
                "recipes = recipes.jsonl",
                "compounds = compounds.csv",
                "",
                "[graph]",
                "min_count = 20",
                "min_compound_degree = 2",
                "",
                "[walk]",
                "walks_per_node = 6",
                "walk_length = 20",
                "seed = 42",
                "ii_repeat = 10",
                "",
                "[train]",
                "dim = 48",
                "window = 4",
                "negatives = 5",
                "batch_size = 8192",
                "lr = 0.05",
                "epochs = 20",
                "seed = 42",
                "",
                "[geometry]",
                "ci_iters = 200",
                "",
                "[probes]",
                "repeats = 5",
                "",
                "[factors]",
                "seeds = 10",
                "components = 4",
                "",
                "[run]",
                "variants = cooc,core,chem",
                "out = runs/toy",
                "",
            ]
        ),
        encoding="utf-8",
    )
    return {
        "vocab": vocab_path,
        "recipes": recipes_path,
        "compounds": compounds_path,
        "config": config_path,
    }
