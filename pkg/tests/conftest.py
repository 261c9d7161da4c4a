from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from epicure.factors import Mode, ModeAtlas
from epicure.ingest import CanonicalVocabulary, IngredientEntry, load_vocabulary
from epicure.operators import ModelBundle
from epicure.sgns import EmbeddingMatrix

VOCAB_HEADER = "name,flavordb_id,usda_id,food_group,nova,cuisine_tags"

# -------------------------------------------------- acceptance reporting

ACCEPTANCE_CRITERIA = [
    "npmi-oracle",
    "typed-graph-filter",
    "walk-conformance",
    "sgns-gradient",
    "planted-end-to-end",
    "geometry-oracles",
    "ica-recovery",
    "gmm-bic",
    "slerp-invariants",
    "operator-oracle",
    "determinism",
    "cli-api-equivalence",
]
_acceptance_results: dict[str, str] = {}
_acceptance_ran = False


def record_acceptance(name: str, detail: str = "") -> None:
    global _acceptance_ran
    _acceptance_ran = True
    _acceptance_results[name] = detail


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_ran:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in ACCEPTANCE_CRITERIA:
        if name in _acceptance_results:
            detail = _acceptance_results[name]
            terminalreporter.write_line(f"PASS  {name}" + (f"  ({detail})" if detail else ""))
        else:
            terminalreporter.write_line(f"FAIL  {name}  (test failed or deselected)")


def write_vocab_csv(path: Path, rows: list[str], score_cols: list[str] = ()) -> Path:
    header = VOCAB_HEADER + "".join(f",score:{c}" for c in score_cols)
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def write_recipes(path: Path, recipes: list[list[str]]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for i, names in enumerate(recipes):
            fh.write(json.dumps({"id": f"r{i}", "ingredients": names}) + "\n")
    return path


@pytest.fixture
def small_vocab(tmp_path) -> CanonicalVocabulary:
    rows = [
        "salt,,,spice,1,,",
        "onion,,u1,vegetable,1,,",
        "garlic,f2,u2,vegetable,1,,0.5",
        "soy sauce,,,sauce,3,east_asian,",
        "miso,f5,,sauce,3,east_asian|japanese,1.5",
        "olive oil,,,fat,2,mediterranean,",
    ]
    return load_vocabulary(write_vocab_csv(tmp_path / "vocab.csv", rows, ["cf_umami"]))


def synthetic_vocab(n: int) -> CanonicalVocabulary:
    """In-memory vocabulary of n unnamed ingredients (no labels)."""
    entries = [IngredientEntry(id=i, name=f"ing_{i:03d}") for i in range(n)]
    return CanonicalVocabulary(entries=entries, name_index={e.name: e.id for e in entries})


def micro_bundle(
    n: int = 40,
    dim: int = 12,
    seed: int = 0,
    vocab: CanonicalVocabulary | None = None,
    vectors: np.ndarray | None = None,
    atlas: ModeAtlas | None = None,
    name: str = "micro",
) -> ModelBundle:
    """A bundle over synthetic vectors, no training involved."""
    rng = np.random.default_rng(seed)
    if vectors is None:
        vectors = rng.normal(size=(n, dim))
    vocab = vocab or synthetic_vocab(len(vectors))
    model = EmbeddingMatrix(
        node_ids=np.arange(len(vectors), dtype=np.int64),
        names=[vocab.name_of(i) for i in range(len(vectors))],
        vectors=np.asarray(vectors, dtype=np.float64),
        n_ingredient_rows=len(vectors),
        meta={"variant": name, "config_hash": "test"},
    )
    return ModelBundle(name=name, model=model, vocab=vocab, atlas=atlas)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """The bundled toy fixture, run through the full pipeline once per session."""
    from epicure.fixture import write_toy_corpus
    from epicure.pipeline import run_pipeline

    root = tmp_path_factory.mktemp("toy")
    paths = write_toy_corpus(root, seed=7)
    out = run_pipeline(paths["config"], strict=True)
    return {"root": root, "out": out, "config": paths["config"]}


def make_atlas(bundle_vectors: np.ndarray, groups: list[list[int]], variant: str = "micro") -> ModeAtlas:
    modes = []
    for g_i, members in enumerate(groups):
        mean = bundle_vectors[members].mean(axis=0)
        pole = mean / np.linalg.norm(mean)
        modes.append(
            Mode(
                source=f"F_{g_i}",
                mode_id=0,
                member_ids=[int(m) for m in members],
                pole=pole,
                coherence=0.9,
                pairwise_coherence=0.8,
                label=f"group {g_i}",
            )
        )
    return ModeAtlas(variant=variant, modes=modes, baseline=0.1)
