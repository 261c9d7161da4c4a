from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from epicure.artifacts import read_json
from epicure.pipeline import PipelineError, load_run_config, run_pipeline

from conftest import write_recipes, write_vocab_csv

MINI_CONFIG = """\
[inputs]
vocab = vocab.csv
recipes = recipes.jsonl
compounds = compounds.csv

[graph]
min_count = 2

[walk]
walks_per_node = 2
walk_length = 8
seed = 5

[train]
dim = 12
window = 3
batch_size = 512
epochs = 2
lr = 0.01
seed = 5

[geometry]
ci_iters = 8

[probes]
repeats = 2

[factors]
seeds = 4
components = 2

[run]
variants = cooc,chem
out = out
"""


def write_mini_inputs(root: Path) -> Path:
    rng = np.random.default_rng(2)
    rows = []
    for i in range(24):
        tags = "east_asian" if i < 8 else ("mediterranean" if i < 16 else "")
        rows.append(f"ing_{i:03d},,,group_{i % 3},{1 + i % 4},{tags},{rng.normal()!r}")
    write_vocab_csv(root / "vocab.csv", rows, ["cf_citrus"])
    recipes = []
    for _ in range(300):
        pool = range(0, 12) if rng.random() < 0.5 else range(12, 24)
        members = rng.choice(list(pool), size=4, replace=False)
        recipes.append([f"ing_{i:03d}" for i in members])
    write_recipes(root / "recipes.jsonl", recipes)
    comp_rows = ["ingredient_name,compound_id,categories"]
    for c in range(6):
        for i in rng.choice(24, size=3, replace=False):
            comp_rows.append(f"ing_{i:03d},c{c},citrus" if c < 3 else f"ing_{i:03d},c{c},fatty")
    (root / "compounds.csv").write_text("\n".join(comp_rows) + "\n", encoding="utf-8")
    (root / "epicure.ini").write_text(MINI_CONFIG, encoding="utf-8")
    return root / "epicure.ini"


def tree_digest(root: Path) -> dict[str, bytes]:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


@pytest.fixture(scope="module")
def mini_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini")
    config = write_mini_inputs(root)
    out = run_pipeline(config, strict=True)
    return root, config, out


class TestRunPipeline:
    def test_artifact_tree(self, mini_run):
        _, _, out = mini_run
        assert (out / "ingest" / "corpus.bin").exists()
        assert (out / "graph" / "graph.bin").exists()
        for variant in ("cooc", "chem"):
            model = out / variant / "model"
            for name in ("embedding.bin", "geometry.json", "probes.json", "atlas.json"):
                assert (model / name).exists(), name
            assert (model / "manifest.json").exists()
            assert (model / "manifest_factors.json").exists()
        registry = read_json(out / "registry.json")
        assert [m["name"] for m in registry["models"]] == ["cooc", "chem"]

    def test_rerun_skips_everything(self, mini_run, caplog):
        import logging

        _, config, out = mini_run
        before = tree_digest(out)
        with caplog.at_level(logging.INFO, logger="epicure.pipeline"):
            run_pipeline(config, strict=True)
        assert "skipped" in caplog.text
        assert "running" not in caplog.text
        assert tree_digest(out) == before

    def test_manifest_contents(self, mini_run):
        _, _, out = mini_run
        manifest = read_json(out / "ingest" / "manifest.json")
        assert manifest["stage"] == "ingest"
        assert set(manifest["inputs"]) == {"vocab", "recipes_0"}
        assert set(manifest["outputs"]) == {"corpus.bin", "ingest_report.json", "vocab.csv"}
        assert len(manifest["config_hash"]) == 64
        timings = read_json(out / "ingest" / "timings.json")
        assert timings["wall_time_s"] >= 0

    def test_fresh_identical_trees_bit_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        config_a = write_mini_inputs(a)
        config_b = write_mini_inputs(b)
        out_a = run_pipeline(config_a, strict=True)
        out_b = run_pipeline(config_b, strict=True)
        da, db = tree_digest(out_a), tree_digest(out_b)
        assert set(da) == set(db)
        diff = [k for k in da if da[k] != db[k]]
        # wall times legitimately differ; everything else must be identical
        assert all("timings" in k for k in diff), diff

    def test_strict_aborts_on_corrupted_artifact(self, tmp_path):
        config = write_mini_inputs(tmp_path)
        out = run_pipeline(config, strict=True, variants=["cooc"])
        target = out / "ingest" / "corpus.bin"
        target.write_bytes(target.read_bytes() + b"tainted")
        with pytest.raises(PipelineError, match="stale"):
            run_pipeline(config, strict=True, variants=["cooc"])
        # non-strict recomputes instead
        run_pipeline(config, strict=False, variants=["cooc"])

    def test_unknown_variant_rejected(self, mini_run):
        _, config, _ = mini_run
        with pytest.raises(PipelineError, match="variant"):
            run_pipeline(config, variants=["fusion"])


class TestRunConfig:
    def test_missing_inputs_section(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\ndim = 8\n", encoding="utf-8")
        with pytest.raises(PipelineError, match="inputs"):
            load_run_config(path)

    def test_defaults_applied(self, tmp_path):
        path = tmp_path / "ok.ini"
        path.write_text("[inputs]\nvocab = v.csv\nrecipes = r.jsonl\n", encoding="utf-8")
        config = load_run_config(path)
        assert config["train"]["dim"] == "300"
        assert config["walk"]["walks_per_node"] == "100"
        assert config["run"]["variants"] == "cooc,core,chem"
