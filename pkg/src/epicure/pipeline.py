"""Pipeline orchestration with reproducible stage manifests.

Each stage writes a manifest recording its config hash, input hashes and
output hashes; a rerun skips any stage whose manifest still matches, and
strict mode aborts instead of recomputing when something went stale. Wall
time lives in a separate timings file so manifests stay byte-deterministic.
"""

from __future__ import annotations

import configparser
import glob as globmod
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import read_blob, read_json, sha256_file, sha256_text, write_blob, write_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class PipelineError(RuntimeError):
    pass


def config_hash(config: dict) -> str:
    return sha256_text(repr(sorted(config.items())))


@dataclass
class Stage:
    name: str
    out_dir: Path
    config: dict
    inputs: dict[str, Path]  # label -> file path
    outputs: list[str]  # filenames relative to out_dir
    runner: object  # callable(out_dir)
    manifest_name: str = MANIFEST_NAME  # stages sharing a directory use distinct names


def write_manifest(stage: Stage) -> None:
    manifest = {
        "stage": stage.name,
        "tool_version": __version__,
        "config_hash": config_hash(stage.config),
        "config": {k: stage.config[k] for k in sorted(stage.config)},
        "inputs": {label: sha256_file(p) for label, p in sorted(stage.inputs.items())},
        "outputs": {name: sha256_file(stage.out_dir / name) for name in sorted(stage.outputs)},
    }
    write_json(stage.out_dir / stage.manifest_name, manifest)


def _manifest_state(stage: Stage) -> str:
    """One of 'missing', 'match', 'stale'."""
    path = stage.out_dir / stage.manifest_name
    if not path.exists():
        return "missing"
    try:
        manifest = read_json(path)
    except ValueError:
        return "stale"
    if manifest.get("stage") != stage.name or manifest.get("config_hash") != config_hash(stage.config):
        return "stale"
    for label, p in stage.inputs.items():
        if not Path(p).exists() or manifest.get("inputs", {}).get(label) != sha256_file(p):
            return "stale"
    for name in stage.outputs:
        out = stage.out_dir / name
        if not out.exists() or manifest.get("outputs", {}).get(name) != sha256_file(out):
            return "stale"
    return "match"


def run_stage(stage: Stage, strict: bool = False, resume: bool = True) -> bool:
    """Run one stage unless its manifest already matches. Returns True when
    the stage executed, False when skipped. In strict mode a stale manifest
    (changed config, corrupted upstream input, or corrupted output) aborts
    instead of recomputing."""
    for label, p in stage.inputs.items():
        if not Path(p).exists():
            raise PipelineError(f"stage {stage.name}: missing input {label} ({p})")
    if resume:
        state = _manifest_state(stage)
        if state == "match":
            logger.info("stage %s: up to date, skipped", stage.name)
            return False
        if state == "stale" and strict:
            raise PipelineError(f"stage {stage.name} is stale (strict mode aborts instead of recomputing)")
    stage.out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("stage %s: running", stage.name)
    started = time.monotonic()
    stage.runner(stage.out_dir)
    elapsed = time.monotonic() - started
    write_manifest(stage)
    write_json(
        stage.out_dir / stage.manifest_name.replace("manifest", "timings"),
        {"stage": stage.name, "wall_time_s": elapsed},
    )
    logger.info("stage %s: done in %.1fs", stage.name, elapsed)
    return True


# ---------------------------------------------------------------- stages


def ingest_stage(vocab_path: Path, recipe_paths: list[Path], out_dir: Path) -> Stage:
    from .ingest import load_recipes, load_vocabulary, write_vocabulary

    def runner(out: Path):
        vocab = load_vocabulary(vocab_path)
        corpus = load_recipes(recipe_paths, vocab)
        write_vocabulary(vocab, out / "vocab.csv")
        lens = np.asarray([len(r) for r in corpus.recipes], dtype=np.int32)
        nonempty = [r for r in corpus.recipes if len(r)]
        ids = np.concatenate(nonempty) if nonempty else np.zeros(0, dtype=np.int32)
        write_blob(
            out / "corpus.bin",
            "corpus",
            {
                "vocab_size": corpus.vocab_size,
                "n_total_input": corpus.n_total_input,
                "n_matched": corpus.n_matched,
            },
            {"lens": lens, "ids": ids.astype(np.int32)},
        )
        write_json(out / "ingest_report.json", corpus.report)

    return Stage(
        name="ingest",
        out_dir=out_dir,
        config={"n_recipe_files": len(recipe_paths)},
        inputs={"vocab": vocab_path, **{f"recipes_{i}": p for i, p in enumerate(recipe_paths)}},
        outputs=["vocab.csv", "corpus.bin", "ingest_report.json"],
        runner=runner,
    )


def load_corpus_artifact(corpus_dir: Path):
    from .ingest import MatchedCorpus

    header, arrays = read_blob(Path(corpus_dir) / "corpus.bin", expect_kind="corpus")
    recipes = (
        np.split(arrays["ids"], np.cumsum(arrays["lens"])[:-1]) if len(arrays["lens"]) else []
    )
    return MatchedCorpus(
        recipes=recipes,
        n_total_input=header["n_total_input"],
        n_matched=header["n_matched"],
        vocab_size=header["vocab_size"],
    )


def graph_stage(
    corpus_dir: Path,
    compounds_path: Path | None,
    out_dir: Path,
    min_count: int = 20,
    min_compound_degree: int = 2,
    count_pairless_in_marginals: bool = True,
) -> Stage:
    from .graphs import build_typed_graph, compute_npmi_graph, save_typed_graph
    from .ingest import load_vocabulary

    config = {
        "min_count": min_count,
        "min_compound_degree": min_compound_degree,
        "count_pairless_in_marginals": count_pairless_in_marginals,
        "with_compounds": compounds_path is not None,
    }

    def runner(out: Path):
        vocab = load_vocabulary(corpus_dir / "vocab.csv")
        corpus = load_corpus_artifact(corpus_dir)
        cooc = compute_npmi_graph(
            corpus, min_recipe_count=min_count, count_pairless_in_marginals=count_pairless_in_marginals
        )
        typed = build_typed_graph(cooc, compounds_path, vocab, min_compound_degree=min_compound_degree)
        save_typed_graph(typed, out / "graph.bin", params=config)
        save_typed_graph(build_typed_graph(cooc, None, vocab), out / "graph_cooc.bin", params=config)

    inputs = {"corpus": corpus_dir / "corpus.bin", "vocab": corpus_dir / "vocab.csv"}
    if compounds_path is not None:
        inputs["compounds"] = compounds_path
    return Stage("graph", out_dir, config, inputs, ["graph.bin", "graph_cooc.bin"], runner)


def graph_file_for_variant(graph_dir: Path, variant: str) -> Path:
    return Path(graph_dir) / ("graph_cooc.bin" if variant == "cooc" else "graph.bin")


def walk_stage(
    graph_dir: Path,
    out_dir: Path,
    variant: str,
    ii_repeat: int = 10,
    walks_per_node: int = 100,
    walk_length: int = 50,
    seed: int = 42,
) -> Stage:
    from .graphs import load_typed_graph
    from .walks import WalkSchema, generate_walks, save_walks

    effective_ii = ii_repeat if variant == "core" else 0
    config = {
        "variant": variant,
        "ii_repeat": effective_ii,
        "walks_per_node": walks_per_node,
        "walk_length": walk_length,
        "seed": seed,
    }
    graph_file = graph_file_for_variant(graph_dir, variant)

    def runner(out: Path):
        schema = WalkSchema(
            variant=variant,
            ii_repeat=effective_ii,
            walks_per_node=walks_per_node,
            walk_length=walk_length,
            rng_seed=seed,
        )
        save_walks(generate_walks(load_typed_graph(graph_file), schema), out)

    return Stage(
        f"walk[{variant}]", out_dir, config, {"graph": graph_file},
        ["walks.bin", "walks_meta.json"], runner,
    )


def train_stage(walks_dir: Path, out_dir: Path, **params) -> Stage:
    from .sgns import TrainConfig, save_embedding, train
    from .walks import load_walks

    cfg = TrainConfig(**params)

    def runner(out: Path):
        corpus = load_walks(walks_dir)
        save_embedding(train(corpus, cfg), out / "embedding.bin")

    return Stage(
        "train", out_dir, cfg.to_dict(), {"walks": walks_dir / "walks.bin"},
        ["embedding.bin"], runner,
    )


def geometry_stage(model_file: Path, vocab_path: Path, out_file: Path,
                   seed: int = 0, ci_iters: int = 200) -> Stage:
    from .geometry import geometry_report
    from .ingest import load_vocabulary
    from .sgns import load_embedding

    def runner(out: Path):
        report = geometry_report(load_embedding(model_file), load_vocabulary(vocab_path),
                                 seed=seed, ci_iters=ci_iters)
        write_json(out / out_file.name, report)

    return Stage(
        "geometry", out_file.parent, {"seed": seed, "ci_iters": ci_iters},
        {"model": model_file, "vocab": vocab_path}, [out_file.name], runner,
        manifest_name="manifest_geometry.json",
    )


def probes_stage(model_file: Path, vocab_path: Path, out_file: Path,
                 folds: int = 5, repeats: int = 5, seed: int = 0) -> Stage:
    from .ingest import load_vocabulary
    from .probes import stratified_report
    from .sgns import load_embedding

    def runner(out: Path):
        report = stratified_report(load_embedding(model_file), load_vocabulary(vocab_path),
                                   folds=folds, repeats=repeats, seed=seed)
        write_json(out / out_file.name, report)

    return Stage(
        "probes", out_file.parent, {"folds": folds, "repeats": repeats, "seed": seed},
        {"model": model_file, "vocab": vocab_path}, [out_file.name], runner,
        manifest_name="manifest_probes.json",
    )


def factors_stage(model_file: Path, vocab_path: Path, out_file: Path,
                  seeds: int = 10, components: int = 20, seed: int = 0,
                  labels_path: Path | None = None) -> Stage:
    from .factors import build_atlas, save_atlas
    from .ingest import load_vocabulary
    from .sgns import load_embedding

    config = {"seeds": seeds, "components": components, "seed": seed,
              "with_labels": labels_path is not None}
    inputs = {"model": model_file, "vocab": vocab_path}
    if labels_path is not None:
        inputs["labels"] = labels_path

    def runner(out: Path):
        labels = read_json(labels_path) if labels_path is not None else None
        atlas = build_atlas(load_embedding(model_file), load_vocabulary(vocab_path),
                            n_components=components, seeds=seeds, seed=seed, labels=labels)
        save_atlas(atlas, out / out_file.name)

    return Stage("factors", out_file.parent, config, inputs, [out_file.name], runner,
                 manifest_name="manifest_factors.json")


# ------------------------------------------------------------- run config


_DEFAULTS = {
    "graph": {"min_count": "20", "min_compound_degree": "2", "count_pairless_in_marginals": "true"},
    "walk": {"walks_per_node": "100", "walk_length": "50", "seed": "42", "ii_repeat": "10"},
    "train": {
        "dim": "300",
        "window": "7",
        "negatives": "5",
        "batch_size": "32768",
        "lr": "0.0025",
        "epochs": "20",
        "seed": "42",
        "workers": "1",
    },
    "geometry": {"seed": "0", "ci_iters": "200"},
    "probes": {"folds": "5", "repeats": "5", "seed": "0"},
    "factors": {"seeds": "10", "components": "20", "seed": "0"},
    "run": {"variants": "cooc,core,chem", "out": "runs/default"},
}


def load_run_config(path: str | Path) -> dict:
    """Plain-text key=value config with section headers; relative paths
    resolve against the config file's directory."""
    path = Path(path)
    parser = configparser.ConfigParser()
    with path.open(encoding="utf-8") as fh:
        parser.read_file(fh)
    config: dict = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    for section in parser.sections():
        config.setdefault(section, {}).update(dict(parser[section]))
    if "inputs" not in config or "vocab" not in config["inputs"] or "recipes" not in config["inputs"]:
        raise PipelineError("config needs an [inputs] section with at least vocab and recipes")
    config["_base"] = path.parent
    return config


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def run_pipeline(config_path: str | Path, variants: list[str] | None = None,
                 strict: bool = False, resume: bool = True) -> Path:
    """Execute ingest -> graph -> (walk -> train -> geometry -> probes ->
    factors) per variant, skipping stages whose manifests match, and emit a
    registry config for serving. Returns the output root."""
    config = load_run_config(config_path)
    base = config["_base"]
    out_root = _resolve(base, config["run"]["out"])
    variants = variants or [v.strip() for v in config["run"]["variants"].split(",") if v.strip()]
    for v in variants:
        if v not in ("cooc", "core", "chem"):
            raise PipelineError(f"unknown variant {v!r}")

    vocab_path = _resolve(base, config["inputs"]["vocab"])
    recipe_paths = sorted(Path(p) for p in globmod.glob(str(_resolve(base, config["inputs"]["recipes"]))))
    if not recipe_paths:
        raise PipelineError(f"no recipe files match {config['inputs']['recipes']!r}")
    compounds_path = (
        _resolve(base, config["inputs"]["compounds"]) if config["inputs"].get("compounds") else None
    )

    ingest_dir = out_root / "ingest"
    run_stage(ingest_stage(vocab_path, recipe_paths, ingest_dir), strict=strict, resume=resume)

    graph_dir = out_root / "graph"
    run_stage(
        graph_stage(
            ingest_dir,
            compounds_path,
            graph_dir,
            min_count=int(config["graph"]["min_count"]),
            min_compound_degree=int(config["graph"]["min_compound_degree"]),
            count_pairless_in_marginals=config["graph"]["count_pairless_in_marginals"].lower() == "true",
        ),
        strict=strict,
        resume=resume,
    )

    registry_models = []
    vocab_out = ingest_dir / "vocab.csv"
    for variant in variants:
        vdir = out_root / variant
        run_stage(
            walk_stage(
                graph_dir,
                vdir / "walks",
                variant,
                ii_repeat=int(config["walk"]["ii_repeat"]),
                walks_per_node=int(config["walk"]["walks_per_node"]),
                walk_length=int(config["walk"]["walk_length"]),
                seed=int(config["walk"]["seed"]),
            ),
            strict=strict,
            resume=resume,
        )
        train_params = {
            k: (float(config["train"][k]) if k == "lr" else int(config["train"][k]))
            for k in ("dim", "window", "negatives", "batch_size", "lr", "epochs", "seed", "workers")
        }
        run_stage(train_stage(vdir / "walks", vdir / "model", **train_params),
                  strict=strict, resume=resume)

        model_file = vdir / "model" / "embedding.bin"
        run_stage(
            geometry_stage(model_file, vocab_out, vdir / "model" / "geometry.json",
                           seed=int(config["geometry"]["seed"]),
                           ci_iters=int(config["geometry"]["ci_iters"])),
            strict=strict, resume=resume,
        )
        run_stage(
            probes_stage(model_file, vocab_out, vdir / "model" / "probes.json",
                         folds=int(config["probes"]["folds"]),
                         repeats=int(config["probes"]["repeats"]),
                         seed=int(config["probes"]["seed"])),
            strict=strict, resume=resume,
        )
        run_stage(
            factors_stage(model_file, vocab_out, vdir / "model" / "atlas.json",
                          seeds=int(config["factors"]["seeds"]),
                          components=int(config["factors"]["components"]),
                          seed=int(config["factors"]["seed"])),
            strict=strict, resume=resume,
        )
        registry_models.append({"name": variant, "dir": str(Path(variant) / "model")})

    write_json(
        out_root / "registry.json",
        {
            "vocab": str(Path("ingest") / "vocab.csv"),
            "models": registry_models,
            "bind": "127.0.0.1:8000",
        },
    )
    logger.info("pipeline complete: %s", out_root)
    return out_root
