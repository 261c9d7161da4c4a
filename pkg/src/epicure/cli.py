"""Command-line entry point.

Stage commands (ingest, graph, walk, train, geometry, probes, factors)
mirror the pipeline stages; `run` executes the whole pipeline from a config
file with resumable manifests; `query` answers pairing/mode/rotation
questions with the same JSON payloads the HTTP service returns; `serve`
starts that service; `fixture` writes the bundled toy corpus.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .pipeline import (
    factors_stage,
    geometry_stage,
    graph_stage,
    ingest_stage,
    probes_stage,
    run_stage,
    train_stage,
    walk_stage,
)

logger = logging.getLogger(__name__)


def _print_json(payload) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=1, ensure_ascii=False) + "\n")


def _add_stage_commands(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("ingest", help="match recipes against the canonical vocabulary")
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--recipes", required=True, help="path or glob of recipe .jsonl files")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("graph", help="build NPMI and typed compound graphs")
    p.add_argument("--corpus", required=True, type=Path, help="ingest output directory")
    p.add_argument("--compounds", type=Path, default=None)
    p.add_argument("--min-count", type=int, default=20)
    p.add_argument("--min-compound-degree", type=int, default=2)
    p.add_argument("--count-pairless-in-marginals", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("walk", help="generate metapath walks for one variant")
    p.add_argument("--graph", required=True, type=Path, help="graph output directory")
    p.add_argument("--variant", required=True, choices=("cooc", "core", "chem"))
    p.add_argument("--ii-repeat", type=int, default=10)
    p.add_argument("--walks-per-node", type=int, default=100)
    p.add_argument("--walk-length", type=int, default=50)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("train", help="train skip-gram embeddings over a walk corpus")
    p.add_argument("--walks", required=True, type=Path)
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32768)
    p.add_argument("--lr", type=float, default=0.0025)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=int, default=1,
                   help=">1 is non-deterministic and needs the compiled backend")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("geometry", help="intrinsic geometry and clustering report")
    p.add_argument("--model", required=True, type=Path, help="model directory")
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ci-iters", type=int, default=200)
    p.add_argument("--out", required=True, type=Path, help="report file, e.g. geometry.json")

    p = sub.add_parser("probes", help="supervised direction-quality report")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("factors", help="stable factors, GMM modes and coherence atlas")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--components", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", type=Path, default=None, help="optional mode-label JSON file")
    p.add_argument("--out", required=True, type=Path)


def _run_stage_command(args: argparse.Namespace) -> int:
    if args.command == "ingest":
        paths = sorted(Path(p) for p in globmod.glob(args.recipes)) or [Path(args.recipes)]
        stage = ingest_stage(args.vocab, paths, args.out)
    elif args.command == "graph":
        stage = graph_stage(
            args.corpus, args.compounds, args.out,
            min_count=args.min_count,
            min_compound_degree=args.min_compound_degree,
            count_pairless_in_marginals=args.count_pairless_in_marginals,
        )
    elif args.command == "walk":
        stage = walk_stage(
            args.graph, args.out, args.variant,
            ii_repeat=args.ii_repeat, walks_per_node=args.walks_per_node,
            walk_length=args.walk_length, seed=args.seed,
        )
    elif args.command == "train":
        stage = train_stage(
            args.walks, args.out,
            dim=args.dim, window=args.window, negatives=args.negatives,
            batch_size=args.batch_size, lr=args.lr, epochs=args.epochs,
            seed=args.seed, workers=args.workers,
        )
    elif args.command == "geometry":
        stage = geometry_stage(args.model / "embedding.bin", args.vocab, args.out,
                               seed=args.seed, ci_iters=args.ci_iters)
    elif args.command == "probes":
        stage = probes_stage(args.model / "embedding.bin", args.vocab, args.out,
                             folds=args.folds, repeats=args.repeats, seed=args.seed)
    elif args.command == "factors":
        stage = factors_stage(args.model / "embedding.bin", args.vocab, args.out,
                              seeds=args.seeds, components=args.components,
                              seed=args.seed, labels_path=args.labels)
    else:
        raise AssertionError(args.command)
    run_stage(stage, resume=False)
    return 0


def _parse_target(args: argparse.Namespace) -> dict:
    if args.mode_target:
        source, _, mode_id = args.mode_target.partition("/M")
        return {"kind": "mode", "source": source, "mode_id": int(mode_id)}
    specs = args.toward or []
    if len(specs) == 1:
        return {"kind": "supervised", "spec": specs[0], "style": args.pole_style}
    return {
        "kind": "blend",
        "parts": [{"kind": "supervised", "spec": s, "style": args.pole_style} for s in specs],
    }


def _run_query_command(args: argparse.Namespace) -> int:
    from . import service

    registry = service.load_registry(args.registry)
    if args.query == "neighbors":
        _print_json(service.build_neighbors_payload(registry, args.model, args.seed, args.k))
    elif args.query == "mode":
        _print_json(
            service.build_closest_mode_payload(
                registry, args.model, args.seed, include_supervised=args.include_supervised_modes
            )
        )
    elif args.query == "rotate":
        if args.angle == 0.0:
            _print_json(service.build_neighbors_payload(registry, args.model, args.seed, args.k))
        else:
            if not (args.toward or args.mode_target):
                raise service.OperatorError("rotate with a nonzero angle needs --toward or --mode-target")
            payload = service.build_rotate_payload(
                registry, args.model, args.seed, _parse_target(args), args.angle, args.k
            )
            _print_json(payload)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="epicure", description=__doc__)
    parser.add_argument("--version", action="version", version=f"epicure {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_stage_commands(sub)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--variant", default=None, help="comma-separated subset, e.g. cooc,chem")
    p.add_argument("--strict", action="store_true",
                   help="abort on stale manifests instead of recomputing")

    p = sub.add_parser("query", help="pairing / mode / rotation queries")
    qsub = p.add_subparsers(dest="query", required=True)
    for name in ("neighbors", "mode", "rotate"):
        q = qsub.add_parser(name)
        q.add_argument("--registry", required=True, type=Path)
        q.add_argument("--model", required=True)
        q.add_argument("--seed", required=True)
        q.add_argument("-k", type=int, default=5)
        if name == "mode":
            q.add_argument("--include-supervised-modes", action="store_true")
        if name == "rotate":
            q.add_argument("--angle", type=float, default=0.0)
            q.add_argument("--toward", action="append", default=None,
                           help="supervised target kind:value; repeat to blend")
            q.add_argument("--mode-target", default=None, help="atlas mode, e.g. F_3/M2")
            q.add_argument("--pole-style", choices=("diff", "mean"), default="diff")

    p = sub.add_parser("serve", help="serve loaded models over HTTP")
    p.add_argument("--registry", required=True, type=Path)
    p.add_argument("--bind", default=None, help="host:port, overrides the registry config")
    p.add_argument("--static", type=Path, default=None,
                   help="directory of built explorer assets to serve at /")

    p = sub.add_parser("fixture", help="write the bundled toy corpus and config")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=7)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )

    if args.command in ("ingest", "graph", "walk", "train", "geometry", "probes", "factors"):
        return _run_stage_command(args)
    if args.command == "run":
        variants = [v.strip() for v in args.variant.split(",")] if args.variant else None
        pipeline.run_pipeline(args.config, variants=variants, strict=args.strict)
        return 0
    if args.command == "query":
        return _run_query_command(args)
    if args.command == "serve":
        from . import service

        service.serve(args.registry, bind=args.bind, static_dir=args.static)
        return 0
    if args.command == "fixture":
        from .fixture import write_toy_corpus

        paths = write_toy_corpus(args.out, seed=args.seed)
        _print_json({k: str(v) for k, v in paths.items()})
        return 0
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
