#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy reference backend.

Times the two hot paths (SGNS batch updates, role-constrained walk
generation) at toy and production-ish shapes and prints a comparison table.

    python3 benchmarks/bench_kernels.py [--repeats 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import epicure._kernels as kernels
from epicure._kernels import ref
from epicure.graphs import TypedGraph
from epicure.walks import WalkSchema, build_walk_index, sample_round_templates


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_sgns(rows: int, dim: int, batch: int, negatives: int, repeats: int) -> dict:
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(rows, dim))
    ctx = rng.normal(size=(rows, dim))
    states = [np.zeros((rows, dim)) for _ in range(4)]
    centers = rng.integers(0, rows, batch)
    contexts = rng.integers(0, rows, batch)
    negs = rng.integers(0, rows, (batch, negatives))

    def run(impl):
        impl.sgns_batch(centers, contexts, negs, emb, ctx, *states, 1, 0.01, 0.9, 0.999, 1e-8)

    out = {"numpy": _time(lambda: run(ref), repeats)}
    if kernels.HAVE_COMPILED:
        out["compiled"] = _time(lambda: run(kernels._impl), repeats)
    return out


def _random_graph(n_ing: int, n_comp: int, seed: int = 0) -> TypedGraph:
    rng = np.random.default_rng(seed)
    n_edges = n_ing * 12
    ii = rng.integers(0, n_ing, (n_edges, 2))
    ii = ii[ii[:, 0] != ii[:, 1]]
    hubs = rng.choice(n_ing, size=n_ing // 3, replace=False)
    ic_ing, ic_comp, sources, categories = [], [], [], []
    cats = ("citrus", "fatty", "earthy")
    for c in range(n_comp):
        sources.append(f"c{c}")
        categories.append(cats[c % 3])
        for ing in rng.choice(hubs, size=4, replace=False):
            ic_ing.append(int(ing))
            ic_comp.append(c)
    hub_flags = np.zeros(n_ing, dtype=bool)
    hub_flags[np.asarray(ic_ing)] = True
    return TypedGraph(
        n_ingredients=n_ing,
        ingredient_names=[f"i{i}" for i in range(n_ing)],
        compound_sources=sources,
        compound_categories=categories,
        ii_i=np.minimum(ii[:, 0], ii[:, 1]).astype(np.int32),
        ii_j=np.maximum(ii[:, 0], ii[:, 1]).astype(np.int32),
        ii_w=rng.random(len(ii)).astype(np.float64) + 0.01,
        ic_ing=np.asarray(ic_ing, dtype=np.int32),
        ic_comp=np.asarray(ic_comp, dtype=np.int32),
        hub_flags=hub_flags,
        retained=np.ones(n_ing, dtype=bool),
    )


def bench_walks(n_ing: int, n_comp: int, walk_length: int, repeats: int) -> dict:
    graph = _random_graph(n_ing, n_comp)
    index = build_walk_index(graph)
    schema = WalkSchema("core", ii_repeat=10, walks_per_node=1, walk_length=walk_length)
    templates = sample_round_templates(schema, np.random.default_rng(1))
    pats = [t.pattern() for t in templates]
    n_walks = 256
    rng = np.random.default_rng(2)
    starts = rng.integers(0, n_ing, n_walks).astype(np.int32)
    reps = [pats[i % len(pats)] for i in range(n_walks)]
    pat_lo = np.asarray([b[0] for p in reps for b in p], dtype=np.int32)
    pat_hi = np.asarray([b[1] for p in reps for b in p], dtype=np.int32)
    pat_off = np.zeros(n_walks + 1, dtype=np.int64)
    np.cumsum([len(p) for p in reps], out=pat_off[1:])
    uniforms = rng.random((n_walks, walk_length - 1))
    out_tokens = np.zeros((n_walks, walk_length), dtype=np.int32)
    out_lens = np.zeros(n_walks, dtype=np.int32)

    def run(impl):
        impl.generate_walk_batch(
            starts, pat_lo, pat_hi, pat_off, uniforms, index.indptr, index.nbr,
            index.cumw, index.bucket_starts, walk_length, out_tokens, out_lens,
        )

    out = {"numpy": _time(lambda: run(ref), repeats)}
    if kernels.HAVE_COMPILED:
        out["compiled"] = _time(lambda: run(kernels._impl), repeats)
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=10)
    args = parser.parse_args()

    print(f"active backend: {kernels.backend_name()}")
    rows = [
        ("sgns toy (240 rows, dim 48, batch 8192)", bench_sgns(240, 48, 8192, 5, args.repeats)),
        ("sgns full (4037 rows, dim 300, batch 32768)", bench_sgns(4037, 300, 32768, 5, max(3, args.repeats // 3))),
        ("walks toy (200 nodes, len 20, 256 walks)", bench_walks(200, 40, 20, args.repeats)),
        ("walks full (1790 nodes, len 50, 256 walks)", bench_walks(1790, 400, 50, args.repeats)),
    ]
    print(f"{'case':<46} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, result in rows:
        numpy_ms = result["numpy"] * 1000
        if "compiled" in result:
            compiled_ms = result["compiled"] * 1000
            print(f"{name:<46} {numpy_ms:>8.2f}ms {compiled_ms:>8.2f}ms {numpy_ms / compiled_ms:>7.1f}x")
        else:
            print(f"{name:<46} {numpy_ms:>8.2f}ms {'n/a':>10} {'':>8}")


if __name__ == "__main__":
    main()
