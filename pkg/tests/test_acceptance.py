"""Acceptance suite: one test per criterion, each at its stated tolerance.

A PASS/FAIL line per criterion prints in the terminal summary. The
planted-structure criteria run against the bundled toy fixture (200
ingredients, 5,000 recipes, two planted cuisines, 30 compounds in 3 types)
through the real pipeline, single-worker.
"""

from __future__ import annotations

import json
import math
import time


import numpy as np
import pytest
from fastapi.testclient import TestClient

from epicure import cli
from epicure._kernels import ref
from epicure.artifacts import read_json
from epicure.factors import (
    fastica_multiseed,
    match_components,
    modes_from_members,
)
from epicure.geometry import (
    avg_pairwise_cosine,
    bootstrap_ci,
    kmeans_label_nmi,
    nmi_from_table,
    participation_ratio,
)
from epicure.graphs import build_typed_graph, compute_npmi_graph, load_typed_graph
from epicure.operators import brute_force_neighbors, nearest_neighbors, ranked_neighbors, rotate_toward
from epicure.sgns import batch_loss
from epicure.service import create_app, load_registry
from epicure.walks import WalkSchema, load_walks, sample_round_templates, validate_walk_roles

from conftest import micro_bundle, record_acceptance, synthetic_vocab
from test_factors import planted_laplace, planted_mixture
from test_graphs import corpus_from_sets, npmi_oracle, random_corpus


def test_npmi_oracle_twenty_random_corpora():
    """Edge sets and weights match an O(V^2) brute-force oracle to 1e-12."""
    started = time.monotonic()
    rng = np.random.default_rng(2024)
    checked_edges = 0
    for trial in range(20):
        n_ing = int(rng.integers(10, 51))
        n_recipes = int(rng.integers(50, 501))
        min_count = int(rng.integers(1, 4))
        sets = random_corpus(rng, n_ing, n_recipes)
        graph = compute_npmi_graph(corpus_from_sets(sets, n_ing), min_recipe_count=min_count)
        got = {(int(i), int(j)): w for i, j, w in zip(graph.edges_i, graph.edges_j, graph.weights)}
        want = npmi_oracle(sets, n_ing, min_count)
        assert set(got) == set(want)
        for key, value in want.items():
            assert abs(got[key] - value) <= 1e-12
        checked_edges += len(want)
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    record_acceptance("npmi-oracle", f"20 corpora, {checked_edges} edges, {elapsed:.1f}s")


def test_typed_graph_filter_and_replication(tmp_path):
    rng = np.random.default_rng(7)
    vocab = synthetic_vocab(40)
    rows = ["ingredient_name,compound_id,categories"]
    cats_of: dict[str, set[str]] = {}
    links: dict[str, set[int]] = {}
    categories = ["citrus", "fatty", "earthy", "minty"]
    for c in range(25):
        comp = f"c{c:02d}"
        cats = set(rng.choice(categories, size=int(rng.integers(1, 4)), replace=False))
        cats_of[comp] = cats
        for ing in rng.choice(40, size=int(rng.integers(1, 6)), replace=False):
            rows.append(f"ing_{ing:03d},{comp},{'|'.join(sorted(cats))}")
            links.setdefault(comp, set()).add(int(ing))
    comp_file = tmp_path / "c.csv"
    comp_file.write_text("\n".join(rows) + "\n", encoding="utf-8")

    sets = [set(int(i) for i in rng.integers(0, 40, size=5)) for _ in range(300)]
    cooc = compute_npmi_graph(corpus_from_sets(sets, 40), min_recipe_count=1)
    graph = build_typed_graph(cooc, comp_file, vocab, min_compound_degree=2)

    # replication arithmetic: k categories => k typed nodes for surviving compounds
    surviving = {c for c, members in links.items() if len(members) >= 2}
    assert graph.n_compounds == sum(len(cats_of[c]) for c in surviving)
    expected_edges = sum(len(cats_of[c]) * len(links[c]) for c in surviving)
    assert len(graph.ic_ing) == expected_edges
    # post-filter degrees and hub recount
    degrees = np.bincount(graph.ic_comp, minlength=graph.n_compounds)
    assert np.all(degrees >= 2)
    expected_hubs = set().union(*(links[c] for c in surviving)) if surviving else set()
    assert set(np.flatnonzero(graph.hub_flags).tolist()) == expected_hubs
    record_acceptance(
        "typed-graph-filter",
        f"{graph.n_compounds} typed nodes, {len(expected_hubs)} hubs recounted",
    )


def test_walk_conformance_and_coverage(toy_run):
    out = toy_run["out"]
    total_walks = 0
    for variant in ("cooc", "core", "chem"):
        graph = load_typed_graph(
            out / "graph" / ("graph_cooc.bin" if variant == "cooc" else "graph.bin")
        )
        corpus = load_walks(out / variant / "walks")
        assert validate_walk_roles(corpus, graph) == 0
        total_walks += corpus.n_walks
        if variant == "cooc":
            assert corpus.n_tokens == 0 or corpus.tokens.max() < graph.n_ingredients
        if variant == "chem":
            assert not np.any(corpus.kinds == 0)

    schema = WalkSchema("chem", ii_repeat=0)
    for seed in range(1000):
        templates = sample_round_templates(schema, np.random.default_rng(seed))
        cross = [t for t in templates if t.kind == "cross_type"]
        assert {t.type_x for t in cross} == set(range(15))
        assert {t.type_y for t in cross} == set(range(15))
    record_acceptance(
        "walk-conformance", f"{total_walks} walks replay-validated, 1000 rounds covered"
    )


def test_sgns_gradient_and_zero_logit_loss():
    emb = np.zeros((3, 5))
    ctx = np.zeros((3, 5))
    loss0 = batch_loss(emb, ctx, np.asarray([0]), np.asarray([1]), np.asarray([[2, 2, 1, 2, 1]]))
    assert loss0 == 6 * math.log(2)

    rng = np.random.default_rng(0)
    rows, dim = 5, 6
    emb = rng.normal(scale=0.6, size=(rows, dim))
    ctx = rng.normal(scale=0.6, size=(rows, dim))
    centers = np.asarray([0, 1, 2, 3, 4, 0, 2])
    contexts = np.asarray([1, 2, 3, 4, 0, 3, 1])
    negatives = rng.integers(0, rows, size=(7, 5))
    _, rows_e, grads_e, rows_c, grads_c = ref.sgns_gradients(centers, contexts, negatives, emb, ctx)
    dense = {"emb": np.zeros_like(emb), "ctx": np.zeros_like(ctx)}
    dense["emb"][rows_e] = grads_e
    dense["ctx"][rows_c] = grads_c

    eps = 1e-5
    worst = 0.0
    for key, mat in (("emb", emb), ("ctx", ctx)):
        for r in range(rows):
            for d in range(dim):
                orig = mat[r, d]
                mat[r, d] = orig + eps
                up = batch_loss(emb, ctx, centers, contexts, negatives)
                mat[r, d] = orig - eps
                down = batch_loss(emb, ctx, centers, contexts, negatives)
                mat[r, d] = orig
                fd = (up - down) / (2 * eps)
                denom = max(abs(fd), abs(dense[key][r, d]), 1e-8)
                worst = max(worst, abs(fd - dense[key][r, d]) / denom)
    assert worst < 1e-5
    record_acceptance("sgns-gradient", f"max relative error {worst:.2e}")


def test_planted_structure_end_to_end(toy_run):
    out = toy_run["out"]
    # single-worker training budget: < 5 minutes for the three variants
    train_walltime = 0.0
    for variant in ("cooc", "core", "chem"):
        train_walltime += read_json(out / variant / "walks" / "timings.json")["wall_time_s"]
        train_walltime += read_json(out / variant / "model" / "timings.json")["wall_time_s"]
    assert train_walltime < 300.0

    rho = {}
    for variant in ("cooc", "core", "chem"):
        probes = read_json(out / variant / "model" / "probes.json")
        by_name = {r["name"]: r for r in probes["probes"]}
        for region in ("east_asian", "mediterranean"):
            assert by_name[region]["estimate"] > 2.0, (variant, region)
        rho[variant] = by_name["cf_citrus"]["estimate"]
    assert rho["chem"] >= rho["cooc"]
    record_acceptance(
        "planted-end-to-end",
        f"walk+train {train_walltime:.0f}s, min d>2.0, rho chem {rho['chem']:.2f} >= cooc {rho['cooc']:.2f}",
    )


def test_geometry_oracles():
    rng = np.random.default_rng(1)
    # participation ratio
    rank1 = np.outer(rng.normal(size=300), rng.normal(size=40))
    assert abs(participation_ratio(rank1) - 1.0) <= 1e-9
    iso = rng.normal(size=(5000, 50))
    assert 45 <= participation_ratio(iso) <= 50
    # exact avg pairwise cosine vs O(n^2) oracle
    X = rng.normal(size=(500, 10))
    U = X / np.linalg.norm(X, axis=1, keepdims=True)
    total = sum(float(U[i] @ U[j]) for i in range(500) for j in range(i + 1, 500))
    oracle = total / (500 * 499 / 2)
    assert abs(avg_pairwise_cosine(X) - oracle) <= 1e-12
    # NMI identities
    y = rng.integers(0, 6, size=1000)
    table = np.zeros((6, 6))
    np.add.at(table, (y, y), 1.0)
    assert abs(nmi_from_table(table) - 1.0) <= 1e-12
    centers = rng.normal(size=(4, 8)) * 5
    Xc = np.concatenate([centers[c] + rng.normal(size=(250, 8)) for c in range(4)])
    labels = [f"g{c}" for c in range(4) for _ in range(250)]
    rng.shuffle(labels)
    permuted_nmi = kmeans_label_nmi(Xc, labels, seed=0)
    assert permuted_nmi < 0.05
    # bootstrap determinism
    vals = rng.normal(size=200)
    metric = lambda idx: float(vals[idx].mean())
    assert bootstrap_ci(metric, 200, seed=11) == bootstrap_ci(metric, 200, seed=11)
    record_acceptance("geometry-oracles", f"permuted NMI {permuted_nmi:.3f}")


def test_ica_recovery_criteria():
    X, true_dirs = planted_laplace(n=5000, sources=5, dim=20, seed=0)
    fs = fastica_multiseed(X, n_components=5, seeds=10, base_seed=0)
    _, matched = match_components(true_dirs, fs.components)
    assert matched.min() > 0.95

    rng = np.random.default_rng(3)
    A = rng.normal(size=(6, 12))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    _, dup = match_components(A, A[rng.permutation(6)])
    assert abs(float(np.mean(dup)) - 1.0) <= 1e-6

    null = rng.normal(size=(1000, 50))
    fs_null = fastica_multiseed(null, n_components=10, seeds=6, base_seed=0)
    assert np.median(fs_null.split_half) <= 0.6
    assert fs_null.n_kept <= 5
    record_acceptance(
        "ica-recovery",
        f"planted min |cos| {matched.min():.3f}, null kept {fs_null.n_kept}/10",
    )


def test_gmm_bic_and_coherence_margin(toy_run):
    hits = 0
    for trial in range(20):
        X = planted_mixture(seed=trial)
        ids = np.arange(len(X))
        modes = modes_from_members(X, ids, ids, "t", seed=trial)
        assert all(len(m.member_ids) >= 6 for m in modes)
        hits += len(modes) == 3
    assert hits >= 18

    margins = {}
    for variant in ("cooc", "core", "chem"):
        atlas = read_json(toy_run["out"] / variant / "model" / "atlas.json")
        for mode in atlas["modes"]:
            assert len(mode["member_ids"]) >= 6
        emergent = [m["coherence"] for m in atlas["modes"] if m["source"].startswith("F_")]
        assert emergent, variant
        margins[variant] = float(np.mean(emergent)) - atlas["baseline"]
        assert margins[variant] >= 0.2, variant
    record_acceptance(
        "gmm-bic",
        f"K=3 in {hits}/20 trials, margins "
        + "/".join(f"{margins[v]:+.2f}" for v in ("cooc", "core", "chem")),
    )


def test_slerp_invariants_bulk(toy_run):
    rng = np.random.default_rng(4)
    worst_norm = worst_cos = worst_sin = 0.0
    for _ in range(10_000):
        dim = int(rng.integers(3, 16))
        s = rng.normal(size=dim)
        s /= np.linalg.norm(s)
        d = rng.normal(size=dim)
        theta = float(rng.uniform(0.0, 90.0))
        q = rotate_toward(s, d, theta)
        d_perp = d - (d @ s) * s
        d_perp /= np.linalg.norm(d_perp)
        worst_norm = max(worst_norm, abs(np.linalg.norm(q) - 1.0))
        worst_cos = max(worst_cos, abs(float(q @ s) - math.cos(math.radians(theta))))
        worst_sin = max(worst_sin, abs(float(q @ d_perp) - math.sin(math.radians(theta))))
    assert worst_norm <= 1e-9 and worst_cos <= 1e-9 and worst_sin <= 1e-9

    registry = load_registry(toy_run["out"] / "registry.json")
    bundle = registry["bundles"]["cooc"]
    seed_name = bundle.model.names[0]
    seed_row = 0
    target = np.random.default_rng(5).normal(size=bundle.model.dim)
    from epicure.operators import slerp_rotate

    ranked0, _ = slerp_rotate(bundle, seed_name, target, 0.0, k=8)
    assert ranked0 == nearest_neighbors(bundle, seed_name, k=8)

    s_hat = bundle.unit[seed_row]
    d_orth = target - (target @ s_hat) * s_hat
    d_orth /= np.linalg.norm(d_orth)
    ranked90, q90 = slerp_rotate(bundle, seed_name, d_orth, 90.0, k=8)
    np.testing.assert_allclose(q90, d_orth, atol=1e-12)
    own_neighborhood = ranked_neighbors(bundle, d_orth, 8, exclude_rows=(seed_row,))
    assert [n for n, _ in ranked90] == [n for n, _ in own_neighborhood]
    for (_, a), (_, b) in zip(ranked90, own_neighborhood):
        assert a == pytest.approx(b, abs=1e-12)
    record_acceptance(
        "slerp-invariants",
        f"1e4 draws, max norm err {worst_norm:.1e}, max cos err {worst_cos:.1e}",
    )


def test_operator_oracle_on_all_models(toy_run):
    rng = np.random.default_rng(6)
    bundles = [micro_bundle(n=50, dim=7, seed=s, name=f"micro{s}") for s in range(3)]
    registry = load_registry(toy_run["out"] / "registry.json")
    bundles.extend(registry["bundles"].values())

    checked = 0
    for bundle in bundles:
        for _ in range(8):
            q = rng.normal(size=bundle.model.dim)
            q /= np.linalg.norm(q)
            exclude = (int(rng.integers(0, bundle.n_ingredients)),)
            for k in (1, 5, 12):
                fast = ranked_neighbors(bundle, q, k, exclude_rows=exclude)
                slow = brute_force_neighbors(bundle, q, k, exclude_rows=exclude)
                assert [n for n, _ in fast] == [n for n, _ in slow]
                checked += 1
    record_acceptance("operator-oracle", f"{checked} query/k combinations, incl. 3 trained models")


def test_determinism_strict_reruns(tmp_path):
    from epicure.pipeline import run_pipeline
    from test_pipeline import tree_digest, write_mini_inputs

    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    out_a = run_pipeline(write_mini_inputs(a), strict=True)
    out_b = run_pipeline(write_mini_inputs(b), strict=True)
    da, db = tree_digest(out_a), tree_digest(out_b)
    assert set(da) == set(db)
    mismatched = [k for k in da if da[k] != db[k] and "timings" not in k]
    assert not mismatched, mismatched

    before = tree_digest(out_a)
    run_pipeline(a / "epicure.ini", strict=True)
    assert tree_digest(out_a) == before
    n_files = len([k for k in da if "timings" not in k])
    record_acceptance("determinism", f"{n_files} artifact files bit-identical across fresh runs")


def test_cli_api_equivalence_and_validation(toy_run, tmp_path, capsys):
    registry_path = toy_run["out"] / "registry.json"
    registry = load_registry(registry_path)
    client = TestClient(create_app(registry))

    queries = 0
    for variant in ("cooc", "core", "chem"):
        seed = registry["bundles"][variant].model.names[3]
        cli.main(["query", "neighbors", "--registry", str(registry_path),
                  "--model", variant, "--seed", seed, "-k", "5"])
        cli_payload = json.loads(capsys.readouterr().out)
        api_payload = client.get(
            "/v1/neighbors", params={"model": variant, "seed": seed, "k": 5}
        ).json()
        assert cli_payload == api_payload

        cli.main(["query", "mode", "--registry", str(registry_path),
                  "--model", variant, "--seed", seed])
        cli_payload = json.loads(capsys.readouterr().out)
        api_payload = client.get(
            "/v1/modes/closest", params={"model": variant, "seed": seed}
        ).json()
        assert cli_payload == api_payload

        cli.main(["query", "rotate", "--registry", str(registry_path),
                  "--model", variant, "--seed", seed, "-k", "5",
                  "--angle", "60", "--toward", "cuisine:east_asian"])
        cli_payload = json.loads(capsys.readouterr().out)
        api_payload = client.post(
            "/v1/rotate",
            json={"model": variant, "seed": seed, "k": 5, "angle_deg": 60.0,
                  "target": {"kind": "supervised", "spec": "cuisine:east_asian", "style": "diff"}},
        ).json()
        assert cli_payload == api_payload
        queries += 3

    # an invariant-violating bundle refuses to serve
    from epicure.artifacts import write_json
    from epicure.factors import Mode, ModeAtlas, save_atlas
    from epicure.service import RegistryError
    import shutil

    bad_dir = tmp_path / "bad"
    shutil.copytree(toy_run["out"] / "cooc" / "model", bad_dir)
    pole = np.zeros(48)
    pole[0] = 1.0
    save_atlas(
        ModeAtlas(variant="bad", modes=[Mode("F_0", 0, [123456], pole=pole)], baseline=0.0),
        bad_dir / "atlas.json",
    )
    write_json(
        tmp_path / "bad_registry.json",
        {"vocab": str(toy_run["out"] / "ingest" / "vocab.csv"),
         "models": [{"name": "bad", "dir": str(bad_dir)}]},
    )
    with pytest.raises(RegistryError, match="123456"):
        load_registry(tmp_path / "bad_registry.json")
    record_acceptance("cli-api-equivalence", f"{queries} golden queries, invalid bundle refused")
