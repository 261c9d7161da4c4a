from __future__ import annotations

import numpy as np
import pytest
from sklearn.metrics import normalized_mutual_info_score

from epicure.geometry import (
    GeometryError,
    avg_pairwise_cosine,
    bootstrap_ci,
    cluster_metrics,
    geometry_report,
    kmeans_label_nmi,
    knn_jaccard_purity,
    knn_purity,
    label_silhouette,
    nmi_from_table,
    participation_ratio,
    pca_variance_shares,
    soft_nmi,
)


class TestParticipationRatio:
    def test_rank_one_is_one(self):
        rng = np.random.default_rng(0)
        X = np.outer(rng.normal(size=200), rng.normal(size=20))
        assert participation_ratio(X) == pytest.approx(1.0, abs=1e-9)

    def test_isotropic_gaussian_near_dim(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(5000, 50))
        assert 45 <= participation_ratio(X) <= 50

    def test_rotation_invariance(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 20)) @ np.diag(np.linspace(0.2, 3.0, 20))
        Q, _ = np.linalg.qr(rng.normal(size=(20, 20)))
        assert abs(participation_ratio(X @ Q) - participation_ratio(X)) < 1e-9

    def test_identical_rows_error(self):
        with pytest.raises(GeometryError):
            participation_ratio(np.ones((10, 4)))


class TestAvgPairwiseCosine:
    def test_orthonormal_rows_zero(self):
        assert avg_pairwise_cosine(np.eye(20)) == pytest.approx(0.0, abs=1e-12)

    def test_identical_rows_one(self):
        X = np.tile(np.asarray([1.0, 2.0, 3.0]), (15, 1))
        assert avg_pairwise_cosine(X) == pytest.approx(1.0, abs=1e-12)

    def test_exact_matches_double_loop_oracle(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(1000, 16))
        U = X / np.linalg.norm(X, axis=1, keepdims=True)
        total, count = 0.0, 0
        for i in range(len(U)):
            for j in range(i + 1, len(U)):
                total += float(U[i] @ U[j])
                count += 1
        assert avg_pairwise_cosine(X) == pytest.approx(total / count, abs=1e-12)

    def test_subsample_within_three_sigma_of_exact(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(600, 8)) + 0.3
        exact = avg_pairwise_cosine(X)
        sub = avg_pairwise_cosine(X, exact_limit=10, seed=7)
        U = X / np.linalg.norm(X, axis=1, keepdims=True)
        i = rng.integers(0, len(U), 20_000)
        j = rng.integers(0, len(U), 20_000)
        spread = np.einsum("nd,nd->n", U[i], U[j]).std()
        assert abs(sub - exact) < 3 * spread / np.sqrt(1_000_000)

    def test_zero_norm_rows_excluded(self):
        X = np.vstack([np.eye(3), np.zeros(3)])
        assert avg_pairwise_cosine(X) == pytest.approx(0.0, abs=1e-12)


class TestNMI:
    def test_identical_labelings_give_one(self):
        labels = ["a", "b", "c", "a", "b", "c"] * 10
        classes = sorted(set(labels))
        y = np.asarray([classes.index(l) for l in labels])
        table = np.zeros((3, 3))
        np.add.at(table, (y, y), 1.0)
        assert nmi_from_table(table) == pytest.approx(1.0, abs=1e-12)

    def test_matches_sklearn_on_hard_tables(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rng.integers(0, 4, size=200)
            b = rng.integers(0, 3, size=200)
            table = np.zeros((4, 3))
            np.add.at(table, (a, b), 1.0)
            ours = nmi_from_table(table)
            theirs = normalized_mutual_info_score(a, b, average_method="arithmetic")
            assert ours == pytest.approx(theirs, abs=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        table = rng.integers(0, 9, size=(5, 7)).astype(float)
        assert nmi_from_table(table) == pytest.approx(nmi_from_table(table.T), abs=1e-12)

    def test_permuted_labels_near_zero(self):
        rng = np.random.default_rng(7)
        X = np.concatenate([rng.normal(loc=c * 4, size=(250, 6)) for c in range(4)])
        labels = [f"g{c}" for c in range(4) for _ in range(250)]
        rng.shuffle(labels)
        assert kmeans_label_nmi(X, labels, seed=0) < 0.05

    def test_planted_clusters_recovered(self):
        rng = np.random.default_rng(8)
        centers = rng.normal(size=(3, 5)) * 6  # distinct directions, not collinear shifts
        X = np.concatenate([centers[c] + rng.normal(scale=0.5, size=(60, 5)) for c in range(3)])
        labels = [f"g{c}" for c in range(3) for _ in range(60)]
        assert kmeans_label_nmi(X, labels, seed=0) > 0.9


class TestSoftNMI:
    def test_planted_multilabel_beats_shuffle(self):
        rng = np.random.default_rng(9)
        centers = rng.normal(size=(8, 12)) * 4
        rows, tags = [], []
        regions = [f"r{i}" for i in range(8)]
        for i in range(800):
            r = int(rng.integers(0, 8))
            vec = centers[r] + rng.normal(scale=0.6, size=12)
            t = {regions[r]}
            if rng.random() < 0.15:
                r2 = int(rng.integers(0, 8))
                if r2 != r:
                    t.add(regions[r2])
                    vec = (vec + centers[r2]) / 2
            rows.append(vec)
            tags.append(tuple(sorted(t)))
        X = np.asarray(rows)
        planted = soft_nmi(X, tags, seed=0)
        shuffled = list(tags)
        rng.shuffle(shuffled)
        assert planted > soft_nmi(X, shuffled, seed=0)
        assert 0.0 <= planted <= 1.0


class TestKnnAndSilhouette:
    def _clusters(self):
        rng = np.random.default_rng(10)
        centers = rng.normal(size=(3, 6)) * 8
        X = np.concatenate([centers[c] + rng.normal(scale=0.5, size=(40, 6)) for c in range(3)])
        labels = [f"g{c}" for c in range(3) for _ in range(40)]
        return X, labels

    def test_knn_purity_high_on_clusters(self):
        X, labels = self._clusters()
        assert knn_purity(X, labels, k=5) > 0.95

    def test_knn_purity_range(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(50, 4))
        labels = [f"g{i % 5}" for i in range(50)]
        assert 0.0 <= knn_purity(X, labels) <= 1.0

    def test_jaccard_purity_bounds_and_signal(self):
        X, labels = self._clusters()
        tags = [(l,) for l in labels]
        assert knn_jaccard_purity(X, tags, k=5) > 0.95

    def test_silhouette_excludes_singletons(self, caplog):
        X, labels = self._clusters()
        labels = labels[:-1] + ["lonely"]
        value = label_silhouette(X, labels)
        assert -1.0 <= value <= 1.0
        assert "lonely" in caplog.text

    def test_silhouette_needs_two_populated_labels(self):
        with pytest.raises(GeometryError):
            label_silhouette(np.eye(3), ["a", "a", "b"])


class TestBootstrap:
    def test_constant_metric_degenerate_ci(self):
        lo, hi = bootstrap_ci(lambda idx: 1.25, 100, seed=0)
        assert lo == hi == 1.25

    def test_seeded_runs_identical(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=500)
        metric = lambda idx: float(x[idx].mean())
        assert bootstrap_ci(metric, 500, seed=3) == bootstrap_ci(metric, 500, seed=3)

    def test_ci_width_near_analytic_for_sample_mean(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=1000)
        metric = lambda idx: float(x[idx].mean())
        lo, hi = bootstrap_ci(metric, 1000, n_iter=200, frac=0.8, seed=5)
        width = hi - lo
        analytic = 2 * 1.96 * x.std() / np.sqrt(0.8 * 1000)
        assert width == pytest.approx(analytic, rel=0.2)
        assert width > 0


class TestReports:
    def test_cluster_metrics_shapes(self):
        rng = np.random.default_rng(14)
        X = np.concatenate([rng.normal(loc=c * 5, size=(30, 6)) for c in range(2)])
        labels = ["a"] * 30 + ["b"] * 30
        single = cluster_metrics(X, labels, mode="single", seed=0, ci_iters=20)
        assert set(single) == {"n", "nmi", "knn5_purity", "silhouette"}
        for key in ("nmi", "knn5_purity", "silhouette"):
            lo, hi = single[key]["ci95"]
            assert lo <= hi

        tags = [("a",)] * 30 + [("a", "b")] * 5 + [("b",)] * 25
        multi = cluster_metrics(X, tags, mode="multi", seed=0, ci_iters=20)
        assert set(multi) == {"n", "soft_nmi", "knn5_jaccard", "silhouette"}

    def test_geometry_report_smoke(self, small_vocab):
        from conftest import micro_bundle

        rng = np.random.default_rng(15)
        bundle = micro_bundle(n=6, dim=8, vocab=small_vocab, vectors=rng.normal(size=(6, 8)))
        report = geometry_report(bundle.model, small_vocab, seed=0, ci_iters=5)
        iso = report["isotropy"]
        assert 1 <= iso["participation_ratio"] <= 8
        assert iso["pca_top10_variance"] <= iso["pca_top50_variance"] + 1e-12
        assert report["n_ingredients"] == 6


def test_pca_shares_monotone():
    rng = np.random.default_rng(16)
    X = rng.normal(size=(100, 60)) @ np.diag(np.linspace(0.1, 2, 60))
    top10, top50 = pca_variance_shares(X)
    assert 0 <= top10 <= top50 <= 1
