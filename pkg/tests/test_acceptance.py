"""Acceptance gate: every criterion at its stated tolerance and budget.

Each test prints one `[PASS]`/`[FAIL]` line (run with `pytest -s` to see
them live). Oracle-equivalence criteria compare the fast paths against
the brute-force references in oracles.py; the directional criteria run
the full pipeline on the default synthetic benchmark over the five
fixed seeds 0..4.
"""

import json
import time
from dataclasses import replace

import numpy as np

import oracles
from oodkit import (
    PipelineConfig,
    SynthSpec,
    ablation_epoch_averaging,
    ablation_k_sweep,
    ablation_label_noise,
    cluster_accuracy,
    cross_entropy_grad,
    cross_entropy_loss,
    fit_gaussians,
    generate_synthetic,
    kmeans,
    knn_score,
    mahalanobis_score,
    roc_auc,
    run_pipeline,
    scan_loss,
    scan_loss_grad,
)
from oodkit.adaptation import init_head
from oodkit.clustering import build_knn_graph
from oodkit.scoring import GaussianBank

SEEDS = (0, 1, 2, 3, 4)


def _gate(name, budget_s, elapsed, failures, detail):
    ok = not failures and elapsed < budget_s
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} "
          f"({elapsed:.1f}s / budget {budget_s:.0f}s)")
    assert not failures, f"{name}: " + "; ".join(failures)
    assert elapsed < budget_s, f"{name}: runtime {elapsed:.1f}s over budget {budget_s}s"


def test_roc_auc_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    failures = []
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(1, 201))
        m = int(rng.integers(1, 201))
        # coarse grid injects plenty of duplicates within and across sides
        a = rng.integers(0, 25, n) / 8.0
        b = rng.integers(0, 25, m) / 8.0 + rng.choice([0.0, 0.25])
        err = abs(roc_auc(a, b) - oracles.pair_count_auc(a, b))
        worst = max(worst, err)
        if err > 1e-12:
            failures.append(f"trial {trial}: error {err:.3e}")
    _gate("ROC-AUC oracle equivalence (100 instances)", 5.0,
          time.perf_counter() - t0, failures, f"max |diff| = {worst:.2e} <= 1e-12")


def test_knn_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    failures = []
    worst = 0.0
    for trial in range(50):
        n_train = int(rng.integers(12, 501))
        n_test = int(rng.integers(1, 101))
        d = int(rng.integers(2, 17))
        train = rng.standard_normal((n_train, d))
        train /= np.linalg.norm(train, axis=1, keepdims=True)
        test = rng.standard_normal((n_test, d))
        test /= np.linalg.norm(test, axis=1, keepdims=True)
        k = int(rng.choice([1, 2, 5, 10]))
        err = np.max(np.abs(knn_score(train, test, k).scores
                            - oracles.knn_scores(train, test, k)))
        worst = max(worst, err)
        if err > 1e-9:
            failures.append(f"trial {trial} (k={k}): error {err:.3e}")
    _gate("kNN oracle equivalence (50 instances, k in {1,2,5,10})", 10.0,
          time.perf_counter() - t0, failures, f"max |diff| = {worst:.2e} <= 1e-9")


def test_mahalanobis_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    failures = []
    worst = 0.0
    for trial in range(20):
        d = int(rng.integers(2, 6))
        K = int(rng.integers(1, 4))
        rows, labels = [], []
        for c in range(K):
            mix = rng.standard_normal((d, d)) + np.eye(d)
            rows.append(rng.standard_normal(d) * 4 + rng.standard_normal((30, d)) @ mix)
            labels.extend([c] * 30)
        train = np.vstack(rows)
        bank = fit_gaussians(train, np.asarray(labels), shrinkage=1e-3)
        test = rng.standard_normal((20, d)) * 3
        err = np.max(np.abs(mahalanobis_score(bank, test).scores
                            - oracles.mahalanobis_min_dist(bank.means, bank.covariances, test)))
        worst = max(worst, err)
        if err > 1e-8:
            failures.append(f"trial {trial}: error {err:.3e}")

    # identity covariance reduces to nearest-centroid Euclidean distance
    means = rng.standard_normal((4, 3)) * 5
    eye = np.broadcast_to(np.eye(3), (4, 3, 3)).copy()
    bank = GaussianBank(means=means, covariances=eye.copy(), chol=eye,
                        counts=np.full(4, 10), cluster_ids=np.arange(4), shrinkage=0.0)
    test = rng.standard_normal((50, 3)) * 4
    expected = np.min(np.linalg.norm(test[:, None, :] - means, axis=2), axis=1)
    id_err = np.max(np.abs(mahalanobis_score(bank, test).scores - expected))
    if id_err > 1e-9:
        failures.append(f"identity-covariance error {id_err:.3e}")
    _gate("Mahalanobis oracle equivalence (20 instances + identity case)", 5.0,
          time.perf_counter() - t0, failures,
          f"max |diff| = {worst:.2e} <= 1e-8, identity {id_err:.2e} <= 1e-9")


def test_gradient_checks():
    t0 = time.perf_counter()
    failures = []
    worst_ce, worst_scan = 0.0, 0.0

    data_rng = np.random.default_rng(3)
    x = data_rng.standard_normal((30, 5))
    y = data_rng.integers(0, 3, 30)
    for point in range(10):
        head = init_head(5, 6, 3, seed=100 + point)
        _, grads = cross_entropy_grad(head, x, y)
        fd = oracles.finite_difference_grads(lambda h: cross_entropy_loss(h, x, y), head)
        err = oracles.relative_grad_error(grads, fd)
        worst_ce = max(worst_ce, err)
        if err > 1e-4:
            failures.append(f"cross-entropy point {point}: rel err {err:.3e}")

    m = data_rng.standard_normal((30, 5))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    graph = build_knn_graph(m, 3)
    for point in range(10):
        head = init_head(5, 6, 3, seed=200 + point)
        _, grads = scan_loss_grad(head, m, graph, 5.0)
        fd = oracles.finite_difference_grads(lambda h: scan_loss(h, m, graph, 5.0), head)
        err = oracles.relative_grad_error(grads, fd)
        worst_scan = max(worst_scan, err)
        if err > 1e-4:
            failures.append(f"cluster objective point {point}: rel err {err:.3e}")
    _gate("Gradient checks (cross-entropy + cluster objective, 10 points each)",
          30.0, time.perf_counter() - t0, failures,
          f"max rel err CE {worst_ce:.2e}, cluster {worst_scan:.2e} <= 1e-4")


def test_kmeans_inertia_and_fixture():
    t0 = time.perf_counter()
    failures = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        centers = rng.standard_normal((4, 6)) * 3
        x = np.vstack([c + rng.standard_normal((30, 6)) for c in centers])
        assignment, _ = kmeans(x, K=4, seed=seed)
        trace = assignment.inertia_trace
        if any(b > a + 1e-9 for a, b in zip(trace, trace[1:])):
            failures.append(f"seed {seed}: inertia increased along {trace}")

    fixture = np.array([[0.0], [0.1], [10.0], [10.1]])
    assignment, centroids = kmeans(fixture, K=2, seed=0)
    oracle_inertia, _, oracle_cents = oracles.best_kmeans_partition(fixture, 2)
    got = sorted(centroids.ravel().tolist())
    if got != [0.05, 10.05]:
        failures.append(f"fixture centroids {got} != [0.05, 10.05]")
    if sorted(oracle_cents.ravel().tolist()) != got:
        failures.append("fixture centroids disagree with all-partitions oracle")
    if abs(assignment.inertia_trace[-1] - oracle_inertia) > 1e-15:
        failures.append(f"fixture inertia {assignment.inertia_trace[-1]} != {oracle_inertia}")
    _gate("k-means inertia monotone (20 seeds) + exact 1-D fixture", 5.0,
          time.perf_counter() - t0, failures,
          f"centroids {got}, inertia {assignment.inertia_trace[-1]:.4f}")


def test_clustering_accuracy_permutation_exact():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    failures = []
    for trial in range(20):
        K = int(rng.integers(2, 11))
        truth = rng.integers(0, K, 300)
        perm = rng.permutation(K)
        acc = cluster_accuracy(perm[truth], truth)
        if acc != 1.0:
            failures.append(f"trial {trial} (K={K}): accuracy {acc} != 1.0")
    _gate("Clustering accuracy = 1.0 under 20 random relabelings (K <= 10)", 5.0,
          time.perf_counter() - t0, failures, "all permutations matched exactly")


def test_end_to_end_adaptation_gain():
    t0 = time.perf_counter()
    spec = SynthSpec()  # K_normal=10, K_anom=3, d=64, n_train=2000
    cfg = PipelineConfig()
    gains, wins = [], 0
    for seed in SEEDS:
        train, truth, tin, tout = generate_synthetic(replace(spec, seed=seed))
        report = run_pipeline(train, tin, tout, replace(cfg, seed=seed), train_truth=truth)
        raw = report.auc_table["raw/knn[k=1]"] / 100.0
        adapted = report.auc_table["adapted/knn[k=1]"] / 100.0
        gains.append(adapted - raw)
        wins += adapted >= raw
    failures = []
    if wins < 4:
        failures.append(f"adapted >= raw on only {wins}/5 seeds")
    if np.mean(gains) < 0.02:
        failures.append(f"mean gain {np.mean(gains):+.4f} < +0.02")
    _gate("End-to-end adaptation gain (5 seeds)", 180.0,
          time.perf_counter() - t0, failures,
          f"wins {wins}/5, mean gain {np.mean(gains):+.4f} >= +0.02")


def test_noisy_label_scorer_ordering():
    t0 = time.perf_counter()
    spec = SynthSpec()
    cfg = PipelineConfig()
    wins = 0
    pairs = []
    for seed in SEEDS:
        train, _, tin, tout = generate_synthetic(replace(spec, seed=seed))
        report = ablation_label_noise(train, tin, tout, 0.3, replace(cfg, seed=seed))
        knn = report.auc_table["raw/knn[k=1]"]
        mahal = report.auc_table["raw/mahalanobis[noise=0.3]"]
        pairs.append((knn, mahal))
        wins += knn >= mahal
    failures = [] if wins >= 4 else [f"kNN >= Mahalanobis on only {wins}/5 seeds: {pairs}"]
    _gate("Noisy-label scorer ordering (noise=0.3, 5 seeds)", 120.0,
          time.perf_counter() - t0, failures, f"kNN >= Mahalanobis on {wins}/5 seeds")


def test_averaging_robustness():
    t0 = time.perf_counter()
    spec = SynthSpec()
    cfg = PipelineConfig()
    failures = []
    margins = []
    for seed in SEEDS:
        train, _, tin, tout = generate_synthetic(replace(spec, seed=seed))
        report = ablation_epoch_averaging(train, tin, tout, replace(cfg, seed=seed))
        averaged = report.auc_table["averaged/knn[k=1]"]
        floor = min(report.per_epoch_auc)
        margins.append(averaged - floor)
        if averaged < floor:
            failures.append(f"seed {seed}: averaged {averaged:.2f} < min epoch {floor:.2f}")
    _gate("Averaging robustness (averaged >= min epoch AUC, all 5 seeds)", 180.0,
          time.perf_counter() - t0, failures,
          f"min margin {min(margins):+.2f} AUC points")


def test_k_sweep_sanity():
    t0 = time.perf_counter()
    spec = SynthSpec()
    cfg = PipelineConfig()
    wins10, wins20 = 0, 0
    for seed in SEEDS:
        train, _, tin, tout = generate_synthetic(replace(spec, seed=seed))
        report = ablation_k_sweep(train, tin, tout, [10, 20], replace(cfg, seed=seed))
        base = report.auc_table["no-adaptation/raw/knn[k=1]"]
        wins10 += report.auc_table["K=10/adapted/knn[k=1]"] >= base
        wins20 += report.auc_table["K=20/adapted/knn[k=1]"] >= base
    failures = []
    if wins10 < 4:
        failures.append(f"K=true K beats no-adaptation on only {wins10}/5 seeds")
    if wins20 < 4:
        failures.append(f"K=2x true K beats no-adaptation on only {wins20}/5 seeds")
    _gate("K-sweep sanity (K in {10, 20} vs no adaptation, 5 seeds)", 300.0,
          time.perf_counter() - t0, failures,
          f"wins: K=10 {wins10}/5, K=20 {wins20}/5, no crashes")


def test_pipeline_determinism_byte_identical(tmp_path):
    t0 = time.perf_counter()
    from oodkit.cli import main

    spec = {"synth": {"K_normal": 4, "K_anom": 2, "d": 16, "n_train": 240,
                      "n_test_in": 60, "n_test_out": 60, "separation": 6.0,
                      "within_scale": 1.0, "seed": 0}}
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps(spec))
    data = tmp_path / "data"
    assert main(["synth", "--out-dir", str(data), "--config", str(spec_file),
                 "--quiet"]) == 0

    reports = []
    for run in (1, 2):
        out = tmp_path / f"report{run}.json"
        rc = main(["pipeline", "--train", str(data / "train.emb"),
                   "--test-in", str(data / "test_in.emb"),
                   "--test-out", str(data / "test_out.emb"),
                   "--seed", "0", "--k", "4", "--scan-epochs", "10",
                   "--hidden", "32", "--quiet", "--out", str(out)])
        assert rc == 0
        reports.append(out.read_text())

    def drop_wall_time(text):
        return [line for line in text.splitlines() if '"wall_time_s"' not in line]

    failures = []
    if drop_wall_time(reports[0]) != drop_wall_time(reports[1]):
        failures.append("reports differ beyond wall_time_s")
    _gate("Pipeline determinism (byte-identical reports modulo wall time)", 60.0,
          time.perf_counter() - t0, failures, "two runs byte-identical")
