"""ROC-AUC, synthetic benchmarks, and experiment orchestration.

`roc_auc` is the exact rank statistic with midrank tie handling. The
synthetic generator produces a multi-class normal mixture plus held-out
anomaly components, standing in for real multi-class datasets at desk
scale. `run_pipeline` wires clustering -> adaptation -> scoring ->
ROC-AUC into one report; the ablation helpers rerun it over cluster
counts, epoch checkpoints, or corrupted pseudo-labels.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .adaptation import (
    AdaptConfig,
    average_checkpoints,
    extract_features,
    finetune_head,
    init_head,
)
from .clustering import (
    ScanConfig,
    build_knn_graph,
    cluster_accuracy,
    kmeans,
    scan_train,
    self_label,
)
from .io import l2_normalize, validate_embeddings
from .scoring import (
    DEFAULT_SHRINKAGE,
    confidence_score,
    fit_gaussians,
    knn_score,
    mahalanobis_score,
)

_MEAN_PLACEMENT_ATTEMPTS = 1000


class StageError(RuntimeError):
    """A pipeline stage failed; `stage` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# ROC-AUC


def _scores_array(s, side: str) -> np.ndarray:
    arr = np.asarray(getattr(s, "scores", s), dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"empty input: {side} scores")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite value in {side} scores")
    return arr


def roc_auc(scores_in, scores_out) -> float:
    """P(out-score > in-score) + 0.5 * P(tie), by midranked ranking.

    `scores_in` are the normal side, `scores_out` the anomalous side;
    both accept plain arrays or ScoreVector. The rank sums are carried
    in exact integer arithmetic (twice-midranks are integers), so
    negating all scores yields exactly 1 - AUC.
    """
    a = _scores_array(scores_in, "in")
    b = _scores_array(scores_out, "out")
    n, m = a.size, b.size
    vals = np.concatenate([a, b])
    is_out = np.zeros(n + m, dtype=bool)
    is_out[n:] = True

    order = np.argsort(vals, kind="mergesort")
    sv = vals[order]
    so = is_out[order]
    starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])
    ends = np.r_[starts[1:], n + m]
    # twice the 1-based midrank of a tie group [s, e) is s + e + 1
    two_ranks = np.repeat(starts + ends + 1, ends - starts)
    two_r_out = int(two_ranks[so].sum())
    two_u = two_r_out - m * (m + 1)
    return two_u / (2 * n * m)


def roc_points(scores_in, scores_out) -> np.ndarray:
    """(FPR, TPR) pairs at every distinct threshold, for plotting."""
    a = _scores_array(scores_in, "in")
    b = _scores_array(scores_out, "out")
    thresholds = np.unique(np.concatenate([a, b]))[::-1]
    pts = [(0.0, 0.0)]
    for t in thresholds:
        pts.append((float((a >= t).mean()), float((b >= t).mean())))
    return np.array(pts)


# ---------------------------------------------------------------------------
# synthetic benchmark


@dataclass
class SynthSpec:
    """Multi-class Gaussian mixture benchmark parameters.

    Component means are drawn i.i.d. from N(0, (separation^2/d) I), so
    the expected distance between two means is about sqrt(2) *
    separation independent of d; draws are rejected until every pair of
    means is at distance >= separation (and > 0). Anomaly components
    get fresh means under the same constraint. All rows are
    L2-normalized after sampling.
    """

    K_normal: int = 10
    K_anom: int = 3
    d: int = 64
    n_train: int = 2000
    n_test_in: int = 500
    n_test_out: int = 500
    separation: float = 6.0
    within_scale: float = 1.6
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("K_normal", "K_anom", "d", "n_train", "n_test_in", "n_test_out"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label_noise must be in [0, 1)")


def _place_means(rng, count, d, separation, existing):
    means = list(existing)
    scale = separation / np.sqrt(d)
    placed = []
    for _ in range(count):
        for attempt in range(_MEAN_PLACEMENT_ATTEMPTS):
            cand = rng.normal(0.0, scale, size=d)
            dists = [np.linalg.norm(cand - mu) for mu in means]
            if all(dv >= separation and dv > 0.0 for dv in dists):
                means.append(cand)
                placed.append(cand)
                break
        else:
            raise ValueError(
                f"could not place a component mean after "
                f"{_MEAN_PLACEMENT_ATTEMPTS} attempts (components collide; "
                f"separation={separation})"
            )
    return np.array(placed), means


def generate_synthetic(spec: SynthSpec):
    """Sample (train, train_truth, test_in, test_out).

    train/test_in come from the K_normal mixture, test_out from the
    K_anom mixture. With label_noise > 0, that fraction of train_truth
    entries is resampled uniformly over [0, K_normal).
    """
    rng = np.random.default_rng(spec.seed)
    normal_means, all_means = _place_means(rng, spec.K_normal, spec.d, spec.separation, [])
    anom_means, _ = _place_means(rng, spec.K_anom, spec.d, spec.separation, all_means)

    def sample(means, count):
        comp = rng.integers(0, means.shape[0], size=count)
        pts = means[comp] + spec.within_scale * rng.standard_normal((count, spec.d))
        return l2_normalize(pts), comp.astype(np.int64)

    train, truth = sample(normal_means, spec.n_train)
    test_in, _ = sample(normal_means, spec.n_test_in)
    test_out, _ = sample(anom_means, spec.n_test_out)

    if spec.label_noise > 0.0:
        n_noisy = int(round(spec.label_noise * spec.n_train))
        idx = rng.choice(spec.n_train, size=n_noisy, replace=False)
        truth = truth.copy()
        truth[idx] = rng.integers(0, spec.K_normal, size=n_noisy)
    return train, truth, test_in, test_out


def corrupt_labels(labels, K: int, noise: float, seed: int) -> np.ndarray:
    """Resample a `noise` fraction of entries uniformly over [0, K)."""
    if not 0.0 <= noise < 1.0:
        raise ValueError("noise must be in [0, 1)")
    y = np.asarray(labels, dtype=np.int64).copy()
    rng = np.random.default_rng(seed)
    n_noisy = int(round(noise * y.size))
    idx = rng.choice(y.size, size=n_noisy, replace=False)
    y[idx] = rng.integers(0, K, size=n_noisy)
    return y


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    """End-to-end run configuration.

    `seed` drives every stage: the clustering and adaptation configs'
    own seed fields are overridden with values derived from it, so one
    integer pins the whole run.
    """

    method: str = "scan"  # kmeans | scan | scan+selflabel
    scan: ScanConfig = field(default_factory=ScanConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    adaptation: bool = True
    scorers: tuple = ("knn",)
    knn_k: tuple = (1,)
    shrinkage: float = DEFAULT_SHRINKAGE
    self_label_threshold: float = 0.99
    self_label_rounds: int = 1
    kmeans_max_iters: int = 100
    per_epoch_auc: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("kmeans", "scan", "scan+selflabel"):
            raise ValueError(f"unknown clustering method {self.method!r}")
        unknown = set(self.scorers) - {"knn", "mahalanobis", "confidence"}
        if unknown:
            raise ValueError(f"unknown scorers: {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scorers"] = list(self.scorers)
        d["knn_k"] = list(self.knn_k)
        return d


@dataclass
class EvalReport:
    """AUC per (feature space x scorer x params), plus run metadata.

    AUC values are percentages in [0, 100]; keys are unique strings like
    ``raw/knn[k=1]``.
    """

    auc_table: dict = field(default_factory=dict)
    clustering_accuracy: float | None = None
    per_epoch_auc: list | None = None
    config: dict = field(default_factory=dict)
    seed: int = 0
    wall_time_s: float = 0.0

    def add(self, key: str, auc_fraction: float) -> None:
        if key in self.auc_table:
            raise ValueError(f"duplicate report key {key!r}")
        pct = 100.0 * auc_fraction
        if not 0.0 <= pct <= 100.0:
            raise ValueError(f"AUC out of range for {key!r}: {pct}")
        self.auc_table[key] = pct

    def to_dict(self) -> dict:
        return {
            "auc_table": dict(self.auc_table),
            "clustering_accuracy": self.clustering_accuracy,
            "per_epoch_auc": self.per_epoch_auc,
            "config": self.config,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save_json(self, path) -> None:
        Path(path).write_text(self.to_json_str())

    def text_table(self) -> str:
        keys = sorted(self.auc_table)
        width = max([len(k) for k in keys] + [len("metric")])
        lines = [f"{'metric'.ljust(width)}  ROC-AUC(%)"]
        lines += [f"{k.ljust(width)}  {self.auc_table[k]:10.3f}" for k in keys]
        if self.clustering_accuracy is not None:
            lines.append(f"{'clustering accuracy'.ljust(width)}  {self.clustering_accuracy:10.4f}")
        return "\n".join(lines) + "\n"


def score_histogram_csv(scores_in, scores_out, path, bins: int = 50) -> None:
    """Shared-bin histogram of both score populations, one row per bin."""
    a = _scores_array(scores_in, "in")
    b = _scores_array(scores_out, "out")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    edges = np.linspace(lo, hi, bins + 1) if hi > lo else np.linspace(lo - 0.5, lo + 0.5, bins + 1)
    h_in, _ = np.histogram(a, bins=edges)
    h_out, _ = np.histogram(b, bins=edges)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_left", "bin_right", "count_in", "count_out"])
        for i in range(bins):
            w.writerow([repr(edges[i]), repr(edges[i + 1]), int(h_in[i]), int(h_out[i])])


def roc_points_csv(scores_in, scores_out, path) -> None:
    pts = roc_points(scores_in, scores_out)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["fpr", "tpr"])
        for fpr, tpr in pts:
            w.writerow([repr(fpr), repr(tpr)])


def _cluster_stage(train, cfg: PipelineConfig):
    scan_cfg = replace(cfg.scan, seed=cfg.seed)
    if cfg.method == "kmeans":
        assignment, _ = kmeans(train, scan_cfg.K, cfg.kmeans_max_iters, seed=cfg.seed)
        return None, assignment
    graph = build_knn_graph(train, scan_cfg.k_graph)
    head, assignment = scan_train(train, graph, scan_cfg)
    if cfg.method == "scan+selflabel":
        head, assignment = self_label(
            head, train, cfg.self_label_threshold, cfg.self_label_rounds,
            seed=cfg.seed + 1,
        )
    return head, assignment


def run_pipeline(train, test_in, test_out, cfg: PipelineConfig,
                 train_truth=None, plot_dir=None) -> EvalReport:
    """cluster -> adapt -> extract features -> score -> ROC-AUC.

    Scores every requested scorer on raw features and (when adaptation
    is on) on the averaged head's hidden features. Errors raised by a
    stage surface as StageError naming that stage. Deterministic given
    (inputs, cfg): rerunning yields an identical report apart from
    wall_time_s.
    """
    t0 = time.perf_counter()
    report = EvalReport(config=cfg.to_dict(), seed=cfg.seed)

    try:
        train = l2_normalize(validate_embeddings(train, "train"))
        test_in = l2_normalize(validate_embeddings(test_in, "test_in"))
        test_out = l2_normalize(validate_embeddings(test_out, "test_out"))
    except ValueError as e:
        raise StageError("io", str(e)) from e
    if test_in.shape[1] != train.shape[1] or test_out.shape[1] != train.shape[1]:
        raise StageError(
            "scoring",
            f"dimension mismatch: train d={train.shape[1]}, "
            f"test_in d={test_in.shape[1]}, test_out d={test_out.shape[1]}",
        )

    try:
        head, assignment = _cluster_stage(train, cfg)
    except (ValueError, RuntimeError) as e:
        raise StageError("clustering", str(e)) from e
    if train_truth is not None:
        report.clustering_accuracy = cluster_accuracy(assignment.labels, train_truth)

    spaces = {"raw": (train, test_in, test_out)}
    avg_head = None
    checkpoints = None
    if cfg.adaptation:
        try:
            adapt_cfg = replace(cfg.adapt, seed=cfg.seed + 1)
            init = init_head(train.shape[1], cfg.scan.hidden, assignment.K, cfg.seed + 2)
            checkpoints = finetune_head(init, train, assignment.labels, adapt_cfg)
            avg_head = average_checkpoints(checkpoints)
            spaces["adapted"] = (
                extract_features(avg_head, train),
                extract_features(avg_head, test_in),
                extract_features(avg_head, test_out),
            )
        except (ValueError, RuntimeError) as e:
            raise StageError("adaptation", str(e)) from e

    try:
        for space, (ftr, fin, fout) in spaces.items():
            for scorer in cfg.scorers:
                if scorer == "knn":
                    for k in cfg.knn_k:
                        s_in, s_out = knn_score(ftr, fin, k), knn_score(ftr, fout, k)
                        report.add(f"{space}/knn[k={k}]", roc_auc(s_in, s_out))
                        _maybe_plot(plot_dir, f"{space}_knn_k{k}", s_in, s_out)
                elif scorer == "mahalanobis":
                    bank = fit_gaussians(ftr, assignment.labels, cfg.shrinkage)
                    s_in, s_out = mahalanobis_score(bank, fin), mahalanobis_score(bank, fout)
                    report.add(f"{space}/mahalanobis", roc_auc(s_in, s_out))
                    _maybe_plot(plot_dir, f"{space}_mahalanobis", s_in, s_out)
                elif scorer == "confidence" and space == "adapted":
                    s_in = confidence_score(avg_head, test_in)
                    s_out = confidence_score(avg_head, test_out)
                    report.add("adapted/confidence", roc_auc(s_in, s_out))
                    _maybe_plot(plot_dir, "adapted_confidence", s_in, s_out)

        if cfg.per_epoch_auc and checkpoints is not None:
            k0 = cfg.knn_k[0]
            per_epoch = []
            for ckpt in checkpoints.checkpoints:
                ftr = extract_features(ckpt, train)
                per_epoch.append(100.0 * roc_auc(
                    knn_score(ftr, extract_features(ckpt, test_in), k0),
                    knn_score(ftr, extract_features(ckpt, test_out), k0),
                ))
            report.per_epoch_auc = per_epoch
    except ValueError as e:
        raise StageError("scoring", str(e)) from e

    report.wall_time_s = time.perf_counter() - t0
    return report


def _maybe_plot(plot_dir, tag, s_in, s_out):
    if plot_dir is None:
        return
    d = Path(plot_dir)
    d.mkdir(parents=True, exist_ok=True)
    score_histogram_csv(s_in, s_out, d / f"{tag}_hist.csv")
    roc_points_csv(s_in, s_out, d / f"{tag}_roc.csv")


def summarize_reports(reports) -> dict:
    """Seed-wise mean and standard deviation per table key.

    Takes reports from repeated runs (different seeds); every report
    must share the same key set. Std is the population deviation over
    seeds; no distributional claims beyond that.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to summarize")
    keys = set(reports[0].auc_table)
    for r in reports[1:]:
        if set(r.auc_table) != keys:
            raise ValueError("reports have differing auc_table keys")
    out = {}
    for key in sorted(keys):
        vals = np.array([r.auc_table[key] for r in reports], dtype=np.float64)
        out[key] = {"mean": float(vals.mean()), "std": float(vals.std()),
                    "n": len(vals)}
    return out


# ---------------------------------------------------------------------------
# ablations


def ablation_k_sweep(train, test_in, test_out, K_list, cfg: PipelineConfig,
                     train_truth=None) -> EvalReport:
    """Rerun the pipeline per cluster count, plus one no-adaptation row.

    Duplicate entries in K_list are dropped (first occurrence wins).
    """
    t0 = time.perf_counter()
    ks = list(dict.fromkeys(int(k) for k in K_list))
    report = EvalReport(config={**cfg.to_dict(), "K_list": ks}, seed=cfg.seed)

    base = replace(cfg, adaptation=False)
    for key, auc in run_pipeline(train, test_in, test_out, base, train_truth).auc_table.items():
        report.auc_table[f"no-adaptation/{key}"] = auc

    for k in ks:
        sub = replace(cfg, scan=replace(cfg.scan, K=k), adaptation=True)
        for key, auc in run_pipeline(train, test_in, test_out, sub, train_truth).auc_table.items():
            report.auc_table[f"K={k}/{key}"] = auc
    report.wall_time_s = time.perf_counter() - t0
    return report


def ablation_epoch_averaging(train, test_in, test_out, cfg: PipelineConfig,
                             train_truth=None) -> EvalReport:
    """AUC from each epoch checkpoint's features and from the averaged head.

    The table holds exactly epochs+1 rows: one per checkpoint plus the
    averaged model.
    """
    t0 = time.perf_counter()
    report = EvalReport(config=cfg.to_dict(), seed=cfg.seed)

    sub = replace(cfg, scorers=("knn",), knn_k=(cfg.knn_k[0],), per_epoch_auc=False)
    train = l2_normalize(validate_embeddings(train, "train"))
    test_in = l2_normalize(validate_embeddings(test_in, "test_in"))
    test_out = l2_normalize(validate_embeddings(test_out, "test_out"))

    try:
        _, assignment = _cluster_stage(train, sub)
        if train_truth is not None:
            report.clustering_accuracy = cluster_accuracy(assignment.labels, train_truth)
        adapt_cfg = replace(sub.adapt, seed=sub.seed + 1)
        init = init_head(train.shape[1], sub.scan.hidden, assignment.K, sub.seed + 2)
        checkpoints = finetune_head(init, train, assignment.labels, adapt_cfg)
    except (ValueError, RuntimeError) as e:
        raise StageError("adaptation", str(e)) from e

    k0 = sub.knn_k[0]

    def _auc(h):
        ftr = extract_features(h, train)
        return roc_auc(
            knn_score(ftr, extract_features(h, test_in), k0),
            knn_score(ftr, extract_features(h, test_out), k0),
        )

    per_epoch = []
    for i, ckpt in enumerate(checkpoints.checkpoints, start=1):
        auc = _auc(ckpt)
        report.add(f"epoch={i}/knn[k={k0}]", auc)
        per_epoch.append(100.0 * auc)
    report.add(f"averaged/knn[k={k0}]", _auc(average_checkpoints(checkpoints)))
    report.per_epoch_auc = per_epoch
    report.wall_time_s = time.perf_counter() - t0
    return report


def ablation_label_noise(train, test_in, test_out, noise: float,
                         cfg: PipelineConfig, train_truth=None) -> EvalReport:
    """Scorer robustness to corrupted pseudo-labels.

    Pseudo-labels are corrupted at the given rate before Gaussian
    fitting; kNN scoring ignores labels entirely. Both scorers run on
    the same raw normalized features, isolating label sensitivity.
    """
    t0 = time.perf_counter()
    report = EvalReport(config={**cfg.to_dict(), "label_noise": noise}, seed=cfg.seed)

    train = l2_normalize(validate_embeddings(train, "train"))
    test_in = l2_normalize(validate_embeddings(test_in, "test_in"))
    test_out = l2_normalize(validate_embeddings(test_out, "test_out"))

    try:
        _, assignment = _cluster_stage(train, cfg)
    except (ValueError, RuntimeError) as e:
        raise StageError("clustering", str(e)) from e
    if train_truth is not None:
        report.clustering_accuracy = cluster_accuracy(assignment.labels, train_truth)

    noisy = corrupt_labels(assignment.labels, assignment.K, noise, cfg.seed + 7)
    try:
        for k in cfg.knn_k:
            report.add(
                f"raw/knn[k={k}]",
                roc_auc(knn_score(train, test_in, k), knn_score(train, test_out, k)),
            )
        bank = fit_gaussians(train, noisy, cfg.shrinkage)
        report.add(
            f"raw/mahalanobis[noise={noise}]",
            roc_auc(mahalanobis_score(bank, test_in), mahalanobis_score(bank, test_out)),
        )
    except ValueError as e:
        raise StageError("scoring", str(e)) from e
    report.wall_time_s = time.perf_counter() - t0
    return report


def ablation_scorers(train, test_in, test_out, cfg: PipelineConfig,
                     train_truth=None) -> EvalReport:
    """All scorers side by side: kNN at k in {1,2,5,10}, Mahalanobis,
    confidence, on raw and adapted features."""
    sub = replace(cfg, scorers=("knn", "mahalanobis", "confidence"), knn_k=(1, 2, 5, 10))
    return run_pipeline(train, test_in, test_out, sub, train_truth)
