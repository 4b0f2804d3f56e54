"""Label-free multi-class out-of-distribution detection over embeddings.

Pipeline: unsupervised clustering produces pseudo-labels for the normal
training embeddings, a small feature head is finetuned on those labels
with epoch-end weight averaging, and test samples are scored by kNN
distance, per-cluster Mahalanobis distance, or classifier confidence,
with exact ROC-AUC evaluation throughout.

Submodules are imported lazily so the command-line front end can cap
BLAS thread pools before numpy loads.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "adaptation": [
        "Adam", "AdaptConfig", "CheckpointSet", "ClusterHead",
        "average_checkpoints", "cosine_lr", "cross_entropy_grad",
        "cross_entropy_loss", "extract_features", "finetune_head",
        "init_head", "load_head", "save_head", "softmax",
    ],
    "clustering": [
        "ClusterAssignment", "ScanConfig", "build_knn_graph",
        "cluster_accuracy", "kmeans", "scan_loss", "scan_loss_grad",
        "scan_train", "self_label", "shannon_entropy",
    ],
    "evaluation": [
        "EvalReport", "PipelineConfig", "StageError", "SynthSpec",
        "ablation_epoch_averaging", "ablation_k_sweep",
        "ablation_label_noise", "ablation_scorers", "corrupt_labels",
        "generate_synthetic", "roc_auc", "roc_points", "run_pipeline",
        "summarize_reports",
    ],
    "io": [
        "DatasetManifest", "import_csv", "l2_normalize",
        "load_embeddings", "load_labels", "save_embeddings",
        "save_labels", "validate_embeddings",
    ],
    "scoring": [
        "GaussianBank", "ScoreVector", "confidence_score",
        "fit_gaussians", "knn_score", "mahalanobis_score",
    ],
}

_NAME_TO_MODULE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_NAME_TO_MODULE) + sorted(_EXPORTS) + ["cli", "__version__"]


def __getattr__(name: str):
    if name in _NAME_TO_MODULE:
        module = importlib.import_module(f".{_NAME_TO_MODULE[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    if name in _EXPORTS or name == "cli":
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
