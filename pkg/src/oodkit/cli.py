"""Command-line front end.

One binary, subcommand style: `cluster`, `adapt`, `score`, `eval`,
`pipeline`, `synth`, `ablate`, `import-csv`. Configuration resolves
with precedence flag > config file > default; unknown keys are
rejected. Logging goes to stderr; machine-readable results go to files
or stdout. Exit codes: 0 success, 1 usage/config error, 2 stage error
(the failing stage is named on stderr).

numpy is imported only after the thread cap is applied, so `--threads`
(or the OODKIT_THREADS environment variable) reliably bounds the BLAS
worker pools.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger("oodkit")

THREADS_ENV = "OODKIT_THREADS"

# Mirrors the dataclass defaults in clustering/adaptation/evaluation as
# plain literals; kept numpy-free on purpose (a unit test guards drift).
DEFAULTS: dict = {
    "seed": 0,
    "threads": None,
    "method": "scan",
    "adaptation": True,
    "scan": {
        "K": 10,
        "k_graph": 20,
        "lambda_entropy": 5.0,
        "epochs": 40,
        "batch_size": 256,
        "lr": 1e-3,
        "hidden": 512,
        "seed": 0,
    },
    "adapt": {
        "epochs": 5,
        "lr_start": 1e-3,
        "lr_end": 1e-4,
        "batch_size": 128,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "seed": 0,
    },
    "scorers": ["knn"],
    "knn_k": [1],
    "shrinkage": 1e-3,
    "self_label_threshold": 0.99,
    "self_label_rounds": 1,
    "kmeans_max_iters": 100,
    "per_epoch_auc": False,
    "synth": {
        "K_normal": 10,
        "K_anom": 3,
        "d": 64,
        "n_train": 2000,
        "n_test_in": 500,
        "n_test_out": 500,
        "separation": 6.0,
        "within_scale": 1.6,
        "label_noise": 0.0,
        "seed": 0,
    },
}


class ConfigError(ValueError):
    """Bad config file or override: unknown key, type mismatch, unreadable."""


@dataclass
class RunConfig:
    """Fully resolved configuration tree with per-field provenance."""

    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    provenance: dict = field(default_factory=dict)

    def get(self, dotted: str):
        node = self.values
        for part in dotted.split("."):
            node = node[part]
        return node


def _set_value(cfg: RunConfig, dotted: str, value, origin: str) -> None:
    parts = dotted.split(".")
    node = cfg.values
    ref = DEFAULTS
    for part in parts[:-1]:
        if not isinstance(ref, dict) or part not in ref:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[part]
        ref = ref[part]
    leaf = parts[-1]
    if not isinstance(ref, dict) or leaf not in ref:
        raise ConfigError(f"unknown config key {dotted!r}")
    default = ref[leaf]
    if isinstance(default, dict):
        raise ConfigError(f"config key {dotted!r} is a section, not a value")
    if default is not None and value is not None:
        if isinstance(default, bool) != isinstance(value, bool):
            raise ConfigError(f"type mismatch for {dotted!r}: expected {type(default).__name__}")
        if isinstance(default, bool):
            pass
        elif isinstance(default, float) and isinstance(value, (int, float)):
            value = float(value)
        elif isinstance(default, int) and isinstance(value, int):
            pass
        elif isinstance(default, list) and isinstance(value, list):
            pass
        elif isinstance(default, str) and isinstance(value, str):
            pass
        else:
            raise ConfigError(
                f"type mismatch for {dotted!r}: expected {type(default).__name__}, "
                f"got {type(value).__name__}"
            )
    node[leaf] = value
    cfg.provenance[dotted] = origin


def _flatten(tree: dict, prefix: str = "") -> list[tuple[str, object]]:
    out = []
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(_flatten(value, dotted + "."))
        else:
            out.append((dotted, value))
    return out


def resolve_config(file: str | None, flags: dict | None = None) -> RunConfig:
    """Merge defaults, config file, and flag overrides (flag wins).

    The file may be a plain config tree or a previously written report
    (its embedded `config` subtree is used). Unknown keys raise
    ConfigError naming the key.
    """
    cfg = RunConfig()
    for dotted, _ in _flatten(DEFAULTS):
        cfg.provenance[dotted] = "default"

    if file is not None:
        try:
            doc = json.loads(Path(file).read_text())
        except OSError as e:
            raise ConfigError(f"unreadable config file {file}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {file} is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {file} must hold a JSON object")
        if "auc_table" in doc and "config" in doc:
            doc = doc["config"]  # re-run from a report's embedded config
        for dotted, value in _flatten(doc):
            _set_value(cfg, dotted, value, "config-file")

    for dotted, value in (flags or {}).items():
        _set_value(cfg, dotted, value, "flag")
    return cfg


def _apply_thread_cap(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ[var] = str(threads)


@contextlib.contextmanager
def _stage(name: str):
    """Convert stage failures into StageError(name) for exit-code 2."""
    from .evaluation import StageError

    try:
        yield
    except StageError:
        raise
    except (ValueError, RuntimeError, OSError) as e:
        raise StageError(name, str(e)) from e


# ---------------------------------------------------------------------------
# config -> objects


def _pipeline_config(cfg: RunConfig):
    from .adaptation import AdaptConfig
    from .clustering import ScanConfig
    from .evaluation import PipelineConfig

    v = cfg.values
    try:
        return PipelineConfig(
            method=v["method"],
            scan=ScanConfig(**v["scan"]),
            adapt=AdaptConfig(**v["adapt"]),
            adaptation=v["adaptation"],
            scorers=tuple(v["scorers"]),
            knn_k=tuple(int(k) for k in v["knn_k"]),
            shrinkage=v["shrinkage"],
            self_label_threshold=v["self_label_threshold"],
            self_label_rounds=v["self_label_rounds"],
            kmeans_max_iters=v["kmeans_max_iters"],
            per_epoch_auc=v["per_epoch_auc"],
            seed=v["seed"],
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _synth_spec(cfg: RunConfig):
    from .evaluation import SynthSpec

    try:
        return SynthSpec(**cfg.values["synth"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_synth(args, cfg: RunConfig) -> int:
    from . import evaluation, io

    spec = _synth_spec(cfg)
    out = Path(args.out_dir)
    with _stage("evaluation"):
        train, truth, test_in, test_out = evaluation.generate_synthetic(spec)
    with _stage("io"):
        out.mkdir(parents=True, exist_ok=True)
        for name, split, mat in (
            ("train", "train_normal", train),
            ("test_in", "test_in", test_in),
            ("test_out", "test_out", test_out),
        ):
            manifest = io.DatasetManifest(
                name=f"synthetic-{name}", split=split, source="synthetic",
                d=mat.shape[1], n=mat.shape[0],
            )
            io.save_embeddings(mat, manifest, out / f"{name}.emb")
        io.save_labels(truth, out / "train_truth.json", K=spec.K_normal, kind="ground_truth")
    log.info("wrote synthetic dataset to %s (train %dx%d)", out, *train.shape)
    return 0


def cmd_import_csv(args, cfg: RunConfig) -> int:
    from . import io

    with _stage("io"):
        mat = io.import_csv(args.input)
        manifest = io.DatasetManifest(
            name=args.name, split=args.split, source="csv-import",
            d=mat.shape[1], n=mat.shape[0],
        )
        io.save_embeddings(mat, manifest, args.out)
    log.info("imported %s -> %s (%dx%d)", args.input, args.out, *mat.shape)
    return 0


def cmd_cluster(args, cfg: RunConfig) -> int:
    from . import clustering, io

    with _stage("io"):
        mat, _ = io.load_embeddings(args.input)
        mat = io.l2_normalize(mat)
    v = cfg.values
    scan_cfg = None
    with _stage("clustering"):
        if args.method == "kmeans":
            assignment, _ = clustering.kmeans(
                mat, v["scan"]["K"], v["kmeans_max_iters"], seed=v["seed"])
        else:
            scan_cfg = clustering.ScanConfig(**{**v["scan"], "seed": v["seed"]})
            graph = clustering.build_knn_graph(mat, scan_cfg.k_graph)
            head, assignment = clustering.scan_train(mat, graph, scan_cfg)
            if args.method == "scan+selflabel":
                head, assignment = clustering.self_label(
                    head, mat, v["self_label_threshold"], v["self_label_rounds"],
                    seed=v["seed"] + 1,
                )
    if assignment.collapsed:
        log.warning("clustering collapsed to a single cluster")
    if assignment.warning:
        log.warning("%s", assignment.warning)
    with _stage("io"):
        io.save_labels(
            assignment.labels, args.out, K=assignment.K, kind="pseudo",
            extra={
                "confidences": [float(c) for c in assignment.confidences],
                "method": assignment.method,
                "config": {"scan": v["scan"], "method": args.method, "seed": v["seed"]},
            },
        )
    log.info("wrote %s labels for %d samples to %s", assignment.method,
             len(assignment.labels), args.out)
    return 0


def cmd_adapt(args, cfg: RunConfig) -> int:
    from . import adaptation, io

    v = cfg.values
    with _stage("io"):
        mat, _ = io.load_embeddings(args.input)
        mat = io.l2_normalize(mat)
        labels, K, _ = io.load_labels(args.labels)
    with _stage("adaptation"):
        adapt_cfg = adaptation.AdaptConfig(**{**v["adapt"], "seed": v["seed"]})
        init = adaptation.init_head(mat.shape[1], v["scan"]["hidden"], K, v["seed"])
        checkpoints = adaptation.finetune_head(init, mat, labels, adapt_cfg)
        averaged = adaptation.average_checkpoints(checkpoints)
    with _stage("io"):
        adaptation.save_head(averaged, args.out)
        if args.save_epoch_checkpoints:
            ckpt_dir = Path(args.save_epoch_checkpoints)
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            for i, head in enumerate(checkpoints.checkpoints, start=1):
                adaptation.save_head(head, ckpt_dir / f"epoch_{i}.ckpt")
    log.info("loss trace: %s", ", ".join(f"{x:.4f}" for x in checkpoints.loss_trace))
    log.info("wrote averaged head to %s", args.out)
    return 0


def cmd_score(args, cfg: RunConfig) -> int:
    from . import adaptation, io, scoring

    v = cfg.values
    with _stage("io"):
        test, _ = io.load_embeddings(args.test)
        if args.normalize:
            test = io.l2_normalize(test)
    with _stage("scoring"):
        if args.scorer == "knn":
            train, _ = io.load_embeddings(args.train)
            if args.normalize:
                train = io.l2_normalize(train)
            sv = scoring.knn_score(train, test, args.k)
        elif args.scorer == "mahalanobis":
            if not args.labels:
                raise ValueError("--labels is required for the mahalanobis scorer")
            train, _ = io.load_embeddings(args.train)
            if args.normalize:
                train = io.l2_normalize(train)
            labels, K, _ = io.load_labels(args.labels)
            bank = scoring.fit_gaussians(train, labels, v["shrinkage"], n_clusters=K)
            sv = scoring.mahalanobis_score(bank, test)
        else:
            if not args.head:
                raise ValueError("--head is required for the confidence scorer")
            head = adaptation.load_head(args.head)
            sv = scoring.confidence_score(head, test)
    doc = {"scores": [float(s) for s in sv.scores], "scorer": sv.scorer, "params": sv.params}
    _write_json(doc, args.out)
    log.info("scored %d samples with %s", len(sv.scores), sv.scorer)
    return 0


def _load_scores(path):
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        return doc["scores"]
    return doc


def cmd_eval(args, cfg: RunConfig) -> int:
    from . import evaluation

    with _stage("evaluation"):
        auc = evaluation.roc_auc(_load_scores(args.scores_in), _load_scores(args.scores_out))
    if args.out:
        _write_json({"roc_auc": auc}, args.out)
    else:
        print(repr(auc))
    return 0


def cmd_pipeline(args, cfg: RunConfig) -> int:
    from . import evaluation, io

    if args.show_config:
        print(json.dumps({"values": cfg.values, "provenance": cfg.provenance},
                         indent=2, sort_keys=True))
        return 0
    pcfg = _pipeline_config(cfg)
    with _stage("io"):
        train, _ = io.load_embeddings(args.train)
        test_in, _ = io.load_embeddings(args.test_in)
        test_out, _ = io.load_embeddings(args.test_out)
        truth = io.load_labels(args.train_truth)[0] if args.train_truth else None
    report = evaluation.run_pipeline(train, test_in, test_out, pcfg,
                                     train_truth=truth, plot_dir=args.plot_dir)
    _emit_report(report, args)
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    from . import evaluation, io

    pcfg = _pipeline_config(cfg)
    with _stage("io"):
        train, _ = io.load_embeddings(args.train)
        test_in, _ = io.load_embeddings(args.test_in)
        test_out, _ = io.load_embeddings(args.test_out)
        truth = io.load_labels(args.train_truth)[0] if args.train_truth else None

    if args.kind == "k-sweep":
        try:
            k_list = [int(k) for k in args.k_list.split(",")]
        except (AttributeError, ValueError):
            raise ConfigError("k-sweep needs --k-list, e.g. --k-list 10,20,30") from None
        report = evaluation.ablation_k_sweep(train, test_in, test_out, k_list, pcfg, truth)
    elif args.kind == "epochs":
        report = evaluation.ablation_epoch_averaging(train, test_in, test_out, pcfg, truth)
    elif args.kind == "scorers":
        report = evaluation.ablation_scorers(train, test_in, test_out, pcfg, truth)
    else:  # label-noise
        report = evaluation.ablation_label_noise(
            train, test_in, test_out, args.noise, pcfg, truth)
    _emit_report(report, args)
    return 0


def _emit_report(report, args) -> None:
    if getattr(args, "table", False):
        print(report.text_table(), end="")
    if args.out:
        report.save_json(args.out)
        log.info("wrote report to %s", args.out)
    elif not getattr(args, "table", False):
        print(report.to_json_str(), end="")


def _write_json(doc, path) -> None:
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="JSON config file (or a report to re-run)")
    p.add_argument("--seed", type=int, help="top-level RNG seed")
    p.add_argument("--threads", type=int, help="cap BLAS/OMP worker threads")
    p.add_argument("--quiet", action="store_true", help="log warnings and errors only")


def _add_tuning_flags(p: _Parser) -> None:
    p.add_argument("--k-graph", dest="k_graph", type=int, help="neighbors per sample")
    p.add_argument("--lambda-entropy", dest="lambda_entropy", type=float)
    p.add_argument("--scan-epochs", dest="scan_epochs", type=int)
    p.add_argument("--hidden", type=int, help="head hidden width")
    p.add_argument("--lr-start", dest="lr_start", type=float)
    p.add_argument("--lr-end", dest="lr_end", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--shrinkage", type=float)


def _add_pipeline_inputs(p: _Parser) -> None:
    p.add_argument("--train", required=True, help="train-normal .emb file")
    p.add_argument("--test-in", required=True, help="in-distribution test .emb file")
    p.add_argument("--test-out", required=True, help="out-of-distribution test .emb file")
    p.add_argument("--train-truth", help="optional ground-truth labels JSON")
    p.add_argument("--out", help="write the report JSON here (default stdout)")
    p.add_argument("--table", action="store_true", help="print an aligned text table")


_FLAG_MAP = {
    "method": "method",
    "k": "scan.K",
    "k_graph": "scan.k_graph",
    "lambda_entropy": "scan.lambda_entropy",
    "scan_epochs": "scan.epochs",
    "hidden": "scan.hidden",
    "epochs": "adapt.epochs",
    "lr_start": "adapt.lr_start",
    "lr_end": "adapt.lr_end",
    "batch_size": "adapt.batch_size",
    "scorers": "scorers",
    "knn_k": "knn_k",
    "shrinkage": "shrinkage",
    "no_adaptation": "adaptation",
    "per_epoch_auc": "per_epoch_auc",
    "seed": "seed",
    "threads": "threads",
}


def build_parser() -> _Parser:
    parser = _Parser(prog="oodkit", description=__doc__.split("\n")[1])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    _add_common(p)
    p.add_argument("--spec", help="JSON file with a {'synth': {...}} section")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("import-csv", help="convert a CSV of embeddings to .emb")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="imported")
    p.add_argument("--split", default="train_normal")
    p.set_defaults(handler=cmd_import_csv)

    p = sub.add_parser("cluster", help="produce pseudo-labels for an embedding file")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=["kmeans", "scan", "scan+selflabel"], default="scan")
    p.add_argument("--k", type=int, help="number of clusters")
    p.add_argument("--out", required=True)
    _add_tuning_flags(p)
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("adapt", help="finetune a feature head on pseudo-labels")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True, help="averaged head checkpoint")
    p.add_argument("--save-epoch-checkpoints", help="directory for per-epoch checkpoints")
    _add_tuning_flags(p)
    p.set_defaults(handler=cmd_adapt)

    p = sub.add_parser("score", help="score test embeddings against the train set")
    _add_common(p)
    p.add_argument("--train", help="train features .emb (knn/mahalanobis)")
    p.add_argument("--test", required=True)
    p.add_argument("--scorer", choices=["knn", "mahalanobis", "confidence"], default="knn")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--labels", help="pseudo-label JSON (mahalanobis)")
    p.add_argument("--head", help="head checkpoint (confidence)")
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize features on load (kNN requires unit rows; "
                        "mahalanobis accepts either)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("eval", help="ROC-AUC from two score files")
    _add_common(p)
    p.add_argument("--scores-in", required=True)
    p.add_argument("--scores-out", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("pipeline", help="cluster, adapt, score and evaluate end to end")
    _add_common(p)
    _add_pipeline_inputs(p)
    p.add_argument("--method", choices=["kmeans", "scan", "scan+selflabel"])
    p.add_argument("--k", type=int, help="number of clusters")
    p.add_argument("--epochs", type=int, help="adaptation epochs")
    p.add_argument("--scorers", help="comma list from knn,mahalanobis,confidence")
    p.add_argument("--knn-k", dest="knn_k", help="comma list of k values")
    p.add_argument("--no-adaptation", dest="no_adaptation", action="store_true")
    p.add_argument("--per-epoch-auc", dest="per_epoch_auc", action="store_true")
    p.add_argument("--plot-dir", help="write score histogram / ROC point CSVs here")
    p.add_argument("--show-config", action="store_true",
                   help="print the resolved config with provenance and exit")
    _add_tuning_flags(p)
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("ablate", help="rerun the pipeline over an ablation axis")
    _add_common(p)
    p.add_argument("kind", choices=["k-sweep", "epochs", "scorers", "label-noise"])
    _add_pipeline_inputs(p)
    p.add_argument("--k-list", help="comma list of cluster counts (k-sweep)")
    p.add_argument("--noise", type=float, default=0.3, help="label corruption rate")
    p.add_argument("--method", choices=["kmeans", "scan", "scan+selflabel"])
    p.add_argument("--k", type=int, help="number of clusters")
    p.add_argument("--epochs", type=int)
    _add_tuning_flags(p)
    p.set_defaults(handler=cmd_ablate)

    return parser


def _collect_flags(args) -> dict:
    flags = {}
    for attr, dotted in _FLAG_MAP.items():
        if not hasattr(args, attr):
            continue
        value = getattr(args, attr)
        if value is None or value is False:
            continue
        if attr == "no_adaptation":
            flags["adaptation"] = False
        elif attr == "scorers":
            flags["scorers"] = [s.strip() for s in value.split(",") if s.strip()]
        elif attr == "knn_k":
            flags["knn_k"] = [int(k) for k in value.split(",")]
        else:
            flags[dotted] = value
    return flags


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return 1

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )

    try:
        config_file = getattr(args, "config", None) or getattr(args, "spec", None)
        cfg = resolve_config(config_file, _collect_flags(args))
        threads = cfg.values.get("threads")
        if threads is None and os.environ.get(THREADS_ENV):
            try:
                threads = int(os.environ[THREADS_ENV])
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer") from None
        _apply_thread_cap(threads)
    except ConfigError as e:
        print(f"oodkit: config error: {e}", file=sys.stderr)
        return 1

    from .evaluation import StageError

    try:
        return args.handler(args, cfg)
    except ConfigError as e:
        print(f"oodkit: config error: {e}", file=sys.stderr)
        return 1
    except StageError as e:
        print(f"oodkit: error in stage '{e.stage}': {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
