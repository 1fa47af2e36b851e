"""Command-line front end: extract features, train, predict, evaluate, bench.

Progress and timing go to stderr; machine-readable results go to files or
stdout.  Every subcommand exits 0 on success and nonzero on fatal errors,
naming the offending file or parameter.  Options resolve as: command-line
flag, then --config JSON file, then (for --threads) the ELMDOC_THREADS
environment variable, then built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset, evaluation, featx
from .elm import ElmClassifier, load_model, save_model


class CliError(Exception):
    """Fatal command error; the message names the offending input."""


@dataclass
class Config:
    seed: int = 0
    hidden: int = 2000
    reg: float = 1.0
    activation: str = "sigmoid"
    normalize: bool = True
    sizes: list = field(default_factory=lambda: list(dataset.DEFAULT_SIZES))
    reps: int = dataset.DEFAULT_REPS
    elm_repeats: int = 10
    threads: int = 0  # 0 = resolve from env / hardware

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get("ELMDOC_THREADS", "")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise CliError(f"ELMDOC_THREADS is not an integer: {env!r}") from None
            if value > 0:
                return value
        return os.cpu_count() or 1

    def classifier(self) -> ElmClassifier:
        if self.hidden < 1:
            raise CliError(f"--hidden must be >= 1, got {self.hidden}")
        if not self.reg > 0.0:
            raise CliError(f"--reg must be > 0, got {self.reg}")
        return ElmClassifier(
            n_hidden=self.hidden,
            C=self.reg,
            activation=self.activation,
            normalize=self.normalize,
            seed=self.seed,
        )


_CONFIG_KEYS = set(Config.__dataclass_fields__)


def _load_config(args) -> Config:
    cfg = Config()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {path} is not valid JSON: {exc}") from exc
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise CliError(
                f"config file {path} has unknown keys: {sorted(unknown)}"
            )
        for key, value in doc.items():
            setattr(cfg, key, value)
    # explicit flags win over the config file
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.sizes = [int(s) for s in cfg.sizes]
    return cfg


def _parse_sizes(text: str) -> list:
    try:
        sizes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError(f"sizes must be positive: {text!r}")
    return sizes


def _add_common_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="base seed (default: 0)")
    p.add_argument(
        "--threads",
        type=int,
        help="worker threads; 0 picks ELMDOC_THREADS or the CPU count (default: 0)",
    )


def _add_elm_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, help="hidden-layer width (default: 2000)")
    p.add_argument(
        "--reg",
        type=float,
        help="trade-off coefficient C; larger C = weaker penalty (default: 1.0)",
    )
    p.add_argument(
        "--activation",
        choices=["sigmoid", "relu"],
        help="hidden activation (default: sigmoid)",
    )
    p.add_argument(
        "--no-normalize",
        action="store_const",
        const=False,
        dest="normalize",
        help="skip feature standardization (default: standardize)",
    )


def _read_feature_file(path_text: str) -> dataset.FeatureSet:
    path = Path(path_text)
    if not path.is_file():
        raise CliError(f"feature file not found: {path}")
    try:
        if path.suffix.lower() == ".csv":
            return dataset.read_features_csv(path)
        return dataset.read_features(path)
    except (ValueError, OSError) as exc:
        raise CliError(f"cannot read features from {path}: {exc}") from exc


def _labeled_names(features: dataset.FeatureSet, path: str) -> np.ndarray:
    if features.labels is None:
        raise CliError(f"feature file has no labels: {path}")
    names = np.array([str(n) for n in features.class_names])
    return names[features.labels]


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    netspec_path = Path(args.netspec)
    if not netspec_path.is_file():
        raise CliError(f"network file not found: {netspec_path}")
    try:
        spec = featx.load_netspec(netspec_path)
    except ValueError as exc:
        raise CliError(f"cannot load network {netspec_path}: {exc}") from exc
    corpus = dataset.scan_corpus(args.corpus)
    for line in corpus.warnings:
        print(f"warning: {line}", file=sys.stderr)

    images = []
    kept_labels = []
    skipped = 0
    for path, label in corpus.items:
        try:
            images.append(dataset.load_image(path))
            kept_labels.append(label)
        except OSError as exc:
            skipped += 1
            print(f"warning: cannot decode {path}: {exc}", file=sys.stderr)
    if not images:
        raise CliError(f"no decodable images under {args.corpus}")

    threads = cfg.resolved_threads()
    t0 = time.perf_counter()
    X = featx.extract_batch(images, spec, threads=threads)
    elapsed = time.perf_counter() - t0
    features = dataset.FeatureSet(
        X=X,
        labels=np.array(kept_labels, dtype=np.int64),
        class_names=corpus.class_names,
    )
    dataset.write_features(args.out, features)
    per_image = elapsed / len(images)
    print(
        f"extracted {len(images)} images ({skipped} skipped) in {elapsed:.2f} s "
        f"({per_image * 1000:.1f} ms/image, {threads} threads) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    features = _read_feature_file(args.features)
    y = _labeled_names(features, args.features)
    model = cfg.classifier()
    t0 = time.perf_counter()
    model.fit(features.X, y)
    elapsed = time.perf_counter() - t0
    save_model(model, args.out)
    print(
        f"trained on {features.n_samples} samples in {elapsed:.3f} s "
        f"({elapsed / features.n_samples * 1000:.2f} ms/image) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def cmd_predict(args) -> int:
    model_path = Path(args.model)
    if not model_path.is_file():
        raise CliError(f"model file not found: {model_path}")
    try:
        model = load_model(model_path)
    except ValueError as exc:
        raise CliError(f"cannot load model {model_path}: {exc}") from exc
    features = _read_feature_file(args.features)
    if features.n_features != model.n_features_in_:
        raise CliError(
            f"feature-dimension mismatch: model {model_path} expects "
            f"{model.n_features_in_} features, {args.features} has "
            f"{features.n_features}"
        )
    scores = model.decision_function(features.X)
    pred_idx = np.argmax(scores, axis=1)
    pred_names = model.classes_[pred_idx]

    with open(args.out, "w", newline="") as f:
        f.write("index,prediction,score\n")
        for i, (name, row) in enumerate(zip(pred_names, scores)):
            f.write(f"{i},{name},{float(row[pred_idx[i]])!r}\n")
    print(f"wrote {len(pred_names)} predictions -> {args.out}", file=sys.stderr)

    if features.labels is not None:
        truth = _labeled_names(features, args.features)
        acc = evaluation.accuracy(pred_names, truth)
        print(f"accuracy {acc:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    features = _read_feature_file(args.features)
    if features.labels is None:
        raise CliError(f"feature file has no labels: {args.features}")
    try:
        plan = dataset.make_partitions(
            features.labels,
            sizes=cfg.sizes,
            reps=cfg.reps,
            seed=cfg.seed,
            class_names=features.class_names,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    template = cfg.classifier()
    threads = cfg.resolved_threads()
    print(
        f"evaluating {len(plan.cells)} cells x {cfg.elm_repeats} repeats "
        f"({threads} threads)",
        file=sys.stderr,
    )
    report = evaluation.run_grid(
        features, plan, template, elm_repeats=cfg.elm_repeats, threads=threads
    )

    base = Path(args.out)
    if base.suffix.lower() in (".json", ".csv"):
        base = base.with_suffix("")
    written = []
    if args.format in ("json", "both"):
        path = base.with_suffix(".json")
        path.write_text(evaluation.report_to_json(report))
        written.append(str(path))
    if args.format in ("csv", "both"):
        path = base.with_suffix(".csv")
        path.write_text(evaluation.report_to_csv(report))
        written.append(str(path))

    largest = max(plan.sizes)
    exemplar = next(c for c in report.cells if c.size == largest and c.rep == 0)
    conf_path = base.with_suffix(".confusion.txt")
    conf_path.write_text(
        f"confusion matrix, {largest} training images per class "
        f"(rows = truth, columns = prediction, counts over "
        f"{report.elm_repeats} repeats)\n"
        f"classes: {', '.join(report.class_names)}\n"
        + evaluation.format_confusion(exemplar.confusion)
        + "\n"
    )
    written.append(str(conf_path))
    print(
        f"grid done: train {report.total_train_seconds:.2f} s, "
        f"predict {report.total_predict_seconds:.2f} s -> {', '.join(written)}",
        file=sys.stderr,
    )
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    features = _read_feature_file(args.features)
    if features.labels is None:
        raise CliError(f"feature file has no labels: {args.features}")
    try:
        plan = dataset.make_partitions(
            features.labels,
            sizes=[args.train_per_class],
            reps=1,
            seed=cfg.seed,
            class_names=features.class_names,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    train_idx, test_idx = plan.cells[(args.train_per_class, 0)]
    if test_idx.size == 0:
        raise CliError(
            f"--train-per-class {args.train_per_class} leaves no test items"
        )
    model = cfg.classifier()
    X_train, y_train = features.X[train_idx], features.labels[train_idx]
    X_test, y_test = features.X[test_idx], features.labels[test_idx]

    t0 = time.perf_counter()
    model.fit(X_train, y_train)
    t1 = time.perf_counter()
    pred = model.predict(X_test)
    t2 = time.perf_counter()

    train_s, predict_s = t1 - t0, t2 - t1
    print(f"train_samples {train_idx.size}")
    print(f"test_samples {test_idx.size}")
    print(f"train_seconds {train_s:.4f}")
    print(f"train_ms_per_image {train_s / train_idx.size * 1000:.4f}")
    print(f"predict_seconds {predict_s:.4f}")
    print(f"predict_ms_per_image {predict_s / test_idx.size * 1000:.4f}")
    print(f"accuracy {evaluation.accuracy(pred, y_test):.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elmdoc",
        description=(
            "Document-image classification with fixed convolutional features "
            "and a closed-form-trained random-feature classifier."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "extract",
        help="run the conv stack over a corpus directory and write an FMX1 file",
    )
    p.add_argument("corpus", help="directory with one subdirectory per class")
    p.add_argument("netspec", help="EFW1 network weights file")
    p.add_argument("out", help="output feature file (FMX1)")
    _add_common_options(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a classifier on a feature file")
    p.add_argument("features", help="FMX1 or CSV feature file with labels")
    p.add_argument("out", help="output model file (ELM1)")
    _add_common_options(p)
    _add_elm_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict classes for a feature file")
    p.add_argument("model", help="ELM1 model file")
    p.add_argument("features", help="FMX1 or CSV feature file")
    p.add_argument("out", help="output CSV of (index, prediction, score)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser(
        "evaluate",
        help="run the partitioned benchmark grid and write CSV/JSON reports",
    )
    p.add_argument("features", help="FMX1 or CSV feature file with labels")
    p.add_argument("out", help="output path base; writes .json/.csv/.confusion.txt")
    _add_common_options(p)
    _add_elm_options(p)
    p.add_argument(
        "--sizes",
        type=_parse_sizes,
        help="comma-separated training sizes per class (default: 10,20,...,100)",
    )
    p.add_argument("--reps", type=int, help="partitions per size (default: 10)")
    p.add_argument(
        "--elm-repeats",
        type=int,
        dest="elm_repeats",
        help="classifiers trained per partition (default: 10)",
    )
    p.add_argument(
        "--format",
        choices=["csv", "json", "both"],
        default="both",
        help="report format(s) to write (default: both)",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "bench", help="time one train/predict split and print the figures"
    )
    p.add_argument("features", help="FMX1 or CSV feature file with labels")
    p.add_argument(
        "--train-per-class",
        type=int,
        default=100,
        dest="train_per_class",
        help="training items per class; the rest is the test set (default: 100)",
    )
    _add_common_options(p)
    _add_elm_options(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
