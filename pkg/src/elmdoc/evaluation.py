"""Benchmark harness: accuracy, confusion matrices, the partition grid, and
wall-clock timing.

`run_grid` reproduces the evaluation protocol: for every (size, rep) cell of
a partition plan it trains `elm_repeats` classifiers with distinct derived
seeds, accumulates their accuracy and confusion counts, and aggregates mean,
median and standard deviation per training-set size.  Cell seeds are derived
from the cell coordinates, never from execution order, so results are
identical however cells are scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from . import rng
from .dataset import FeatureSet, PartitionPlan
from .elm import ElmClassifier


def accuracy(pred, truth) -> float:
    """Fraction of exact matches."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("accuracy of an empty prediction set")
    return float(np.mean(pred == truth))


def confusion(pred, truth, n_classes: int) -> np.ndarray:
    """Count matrix: entry (i, j) counts truth i predicted as j."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    for name, arr in (("pred", pred), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} contains indices outside [0, {n_classes})")
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (truth, pred), 1)
    return out


def format_confusion(matrix) -> str:
    """Render a count matrix as aligned integer rows (truth down, prediction across)."""
    matrix = np.asarray(matrix)
    width = max(1, len(str(int(matrix.max())))) if matrix.size else 1
    return "\n".join(
        " ".join(f"{int(v):>{width}d}" for v in row) for row in matrix
    )


@dataclass(eq=False)
class CellResult:
    """One (size, rep) cell of the grid.

    accuracy is the mean over the classifier repeats run in the cell;
    confusion accumulates counts over all repeats, so n_test counts test
    predictions (test rows x repeats) and accuracy == trace/n_test exactly.
    Timings are summed over repeats.
    """

    size: int
    rep: int
    accuracy: float
    confusion: np.ndarray
    train_seconds: float
    predict_seconds: float
    n_test: int


@dataclass(eq=False)
class SizeAggregate:
    """Accuracy statistics over the repetitions of one training-set size."""

    size: int
    mean: float
    median: float
    stddev: float  # population (ddof=0)


@dataclass(eq=False)
class GridReport:
    sizes: tuple
    reps: int
    elm_repeats: int
    seed: int
    class_names: list
    cells: list  # CellResult, ordered by (size, rep)
    aggregates: list  # SizeAggregate, ordered by size
    total_train_seconds: float
    total_predict_seconds: float


def _run_cell(features, plan_cell, size, rep, template, elm_repeats, n_classes):
    train_idx, test_idx = plan_cell
    if test_idx.size == 0:
        raise ValueError("cell has an empty test set")
    X_train = features.X[train_idx]
    y_train = features.labels[train_idx]
    X_test = features.X[test_idx]
    y_test = features.labels[test_idx]

    acc_sum = 0.0
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    train_s = 0.0
    predict_s = 0.0
    for repeat in range(elm_repeats):
        model = clone(template)
        model.set_params(seed=rng.derive_seed(template.seed, "grid", size, rep, repeat))
        t0 = time.perf_counter()
        model.fit(X_train, y_train)
        t1 = time.perf_counter()
        pred = model.predict(X_test)
        t2 = time.perf_counter()
        train_s += t1 - t0
        predict_s += t2 - t1
        acc_sum += accuracy(pred, y_test)
        conf += confusion(pred, y_test, n_classes)
    return CellResult(
        size=size,
        rep=rep,
        accuracy=acc_sum / elm_repeats,
        confusion=conf,
        train_seconds=train_s,
        predict_seconds=predict_s,
        n_test=int(test_idx.size) * elm_repeats,
    )


def run_grid(
    features: FeatureSet,
    plan: PartitionPlan,
    template: ElmClassifier = None,
    elm_repeats: int = 10,
    threads: int = 1,
) -> GridReport:
    """Train and score the whole partition grid.

    `template` supplies the classifier configuration; each repeat gets a
    seed derived from (template seed, size, rep, repeat).  Any cell failure
    aborts the run naming the cell coordinates.
    """
    if features.labels is None:
        raise ValueError("grid evaluation needs labeled features")
    if elm_repeats < 1:
        raise ValueError(f"elm_repeats must be >= 1, got {elm_repeats}")
    if template is None:
        template = ElmClassifier()
    n_classes = len(features.class_names)
    coords = sorted(plan.cells)

    def job(coord):
        size, rep = coord
        try:
            return _run_cell(
                features,
                plan.cells[coord],
                size,
                rep,
                template,
                elm_repeats,
                n_classes,
            )
        except Exception as exc:
            raise RuntimeError(
                f"grid cell size={size} rep={rep} failed: {exc}"
            ) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(job, coords))
    else:
        cells = [job(coord) for coord in coords]

    aggregates = []
    for size in plan.sizes:
        accs = np.array([c.accuracy for c in cells if c.size == size])
        aggregates.append(
            SizeAggregate(
                size=size,
                mean=float(np.mean(accs)),
                median=float(np.median(accs)),
                stddev=float(np.std(accs)),
            )
        )
    return GridReport(
        sizes=tuple(plan.sizes),
        reps=plan.reps,
        elm_repeats=elm_repeats,
        seed=template.seed,
        class_names=list(features.class_names),
        cells=cells,
        aggregates=aggregates,
        total_train_seconds=sum(c.train_seconds for c in cells),
        total_predict_seconds=sum(c.predict_seconds for c in cells),
    )


def report_to_json(report: GridReport) -> str:
    """Full nested report as JSON; floats round-trip exactly."""
    doc = {
        "schema": "elmdoc-grid-report",
        "version": 1,
        "sizes": list(report.sizes),
        "reps": report.reps,
        "elm_repeats": report.elm_repeats,
        "seed": report.seed,
        "class_names": list(report.class_names),
        "cells": [
            {
                "size": c.size,
                "rep": c.rep,
                "accuracy": c.accuracy,
                "n_test": c.n_test,
                "train_seconds": c.train_seconds,
                "predict_seconds": c.predict_seconds,
                "confusion": [[int(v) for v in row] for row in c.confusion],
            }
            for c in report.cells
        ],
        "aggregates": [
            {
                "size": a.size,
                "mean_accuracy": a.mean,
                "median_accuracy": a.median,
                "stddev_accuracy": a.stddev,
            }
            for a in report.aggregates
        ],
        "total_train_seconds": report.total_train_seconds,
        "total_predict_seconds": report.total_predict_seconds,
    }
    return json.dumps(doc, indent=2) + "\n"


def report_from_json(text: str) -> GridReport:
    doc = json.loads(text)
    if doc.get("schema") != "elmdoc-grid-report":
        raise ValueError(f"not a grid report: schema={doc.get('schema')!r}")
    if doc.get("version") != 1:
        raise ValueError(f"unsupported grid-report version {doc.get('version')!r}")
    cells = [
        CellResult(
            size=c["size"],
            rep=c["rep"],
            accuracy=c["accuracy"],
            confusion=np.array(c["confusion"], dtype=np.int64),
            train_seconds=c["train_seconds"],
            predict_seconds=c["predict_seconds"],
            n_test=c["n_test"],
        )
        for c in doc["cells"]
    ]
    aggregates = [
        SizeAggregate(
            size=a["size"],
            mean=a["mean_accuracy"],
            median=a["median_accuracy"],
            stddev=a["stddev_accuracy"],
        )
        for a in doc["aggregates"]
    ]
    return GridReport(
        sizes=tuple(doc["sizes"]),
        reps=doc["reps"],
        elm_repeats=doc["elm_repeats"],
        seed=doc["seed"],
        class_names=list(doc["class_names"]),
        cells=cells,
        aggregates=aggregates,
        total_train_seconds=doc["total_train_seconds"],
        total_predict_seconds=doc["total_predict_seconds"],
    )


def report_to_csv(report: GridReport) -> str:
    """One row per cell plus one aggregate row per size (after a header)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "kind",
            "size",
            "rep",
            "accuracy",
            "n_test",
            "train_seconds",
            "predict_seconds",
            "mean_accuracy",
            "median_accuracy",
            "stddev_accuracy",
        ]
    )
    for c in report.cells:
        writer.writerow(
            [
                "cell",
                c.size,
                c.rep,
                repr(c.accuracy),
                c.n_test,
                repr(c.train_seconds),
                repr(c.predict_seconds),
                "",
                "",
                "",
            ]
        )
    for a in report.aggregates:
        writer.writerow(
            [
                "aggregate",
                a.size,
                "",
                "",
                "",
                "",
                "",
                repr(a.mean),
                repr(a.median),
                repr(a.stddev),
            ]
        )
    return buf.getvalue()


def reports_equal(a: GridReport, b: GridReport) -> bool:
    """Field-by-field equality, including confusion counts."""
    if (
        a.sizes != b.sizes
        or a.reps != b.reps
        or a.elm_repeats != b.elm_repeats
        or a.seed != b.seed
        or a.class_names != b.class_names
        or len(a.cells) != len(b.cells)
        or len(a.aggregates) != len(b.aggregates)
        or a.total_train_seconds != b.total_train_seconds
        or a.total_predict_seconds != b.total_predict_seconds
    ):
        return False
    for ca, cb in zip(a.cells, b.cells):
        if (
            ca.size != cb.size
            or ca.rep != cb.rep
            or ca.accuracy != cb.accuracy
            or ca.n_test != cb.n_test
            or ca.train_seconds != cb.train_seconds
            or ca.predict_seconds != cb.predict_seconds
            or not np.array_equal(ca.confusion, cb.confusion)
        ):
            return False
    for aa, ab in zip(a.aggregates, b.aggregates):
        if (
            aa.size != ab.size
            or aa.mean != ab.mean
            or aa.median != ab.median
            or aa.stddev != ab.stddev
        ):
            return False
    return True
