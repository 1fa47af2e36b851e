"""Labeled image corpora, evaluation partitions, and feature files.

A corpus is a directory with one subdirectory per class.  Partition plans
implement the benchmark protocol: for each training-set size (per class) and
each repetition, a seeded shuffle picks exactly `size` training items per
class and everything else becomes the test set.  Plans are a pure function
of (corpus order, sizes, repetitions, seed).

Feature matrices travel in the FMX1 binary format (float32 rows, u32
labels, named classes); CSV is accepted for import only.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from . import fileio, rng

FEATURES_MAGIC = b"FMX1"
FEATURES_VERSION = 1

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".pgm", ".ppm"}

DEFAULT_SIZES = tuple(range(10, 101, 10))
DEFAULT_REPS = 10


@dataclass
class Corpus:
    """Image paths with dense integer class indices."""

    items: list  # of (path, class index)
    class_names: list
    warnings: list = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.items], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.items)


def scan_corpus(root) -> Corpus:
    """Scan root/<class>/<images>; classes and files sorted lexicographically.

    Unsupported or unreadable entries are skipped and listed in the corpus
    warnings; an empty class directory is an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ValueError(f"no class subdirectories under {root}")
    items = []
    warnings = []
    class_names = [d.name for d in class_dirs]
    for index, class_dir in enumerate(class_dirs):
        files = []
        for entry in sorted(class_dir.iterdir()):
            if entry.is_file() and entry.suffix.lower() in IMAGE_SUFFIXES:
                files.append(entry)
            else:
                warnings.append(f"skipped non-image entry: {entry}")
        if not files:
            raise ValueError(f"class directory is empty: {class_dir.name!r}")
        items.extend((path, index) for path in files)
    return Corpus(items=items, class_names=class_names, warnings=warnings)


def load_image(path) -> np.ndarray:
    """Decode PNG/JPEG/PGM/PPM to an 8-bit array, (h, w) or (h, w, 3)."""
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        if img.mode != "RGB":
            img = img.convert("RGB")
        return np.asarray(img, dtype=np.uint8)


@dataclass(frozen=True)
class PartitionPlan:
    """Train/test index sets for every (per-class size, repetition) cell."""

    sizes: tuple
    reps: int
    seed: int
    cells: dict  # (size, rep) -> (train indices, test indices), sorted int64


def make_partitions(
    labels,
    sizes=DEFAULT_SIZES,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    class_names: Optional[list] = None,
) -> PartitionPlan:
    """Build the stratified evaluation grid over `labels`.

    For each cell, each class contributes exactly `size` training indices
    chosen by a seeded Fisher-Yates shuffle keyed on (seed, size, rep,
    class); all remaining indices form the test set.  No validation split is
    carved out.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels must be a nonempty 1-D integer array")
    n_classes = int(labels.max()) + 1
    per_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    sizes = tuple(int(s) for s in sizes)
    reps = int(reps)
    if reps < 1 or not sizes or min(sizes) < 1:
        raise ValueError("sizes must be positive and reps >= 1")

    for c, idx in enumerate(per_class):
        need = max(sizes)
        if idx.size < need:
            name = class_names[c] if class_names else str(c)
            raise ValueError(
                f"class {name!r} has {idx.size} items, "
                f"fewer than the requested training size {need}"
            )

    cells = {}
    all_indices = np.arange(labels.size)
    for size in sizes:
        for rep in range(reps):
            train = []
            for c, idx in enumerate(per_class):
                gen = rng.stream(seed, "partition", size, rep, c)
                order = rng.shuffled(idx.tolist(), gen)
                train.extend(order[:size])
            train = np.sort(np.asarray(train, dtype=np.int64))
            mask = np.ones(labels.size, dtype=bool)
            mask[train] = False
            test = all_indices[mask].astype(np.int64)
            cells[(size, rep)] = (train, test)
    return PartitionPlan(sizes=sizes, reps=reps, seed=int(seed), cells=cells)


@dataclass
class FeatureSet:
    """Feature matrix with optional integer labels and class names."""

    X: np.ndarray  # (n, d) float32
    labels: Optional[np.ndarray]  # (n,) int64 or None
    class_names: list

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float32)
        if self.X.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.X.shape[0],):
                raise ValueError(
                    f"{self.labels.shape[0]} labels for {self.X.shape[0]} rows"
                )
            if self.labels.size and (
                self.labels.min() < 0 or self.labels.max() >= len(self.class_names)
            ):
                raise ValueError("label index outside the class-name table")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def write_features(path, features: FeatureSet) -> None:
    """Write an FMX1 file; unlabeled sets are stored with an empty class table."""
    buf = io.BytesIO()
    buf.write(FEATURES_MAGIC)
    fileio.write_u32(buf, FEATURES_VERSION)
    n, d = features.X.shape
    labeled = features.labels is not None
    m = len(features.class_names) if labeled else 0
    fileio.write_u32(buf, n)
    fileio.write_u32(buf, d)
    fileio.write_u32(buf, m)
    if labeled:
        for name in features.class_names:
            fileio.write_string(buf, str(name))
        fileio.write_array(buf, features.labels, np.uint32)
    else:
        fileio.write_array(buf, np.zeros(n, dtype=np.uint32), np.uint32)
    fileio.write_array(buf, features.X, np.float32)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_features(path) -> FeatureSet:
    with open(path, "rb") as f:
        fileio.expect_magic(f, FEATURES_MAGIC)
        fileio.expect_version(f, FEATURES_VERSION, "feature file")
        n = fileio.read_u32(f, "sample count")
        d = fileio.read_u32(f, "feature count")
        m = fileio.read_u32(f, "class count")
        class_names = [fileio.read_string(f, f"class name {i}") for i in range(m)]
        labels = fileio.read_array(f, np.uint32, (n,), "labels").astype(np.int64)
        X = fileio.read_array(f, np.float32, (n, d), "feature rows")
        trailing = f.read(1)
        if trailing:
            raise fileio.FileFormatError(
                f"unexpected trailing bytes after {n}x{d} feature block"
            )
    if m == 0:
        return FeatureSet(X=X, labels=None, class_names=[])
    return FeatureSet(X=X, labels=labels, class_names=class_names)


def read_features_csv(path) -> FeatureSet:
    """Import features from CSV with a header row.

    A column named 'label' (any case) carries class labels; all other
    columns must be numeric.  Class indices are assigned by sorted label
    value.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty CSV file: {path}") from None
        label_col = None
        for i, name in enumerate(header):
            if name.strip().lower() == "label":
                label_col = i
        rows = []
        raw_labels = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{line_no}: expected {len(header)} columns, got {len(row)}"
                )
            values = [
                float(v) for i, v in enumerate(row) if i != label_col
            ]
            rows.append(values)
            if label_col is not None:
                raw_labels.append(row[label_col].strip())
    X = np.asarray(rows, dtype=np.float32)
    if label_col is None:
        return FeatureSet(X=X, labels=None, class_names=[])
    class_names = sorted(set(raw_labels))
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.array([index[name] for name in raw_labels], dtype=np.int64)
    return FeatureSet(X=X, labels=labels, class_names=class_names)
