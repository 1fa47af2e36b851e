"""Acceptance suite: one test per release criterion, each at its stated
tolerance, printing one pass/fail line (run with `pytest -v -s`).
"""

import hashlib
import platform
import time
from pathlib import Path

import numpy as np
import pytest

from elmdoc import fileio
from elmdoc.dataset import FeatureSet, make_partitions, read_features, write_features
from elmdoc.elm import ElmClassifier, load_model, one_hot, save_model
from elmdoc.featx import (
    LrnLayer,
    MaxPoolLayer,
    alexnet_stub,
    conv_forward,
    extract,
    load_netspec,
    lrn_forward,
    maxpool_forward,
    save_netspec,
)
from oracles import model_hidden_responses, ridge_gradient_descent
from synth import corner_blob_dataset, two_blob_dataset
from test_featx import naive_conv, naive_lrn, naive_maxpool, random_conv_layer

REPO_ROOT = Path(__file__).resolve().parent.parent


def announce(number, name):
    print(f"\nACCEPTANCE {number:02d} {name}: PASS")


def test_01_stationarity_over_random_instances():
    started = time.perf_counter()
    gen = np.random.default_rng(101)
    c_values = (0.01, 1.0, 100.0)
    for trial in range(50):
        n = int(gen.integers(20, 501))
        d = int(gen.integers(5, 101))
        n_hidden = int(gen.integers(10, 301))
        C = c_values[trial % 3]
        n_classes = int(gen.integers(2, 6))
        X = gen.normal(size=(n, d))
        y = gen.integers(0, n_classes, size=n)
        model = ElmClassifier(n_hidden=n_hidden, C=C, seed=trial).fit(X, y)
        H = model_hidden_responses(model, X)
        T = one_hot(np.unique(y, return_inverse=True)[1], len(model.classes_))
        system = H.T @ H + np.eye(n_hidden) / C
        rhs = H.T @ T
        residual = np.linalg.norm(system @ model.output_weights_ - rhs)
        assert residual <= 1e-8 * np.linalg.norm(rhs), (
            f"instance {trial} (n={n} d={d} N={n_hidden} C={C}): "
            f"relative residual {residual / np.linalg.norm(rhs):.3e}"
        )
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"stationarity sweep took {elapsed:.1f} s"
    announce(1, "optimality system residual <= 1e-8 on 50 random instances")


def test_02_closed_form_matches_gradient_descent():
    started = time.perf_counter()
    gen = np.random.default_rng(202)
    for trial in range(10):
        X = gen.normal(size=(30, 5))
        y = gen.integers(0, 3, size=30)
        model = ElmClassifier(n_hidden=10, C=1.0, seed=trial).fit(X, y)
        H = model_hidden_responses(model, X)
        T = one_hot(np.unique(y, return_inverse=True)[1], len(model.classes_))
        B_oracle = ridge_gradient_descent(H, T, C=1.0, tol=1e-10)
        gap = np.abs(model.output_weights_ - B_oracle).max()
        assert gap <= 1e-4, f"instance {trial}: max elementwise gap {gap:.3e}"
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"gradient-descent comparison took {elapsed:.1f} s"
    announce(2, "closed form matches gradient-descent oracle within 1e-4")


def test_03_ridge_limit_reaches_least_squares():
    gen = np.random.default_rng(303)
    X = gen.normal(size=(200, 8))
    y = gen.integers(0, 4, size=200)
    model = ElmClassifier(n_hidden=50, C=1e12, seed=3).fit(X, y)
    H = model_hidden_responses(model, X)
    T = one_hot(np.unique(y, return_inverse=True)[1], len(model.classes_))
    assert np.linalg.matrix_rank(H) == 50
    B_ls = np.linalg.lstsq(H, T, rcond=None)[0]
    err = np.linalg.norm(model.output_weights_ - B_ls) / np.linalg.norm(B_ls)
    assert err <= 1e-4, f"relative Frobenius gap {err:.3e}"
    announce(3, "C=1e12 solution matches unregularized least squares within 1e-4")


def test_04_synthetic_classification():
    started = time.perf_counter()
    X_train, y_train, X_test, y_test = two_blob_dataset(seed=42)
    model = ElmClassifier(n_hidden=50, C=1.0, seed=1).fit(X_train, y_train)
    acc2 = float((model.predict(X_test) == y_test).mean())
    assert acc2 >= 0.99, f"two-blob accuracy {acc2}"

    X_train, y_train, X_test, y_test = corner_blob_dataset(seed=7, scale=6.0)
    model = ElmClassifier(n_hidden=50, C=1.0, seed=2).fit(X_train, y_train)
    acc10 = float((model.predict(X_test) == y_test).mean())
    assert acc10 >= 0.95, f"ten-class accuracy {acc10}"

    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"blob classification took {elapsed:.1f} s"
    announce(4, f"blob accuracy two-class {acc2:.3f} (>=0.99), ten-class {acc10:.3f} (>=0.95)")


def test_05_conv_stack_shape():
    spec = alexnet_stub(0)
    assert spec.validate() == (256, 6, 6)
    assert spec.feature_dim == 9216
    image = np.random.default_rng(5).integers(0, 256, size=(310, 240), dtype=np.uint8)
    assert extract(image, spec).shape == (9216,)
    announce(5, "canonical conv stack maps (3,227,227) to 9216 features")


def test_06_layer_oracles():
    started = time.perf_counter()
    gen = np.random.default_rng(606)

    for _ in range(100):
        groups = int(gen.integers(1, 3))
        in_c = groups * int(gen.integers(1, 4))
        out_c = groups * int(gen.integers(1, 4))
        k = int(gen.integers(1, 4))
        stride = int(gen.integers(1, 3))
        pad = int(gen.integers(0, 2))
        h = int(gen.integers(k, 9))
        w = int(gen.integers(k, 9))
        x = gen.normal(size=(in_c, h, w)).astype(np.float32)
        layer = random_conv_layer(gen, in_c, out_c, k, stride, pad, groups)
        gap = np.abs(conv_forward(x, layer) - naive_conv(x, layer)).max()
        assert gap <= 1e-5, f"conv gap {gap:.3e}"

    for _ in range(100):
        c = int(gen.integers(1, 5))
        h = int(gen.integers(2, 14))
        w = int(gen.integers(2, 14))
        k = int(gen.integers(1, min(h, w) + 1))
        s = int(gen.integers(1, 4))
        x = gen.normal(size=(c, h, w)).astype(np.float32)
        layer = MaxPoolLayer(kernel=k, stride=s)
        assert np.array_equal(maxpool_forward(x, layer), naive_maxpool(x, layer))

    for _ in range(100):
        c = int(gen.integers(1, 8))
        h = int(gen.integers(1, 6))
        w = int(gen.integers(1, 6))
        local = int(gen.integers(0, 3)) * 2 + 1
        x = gen.normal(size=(c, h, w)).astype(np.float32)
        layer = LrnLayer(local_size=local, alpha=1e-4, beta=0.75, k=1.0)
        gap = np.abs(lrn_forward(x, layer) - naive_lrn(x, layer)).max()
        assert gap <= 1e-6, f"lrn gap {gap:.3e}"

    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"layer oracle sweep took {elapsed:.1f} s"
    announce(6, "conv/pool/lrn match scalar oracles on 100 random tensors each")


def test_07_partition_protocol_fidelity():
    labels = np.repeat(np.arange(10), 110)
    plans = [make_partitions(labels, seed=2024) for _ in range(2)]
    plan = plans[0]
    assert plan.sizes == tuple(range(10, 101, 10))
    assert len(plan.cells) == 100

    digest = hashlib.sha256()
    for key in sorted(plan.cells):
        train, test = plan.cells[key]
        size, _rep = key
        assert np.intersect1d(train, test).size == 0
        assert np.array_equal(np.union1d(train, test), np.arange(labels.size))
        assert np.array_equal(
            np.bincount(labels[train], minlength=10), np.full(10, size)
        )
        other_train, other_test = plans[1].cells[key]
        assert np.array_equal(train, other_train)
        assert np.array_equal(test, other_test)
        digest.update(train.tobytes())
        digest.update(test.tobytes())
    assert digest.hexdigest() == (
        "03b22ce4cdcfd5684ce45cf35037abd1adc3e8005083c71030c9c6e69b3404a0"
    ), "partition plan drifted from the pinned cross-platform fingerprint"
    announce(7, "default grid: 100 stratified disjoint cells, bit-reproducible")


def test_08_training_time_benchmark():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        pytest.skip("threadpoolctl unavailable; cannot pin to one thread")
    gen = np.random.default_rng(808)
    X = gen.normal(size=(1000, 9216)).astype(np.float32)
    y = gen.integers(0, 10, size=1000)
    model = ElmClassifier(n_hidden=2000, C=1.0, seed=8)
    with threadpool_limits(limits=1):
        started = time.perf_counter()
        model.fit(X, y)
        elapsed = time.perf_counter() - started
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as f:
            for line in f:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    print(
        f"\n[benchmark] 2000 hidden units, 1000x9216 features: "
        f"{elapsed:.2f} s single-threaded on {cpu}"
    )
    # soft hardware-annotated budget; generous for commodity CPUs
    assert elapsed <= 15.0, f"single-threaded training took {elapsed:.1f} s"
    announce(8, f"full-width training in {elapsed:.2f} s single-threaded (<= 15 s)")


def test_09_full_scale_reproduction_documented():
    # The reported full-corpus accuracies need externally supplied pretrained
    # conv weights and the Tobacco-3482 images, neither of which is bundled;
    # the README must document the exact commands for users who have both.
    readme = (REPO_ROOT / "README.md").read_text()
    for needle in (
        "elmdoc extract",
        "elmdoc evaluate",
        "Tobacco-3482",
        "pretrained",
    ):
        assert needle in readme, f"README is missing {needle!r}"
    announce(9, "full-scale reproduction commands documented (external data required)")


def test_10_serialization_round_trips_and_fault_injection(tmp_path):
    gen = np.random.default_rng(1010)

    features = FeatureSet(
        X=gen.normal(size=(6, 4)).astype(np.float32),
        labels=gen.integers(0, 2, size=6),
        class_names=["a", "b"],
    )
    f1, f2 = tmp_path / "f1.fmx", tmp_path / "f2.fmx"
    write_features(f1, features)
    write_features(f2, read_features(f1))
    assert f1.read_bytes() == f2.read_bytes()

    model = ElmClassifier(n_hidden=6, seed=10).fit(
        gen.normal(size=(12, 4)), gen.integers(0, 2, size=12)
    )
    m1, m2 = tmp_path / "m1.elm", tmp_path / "m2.elm"
    save_model(model, m1)
    save_model(load_model(m1), m2)
    assert m1.read_bytes() == m2.read_bytes()

    net = alexnet_stub(4)
    n1, n2 = tmp_path / "n1.efw", tmp_path / "n2.efw"
    save_netspec(net, n1)
    save_netspec(load_netspec(n1), n2)
    assert n1.read_bytes() == n2.read_bytes()

    for path, loader in ((f1, read_features), (m1, load_model), (n1, load_netspec)):
        corrupted = tmp_path / (path.name + ".badmagic")
        corrupted.write_bytes(b"ZZZZ" + path.read_bytes()[4:])
        with pytest.raises(fileio.BadMagicError):
            loader(corrupted)
        truncated = tmp_path / (path.name + ".cut")
        truncated.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(fileio.TruncatedFileError):
            loader(truncated)
    announce(10, "ELM1/FMX1/EFW1 round-trip bit-compatibly; corruption raises typed errors")
