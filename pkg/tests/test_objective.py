import gzip
import math

import numpy as np
import pytest

from irncota.objective import (
    LocalDataset,
    LogisticObjective,
    QuadraticObjective,
    global_objective,
    ingest_fashion_mnist,
    local_gradient,
    local_value_grad,
    loss,
    radius_from_optimum,
    solve_optimum,
    split_by_class,
    synthetic_dataset,
    write_idx,
)
from irncota.rng import Label, StreamKey, derive_stream


def data_stream(it=0):
    return derive_stream(21, StreamKey(Label.DATA_SHUFFLE, 0, it))


def unit_rows(rng, n, F):
    x = rng.normal(size=(n, F))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_dataset(rng, n=5, F=6, C=10):
    return LocalDataset(unit_rows(rng, n, F), rng.integers(0, C, size=n))


def test_loss_at_zero_is_log_classes():
    rng = np.random.default_rng(0)
    f = unit_rows(rng, 1, 50)[0]
    for label in range(10):
        assert loss(label, f, np.zeros(450), mu=0.3) == pytest.approx(math.log(10), abs=1e-12)
    assert math.log(10) == pytest.approx(2.302585, abs=1e-6)


def test_loss_vanishes_for_confident_true_class():
    f = np.zeros(4)
    f[0] = 1.0
    values = []
    for scale in [1, 5, 20, 80]:
        w = np.zeros(9 * 4)
        w[2 * 4] = scale  # class 3 block, aligned with f
        values.append(loss(3, f, w, mu=0.0))
    assert all(a > b for a, b in zip(values, values[1:])) and values[-1] < 1e-30


def test_loss_lower_bound_and_label_check():
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = rng.normal(size=27)
        f = unit_rows(rng, 1, 3)[0]
        assert loss(int(rng.integers(10)), f, w, 0.2) >= 0.1 * w @ w
    with pytest.raises(ValueError):
        loss(10, f, w, 0.2)


def central_difference(fun, w, h=1e-5):
    g = np.zeros_like(w)
    for k in range(len(w)):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (fun(w + e) - fun(w - e)) / (2 * h)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        ds = random_dataset(rng, n=int(rng.integers(1, 8)), F=5)
        w = rng.normal(scale=2.0, size=45)
        mu = 0.001
        g = local_gradient(ds, w, mu)
        fd = central_difference(lambda v: local_value_grad(ds, v, mu)[0], w)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert worst < 1e-5


def test_gradient_at_zero_label_zero():
    f = unit_rows(np.random.default_rng(3), 1, 50)
    g = local_gradient(LocalDataset(f, np.array([0])), np.zeros(450), mu=0.5)
    assert np.allclose(g.reshape(9, 50), np.tile(f / 10, (9, 1)), atol=1e-15)


def test_gradient_reduces_to_regularizer_on_balanced_data():
    # features live in the first F-1 coordinates and w only in the last, so
    # every softmax is uniform; with balanced labels the data term averages out
    rng = np.random.default_rng(4)
    F, C, per_class = 6, 10, 20_000
    x = np.zeros((C * per_class, F))
    x[:, : F - 1] = unit_rows(rng, C * per_class, F - 1)
    ds = LocalDataset(x, np.repeat(np.arange(C), per_class))
    w = np.zeros((C - 1, F))
    w[:, -1] = rng.normal(size=C - 1)
    w = w.ravel()
    mu = 0.5
    g = local_gradient(ds, w, mu)
    assert np.linalg.norm(g - mu * w) / np.linalg.norm(mu * w) < 0.05


def test_global_objective_is_average():
    rng = np.random.default_rng(5)
    sets = [random_dataset(rng, n=int(rng.integers(2, 6)), F=4) for _ in range(6)]
    w = rng.normal(size=36)
    value, grad = global_objective(sets, w, 0.01)
    locals_ = [local_value_grad(ds, w, 0.01) for ds in sets]
    assert value == pytest.approx(np.mean([v for v, _ in locals_]), rel=1e-13)
    assert np.max(np.abs(grad - np.mean([g for _, g in locals_], axis=0))) < 1e-12
    v1, g1 = global_objective(sets[:1], w, 0.01)
    assert v1 == pytest.approx(locals_[0][0]) and np.allclose(g1, locals_[0][1])


def test_local_gradients_batched_matches_loop():
    rng = np.random.default_rng(6)
    sets = [random_dataset(rng, n=5, F=4) for _ in range(4)]
    obj = LogisticObjective(sets, 0.01)
    W = rng.normal(size=(4, 36))
    loop = np.stack([local_gradient(ds, w, 0.01) for ds, w in zip(sets, W)])
    assert np.allclose(obj.local_gradients(W), loop, atol=1e-14)


def test_strong_convexity_and_smoothness():
    rng = np.random.default_rng(7)
    sets = [random_dataset(rng, n=5, F=5) for _ in range(10)]
    mu = 0.001
    obj = LogisticObjective(sets, mu)
    for _ in range(100):
        a, b = rng.normal(scale=3, size=(2, obj.dim))
        inner = (obj.value_grad(a)[1] - obj.value_grad(b)[1]) @ (a - b)
        dist2 = (a - b) @ (a - b)
        assert mu * dist2 <= inner * (1 + 1e-12) and inner <= obj.L * dist2


def test_quadratic_optimum_closed_form():
    rng = np.random.default_rng(8)
    centers = rng.normal(size=(7, 3))
    opt = solve_optimum(QuadraticObjective(centers))
    assert opt.converged and np.allclose(opt.w, centers.mean(axis=0), atol=1e-8)


def desk_objective(mu=0.001):
    sets = synthetic_dataset(10, 10, 5, 20, data_stream(), noise=0.3)
    return LogisticObjective(sets, mu)


def test_logistic_optimum_stationary_and_unique():
    obj = desk_objective()
    a = solve_optimum(obj)
    assert a.converged and a.grad_norm <= 1e-9
    # the default stopping rule only pins each solve to within 1e-9 / mu = 1e-6
    # of the optimum, so the two-start comparison runs tighter
    start = np.random.default_rng(9).normal(scale=5, size=obj.dim)
    a_tight = solve_optimum(obj, tol=1e-10, w0=a.w)
    b = solve_optimum(obj, tol=1e-10, w0=start)
    assert np.linalg.norm(a_tight.w - b.w) < 1e-6
    r = radius_from_optimum(obj.mu, obj.value_grad(np.zeros(obj.dim))[1])
    assert np.linalg.norm(a.w) <= r


def test_radius_examples():
    c = np.array([3.0, -4.0])
    obj = QuadraticObjective(np.tile(c, (3, 1)))
    r = radius_from_optimum(1.0, obj.value_grad(np.zeros(2))[1])
    assert r == pytest.approx(5.0) and np.linalg.norm(solve_optimum(obj).w) == pytest.approx(r)
    assert radius_from_optimum(2.0, np.array([3.0, 4.0])) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        radius_from_optimum(0.0, c)


def test_synthetic_dataset_layout():
    sets = synthetic_dataset(10, 10, 5, 20, data_stream())
    labels = [int(ds.labels[0]) for ds in sets]
    assert all(np.all(ds.labels == ds.labels[0]) for ds in sets)
    assert np.bincount(labels, minlength=10).tolist() == [2] * 10
    assert all(np.allclose(np.linalg.norm(ds.features, axis=1), 1, atol=1e-12) for ds in sets)
    with pytest.raises(ValueError):
        synthetic_dataset(10, 10, 5, 25, data_stream())


def test_synthetic_low_noise_is_separable():
    sets = synthetic_dataset(10, 10, 5, 20, data_stream(1), noise=0.05)
    obj = LogisticObjective(sets, 0.001)
    w = solve_optimum(obj, tol=1e-6).w
    train = LocalDataset(np.concatenate([d.features for d in sets]), np.concatenate([d.labels for d in sets]))
    assert obj.error_rate(w, train) < 0.05


@pytest.fixture
def idx_files(tmp_path):
    images = np.zeros((30, 28, 28), dtype=np.uint8)
    images[1] = 255
    rng = np.random.default_rng(10)
    images[2:] = rng.integers(0, 256, size=(28, 28, 28))
    labels = np.arange(30) % 10
    write_idx(tmp_path / "img.idx", images)
    write_idx(tmp_path / "lab.idx.gz", labels)
    return tmp_path, images, labels


def test_ingest_idx(idx_files):
    path, images, labels = idx_files
    ds = ingest_fashion_mnist(path / "img.idx", path / "lab.idx.gz")
    assert len(ds) == 30 and ds.features.shape == (30, 50)
    assert np.array_equal(ds.labels, labels)
    bias_only = np.zeros(50)
    bias_only[-1] = 1
    assert np.array_equal(ds.features[0], bias_only)
    full = ds.features[1]
    assert np.allclose(full[:49], full[0]) and full[0] > 0 and full[-1] > 0
    assert np.allclose(np.linalg.norm(ds.features, axis=1), 1, atol=1e-12)
    # pooling reference for one image
    ref = images[5].astype(float).reshape(7, 4, 7, 4).mean(axis=(1, 3)).ravel() / 255
    ref = np.append(ref, 1.0)
    assert np.allclose(ds.features[5], ref / np.linalg.norm(ref))


def test_ingest_errors(idx_files, tmp_path):
    path, images, labels = idx_files
    raw = (path / "img.idx").read_bytes()
    (tmp_path / "bad_magic").write_bytes(b"\x00\x00\x08\x04" + raw[4:])
    with pytest.raises(ValueError, match="magic"):
        ingest_fashion_mnist(tmp_path / "bad_magic", path / "lab.idx.gz")
    (tmp_path / "short").write_bytes(raw[:-100])
    with pytest.raises(ValueError, match="truncated"):
        ingest_fashion_mnist(tmp_path / "short", path / "lab.idx.gz")
    write_idx(tmp_path / "few.idx", labels[:10])
    with pytest.raises(ValueError, match="mismatch"):
        ingest_fashion_mnist(path / "img.idx", tmp_path / "few.idx")
    assert gzip.decompress((path / "lab.idx.gz").read_bytes())[:4] == b"\x00\x00\x08\x01"


def test_split_by_class(idx_files):
    path, _, _ = idx_files
    pool = ingest_fashion_mnist(path / "img.idx", path / "lab.idx.gz")
    sets = split_by_class(pool, 10, 3, data_stream())
    assert [int(s.labels[0]) for s in sets] == list(range(10))
    assert all(len(s) == 3 and np.all(s.labels == s.labels[0]) for s in sets)
    with pytest.raises(ValueError):
        split_by_class(pool, 20, 3, data_stream())
