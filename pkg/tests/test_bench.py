import gzip
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voltscale import bench, datasets, mat, nn
from voltscale.datasets import Dataset, DataMissingError


# -- inversek2j ---------------------------------------------------------------------------

def test_forward_kinematics_examples():
    x, y = datasets.forward_kinematics(0.0, 0.0)
    assert (float(x), float(y)) == (2.0, 0.0)
    x, y = datasets.forward_kinematics(math.pi / 2, 0.0)
    assert float(x) == pytest.approx(0.0, abs=1e-15) and float(y) == 2.0


def test_inversek2j_roundtrip():
    ds = datasets.gen_inversek2j(2000, seed=3)
    x, y, t1, t2 = datasets.denormalize_inversek2j(ds)
    fx, fy = datasets.forward_kinematics(t1, t2)
    assert np.max(np.abs(fx - x)) <= 1e-12 and np.max(np.abs(fy - y)) <= 1e-12
    i1, i2 = datasets.inverse_kinematics(x, y)
    gx, gy = datasets.forward_kinematics(i1, i2)
    assert np.max(np.hypot(gx - x, gy - y)) <= 1e-6
    assert ds.X.min() >= -1 and ds.X.max() <= 1
    assert ds.Y.min() >= 0 and ds.Y.max() <= 1


# -- bscholes -------------------------------------------------------------------------------

def bs_oracle(s, k, r, v, t, q):
    """Closed form with math.erf; independent of the vectorized version."""
    if v * math.sqrt(t) == 0:
        return max(s * math.exp(-q * t) - k * math.exp(-r * t), 0.0)
    d1 = (math.log(s / k) + (r - q + v * v / 2) * t) / (v * math.sqrt(t))
    d2 = d1 - v * math.sqrt(t)
    phi = lambda z: 0.5 * (1 + math.erf(z / math.sqrt(2)))
    return s * math.exp(-q * t) * phi(d1) - k * math.exp(-r * t) * phi(d2)


def test_bscholes_matches_closed_form():
    ds = datasets.gen_bscholes(300, seed=5)
    for row, p in zip(ds.meta["inputs"], ds.meta["raw_price"]):
        assert p == pytest.approx(bs_oracle(*row), abs=1e-10)


def test_bscholes_limits():
    # zero volatility and zero rate: intrinsic value
    assert float(datasets.black_scholes_call(120, 100, 0, 0, 1)) == 20.0
    assert float(datasets.black_scholes_call(80, 100, 0, 0, 1)) == 0.0
    # textbook value: S=K=100, r=5%, vol=20%, T=1
    assert float(datasets.black_scholes_call(100, 100, 0.05, 0.2, 1)) == \
        pytest.approx(10.4506, abs=1e-4)


@settings(max_examples=50)
@given(s=st.floats(50, 150), k=st.floats(50, 150), r=st.floats(0, 0.1),
       v=st.floats(0.05, 0.6), t=st.floats(0.1, 2))
def test_bscholes_no_arbitrage_bounds(s, k, r, v, t):
    c = float(datasets.black_scholes_call(s, k, r, v, t))
    assert max(s - k * math.exp(-r * t), 0) - 1e-9 <= c <= s + 1e-9


# -- splits and determinism -------------------------------------------------------------------

@pytest.mark.parametrize("gen", [datasets.gen_inversek2j, datasets.gen_bscholes])
def test_generators_are_deterministic(gen):
    assert gen(100, seed=1) == gen(100, seed=1)
    assert gen(100, seed=1) != gen(100, seed=2)
    with pytest.raises(ValueError):
        gen(0)


def test_split_disjoint_and_exhaustive():
    ds = datasets.gen_inversek2j(550, seed=0)
    tr, te = datasets.train_test_split(ds, ratio=10, seed=4)
    assert len(te) == 50 and len(tr) == 500
    rows = lambda d: {tuple(x) for x in d.X}
    assert not rows(tr) & rows(te)
    assert rows(tr) | rows(te) == rows(ds)
    with pytest.raises(ValueError):
        datasets.train_test_split(ds, n_test=550)


def test_split_is_stratified():
    labels = np.repeat(np.arange(4), [500, 300, 150, 50])
    ds = Dataset(np.arange(1000.0)[:, None], datasets.one_hot(labels, 4), "x",
                 {"labels": labels})
    tr, te = datasets.train_test_split(ds, ratio=4, seed=0)
    for c, frac in enumerate((0.5, 0.3, 0.15, 0.05)):
        assert abs(np.mean(te.labels == c) - frac) <= 0.02
        assert abs(np.mean(tr.labels == c) - frac) <= 0.02


def test_dataset_guards():
    with pytest.raises(ValueError):
        Dataset(np.ones((3, 2)), np.ones(2))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.ones(1))


def test_dataset_cache_roundtrip(tmp_path):
    ds = datasets.gen_facedet(20, seed=1)
    datasets.save_dataset(ds, tmp_path / "d.csv")
    back = datasets.load_dataset(tmp_path / "d.csv")
    assert back == ds
    assert np.array_equal(back.labels, ds.labels)


# -- MNIST files ------------------------------------------------------------------------------------

def test_idx_roundtrip_and_header(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, (3, 28, 28), dtype=np.uint8)
    path = tmp_path / "img.gz"
    datasets.write_idx(path, imgs)
    raw = gzip.open(path).read()
    assert raw[:4] == bytes([0, 0, 0x08, 3])
    assert int.from_bytes(raw[4:8], "big") == 3 and int.from_bytes(raw[8:12], "big") == 28
    assert np.array_equal(datasets.read_idx(path), imgs)
    bad = tmp_path / "bad"
    bad.write_bytes(b"\x01\x00\x08\x01\x00\x00\x00\x01\x00")
    with pytest.raises(ValueError):
        datasets.read_idx(bad)
    with pytest.raises(DataMissingError):
        datasets.read_idx(tmp_path / "nope")


def write_fake_mnist(root, n=60, seed=0):
    imgs, labels = datasets.gen_digit_images(n, seed)
    imgs = np.round(np.clip(imgs, 0, 1) * 255).astype(np.uint8)
    for stem in ("train", "t10k"):
        datasets.write_idx(root / f"{stem}-images-idx3-ubyte", imgs)
        datasets.write_idx(root / f"{stem}-labels-idx1-ubyte", labels.astype(np.uint8))


def test_mnist_from_idx_files(tmp_path):
    write_fake_mnist(tmp_path)
    tr, te = datasets.mnist(tmp_path, n_train=40, n_test=20, seed=0)
    assert tr.X.shape == (40, 100) and te.X.shape == (20, 100)
    assert tr.meta["source"] == "idx"
    assert np.all(tr.Y.sum(axis=1) == 1)


def test_mnist_missing_files(tmp_path):
    with pytest.raises(DataMissingError):
        datasets.mnist(tmp_path / "none", fallback=False)
    tr, _ = datasets.mnist(tmp_path / "none", n_train=30, n_test=10)
    assert tr.X.shape == (30, 100)


def test_blank_image_gives_zero_features():
    assert np.all(datasets.downsample(np.zeros((2, 28, 28))) == 0)
    # a constant image stays constant: the resampler rows sum to one
    assert np.allclose(datasets.downsample(np.full((1, 28, 28), 0.7)), 0.7, atol=1e-12)


# -- faces ---------------------------------------------------------------------------------------

def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(1).random((19, 19))
    datasets.write_pgm(tmp_path / "a.pgm", img)
    back = datasets.read_pgm(tmp_path / "a.pgm")
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12
    (tmp_path / "b.pgm").write_text("P2\n# c\n2 1\n4\n0 4\n")
    assert datasets.read_pgm(tmp_path / "b.pgm").tolist() == [[0.0, 1.0]]


def test_cbcl_loader(tmp_path):
    rng = np.random.default_rng(0)
    for sub in ("face", "non-face"):
        (tmp_path / sub).mkdir()
        for i in range(3):
            datasets.write_pgm(tmp_path / sub / f"{i}.pgm", rng.random((19, 19)))
    ds = datasets.facedet(tmp_path)
    assert ds.X.shape == (6, 400) and ds.labels.tolist() == [1, 1, 1, 0, 0, 0]


def test_facedet_synthetic_is_learnable():
    spec = bench.get_spec("facedet")
    tr, te = bench.load_benchmark(spec, seed=0)
    assert tr.X.shape[1] == 400
    net = nn.init_mlp(list(spec.topology), seed=0)
    cfg = mat.TrainConfig(alpha=spec.alpha, epochs=spec.epochs, fmt=None, seed=0)
    net, _ = mat.train(net, tr, cfg)
    assert bench.metric(nn.predict(net, te.X), te.Y, bench.CLASSIFICATION) < 0.05


# -- metrics ------------------------------------------------------------------------------------

def test_classification_metric_examples():
    t = datasets.one_hot([0, 1, 2], 3)
    assert bench.metric(t, t, "classification") == 0.0
    assert bench.metric(t[::-1], t, "classification") == pytest.approx(2 / 3)
    assert bench.metric([[0.6], [0.2]], [[1.0], [1.0]], "classification") == 0.5
    rng = np.random.default_rng(0)
    y = rng.random((20000, 10))
    t = datasets.one_hot(rng.integers(0, 10, 20000), 10)
    assert bench.metric(y, t, "classification") == pytest.approx(0.9, abs=0.01)


def test_mse_of_the_mean_is_the_variance():
    t = np.random.default_rng(2).normal(size=(500, 1))
    y = np.full_like(t, t.mean())
    assert bench.metric(y, t, "mse") == pytest.approx(t.var(), rel=1e-12)
    with pytest.raises(ValueError):
        bench.metric(y, t, "mae")
    with pytest.raises(ValueError):
        bench.metric(y[:3], t, "mse")


def test_aei_examples():
    assert bench.aei({0.5: 0.1, 0.48: 0.1}, 0.1) == 0.0
    # increases of 0.1 and 0.2 over nominal: mean 15 percentage points
    assert bench.aei({0.5: 0.2, 0.48: 0.3}, 0.1) == pytest.approx(15.0)
    # improvements are clipped, not credited
    assert bench.aei([0.0, 0.3], 0.1) == pytest.approx(10.0)
    assert bench.aei([0.02, 0.03], 0.01, "mse") == pytest.approx(150.0)
    with pytest.raises(ValueError):
        bench.aei([], 0.1)
    assert bench.aei_reduction(6.0, 2.0) == 3.0
    assert bench.aei_reduction(1.0, 0.0) == math.inf
    assert bench.aei_reduction(0.0, 0.0) == 1.0


# -- topology knee -------------------------------------------------------------------------------

def test_knee_examples():
    p = [10, 20, 40, 80, 160]
    assert bench.knee_point(p, [0.1] * 5) == 0                      # flat: smallest
    assert bench.knee_point(p, [0.9, 0.1, 0.1, 0.1, 0.1]) == 1      # L-shape: corner
    assert bench.knee_point(p, [0.5, 0.3, 0.2, 0.15, 0.13]) in (1, 2)
    # input order does not matter
    assert bench.knee_point(p[::-1], [0.1, 0.1, 0.1, 0.1, 0.9]) == 3
    with pytest.raises(ValueError):
        bench.knee_point([1, 2], [0.1, 0.2])


@given(st.lists(st.floats(0, 1), min_size=3, max_size=8))
def test_knee_is_a_valid_index(errs):
    k = bench.knee_point(list(range(1, len(errs) + 1)), errs)
    assert 0 <= k < len(errs)


def test_topology_sweep_small():
    spec = bench.get_spec("inversek2j")
    tr, te = bench.load_benchmark(spec, seed=0, n_samples=330)
    sw = bench.topology_sweep(spec, [(2, h, 2) for h in (1, 4, 16)], tr, te, seed=0, epochs=5)
    assert [p.n_params for p in sw.points] == [7, 22, 82]
    assert sw.chosen is sw.points[sw.knee]


def test_benchmark_specs():
    assert bench.get_spec("mnist").topology == (100, 32, 10)
    assert bench.get_spec("inversek2j").n_params == 2 * 16 + 16 + 16 * 2 + 2
    with pytest.raises(ValueError):
        bench.get_spec("jpeg")
    for name in bench.BENCHMARKS:
        tr, te = bench.load_benchmark(name, seed=0, n_samples=110)
        assert tr.X.shape[1] == bench.get_spec(name).topology[0]
