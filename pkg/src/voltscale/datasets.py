"""Benchmark datasets: generators, corpus loaders and synthetic stand-ins.

All generators are deterministic in ``(n, seed)``. Features are scaled to
``[0, 1]`` or ``[-1, 1]``; regression targets to ``[0, 1]``. Whatever was
needed to undo the scaling is kept in ``Dataset.meta``.
"""
from __future__ import annotations

import gzip
import io
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

log = logging.getLogger(__name__)


class DataMissingError(FileNotFoundError):
    """A corpus file is absent or unreadable."""


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        Y = np.ascontiguousarray(self.Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or len(X) != len(Y):
            raise ValueError(f"feature/target shapes disagree: {X.shape} vs {Y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains NaN or inf")
        for a in (X, Y):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def labels(self) -> np.ndarray | None:
        if "labels" in self.meta:
            return np.asarray(self.meta["labels"])
        return None

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        meta = {k: (v[idx] if isinstance(v, np.ndarray) and len(v) == len(self) else v)
                for k, v in self.meta.items()}
        return Dataset(self.X[idx], self.Y[idx], self.name, meta)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.name == other.name and np.array_equal(self.X, other.X)
                and np.array_equal(self.Y, other.Y))


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def train_test_split(ds: Dataset, n_test=None, ratio: float | None = None,
                     seed=0) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive split; stratified when ``ds`` carries labels.

    Give either ``n_test`` or ``ratio`` (train:test, e.g. 7 for 7-to-1).
    """
    n = len(ds)
    if n_test is None:
        if ratio is None:
            raise ValueError("give n_test or ratio")
        n_test = int(round(n / (ratio + 1)))
    if not 0 < n_test < n:
        raise ValueError(f"cannot split {n} samples with {n_test} for test")
    rng = np.random.default_rng(seed)
    labels = ds.labels
    if labels is None:
        perm = rng.permutation(n)
        test_idx = perm[:n_test]
    else:
        test_idx = []
        classes, counts = np.unique(labels, return_counts=True)
        quota = np.floor(counts * n_test / n).astype(int)
        # hand out the remainder to the classes with the largest fractions
        rem = counts * n_test / n - quota
        for k in np.argsort(-rem, kind="stable")[: n_test - quota.sum()]:
            quota[k] += 1
        for c, q in zip(classes, quota):
            members = np.flatnonzero(labels == c)
            test_idx.extend(rng.permutation(members)[:q])
        test_idx = np.array(test_idx, dtype=np.int64)
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    train_idx = rng.permutation(np.flatnonzero(~mask))
    test_idx = rng.permutation(np.flatnonzero(mask))
    return ds.subset(train_idx), ds.subset(test_idx)


# ---------------------------------------------------------------------------
# inversek2j: two-link arm, unit link lengths
# ---------------------------------------------------------------------------

THETA1_RANGE = (0.0, math.pi / 2)
THETA2_RANGE = (0.0, math.pi)


def forward_kinematics(theta1, theta2, l1=1.0, l2=1.0):
    theta1 = np.asarray(theta1, dtype=np.float64)
    theta2 = np.asarray(theta2, dtype=np.float64)
    x = l1 * np.cos(theta1) + l2 * np.cos(theta1 + theta2)
    y = l1 * np.sin(theta1) + l2 * np.sin(theta1 + theta2)
    return x, y


def inverse_kinematics(x, y):
    """Elbow branch with ``theta2 >= 0`` for unit links."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    c2 = np.clip((x * x + y * y - 2.0) / 2.0, -1.0, 1.0)
    theta2 = np.arccos(c2)
    theta1 = np.arctan2(y, x) - np.arctan2(np.sin(theta2), 1.0 + np.cos(theta2))
    return theta1, theta2


def gen_inversek2j(n: int, seed=0) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    t1 = rng.uniform(*THETA1_RANGE, size=n)
    t2 = rng.uniform(*THETA2_RANGE, size=n)
    x, y = forward_kinematics(t1, t2)
    X = np.column_stack([x, y]) / 2.0
    Y = np.column_stack([(t1 - THETA1_RANGE[0]) / (THETA1_RANGE[1] - THETA1_RANGE[0]),
                         (t2 - THETA2_RANGE[0]) / (THETA2_RANGE[1] - THETA2_RANGE[0])])
    meta = {"feature_scale": 2.0, "theta1_range": THETA1_RANGE,
            "theta2_range": THETA2_RANGE, "kind": "regression"}
    return Dataset(X, Y, "inversek2j", meta)


def denormalize_inversek2j(ds: Dataset):
    """Return ``(x, y, theta1, theta2)`` in physical units."""
    s = ds.meta["feature_scale"]
    (a1, b1), (a2, b2) = ds.meta["theta1_range"], ds.meta["theta2_range"]
    return (ds.X[:, 0] * s, ds.X[:, 1] * s,
            a1 + ds.Y[:, 0] * (b1 - a1), a2 + ds.Y[:, 1] * (b2 - a2))


# ---------------------------------------------------------------------------
# bscholes: European call, continuous dividend yield
# ---------------------------------------------------------------------------

BSCHOLES_RANGES = {
    "spot": (50.0, 150.0),
    "strike": (50.0, 150.0),
    "rate": (0.0, 0.10),
    "volatility": (0.05, 0.60),
    "maturity": (0.10, 2.00),
    "dividend": (0.0, 0.05),
}


def black_scholes_call(spot, strike, rate, vol, maturity, dividend=0.0):
    spot, strike, rate, vol, maturity, dividend = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in
          (spot, strike, rate, vol, maturity, dividend)))
    fwd_spot = spot * np.exp(-dividend * maturity)
    pv_strike = strike * np.exp(-rate * maturity)
    sd = vol * np.sqrt(maturity)
    intrinsic = np.maximum(fwd_spot - pv_strike, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(spot / strike) + (rate - dividend + 0.5 * vol * vol) * maturity) / sd
        price = fwd_spot * ndtr(d1) - pv_strike * ndtr(d1 - sd)
    return np.where(sd > 0, price, intrinsic)


def gen_bscholes(n: int, seed=0) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    cols = [rng.uniform(lo, hi, size=n) for lo, hi in BSCHOLES_RANGES.values()]
    price = black_scholes_call(*cols)
    lo = np.array([r[0] for r in BSCHOLES_RANGES.values()])
    hi = np.array([r[1] for r in BSCHOLES_RANGES.values()])
    X = (np.column_stack(cols) - lo) / (hi - lo)
    pmin, pmax = float(price.min()), float(price.max())
    span = pmax - pmin if pmax > pmin else 1.0
    Y = (price - pmin) / span
    meta = {"price_min": pmin, "price_max": pmax, "raw_price": price,
            "inputs": np.column_stack(cols), "kind": "regression"}
    return Dataset(X, Y[:, None], "bscholes", meta)


# ---------------------------------------------------------------------------
# MNIST: IDX parsing and 28x28 -> 10x10 resampling
# ---------------------------------------------------------------------------

_IDX_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4",
               0x0D: ">f4", 0x0E: ">f8"}


def _open(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Parse an IDX file (optionally gzipped): big-endian magic + dims."""
    path = Path(path)
    try:
        with _open(path) as f:
            raw = f.read()
    except OSError as exc:
        raise DataMissingError(f"cannot read IDX file {path}: {exc}") from None
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise ValueError(f"{path}: bad IDX magic")
    dtype, ndim = raw[2], raw[3]
    if dtype not in _IDX_DTYPES:
        raise ValueError(f"{path}: unknown IDX element type {dtype:#x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    data = np.frombuffer(raw, dtype=_IDX_DTYPES[dtype], offset=4 + 4 * ndim)
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} elements, found {data.size}")
    return data.reshape(dims)


def write_idx(path, array) -> None:
    array = np.asarray(array)
    codes = {np.dtype("uint8"): 0x08, np.dtype("int8"): 0x09}
    if array.dtype not in codes:
        raise ValueError("only uint8/int8 IDX output is supported")
    header = bytes([0, 0, codes[array.dtype], array.ndim]) + \
        struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(header + array.tobytes())


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Rows map an ``n_in`` signal to ``n_out`` samples: 2-tap box
    prefilter (edge-replicated) followed by bilinear interpolation at the
    output pixel centres."""
    box = np.zeros((n_in, n_in))
    for i in range(n_in):
        box[i, i] += 0.5
        box[i, min(i + 1, n_in - 1)] += 0.5
    # the box filter shifts content by half a pixel; undo it in the sampling grid
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5 - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    lin = np.zeros((n_out, n_in))
    lin[np.arange(n_out), lo] += 1 - frac
    lin[np.arange(n_out), hi] += frac
    return lin @ box


def downsample(images, size: int = 10) -> np.ndarray:
    """``(n, h, w)`` images to ``(n, size, size)``."""
    images = np.asarray(images, dtype=np.float64)
    rows = _resample_matrix(images.shape[1], size)
    cols = _resample_matrix(images.shape[2], size)
    return np.einsum("ij,njk,lk->nil", rows, images, cols)


_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(root: Path, stem: str) -> Path:
    for cand in (root / stem, root / (stem + ".gz"),
                 root / stem.replace("-idx", ".idx")):
        if cand.exists():
            return cand
    raise DataMissingError(f"MNIST file {stem}[.gz] not found under {root}")


def _images_to_dataset(images, labels, size, name, source) -> Dataset:
    feats = downsample(np.asarray(images, dtype=np.float64) / 255.0, size)
    X = np.clip(feats.reshape(len(feats), -1), 0.0, 1.0)
    labels = np.asarray(labels, dtype=np.int64)
    return Dataset(X, one_hot(labels, 10), name,
                   {"labels": labels, "kind": "classification", "source": source})


def load_mnist(path, downsample_to: int = 10, n_train: int | None = 4000,
               n_test: int | None = 1000, seed=0) -> tuple[Dataset, Dataset]:
    """Read MNIST IDX files from ``path``; return ``(train, test)`` subsets.

    Subsets are drawn (stratified) from the official train and test files.
    """
    root = Path(path)
    parts = {}
    for part, (img_name, lab_name) in _MNIST_FILES.items():
        images = read_idx(_find(root, img_name))
        labels = read_idx(_find(root, lab_name))
        if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
            raise ValueError(f"MNIST {part} files have inconsistent shapes")
        parts[part] = _images_to_dataset(images, labels, downsample_to, "mnist", "idx")
    out = []
    for part, n in (("train", n_train), ("test", n_test)):
        ds = parts[part]
        if n is not None and n < len(ds):
            ds = train_test_split(ds, n_test=n, seed=seed)[1]
        out.append(ds)
    return out[0], out[1]


# Stroke templates for the synthetic digit stand-in, unit box, y down.
def _ellipse(cx, cy, rx, ry, n=14, start=0.0, stop=2 * math.pi):
    t = np.linspace(start, stop, n)
    return list(zip(cx + rx * np.cos(t), cy + ry * np.sin(t)))


_DIGIT_STROKES = {
    0: [_ellipse(0.5, 0.5, 0.26, 0.38)],
    1: [[(0.36, 0.25), (0.52, 0.1), (0.52, 0.9)]],
    2: [[(0.22, 0.3), (0.32, 0.13), (0.52, 0.08), (0.72, 0.14), (0.77, 0.32),
         (0.66, 0.5), (0.22, 0.9), (0.8, 0.9)]],
    3: [[(0.22, 0.14), (0.5, 0.08), (0.74, 0.18), (0.72, 0.36), (0.48, 0.48)],
        [(0.48, 0.48), (0.76, 0.6), (0.76, 0.8), (0.5, 0.92), (0.22, 0.84)]],
    4: [[(0.64, 0.9), (0.64, 0.1), (0.18, 0.64), (0.84, 0.64)]],
    5: [[(0.78, 0.1), (0.28, 0.1), (0.24, 0.46), (0.55, 0.4), (0.77, 0.56),
         (0.76, 0.8), (0.5, 0.92), (0.22, 0.84)]],
    6: [[(0.7, 0.1), (0.42, 0.28), (0.26, 0.58), (0.3, 0.84), (0.5, 0.92),
         (0.72, 0.8), (0.72, 0.6), (0.5, 0.5), (0.27, 0.62)]],
    7: [[(0.2, 0.1), (0.8, 0.1), (0.42, 0.9)], [(0.36, 0.5), (0.68, 0.5)]],
    8: [_ellipse(0.5, 0.29, 0.21, 0.19), _ellipse(0.5, 0.7, 0.25, 0.21)],
    9: [_ellipse(0.5, 0.32, 0.22, 0.21), [(0.72, 0.3), (0.68, 0.6), (0.56, 0.9)]],
}


def _render_strokes(segs: np.ndarray, width: float, size: int) -> np.ndarray:
    """Anti-aliased rendering of line segments ``(k, 4)`` in pixel units."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    p = np.stack([xx.ravel(), yy.ravel()], axis=1)[:, None, :]
    a, b = segs[None, :, :2], segs[None, :, 2:]
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=2) / np.maximum(np.sum(ab * ab, axis=2), 1e-12), 0, 1)
    d = np.linalg.norm(p - (a + t[..., None] * ab), axis=2).min(axis=1)
    return np.clip(width / 2 + 0.5 - d, 0.0, 1.0).reshape(size, size)


def gen_digit_images(n: int, seed=0, size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic handwritten-style digits as ``uint8`` images and labels."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, size, size), dtype=np.uint8)
    for i, label in enumerate(labels):
        angle = rng.normal(0, 0.18)
        scale = rng.uniform(0.75, 1.05, size=2)
        shear = rng.normal(0, 0.2)
        c, s = math.cos(angle), math.sin(angle)
        A = np.array([[c, -s], [s, c]]) @ np.array([[1, shear], [0, 1]]) @ np.diag(scale)
        shift = rng.normal(0, 1.5, size=2)
        segs = []
        for stroke in _DIGIT_STROKES[int(label)]:
            pts = np.asarray(stroke) + rng.normal(0, 0.045, size=(len(stroke), 2))
            pts = (pts - 0.5) @ A.T * (size * 0.72) + size / 2 + shift
            segs.append(np.hstack([pts[:-1], pts[1:]]))
        img = _render_strokes(np.vstack(segs), rng.uniform(1.6, 3.4), size)
        img = img * rng.uniform(0.7, 1.0) + rng.normal(0, 0.06, size=img.shape)
        # a few spurious blots
        for _ in range(rng.poisson(0.8)):
            cx, cy = rng.uniform(2, size - 2, size=2)
            yy, xx = np.mgrid[0:size, 0:size]
            img += 0.8 * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * rng.uniform(0.6, 1.8) ** 2))
        images[i] = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    return images, labels


def gen_mnist_synthetic(n_train: int = 4000, n_test: int = 1000, seed=0,
                        downsample_to: int = 10) -> tuple[Dataset, Dataset]:
    images, labels = gen_digit_images(n_train + n_test, seed)
    ds = _images_to_dataset(images, labels, downsample_to, "mnist", "synthetic")
    return train_test_split(ds, n_test=n_test, seed=seed)


def mnist(path=None, n_train: int = 4000, n_test: int = 1000, seed=0,
          fallback: bool = True) -> tuple[Dataset, Dataset]:
    """Real MNIST when ``path`` holds the IDX files, synthetic digits otherwise."""
    if path is not None:
        try:
            return load_mnist(path, n_train=n_train, n_test=n_test, seed=seed)
        except DataMissingError:
            if not fallback:
                raise
            log.warning("MNIST not found under %s; using synthetic digits", path)
    return gen_mnist_synthetic(n_train, n_test, seed)


# ---------------------------------------------------------------------------
# Face detection: CBCL PGM corpus or synthetic 20x20 patterns
# ---------------------------------------------------------------------------

def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM image."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode())
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos + 1)
    elif magic == "P2":
        data = np.array(raw[pos:].split()[: w * h], dtype=np.int64)
    else:
        raise ValueError(f"{path}: unsupported PGM magic {magic!r}")
    return data.reshape(h, w).astype(np.float64) / maxval


def write_pgm(path, image) -> None:
    img = np.asarray(np.round(np.clip(image, 0, 1) * 255), dtype=np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def _to_20x20(img: np.ndarray) -> np.ndarray:
    if img.shape == (20, 20):
        return img
    if img.shape == (19, 19):
        return np.pad(img, ((0, 1), (0, 1)), mode="edge")
    rows = _resample_matrix(img.shape[0], 20)
    cols = _resample_matrix(img.shape[1], 20)
    return rows @ img @ cols.T


def load_cbcl(path) -> Dataset:
    """Load ``face/`` and ``non-face/`` PGM folders under ``path``."""
    root = Path(path)
    feats, labels = [], []
    for label, sub in ((1, "face"), (0, "non-face")):
        files = sorted((root / sub).glob("*.pgm"))
        if not files:
            raise DataMissingError(f"no PGM files in {root / sub}")
        for f in files:
            feats.append(_to_20x20(read_pgm(f)).ravel())
            labels.append(label)
    labels = np.array(labels)
    return Dataset(np.array(feats), labels.astype(np.float64)[:, None], "facedet",
                   {"labels": labels, "kind": "classification", "source": "cbcl"})


def _face_image(rng, size=20) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cx, cy = size / 2 + rng.normal(0, 0.8, size=2)
    rx, ry = rng.uniform(6.0, 8.0), rng.uniform(7.5, 9.5)
    img = 0.25 + 0.5 * (((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 < 1)
    eye_dy = rng.uniform(2.0, 3.5)
    eye_dx = rng.uniform(2.3, 3.4)
    for sx in (-1, 1):
        ex, ey = cx + sx * eye_dx, cy - eye_dy
        img -= rng.uniform(0.35, 0.55) * np.exp(-((xx - ex) ** 2 + (yy - ey) ** 2) / 2.0)
    my = cy + rng.uniform(3.0, 4.5)
    img -= rng.uniform(0.25, 0.45) * np.exp(-((xx - cx) ** 2) / 8.0 - ((yy - my) ** 2) / 0.8)
    img += rng.uniform(-0.15, 0.15)
    return img


def _nonface_image(rng, size=20) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    img = np.full((size, size), rng.uniform(0.2, 0.7))
    gx, gy = rng.normal(0, 0.02, size=2)
    img += gx * (xx - size / 2) + gy * (yy - size / 2)
    for _ in range(rng.integers(1, 5)):
        bx, by = rng.uniform(0, size, size=2)
        sig = rng.uniform(1.0, 5.0)
        img += rng.uniform(-0.5, 0.5) * np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * sig ** 2))
    return img


def gen_facedet(n: int, seed=0) -> Dataset:
    """Synthetic face / non-face 20x20 patterns, half of each class."""
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int64)
    labels[: n // 2] = 1
    labels = rng.permutation(labels)
    feats = np.empty((n, 400))
    for i, lab in enumerate(labels):
        img = _face_image(rng) if lab else _nonface_image(rng)
        img = img + rng.normal(0, 0.08, size=img.shape)
        feats[i] = np.clip(img, 0, 1).ravel()
    return Dataset(feats, labels.astype(np.float64)[:, None], "facedet",
                   {"labels": labels, "kind": "classification", "source": "synthetic"})


def facedet(path=None, n: int = 2400, seed=0, fallback: bool = True) -> Dataset:
    if path is not None:
        try:
            return load_cbcl(path)
        except DataMissingError:
            if not fallback:
                raise
            log.warning("CBCL corpus not found under %s; using synthetic faces", path)
    return gen_facedet(n, seed)


# ---------------------------------------------------------------------------
# Text cache
# ---------------------------------------------------------------------------

def _jsonable(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def save_dataset(ds: Dataset, path) -> None:
    """CSV with a ``# meta=<json>`` first line, then ``x0..,y0..`` columns."""
    buf = io.StringIO()
    buf.write("# dataset " + json.dumps({"name": ds.name, "meta": _jsonable(ds.meta)}) + "\n")
    cols = [f"x{i}" for i in range(ds.X.shape[1])] + [f"y{i}" for i in range(ds.Y.shape[1])]
    buf.write(",".join(cols) + "\n")
    for x, y in zip(ds.X, ds.Y):
        buf.write(",".join(repr(float(v)) for v in np.concatenate([x, y])) + "\n")
    Path(path).write_text(buf.getvalue(), newline="\n")


def load_dataset(path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# dataset "):
        raise ValueError(f"{path}: not a dataset cache file")
    head = json.loads(lines[0][len("# dataset "):])
    cols = lines[1].split(",")
    n_x = sum(c.startswith("x") for c in cols)
    data = np.array([[float(v) for v in line.split(",")] for line in lines[2:] if line],
                    dtype=np.float64).reshape(-1, len(cols))
    meta = head["meta"]
    if "labels" in meta:
        meta["labels"] = np.asarray(meta["labels"], dtype=np.int64)
    return Dataset(data[:, :n_x], data[:, n_x:], head["name"], meta)
