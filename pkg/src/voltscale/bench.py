"""Benchmark definitions, error metrics, AEI and topology-knee selection."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import datasets
from .datasets import Dataset

CLASSIFICATION = "classification"
MSE_METRIC = "mse"


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    topology: tuple
    metric: str
    split_ratio: int = 7          # train:test
    hidden: str = "sigmoid"
    output: str = "sigmoid"
    loss: str = "mse"
    n_samples: int = 2000
    # training defaults (float pretraining, then fault-aware fine-tuning)
    alpha: float = 0.1
    epochs: int = 30
    batch_size: int = 1
    mat_alpha: float = 0.1
    mat_epochs: int = 15
    mat_batch_size: int = 1

    def __post_init__(self):
        if self.metric not in (CLASSIFICATION, MSE_METRIC):
            raise ValueError(f"unknown metric {self.metric!r}")
        if len(self.topology) < 2:
            raise ValueError("topology needs at least two layers")

    @property
    def n_params(self) -> int:
        t = self.topology
        return sum(a * b + b for a, b in zip(t[:-1], t[1:]))

    def with_topology(self, topology) -> "BenchmarkSpec":
        return replace(self, topology=tuple(topology))


BENCHMARKS = {
    "mnist": BenchmarkSpec("mnist", (100, 32, 10), CLASSIFICATION, split_ratio=4,
                           output="softmax", loss="cross_entropy", n_samples=5000,
                           alpha=0.1, epochs=25, mat_alpha=0.2, mat_epochs=40,
                           mat_batch_size=10),
    "facedet": BenchmarkSpec("facedet", (400, 8, 1), CLASSIFICATION, split_ratio=7,
                             n_samples=2400, alpha=0.1, epochs=20, mat_alpha=0.1,
                             mat_epochs=20, mat_batch_size=10),
    "inversek2j": BenchmarkSpec("inversek2j", (2, 16, 2), MSE_METRIC, split_ratio=10,
                                n_samples=2200, alpha=0.3, epochs=60, mat_alpha=0.3,
                                mat_epochs=30),
    "bscholes": BenchmarkSpec("bscholes", (6, 16, 1), MSE_METRIC, split_ratio=10,
                              n_samples=2200, alpha=0.3, epochs=60, mat_alpha=0.3,
                              mat_epochs=30),
}


def get_spec(name: str) -> BenchmarkSpec:
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None


def load_benchmark(spec: BenchmarkSpec | str, seed=0, data_path=None,
                   n_samples: int | None = None,
                   fallback: bool = True) -> tuple[Dataset, Dataset]:
    """Return ``(train, test)`` for a benchmark, generated or loaded."""
    if isinstance(spec, str):
        spec = get_spec(spec)
    n = n_samples or spec.n_samples
    if spec.name == "mnist":
        n_test = n // (spec.split_ratio + 1)
        train, test = datasets.mnist(data_path, n_train=n - n_test, n_test=n_test, seed=seed,
                                     fallback=fallback)
    elif spec.name == "facedet":
        ds = datasets.facedet(data_path, n=n, seed=seed, fallback=fallback)
        train, test = datasets.train_test_split(ds, ratio=spec.split_ratio, seed=seed)
    elif spec.name == "inversek2j":
        ds = datasets.gen_inversek2j(n, seed)
        train, test = datasets.train_test_split(ds, ratio=spec.split_ratio, seed=seed)
    elif spec.name == "bscholes":
        ds = datasets.gen_bscholes(n, seed)
        train, test = datasets.train_test_split(ds, ratio=spec.split_ratio, seed=seed)
    else:
        raise ValueError(f"no loader for benchmark {spec.name!r}")
    if train.X.shape[1] != spec.topology[0]:
        raise ValueError(f"{spec.name}: feature width {train.X.shape[1]} != "
                         f"topology input {spec.topology[0]}")
    return train, test


def metric(outputs, targets, kind: str) -> float:
    """Classification error (1 - accuracy) or mean squared error."""
    y = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if y.shape != t.shape:
        raise ValueError(f"output shape {y.shape} != target shape {t.shape}")
    if kind == MSE_METRIC:
        return float(np.mean((y - t) ** 2))
    if kind != CLASSIFICATION:
        raise ValueError(f"unknown metric {kind!r}")
    if y.shape[1] == 1:
        correct = (y[:, 0] >= 0.5) == (t[:, 0] >= 0.5)
    else:
        correct = np.argmax(y, axis=1) == np.argmax(t, axis=1)
    return float(1.0 - correct.mean())


def aei(errors_by_voltage, nominal_error: float, kind: str = CLASSIFICATION) -> float:
    """Average error increase over a voltage grid.

    Increases are clipped at zero, then averaged. Classification errors
    are reported in percentage points; MSE increases as a percentage of
    the nominal MSE.
    """
    errs = np.asarray(list(errors_by_voltage.values()) if isinstance(errors_by_voltage, dict)
                      else errors_by_voltage, dtype=np.float64)
    if errs.size == 0:
        raise ValueError("AEI needs at least one voltage point")
    inc = np.maximum(errs - nominal_error, 0.0)
    if kind == MSE_METRIC:
        if nominal_error <= 0:
            raise ValueError("MSE AEI is normalized by a positive nominal error")
        return float(100.0 * inc.mean() / nominal_error)
    return float(100.0 * inc.mean())


AEI_DEFINITION = ("AEI = mean_V max(err(V) - err_nominal, 0); classification in "
                  "percentage points, MSE as percent of err_nominal")


def aei_reduction(naive_aei: float, adaptive_aei: float) -> float:
    if adaptive_aei <= 0:
        return float("inf") if naive_aei > 0 else 1.0
    return naive_aei / adaptive_aei


def knee_point(params, errors) -> int:
    """Index of the point farthest from the chord joining the curve's ends.

    Points are ordered by parameter count; ties resolve to the smaller model.
    """
    p = np.asarray(params, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    if p.size < 3:
        raise ValueError("knee selection needs at least three candidates")
    order = np.argsort(p, kind="stable")
    x, y = p[order], e[order]
    # normalize both axes so the chord distance is scale-free
    xs = (x - x[0]) / (x[-1] - x[0]) if x[-1] != x[0] else np.zeros_like(x)
    span = y.max() - y.min()
    ys = (y - y.min()) / span if span > 0 else np.zeros_like(y)
    dx, dy = xs[-1] - xs[0], ys[-1] - ys[0]
    norm = np.hypot(dx, dy)
    if norm == 0:
        return int(order[0])
    dist = np.abs(dy * (xs - xs[0]) - dx * (ys - ys[0])) / norm
    best = np.flatnonzero(dist >= dist.max() - 1e-12)[0]
    return int(order[best])


@dataclass
class TopologyPoint:
    topology: tuple
    n_params: int
    error: float


@dataclass
class TopologySweep:
    points: list = field(default_factory=list)
    knee: int = 0

    @property
    def chosen(self) -> TopologyPoint:
        return self.points[self.knee]


def topology_sweep(spec: BenchmarkSpec, candidates, train: Dataset, test: Dataset,
                   seed=0, epochs: int | None = None) -> TopologySweep:
    """Float-train each candidate topology and pick the knee of error vs size."""
    from .mat import TrainConfig, train as run_train
    from .nn import init_mlp, predict

    if len(candidates) < 3:
        raise ValueError("topology sweep needs at least three candidates")
    sweep = TopologySweep()
    for k, topo in enumerate(candidates):
        s = spec.with_topology(topo)
        net = init_mlp(list(topo), s.hidden, s.output, seed=np.random.default_rng([seed, k]))
        cfg = TrainConfig(alpha=s.alpha, epochs=epochs or s.epochs, loss=s.loss, fmt=None,
                          seed=seed, batch_size=s.batch_size)
        net, _ = run_train(net, train, cfg)
        err = metric(predict(net, test.X), test.Y, s.metric)
        sweep.points.append(TopologyPoint(tuple(topo), s.n_params, err))
    sweep.knee = knee_point([p.n_params for p in sweep.points],
                            [p.error for p in sweep.points])
    return sweep
