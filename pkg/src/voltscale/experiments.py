"""End-to-end runs: profile, train naive and adaptive, evaluate, sweep.

Randomness comes from one master seed split into named streams
(``population``, ``init``, ``shuffle``, ``datasets``) so that any stage
can be rerun on its own.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bench, canary, energy, mat, nn, sram
from .config import ExperimentConfig

log = logging.getLogger(__name__)

NOMINAL = "nominal"


@dataclass
class Prepared:
    """Everything a voltage point needs that does not depend on voltage."""

    spec: bench.BenchmarkSpec
    train: object
    test: object
    banks: list
    pretrained: nn.Mlp
    pretrain_history: mat.History
    mapping: mat.WeightMapping
    nominal_error: float


def float_config(spec: bench.BenchmarkSpec, fmt, seed: int) -> mat.TrainConfig:
    """Plain float SGD, weights kept inside the word's range."""
    return mat.TrainConfig(alpha=spec.alpha, epochs=spec.epochs, loss=spec.loss, fmt=None,
                           seed=seed, batch_size=spec.batch_size,
                           weight_limit=None if fmt is None else fmt.max_value)


def mat_config(cfg: ExperimentConfig, spec: bench.BenchmarkSpec, seed: int) -> mat.TrainConfig:
    fmt = cfg.fmt
    if cfg["train.mode"] == "from_scratch":
        alpha, epochs, bs = spec.mat_alpha, spec.epochs + spec.mat_epochs, spec.mat_batch_size
    else:
        alpha, epochs, bs = spec.mat_alpha, spec.mat_epochs, spec.mat_batch_size
    return mat.TrainConfig(alpha=alpha, epochs=epochs, loss=spec.loss, fmt=fmt, seed=seed,
                           batch_size=bs, bias_masking=cfg["train.bias_masking"],
                           weight_limit=fmt.max_value, residual=cfg["train.residual"])


def population(cfg: ExperimentConfig) -> list:
    return sram.sample_population(cfg.geometry, cfg.distribution, cfg["sram.temp_coeff"],
                                  seed=cfg.seed_for("population"))


def prepare(cfg: ExperimentConfig, reserved=()) -> Prepared:
    spec = cfg.spec
    train, test = bench.load_benchmark(spec, seed=cfg.seed_for("datasets"),
                                       data_path=cfg["data.path"],
                                       fallback=cfg["data.fallback"])
    net0 = nn.init_mlp(list(spec.topology), spec.hidden, spec.output,
                       seed=cfg.seed_for("init"))
    net, hist = mat.train(net0, train, float_config(spec, cfg.fmt, cfg.seed_for("shuffle")),
                          test=test, metric=spec.metric)
    mapping = mat.build_mapping(net, cfg.geometry, reserved=reserved,
                                include_biases=cfg["train.bias_masking"])
    nominal = mat.evaluate_deployed(net, mapping, None, test, spec.metric, cfg.fmt,
                                    cfg["train.bias_masking"])
    return Prepared(spec, train, test, population(cfg), net, hist, mapping, nominal)


@dataclass
class PointResult:
    benchmark: str
    voltage: float
    fault_rate: float
    naive_error: float
    adaptive_error: float
    energy_pj: float
    history: mat.History | None = field(default=None, repr=False)
    adaptive: nn.Mlp | None = field(default=None, repr=False)


def run_point(cfg: ExperimentConfig, prep: Prepared, voltage: float,
              keep_model: bool = False) -> PointResult:
    spec, fmt = prep.spec, cfg.fmt
    temp = cfg["temperature"]
    fmap = sram.profile(prep.banks, voltage, temp, seed=cfg.seed_for("population"))
    bias = cfg["train.bias_masking"]
    naive = mat.evaluate_deployed(prep.pretrained, prep.mapping, fmap, prep.test, spec.metric,
                                  fmt, bias)
    if cfg["train.mode"] == "from_scratch":
        start = nn.init_mlp(list(spec.topology), spec.hidden, spec.output,
                            seed=cfg.seed_for("init"))
    else:
        start = prep.pretrained
    net, hist = mat.train(start, prep.train, mat_config(cfg, spec, cfg.seed_for("shuffle")),
                          prep.mapping, fmap, test=prep.test, metric=spec.metric)
    adaptive = mat.evaluate_deployed(net, prep.mapping, fmap, prep.test, spec.metric, fmt, bias)
    e = energy.energy_at(cfg.energy_table, "sram", voltage)
    return PointResult(spec.name, float(voltage), fmap.rate, naive, adaptive, e,
                       hist, net if keep_model else None)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ("benchmark", "seed", "voltage", "fault_rate", "naive_error",
                 "adaptive_error", "energy_pJ_per_cycle")
SUMMARY_COLUMNS = ("benchmark", "seed", "nominal_error", "naive_aei", "adaptive_aei",
                   "aei_reduction", "aei_definition")


@dataclass
class BenchmarkSweep:
    benchmark: str
    seed: int
    nominal_error: float
    metric: str
    points: list

    def errors(self, arm: str) -> dict:
        return {p.voltage: getattr(p, f"{arm}_error") for p in self.points}

    @property
    def naive_aei(self) -> float:
        return bench.aei(self.errors("naive"), self.nominal_error, self.metric)

    @property
    def adaptive_aei(self) -> float:
        return bench.aei(self.errors("adaptive"), self.nominal_error, self.metric)

    @property
    def aei_reduction(self) -> float:
        return bench.aei_reduction(self.naive_aei, self.adaptive_aei)


@dataclass
class SweepResult:
    sweeps: list

    def rows(self):
        out = []
        for s in sorted(self.sweeps, key=lambda s: (s.benchmark, s.seed)):
            for p in sorted(s.points, key=lambda p: p.voltage):
                out.append((s.benchmark, s.seed, p.voltage, p.fault_rate, p.naive_error,
                            p.adaptive_error, p.energy_pj))
        return out

    @property
    def mean_aei_reduction(self) -> float:
        return float(np.mean([s.aei_reduction for s in self.sweeps]))

    def to_csv(self, comment: str | None = None) -> str:
        return _csv(SWEEP_COLUMNS, self.rows(), comment)

    def summary_csv(self, comment: str | None = None) -> str:
        rows = [(s.benchmark, s.seed, s.nominal_error, s.naive_aei, s.adaptive_aei,
                 s.aei_reduction, bench.AEI_DEFINITION)
                for s in sorted(self.sweeps, key=lambda s: (s.benchmark, s.seed))]
        rows.append(("mean", "", "", "", "", self.mean_aei_reduction, bench.AEI_DEFINITION))
        return _csv(SUMMARY_COLUMNS, rows, comment)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _csv(columns, rows, comment):
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def sweep_benchmark(cfg: ExperimentConfig, voltages=None) -> BenchmarkSweep:
    prep = prepare(cfg)
    points = [run_point(cfg, prep, v) for v in (voltages or cfg["voltage_grid"])]
    return BenchmarkSweep(prep.spec.name, cfg["seed"], prep.nominal_error, prep.spec.metric,
                          points)


def _sweep_job(args):
    values, voltages = args
    return sweep_benchmark(ExperimentConfig(values), voltages)


def sweep(cfg: ExperimentConfig, benchmarks=None, seeds=None, jobs: int | None = None
          ) -> SweepResult:
    """Every (benchmark, seed) pair over the voltage grid, optionally in parallel.

    Results are sorted before output, so the worker count never changes them.
    """
    benchmarks = benchmarks or [cfg["benchmark"]]
    seeds = seeds or [cfg["seed"]]
    jobs = jobs or cfg["jobs"]
    tasks = []
    for b in benchmarks:
        for s in seeds:
            values = dict(cfg.values, benchmark=b, seed=s)
            tasks.append((values, list(cfg["voltage_grid"])))
    if jobs == 1 or len(tasks) == 1:
        results = [_sweep_job(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, tasks))
    return SweepResult(results)


# ---------------------------------------------------------------------------
# Canary run on a trained network
# ---------------------------------------------------------------------------

def canary_run(cfg: ExperimentConfig):
    """Profile at the target, reserve canary words, train for the target
    pattern, then drive the controller through the temperature schedule."""
    vt = cfg["canary.target_voltage"]
    banks = population(cfg)
    target = sram.profile(banks, vt, sram.T_REF, seed=cfg.seed_for("population"))
    ccfg = canary.select_canaries(banks, target, cfg["canary.k_per_bank"],
                                  cfg["canary.v0"], cfg["canary.dv"])
    prep = prepare(cfg, reserved=ccfg.words)
    spec = prep.spec
    net, _ = mat.train(prep.pretrained, prep.train, mat_config(cfg, spec, cfg.seed_for("shuffle")),
                       prep.mapping, target, test=prep.test, metric=spec.metric)
    trace = canary.run_simulation(banks, ccfg, cfg.schedule, target, net, prep.mapping,
                                  prep.test, cfg.fmt, spec.metric, restart=cfg["canary.restart"])
    return trace, ccfg, target


# ---------------------------------------------------------------------------
# Topology selection
# ---------------------------------------------------------------------------

DEFAULT_CANDIDATES = {
    "mnist": [(100, h, 10) for h in (4, 8, 16, 32, 64)],
    "facedet": [(400, h, 1) for h in (1, 2, 4, 8, 16)],
    "inversek2j": [(2, h, 2) for h in (2, 4, 8, 16, 32)],
    "bscholes": [(6, h, 1) for h in (2, 4, 8, 16, 32)],
}


def topo_run(cfg: ExperimentConfig) -> bench.TopologySweep:
    spec = cfg.spec
    cands = cfg["topo.candidates"] or DEFAULT_CANDIDATES[spec.name]
    train, test = bench.load_benchmark(spec, seed=cfg.seed_for("datasets"),
                                       data_path=cfg["data.path"], fallback=cfg["data.fallback"])
    return bench.topology_sweep(spec, [tuple(int(x) for x in c) for c in cands], train, test,
                                seed=cfg.seed_for("init"))
