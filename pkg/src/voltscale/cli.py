"""Command-line entry point: ``voltscale <command> [options]``.

Commands: profile, train, sweep, canary, energy, topo. Every CSV written
starts with a ``# config_hash=... seed=...`` line, then a header row.

Exit status: 0 success, 2 configuration error, 3 missing data,
4 training divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import energy, experiments, mat, nn, sram
from .config import ConfigError, ExperimentConfig
from .datasets import DataMissingError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

log = logging.getLogger("voltscale")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flat dotted keys or nested)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes for sweeps")
    common.add_argument("--voltage-grid", help="comma-separated SRAM voltages")
    common.add_argument("--benchmark", help="mnist, facedet, inversek2j or bscholes "
                                            "(comma-separated for sweep)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set train.alpha=0.2")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="voltscale", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("profile", parents=[common], help="write one fault map per grid voltage")
    t = sub.add_parser("train", parents=[common], help="train a network, naive or adaptive")
    t.add_argument("--mode", choices=("naive", "adaptive"), default="adaptive")
    t.add_argument("--fault-map", help="fault map file (adaptive); default: profile at "
                                       "the first grid voltage")
    s = sub.add_parser("sweep", parents=[common], help="naive vs adaptive error over voltage")
    s.add_argument("--seeds", help="comma-separated master seeds (default: --seed)")
    sub.add_parser("canary", parents=[common], help="closed-loop voltage control trace")
    sub.add_parser("energy", parents=[common], help="energy scenarios and efficiency")
    sub.add_parser("topo", parents=[common], help="topology sweep and knee pick")
    return p


def _overrides(args) -> dict:
    over = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        over[key.strip()] = value
    for flag, key in (("seed", "seed"), ("out", "out"), ("jobs", "jobs"),
                      ("voltage_grid", "voltage_grid")):
        if getattr(args, flag) is not None:
            over[key] = getattr(args, flag)
    if args.benchmark is not None and "," not in args.benchmark:
        over["benchmark"] = args.benchmark
    return over


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out}: {e}") from None
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    print(path)


def cmd_profile(cfg: ExperimentConfig) -> int:
    out = _out(cfg)
    banks = experiments.population(cfg)
    for v in cfg["voltage_grid"]:
        fmap = sram.profile(banks, v, cfg["temperature"], seed=cfg.seed_for("population"))
        _write(out / f"faultmap_{v:.3f}V_{cfg['temperature']:g}C.csv",
               f"# {cfg.csv_comment()}\n" + fmap.dumps())
        log.info("%.3f V: %d faulty cells (%.4f%%)", v, len(fmap), 100 * fmap.rate)
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, mode: str, fault_map=None) -> int:
    out = _out(cfg)
    prep = experiments.prepare(cfg)
    name = prep.spec.name
    if mode == "naive":
        net, hist = prep.pretrained, prep.pretrain_history
    else:
        if fault_map is not None:
            try:
                fmap = sram.FaultMap.load(fault_map)
            except OSError as e:
                raise DataMissingError(f"cannot read fault map {fault_map}: {e}") from None
        else:
            v = cfg["voltage_grid"][0]
            fmap = sram.profile(prep.banks, v, cfg["temperature"],
                                seed=cfg.seed_for("population"))
        spec = prep.spec
        net, hist = mat.train(prep.pretrained, prep.train,
                              experiments.mat_config(cfg, spec, cfg.seed_for("shuffle")),
                              prep.mapping, fmap, test=prep.test, metric=spec.metric)
    nn.save_checkpoint(net, out / f"{name}_{mode}.json")
    print(out / f"{name}_{mode}.json")
    _write(out / f"{name}_{mode}_history.csv", hist.to_csv(cfg.csv_comment()))
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, benchmarks, seeds) -> int:
    out = _out(cfg)
    result = experiments.sweep(cfg, benchmarks, seeds)
    _write(out / "sweep.csv", result.to_csv(cfg.csv_comment()))
    _write(out / "sweep_summary.csv", result.summary_csv(cfg.csv_comment()))
    return EXIT_OK


def cmd_canary(cfg: ExperimentConfig) -> int:
    out = _out(cfg)
    trace, ccfg, _ = experiments.canary_run(cfg)
    _write(out / "canary_trace.csv", trace.to_csv(cfg.csv_comment()))
    if not trace.safe:
        log.warning("non-canary cells outside the target pattern failed at some settled point")
    return EXIT_OK


def cmd_energy(cfg: ExperimentConfig) -> int:
    out = _out(cfg)
    results = energy.all_scenarios(cfg.energy_table, cfg.constraints)
    _write(out / "energy.csv", energy.results_csv(results, cfg.csv_comment()))
    ops = cfg["energy.ops_per_cycle"]
    rows = []
    for r in results:
        rows.append((r.scenario, energy.efficiency_gops_per_watt(r.optimized, ops),
                     energy.efficiency_gops_per_watt(r.baseline, ops)))
    text = experiments._csv(("scenario", "gops_per_watt", "baseline_gops_per_watt"), rows,
                            cfg.csv_comment())
    _write(out / "efficiency.csv", text)
    return EXIT_OK


def cmd_topo(cfg: ExperimentConfig) -> int:
    out = _out(cfg)
    sweep = experiments.topo_run(cfg)
    rows = [("-".join(map(str, p.topology)), p.n_params, p.error, int(i == sweep.knee))
            for i, p in enumerate(sweep.points)]
    _write(out / f"topo_{cfg['benchmark']}.csv",
           experiments._csv(("topology", "n_params", "error", "knee"), rows, cfg.csv_comment()))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = ExperimentConfig.load(args.config, _overrides(args))
        if args.command == "profile":
            code = cmd_profile(cfg)
        elif args.command == "train":
            code = cmd_train(cfg, args.mode, args.fault_map)
        elif args.command == "sweep":
            benches = args.benchmark.split(",") if args.benchmark else None
            for b in benches or ():
                ExperimentConfig(dict(cfg.values, benchmark=b))
            seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
            code = cmd_sweep(cfg, benches, seeds)
        elif args.command == "canary":
            code = cmd_canary(cfg)
        elif args.command == "energy":
            code = cmd_energy(cfg)
        else:
            code = cmd_topo(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataMissingError as e:
        print(f"data missing: {e}", file=sys.stderr)
        return EXIT_DATA
    except mat.DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
