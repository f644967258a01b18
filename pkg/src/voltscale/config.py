"""Experiment configuration: one flat namespace of dotted keys.

A config file is JSON, either flat (``{"train.alpha": 0.2}``) or nested
(``{"train": {"alpha": 0.2}}``). Unknown keys are errors. ``None`` for a
training hyperparameter means "use the benchmark's default".
"""
from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import BenchmarkSpec, get_spec
from .canary import TempSchedule
from .energy import Constraints, EnergyTable, default_table
from .qformat import QFormat
from .sram import SplitNormalVmin, SramGeometry, VminDistribution, reference_calibration


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULTS = {
    "benchmark": "mnist",
    "seed": 1,
    "out": "out",
    "jobs": 1,
    "voltage_grid": [0.46, 0.48, 0.50, 0.53],
    "temperature": 25.0,
    "nominal_voltage": 0.9,
    "data.path": None,
    "data.fallback": True,
    "data.n_samples": None,
    "qformat.word_bits": 16,
    "qformat.frac_bits": 14,
    "sram.n_banks": 8,
    "sram.n_words": 576,
    "sram.dist": "calibrated",       # or "normal"
    "sram.mu": 0.45,
    "sram.sigma": 0.025,
    "sram.temp_coeff": 3e-4,
    "train.mode": "finetune",        # or "from_scratch"
    "train.residual": "deployment",  # or "quantization"
    "train.bias_masking": False,
    "train.alpha": None,
    "train.epochs": None,
    "train.batch_size": None,
    "train.mat_alpha": None,
    "train.mat_epochs": None,
    "train.mat_batch_size": None,
    "canary.k_per_bank": 8,
    "canary.v0": 0.6,
    "canary.dv": 0.01,
    "canary.target_voltage": 0.5,
    "canary.restart": "climb",       # or "v0"
    "canary.schedule": [25.0, -15.0, 0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
    "energy.table": None,
    "energy.sram_vmin": 0.44,
    "energy.periphery_floor": 0.65,
    "energy.f_target_mhz": 250.0,
    "energy.ops_per_cycle": 8,
    "topo.candidates": None,
}

# keys that change where or how fast results appear, not what they are
_NOT_HASHED = {"out", "jobs"}
_CHOICES = {
    "sram.dist": ("calibrated", "normal"),
    "train.mode": ("finetune", "from_scratch"),
    "train.residual": ("deployment", "quantization"),
    "canary.restart": ("climb", "v0"),
}


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


# types of keys whose default is None
_TYPES = {
    "data.path": str, "data.n_samples": int, "energy.table": str, "topo.candidates": list,
    "train.alpha": float, "train.epochs": int, "train.batch_size": int,
    "train.mat_alpha": float, "train.mat_epochs": int, "train.mat_batch_size": int,
}


def _parse_bool(value):
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(value)
    return bool(value)


def _parse_list(value):
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("["):
            return json.loads(text)
        return [float(v) for v in text.split(",") if v.strip()]
    return list(value)


def _coerce(key, value):
    if value is None or (isinstance(value, str) and value.strip().lower() in ("none", "null")):
        return None
    default = DEFAULTS[key]
    kind = _TYPES.get(key, type(default))
    parse = {bool: _parse_bool, list: _parse_list}.get(kind, kind)
    try:
        return parse(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r}") from None


class ExperimentConfig:
    """Resolved settings plus helpers that build the objects they describe."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in flatten(values or {}).items():
            self.set(k, v)
        self.validate()

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value)

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "ExperimentConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except OSError as e:
                raise ConfigError(f"cannot read config {path}: {e}") from None
            except json.JSONDecodeError as e:
                raise ConfigError(f"config {path} is not valid JSON: {e}") from None
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
        data = flatten(data)
        data.update(overrides or {})
        return cls(data)

    def validate(self) -> None:
        v = self.values
        for key, allowed in _CHOICES.items():
            if v[key] not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {v[key]!r}")
        try:
            self.spec
            self.fmt
            self.geometry
            self.schedule
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if v["jobs"] < 1:
            raise ConfigError("jobs must be >= 1")
        grid = v["voltage_grid"]
        if not grid:
            raise ConfigError("voltage_grid is empty")
        if any(not 0 < g <= v["nominal_voltage"] for g in grid):
            raise ConfigError("voltage_grid values must lie in (0, nominal_voltage]")
        lo, hi = self.energy_table.span("sram_pj")
        if any(g < lo - 1e-12 or g > hi + 1e-12 for g in grid):
            raise ConfigError(f"voltage_grid must lie within the energy table span [{lo}, {hi}]")
        if not v["canary.dv"] > 0 or not v["canary.v0"] > 0:
            raise ConfigError("canary.v0 and canary.dv must be positive")

    # -- derived objects ----------------------------------------------------

    @property
    def spec(self) -> BenchmarkSpec:
        s = get_spec(self.values["benchmark"])
        over = {k.split(".", 1)[1]: self.values[k] for k in
                ("train.alpha", "train.epochs", "train.batch_size", "train.mat_alpha",
                 "train.mat_epochs", "train.mat_batch_size") if self.values[k] is not None}
        if self.values["data.n_samples"] is not None:
            over["n_samples"] = self.values["data.n_samples"]
        if over:
            s = replace(s, **over)
        return s

    @property
    def fmt(self) -> QFormat:
        return QFormat(self.values["qformat.word_bits"], self.values["qformat.frac_bits"])

    @property
    def geometry(self) -> SramGeometry:
        return SramGeometry(self.values["sram.n_banks"], self.values["sram.n_words"],
                            self.values["qformat.word_bits"])

    @property
    def distribution(self) -> VminDistribution | SplitNormalVmin:
        if self.values["sram.dist"] == "calibrated":
            return reference_calibration()
        return VminDistribution(self.values["sram.mu"], self.values["sram.sigma"])

    @property
    def schedule(self) -> TempSchedule:
        return TempSchedule(tuple((1.0, float(t)) for t in self.values["canary.schedule"]))

    @property
    def energy_table(self) -> EnergyTable:
        path = self.values["energy.table"]
        if path is None:
            return default_table()
        try:
            return EnergyTable.load(path)
        except OSError as e:
            raise ConfigError(f"cannot read energy table {path}: {e}") from None

    @property
    def constraints(self) -> Constraints:
        v = self.values
        return Constraints(sram_vmin=v["energy.sram_vmin"], periphery_floor=v["energy.periphery_floor"],
                           f_target_mhz=v["energy.f_target_mhz"], nominal=v["nominal_voltage"])

    def seed_for(self, stream: str) -> int:
        return substream(self.values["seed"], stream)

    def to_json(self) -> str:
        return json.dumps(self.values, sort_keys=True, indent=1)

    def hash(self) -> str:
        data = {k: v for k, v in self.values.items() if k not in _NOT_HASHED}
        canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def csv_comment(self) -> str:
        return f"config_hash={self.hash()} seed={self.values['seed']}"


def substream(seed: int, name: str) -> int:
    """A stable 63-bit seed for the named stream under a master seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
