"""In-situ canary bits and the closed-loop SRAM voltage controller.

The most marginal surviving bit-cells at the target voltage serve as
canaries: they are written with the value their cell cannot hold at low
voltage, so they are the first to flip as the supply drops. Between
inferences the controller steps the voltage down until a canary flips,
then backs off one step and rewrites the canaries.

Cells share one temperature slope, so the vmin ordering is the same at
every temperature. A voltage where no canary fails is therefore a
voltage where no other surviving cell fails, which keeps the fault
pattern the network was trained for.
"""
from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .bench import metric as error_metric
from .qformat import QFormat, bits_to_codes, codes_to_bits, dequantize_array, quantize_array
from .sram import T_REF, FaultMap, SramBank

DEFAULT_V0 = 0.6
DEFAULT_DV = 0.01
DEFAULT_K = 8
T_LIMITS = (-40.0, 125.0)


class CanaryError(RuntimeError):
    """A canary cannot be restored at the voltage the controller chose."""


@dataclass(frozen=True)
class Canary:
    bank: int
    word: int
    bit: int
    golden: int


@dataclass(frozen=True)
class CanaryConfig:
    canaries: tuple
    v0: float = DEFAULT_V0
    dv: float = DEFAULT_DV
    k_per_bank: int = DEFAULT_K
    target_voltage: float | None = None

    def __post_init__(self):
        if not self.dv > 0:
            raise ValueError("voltage step must be positive")
        if not self.v0 > 0:
            raise ValueError("initial voltage must be positive")
        counts = {}
        for c in self.canaries:
            counts[c.bank] = counts.get(c.bank, 0) + 1
        if any(n != self.k_per_bank for n in counts.values()):
            raise ValueError(f"every bank needs exactly {self.k_per_bank} canaries")
        if len({(c.bank, c.word, c.bit) for c in self.canaries}) != len(self.canaries):
            raise ValueError("duplicate canary cell")

    @property
    def words(self) -> set:
        """``(bank, word)`` pairs hosting a canary."""
        return {(c.bank, c.word) for c in self.canaries}

    @property
    def cells(self) -> set:
        return {(c.bank, c.word, c.bit) for c in self.canaries}

    def voltage(self, n_steps: int) -> float:
        return round(self.v0 - n_steps * self.dv, 12)


def select_canaries(banks, target: FaultMap, k_per_bank: int = DEFAULT_K,
                    v0: float = DEFAULT_V0, dv: float = DEFAULT_DV) -> CanaryConfig:
    """Per bank, the ``k`` surviving cells closest to failing at the target.

    Survivors are cells with vmin strictly below the target voltage at the
    profiling temperature; ties in vmin go to the lower (word, bit).
    """
    vt, temp = target.voltage, target.temperature
    chosen = []
    for bank in banks:
        vmin = bank.vmin_at(temp)
        words, bits = np.nonzero(vmin < vt)
        if words.size < k_per_bank:
            raise ValueError(f"bank {bank.bank_id} has only {words.size} surviving cells "
                             f"at {vt} V; {k_per_bank} canaries needed")
        v = vmin[words, bits]
        order = np.lexsort((bits, words, -v))[:k_per_bank]
        if v[order[0]] > v0:
            raise ValueError(f"v0={v0} V is below a canary's vmin ({v[order[0]]:.4f} V)")
        for i in order:
            w, b = int(words[i]), int(bits[i])
            chosen.append(Canary(bank.bank_id, w, b, 1 - int(bank.preferred[w, b])))
    return CanaryConfig(tuple(chosen), v0, dv, k_per_bank, vt)


def init_canaries(cfg: CanaryConfig, banks) -> None:
    for c in cfg.canaries:
        banks[c.bank].write_bit(c.word, c.bit, c.golden)


def check_states(cfg: CanaryConfig, banks, voltage: float,
                 temperature: float = T_REF) -> bool:
    """Read every canary; True if any no longer holds its golden value."""
    failed = False
    for c in cfg.canaries:
        if banks[c.bank].read_bit(c.word, c.bit, voltage, temperature) != c.golden:
            failed = True
    return failed


def restore_states(cfg: CanaryConfig, banks, voltage: float,
                   temperature: float = T_REF) -> None:
    for c in cfg.canaries:
        if banks[c.bank].failing(voltage, temperature)[c.word, c.bit]:
            raise CanaryError(f"canary {c} would flip again at {voltage} V; "
                              "the voltage step is too coarse")
    init_canaries(cfg, banks)


# ---------------------------------------------------------------------------
# Controller
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControllerState:
    """Committed voltage as a whole number of steps below ``v0``."""

    n: int = 0
    settled: bool = False
    any_failed: bool = False
    restored: bool = False
    steps: int = 0


def control_step(state: ControllerState, cfg: CanaryConfig, banks,
                 temperature: float) -> ControllerState:
    """One pass of the descent loop: try a step down, keep it or back off."""
    trial = cfg.voltage(state.n + 1)
    if trial < 0:
        return replace(state, settled=True)
    if check_states(cfg, banks, trial, temperature):
        v = cfg.voltage(state.n)
        restore_states(cfg, banks, v, temperature)
        return replace(state, settled=True, any_failed=True, restored=True,
                       steps=state.steps + 1)
    return replace(state, n=state.n + 1, steps=state.steps + 1)


def settle(state: ControllerState, cfg: CanaryConfig, banks,
           temperature: float) -> ControllerState:
    """Run the descent until a canary fails or the voltage would go negative."""
    state = replace(state, settled=False, any_failed=False, restored=False, steps=0)
    limit = math.ceil(cfg.v0 / cfg.dv) + 1
    while not state.settled:
        state = control_step(state, cfg, banks, temperature)
        if state.steps > limit:
            raise RuntimeError("descent did not terminate")
    return state


def reascent_steps(cfg: CanaryConfig, max_swing: float, temp_coeff: float) -> int:
    """Steps to climb before descending so a cooler chip starts safe."""
    return math.ceil(abs(temp_coeff) * max_swing / cfg.dv) + 1


def wake(state: ControllerState, cfg: CanaryConfig, banks, temperature: float,
         climb: int | None = None) -> ControllerState:
    """Controller wake-up: climb (or return to ``v0``), then descend.

    ``climb=None`` restarts from ``v0`` every time. Otherwise the controller
    climbs ``climb`` steps, and keeps climbing while a canary still fails.
    """
    n = 0 if climb is None else max(state.n - climb, 0)
    while n > 0 and check_states(cfg, banks, cfg.voltage(n), temperature):
        n -= 1
    restore_states(cfg, banks, cfg.voltage(n), temperature)
    return settle(ControllerState(n=n), cfg, banks, temperature)


# ---------------------------------------------------------------------------
# Temperature schedules and traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TempSchedule:
    steps: tuple   # ((duration, temperature_C), ...)

    def __post_init__(self):
        if not self.steps:
            raise ValueError("empty temperature schedule")
        for d, t in self.steps:
            if not d > 0:
                raise ValueError("durations must be positive")
            if not T_LIMITS[0] <= t <= T_LIMITS[1]:
                raise ValueError(f"temperature {t} C outside {T_LIMITS}")

    @property
    def temperatures(self) -> list[float]:
        return [float(t) for _, t in self.steps]

    def max_swing(self, start: float = T_REF) -> float:
        ts = [start] + self.temperatures
        return max(abs(b - a) for a, b in zip(ts, ts[1:]))

    @classmethod
    def staircase(cls, start=25.0, low=-15.0, high=90.0, step=15.0, duration=1.0):
        """Start, drop to ``low``, then climb to ``high`` in ``step`` increments."""
        temps = [start] + list(np.arange(low, high + step / 2, step))
        return cls(tuple((duration, float(t)) for t in temps))

    @classmethod
    def constant(cls, temperature=T_REF, n=5, duration=1.0):
        return cls(tuple((duration, float(temperature)) for _ in range(n)))


@dataclass
class TraceRecord:
    step: int
    temperature_C: float
    sram_voltage_V: float
    any_failed: bool
    restored: bool
    app_error: float = float("nan")
    descent_steps: int = 0
    violations: int = 0     # non-canary failing cells outside the target map


@dataclass
class VoltageTrace:
    records: list = field(default_factory=list)

    COLUMNS = ("step", "temperature_C", "sram_voltage_V", "any_failed", "restored",
               "app_error")

    @property
    def voltages(self) -> list[float]:
        return [r.sram_voltage_V for r in self.records]

    @property
    def temperatures(self) -> list[float]:
        return [r.temperature_C for r in self.records]

    @property
    def safe(self) -> bool:
        return all(r.violations == 0 for r in self.records)

    def to_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.records:
            w.writerow([r.step, repr(r.temperature_C), repr(r.sram_voltage_V),
                        int(r.any_failed), int(r.restored), repr(r.app_error)])
        return buf.getvalue()

    def save(self, path, comment=None) -> None:
        Path(path).write_text(self.to_csv(comment))


def realized_faults(banks, voltage: float, temperature: float) -> set:
    """Every cell that would read wrong (if holding its non-preferred value)."""
    out = set()
    for bank in banks:
        for w, b in zip(*np.nonzero(bank.failing(voltage, temperature))):
            out.add((bank.bank_id, int(w), int(b)))
    return out


def safety_violations(banks, cfg: CanaryConfig, target: FaultMap, voltage: float,
                      temperature: float) -> set:
    """Non-canary cells failing at ``voltage`` that the target map lacks."""
    return realized_faults(banks, voltage, temperature) - cfg.cells - target.locations()


# ---------------------------------------------------------------------------
# Weights in SRAM
# ---------------------------------------------------------------------------

def store_weights(banks, weights, mapping, fmt: QFormat = QFormat()) -> None:
    """Write each weight's quantized code into its word."""
    for w, bk, wd in zip(weights, mapping.banks, mapping.words):
        codes, _ = quantize_array(w, fmt)
        bits = codes_to_bits(codes, fmt)
        for b in np.unique(bk):
            sel = bk == b
            rows = ((bits[sel][:, None] >> np.arange(fmt.word_bits)) & 1).astype(np.uint8)
            banks[b].stored[wd[sel]] = rows


def load_weights(banks, mapping, fmt: QFormat, voltage: float,
                 temperature: float) -> list:
    """Read every weight word back at ``(voltage, temperature)``."""
    out = []
    place = 1 << np.arange(fmt.word_bits, dtype=np.int64)
    for bk, wd in zip(mapping.banks, mapping.words):
        vals = np.empty(bk.shape, dtype=np.int64)
        for b in np.unique(bk):
            sel = bk == b
            vals[sel] = _read_rows(banks[b], wd[sel], voltage, temperature) @ place
        out.append(dequantize_array(bits_to_codes(vals, fmt), fmt))
    return out


def _read_rows(bank: SramBank, words, voltage, temperature):
    vmin = bank.vmin[words] + bank.temp_coeff[words] * (T_REF - temperature)
    rows = bank.stored[words]
    flip = (voltage < vmin) & (rows != bank.preferred[words])
    rows[flip] = bank.preferred[words][flip]
    bank.stored[words] = rows
    return rows.astype(np.int64)


def run_simulation(banks, cfg: CanaryConfig, schedule: TempSchedule, target: FaultMap,
                   net: nn.Mlp | None = None, mapping=None, dataset=None,
                   fmt: QFormat = QFormat(), metric: str = "classification",
                   restart: str = "climb", copy_banks: bool = True) -> VoltageTrace:
    """Drive the controller through ``schedule`` and score each settled point.

    ``restart="climb"`` re-enters the descent a few steps above the last
    voltage (enough for the largest temperature swing); ``"v0"`` restarts
    from ``v0`` on every wake-up.
    """
    if restart not in ("climb", "v0"):
        raise ValueError(f"unknown restart policy {restart!r}")
    if copy_banks:
        banks = copy.deepcopy(banks)
    if net is not None:
        if mapping is None or dataset is None:
            raise ValueError("evaluating a network needs its mapping and a dataset")
        store_weights(banks, net.weights, mapping, fmt)
    init_canaries(cfg, banks)
    tc = max(float(np.abs(b.temp_coeff).max()) for b in banks)
    climb = None if restart == "v0" else reascent_steps(cfg, schedule.max_swing(), tc)
    trace = VoltageTrace()
    state = ControllerState()
    for k, temp in enumerate(schedule.temperatures):
        state = wake(state, cfg, banks, temp, None if k == 0 else climb)
        v = cfg.voltage(state.n)
        rec = TraceRecord(k, temp, v, state.any_failed, state.restored,
                          descent_steps=state.steps,
                          violations=len(safety_violations(banks, cfg, target, v, temp)))
        if net is not None:
            ws = load_weights(banks, mapping, fmt, v, temp)
            y = nn.predict(net, dataset.X, ws)
            rec.app_error = error_metric(y, dataset.Y, metric)
        trace.records.append(rec)
    return trace
