"""Energy per cycle of the logic and SRAM rails versus supply voltage.

The model is a table of measured knots per quantity (``logic_pj``,
``sram_pj``, ``fmax_mhz``), interpolated linearly. Knots below the lowest
measurement come from a fitted ``a*V^2 + b*V*exp(-k*V)`` curve and carry
the source label ``extrapolated``; anything between knots is interpolation.

Three operating scenarios are accounted for:

* ``HighPerf``     - clock fixed at the top frequency; SRAM may drop to the
  periphery timing floor, logic cannot scale.
* ``EnOpt_split``  - separate rails, each at its own minimum-energy point.
* ``EnOpt_joint``  - one shared rail at the summed curve's minimum.

Baselines keep the same logic voltage and clock but hold SRAM at nominal,
except ``EnOpt_joint`` where the shared rail pins logic at nominal too.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

LOGIC = "logic_pj"
SRAM = "sram_pj"
FMAX = "fmax_mhz"
QUANTITIES = (LOGIC, SRAM, FMAX)
COMPONENTS = {"logic": LOGIC, "sram": SRAM, "sum": "sum"}

NOMINAL_V = 0.9
MEP_STEP = 1e-3

HIGH_PERF = "HighPerf"
ENOPT_SPLIT = "EnOpt_split"
ENOPT_JOINT = "EnOpt_joint"
SCENARIOS = (HIGH_PERF, ENOPT_SPLIT, ENOPT_JOINT)

DEFAULT_OPS_PER_CYCLE = 8


# ---------------------------------------------------------------------------
# Table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Knot:
    quantity: str
    voltage: float
    value: float
    source: str = "measured"


@dataclass(frozen=True, eq=False)
class EnergyTable:
    knots: tuple

    def __post_init__(self):
        seen = {}
        for k in self.knots:
            if k.quantity not in QUANTITIES:
                raise ValueError(f"unknown quantity {k.quantity!r}")
            if not (np.isfinite(k.value) and k.value > 0):
                raise ValueError(f"{k.quantity} at {k.voltage} V must be positive")
            seen.setdefault(k.quantity, []).append(k.voltage)
        for q in (LOGIC, SRAM):
            if len(seen.get(q, ())) < 2:
                raise ValueError(f"{q} needs at least two knots")
        for q, vs in seen.items():
            if any(b <= a for a, b in zip(vs, vs[1:])):
                raise ValueError(f"{q} voltages must be strictly increasing")

    def points(self, quantity: str):
        ks = [k for k in self.knots if k.quantity == quantity]
        return (np.array([k.voltage for k in ks]), np.array([k.value for k in ks]))

    def span(self, quantity: str) -> tuple[float, float]:
        v, _ = self.points(quantity)
        if v.size == 0:
            raise ValueError(f"table has no {quantity} knots")
        return float(v[0]), float(v[-1])

    def source_at(self, quantity: str, voltage: float) -> str:
        for k in self.knots:
            if k.quantity == quantity and np.isclose(k.voltage, voltage, atol=1e-9):
                return k.source
        return "interpolated"

    def with_knots(self, extra) -> "EnergyTable":
        ks = sorted(list(self.knots) + list(extra), key=lambda k: (k.quantity, k.voltage))
        return EnergyTable(tuple(ks))

    def __eq__(self, other):
        return isinstance(other, EnergyTable) and self.knots == other.knots

    # -- text form ---------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "voltage", "value", "source"])
        for k in self.knots:
            w.writerow([k.quantity, repr(k.voltage), repr(k.value), k.source])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EnergyTable":
        rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
        try:
            ks = [Knot(r["quantity"].strip(), float(r["voltage"]), float(r["value"]),
                       (r.get("source") or "measured").strip()) for r in rows]
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"malformed energy table: {e}") from None
        ks.sort(key=lambda k: (k.quantity, k.voltage))
        return cls(tuple(ks))

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "EnergyTable":
        return cls.from_csv(Path(path).read_text())


def default_table() -> EnergyTable:
    """Measured chip knots plus the labelled low-voltage extrapolation."""
    text = resources.files("voltscale").joinpath("data/energy_default.csv").read_text()
    return EnergyTable.from_csv(text)


def energy_at(table: EnergyTable, component: str, voltage: float) -> float:
    """pJ/cycle of ``logic``, ``sram`` or their ``sum`` at ``voltage``."""
    if component == "sum":
        return energy_at(table, "logic", voltage) + energy_at(table, "sram", voltage)
    q = COMPONENTS.get(component, component)
    if q not in (LOGIC, SRAM):
        raise ValueError(f"unknown component {component!r}")
    return _interp(table, q, voltage)


def frequency_at(table: EnergyTable, voltage: float) -> float:
    """Maximum clock (MHz) at ``voltage``, log-linear between anchors."""
    v, f = table.points(FMAX)
    if v.size == 0:
        raise ValueError("table has no frequency anchors")
    if v.size == 1:
        if np.isclose(voltage, v[0]):
            return float(f[0])
        raise ValueError("a single frequency anchor cannot be interpolated")
    _check_span(v, voltage, FMAX)
    return float(np.exp(np.interp(voltage, v, np.log(f))))


def _check_span(v, voltage, q):
    if not (v[0] - 1e-12 <= voltage <= v[-1] + 1e-12):
        raise ValueError(f"{voltage} V is outside the {q} table span [{v[0]}, {v[-1]}]")


def _interp(table, q, voltage):
    v, e = table.points(q)
    _check_span(v, voltage, q)
    return float(np.interp(voltage, v, e))


def find_mep(table: EnergyTable, component: str, floor: float,
             ceiling: float = NOMINAL_V) -> float:
    """Minimum-energy voltage on a 1 mV grid over ``[floor, ceiling]``.

    Ties go to the lower voltage.
    """
    if floor > ceiling:
        raise ValueError("floor is above the ceiling")
    n = int(round((ceiling - floor) / MEP_STEP))
    grid = np.round(floor + MEP_STEP * np.arange(n + 1), 6)
    grid = np.unique(np.clip(grid, floor, ceiling))
    e = np.array([energy_at(table, component, v) for v in grid])
    best = np.flatnonzero(e <= e.min() + 1e-12)[0]
    return float(grid[best])


def lowest_voltage_for(table: EnergyTable, f_mhz: float) -> float:
    """Lowest voltage whose maximum clock reaches ``f_mhz``."""
    v, f = table.points(FMAX)
    if f_mhz > f.max() * (1 + 1e-9):
        raise ValueError(f"{f_mhz} MHz exceeds the fastest anchor ({f.max()} MHz)")
    if f_mhz <= f[0]:
        return float(v[0])
    lf = np.log(f)
    return float(np.interp(np.log(f_mhz), lf, v))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constraints:
    """Voltage limits the scenarios work within."""

    sram_vmin: float = 0.44           # lowest SRAM voltage accuracy allows
    logic_floor: float | None = None  # None: lowest logic knot
    periphery_floor: float = 0.65     # SRAM periphery timing at full clock
    f_target_mhz: float = 250.0       # HighPerf clock
    nominal: float = NOMINAL_V


@dataclass(frozen=True)
class OperatingPoint:
    logic_v: float
    sram_v: float
    frequency_mhz: float
    logic_pj: float
    sram_pj: float

    @property
    def total_pj(self) -> float:
        return self.logic_pj + self.sram_pj

    @property
    def power_mw(self) -> float:
        return self.total_pj * self.frequency_mhz * 1e-3


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    optimized: OperatingPoint
    baseline: OperatingPoint

    @property
    def reduction(self) -> float:
        return self.baseline.total_pj / self.optimized.total_pj


def _point(table, logic_v, sram_v, f):
    return OperatingPoint(logic_v, sram_v, f, energy_at(table, "logic", logic_v),
                          energy_at(table, "sram", sram_v))


def scenario_eval(table: EnergyTable, scenario: str,
                  constraints: Constraints = Constraints()) -> ScenarioResult:
    c = constraints
    lo_logic = c.logic_floor if c.logic_floor is not None else table.span(LOGIC)[0]
    if not c.sram_vmin <= c.nominal or not lo_logic <= c.nominal:
        raise ValueError("voltage floors must not exceed the nominal voltage")
    if scenario == HIGH_PERF:
        logic_v = max(lowest_voltage_for(table, c.f_target_mhz), lo_logic)
        sram_v = max(c.periphery_floor, c.sram_vmin)
        f = c.f_target_mhz
        opt = _point(table, logic_v, sram_v, f)
        base = _point(table, logic_v, c.nominal, f)
    elif scenario == ENOPT_SPLIT:
        logic_v = find_mep(table, "logic", lo_logic, c.nominal)
        sram_v = find_mep(table, "sram", c.sram_vmin, c.nominal)
        f = frequency_at(table, logic_v)
        opt = _point(table, logic_v, sram_v, f)
        base = _point(table, logic_v, c.nominal, f)
    elif scenario == ENOPT_JOINT:
        v = find_mep(table, "sum", max(lo_logic, c.sram_vmin), c.nominal)
        f = frequency_at(table, v)
        opt = _point(table, v, v, f)
        # a shared rail cannot go below what the unscaled SRAM tolerates
        base = _point(table, c.nominal, c.nominal, f)
    else:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    return ScenarioResult(scenario, opt, base)


def all_scenarios(table: EnergyTable | None = None,
                  constraints: Constraints = Constraints()) -> list[ScenarioResult]:
    table = table or default_table()
    return [scenario_eval(table, s, constraints) for s in SCENARIOS]


TABLE_ROWS = (
    ("Logic Voltage (V)", lambda p: p.logic_v),
    ("SRAM Voltage (V)", lambda p: p.sram_v),
    ("Frequency (MHz)", lambda p: p.frequency_mhz),
    ("Total Energy (pJ/cycle)", lambda p: p.total_pj),
    ("Logic", lambda p: p.logic_pj),
    ("SRAM", lambda p: p.sram_pj),
)


def results_csv(results, comment: str | None = None) -> str:
    """Scenario results laid out as parameter rows by scenario/base columns."""
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = ["param"]
    for r in results:
        header += [r.scenario, f"{r.scenario}_base"]
    w.writerow(header)
    for name, get in TABLE_ROWS:
        row = [name]
        for r in results:
            row += [f"{get(r.optimized):.4g}", f"{get(r.baseline):.4g}"]
        w.writerow(row)
    w.writerow(["Energy Reduction"] + sum(([f"{r.reduction:.4f}", ""] for r in results), []))
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Efficiency
# ---------------------------------------------------------------------------

def efficiency_gops_per_watt(result, ops_per_cycle: float = DEFAULT_OPS_PER_CYCLE) -> float:
    """Operations per joule, as GOPS/W, of an operating point or scenario."""
    if not ops_per_cycle > 0:
        raise ValueError("ops_per_cycle must be positive")
    point = result.optimized if isinstance(result, ScenarioResult) else result
    if not point.total_pj > 0:
        raise ValueError("energy per cycle must be positive")
    return 1e3 * ops_per_cycle / point.total_pj


def gops_per_watt(frequency_hz: float, power_w: float,
                  ops_per_cycle: float = DEFAULT_OPS_PER_CYCLE) -> float:
    if not power_w > 0:
        raise ValueError("power must be positive")
    if not (frequency_hz > 0 and ops_per_cycle > 0):
        raise ValueError("frequency and ops_per_cycle must be positive")
    return frequency_hz * ops_per_cycle / power_w * 1e-9


# ---------------------------------------------------------------------------
# Analytic extrapolation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticEnergyModel:
    """``E(V) = a*V^2 + b*V*exp(-k*V)``: switching plus leakage per cycle.

    The leakage term grows as the clock slows exponentially at low voltage.
    """

    a: float
    b: float
    k: float
    source: str = field(default="extrapolated", compare=False)

    def __call__(self, v):
        v = np.asarray(v, dtype=np.float64)
        out = self.a * v ** 2 + self.b * v * np.exp(-self.k * v)
        return out if out.ndim else float(out)

    def slope(self, v):
        return 2 * self.a * v + self.b * np.exp(-self.k * v) * (1 - self.k * v)

    @classmethod
    def fit(cls, v_min: float, e_min: float, v_ref: float, e_ref: float,
            k_range=(1.0, 80.0)) -> "AnalyticEnergyModel":
        """Curve through ``(v_min, e_min)`` with zero slope there and through
        ``(v_ref, e_ref)``."""
        def ab(k):
            m = np.array([[v_min ** 2, v_min * np.exp(-k * v_min)],
                          [v_ref ** 2, v_ref * np.exp(-k * v_ref)]])
            return np.linalg.solve(m, [e_min, e_ref])

        def slope(k):
            a, b = ab(k)
            return 2 * a * v_min + b * np.exp(-k * v_min) * (1 - k * v_min)

        ks = np.linspace(*k_range, 800)
        s = np.array([slope(k) for k in ks])
        idx = np.flatnonzero(np.sign(s[:-1]) * np.sign(s[1:]) < 0)
        if idx.size == 0:
            raise ValueError("no curve of this family has its minimum at v_min")
        k = brentq(slope, ks[idx[0]], ks[idx[0] + 1], xtol=1e-12)
        a, b = ab(k)
        return cls(float(a), float(b), float(k))

    def knots(self, quantity: str, voltages, digits: int = 4):
        return [Knot(quantity, float(v), round(float(self(v)), digits), self.source)
                for v in voltages]


def extrapolation_fits(table: EnergyTable) -> dict:
    """Analytic fits anchored on each rail's lowest measured knots."""
    out = {}
    for q in (LOGIC, SRAM):
        ks = [k for k in table.knots if k.quantity == q and k.source == "measured"]
        if len(ks) < 2:
            raise ValueError(f"{q} needs two measured knots to extrapolate")
        out[q] = AnalyticEnergyModel.fit(ks[0].voltage, ks[0].value, ks[1].voltage, ks[1].value)
    return out
