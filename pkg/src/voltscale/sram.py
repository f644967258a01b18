"""Statistical 6T bit-cell population and post-silicon style fault profiling.

Every cell has a preferred state and a read-failure voltage ``vmin`` (at
the 25 C reference). Reading a cell below ``vmin(T)`` while it stores the
complement of its preferred state flips it to the preferred state, and it
stays there on later reads. Writes always succeed.

Profiling writes a probe pattern and its complement into every word, reads
each twice, and records each disagreeing bit with its read-back polarity.
"""
from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.special import ndtr, ndtri

T_REF = 25.0
DEFAULT_TEMP_COEFF = 3e-4  # V per degC; lower temperature needs higher voltage

# Anchors of the measured read-failure curve at 25 C.
ONSET_VOLTAGE = 0.53
ONSET_RATE = 5e-5
CALIBRATION_VOLTAGE = 0.50
CALIBRATION_RATE = 0.28
TOTAL_FAILURE_VOLTAGE = 0.40


# ---------------------------------------------------------------------------
# V_min distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VminDistribution:
    """Normal distribution of ``vmin`` truncated to ``(lo, hi)``."""

    mu: float = 0.45
    sigma: float = 0.025
    lo: float = 0.0
    hi: float = 0.9

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.lo < self.hi:
            raise ValueError("truncation bounds must satisfy lo < hi")

    def _bounds(self):
        return (ndtr((self.lo - self.mu) / self.sigma),
                ndtr((self.hi - self.mu) / self.sigma))

    def sf(self, v):
        """P(vmin > v)."""
        a, b = self._bounds()
        z = ndtr((np.clip(v, self.lo, self.hi) - self.mu) / self.sigma)
        return (b - z) / (b - a)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        a, b = self._bounds()
        u = rng.random(size)
        return self.mu + self.sigma * ndtri(a + u * (b - a))

    def to_dict(self) -> dict:
        return {"family": "normal", "mu": self.mu, "sigma": self.sigma,
                "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class SplitNormalVmin:
    """Two-piece normal: a wide lower body and a steep upper tail.

    Density is proportional to ``phi((v - mode) / sigma_lo)`` below the
    mode and ``phi((v - mode) / sigma_hi)`` above it, truncated to
    ``(lo, hi)``. A single normal cannot be both steep near failure onset
    and wide enough to reach total failure 130 mV lower; the two sides are
    tuned independently.
    """

    mode: float
    sigma_lo: float
    sigma_hi: float
    lo: float = TOTAL_FAILURE_VOLTAGE
    hi: float = 0.9

    def __post_init__(self):
        if not (self.sigma_lo > 0 and self.sigma_hi > 0):
            raise ValueError("both sigmas must be positive")
        if not self.lo < self.mode < self.hi:
            raise ValueError("mode must lie inside (lo, hi)")

    def _weights(self):
        wl = self.sigma_lo * (0.5 - ndtr((self.lo - self.mode) / self.sigma_lo))
        wh = self.sigma_hi * (ndtr((self.hi - self.mode) / self.sigma_hi) - 0.5)
        return wl, wh

    def sf(self, v):
        v = np.clip(np.asarray(v, dtype=np.float64), self.lo, self.hi)
        wl, wh = self._weights()
        z = wl + wh
        above = self.sigma_hi * (ndtr((self.hi - self.mode) / self.sigma_hi)
                                 - ndtr((v - self.mode) / self.sigma_hi))
        below = wh + self.sigma_lo * (0.5 - ndtr((v - self.mode) / self.sigma_lo))
        return np.where(v >= self.mode, above, below) / z

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        wl, wh = self._weights()
        z = wl + wh
        uz = rng.random(size) * z
        a_lo = ndtr((self.lo - self.mode) / self.sigma_lo)
        lower = self.mode + self.sigma_lo * ndtri(
            np.minimum(a_lo + uz / self.sigma_lo, 0.5))
        upper = self.mode + self.sigma_hi * ndtri(
            np.clip(0.5 + (uz - wl) / self.sigma_hi, 0.5, 1.0))
        out = np.where(uz < wl, lower, upper)
        return np.clip(out, self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"family": "split_normal", "mode": self.mode,
                "sigma_lo": self.sigma_lo, "sigma_hi": self.sigma_hi,
                "lo": self.lo, "hi": self.hi}

    @classmethod
    def calibrated(cls, sigma_lo: float = 0.08,
                   rate_at: float = CALIBRATION_RATE,
                   v_rate: float = CALIBRATION_VOLTAGE,
                   onset_rate: float = ONSET_RATE,
                   v_onset: float = ONSET_VOLTAGE,
                   lo: float = TOTAL_FAILURE_VOLTAGE) -> "SplitNormalVmin":
        """Solve ``mode`` and ``sigma_hi`` so that the failure rate is
        ``rate_at`` at ``v_rate`` and ``onset_rate`` at ``v_onset``."""

        def residual(p):
            mode, log_shi = p
            try:
                d = cls(mode, sigma_lo, math.exp(log_shi), lo=lo)
            except ValueError:
                return [1e3, 1e3]
            return [float(d.sf(v_rate)) - rate_at,
                    math.log(max(float(d.sf(v_onset)), 1e-300))
                    - math.log(onset_rate)]

        sol = optimize.root(residual, [v_rate + 0.02, math.log(0.003)],
                            method="hybr")
        if not sol.success or max(abs(r) for r in residual(sol.x)) > 1e-8:
            raise RuntimeError(f"V_min calibration failed: {sol.message}")
        return cls(float(sol.x[0]), sigma_lo, float(math.exp(sol.x[1])), lo=lo)


@functools.lru_cache(maxsize=None)
def reference_calibration() -> SplitNormalVmin:
    """Default distribution: 28% failing at 0.50 V, onset at 0.53 V."""
    return SplitNormalVmin.calibrated()


def distribution_from_dict(d: dict):
    d = dict(d)
    family = d.pop("family", "normal")
    if family == "normal":
        return VminDistribution(**d)
    if family == "split_normal":
        return SplitNormalVmin(**d)
    if family == "calibrated":
        return reference_calibration()
    raise ValueError(f"unknown V_min distribution family {family!r}")


# ---------------------------------------------------------------------------
# Cells and banks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SramGeometry:
    # 8 banks x 576 words x 16 bits = 9 KB
    n_banks: int = 8
    n_words: int = 576
    word_bits: int = 16

    def __post_init__(self):
        if min(self.n_banks, self.n_words, self.word_bits) < 1:
            raise ValueError("SRAM geometry dimensions must be positive")

    @property
    def n_cells(self) -> int:
        return self.n_banks * self.n_words * self.word_bits

    def as_tuple(self):
        return (self.n_banks, self.n_words, self.word_bits)


@dataclass(frozen=True)
class BitCell:
    preferred_state: int
    vmin_read: float
    temp_coeff: float = DEFAULT_TEMP_COEFF

    def vmin_at(self, temperature: float) -> float:
        return self.vmin_read + self.temp_coeff * (T_REF - temperature)


def _pack(bits_row: np.ndarray) -> int:
    return int(np.dot(bits_row.astype(np.int64), 1 << np.arange(bits_row.size)))


def _unpack(value: int, word_bits: int) -> np.ndarray:
    return ((int(value) >> np.arange(word_bits)) & 1).astype(np.uint8)


@dataclass(eq=False)
class SramBank:
    """One weight-memory bank. Bit index 0 is the LSB of each word."""

    bank_id: int
    preferred: np.ndarray   # (n_words, word_bits) uint8
    vmin: np.ndarray        # (n_words, word_bits) float64, at T_REF
    temp_coeff: np.ndarray  # (n_words, word_bits) float64
    stored: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.stored is None:
            self.stored = np.zeros_like(self.preferred)
        shapes = {a.shape for a in (self.preferred, self.vmin,
                                    self.temp_coeff, self.stored)}
        if len(shapes) != 1:
            raise ValueError("bank arrays must share one (n_words, word_bits) shape")

    @property
    def n_words(self) -> int:
        return self.preferred.shape[0]

    @property
    def word_bits(self) -> int:
        return self.preferred.shape[1]

    def cell(self, word_addr: int, bit: int) -> BitCell:
        return BitCell(int(self.preferred[word_addr, bit]),
                       float(self.vmin[word_addr, bit]),
                       float(self.temp_coeff[word_addr, bit]))

    def vmin_at(self, temperature: float) -> np.ndarray:
        return self.vmin + self.temp_coeff * (T_REF - temperature)

    def failing(self, voltage: float, temperature: float) -> np.ndarray:
        """Cells whose read would disturb a non-preferred value."""
        return voltage < self.vmin_at(temperature)

    def _check_addr(self, word_addr: int) -> None:
        if not 0 <= word_addr < self.n_words:
            raise IndexError(
                f"word address {word_addr} out of range for bank "
                f"{self.bank_id} ({self.n_words} words)")

    def write(self, word_addr: int, value: int) -> None:
        self._check_addr(word_addr)
        self.stored[word_addr] = _unpack(value, self.word_bits)

    def write_bit(self, word_addr: int, bit: int, value: int) -> None:
        self._check_addr(word_addr)
        self.stored[word_addr, bit] = value

    def read(self, word_addr: int, voltage: float, temperature: float = T_REF) -> int:
        self._check_addr(word_addr)
        row = self.stored[word_addr]
        flip = (voltage < self.vmin_at(temperature)[word_addr]) & \
            (row != self.preferred[word_addr])
        row[flip] = self.preferred[word_addr][flip]
        return _pack(row)

    def read_bit(self, word_addr: int, bit: int, voltage: float,
                 temperature: float = T_REF) -> int:
        self._check_addr(word_addr)
        vmin_t = self.vmin[word_addr, bit] + \
            self.temp_coeff[word_addr, bit] * (T_REF - temperature)
        if voltage < vmin_t:
            self.stored[word_addr, bit] = self.preferred[word_addr, bit]
        return int(self.stored[word_addr, bit])

    def write_all(self, pattern: np.ndarray) -> None:
        self.stored[:] = pattern

    def read_all(self, voltage: float, temperature: float = T_REF) -> np.ndarray:
        flip = self.failing(voltage, temperature) & (self.stored != self.preferred)
        self.stored[flip] = self.preferred[flip]
        return self.stored.copy()


def simulate_read(bank: SramBank, word_addr: int, voltage: float,
                  temperature: float = T_REF) -> int:
    return bank.read(word_addr, voltage, temperature)


def sample_population(geometry: SramGeometry = SramGeometry(), dist=None,
                      temp_coeff: float = DEFAULT_TEMP_COEFF,
                      seed: int = 0) -> list[SramBank]:
    """Draw a bank set; identical ``seed`` gives an identical population."""
    if dist is None:
        dist = reference_calibration()
    rng = np.random.default_rng(seed)
    shape = (geometry.n_words, geometry.word_bits)
    banks = []
    for b in range(geometry.n_banks):
        preferred = rng.integers(0, 2, size=shape, dtype=np.uint8)
        vmin = dist.sample(rng, shape)
        banks.append(SramBank(b, preferred, vmin, np.full(shape, float(temp_coeff))))
    return banks


def geometry_of(banks) -> SramGeometry:
    return SramGeometry(len(banks), banks[0].n_words, banks[0].word_bits)


# ---------------------------------------------------------------------------
# Fault maps
# ---------------------------------------------------------------------------

_COLUMNS = ("bank_id", "word_addr", "bit_index", "polarity")


def _as_entries(entries) -> np.ndarray:
    arr = np.asarray(entries, dtype=np.int64).reshape(-1, 4)
    if arr.size:
        order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
        arr = arr[order]
    return arr


@dataclass(frozen=True, eq=False)
class FaultMap:
    """Profiled stuck bits at one (voltage, temperature) point.

    ``entries`` is an ``(n, 4)`` integer array of
    ``(bank_id, word_addr, bit_index, polarity)`` sorted by location.
    """

    voltage: float
    temperature: float
    entries: np.ndarray
    geometry: SramGeometry = SramGeometry()
    seed: int | None = None

    def __post_init__(self):
        arr = _as_entries(self.entries)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        if arr.size:
            if np.any((arr[:, 3] != 0) & (arr[:, 3] != 1)):
                raise ValueError("polarity must be 0 or 1")
            loc = arr[:, :3]
            if np.any(np.all(loc[1:] == loc[:-1], axis=1)):
                raise ValueError("duplicate (bank, word, bit) entry in fault map")
            g = self.geometry
            if (loc.min() < 0 or loc[:, 0].max() >= g.n_banks
                    or loc[:, 1].max() >= g.n_words
                    or loc[:, 2].max() >= g.word_bits):
                raise ValueError("fault map entry outside SRAM geometry")

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FaultMap):
            return NotImplemented
        return (self.voltage == other.voltage
                and self.temperature == other.temperature
                and self.geometry == other.geometry
                and self.seed == other.seed
                and np.array_equal(self.entries, other.entries))

    @property
    def rate(self) -> float:
        return len(self) / self.geometry.n_cells

    def locations(self) -> set[tuple[int, int, int]]:
        return {tuple(int(x) for x in row[:3]) for row in self.entries}

    @classmethod
    def empty(cls, geometry: SramGeometry = SramGeometry(), voltage: float = 0.9,
              temperature: float = T_REF) -> "FaultMap":
        return cls(voltage, temperature, np.zeros((0, 4), np.int64), geometry)

    @classmethod
    def from_cells(cls, banks, cell_mask, voltage, temperature, seed=None) -> "FaultMap":
        """Build a map from per-bank boolean masks; polarity = preferred state."""
        rows = []
        for bank, mask in zip(banks, cell_mask):
            w, b = np.nonzero(mask)
            rows.append(np.column_stack([
                np.full(w.size, bank.bank_id), w, b, bank.preferred[w, b]]))
        entries = np.concatenate(rows) if rows else np.zeros((0, 4))
        return cls(voltage, temperature, entries, geometry_of(banks), seed)

    # Serialization ---------------------------------------------------------

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write("# faultmap v1\n")
        buf.write(f"# voltage={self.voltage!r}\n")
        buf.write(f"# temperature={self.temperature!r}\n")
        buf.write(f"# seed={self.seed}\n")
        buf.write("# geometry={},{},{}\n".format(*self.geometry.as_tuple()))
        buf.write(",".join(_COLUMNS) + "\n")
        for row in self.entries:
            buf.write(",".join(str(int(x)) for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "FaultMap":
        header = {}
        rows = []
        lines = text.splitlines()
        lead = [ln.strip() for ln in lines[:next((i for i, ln in enumerate(lines)
                                                  if not ln.startswith("#")), len(lines))]]
        if "# faultmap v1" not in lead:
            raise ValueError("not a fault map file (missing '# faultmap v1')")
        for line in lines:
            if line.strip() == "# faultmap v1":
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                header[key] = value
            elif line.strip() == ",".join(_COLUMNS):
                continue
            elif line.strip():
                rows.append([int(x) for x in line.split(",")])
        try:
            geometry = SramGeometry(*(int(x) for x in header["geometry"].split(",")))
            seed = None if header["seed"] == "None" else int(header["seed"])
            return cls(float(header["voltage"]), float(header["temperature"]),
                       np.array(rows, dtype=np.int64).reshape(-1, 4), geometry, seed)
        except KeyError as exc:
            raise ValueError(f"fault map header missing {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), newline="\n")

    @classmethod
    def load(cls, path) -> "FaultMap":
        return cls.loads(Path(path).read_text())


def _probe_pattern(word_bits: int) -> np.ndarray:
    return (np.arange(word_bits) % 2).astype(np.uint8)  # 0xAAAA-style


def profile(banks, voltage: float, temperature: float = T_REF,
            seed: int | None = None) -> FaultMap:
    """Read-after-write / read-after-read sweep over every word.

    Bank contents are overwritten by the probe patterns.
    """
    rows = []
    for bank in banks:
        pattern = np.broadcast_to(_probe_pattern(bank.word_bits), bank.stored.shape)
        bad = np.zeros(bank.stored.shape, dtype=bool)
        polarity = np.zeros(bank.stored.shape, dtype=np.uint8)
        for probe in (pattern, 1 - pattern):
            bank.write_all(probe)
            first = bank.read_all(voltage, temperature)
            second = bank.read_all(voltage, temperature)
            for readback in (first, second):
                diff = readback != probe
                polarity[diff] = readback[diff]
                bad |= diff
        w, b = np.nonzero(bad)
        rows.append(np.column_stack([np.full(w.size, bank.bank_id), w, b, polarity[w, b]]))
    return FaultMap(voltage, temperature, np.concatenate(rows),
                    geometry_of(banks), seed)


def fault_rate(banks, voltage: float, temperature: float = T_REF) -> float:
    fm = profile(banks, voltage, temperature)
    return len(fm) / fm.geometry.n_cells


def compile_masks(fmap: FaultMap, bank_id: int, word_addr: int) -> tuple[int, int]:
    """``(b_or, b_and)`` for one word; identity masks if it has no faults."""
    full = (1 << fmap.geometry.word_bits) - 1
    e = fmap.entries
    sel = e[(e[:, 0] == bank_id) & (e[:, 1] == word_addr)]
    b_or = 0
    b_and = full
    for _, _, bit, pol in sel:
        if pol:
            b_or |= 1 << int(bit)
        else:
            b_and &= ~(1 << int(bit)) & full
    return b_or, b_and


def compile_all_masks(fmap: FaultMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-word masks for the whole geometry, shape ``(n_banks, n_words)``."""
    g = fmap.geometry
    full = (1 << g.word_bits) - 1
    b_or = np.zeros((g.n_banks, g.n_words), dtype=np.int64)
    clear = np.zeros((g.n_banks, g.n_words), dtype=np.int64)
    e = fmap.entries
    if len(e):
        place = np.left_shift(1, e[:, 2])
        ones = e[:, 3] == 1
        np.bitwise_or.at(b_or, (e[ones, 0], e[ones, 1]), place[ones])
        np.bitwise_or.at(clear, (e[~ones, 0], e[~ones, 1]), place[~ones])
    return b_or, full & ~clear
