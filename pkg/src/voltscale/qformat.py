"""Two's-complement fixed-point words for weight storage.

A weight ``w`` is stored as an integer code ``k`` in a ``word_bits`` wide
word, interpreted as ``k * 2**-frac_bits``. Quantization rounds to the
nearest grid point (ties away from zero) and saturates at the format
bounds. The residual ``eps_q = w - dequantize(Q(w))`` is returned so that
training can carry sub-LSB updates across iterations.

Scalar helpers (:func:`quantize`, :func:`dequantize`, :func:`apply_masks`)
operate on :class:`QWord` values; the ``*_array`` variants do the same on
numpy arrays of integer codes and are what the training loop uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_WORD_BITS = 8
MAX_WORD_BITS = 22


@dataclass(frozen=True)
class QFormat:
    """Fixed-point layout: ``word_bits`` total, ``frac_bits`` after the point."""

    word_bits: int = 16
    frac_bits: int = 14

    def __post_init__(self):
        if not MIN_WORD_BITS <= self.word_bits <= MAX_WORD_BITS:
            raise ValueError(
                f"word_bits must be in [{MIN_WORD_BITS}, {MAX_WORD_BITS}], "
                f"got {self.word_bits}")
        if not 0 <= self.frac_bits < self.word_bits:
            raise ValueError(
                f"frac_bits must be in [0, word_bits), got {self.frac_bits}")

    @property
    def lsb(self) -> float:
        return math.ldexp(1.0, -self.frac_bits)

    @property
    def code_min(self) -> int:
        return -(1 << (self.word_bits - 1))

    @property
    def code_max(self) -> int:
        return (1 << (self.word_bits - 1)) - 1

    @property
    def full_mask(self) -> int:
        return (1 << self.word_bits) - 1

    @property
    def min_value(self) -> float:
        return self.code_min * self.lsb

    @property
    def max_value(self) -> float:
        return self.code_max * self.lsb

    def place_value(self, bit: int) -> float:
        """Signed contribution of ``bit`` when set (the MSB is negative)."""
        v = math.ldexp(1.0, bit - self.frac_bits)
        return -v if bit == self.word_bits - 1 else v

    def to_dict(self) -> dict:
        return {"word_bits": self.word_bits, "frac_bits": self.frac_bits}

    @classmethod
    def from_dict(cls, d: dict) -> "QFormat":
        return cls(int(d["word_bits"]), int(d["frac_bits"]))


@dataclass(frozen=True)
class QWord:
    bits: int
    format: QFormat

    def __post_init__(self):
        if not 0 <= self.bits <= self.format.full_mask:
            raise ValueError(
                f"bit pattern {self.bits:#x} does not fit in "
                f"{self.format.word_bits} bits")

    @classmethod
    def from_code(cls, code: int, fmt: QFormat) -> "QWord":
        return cls(int(code) & fmt.full_mask, fmt)

    @property
    def code(self) -> int:
        """Signed integer value of the bit pattern."""
        n = self.format.word_bits
        return self.bits - ((self.bits >> (n - 1)) << n)


@dataclass(frozen=True)
class QuantResult:
    qword: QWord
    eps_q: float


def _round_half_away(x):
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def quantize(w: float, fmt: QFormat) -> QuantResult:
    w = float(w)
    if not math.isfinite(w):
        raise ValueError(f"cannot quantize non-finite value {w!r}")
    code = int(_round_half_away(math.ldexp(w, fmt.frac_bits)))
    code = min(max(code, fmt.code_min), fmt.code_max)
    q = QWord.from_code(code, fmt)
    return QuantResult(q, w - dequantize(q))


def dequantize(q: QWord) -> float:
    return math.ldexp(float(q.code), -q.format.frac_bits)


def _check_mask(mask: int, fmt: QFormat, name: str) -> None:
    if mask < 0 or mask > fmt.full_mask:
        raise ValueError(
            f"{name} mask {mask:#x} is wider than {fmt.word_bits} bits")


def apply_masks(q: QWord, b_or: int, b_and: int) -> QWord:
    """Force stuck bits: ``(bits & b_and) | b_or``."""
    _check_mask(b_or, q.format, "OR")
    _check_mask(b_and, q.format, "AND")
    return QWord((q.bits & b_and) | b_or, q.format)


# Array variants. Codes are signed int64; patterns are unsigned int64.

def quantize_array(w, fmt: QFormat):
    """Return ``(codes, eps_q)`` for an array of weights."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("cannot quantize non-finite values")
    codes = _round_half_away(np.ldexp(w, fmt.frac_bits))
    codes = np.clip(codes, fmt.code_min, fmt.code_max).astype(np.int64)
    return codes, w - dequantize_array(codes, fmt)


def dequantize_array(codes, fmt: QFormat) -> np.ndarray:
    return np.ldexp(np.asarray(codes, dtype=np.float64), -fmt.frac_bits)


def codes_to_bits(codes, fmt: QFormat) -> np.ndarray:
    return np.asarray(codes, dtype=np.int64) & fmt.full_mask


def bits_to_codes(bits, fmt: QFormat) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    n = fmt.word_bits
    return bits - ((bits >> (n - 1)) << n)


def apply_masks_array(codes, b_or, b_and, fmt: QFormat) -> np.ndarray:
    """Masked codes for arrays of codes and per-element masks."""
    bits = (codes_to_bits(codes, fmt) & b_and) | b_or
    return bits_to_codes(bits, fmt)

