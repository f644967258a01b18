import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voltscale.qformat import (QFormat, QWord, apply_masks, apply_masks_array, bits_to_codes,
                               codes_to_bits, dequantize, dequantize_array, quantize,
                               quantize_array)

FORMATS_8 = [QFormat(8, f) for f in range(8)]


def brute_nearest(w, fmt):
    """Nearest grid code by scanning every code; ties away from zero."""
    best, best_d = None, None
    for code in range(fmt.code_min, fmt.code_max + 1):
        d = abs(Fraction(w) - Fraction(code) * Fraction(fmt.lsb))
        if best_d is None or d < best_d or (d == best_d and abs(code) > abs(best)):
            best, best_d = code, d
    return best


# -- format -------------------------------------------------------------------

def test_format_bounds():
    f = QFormat(8, 6)
    assert f.code_min == -128 and f.code_max == 127
    assert f.min_value == -2.0 and f.max_value == 2 - 2 ** -6
    assert QFormat().to_dict() == {"word_bits": 16, "frac_bits": 14}
    assert QFormat.from_dict({"word_bits": 22, "frac_bits": 3}) == QFormat(22, 3)


@pytest.mark.parametrize("wb,fb", [(7, 3), (23, 3), (8, 8), (8, -1)])
def test_format_rejects_bad_layout(wb, fb):
    with pytest.raises(ValueError):
        QFormat(wb, fb)


def test_place_value_sign():
    f = QFormat(8, 6)
    assert f.place_value(0) == 2 ** -6
    assert f.place_value(6) == 1.0
    assert f.place_value(7) == -2.0


# -- spec examples --------------------------------------------------------------

@pytest.mark.parametrize("fmt", [QFormat(8, 6), QFormat(), QFormat(22, 20)])
def test_zero(fmt):
    r = quantize(0.0, fmt)
    assert r.qword.bits == 0 and r.eps_q == 0.0


def test_half_is_exact():
    r = quantize(0.5, QFormat(16, 14))
    assert dequantize(r.qword) == 0.5 and r.eps_q == 0.0


def test_point_three_in_q2_6():
    fmt = QFormat(8, 6)
    r = quantize(0.3, fmt)
    assert r.qword.code == 19 == brute_nearest(0.3, fmt)
    assert dequantize(r.qword) == 19 / 64 == 0.296875
    assert r.eps_q == pytest.approx(0.003125, abs=1e-15)
    assert dequantize(r.qword) + r.eps_q == 0.3


def test_all_ones_is_minus_one_lsb():
    assert dequantize(QWord(0xFF, QFormat(8, 6))) == -0.015625


def test_identity_masks_and_forced_msb():
    fmt = QFormat(8, 6)
    q = QWord(0b00001111, fmt)
    assert apply_masks(q, 0, 0xFF) == q
    assert apply_masks(q, 0b10000000, 0xFF).bits == 0b10001111


def test_mask_width_checked():
    with pytest.raises(ValueError):
        apply_masks(QWord(0, QFormat(8, 6)), 0x100, 0xFF)
    with pytest.raises(ValueError):
        QWord(0x100, QFormat(8, 6))


def test_saturation_and_nonfinite():
    fmt = QFormat(8, 6)
    hi = quantize(5.0, fmt)
    assert hi.qword.code == 127 and dequantize(hi.qword) + hi.eps_q == 5.0
    lo = quantize(-5.0, fmt)
    assert lo.qword.code == -128 and lo.eps_q == -3.0
    for bad in (math.nan, math.inf):
        with pytest.raises(ValueError):
            quantize(bad, fmt)
    with pytest.raises(ValueError):
        quantize_array([0.0, math.inf], fmt)


def test_ties_away_from_zero():
    fmt = QFormat(8, 0)
    assert quantize(2.5, fmt).qword.code == 3
    assert quantize(-2.5, fmt).qword.code == -3
    assert quantize(0.5, fmt).qword.code == 1


def test_brute_force_agrees_on_random_8bit(rng):
    for fmt in (QFormat(8, 6), QFormat(8, 3)):
        for w in rng.uniform(fmt.min_value, fmt.max_value, 60):
            assert quantize(w, fmt).qword.code == brute_nearest(w, fmt)


# -- exhaustive 8-bit properties -------------------------------------------------

@pytest.mark.parametrize("fmt", FORMATS_8, ids=lambda f: f"Q{f.word_bits - f.frac_bits}.{f.frac_bits}")
def test_exhaustive_8bit_roundtrip_and_half_ulp(fmt):
    codes = np.arange(fmt.code_min, fmt.code_max + 1)
    grid = dequantize_array(codes, fmt)
    # every code, offsets covering the whole rounding cell including both ties
    offsets = np.linspace(-0.5, 0.5, 33) * fmt.lsb
    w = (grid[:, None] + offsets[None, :]).ravel()
    w = w[(w >= fmt.min_value) & (w <= fmt.max_value)]
    q, eps = quantize_array(w, fmt)
    assert np.all(dequantize_array(q, fmt) + eps == w)
    assert np.all(np.abs(eps) <= fmt.lsb / 2)
    # grid points map to themselves
    q0, e0 = quantize_array(grid, fmt)
    assert np.array_equal(q0, codes) and np.all(e0 == 0)
    # monotone
    order = np.argsort(w, kind="stable")
    assert np.all(np.diff(dequantize_array(q[order], fmt)) >= 0)
    # scalar path agrees with the array path
    for x in w[::97]:
        assert quantize(x, fmt).qword.code == quantize_array([x], fmt)[0][0]


def test_exhaustive_8bit_mask_idempotence_and_commutation():
    fmt = QFormat(8, 6)
    q = np.arange(256, dtype=np.int64)
    codes = bits_to_codes(q, fmt)
    masks = np.arange(256, dtype=np.int64)
    for o in masks:
        a = masks[:, None]
        once = apply_masks_array(codes[None, :], o, a, fmt)
        twice = apply_masks_array(once, o, a, fmt)
        assert np.array_equal(once, twice)
        expect = (q[None, :] & a) | o
        assert np.array_equal(codes_to_bits(once, fmt), expect)
    # two disjoint masks commute (cells have a single polarity)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        bits = int(rng.integers(256))
        o1, o2 = (int(x) for x in rng.integers(0, 256, 2))
        a1 = 0xFF & ~int(rng.integers(256)) | o1
        a2 = 0xFF & ~int(rng.integers(256)) | o2
        w = QWord(bits, fmt)
        ab = apply_masks(apply_masks(w, o1, a1), o2, a2)
        ba = apply_masks(apply_masks(w, o2, a2), o1, a1)
        if (o1 & ~a2) == 0 and (o2 & ~a1) == 0:
            assert ab == ba


def test_codes_bits_roundtrip_8bit():
    fmt = QFormat(8, 6)
    codes = np.arange(-128, 128)
    assert np.array_equal(bits_to_codes(codes_to_bits(codes, fmt), fmt), codes)
    for c in codes:
        assert QWord.from_code(int(c), fmt).code == c


# -- randomized 16- and 22-bit -----------------------------------------------------

wide_formats = st.sampled_from([QFormat(16, 14), QFormat(16, 8), QFormat(22, 20),
                                QFormat(22, 11), QFormat(16, 0)])


@given(fmt=wide_formats, u=st.floats(0, 1, allow_nan=False))
def test_roundtrip_wide(fmt, u):
    w = fmt.min_value + u * (fmt.max_value - fmt.min_value)
    r = quantize(w, fmt)
    assert dequantize(r.qword) + r.eps_q == w
    assert abs(r.eps_q) <= fmt.lsb / 2


@given(fmt=wide_formats, u1=st.floats(0, 1), u2=st.floats(0, 1))
def test_monotone_wide(fmt, u1, u2):
    w1, w2 = sorted(fmt.min_value + u * (fmt.max_value - fmt.min_value) for u in (u1, u2))
    assert dequantize(quantize(w1, fmt).qword) <= dequantize(quantize(w2, fmt).qword)


@given(fmt=wide_formats, data=st.data())
def test_mask_idempotence_wide(fmt, data):
    full = fmt.full_mask
    bits = data.draw(st.integers(0, full))
    o = data.draw(st.integers(0, full))
    a = data.draw(st.integers(0, full))
    q = QWord(bits, fmt)
    once = apply_masks(q, o, a)
    assert apply_masks(once, o, a) == once
    assert once.bits == (bits & a) | o


@given(fmt=wide_formats, x=st.floats(-1e6, 1e6, allow_nan=False))
def test_saturation_wide(fmt, x):
    r = quantize(x, fmt)
    assert fmt.code_min <= r.qword.code <= fmt.code_max
    assert dequantize(r.qword) + r.eps_q == pytest.approx(x, rel=0, abs=1e-9 * max(1, abs(x)))
