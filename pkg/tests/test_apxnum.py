import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxai import apxnum
from approxai.apxnum import (ApproxValue, EnergyLedger, EnergyTable, approx_multiply, bias_report,
                             decode, encode, exact_add, exact_mul_bits, mul_bits, mul_wide,
                             round_arith, split_product)
from approxai.errors import EnergyTableError, LevelError, NonFiniteError
from oracles import (exact_product_bits, float_to_bits, fraction_to_bits, halfmax_pp_product,
                     midpoint_pp_product)

finite_bits = st.integers(0, 0xFFFF).filter(lambda b: (b & 0x7F80) != 0x7F80)
normal_bits = st.integers(0, 0xFFFF).filter(lambda b: 0 < (b & 0x7F80) < 0x7F80)
levels = st.integers(0, 11)


def av(x):
    return ApproxValue.from_float(x)


# --- conversions -----------------------------------------------------------

def test_roundtrip_every_non_nan_pattern():
    bits = np.arange(0x10000, dtype=np.uint32).astype(np.uint16)
    vals = decode(bits)
    keep = ~np.isnan(vals)
    assert np.array_equal(encode(vals[keep]), bits[keep])


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_encode_matches_rational_rne(x):
    assert int(encode(x)) == float_to_bits(x)


@given(st.floats(min_value=-1e30, max_value=1e30, allow_nan=False))
def test_round_arith_matches_rational_rne(x):
    from fractions import Fraction

    expect = fraction_to_bits(-1 if math.copysign(1, x) < 0 else 1, Fraction(abs(x)))
    assert int(round_arith(x)) == expect


def test_encode_ties_go_to_even():
    # 1 + 2**-8 sits halfway between 1 and 1 + 2**-7
    assert int(encode(1.0 + 2.0**-8)) == 0x3F80
    assert int(encode(1.0 + 3 * 2.0**-8)) == 0x3F82


# --- multiplier: the derived example and the cell-level oracle -------------

def test_derived_example_level0_against_partial_product_oracle():
    a, b = av(1.2890625), av(1.828125)
    assert (a.bits, b.bits) == (0x3FA5, 0x3FEA)
    got = approx_multiply(a, b, 0)
    assert got.bits == midpoint_pp_product(a.bits, b.bits, 0)
    assert float(got) == 2.3125


def test_constant_halfmax_compensation_value_is_recorded():
    # the rejected constant-compensation scheme overshoots this example
    a, b = av(1.2890625), av(1.828125)
    assert halfmax_pp_product(a.bits, b.bits, 0) == int(encode(2.484375))
    assert halfmax_pp_product(a.bits, b.bits, 11) == exact_product_bits(a.bits, b.bits)


@pytest.mark.parametrize("level", range(12))
def test_kernel_matches_cell_oracle(level, kernel_path):
    rng = np.random.default_rng(level)
    a = rng.integers(0, 0x10000, 3000).astype(np.uint16)
    b = rng.integers(0, 0x10000, 3000).astype(np.uint16)
    ok = ((a & 0x7F80) != 0x7F80) & ((b & 0x7F80) != 0x7F80)
    a, b = a[ok], b[ok]
    got = mul_bits(a, b, level)
    want = np.array([midpoint_pp_product(int(x), int(y), level) for x, y in zip(a, b)])
    assert np.array_equal(got, want)


@settings(max_examples=300)
@given(finite_bits, finite_bits)
def test_level11_equals_rational_product(a, b):
    assert int(mul_bits(a, b, 11)) == exact_product_bits(a, b)
    assert int(exact_mul_bits(a, b)) == exact_product_bits(a, b)


def test_level11_edges():
    edge = np.array([0x0000, 0x8000, 0x0080, 0x8080, 0x7F7F, 0xFF7F, 0x3F80, 0xBF80, 0x0001,
                     0x807F, 0x4000, 0x3F00], dtype=np.uint16)
    a, b = np.meshgrid(edge, edge)
    got = mul_bits(a.ravel(), b.ravel(), 11)
    want = [exact_product_bits(int(x), int(y)) for x, y in zip(a.ravel(), b.ravel())]
    assert got.tolist() == want


def test_trivial_examples():
    for k in range(12):
        assert float(approx_multiply(av(-7.25), av(0.0), k)) == 0.0
        assert float(approx_multiply(av(0.0), av(123.0), k)) == 0.0
    assert float(approx_multiply(av(1.5), av(2.0), 11)) == 3.0


@given(finite_bits, finite_bits, levels)
def test_commutative(a, b, k):
    assert int(mul_bits(a, b, k)) == int(mul_bits(b, a, k))


@given(normal_bits, normal_bits, levels)
def test_sign_and_error_bound(a, b, k):
    exact = decode(exact_mul_bits(a, b))
    got = decode(mul_bits(a, b, k))
    if exact == 0 or not np.isfinite(exact) or abs(exact) < 2.0**-125 or abs(exact) > 2.0**126:
        return
    assert np.sign(got) == np.sign(exact)
    assert abs(got - exact) / abs(exact) <= 2.0**-3


def test_mean_abs_error_monotone_in_level():
    errs = [np.mean(np.abs(apxnum.relative_errors(k, 20_000, seed=5))) for k in range(12)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[-1] == 0.0


def test_bias_report_examples():
    assert bias_report(11, 100_000) == 0.0
    b0 = bias_report(0, 100_000)
    assert abs(b0) <= 0.01
    assert abs(bias_report(5, 100_000)) <= 0.01
    with pytest.raises(ValueError):
        bias_report(0, 9_999)


def test_subnormal_operands_flush():
    sub = np.uint16(0x0001)
    for k in (0, 11):
        assert int(mul_bits(sub, encode(1e30), k)) == 0
    assert int(mul_bits(np.uint16(0x8001), encode(2.0), 11)) == 0x8000


def test_rejects_non_finite_and_bad_levels():
    with pytest.raises(NonFiniteError):
        approx_multiply(ApproxValue(0x7F80), av(1.0), 3)
    with pytest.raises(NonFiniteError):
        approx_multiply(ApproxValue(0x7FC0), av(1.0), 3)
    for bad in (-1, 12, 2.5, True, "3"):
        with pytest.raises(LevelError):
            approx_multiply(av(1.0), av(1.0), bad)


def test_overflow_and_underflow_of_products():
    big = encode(2.0**100)
    tiny = encode(2.0**-100)
    assert int(mul_bits(big, big, 11)) == 0x7F80
    assert int(mul_bits(tiny, tiny, 11)) == 0x0000


# --- exact addition --------------------------------------------------------

def test_exact_add_examples():
    assert float(exact_add(av(1.0), av(-1.0))) == 0.0
    assert float(exact_add(av(1.0), av(2.0))) == 3.0
    assert float(exact_add(av(1.0), av(2.0**-9))) == 1.0


# --- wide and split products -------------------------------------------------

def test_mul_wide_rounds_to_mul_bits(kernel_path):
    rng = np.random.default_rng(3)
    a = apxnum.sample_normal_operands(5000, rng)
    b = apxnum.sample_normal_operands(5000, rng)
    for k in (0, 4, 11):
        assert np.array_equal(round_arith(mul_wide(a, b, k)), mul_bits(a, b, k))


def test_split_product_accuracy_and_ledger():
    rng = np.random.default_rng(4)
    a = rng.normal(0, 1e3, 500)
    b = rng.normal(0, 1e-2, 500)
    led = EnergyLedger()
    p = split_product(a, b, 11, led)
    assert np.max(np.abs(p - a * b) / np.abs(a * b)) < 1e-11
    assert led.count_by_level[11] == len(apxnum.LIMB_PAIRS) * 500 == 15 * 500


# --- energy ------------------------------------------------------------------

def test_default_table():
    t = EnergyTable()
    assert t.cost(11) == 1.0
    assert t.cost(0) == pytest.approx(0.45 / 1.0)
    assert all(b > a for a, b in zip(t.costs, t.costs[1:]))


@pytest.mark.parametrize("bad", [[1.0] * 12, list(range(11)), [0] + list(range(1, 12)),
                                 [float("nan")] + list(range(1, 12))])
def test_table_validation(bad):
    with pytest.raises(EnergyTableError):
        EnergyTable(tuple(bad))


def test_table_from_config_normalizes():
    t = EnergyTable.from_config({"energy_table": [2 * (k + 1) for k in range(12)]})
    assert t.cost(11) == 1.0 and t.cost(0) == pytest.approx(1 / 12)
    assert EnergyTable.from_config({}) == EnergyTable()


def test_ledger_charge_per_multiply():
    led = EnergyLedger()
    approx_multiply(av(1.0), av(3.0), 4, led)
    mul_bits(np.zeros(10, np.uint16), np.zeros(10, np.uint16), 0, led)
    assert led.count_by_level[4] == 1 and led.count_by_level[0] == 10
    assert led.total == pytest.approx(10 * 0.45 + 0.65)


@given(st.lists(st.tuples(levels, st.integers(0, 10_000)), max_size=40), st.randoms())
def test_ledger_total_consistent_and_merge_order_free(charges, rnd):
    whole = EnergyLedger()
    parts = [EnergyLedger() for _ in range(4)]
    for i, (k, c) in enumerate(charges):
        whole.charge(k, c)
        parts[i % 4].charge(k, c)
    recomputed = math.fsum(int(whole.count_by_level[k]) * whole.table.costs[k] for k in range(12))
    assert whole.total == pytest.approx(recomputed, rel=1e-15, abs=0)
    order = list(range(4))
    rnd.shuffle(order)
    merged = EnergyLedger()
    for i in order:
        merged.merge(parts[i])
    assert merged.total == whole.total
    assert np.array_equal(merged.count_by_level, whole.count_by_level)


def test_merge_rejects_different_tables():
    other = EnergyLedger(EnergyTable(tuple(range(1, 13))))
    with pytest.raises(EnergyTableError):
        EnergyLedger().merge(other)
