"""Approximate bfloat16 multiplier emulation with energy accounting.

Values are carried as ``uint16`` bit patterns (1 sign, 8 exponent bits with
bias 127, 7 mantissa bits). Arithmetic results are rounded to 8 significant
bits with round-to-nearest-even and flushed to signed zero below the normal
range; subnormal operands are flushed to zero before use.

Multiplier model
----------------
Both significands are 8-bit integers in [128, 255]. The smaller one drives
the rows of the partial-product array (row ``j`` is the larger significand
shifted by ``j`` when bit ``j`` of the smaller is set); ordering the
operands this way makes the unit commutative and keeps a multiply by a
power of two unbiased. At level ``k`` the truncation depth is ``c = 11 - k``:
in row ``j`` the multiplicand mantissa bits below ``m = min(c - j, 7)``
(the partial products in columns ``< c``; the hardwired hidden bit always
survives) are dropped and replaced by ``2**(m - 1)``, the midpoint of the
dropped range. The compensated sum is then normalized and rounded like an
exact product. Level 11 drops nothing and is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, numba_enabled
from .errors import EnergyTableError, LevelError, NonFiniteError

N_LEVELS = 12
EXACT_LEVEL = 11
MAX_LEVEL = 11

SIGN_MASK = 0x8000
EXP_MASK = 0x7F80
MANT_MASK = 0x007F

BF16_ZERO = 0x0000
BF16_ONE = 0x3F80
BF16_MIN_NORMAL = 0x0080
BF16_MAX_FINITE = 0x7F7F
BF16_INF = 0x7F80

_MIN_NORMAL = 2.0**-126
_OVERFLOW = 2.0**128


def as_level(k) -> int:
    """Validate an approximation level and return it as ``int``."""
    if isinstance(k, (bool, np.bool_)):
        raise LevelError(f"approximation level must be an integer, got {k!r}")
    try:
        ki = int(k)
    except (TypeError, ValueError):
        raise LevelError(f"approximation level must be an integer, got {k!r}") from None
    if ki != k or not 0 <= ki <= MAX_LEVEL:
        raise LevelError(f"approximation level must be in [0, {MAX_LEVEL}], got {k!r}")
    return ki


# ----------------------------------------------------------------------------
# Conversions


def encode(x) -> np.ndarray:
    """Convert floats to bfloat16 bit patterns, IEEE round-to-nearest-even.

    Subnormal results are kept (this is a format conversion, not arithmetic).
    NaN maps to the canonical quiet NaN ``0x7FC0``.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape, dtype=np.uint16)
    nan = np.isnan(x)
    xs = np.where(nan, 0.0, x)
    m, e = np.frexp(xs)
    # frexp: |m| in [0.5, 1), so |m| * 256 lands in [128, 256)
    sub = e < -125
    e_eff = np.where(sub, -125, e)
    r = np.rint(np.ldexp(m, 8 + (e - e_eff)))
    with np.errstate(over="ignore"):
        val = np.ldexp(r, e_eff - 8)
        f32 = val.astype(np.float32)
    out[...] = (f32.view(np.uint32) >> 16).astype(np.uint16)
    out[nan] = 0x7FC0
    return out


def decode(bits) -> np.ndarray:
    """Bit patterns to float64 (exact)."""
    b = np.asarray(bits, dtype=np.uint16).astype(np.uint32) << 16
    with np.errstate(invalid="ignore"):  # signalling-NaN patterns
        return b.view(np.float32).astype(np.float64)


def round_arith(x) -> np.ndarray:
    """Round float64 results to bfloat16 the way the arithmetic units do.

    8 significant bits, round-to-nearest-even with unbounded exponent, then
    flush-to-zero below ``2**-126`` and overflow to infinity.
    """
    x = np.asarray(x, dtype=np.float64)
    m, e = np.frexp(x)
    val = np.ldexp(np.rint(m * 256.0), e - 8)
    a = np.abs(val)
    val = np.where(a < _MIN_NORMAL, np.copysign(0.0, x), val)
    val = np.where(a >= _OVERFLOW, np.copysign(np.inf, x), val)
    return (val.astype(np.float32).view(np.uint32) >> 16).astype(np.uint16)


def quantize(x) -> np.ndarray:
    """Round floats onto the arithmetic bfloat16 grid and return float64."""
    return decode(round_arith(x))


def is_finite_bits(bits) -> np.ndarray:
    return (np.asarray(bits, dtype=np.uint16) & EXP_MASK) != EXP_MASK


def _check_finite(*arrays) -> None:
    for arr in arrays:
        if not np.all(is_finite_bits(arr)):
            raise NonFiniteError("operand is NaN or infinite")


@dataclass(frozen=True)
class ApproxValue:
    """A single bfloat16 value held by its bit pattern."""

    bits: int

    def __post_init__(self):
        if not 0 <= int(self.bits) <= 0xFFFF:
            raise ValueError(f"bfloat16 pattern out of range: {self.bits!r}")
        object.__setattr__(self, "bits", int(self.bits))

    @classmethod
    def from_float(cls, x: float) -> "ApproxValue":
        return cls(int(encode(x)))

    def __float__(self) -> float:
        return float(decode(self.bits))

    def __repr__(self) -> str:
        return f"ApproxValue(0x{self.bits:04X} = {float(self)!r})"


# ----------------------------------------------------------------------------
# Energy


def _default_costs() -> tuple:
    return tuple(0.45 + 0.05 * k for k in range(N_LEVELS))


@dataclass(frozen=True)
class EnergyTable:
    """Energy units per multiply, indexed by level.

    Costs must be positive and strictly increasing; they are normalized so
    the exact level costs 1.0.
    """

    costs: tuple = field(default_factory=_default_costs)

    def __post_init__(self):
        c = tuple(float(v) for v in self.costs)
        if len(c) != N_LEVELS:
            raise EnergyTableError(f"energy table needs {N_LEVELS} entries, got {len(c)}")
        if not all(math.isfinite(v) and v > 0 for v in c):
            raise EnergyTableError("energy costs must be finite and positive")
        if any(b <= a for a, b in zip(c, c[1:])):
            raise EnergyTableError("energy costs must be strictly increasing in level")
        top = c[-1]
        object.__setattr__(self, "costs", tuple(v / top for v in c))

    @classmethod
    def from_config(cls, cfg: dict | None) -> "EnergyTable":
        if not cfg or cfg.get("energy_table") is None:
            return cls()
        return cls(tuple(cfg["energy_table"]))

    def cost(self, level) -> float:
        return self.costs[as_level(level)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.costs, dtype=np.float64)


class EnergyLedger:
    """Accumulated multiply counts per level.

    Only integer counts are stored; ``total`` is derived from them in a fixed
    order, so merged ledgers agree exactly regardless of merge order.
    """

    def __init__(self, table: EnergyTable | None = None):
        self.table = table if table is not None else EnergyTable()
        self.count_by_level = np.zeros(N_LEVELS, dtype=np.int64)

    def charge(self, level, count: int = 1) -> None:
        if count < 0:
            raise ValueError("count must be non-negative")
        self.count_by_level[as_level(level)] += int(count)

    @property
    def total(self) -> float:
        t = 0.0
        for k in range(N_LEVELS):
            t += float(self.count_by_level[k]) * self.table.costs[k]
        return t

    @property
    def multiplies(self) -> int:
        return int(self.count_by_level.sum())

    def merge(self, other: "EnergyLedger") -> "EnergyLedger":
        if other.table != self.table:
            raise EnergyTableError("cannot merge ledgers built on different energy tables")
        self.count_by_level += other.count_by_level
        return self

    def fork(self) -> "EnergyLedger":
        """Empty ledger sharing this ledger's table (per-worker use)."""
        return EnergyLedger(self.table)

    def copy(self) -> "EnergyLedger":
        led = EnergyLedger(self.table)
        led.count_by_level[:] = self.count_by_level
        return led

    def to_dict(self) -> dict:
        return {
            "energy_units": self.total,
            "multiplies": self.multiplies,
            "count_by_level": [int(v) for v in self.count_by_level],
        }

    def __repr__(self) -> str:
        return f"EnergyLedger(total={self.total!r}, multiplies={self.multiplies})"


# ----------------------------------------------------------------------------
# Multiplier kernels


@njit
def _mul_scalar(a, b, level):
    sign = (a ^ b) & 0x8000
    ea = (a >> 7) & 0xFF
    eb = (b >> 7) & 0xFF
    if ea == 0 or eb == 0:
        return sign
    ma = (a & 0x7F) | 0x80
    mb = (b & 0x7F) | 0x80
    lo = min(ma, mb)
    hi = max(ma, mb)
    c = 11 - level
    # q = 2 * (compensated significand product)
    q = 0
    for j in range(8):
        if (lo >> j) & 1:
            m = min(max(c - j, 0), 7)
            if m == 0:
                q += (2 * hi) << j
            else:
                q += (2 * (hi & ~((1 << m) - 1)) + (1 << m)) << j
    nbits = 0
    t = q
    while t > 0:
        nbits += 1
        t >>= 1
    shift = nbits - 8
    r = q >> shift
    rem = q & ((1 << shift) - 1)
    half = 1 << (shift - 1)
    if rem > half or (rem == half and (r & 1) == 1):
        r += 1
    if r == 256:
        r = 128
        shift += 1
    # value = r * 2**(shift + ea + eb - 269); biased exponent below
    e = shift + ea + eb - 135
    if e <= 0:
        return sign
    if e >= 255:
        return sign | 0x7F80
    return sign | (e << 7) | (r & 0x7F)


@njit
def _decode_scalar(b):
    """Bits to float64 with subnormals flushed to signed zero."""
    e = (b >> 7) & 0xFF
    neg = (b & 0x8000) != 0
    if e == 0:
        return -0.0 if neg else 0.0
    if e == 255:
        return -math.inf if neg else math.inf
    v = math.ldexp(float((b & 0x7F) | 0x80), e - 134)
    return -v if neg else v


@njit
def _round_scalar(x):
    """Scalar twin of :func:`round_arith`."""
    neg = math.copysign(1.0, x) < 0
    sign = 0x8000 if neg else 0
    if x == 0.0:
        return sign
    if math.isinf(x):
        return sign | 0x7F80
    m, e = math.frexp(abs(x))
    t = m * 256.0
    r = math.floor(t)
    d = t - r
    if d > 0.5 or (d == 0.5 and r % 2 == 1):
        r += 1
    r = int(r)
    if r == 256:
        r = 128
        e += 1
    be = e + 126
    if be <= 0:
        return sign
    if be >= 255:
        return sign | 0x7F80
    return sign | (be << 7) | (r & 0x7F)


@njit
def _mul_loop(a, b, level, out):
    for i in range(a.size):
        out[i] = _mul_scalar(np.int64(a[i]), np.int64(b[i]), level)
    return out


def _mul_vec(a: np.ndarray, b: np.ndarray, level: int) -> np.ndarray:
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    sign = (a ^ b) & SIGN_MASK
    ea = (a >> 7) & 0xFF
    eb = (b >> 7) & 0xFF
    ma = (a & MANT_MASK) | 0x80
    mb = (b & MANT_MASK) | 0x80
    lo = np.minimum(ma, mb)
    hi = np.maximum(ma, mb)
    c = EXACT_LEVEL - level
    q = np.zeros_like(ma)
    for j in range(8):
        m = min(max(c - j, 0), 7)
        fill = (1 << m) if m else 0
        q += ((lo >> j) & 1) * ((2 * (hi & ~((1 << m) - 1)) + fill) << j)
    with np.errstate(over="ignore"):
        val = np.ldexp(q.astype(np.float64), (ea + eb - 269).astype(np.int32))
        val = np.where(sign != 0, -val, val)
        out = round_arith(val)
    zero = (ea == 0) | (eb == 0)
    out[zero] = sign[zero].astype(np.uint16)
    return out


@njit
def _mul_wide_scalar(a, b, level):
    ea = (a >> 7) & 0xFF
    eb = (b >> 7) & 0xFF
    if ea == 0 or eb == 0:
        return 0.0
    ma = (a & 0x7F) | 0x80
    mb = (b & 0x7F) | 0x80
    lo = min(ma, mb)
    hi = max(ma, mb)
    c = 11 - level
    q = 0
    for j in range(8):
        if (lo >> j) & 1:
            m = min(max(c - j, 0), 7)
            if m == 0:
                q += (2 * hi) << j
            else:
                q += (2 * (hi & ~((1 << m) - 1)) + (1 << m)) << j
    v = math.ldexp(float(q), ea + eb - 269)
    if (a ^ b) & 0x8000:
        return -v
    return v


@njit
def _mul_wide_loop(a, b, level, out):
    for i in range(a.size):
        out[i] = _mul_wide_scalar(np.int64(a[i]), np.int64(b[i]), level)
    return out


def _mul_wide_vec(a: np.ndarray, b: np.ndarray, level: int) -> np.ndarray:
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    ea = (a >> 7) & 0xFF
    eb = (b >> 7) & 0xFF
    ma = (a & MANT_MASK) | 0x80
    mb = (b & MANT_MASK) | 0x80
    lo = np.minimum(ma, mb)
    hi = np.maximum(ma, mb)
    c = EXACT_LEVEL - level
    q = np.zeros_like(ma)
    for j in range(8):
        m = min(max(c - j, 0), 7)
        fill = (1 << m) if m else 0
        q += ((lo >> j) & 1) * ((2 * (hi & ~((1 << m) - 1)) + fill) << j)
    val = np.ldexp(q.astype(np.float64), (ea + eb - 269).astype(np.int32))
    val = np.where(((a ^ b) & SIGN_MASK) != 0, -val, val)
    return np.where((ea == 0) | (eb == 0), 0.0, val)


def mul_bits(a, b, level, ledger: EnergyLedger | None = None) -> np.ndarray:
    """Elementwise approximate product of bit-pattern arrays (broadcasting)."""
    level = as_level(level)
    a, b = np.broadcast_arrays(np.asarray(a, dtype=np.uint16), np.asarray(b, dtype=np.uint16))
    _check_finite(a, b)
    if numba_enabled():
        flat = _mul_loop(np.ascontiguousarray(a).ravel(), np.ascontiguousarray(b).ravel(),
                         level, np.empty(a.size, dtype=np.uint16))
        out = flat.reshape(a.shape)
    else:
        out = _mul_vec(a, b, level)
    if ledger is not None:
        ledger.charge(level, a.size)
    return out


def mul_wide(a, b, level, ledger: EnergyLedger | None = None) -> np.ndarray:
    """Approximate product without the final bfloat16 rounding.

    Returns the compensated significand product as float64 (exact: it has at
    most 18 significant bits). This is the multiplier output that a
    multiply-accumulate array feeds into its wide accumulator. Zero and
    subnormal operands give +0.0.
    """
    level = as_level(level)
    a, b = np.broadcast_arrays(np.asarray(a, dtype=np.uint16), np.asarray(b, dtype=np.uint16))
    _check_finite(a, b)
    if numba_enabled():
        flat = _mul_wide_loop(np.ascontiguousarray(a).ravel(), np.ascontiguousarray(b).ravel(),
                              level, np.empty(a.size, dtype=np.float64))
        out = flat.reshape(a.shape)
    else:
        out = _mul_wide_vec(a, b, level)
    if ledger is not None:
        ledger.charge(level, a.size)
    return out


def exact_mul_bits(a, b) -> np.ndarray:
    """Reference bfloat16 product through float64 (no ledger, no kernel)."""
    a = np.asarray(a, dtype=np.uint16)
    b = np.asarray(b, dtype=np.uint16)
    _check_finite(a, b)
    fa = decode(np.where(is_subnormal(a), a & SIGN_MASK, a))
    fb = decode(np.where(is_subnormal(b), b & SIGN_MASK, b))
    return round_arith(fa * fb)


def is_subnormal(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint16)
    return ((bits & EXP_MASK) == 0) & ((bits & MANT_MASK) != 0)


def add_bits(a, b) -> np.ndarray:
    """Exact bfloat16 addition (round-to-nearest-even, FTZ) of bit arrays."""
    a = np.asarray(a, dtype=np.uint16)
    b = np.asarray(b, dtype=np.uint16)
    _check_finite(a, b)
    fa = decode(np.where(is_subnormal(a), a & SIGN_MASK, a))
    fb = decode(np.where(is_subnormal(b), b & SIGN_MASK, b))
    return round_arith(fa + fb)


def neg_bits(a) -> np.ndarray:
    return np.asarray(a, dtype=np.uint16) ^ np.uint16(SIGN_MASK)


def sub_bits(a, b) -> np.ndarray:
    return add_bits(a, neg_bits(b))


def _unwrap(v):
    if isinstance(v, ApproxValue):
        return np.uint16(v.bits), True
    return v, False


def approx_multiply(a, b, k, ledger: EnergyLedger | None = None):
    """Approximate bfloat16 product at level ``k``.

    ``a`` and ``b`` are :class:`ApproxValue` scalars or ``uint16`` bit-pattern
    arrays. Scalars in give a scalar out. The ledger, if given, is charged
    one multiply at ``cost(k)`` per element.

    Raises:
        NonFiniteError: an operand is NaN or infinite.
        LevelError: ``k`` is outside [0, 11].
    """
    a, sa = _unwrap(a)
    b, sb = _unwrap(b)
    out = mul_bits(a, b, k, ledger)
    if sa and sb:
        return ApproxValue(int(out))
    return out


def exact_add(a, b):
    """bfloat16 sum with round-to-nearest-even. Same calling convention as
    :func:`approx_multiply`."""
    a, sa = _unwrap(a)
    b, sb = _unwrap(b)
    out = add_bits(a, b)
    if sa and sb:
        return ApproxValue(int(out))
    return out


def sample_normal_operands(n: int, rng: np.random.Generator, exp_span: int = 30) -> np.ndarray:
    """Random normal-range bit patterns with uniform mantissas.

    Exponent fields stay within ``127 +/- exp_span`` so products of two
    samples never leave the normal range.
    """
    sign = rng.integers(0, 2, n, dtype=np.uint16) << 15
    exp = rng.integers(127 - exp_span, 127 + exp_span + 1, n).astype(np.uint16) << 7
    mant = rng.integers(0, 128, n, dtype=np.uint16)
    return (sign | exp | mant).astype(np.uint16)


def relative_errors(k, trials: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = sample_normal_operands(trials, rng)
    b = sample_normal_operands(trials, rng)
    exact = decode(exact_mul_bits(a, b))
    approx = decode(mul_bits(a, b, k))
    return (approx - exact) / exact


def bias_report(k, trials: int = 100_000, seed: int = 0) -> float:
    """Mean signed relative error of level ``k`` against the exact product."""
    if trials < 10_000:
        raise ValueError("bias_report needs at least 10^4 trials")
    return float(np.mean(relative_errors(as_level(k), trials, seed)))


# ----------------------------------------------------------------------------
# Multi-limb products

LIMBS = 5
# limb pairs kept in a split product; the dropped pairs sit below 2**-40
LIMB_PAIRS = tuple((i, j) for i in range(LIMBS) for j in range(LIMBS) if i + j < LIMBS)


def split_limbs(x, limbs: int = LIMBS) -> np.ndarray:
    """Split float64 values into ``limbs`` bfloat16 parts, most significant first.

    ``sum(decode(parts))`` reproduces ``x`` to about ``2**(-8 * limbs)``
    relative (less for values near the bottom of the normal range, where
    the lower parts flush to zero).
    """
    x = np.asarray(x, dtype=np.float64)
    parts = np.empty((limbs,) + x.shape, dtype=np.uint16)
    rest = x.copy()
    for i in range(limbs):
        parts[i] = round_arith(rest)
        rest = rest - decode(parts[i])
    return parts


def split_product(a, b, level, ledger: EnergyLedger | None = None) -> np.ndarray:
    """Elementwise product of float64 arrays through the approximate multiplier.

    Each operand is split into five bfloat16 limbs; the fifteen leading
    limb products go through :func:`mul_wide` at ``level`` (fifteen ledgered
    multiplies per element) and are summed in double in a fixed order. At
    level 11 the result is accurate to about ``2**-40`` relative, enough for
    the ill-conditioned inverse Vandermonde products.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFiniteError("operand is NaN or infinite")
    pa = split_limbs(a)
    pb = split_limbs(b)
    acc = np.zeros(a.shape, dtype=np.float64)
    for i, j in LIMB_PAIRS:
        acc += mul_wide(pa[i], pb[j], level, ledger)
    return acc
