"""Radix-2 DIT FFT over bfloat16 with per-stage approximate twiddle products.

Every butterfly multiplies the odd input by its twiddle factor with the
schoolbook 4-multiply / 2-add complex product, each real multiply going
through the approximate multiplier at the stage's level. Additions are
exact bfloat16 adds. Signals may carry leading batch dimensions; the
transform runs along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import apxnum
from ._accel import njit, numba_enabled
from .apxnum import (EnergyLedger, _decode_scalar, _mul_scalar, _round_scalar, add_bits, decode,
                     encode, mul_bits, neg_bits, round_arith, sub_bits)
from .errors import BadLengthError, LengthMismatchError, NonFiniteError, ScheduleMismatchError

PSNR_CAP_DB = 300.0


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    if not is_pow2(n):
        raise BadLengthError(f"length {n} is not a power of two")
    return n.bit_length() - 1


@dataclass(frozen=True)
class ComplexSignal:
    """bfloat16 complex signal(s): bit-pattern arrays ``re`` and ``im``.

    Any shape is accepted; the transforms check the last-axis length.
    """

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.uint16)
        im = np.asarray(self.im, dtype=np.uint16)
        if re.shape != im.shape:
            raise LengthMismatchError(f"re/im shapes differ: {re.shape} vs {im.shape}")
        if re.ndim == 0:
            raise BadLengthError("signal must have at least one axis")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, z) -> "ComplexSignal":
        z = np.asarray(z)
        return cls(encode(z.real), encode(np.imag(z)))

    def to_complex(self) -> np.ndarray:
        return decode(self.re) + 1j * decode(self.im)

    @property
    def n(self) -> int:
        return self.re.shape[-1]

    @property
    def shape(self) -> tuple:
        return self.re.shape

    def conj(self) -> "ComplexSignal":
        return ComplexSignal(self.re, neg_bits(self.im))

    def __eq__(self, other):
        if not isinstance(other, ComplexSignal):
            return NotImplemented
        return np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im)

    __hash__ = None


@dataclass(frozen=True)
class LevelSchedule:
    """One approximation level per FFT stage."""

    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(apxnum.as_level(k) for k in self.levels))

    @classmethod
    def uniform(cls, level: int, n_stages: int) -> "LevelSchedule":
        return cls((level,) * n_stages)

    @classmethod
    def exact(cls, n_stages: int) -> "LevelSchedule":
        return cls.uniform(apxnum.EXACT_LEVEL, n_stages)

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    @property
    def total(self) -> int:
        return sum(self.levels)

    def check(self, n: int) -> None:
        s = log2_exact(n)
        if len(self.levels) != s:
            raise ScheduleMismatchError(
                f"schedule has {len(self.levels)} stages, length-{n} transform needs {s}")


@dataclass(frozen=True)
class PsnrReport:
    psnr_db: float
    mse: float
    peak: float


@lru_cache(maxsize=64)
def _bitrev(n: int) -> np.ndarray:
    s = log2_exact(n)
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(s):
        rev |= ((idx >> b) & 1) << (s - 1 - b)
    return rev


@lru_cache(maxsize=256)
def _twiddles(m: int) -> tuple:
    """bfloat16 twiddles exp(-2*pi*i*k/m), k < m/2, rounded once from double."""
    k = np.arange(m // 2)
    ang = -2.0 * np.pi * k / m
    wr = np.cos(ang)
    wi = np.sin(ang)
    # cos(pi/2) etc. come out as ~1e-17 in double; those are exact zeros
    wr[np.abs(wr) < 1e-12] = 0.0
    wi[np.abs(wi) < 1e-12] = 0.0
    wr_b, wi_b = encode(wr), encode(wi)
    wr_b.flags.writeable = False
    wi_b.flags.writeable = False
    return wr_b, wi_b


@lru_cache(maxsize=64)
def _twiddle_table(n: int) -> tuple:
    """All stages' twiddles back to back; stage ``s`` starts at ``2**s - 1``."""
    stages = range(log2_exact(n))
    wr = np.concatenate([np.zeros(0, np.uint16)] + [_twiddles(2 << s)[0] for s in stages])
    wi = np.concatenate([np.zeros(0, np.uint16)] + [_twiddles(2 << s)[1] for s in stages])
    return wr.astype(np.int64), wi.astype(np.int64)


@njit
def _fin(b):
    return (b & 0x7F80) != 0x7F80


@njit
def _fft_rows(xr, xi, rev, levels, wr_all, wi_all):
    """Fused bit-reversal + butterflies over rows of int64 bit patterns.

    Returns False (leaving the rows partly transformed) as soon as a
    non-finite operand reaches a multiply or an add.
    """
    rows, n = xr.shape
    br_ = np.empty(n, dtype=np.int64)
    bi_ = np.empty(n, dtype=np.int64)
    for r in range(rows):
        for i in range(n):
            br_[i] = xr[r, rev[i]]
            bi_[i] = xi[r, rev[i]]
        for s in range(levels.size):
            half = 1 << s
            m = half << 1
            lvl = levels[s]
            off = half - 1
            for blk in range(0, n, m):
                for k in range(half):
                    a = blk + k
                    b = a + half
                    wr = wr_all[off + k]
                    wi = wi_all[off + k]
                    pr = br_[b]
                    pi = bi_[b]
                    if not (_fin(pr) and _fin(pi)):
                        return False
                    p1 = _mul_scalar(pr, wr, lvl)
                    p2 = _mul_scalar(pi, wi, lvl)
                    p3 = _mul_scalar(pr, wi, lvl)
                    p4 = _mul_scalar(pi, wr, lvl)
                    if not (_fin(p1) and _fin(p2) and _fin(p3) and _fin(p4)):
                        return False
                    tr = _round_scalar(_decode_scalar(p1) - _decode_scalar(p2))
                    ti = _round_scalar(_decode_scalar(p3) + _decode_scalar(p4))
                    ur = br_[a]
                    ui = bi_[a]
                    if not (_fin(tr) and _fin(ti) and _fin(ur) and _fin(ui)):
                        return False
                    fur = _decode_scalar(ur)
                    fui = _decode_scalar(ui)
                    ftr = _decode_scalar(tr)
                    fti = _decode_scalar(ti)
                    br_[a] = _round_scalar(fur + ftr)
                    bi_[a] = _round_scalar(fui + fti)
                    br_[b] = _round_scalar(fur - ftr)
                    bi_[b] = _round_scalar(fui - fti)
        for i in range(n):
            xr[r, i] = br_[i]
            xi[r, i] = bi_[i]
    return True


def _fft_bits_numba(re, im, sched, ledger) -> tuple:
    n = re.shape[-1]
    xr = re.reshape(-1, n).astype(np.int64)
    xi = im.reshape(-1, n).astype(np.int64)
    wr, wi = _twiddle_table(n)
    ok = _fft_rows(xr, xi, _bitrev(n), np.asarray(sched.levels, dtype=np.int64), wr, wi)
    if not ok:
        raise NonFiniteError("operand is NaN or infinite")
    if ledger is not None:
        per_stage = 2 * n * xr.shape[0]
        for level in sched.levels:
            ledger.charge(level, per_stage)
    return (xr.astype(np.uint16).reshape(re.shape), xi.astype(np.uint16).reshape(im.shape))


def _fft_bits(re: np.ndarray, im: np.ndarray, sched: LevelSchedule, ledger) -> tuple:
    if numba_enabled():
        return _fft_bits_numba(re, im, sched, ledger)
    return _fft_bits_numpy(re, im, sched, ledger)


def _fft_bits_numpy(re: np.ndarray, im: np.ndarray, sched: LevelSchedule, ledger) -> tuple:
    n = re.shape[-1]
    lead = re.shape[:-1]
    rev = _bitrev(n)
    xr = re[..., rev].copy()
    xi = im[..., rev].copy()
    for s, level in enumerate(sched.levels):
        half = 1 << s
        m = half << 1
        wr, wi = _twiddles(m)
        vr = xr.reshape(lead + (n // m, m))
        vi = xi.reshape(lead + (n // m, m))
        ur, ui = vr[..., :half], vi[..., :half]
        br, bi = vr[..., half:], vi[..., half:]
        tr = sub_bits(mul_bits(br, wr, level, ledger), mul_bits(bi, wi, level, ledger))
        ti = add_bits(mul_bits(br, wi, level, ledger), mul_bits(bi, wr, level, ledger))
        top_r, top_i = add_bits(ur, tr), add_bits(ui, ti)
        bot_r, bot_i = sub_bits(ur, tr), sub_bits(ui, ti)
        vr[..., :half], vi[..., :half] = top_r, top_i
        vr[..., half:], vi[..., half:] = bot_r, bot_i
    return xr, xi


def _checked(x: ComplexSignal, sched) -> LevelSchedule:
    if not isinstance(sched, LevelSchedule):
        sched = LevelSchedule(tuple(sched))
    sched.check(x.n)
    return sched


def ax_fft(x: ComplexSignal, sched, ledger: EnergyLedger | None = None) -> ComplexSignal:
    """Approximate DFT along the last axis.

    Raises:
        BadLengthError: length not a power of two.
        ScheduleMismatchError: ``len(sched) != log2(n)``.
    """
    sched = _checked(x, sched)
    return ComplexSignal(*_fft_bits(x.re, x.im, sched, ledger))


def ax_ifft(X: ComplexSignal, sched, ledger: EnergyLedger | None = None) -> ComplexSignal:
    """Approximate inverse DFT as ``conj(FFT(conj(X))) / n``.

    The ``1/n`` scaling is a power-of-two exponent shift, exact apart from
    flush-to-zero, and is not charged to the ledger.
    """
    sched = _checked(X, sched)
    yr, yi = _fft_bits(X.re, neg_bits(X.im), sched, ledger)
    scale = 1.0 / X.n
    return ComplexSignal(round_arith(decode(yr) * scale), round_arith(-decode(yi) * scale))


def fft_exact(x, axis: int = -1) -> np.ndarray:
    """Double-precision reference DFT (numpy's pocketfft) with length checks."""
    if isinstance(x, ComplexSignal):
        x = x.to_complex()
    x = np.asarray(x)
    log2_exact(x.shape[axis])
    return np.fft.fft(x.astype(np.complex128), axis=axis)


def ifft_exact(x, axis: int = -1) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        x = x.to_complex()
    x = np.asarray(x)
    log2_exact(x.shape[axis])
    return np.fft.ifft(x.astype(np.complex128), axis=axis)


def _as_complex(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return x.to_complex()
    return np.asarray(x, dtype=np.complex128)


def psnr_values(reference, approx) -> tuple:
    """Row-wise PSNR along the last axis: ``(psnr_db, mse, peak)`` arrays."""
    ref = _as_complex(reference)
    app = _as_complex(approx)
    if ref.shape != app.shape:
        raise LengthMismatchError(f"shapes differ: {ref.shape} vs {app.shape}")
    mse = np.mean(np.abs(ref - app) ** 2, axis=-1)
    peak = np.max(np.abs(ref), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10.0 * np.log10(peak**2 / mse)
    db = np.where(mse == 0, PSNR_CAP_DB, db)
    return db, mse, peak


def psnr(reference, approx) -> PsnrReport:
    """PSNR in dB of ``approx`` against ``reference`` (complex error magnitude).

    Capped at 300 dB when the two agree exactly.
    """
    ref = _as_complex(reference).ravel()
    app = _as_complex(approx).ravel()
    if ref.shape != app.shape:
        raise LengthMismatchError(f"lengths differ: {ref.size} vs {app.size}")
    db, mse, peak = psnr_values(ref, app)
    return PsnrReport(float(db), float(mse), float(peak))
