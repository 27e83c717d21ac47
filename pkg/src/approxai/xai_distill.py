"""Kernel distillation by spectral division, and occlusion contribution maps.

A response map ``Y`` is modeled as the circular convolution ``X (*) K``.
``K`` is recovered as ``IFFT2(FFT2(Y) / FFT2(X))`` where both 2-D
transforms are pairs of row-parallel approximate 1-D passes. The spectral
division itself is done in double with a small phase-preserving shift on
every denominator. Occluding feature ``i`` (zeroing ``X[i]``) and
re-convolving gives the contribution map ``C = Y - X' (*) K``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import apxnum
from .apxfft import ComplexSignal, LevelSchedule, is_pow2
from .apxnum import EnergyLedger
from .errors import BadLengthError, DegenerateInputError, IndexOutOfBoundsError, ShapeMismatchError
from .parexec import default_workers, fft2

DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class ResponsePair:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2 or X.shape != Y.shape:
            raise ShapeMismatchError(f"X and Y must be equal-shape 2-D maps, got {X.shape} and {Y.shape}")
        if not (is_pow2(X.shape[0]) and is_pow2(X.shape[1])):
            raise BadLengthError(f"map sides must be powers of two, got {X.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ShapeMismatchError("maps contain non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def shape(self) -> tuple:
        return self.X.shape


@dataclass(frozen=True)
class DistilledKernel:
    K: np.ndarray
    eps: float


@dataclass(frozen=True)
class ContributionFactor:
    map: np.ndarray
    scalar: float


def schedules_for(shape, sched) -> tuple:
    """Resolve ``sched`` into (row-pass, column-pass) schedules.

    ``sched`` may be an int (uniform level), one :class:`LevelSchedule`
    used for both axes, or a pair of schedules.
    """
    rows, cols = shape
    s_row, s_col = cols.bit_length() - 1, rows.bit_length() - 1
    if isinstance(sched, (int, np.integer)):
        return LevelSchedule.uniform(int(sched), s_row), LevelSchedule.uniform(int(sched), s_col)
    if isinstance(sched, LevelSchedule) or (sched and not isinstance(sched[0], (LevelSchedule, tuple, list))):
        s = sched if isinstance(sched, LevelSchedule) else LevelSchedule(tuple(sched))
        return s, s
    a, b = sched
    a = a if isinstance(a, LevelSchedule) else LevelSchedule(tuple(a))
    b = b if isinstance(b, LevelSchedule) else LevelSchedule(tuple(b))
    return a, b


def _fft2(z, scheds, workers, ledger, inverse=False) -> np.ndarray:
    sig = ComplexSignal.from_complex(np.asarray(z, dtype=np.complex128))
    return fft2(sig, scheds[0], scheds[1], workers, ledger, inverse=inverse).to_complex()


def circular_convolve(X, K) -> np.ndarray:
    """Reference circular 2-D convolution in double (via numpy FFT)."""
    return np.real(np.fft.ifft2(np.fft.fft2(X) * np.fft.fft2(K)))


def distill(pair: ResponsePair, sched=apxnum.EXACT_LEVEL, workers: int | None = None,
            eps: float = DEFAULT_EPS, ledger: EnergyLedger | None = None) -> DistilledKernel:
    """Recover ``K`` with ``X (*) K ~= Y``.

    Every spectral bin of ``X`` is shifted away from zero by
    ``eps * max|FFT2(X)|`` along its own phase (bins that are exactly zero
    get the shift as a real number) before dividing.

    Raises:
        DegenerateInputError: ``X`` is identically zero.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not np.any(pair.X):
        raise DegenerateInputError("X is identically zero")
    scheds = schedules_for(pair.shape, sched)
    workers = workers or default_workers(max(pair.shape))
    FX = _fft2(pair.X, scheds, workers, ledger)
    FY = _fft2(pair.Y, scheds, workers, ledger)
    mag = np.abs(FX)
    guard = eps * mag.max()
    if guard == 0:
        # every bin rounded away (e.g. subnormal input); fall back to an absolute shift
        guard = eps
    phase = np.where(mag > 0, FX / np.where(mag > 0, mag, 1.0), 1.0)
    D = FY / (FX + guard * phase)
    K = _fft2(D, scheds, workers, ledger, inverse=True)
    return DistilledKernel(np.real(K), float(guard))


def approx_convolve(X, K, sched=apxnum.EXACT_LEVEL, workers: int | None = None,
                    ledger: EnergyLedger | None = None) -> np.ndarray:
    """Circular convolution through the approximate 2-D FFT; spectra multiplied in double."""
    X = np.asarray(X, dtype=np.float64)
    scheds = schedules_for(X.shape, sched)
    workers = workers or default_workers(max(X.shape))
    FX = _fft2(X, scheds, workers, ledger)
    FK = _fft2(K, scheds, workers, ledger)
    return np.real(_fft2(FX * FK, scheds, workers, ledger, inverse=True))


def occlude(X, index) -> np.ndarray:
    X = np.array(X, dtype=np.float64)
    idx = tuple(int(i) for i in np.atleast_1d(index))
    if len(idx) == 1:
        idx = np.unravel_index(idx[0], X.shape) if 0 <= idx[0] < X.size else (X.size,)
    if len(idx) != X.ndim or any(not 0 <= i < s for i, s in zip(idx, X.shape)):
        raise IndexOutOfBoundsError(f"occluded index {index!r} outside map of shape {X.shape}")
    X[idx] = 0.0
    return X


def contribution_factor(pair: ResponsePair, kernel: DistilledKernel, occluded_index,
                        sched=apxnum.EXACT_LEVEL, workers: int | None = None,
                        ledger: EnergyLedger | None = None) -> ContributionFactor:
    """``C = Y - X' (*) K`` with ``X'`` = ``X`` with one entry zeroed.

    ``occluded_index`` is a flat index or a ``(row, col)`` pair.

    Raises:
        IndexOutOfBoundsError: index outside ``X``.
    """
    Xp = occlude(pair.X, occluded_index)
    z = approx_convolve(Xp, kernel.K, sched, workers, ledger)
    C = pair.Y - z
    return ContributionFactor(C, float(np.mean(np.abs(C))))


def contribution_scores(pair: ResponsePair, kernel: DistilledKernel, sched=apxnum.EXACT_LEVEL,
                        workers: int | None = None, ledger: EnergyLedger | None = None) -> np.ndarray:
    """Scalar contribution factor for every position of ``X`` (same shape as ``X``)."""
    scores = np.empty(pair.X.size)
    for i in range(pair.X.size):
        scores[i] = contribution_factor(pair, kernel, i, sched, workers, ledger).scalar
    return scores.reshape(pair.X.shape)


def relative_l2(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
