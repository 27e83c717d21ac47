"""Exact Shapley values by subset enumeration.

Model outputs for all ``2**n`` coalitions are evaluated once (features in
the coalition come from the input, the rest from the baseline). Each
marginal contribution is weighted through the approximate multiplier (in
the limb-split form of :func:`apxnum.split_product`) and the weighted terms are summed with :func:`math.fsum`, which is exact and
therefore independent of how the subsets were split across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import apxnum
from .apxnum import EnergyLedger
from .errors import (FeatureInSubsetError, OutOfRangeError, ShapeMismatchError,
                     TooManyFeaturesError)
from .parexec import partition
from .tinymodel import TinyModel, _as_input, forward

MAX_FEATURES = 12


@dataclass(frozen=True)
class ShapleyConfig:
    """``groups`` optionally maps each player to a list of input indices;
    by default every input scalar is its own player."""

    level: int = apxnum.EXACT_LEVEL
    workers: int = 1
    baseline: np.ndarray | None = None
    class_index: int = 0
    groups: tuple | None = None
    max_features: int = MAX_FEATURES

    def __post_init__(self):
        apxnum.as_level(self.level)
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ShapleyResult:
    values: np.ndarray
    efficiency_gap: float
    energy_units: float = 0.0

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "efficiency_gap": float(self.efficiency_gap),
            "energy_units": float(self.energy_units),
        }


def shapley_weight(s_size: int, n: int) -> float:
    """``|S|! (n - |S| - 1)! / n!`` from exact integers."""
    if n < 1 or not 0 <= s_size <= n - 1:
        raise OutOfRangeError(f"subset size {s_size} invalid for n={n}")
    w = Fraction(math.factorial(s_size) * math.factorial(n - s_size - 1), math.factorial(n))
    return float(w)


def _mask(S) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    mask = 0
    for j in S:
        mask |= 1 << int(j)
    return mask


def _groups(n_inputs: int, groups) -> list:
    if groups is None:
        return [[j] for j in range(n_inputs)]
    out = []
    for g in groups:
        idx = [int(v) for v in g]
        if not idx or any(not 0 <= v < n_inputs for v in idx):
            raise ShapeMismatchError(f"feature group {g!r} has indices outside [0, {n_inputs})")
        out.append(idx)
    return out


def _blend(x, xb, groups, mask: int) -> np.ndarray:
    z = xb.copy()
    for p, idx in enumerate(groups):
        if (mask >> p) & 1:
            z[idx] = x[idx]
    return z


def marginal_contribution(m: TinyModel, x, baseline, S, i: int, class_index: int = 0,
                          groups=None) -> float:
    """``f(S + i) - f(S)`` with out-of-coalition features taken from the baseline.

    Raises:
        FeatureInSubsetError: ``i`` is already in ``S``.
    """
    x = _as_input(m, x).reshape(-1)
    xb = _as_input(m, baseline).reshape(-1)
    gr = _groups(x.size, groups)
    mask = _mask(S)
    if (mask >> i) & 1:
        raise FeatureInSubsetError(f"feature {i} is already in the subset")
    with_i = forward(m, _blend(x, xb, gr, mask | (1 << i)))[class_index]
    without = forward(m, _blend(x, xb, gr, mask))[class_index]
    return float(with_i - without)


def coalition_values(m: TinyModel, x, baseline, class_index: int = 0, groups=None) -> np.ndarray:
    """Model output for every coalition bitmask, index = mask."""
    x = _as_input(m, x).reshape(-1)
    xb = _as_input(m, baseline).reshape(-1)
    gr = _groups(x.size, groups)
    return np.array([forward(m, _blend(x, xb, gr, mask))[class_index]
                     for mask in range(1 << len(gr))])


def shapley_from_values(v: np.ndarray) -> np.ndarray:
    """Subset-weighted Shapley values of a game in plain double precision."""
    n = int(np.log2(len(v)))
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        terms = [shapley_weight(bin(S).count("1"), n) * (v[S | bit] - v[S])
                 for S in range(1 << n) if not S & bit]
        phi[i] = math.fsum(terms)
    return phi


def _weighted_terms(v, n, lo, hi, level, ledger) -> list:
    """Approximate weight x contribution products for masks in ``[lo, hi)``.

    Returns one array per feature, in ascending mask order.
    """
    masks = np.arange(lo, hi, dtype=np.int64)
    sizes = np.array([bin(int(S)).count("1") for S in masks], dtype=np.int64)
    table = np.array([shapley_weight(s, n) for s in range(n)])
    out = []
    for i in range(n):
        bit = 1 << i
        S = masks[(masks & bit) == 0]
        if S.size == 0:
            out.append(np.zeros(0))
            continue
        w = table[sizes[(masks & bit) == 0]]
        cb = v[S | bit] - v[S]
        out.append(apxnum.split_product(w, cb, level, ledger))
    return out


def shapley(m: TinyModel, x, cfg: ShapleyConfig | None = None,
            ledger: EnergyLedger | None = None) -> ShapleyResult:
    """Shapley values of every feature (or feature group) of ``x``.

    Raises:
        TooManyFeaturesError: more than ``cfg.max_features`` players.
    """
    cfg = cfg or ShapleyConfig()
    if ledger is None:
        ledger = EnergyLedger()
    xf = _as_input(m, x).reshape(-1)
    xb = np.zeros_like(xf) if cfg.baseline is None else _as_input(m, cfg.baseline).reshape(-1)
    gr = _groups(xf.size, cfg.groups)
    n = len(gr)
    cap = min(int(cfg.max_features), MAX_FEATURES)
    if n > cap:
        raise TooManyFeaturesError(f"{n} features exceed the exact-enumeration cap of {cap}")
    before = ledger.total
    v = coalition_values(m, xf, xb, cfg.class_index, cfg.groups)

    blocks = [b for b in partition(1 << n, int(cfg.workers)) if b[1] > b[0]]
    ledgers = [ledger.fork() for _ in blocks]

    def work(k):
        lo, hi = blocks[k]
        return _weighted_terms(v, n, lo, hi, cfg.level, ledgers[k])

    if len(blocks) == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(work, range(len(blocks))))
    for led in ledgers:
        ledger.merge(led)
    phi = np.array([math.fsum(np.concatenate([p[i] for p in parts])) for i in range(n)])
    gap = abs(math.fsum(phi) - (v[-1] - v[0]))
    return ShapleyResult(phi, float(gap), ledger.total - before)


def select_level(m: TinyModel, xs, cfg: ShapleyConfig, c_t: float = 0.95,
                 P_t: float = 0.9) -> tuple:
    """Lowest weighting level whose Shapley vectors correlate with the exact ones.

    Same acceptance rule as the IG selector: at least ``P_t`` of the inputs
    must reach Pearson correlation ``c_t`` against level 11.
    """
    from .levelopt import optimize_level
    from .xai_ig import pearson

    ref = [shapley(m, x, replace(cfg, level=apxnum.EXACT_LEVEL)).values for x in xs]

    def quality(level):
        return [pearson(shapley(m, x, replace(cfg, level=level)).values, r)
                for x, r in zip(xs, ref)]

    return optimize_level(quality, c_t, P_t)
