"""Approximation-level selection.

Minimize the sum of per-stage levels subject to: for at least a fraction
``P_t`` of ``s`` sample signals, PSNR against the double-precision FFT is
at least ``p_t`` dB and the transform's energy is at most ``e_t`` units.
Small stage counts are searched exhaustively; larger ones by greedy
descent from the exact schedule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import apxnum
from .apxfft import ComplexSignal, LevelSchedule, ax_fft, fft_exact, log2_exact, psnr_values
from .apxnum import EnergyLedger, EnergyTable
from .errors import EmptySamplesError, InfeasibleError, ScheduleMismatchError

MAX_EXHAUSTIVE_STAGES = 4


@dataclass(frozen=True)
class OptConstraints:
    p_t: float
    e_t: float = math.inf
    P_t: float = 0.9
    s: int = 100

    def __post_init__(self):
        if not 0.0 <= self.P_t <= 1.0:
            raise ValueError(f"P_t must be in [0, 1], got {self.P_t}")
        if int(self.s) < 1:
            raise ValueError("s must be >= 1")
        if not math.isfinite(self.p_t):
            raise ValueError("p_t must be finite")
        if not self.e_t > 0:
            raise ValueError("e_t must be positive")


@dataclass(frozen=True)
class OptResult:
    schedule: LevelSchedule
    objective: int
    feasible_fraction: float
    mean_psnr: float
    mean_energy: float
    evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "schedule": list(self.schedule.levels),
            "objective": self.objective,
            "feasible_fraction": self.feasible_fraction,
            "mean_psnr": self.mean_psnr,
            "mean_energy": self.mean_energy,
            "evaluations": self.evaluations,
        }


def make_samples(n: int, s: int, seed: int) -> ComplexSignal:
    """``s`` real signals of length ``n``, uniform in [-1, 1], as one batch."""
    log2_exact(n)
    rng = np.random.default_rng(seed)
    return ComplexSignal.from_complex(rng.uniform(-1.0, 1.0, (s, n)))


class SampleSet:
    """A batch of sample signals with their double-precision spectra cached."""

    def __init__(self, samples, table: EnergyTable | None = None):
        if isinstance(samples, ComplexSignal):
            sig = samples
        else:
            samples = list(samples)
            if not samples:
                raise EmptySamplesError("no sample signals")
            lengths = {smp.n for smp in samples}
            if len(lengths) != 1:
                raise ScheduleMismatchError(f"samples have mixed lengths {sorted(lengths)}")
            sig = ComplexSignal(np.stack([smp.re.reshape(-1) for smp in samples]),
                                np.stack([smp.im.reshape(-1) for smp in samples]))
        if sig.re.ndim == 1:
            sig = ComplexSignal(sig.re[None, :], sig.im[None, :])
        if sig.re.shape[0] == 0:
            raise EmptySamplesError("no sample signals")
        self.signals = sig
        self.reference = fft_exact(sig)
        self.table = table or EnergyTable()

    @property
    def count(self) -> int:
        return self.signals.re.shape[0]

    @property
    def n(self) -> int:
        return self.signals.n

    @property
    def n_stages(self) -> int:
        return log2_exact(self.n)

    def stage_energy(self, level: int) -> float:
        """Energy of one stage of one transform at ``level``."""
        return 2 * self.n * self.table.cost(level)

    def predicted_energy(self, sched) -> float:
        return sum(self.stage_energy(k) for k in sched)


def evaluate_schedule(sched, samples, constraints: OptConstraints,
                      table: EnergyTable | None = None) -> tuple:
    """Run every sample at ``sched``; return ``(feasible_fraction, mean_psnr, mean_energy)``.

    A sample is feasible when its PSNR is at least ``p_t`` and its ledgered
    energy at most ``e_t``.

    Raises:
        ScheduleMismatchError: schedule length vs sample length.
        EmptySamplesError: no samples.
    """
    ss = samples if isinstance(samples, SampleSet) else SampleSet(samples, table)
    sched = sched if isinstance(sched, LevelSchedule) else LevelSchedule(tuple(sched))
    sched.check(ss.n)
    ledger = EnergyLedger(ss.table)
    out = ax_fft(ss.signals, sched, ledger)
    db, _, _ = psnr_values(ss.reference, out)
    energy = ledger.total / ss.count
    ok = (db >= constraints.p_t) & (energy <= constraints.e_t)
    return float(np.mean(ok)), float(np.mean(db)), float(energy)


def _feasible(frac: float, constraints: OptConstraints) -> bool:
    return frac >= constraints.P_t


def _schedules_by_sum(n_stages: int):
    """All schedules ordered by level sum, then lexicographically."""
    levels = range(apxnum.N_LEVELS)
    for total in range(apxnum.MAX_LEVEL * n_stages + 1):
        for combo in itertools.product(levels, repeat=n_stages):
            if sum(combo) == total:
                yield combo


def optimize_exhaustive(n_stages: int, samples, constraints: OptConstraints,
                        table: EnergyTable | None = None) -> OptResult:
    """Minimum-sum feasible schedule by exhaustive search (ties: lexicographic).

    Raises:
        ValueError: more than 4 stages.
        InfeasibleError: no schedule is feasible.
    """
    if not 0 <= n_stages <= MAX_EXHAUSTIVE_STAGES:
        raise ValueError(f"exhaustive search supports at most {MAX_EXHAUSTIVE_STAGES} stages")
    ss = samples if isinstance(samples, SampleSet) else SampleSet(samples, table)
    if ss.n_stages != n_stages:
        raise ScheduleMismatchError(f"samples need {ss.n_stages} stages, asked for {n_stages}")
    evals = 0
    for combo in _schedules_by_sum(n_stages):
        frac, mp, me = evaluate_schedule(combo, ss, constraints)
        evals += 1
        if _feasible(frac, constraints):
            sched = LevelSchedule(combo)
            return OptResult(sched, sched.total, frac, mp, me, evals)
    raise InfeasibleError(f"no schedule meets p_t={constraints.p_t} dB, e_t={constraints.e_t}, "
                          f"P_t={constraints.P_t}")


def _descend(start, ss: SampleSet, constraints: OptConstraints, evals: int) -> OptResult:
    current = list(start)
    frac, mp, me = evaluate_schedule(current, ss, constraints)
    evals += 1
    if not _feasible(frac, constraints):
        raise InfeasibleError(f"starting schedule {tuple(start)} does not satisfy the constraints")
    while True:
        cands = [s for s in range(len(current)) if current[s] > 0]
        saving = {s: ss.stage_energy(current[s]) - ss.stage_energy(current[s] - 1) for s in cands}
        cands.sort(key=lambda s: (-saving[s], s))
        for s in cands:
            trial = list(current)
            trial[s] -= 1
            t_frac, t_mp, t_me = evaluate_schedule(trial, ss, constraints)
            evals += 1
            if _feasible(t_frac, constraints):
                current, frac, mp, me = trial, t_frac, t_mp, t_me
                break
        else:
            break
    sched = LevelSchedule(tuple(current))
    return OptResult(sched, sched.total, frac, mp, me, evals)


def optimize_greedy(n_stages: int, samples, constraints: OptConstraints,
                    table: EnergyTable | None = None) -> OptResult:
    """Greedy descent from the exact schedule.

    Each step lowers by one the stage whose decrement stays feasible and
    saves the most energy (ties: lowest stage index). Savings per candidate
    are known from the energy table, so candidates are tried in savings
    order and the first feasible one is taken. Stops when no single
    decrement is feasible.

    Raises:
        InfeasibleError: the exact schedule already violates the constraints.
    """
    ss = samples if isinstance(samples, SampleSet) else SampleSet(samples, table)
    if ss.n_stages != n_stages:
        raise ScheduleMismatchError(f"samples need {ss.n_stages} stages, asked for {n_stages}")
    try:
        return _descend([apxnum.EXACT_LEVEL] * n_stages, ss, constraints, 0)
    except InfeasibleError:
        raise InfeasibleError("the exact schedule does not satisfy the constraints") from None


def optimize_multistart(n_stages: int, samples, constraints: OptConstraints,
                        table: EnergyTable | None = None) -> OptResult:
    """Best of two greedy descents: from all-11 and from the cheapest feasible uniform schedule.

    With a linear energy table every stage saves the same amount, so the
    plain descent's lowest-index tie-break pushes early stages to the floor
    first and can stall far above the uniform optimum. Starting a second
    descent at the lowest feasible uniform level removes that trap. The
    lower objective wins; ties go to the lexicographically smaller schedule.
    """
    ss = samples if isinstance(samples, SampleSet) else SampleSet(samples, table)
    best = optimize_greedy(n_stages, ss, constraints)
    evals = best.evaluations
    for level in range(apxnum.N_LEVELS):
        frac, _, _ = evaluate_schedule([level] * n_stages, ss, constraints)
        evals += 1
        if _feasible(frac, constraints):
            alt = _descend([level] * n_stages, ss, constraints, 0)
            evals += alt.evaluations
            if (alt.objective, alt.schedule.levels) < (best.objective, best.schedule.levels):
                best = alt
            break
    return OptResult(best.schedule, best.objective, best.feasible_fraction,
                     best.mean_psnr, best.mean_energy, evals)


MODES = ("auto", "exhaustive", "greedy", "multistart")


def optimize(n: int, constraints: OptConstraints, seed: int = 0, mode: str = "auto",
             table: EnergyTable | None = None) -> OptResult:
    """Build ``constraints.s`` seeded samples of length ``n`` and optimize."""
    n_stages = log2_exact(n)
    ss = SampleSet(make_samples(n, constraints.s, seed), table)
    if mode == "auto":
        mode = "exhaustive" if n_stages <= MAX_EXHAUSTIVE_STAGES else "multistart"
    if mode == "exhaustive":
        return optimize_exhaustive(n_stages, ss, constraints)
    if mode == "greedy":
        return optimize_greedy(n_stages, ss, constraints)
    if mode == "multistart":
        return optimize_multistart(n_stages, ss, constraints)
    raise ValueError(f"unknown mode {mode!r}")


def median_level(sched: LevelSchedule) -> int:
    """Median stage level (lower median), for reuse on single-level multiplies."""
    levels = sorted(sched.levels)
    return levels[(len(levels) - 1) // 2]


def optimize_level(quality, threshold: float, P_t: float = 0.9, energy=None,
                   e_t: float = math.inf) -> tuple:
    """Smallest single level whose per-sample quality clears ``threshold``.

    ``quality(level)`` returns an array of per-sample scores; a level is
    feasible when at least ``P_t`` of them reach ``threshold`` and
    ``energy(level)`` (if given) is within ``e_t``. Returns
    ``(level, feasible_fraction)``.

    Raises:
        InfeasibleError: not even the exact level is feasible.
    """
    for level in range(apxnum.N_LEVELS):
        if energy is not None and energy(level) > e_t:
            continue
        scores = np.asarray(quality(level), dtype=np.float64)
        frac = float(np.mean(scores >= threshold))
        if frac >= P_t:
            return level, frac
    raise InfeasibleError(f"no level reaches quality {threshold} for {P_t:.0%} of samples")
