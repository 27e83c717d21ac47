"""Row-parallel operation splitter.

``op_accel`` partitions the rows of an ``M x N`` matrix into contiguous
blocks, runs a 1-D operation on each block in its own worker with a private
energy ledger, concatenates the blocks in row order and returns the
transpose. Rows never interact, so the numeric result does not depend on
the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import apxnum
from .apxfft import ComplexSignal, LevelSchedule, ax_fft, ax_ifft
from .apxnum import EnergyLedger
from .errors import EmptyMatrixError, ShapeMismatchError

OPS = ("fft", "ifft", "poly")


def default_workers(rows: int | None = None) -> int:
    w = os.cpu_count() or 1
    if rows is not None:
        w = min(w, max(rows, 1))
    return max(w, 1)


def partition(rows: int, workers: int) -> list:
    """Contiguous ``(start, stop)`` blocks: the first ``rows % workers``
    blocks get one extra row. Workers beyond ``rows`` get empty blocks."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    base, extra = divmod(rows, workers)
    bounds = []
    start = 0
    for w in range(workers):
        size = base + (1 if w < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


@dataclass(frozen=True)
class WorkPlan:
    """What ``op_accel`` runs and on how many workers.

    ``sched`` is a :class:`LevelSchedule` for ``fft``/``ifft`` and a single
    level for ``poly``; ``operator`` is the square matrix applied to every
    row by ``poly``.
    """

    workers: int
    op: str
    sched: object
    operator: np.ndarray | None = None

    def __post_init__(self):
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        if self.op not in OPS:
            raise ValueError(f"op must be one of {OPS}, got {self.op!r}")
        if self.op == "poly":
            apxnum.as_level(self.sched)
            if self.operator is None:
                raise ValueError("poly plan needs an operator matrix")
        elif not isinstance(self.sched, LevelSchedule):
            object.__setattr__(self, "sched", LevelSchedule(tuple(self.sched)))

    def with_op(self, op: str, sched, operator=None) -> "WorkPlan":
        return WorkPlan(self.workers, op, sched, operator)


def poly_rows(rows: np.ndarray, operator: np.ndarray, level: int,
              ledger: EnergyLedger | None = None) -> np.ndarray:
    """``operator @ row`` for every row, products through the approximate
    multiplier (split form), summed over the inner index in ascending order."""
    rows = np.asarray(rows, dtype=np.float64)
    op = np.asarray(operator, dtype=np.float64)
    if rows.shape[-1] != op.shape[1]:
        raise ShapeMismatchError(f"row length {rows.shape[-1]} does not match operator {op.shape}")
    out = np.zeros(rows.shape[:-1] + (op.shape[0],), dtype=np.float64)
    for k in range(op.shape[1]):
        out += apxnum.split_product(op[:, k], rows[..., k:k + 1], level, ledger)
    return out


def _run_block(x, plan: WorkPlan, ledger: EnergyLedger):
    if plan.op == "fft":
        return ax_fft(x, plan.sched, ledger)
    if plan.op == "ifft":
        return ax_ifft(x, plan.sched, ledger)
    return poly_rows(x, plan.operator, plan.sched, ledger)


def _take(x, start, stop):
    if isinstance(x, ComplexSignal):
        return ComplexSignal(x.re[start:stop], x.im[start:stop])
    return x[start:stop]


def _concat(parts):
    if isinstance(parts[0], ComplexSignal):
        return ComplexSignal(np.concatenate([p.re for p in parts], axis=0),
                             np.concatenate([p.im for p in parts], axis=0))
    return np.concatenate(parts, axis=0)


def _transpose(y):
    if isinstance(y, ComplexSignal):
        return ComplexSignal(np.ascontiguousarray(y.re.T), np.ascontiguousarray(y.im.T))
    return np.ascontiguousarray(y.T)


def op_accel(x, plan: WorkPlan, ledger: EnergyLedger | None = None):
    """Apply ``plan.op`` to each row of ``x`` across workers and transpose.

    ``x`` is a 2-D :class:`ComplexSignal` for ``fft``/``ifft`` and a 2-D
    float array for ``poly``. Returns the ``N x M`` transpose of the row-wise
    result. Per-worker ledgers are merged into ``ledger``.

    Raises:
        EmptyMatrixError: ``x`` has no rows or no columns.
        BadLengthError, ScheduleMismatchError: from the FFT on bad lengths.
    """
    if isinstance(x, ComplexSignal):
        shape = x.shape
    else:
        x = np.asarray(x, dtype=np.float64)
        shape = x.shape
    if len(shape) != 2:
        raise ShapeMismatchError(f"op_accel expects a 2-D matrix, got shape {shape}")
    if shape[0] == 0 or shape[1] == 0:
        raise EmptyMatrixError("op_accel on an empty matrix")
    if plan.op in ("fft", "ifft"):
        if not isinstance(x, ComplexSignal):
            x = ComplexSignal.from_complex(x)
        plan.sched.check(shape[1])
    elif isinstance(x, ComplexSignal):
        raise ShapeMismatchError("poly expects a real matrix")

    if ledger is None:
        ledger = EnergyLedger()
    rows = shape[0]
    blocks = [b for b in partition(rows, int(plan.workers)) if b[1] > b[0]]
    ledgers = [ledger.fork() for _ in blocks]

    def work(i):
        start, stop = blocks[i]
        return _run_block(_take(x, start, stop), plan, ledgers[i])

    if len(blocks) == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(work, range(len(blocks))))
    for led in ledgers:
        ledger.merge(led)
    return _transpose(_concat(parts))


def fft2(x, sched_rows, sched_cols, workers: int, ledger=None, inverse: bool = False):
    """Separable 2-D (I)FFT as two ``op_accel`` passes.

    ``sched_rows`` applies along each row (length N), ``sched_cols`` along
    each column (length M). The result has the input's ``M x N`` shape.
    """
    op = "ifft" if inverse else "fft"
    first = op_accel(x, WorkPlan(workers, op, sched_rows), ledger)
    return op_accel(first, WorkPlan(workers, op, sched_cols), ledger)
