"""Integrated gradients through a polynomial fit of the path gradients.

Gradients are sampled at ``n`` uniform points along the straight path from
the baseline to the input, each feature's samples are fitted with an
interpolating polynomial (inverse Vandermonde times samples, with the
products going through the approximate multiplier) and the fitted
gradient is integrated with the composite trapezoidal rule on ``t``
sub-intervals. The attribution is that integral times ``x - x'``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import apxnum
from .apxnum import EnergyLedger
from .errors import DuplicateNodesError, ShapeMismatchError, SingularMatrixError
from .parexec import WorkPlan, op_accel
from .tinymodel import TinyModel, _as_input, forward, input_gradient

MAX_NODES = 12
PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class IGConfig:
    n: int = 9
    t: int = 8
    class_index: int = 0
    level: int = apxnum.EXACT_LEVEL
    workers: int = 1

    def __post_init__(self):
        if not 2 <= int(self.n) <= MAX_NODES:
            raise ValueError(f"n must be in [2, {MAX_NODES}], got {self.n}")
        if int(self.t) < 1:
            raise ValueError(f"t must be >= 1, got {self.t}")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        apxnum.as_level(self.level)


@dataclass(frozen=True)
class PathSamples:
    alphas: np.ndarray
    inputs: np.ndarray
    grads: np.ndarray
    delta: np.ndarray


@dataclass(frozen=True)
class PolyFit:
    V: np.ndarray
    coeffs: np.ndarray


@dataclass(frozen=True)
class Attribution:
    values: np.ndarray
    completeness_gap: float
    energy_units: float = 0.0
    level: int | None = None

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "completeness_gap": float(self.completeness_gap),
            "energy_units": float(self.energy_units),
            "level": self.level,
        }


def _pair(m: TinyModel, x, baseline) -> tuple:
    x = _as_input(m, x).reshape(-1)
    xb = _as_input(m, baseline).reshape(-1)
    return x, xb


def sample_path(m: TinyModel, x, baseline, cfg: IGConfig) -> PathSamples:
    x, xb = _pair(m, x, baseline)
    delta = x - xb
    alphas = np.arange(cfg.n) / (cfg.n - 1)
    inputs = xb[None, :] + alphas[:, None] * delta[None, :]
    inputs[-1] = x  # guards the endpoint against round-off in alpha * delta
    grads = np.stack([input_gradient(m, p, cfg.class_index) for p in inputs])
    return PathSamples(alphas, inputs, grads, delta)


def compute_vandermonde(alphas) -> np.ndarray:
    """``V[i, j] = alphas[i] ** j``.

    Raises:
        DuplicateNodesError: two nodes coincide.
    """
    a = np.asarray(alphas, dtype=np.float64).ravel()
    if np.unique(a).size != a.size:
        raise DuplicateNodesError("interpolation nodes must be distinct")
    return np.vander(a, increasing=True)


def gauss_inverse(A) -> np.ndarray:
    """Matrix inverse by Gauss-Jordan elimination with partial pivoting.

    Raises:
        SingularMatrixError: a pivot falls below ``1e-12`` in magnitude.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ShapeMismatchError(f"expected a square matrix, got {A.shape}")
    aug = np.hstack([A, np.eye(n)])
    for col in range(n):
        p = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[p, col]) < PIVOT_TOL:
            raise SingularMatrixError(f"pivot {aug[p, col]:.3e} in column {col}")
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        aug[col] /= aug[col, col]
        for r in range(n):
            if r != col:
                aug[r] -= aug[r, col] * aug[col]
    return aug[:, n:]


def compute_pol(V, grads, cfg: IGConfig, ledger: EnergyLedger | None = None) -> PolyFit:
    """Per-feature polynomial coefficients ``V^-1 @ grads`` (ascending degree).

    The inverse is exact in double; the matrix-vector products run through
    the approximate multiplier at ``cfg.level``, one feature column per row
    of the worker split.
    """
    V = np.asarray(V, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim == 1:
        grads = grads[:, None]
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ShapeMismatchError(f"V must be square, got {V.shape}")
    if grads.shape[0] != V.shape[0]:
        raise ShapeMismatchError(f"grads has {grads.shape[0]} rows, V has {V.shape[0]}")
    Vinv = gauss_inverse(V)
    plan = WorkPlan(cfg.workers, "poly", cfg.level, operator=Vinv)
    coeffs = op_accel(grads.T, plan, ledger)
    return PolyFit(V, coeffs)


def integrate(fit: PolyFit, cfg: IGConfig) -> np.ndarray:
    """Composite trapezoid of each fitted polynomial over [0, 1] on ``t`` panels."""
    t = int(cfg.t)
    pts = np.arange(t + 1) / t
    c = fit.coeffs
    vals = np.zeros((t + 1, c.shape[1]))
    for row in c[::-1]:  # Horner
        vals = vals * pts[:, None] + row[None, :]
    return (vals[:-1] + vals[1:]).sum(axis=0) / (2.0 * t)


def attribute(m: TinyModel, x, baseline, cfg: IGConfig,
              ledger: EnergyLedger | None = None) -> Attribution:
    if ledger is None:
        ledger = EnergyLedger()
    before = ledger.total
    path = sample_path(m, x, baseline, cfg)
    V = compute_vandermonde(path.alphas)
    fit = compute_pol(V, path.grads, cfg, ledger)
    G = integrate(fit, cfg)
    T = G * path.delta
    return Attribution(T, _gap(m, x, baseline, T, cfg.class_index),
                       ledger.total - before, cfg.level)


def _gap(m, x, baseline, T, c) -> float:
    df = forward(m, x)[c] - forward(m, baseline)[c]
    return float(abs(np.sum(T) - df))


def ig_oracle(m: TinyModel, x, baseline, steps: int = 2048, class_index: int = 0) -> Attribution:
    """Dense trapezoidal IG in double precision, no approximation."""
    x, xb = _pair(m, x, baseline)
    delta = x - xb
    alphas = np.arange(steps + 1) / steps
    grads = np.stack([input_gradient(m, xb + a * delta, class_index) for a in alphas])
    integral = (grads[:-1] + grads[1:]).sum(axis=0) / (2.0 * steps)
    T = integral * delta
    return Attribution(T, _gap(m, x, xb, T, class_index), 0.0, None)


def select_level(m: TinyModel, xs, baseline, cfg: IGConfig, c_t: float = 0.95,
                 P_t: float = 0.9) -> tuple:
    """Lowest matvec level whose attributions track the exact-level ones.

    For each input in ``xs`` the attribution at a candidate level is
    correlated with the attribution at level 11; the level is accepted when
    at least ``P_t`` of the inputs reach correlation ``c_t``. Returns
    ``(level, feasible_fraction)``.
    """
    from .levelopt import optimize_level

    xs = [np.asarray(x, dtype=np.float64) for x in xs]
    ref = [attribute(m, x, baseline, replace(cfg, level=apxnum.EXACT_LEVEL)).values for x in xs]

    def quality(level):
        return [pearson(attribute(m, x, baseline, replace(cfg, level=level)).values, r)
                for x, r in zip(xs, ref)]

    return optimize_level(quality, c_t, P_t)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if np.std(a) == 0 or np.std(b) == 0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float(np.corrcoef(a, b)[0, 1])
