"""Approximate bfloat16 arithmetic for explainable-AI kernels.

The multiplier, FFT, worker splitter and the three explainers (integrated
gradients, exact Shapley values, FFT kernel distillation) all charge an
:class:`EnergyLedger`, so the accuracy and modeled energy of any
approximation level can be compared against the exact level 11.
"""

from .apxfft import (ComplexSignal, LevelSchedule, PsnrReport, ax_fft, ax_ifft, fft_exact,
                     ifft_exact, psnr)
from .apxnum import (EXACT_LEVEL, N_LEVELS, ApproxValue, EnergyLedger, EnergyTable,
                     approx_multiply, bias_report, exact_add)
from .errors import ApproxAIError, InfeasibleError, TooManyFeaturesError
from .levelopt import (OptConstraints, OptResult, evaluate_schedule, optimize,
                       optimize_exhaustive, optimize_greedy, optimize_multistart)
from .parexec import WorkPlan, op_accel
from .tinymodel import Layer, TinyModel, forward, input_gradient, load_model, save_model
from .xai_distill import ContributionFactor, DistilledKernel, ResponsePair, contribution_factor, distill
from .xai_ig import Attribution, IGConfig, attribute, ig_oracle
from .xai_shapley import ShapleyConfig, ShapleyResult, shapley

__version__ = "0.1.0"

__all__ = [
    "ApproxAIError", "ApproxValue", "Attribution", "ComplexSignal", "ContributionFactor",
    "DistilledKernel", "EXACT_LEVEL", "EnergyLedger", "EnergyTable", "IGConfig",
    "InfeasibleError", "Layer", "LevelSchedule", "N_LEVELS", "OptConstraints", "OptResult",
    "PsnrReport", "ResponsePair", "ShapleyConfig", "ShapleyResult", "TinyModel",
    "TooManyFeaturesError", "WorkPlan", "approx_multiply", "attribute", "ax_fft", "ax_ifft",
    "bias_report", "contribution_factor", "distill", "evaluate_schedule", "exact_add",
    "fft_exact", "forward", "ifft_exact", "ig_oracle", "input_gradient", "load_model",
    "op_accel", "optimize", "optimize_exhaustive", "optimize_greedy", "optimize_multistart",
    "psnr", "save_model", "shapley",
]
