"""Lyapunov spectrum estimation and qualitative attractor design.

Estimate the Lyapunov spectrum of an ODE model, classify its attractor, and
drive model parameters toward target qualitative dynamics (fixed points,
oscillations, chaos, hyperchaos, or a target fractal dimension) with an
unscented Kalman filter conditioned on the desired exponents.
"""

from .backend import COMPILED_AVAILABLE, active_backend
from .lyapunov import (
    AttractorClass,
    Classification,
    LEConfig,
    LyapunovSpectrum,
    classify,
    estimate_spectrum,
    kaplan_yorke_dimension,
)
from .models import ConstraintMap, ModelSystem, apply_constraint, builtin, zoo_names
from .odeint import IntegratorConfig, Trajectory, integrate

__version__ = "0.1.0"

__all__ = [
    "AttractorClass",
    "Classification",
    "COMPILED_AVAILABLE",
    "ConstraintMap",
    "IntegratorConfig",
    "LEConfig",
    "LyapunovSpectrum",
    "ModelSystem",
    "Trajectory",
    "active_backend",
    "apply_constraint",
    "builtin",
    "classify",
    "estimate_spectrum",
    "integrate",
    "kaplan_yorke_dimension",
    "zoo_names",
    "__version__",
]
