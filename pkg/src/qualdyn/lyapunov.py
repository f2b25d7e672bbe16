"""Lyapunov spectrum estimation, attractor classification, and the
Kaplan-Yorke dimension.

The estimator evolves an orthonormal tangent frame alongside the orbit and
re-orthonormalizes it periodically; each exponent is the time-average of the
log growth of its column's orthogonal residual.  Divergent orbits are not
errors here: they yield a spectrum flagged ``diverged`` so that callers can
penalize rather than abort.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DegenerateFrameError, DivergenceError, UnboundedDimensionError
from .models import ModelSystem
from .odeint import step_augmented

__all__ = [
    "LEConfig",
    "LyapunovSpectrum",
    "AttractorClass",
    "Classification",
    "gram_schmidt",
    "estimate_spectrum",
    "classify",
    "kaplan_yorke_dimension",
    "spectrum_record",
    "DELTA_TOL_DEFAULT",
    "OSC_TOL_DEFAULT",
]

# conservative chaos threshold and the oscillation accuracy the estimator
# achieves at the default step counts
DELTA_TOL_DEFAULT = 0.05
OSC_TOL_DEFAULT = 6e-3

# map kernel id -> ordered constant names for the compiled path
_KERNEL_CONSTS = {1: (), 2: ("epsilon", "b", "c"), 3: ("k_deg",), 4: ()}


@dataclass(frozen=True)
class LEConfig:
    """Spectrum-estimation settings.

    ``dt=None`` means use the model's default step.  ``k_exponents=None``
    estimates the full spectrum.
    """

    burn_in_steps: int = 1000
    estimation_steps: int = 10000
    renorm_interval: int = 1
    dt: float | None = None
    k_exponents: int | None = None

    def __post_init__(self):
        if self.burn_in_steps < 0:
            raise ValueError("burn_in_steps must be >= 0")
        if self.estimation_steps < 1 or self.renorm_interval < 1:
            raise ValueError("estimation_steps and renorm_interval must be >= 1")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.k_exponents is not None and self.k_exponents < 1:
            raise ValueError("k_exponents must be >= 1")

    def resolve(self, model: ModelSystem) -> tuple[float, int]:
        dt = self.dt if self.dt is not None else model.default_dt
        k = self.k_exponents if self.k_exponents is not None else model.dim
        if k > model.dim:
            raise ValueError("k_exponents exceeds model dimension")
        return dt, k


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Descending exponents plus estimation metadata."""

    exponents: np.ndarray
    dt: float
    steps: int
    diverged: bool = False

    def __post_init__(self):
        object.__setattr__(self, "exponents",
                           np.asarray(self.exponents, dtype=float))

    @property
    def lam1(self) -> float:
        return float(self.exponents[0])

    def __len__(self) -> int:
        return self.exponents.size


class AttractorClass(enum.Enum):
    FIXED_POINT = "FixedPoint"
    LIMIT_CYCLE_OR_TORUS = "LimitCycleOrTorus"
    CHAOS = "Chaos"
    HYPERCHAOS = "Hyperchaos"
    DIVERGENT = "Divergent"


@dataclass(frozen=True)
class Classification:
    """Attractor class with a low-confidence marker for leading exponents
    inside the gap between the oscillation and chaos tolerances."""

    kind: AttractorClass
    low_confidence: bool = False


def gram_schmidt(frame) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormalize frame columns; return (orthonormal frame, growth norms).

    ``norms[j]`` is the length of column j's residual after removing its
    projection onto the earlier orthonormalized columns; these are the
    growth factors the exponent sums accumulate.
    """
    q = np.array(frame, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    n, k = q.shape
    norms = np.empty(k)
    for j in range(k):
        for m in range(j):
            q[:, j] -= (q[:, j] @ q[:, m]) * q[:, m]
        norm = float(np.sqrt(q[:, j] @ q[:, j]))
        if not math.isfinite(norm) or norm < 1e-300:
            raise DegenerateFrameError(
                f"frame column {j} collapsed (norm {norm!r})")
        norms[j] = norm
        q[:, j] /= norm
    return q, norms


def _diverged_spectrum(k: int, dt: float, steps: int) -> LyapunovSpectrum:
    return LyapunovSpectrum(np.full(k, np.inf), dt, steps, diverged=True)


def _estimate_python(model, theta, y0, dt, burn_in, steps, renorm, frame):
    y = y0.copy()
    k = frame.shape[1]
    sums = np.zeros(k)

    # burn-in passes orbit transients and lets the frame align with the
    # dominant tangent directions; growth is not yet accumulated
    t = 0.0
    for _ in range(burn_in):
        y, frame = step_augmented(model, y, frame, theta, t, dt)
        frame, _ = gram_schmidt(frame)
        t += dt
    since = 0
    for _ in range(steps):
        y, frame = step_augmented(model, y, frame, theta, t, dt)
        t += dt
        since += 1
        if since == renorm:
            frame, norms = gram_schmidt(frame)
            sums += np.log(norms)
            since = 0
    if since:
        _, norms = gram_schmidt(frame)
        sums += np.log(norms)
    return sums


def estimate_spectrum(model: ModelSystem, theta, y0=None,
                      config: LEConfig | None = None, *,
                      frame0=None, backend_choice: str = "auto"
                      ) -> LyapunovSpectrum:
    """Estimate the leading Lyapunov exponents of ``model`` at ``theta``.

    Burn-in passes transients, then the tangent frame evolves for
    ``estimation_steps`` with Gram-Schmidt every ``renorm_interval`` steps;
    exponent i is its accumulated log growth divided by total time.
    Deterministic given inputs.  A diverging orbit (or a collapsing frame)
    returns a spectrum flagged ``diverged`` instead of raising.
    """
    config = config or LEConfig()
    theta = np.asarray(theta, dtype=float)
    if y0 is None:
        y0 = model.default_initial_state
    y0 = np.asarray(y0, dtype=float).copy()
    dt, k = config.resolve(model)
    if frame0 is None:
        frame = np.eye(model.dim)[:, :k].copy()
    else:
        frame = np.array(frame0, dtype=float)
        if frame.ndim == 1:
            frame = frame[:, None]
        if frame.shape != (model.dim, k):
            raise ValueError(f"frame0 must be {model.dim} x {k}")
    steps = config.estimation_steps
    chosen = backend.resolve(backend_choice, model.kernel_id)

    if chosen == "compiled":
        consts = model.constants_vector(_KERNEL_CONSTS[model.kernel_id])
        sums, status = backend.kernels().lyapunov_sums(
            model.kernel_id, theta, consts, y0, dt,
            config.burn_in_steps, steps, config.renorm_interval,
            np.ascontiguousarray(frame))
        if status:
            return _diverged_spectrum(k, dt, steps)
    else:
        try:
            sums = _estimate_python(model, theta, y0, dt,
                                    config.burn_in_steps, steps,
                                    config.renorm_interval, frame)
        except (DivergenceError, DegenerateFrameError):
            return _diverged_spectrum(k, dt, steps)
    exponents = np.sort(sums / (steps * dt))[::-1]
    return LyapunovSpectrum(exponents, dt, steps)


def classify(spectrum: LyapunovSpectrum,
             delta_tol: float = DELTA_TOL_DEFAULT,
             osc_tol: float = OSC_TOL_DEFAULT) -> Classification:
    """Classify the attractor from its spectrum.

    Leading exponents in the gap ``(osc_tol, delta_tol]`` are reported as
    chaos with ``low_confidence`` set: above the oscillation accuracy but
    below the conservative chaos threshold.
    """
    if len(spectrum) == 0:
        raise ValueError("empty spectrum")
    if not 0 < osc_tol <= delta_tol:
        raise ValueError("require 0 < osc_tol <= delta_tol")
    if spectrum.diverged:
        return Classification(AttractorClass.DIVERGENT)
    lam1 = spectrum.lam1
    if lam1 > delta_tol:
        if len(spectrum) >= 2 and float(spectrum.exponents[1]) > delta_tol:
            return Classification(AttractorClass.HYPERCHAOS)
        return Classification(AttractorClass.CHAOS)
    if lam1 > osc_tol:
        return Classification(AttractorClass.CHAOS, low_confidence=True)
    if lam1 >= -osc_tol:
        return Classification(AttractorClass.LIMIT_CYCLE_OR_TORUS)
    return Classification(AttractorClass.FIXED_POINT)


def kaplan_yorke_dimension(spectrum) -> float:
    """Fractal dimension from the spectrum: the largest k keeping the
    partial sum non-negative, plus the fractional overshoot into the next
    contracting direction.  A spectrum with a negative leading exponent has
    dimension 0."""
    if isinstance(spectrum, LyapunovSpectrum):
        if spectrum.diverged:
            raise ValueError("diverged spectrum has no dimension")
        lams = spectrum.exponents
    else:
        lams = np.asarray(spectrum, dtype=float)
    if lams.size == 0:
        raise ValueError("empty spectrum")
    if np.any(np.diff(lams) > 1e-9):
        raise ValueError("spectrum must be sorted descending")
    if lams[0] < 0:
        return 0.0
    partial = np.cumsum(lams)
    nonneg = np.nonzero(partial >= 0)[0]
    k = int(nonneg[-1]) + 1  # largest 1-based index with sum >= 0
    if k == lams.size:
        raise UnboundedDimensionError(
            "all partial sums non-negative; no contracting direction left")
    return k + float(partial[k - 1]) / abs(float(lams[k]))


def spectrum_record(spectrum: LyapunovSpectrum,
                    delta_tol: float = DELTA_TOL_DEFAULT,
                    osc_tol: float = OSC_TOL_DEFAULT) -> dict:
    """JSON-ready summary of a spectrum: exponents, metadata, class and
    Kaplan-Yorke dimension (null when undefined)."""
    cls = classify(spectrum, delta_tol, osc_tol)
    if spectrum.diverged:
        exponents = None
        ky = None
    else:
        exponents = [float(v) for v in spectrum.exponents]
        try:
            ky = kaplan_yorke_dimension(spectrum)
        except UnboundedDimensionError:
            ky = None
    return {
        "exponents": exponents,
        "dt": spectrum.dt,
        "steps": spectrum.steps,
        "diverged": spectrum.diverged,
        "class": cls.kind.value,
        "low_confidence": cls.low_confidence,
        "ky_dimension": ky,
    }
