"""Explicit integration of model states and tangent frames.

Fixed-step classical RK4 is the default and what the spectrum estimator
builds on; an embedded Dormand-Prince 4(5) pair with step control is
available for plain trajectories.  Stiff problems are out of scope: when the
adaptive step underflows the integrator raises StiffnessError instead of
switching methods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, StiffnessError
from .models import ModelSystem

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "step",
    "integrate",
    "step_augmented",
]

MIN_ADAPTIVE_DT = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 0.01
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_step_growth: float = 5.0

    def __post_init__(self):
        if self.method not in ("rk4", "dormand_prince"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step_growth <= 1:
            raise ValueError("max_step_growth must exceed 1")


@dataclass
class Trajectory:
    """Sampled orbit: times ``t`` (m,) and states ``y`` (m, n)."""

    t: np.ndarray
    y: np.ndarray
    state_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.t.size

    def write_csv(self, path) -> None:
        names = self.state_names or tuple(
            f"y{i + 1}" for i in range(self.y.shape[1]))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(("t",) + names) + "\n")
            for ti, row in zip(self.t, self.y):
                fh.write(",".join(repr(float(v)) for v in (ti, *row)) + "\n")


def _check_finite(y: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(y)):
        raise DivergenceError("state became non-finite", state=y, time=t)


def _rk4_step(f, y, t, dt):
    # overflow surfaces as inf and is caught by the finiteness checks
    with np.errstate(all="ignore"):
        k1 = f(y, t)
        k2 = f(y + (0.5 * dt) * k1, t + 0.5 * dt)
        k3 = f(y + (0.5 * dt) * k2, t + 0.5 * dt)
        k4 = f(y + dt * k3, t + dt)
        return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 4(5) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


def _dp45_attempt(f, y, t, dt):
    """One trial Dormand-Prince step; returns (y5, raw error vector)."""
    ks = []
    for i in range(7):
        yi = y
        for aij, kj in zip(_DP_A[i], ks):
            yi = yi + (dt * aij) * kj
        ks.append(f(yi, t + _DP_C[i] * dt))
    y5 = y + dt * sum(b * k for b, k in zip(_DP_B5, ks))
    y4 = y + dt * sum(b * k for b, k in zip(_DP_B4, ks))
    return y5, y5 - y4


def _dp45_step(f, y, t, dt, cfg: IntegratorConfig):
    """Advance one accepted step; returns (y', dt_used, dt_next)."""
    while True:
        if dt < MIN_ADAPTIVE_DT:
            raise StiffnessError(
                f"adaptive step underflowed below {MIN_ADAPTIVE_DT} at t={t}; "
                "reduce dt or relax tolerances")
        with np.errstate(all="ignore"):
            y5, err = _dp45_attempt(f, y, t, dt)
            if not np.all(np.isfinite(y5)):
                dt *= 0.5
                continue
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y),
                                                           np.abs(y5))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if err_norm <= 1.0:
            if err_norm == 0.0:
                factor = cfg.max_step_growth
            else:
                factor = min(cfg.max_step_growth,
                             max(0.2, 0.9 * err_norm ** -0.2))
            return y5, dt, dt * factor
        dt *= max(0.2, 0.9 * err_norm ** -0.2)


def step(model: ModelSystem, y, theta, t: float, config: IntegratorConfig):
    """One explicit step; returns ``(y', t', dt_used)``."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _check_finite(y, t)

    def f(state, time):
        return model.rhs(state, theta, time)

    if config.method == "rk4":
        y_new = _rk4_step(f, y, t, config.dt)
        dt_used = config.dt
    else:
        y_new, dt_used, _ = _dp45_step(f, y, t, config.dt, config)
    _check_finite(y_new, t + dt_used)
    return y_new, t + dt_used, dt_used


def integrate(model: ModelSystem, y0, theta, t0: float, t1: float,
              config: IntegratorConfig, sample_every: int = 1) -> Trajectory:
    """Integrate from t0 to t1, sampling every ``sample_every`` steps.

    Both endpoints are always included.  Deterministic given its inputs.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    y = np.asarray(y0, dtype=float).copy()
    theta = np.asarray(theta, dtype=float)
    ts = [t0]
    ys = [y.copy()]
    if t1 == t0:
        return Trajectory(np.array(ts), np.array(ys), model.state_names)

    def f(state, time):
        return model.rhs(state, theta, time)

    def record(k, t):
        if k % sample_every == 0 or t >= t1:
            ts.append(t)
            ys.append(y.copy())

    if config.method == "rk4":
        # step-count arithmetic: grid times are t0 + k*dt, no accumulation
        span = t1 - t0
        n_whole = int(math.floor(span / config.dt + 1e-9))
        remainder = span - n_whole * config.dt
        if remainder < 1e-12 * config.dt:
            remainder = 0.0
        for k in range(1, n_whole + 1):
            t_prev = t0 + (k - 1) * config.dt
            try:
                y = _rk4_step(f, y, t_prev, config.dt)
            except (OverflowError, ZeroDivisionError) as exc:
                raise DivergenceError(str(exc), state=y, time=t_prev) from exc
            t = t0 + k * config.dt if k < n_whole or remainder else t1
            if not np.all(np.isfinite(y)):
                raise DivergenceError("state became non-finite",
                                      state=y, time=t)
            record(k, t)
        if remainder:
            y = _rk4_step(f, y, t0 + n_whole * config.dt, remainder)
            if not np.all(np.isfinite(y)):
                raise DivergenceError("state became non-finite",
                                      state=y, time=t1)
            record(n_whole + 1, t1)
        return Trajectory(np.array(ts), np.array(ys), model.state_names)

    t = t0
    k = 0
    dt = config.dt
    while t < t1:
        dt_trial = min(dt, t1 - t)
        try:
            y, dt_used, dt = _dp45_step(f, y, t, dt_trial, config)
        except DivergenceError:
            raise
        except (OverflowError, ZeroDivisionError) as exc:
            raise DivergenceError(str(exc), state=y, time=t) from exc
        t += dt_used
        k += 1
        if not np.all(np.isfinite(y)):
            raise DivergenceError("state became non-finite", state=y, time=t)
        record(k, t)
    return Trajectory(np.array(ts), np.array(ys), model.state_names)


def step_augmented(model: ModelSystem, y, frame, theta, t: float, dt: float):
    """One RK4 step of the combined system: the state under f and each
    tangent column under the linearization Df(y).

    State and tangents share stages and step size, so the frame tracks the
    orbit it linearizes around.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = np.asarray(y, dtype=float)
    frame = np.asarray(frame, dtype=float)
    if frame.ndim == 1:
        frame = frame[:, None]
    if frame.shape[0] != model.dim or frame.shape[1] < 1:
        raise ValueError("frame must be n x k with k >= 1")
    theta = np.asarray(theta, dtype=float)

    def fused(state, fr, time):
        return (model.rhs(state, theta, time),
                model.jacobian(state, theta) @ fr)

    with np.errstate(all="ignore"):
        k1y, k1f = fused(y, frame, t)
        k2y, k2f = fused(y + (0.5 * dt) * k1y, frame + (0.5 * dt) * k1f,
                         t + 0.5 * dt)
        k3y, k3f = fused(y + (0.5 * dt) * k2y, frame + (0.5 * dt) * k2f,
                         t + 0.5 * dt)
        k4y, k4f = fused(y + dt * k3y, frame + dt * k3f, t + dt)
        y_new = y + (dt / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        frame_new = frame + (dt / 6.0) * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
    if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(frame_new))):
        raise DivergenceError("augmented state became non-finite",
                              state=y_new, time=t + dt)
    return y_new, frame_new
