"""Dynamical-system abstraction, the built-in model zoo, and parameter
constraint maps for restricted searches.

A model is an n-dimensional autonomous vector field ``f(y; theta)`` with a
hand-coded analytic Jacobian.  User-defined models enter through
:mod:`qualdyn.dsl`, which supplies Jacobians by forward-mode differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DivergenceError, ModelLookupError

__all__ = [
    "ModelSystem",
    "ConstraintMap",
    "eval_rhs",
    "eval_jacobian",
    "finite_diff_jacobian",
    "apply_constraint",
    "builtin",
    "zoo_names",
]


@dataclass(frozen=True)
class ModelSystem:
    """An n-dimensional vector field with named parameters.

    ``rhs(y, params, t)`` returns the state derivative; ``jacobian(y, params)``
    the n x n matrix of state partials.  Instances are immutable and safe to
    share between concurrent workers.
    """

    name: str
    dim: int
    state_names: tuple[str, ...]
    param_names: tuple[str, ...]
    rhs: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    default_initial_state: np.ndarray
    default_params: np.ndarray
    default_dt: float = 0.01
    constants: Mapping[str, float] = field(default_factory=dict)
    # id of the compiled estimation kernel, None for models without one
    kernel_id: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "default_initial_state",
            np.asarray(self.default_initial_state, dtype=float))
        object.__setattr__(
            self, "default_params", np.asarray(self.default_params, dtype=float))
        if len(self.state_names) != self.dim:
            raise ValueError("state_names length must equal dim")
        if self.default_initial_state.shape != (self.dim,):
            raise ValueError("default_initial_state length must equal dim")

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def constants_vector(self, order: Sequence[str]) -> np.ndarray:
        return np.array([self.constants[k] for k in order], dtype=float)


def eval_rhs(model: ModelSystem, y, theta, t: float = 0.0) -> np.ndarray:
    """Evaluate ``f(y; theta)``, raising DivergenceError on non-finite output."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if y.shape != (model.dim,):
        raise ValueError(f"state has length {y.size}, model.dim is {model.dim}")
    if theta.shape != (model.n_params,):
        raise ValueError(
            f"parameter vector has length {theta.size}, "
            f"model expects {model.n_params}")
    try:
        out = np.asarray(model.rhs(y, theta, t), dtype=float)
    except (OverflowError, ZeroDivisionError) as exc:
        raise DivergenceError(str(exc), state=y, time=t) from exc
    if not np.all(np.isfinite(out)):
        raise DivergenceError(
            f"non-finite derivative for model '{model.name}'", state=y, time=t)
    return out


def eval_jacobian(model: ModelSystem, y, theta) -> np.ndarray:
    """Evaluate the n x n state Jacobian at ``(y, theta)``."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if y.shape != (model.dim,):
        raise ValueError(f"state has length {y.size}, model.dim is {model.dim}")
    try:
        jac = np.asarray(model.jacobian(y, theta), dtype=float)
    except (OverflowError, ZeroDivisionError) as exc:
        raise DivergenceError(str(exc), state=y) from exc
    if not np.all(np.isfinite(jac)):
        raise DivergenceError(
            f"non-finite Jacobian for model '{model.name}'", state=y)
    return jac


def finite_diff_jacobian(model: ModelSystem, y, theta, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, the test oracle for analytic Jacobians.

    Column j uses step ``h * max(1, |y_j|)``.
    """
    if h <= 0:
        raise ValueError("finite difference step h must be positive")
    y = np.asarray(y, dtype=float)
    n = model.dim
    jac = np.empty((n, n))
    for j in range(n):
        hj = h * max(1.0, abs(y[j]))
        yp = y.copy()
        ym = y.copy()
        yp[j] += hj
        ym[j] -= hj
        fp = eval_rhs(model, yp, theta)
        fm = eval_rhs(model, ym, theta)
        jac[:, j] = (fp - fm) / (2.0 * hj)
    return jac


# --------------------------------------------------------------------------
# Constraint maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintMap:
    """Per-parameter map onto the feasible region.

    Composing the observation with a ConstraintMap lets the filter search an
    unconstrained space while the model only ever sees feasible parameters.
    ``kinds`` holds one of ``identity``, ``absolute_value`` or ``box`` per
    parameter; box bounds live in ``lo``/``hi`` with ``mode`` clamp or
    reflect.
    """

    kinds: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray
    mode: str = "clamp"

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        for k in self.kinds:
            if k not in ("identity", "absolute_value", "box"):
                raise ValueError(f"unknown constraint kind {k!r}")
        if self.mode not in ("clamp", "reflect"):
            raise ValueError(f"unknown box mode {self.mode!r}")

    @classmethod
    def identity(cls, n: int) -> "ConstraintMap":
        return cls(("identity",) * n, np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def absolute_value(cls, n: int) -> "ConstraintMap":
        return cls(("absolute_value",) * n, np.zeros(n), np.full(n, np.inf))

    @classmethod
    def box(cls, lo, hi, mode: str = "clamp") -> "ConstraintMap":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box lo and hi must have the same length")
        if np.any(hi < lo):
            raise ValueError("box requires hi >= lo componentwise")
        return cls(("box",) * lo.size, lo, hi, mode)

    @property
    def n(self) -> int:
        return len(self.kinds)

    def extended(self, extra: int) -> "ConstraintMap":
        """Append ``extra`` identity entries (used when initial conditions are
        adjoined to the parameter vector)."""
        return ConstraintMap(
            self.kinds + ("identity",) * extra,
            np.concatenate([self.lo, np.full(extra, -np.inf)]),
            np.concatenate([self.hi, np.full(extra, np.inf)]),
            self.mode)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        for i, kind in enumerate(self.kinds):
            v = theta[i]
            if kind == "absolute_value" and v < 0:
                return False
            if kind == "box" and not (self.lo[i] <= v <= self.hi[i]):
                return False
        return True


def _reflect(v: float, lo: float, hi: float) -> float:
    width = hi - lo
    if width == 0.0:
        return lo
    y = math.fmod(v - lo, 2.0 * width)
    if y < 0.0:
        y += 2.0 * width
    return lo + (width - abs(y - width))


def apply_constraint(p: ConstraintMap, theta_raw) -> np.ndarray:
    """Map a raw parameter vector onto the feasible region of ``p``."""
    theta = np.array(theta_raw, dtype=float)
    if theta.shape != (p.n,):
        raise ValueError(
            f"parameter vector has length {theta.size}, constraint expects {p.n}")
    for i, kind in enumerate(p.kinds):
        if kind == "identity":
            continue
        if kind == "absolute_value":
            theta[i] = abs(theta[i])
        elif kind == "box":
            if p.mode == "clamp":
                theta[i] = min(max(theta[i], p.lo[i]), p.hi[i])
            else:
                theta[i] = _reflect(theta[i], p.lo[i], p.hi[i])
    return theta


# --------------------------------------------------------------------------
# Model zoo
#
# rhs bodies are written in the same arithmetic order as their textual model
# definitions so that parsed and built-in variants evaluate identically.
# --------------------------------------------------------------------------

def _lorenz_rhs(y, p, t):
    x, yy, z = y
    sigma, rho, beta = p
    return np.array([
        sigma * (yy - x),
        x * (rho - z) - yy,
        x * yy - beta * z,
    ])


def _lorenz_jac(y, p):
    x, yy, z = y
    sigma, rho, beta = p
    return np.array([
        [-sigma, sigma, 0.0],
        [rho - z, -1.0, -x],
        [yy, x, -beta],
    ])


def _make_lorenz() -> ModelSystem:
    return ModelSystem(
        name="lorenz",
        dim=3,
        state_names=("x", "y", "z"),
        param_names=("sigma", "rho", "beta"),
        rhs=_lorenz_rhs,
        jacobian=_lorenz_jac,
        default_initial_state=(1.0, 1.0, 1.0),
        default_params=(10.0, 28.0, 8.0 / 3.0),
        default_dt=0.01,
        kernel_id=1,
    )


def _make_circuit(epsilon: float, b: float, c: float) -> ModelSystem:
    # epsilon, b, c are physical constants of the oscillator; the paper's
    # reference does not travel with it, so they are mandatory inputs.
    def rhs(y, p, t):
        x, yy, z = y
        (a,) = p
        return np.array([
            yy,
            a * yy - x - z,
            (b + yy - c * (math.exp(z) - 1.0)) / epsilon,
        ])

    def jac(y, p):
        x, yy, z = y
        return np.array([
            [0.0, 1.0, 0.0],
            [-1.0, p[0], -1.0],
            [0.0, 1.0 / epsilon, -c * math.exp(z) / epsilon],
        ])

    return ModelSystem(
        name="circuit",
        dim=3,
        state_names=("x", "y", "z"),
        param_names=("a",),
        rhs=rhs,
        jacobian=jac,
        default_initial_state=(0.1, 0.1, 0.1),
        default_params=(1.0,),
        default_dt=0.01,
        constants={"epsilon": float(epsilon), "b": float(b), "c": float(c)},
        kernel_id=2,
    )


def _make_hes1(k_deg: float = 0.03) -> ModelSystem:
    # Transcription saturates at 1 (fold-change units); k_deg defaults to the
    # experimentally determined 0.03 / min and is a fixed constant, not a
    # free parameter.
    def rhs(y, p, t):
        m, p1, p2 = y
        p0, nu, k1, h = p
        return np.array([
            -k_deg * m + 1.0 / (1.0 + (p2 / p0) ** h),
            -k_deg * p1 + nu * m - k1 * p1,
            -k_deg * p2 + k1 * p1,
        ])

    def jac(y, p):
        m, p1, p2 = y
        p0, nu, k1, h = p
        u = (p2 / p0) ** h
        # d/dP2 of the Hill term 1/(1+u)
        dhill = -(h / p0) * (p2 / p0) ** (h - 1.0) / (1.0 + u) ** 2
        return np.array([
            [-k_deg, 0.0, dhill],
            [nu, -k_deg - k1, 0.0],
            [0.0, k1, -k_deg],
        ])

    return ModelSystem(
        name="hes1",
        dim=3,
        state_names=("M", "P1", "P2"),
        param_names=("P0", "nu", "k1", "h"),
        rhs=rhs,
        jacobian=jac,
        default_initial_state=(2.0, 2.0, 2.0),
        # arbitrary limit-cycle representative: unstable focus, |lam1| ~ 1e-4
        default_params=(0.5, 2.0, 0.003, 9.0),
        default_dt=0.5,
        constants={"k_deg": float(k_deg)},
        kernel_id=3,
    )


def _hyperchaos_rhs(y, p, t):
    x1, x2, x3, x4 = y
    a, b, c, d, e, f = p
    return np.array([
        a * (x2 - x1) + x2 * x3,
        b * (x1 + x2) - x1 * x3,
        -c * x3 - e * x4 + x1 * x2,
        -d * x4 + f * x3 + x1 * x2,
    ])


def _hyperchaos_jac(y, p):
    x1, x2, x3, x4 = y
    a, b, c, d, e, f = p
    return np.array([
        [-a, a + x3, x2, 0.0],
        [b - x3, b, -x1, 0.0],
        [x2, x1, -c, -e],
        [x2, x1, f, -d],
    ])


def _make_hyperchaos4d() -> ModelSystem:
    # Default parameters from the four-dimensional reference system; the
    # resulting leading exponents sit in the documented hyperchaotic band.
    # Rates here reach several hundred per time unit, so the explicit
    # integrator needs dt well below the 0.01 used for the other models.
    return ModelSystem(
        name="hyperchaos4d",
        dim=4,
        state_names=("x1", "x2", "x3", "x4"),
        param_names=("a", "b", "c", "d", "e", "f"),
        rhs=_hyperchaos_rhs,
        jacobian=_hyperchaos_jac,
        default_initial_state=(1.0, 1.0, 1.0, 1.0),
        default_params=(50.0, 24.0, 13.0, 8.0, 33.0, 30.0),
        default_dt=0.001,
        kernel_id=4,
    )


_ZOO: dict[str, Callable[..., ModelSystem]] = {
    "lorenz": _make_lorenz,
    "circuit": _make_circuit,
    "hes1": _make_hes1,
    "hyperchaos4d": _make_hyperchaos4d,
}


def zoo_names() -> tuple[str, ...]:
    return tuple(sorted(_ZOO))


def builtin(name: str, **constants) -> ModelSystem:
    """Construct a zoo model by name.

    ``circuit`` requires the constants ``epsilon``, ``b`` and ``c``; ``hes1``
    accepts an optional ``k_deg`` override.
    """
    if name not in _ZOO:
        raise ModelLookupError(
            f"unknown model '{name}'; available: {', '.join(zoo_names())}")
    factory = _ZOO[name]
    if name == "circuit":
        missing = [k for k in ("epsilon", "b", "c") if k not in constants]
        if missing:
            raise ValueError(
                "circuit requires constants " + ", ".join(missing)
                + " (not provided by the source material)")
        return factory(**constants)
    if constants and name not in ("hes1",):
        raise ValueError(f"model '{name}' takes no constants")
    return factory(**constants)
