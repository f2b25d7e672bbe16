"""Scaled sigma-point unscented Kalman filter for parameter estimation.

Generic over the observation: the same predict/update cycle serves scalar
targets (a leading exponent, a fractal dimension) and vector targets (a full
spectrum).  Process noise enters at predict, measurement noise pads the
predicted-observation covariance at update.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve

from .errors import CovarianceError, ObservationError

__all__ = [
    "UTParams",
    "SigmaPointSet",
    "FilterState",
    "cholesky_psd",
    "sigma_points",
    "predict",
    "unscented_observation",
    "update",
    "default_process_noise",
    "trace_row",
]


@dataclass(frozen=True)
class UTParams:
    """Scaled unscented-transform parameters for dimension L.

    ``alpha`` controls the sigma-point spread, ``beta`` corrects for
    kurtosis (2 is optimal for Gaussian priors), ``kappa`` is the secondary
    scaling term.
    """

    L: int
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.L + self.lam <= 0:
            raise ValueError(
                "alpha/kappa give L + lambda <= 0; sigma-point radius undefined")

    @property
    def lam(self) -> float:
        return self.alpha ** 2 * (self.L + self.kappa) - self.L


@dataclass(frozen=True)
class SigmaPointSet:
    """2L+1 deterministically placed parameter vectors with their mean and
    covariance weights."""

    points: np.ndarray
    w_mean: np.ndarray
    w_cov: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FilterState:
    """Posterior mean and covariance plus the noise configuration.

    ``q_process`` and ``r_meas`` are the diagonals of the process and
    measurement noise covariances.
    """

    theta_mean: np.ndarray
    P: np.ndarray
    q_process: np.ndarray
    r_meas: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta_mean",
                           np.asarray(self.theta_mean, dtype=float))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        object.__setattr__(self, "q_process",
                           np.atleast_1d(np.asarray(self.q_process, dtype=float)))
        object.__setattr__(self, "r_meas",
                           np.atleast_1d(np.asarray(self.r_meas, dtype=float)))
        if np.any(self.q_process < 0) or np.any(self.r_meas < 0):
            raise ValueError("noise diagonals must be >= 0")


def cholesky_psd(M: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of a symmetric PSD matrix.

    On failure, retries with diagonal jitter 1e-12 * trace/L escalating
    tenfold up to 1e-6 * trace/L before raising CovarianceError.
    """
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    if not np.any(M):
        # PSD-degenerate but factorizable: the zero matrix
        return np.zeros_like(M)
    base = 1e-12 * np.trace(M) / M.shape[0]
    jitter = base
    while jitter <= 1e6 * base:
        try:
            return np.linalg.cholesky(M + jitter * np.eye(M.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CovarianceError(
        f"matrix not factorizable after jitter up to {1e6 * base:g}")


def sigma_points(mean, P, ut: UTParams) -> SigmaPointSet:
    """Scaled sigma-point set around (mean, P): the mean plus/minus the
    columns of the scaled Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    P = np.asarray(P, dtype=float)
    L = ut.L
    if mean.shape != (L,) or P.shape != (L, L):
        raise ValueError("mean/P shape mismatch with UTParams.L")
    lam = ut.lam
    scaled = cholesky_psd((L + lam) * P)
    points = np.empty((2 * L + 1, L))
    points[0] = mean
    for i in range(L):
        points[1 + i] = mean + scaled[:, i]
        points[1 + L + i] = mean - scaled[:, i]
    w_mean = np.full(2 * L + 1, 1.0 / (2.0 * (L + lam)))
    w_cov = w_mean.copy()
    w_mean[0] = lam / (L + lam)
    w_cov[0] = lam / (L + lam) + (1.0 - ut.alpha ** 2 + ut.beta)
    return SigmaPointSet(points, w_mean, w_cov)


def predict(state: FilterState) -> tuple[np.ndarray, np.ndarray]:
    """Prediction step: mean carries over, covariance grows by the process
    noise."""
    return state.theta_mean.copy(), state.P + np.diag(state.q_process)


def unscented_observation(sigma: SigmaPointSet, obs_fn, map_fn=map):
    """Evaluate obs_fn over all sigma points.

    Returns (Y, y_hat): the (2L+1, m) observation matrix and its weighted
    mean.  Raises ObservationError only if every point fails.
    """
    results = list(map_fn(_guard(obs_fn), sigma.points))
    failures = [r for r in results if isinstance(r, Exception)]
    if len(failures) == len(results):
        raise ObservationError(
            f"observation failed on all {len(results)} sigma points"
        ) from failures[0]
    if failures:
        raise failures[0]
    Y = np.asarray([np.atleast_1d(np.asarray(r, dtype=float)) for r in results])
    y_hat = sigma.w_mean @ Y
    return Y, y_hat


def _guard(fn):
    def wrapped(x):
        try:
            return fn(x)
        except Exception as exc:  # collected; re-raised unless all points fail
            return exc
    return wrapped


def _as_diag(r, m: int) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if r.size == 1:
        return np.full(m, float(r[0]))
    if r.shape != (m,):
        raise ValueError(f"measurement noise diagonal has size {r.size}, "
                         f"observation dimension is {m}")
    return r


def update(prior, sigma: SigmaPointSet, obs_fn, y_target, r_meas, *,
           observations=None, state: FilterState | None = None,
           map_fn=map) -> FilterState:
    """Measurement update against the constant target vector.

    ``observations`` may carry a precomputed (Y, y_hat) pair from
    :func:`unscented_observation` to avoid re-evaluating obs_fn.  ``state``
    donates the noise configuration for the returned FilterState.
    """
    theta_pr, P_pr = prior
    theta_pr = np.asarray(theta_pr, dtype=float)
    P_pr = np.asarray(P_pr, dtype=float)
    if observations is None:
        Y, y_hat = unscented_observation(sigma, obs_fn, map_fn)
    else:
        Y, y_hat = observations
    y_target = np.atleast_1d(np.asarray(y_target, dtype=float))
    m = Y.shape[1]
    if y_target.shape != (m,):
        raise ValueError(f"target has dimension {y_target.size}, "
                         f"observations have {m}")
    r_diag = _as_diag(r_meas, m)

    dY = Y - y_hat
    dT = sigma.points - theta_pr
    P_yy = dY.T @ (sigma.w_cov[:, None] * dY) + np.diag(r_diag)
    P_ty = dT.T @ (sigma.w_cov[:, None] * dY)
    factor = cholesky_psd(P_yy)
    K = cho_solve((factor, True), P_ty.T).T
    theta_po = theta_pr + K @ (y_target - y_hat)
    P_po = P_pr - K @ P_yy @ K.T
    P_po = 0.5 * (P_po + P_po.T)

    if state is not None:
        return replace(state, theta_mean=theta_po, P=P_po,
                       r_meas=r_diag, iteration=state.iteration + 1)
    return FilterState(theta_po, P_po, np.zeros_like(theta_po), r_diag,
                       iteration=1)


def default_process_noise(theta0, scale: float = 1.0,
                          floor: float = 1e-3) -> np.ndarray:
    """Process-noise diagonal at the order of magnitude of the initial
    parameters, floored so zero-initialized entries stay mobile."""
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    return scale * np.maximum(np.abs(theta0), floor)


def trace_row(state: FilterState, y_hat=None, sse=None) -> dict:
    """JSON-ready filter trace row."""
    return {
        "iteration": state.iteration,
        "theta_mean": [float(v) for v in state.theta_mean],
        "P_diag": [float(v) for v in np.diag(state.P)],
        "y_hat": None if y_hat is None else [float(v) for v in np.atleast_1d(y_hat)],
        "sse": None if sse is None else float(sse),
    }
