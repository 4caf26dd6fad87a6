"""Reservoir weight generation and a standalone echo state network.

The generators here are the only writers of frozen weights. All of them are
pure functions of ``(shape, hyperparameters, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import DimensionError, spectral_radius, tanh_map
from .rng import stream


class SingularSystemError(np.linalg.LinAlgError):
    """The ridge normal equations have no unique solution."""


@dataclass(frozen=True)
class ReservoirConfig:
    rho: float = 0.6
    beta: float = 0.25
    R: int = 200
    omega: float = 0.5
    xi: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if self.omega < 0 or self.xi < 0:
            raise ValueError("omega and xi must be non-negative")


@dataclass
class EsnParams:
    W_in: np.ndarray  # (R, d_in), frozen
    W_r: np.ndarray  # (R, R), frozen
    V_o: np.ndarray  # (d_out, R)
    v_o: np.ndarray  # (d_out,)


def gen_sparse_matrix(rows: int, cols: int, beta: float, seed: int) -> np.ndarray:
    """Entries nonzero with probability ``beta``, nonzero values uniform on [-1, 1]."""
    rng = stream(seed, "sparse_matrix", rows, cols)
    mask = rng.random((rows, cols)) < beta
    values = rng.uniform(-1.0, 1.0, size=(rows, cols))
    return np.where(mask, values, 0.0)


def scale_to_spectral_radius(M, rho: float, tol: float = 1e-12) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    current = spectral_radius(M, tol=tol)
    if current <= 0.0:
        raise ValueError("cannot rescale a matrix with zero spectral radius")
    if current <= 1e-6 * np.linalg.norm(M):
        # nilpotent up to rounding: the radius is noise and rescaling would explode
        raise ValueError("matrix is numerically nilpotent; cannot rescale")
    return M * (rho / current)


def gen_input_weights(rows: int, cols: int, omega: float, seed: int) -> np.ndarray:
    """Magnitudes uniform on [0, omega], signs from independent fair coin flips."""
    if omega < 0:
        raise ValueError("omega must be non-negative")
    rng = stream(seed, "input_weights", rows, cols)
    magnitude = rng.uniform(0.0, 1.0, size=(rows, cols)) * omega
    sign = np.where(rng.random((rows, cols)) < 0.5, -1.0, 1.0)
    return magnitude * sign


def make_esn(d_in: int, d_out: int, config: ReservoirConfig) -> EsnParams:
    W_r = gen_sparse_matrix(config.R, config.R, config.beta, config.seed)
    if np.any(W_r):
        W_r = scale_to_spectral_radius(W_r, config.rho)
    return EsnParams(
        W_in=gen_input_weights(config.R, d_in, config.omega, config.seed),
        W_r=W_r,
        V_o=np.zeros((d_out, config.R)),
        v_o=np.zeros(d_out),
    )


def esn_run(params: EsnParams, inputs, xi: float = 0.0, seed: int = 0) -> np.ndarray:
    """State matrix ``H`` whose row ``t`` is ``h(t)``, starting from ``h(0) = 0``.

    Gaussian noise of standard deviation ``xi`` is added inside the
    activation at every step.
    """
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    R, d_in = params.W_in.shape
    if X.shape[1] != d_in:
        raise DimensionError(f"input width {X.shape[1]} != {d_in}")
    rng = stream(seed, "esn_noise")
    H = np.zeros((X.shape[0], R))
    h = np.zeros(R)
    for t, x in enumerate(X):
        pre = params.W_in @ x + params.W_r @ h
        if xi > 0:
            pre = pre + xi * rng.standard_normal(R)
        h = tanh_map(pre)
        H[t] = h
    return H


def ridge_readout(H, targets, lam: float):
    """Closed-form ``argmin 1/2 ||V_o h + v_o - y||^2 + lam ||V_o||^2``.

    Solved through the bias-augmented normal equations with a Cholesky
    factorization; the bias column is not penalized.
    """
    H = np.asarray(H, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    if H.shape[0] != Y.shape[0]:
        raise DimensionError(f"{H.shape[0]} states vs {Y.shape[0]} targets")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    A = np.hstack([H, np.ones((H.shape[0], 1))])
    G = A.T @ A
    penalty = np.full(A.shape[1], 2.0 * lam)
    penalty[-1] = 0.0
    G[np.diag_indices_from(G)] += penalty
    try:
        factor = scipy.linalg.cho_factor(G, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("ridge system is singular; use lam > 0") from exc
    pivots = np.diag(factor[0]) ** 2
    if lam == 0 and pivots.min() <= 1e-12 * max(1.0, float(np.max(np.diag(G)))):
        raise SingularSystemError("ridge system is numerically singular; use lam > 0")
    theta = scipy.linalg.cho_solve(factor, A.T @ Y)
    if not np.all(np.isfinite(theta)):
        raise SingularSystemError("ridge solution is not finite")
    V_o = theta[:-1].T
    v_o = theta[-1]
    if squeeze:
        return V_o[0], float(v_o[0])
    return V_o, v_o


def ridge_objective(H, targets, V_o, v_o, lam: float) -> float:
    Y = np.asarray(targets, dtype=np.float64)
    V_o = np.asarray(V_o, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
        V_o = V_o[None, :]
    resid = np.asarray(H) @ V_o.T + v_o - Y
    return 0.5 * float(np.sum(resid**2)) + lam * float(np.sum(V_o**2))
