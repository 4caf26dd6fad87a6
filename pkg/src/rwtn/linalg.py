"""Dense float64 kernels shared by both predicate grounders.

Vectors, matrices and order-3 tensors are plain ``numpy`` arrays of dtype
float64. A tensor ``W`` of shape ``(k, d, d)`` is a stack of ``k`` square
slices. Most functions accept a single vector ``(d,)`` or a row batch
``(N, d)``.
"""

from __future__ import annotations

import numpy as np

from .rng import stream

# Largest float64 strictly below one; keeps saturating activations open.
ONE_MINUS = float(np.nextafter(1.0, 0.0))
TINY = float(np.finfo(np.float64).tiny)

# Upper bound on temporary elements materialized by a batched bilinear form.
_CHUNK_ELEMENTS = 4_000_000


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def bilinear_form(v, W) -> np.ndarray:
    """``out[i] = v^T W[i] v`` for every slice ``i`` of ``W``.

    ``v`` may be ``(d,)`` or ``(N, d)``; the result is ``(k,)`` or ``(N, k)``.
    """
    v = _as_f64(v)
    W = _as_f64(W)
    if W.ndim != 3 or W.shape[1] != W.shape[2]:
        raise DimensionError(f"tensor must be (k, d, d), got {W.shape}")
    single = v.ndim == 1
    V = v[None, :] if single else v
    if V.ndim != 2 or V.shape[1] != W.shape[1]:
        raise DimensionError(f"vector length {V.shape[-1]} != slice size {W.shape[1]}")
    k, d, _ = W.shape
    n = V.shape[0]
    # (d, k*d): column block i holds slice i, so V @ flat gives v^T W[i].
    flat = np.ascontiguousarray(W.transpose(1, 0, 2)).reshape(d, k * d)
    out = np.empty((n, k), dtype=np.float64)
    step = max(1, _CHUNK_ELEMENTS // max(1, k * d))
    for start in range(0, n, step):
        block = V[start:start + step]
        left = (block @ flat).reshape(block.shape[0], k, d)
        out[start:start + step] = np.einsum("nkd,nd->nk", left, block)
    return out[0] if single else out


def matvec(M, v) -> np.ndarray:
    M = _as_f64(M)
    v = _as_f64(v)
    if M.ndim != 2 or v.shape[-1] != M.shape[1]:
        raise DimensionError(f"cannot apply {M.shape} matrix to length {v.shape[-1]}")
    return v @ M.T


def affine(M, v, b) -> np.ndarray:
    b = _as_f64(b)
    out = matvec(M, v)
    if b.shape != (out.shape[-1],):
        raise DimensionError(f"bias length {b.shape} != output length {out.shape[-1]}")
    return out + b


def tanh_map(v) -> np.ndarray:
    """Elementwise tanh, kept strictly inside (-1, 1)."""
    return np.clip(np.tanh(_as_f64(v)), -ONE_MINUS, ONE_MINUS)


def sigmoid(x):
    """Logistic function, kept strictly inside (0, 1); ``sigmoid(0) == 0.5``."""
    x = _as_f64(x)
    ex = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    out = np.clip(out, TINY, ONE_MINUS)
    return float(out) if out.ndim == 0 else out


def spectral_radius(M, tol: float = 1e-12, seed: int = 0, max_iter: int = 20_000,
                    block: int = 16) -> float:
    """Largest eigenvalue magnitude of a square matrix.

    Block power iteration: an orthonormal block of ``block`` vectors is
    pushed through ``M`` and re-orthonormalized each step, and the radius is
    read from the Rayleigh quotient ``Q^T M Q`` of the block. A block (rather
    than a single vector) is needed because the dominant eigenvalues of a
    real random matrix are often a complex-conjugate pair, on which plain
    power iteration never settles. The block is re-drawn if it collapses.
    Matrices of side at most ``2 * block`` use a block spanning the whole
    space, whose Ritz values are the eigenvalues themselves.
    """
    M = _as_f64(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    d = M.shape[0]
    if not np.any(M):
        return 0.0
    if d <= 2 * block:
        # a block spanning the whole space: its Ritz values are the eigenvalues
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    p = block
    rng = stream(seed, "spectral_radius")
    Q, _ = np.linalg.qr(rng.standard_normal((d, p)))
    prev = None
    settled = 0
    restarts = 0
    for _ in range(max_iter):
        Z = M @ Q
        if not np.all(np.isfinite(Z)) or np.linalg.norm(Z) < 1e-300:
            restarts += 1
            if restarts > 10:
                return 0.0
            Q, _ = np.linalg.qr(rng.standard_normal((d, p)))
            prev = None
            continue
        Q, _ = np.linalg.qr(Z)
        ritz = np.linalg.eigvals(Q.T @ M @ Q)
        est = float(np.max(np.abs(ritz)))
        if prev is not None and abs(est - prev) <= tol * max(1.0, est):
            settled += 1
            if settled >= 3:
                return est
        else:
            settled = 0
        prev = est
    raise ConvergenceError(
        f"spectral radius did not settle within {max_iter} iterations (last {prev})")
