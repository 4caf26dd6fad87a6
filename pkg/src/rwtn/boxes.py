"""Axis-aligned box geometry in unit-square coordinates ``(x0, y0, x1, y1)``."""

from __future__ import annotations

import numpy as np


class DegenerateBoxError(ValueError):
    pass


def area(box) -> float:
    x0, y0, x1, y1 = box
    return max(0.0, x1 - x0) * max(0.0, y1 - y0)


def inclusion_ratio(b, b2) -> float:
    """``area(b & b2) / area(b)``: the share of ``b`` covered by ``b2``."""
    a = area(b)
    if a <= 0.0:
        raise DegenerateBoxError(f"box {tuple(b)} has zero area")
    w = min(b[2], b2[2]) - max(b[0], b2[0])
    h = min(b[3], b2[3]) - max(b[1], b2[1])
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return min(1.0, (w * h) / a)


def inclusion_ratio_batch(B, B2) -> np.ndarray:
    """Row-wise :func:`inclusion_ratio` for ``(N, 4)`` arrays."""
    B = np.asarray(B, dtype=np.float64)
    B2 = np.asarray(B2, dtype=np.float64)
    a = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    if np.any(a <= 0.0):
        raise DegenerateBoxError("zero-area box in batch")
    w = np.clip(np.minimum(B[:, 2], B2[:, 2]) - np.maximum(B[:, 0], B2[:, 0]), 0.0, None)
    h = np.clip(np.minimum(B[:, 3], B2[:, 3]) - np.maximum(B[:, 1], B2[:, 1]), 0.0, None)
    return np.minimum(1.0, w * h / a)
