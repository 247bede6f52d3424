"""Gaussian kernel weights on raw and reduced predictors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class KernelFallbackWarning(RuntimeWarning):
    """A weight row could not be normalized and was replaced by uniform weights."""


@dataclass(frozen=True)
class Bandwidth:
    """Isotropic bandwidth ``H = h I``.

    ``h`` acts as a standard deviation: the kernel on a difference ``u`` is
    proportional to ``exp(-|u|^2 / (2 h^2))``.
    """

    h: float
    c: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"bandwidth must be positive, got {self.h}")


def bandwidth_from_rule(c: float, n: int, d: int) -> Bandwidth:
    """h = c * n^(-1/(d+4))."""
    if not c > 0:
        raise ValueError(f"bandwidth multiplier c must be positive, got {c}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if d < 0:
        raise ValueError(f"d must be >= 0, got {d}")
    return Bandwidth(h=float(c) * float(n) ** (-1.0 / (d + 4)), c=float(c))


def gaussian_kernel(u) -> float:
    """Standard multivariate normal density at ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float((2 * np.pi) ** (-u.size / 2) * np.exp(-0.5 * u @ u))


def _as_h(bw) -> float:
    return bw.h if isinstance(bw, Bandwidth) else float(bw)


def kernel_weights(points, centers, bw) -> np.ndarray:
    """Row-normalized Gaussian weights.

    Parameters
    ----------
    points : (n_train, k) array
        Coordinates of the training observations.
    centers : (n_eval, k) array
        Evaluation points.
    bw : Bandwidth or float

    Returns
    -------
    (n_eval, n_train) array whose row ``j`` holds ``w_i(center_j)``.
    """
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if centers.ndim == 1:
        centers = centers[:, None]
    h = _as_h(bw)
    n_eval, n_train = centers.shape[0], points.shape[0]
    if points.shape[1] == 0:
        return np.full((n_eval, n_train), 1.0 / n_train)
    diff = centers[:, None, :] - points[None, :, :]
    sq = np.einsum("jik,jik->ji", diff, diff)
    logk = -0.5 * sq / (h * h)
    # Shifting by the row max keeps the largest weight at 1, so rows cannot underflow.
    with np.errstate(invalid="ignore"):
        logk -= np.max(logk, axis=1, keepdims=True)
        w = np.exp(logk)
    total = w.sum(axis=1, keepdims=True)
    bad = ~np.isfinite(total[:, 0]) | (total[:, 0] <= 0)
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} kernel weight row(s) degenerate; using uniform weights",
            KernelFallbackWarning,
            stacklevel=2,
        )
        w[bad] = 1.0
        total[bad] = n_train
    return w / total


def raw_weights(X, bw, eval_points=None) -> np.ndarray:
    """Weights ``w0_i(X_j)`` computed on the full p-dimensional predictors."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least two observations for kernel weights")
    centers = X if eval_points is None else X[np.asarray(eval_points)]
    return kernel_weights(X, centers, bw)


def refined_weights(X, B, bw, eval_points=None) -> np.ndarray:
    """Weights ``w_i(B^T X_j)`` computed on the reduced predictors ``X B``."""
    X = np.asarray(X, dtype=float)
    B = np.asarray(B, dtype=float).reshape(X.shape[1], -1)
    P = X @ B
    centers = P if eval_points is None else P[np.asarray(eval_points)]
    return kernel_weights(P, centers, bw)
