"""Conjugate gradient on the Stiefel manifold St(d, p).

Follows the geodesic-based CG of Edelman, Arias and Smith (1998) with the
canonical metric.  Objectives are *maximized*; internally the algorithm
minimizes ``F = -value`` so the textbook formulas apply unchanged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

MAX_SHRINKS = 20
SHRINK_FACTOR = 0.5
XATOL = 1e-4
# The search window never exceeds this multiple of the previous step's angle.
WINDOW_GROWTH = 4.0


@dataclass
class ObjectiveHandle:
    """Objective to maximize and its Euclidean gradient ``dF/dB`` (p x d)."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


@dataclass
class CGResult:
    B: np.ndarray
    value: float
    converged: bool
    iterations: int
    stalled: bool = False
    trace: list = field(default_factory=list)
    orthogonality: list = field(default_factory=list)

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective", "gradient_norm"])
            for row in self.trace:
                writer.writerow([row["iteration"], repr(row["objective"]), repr(row["gradient_norm"])])


def orthonormalize(B) -> np.ndarray:
    """Q factor of B with column signs matching B (so B is unchanged if already orthonormal)."""
    Q, R = np.linalg.qr(B)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def canonical_gradient(FB, B) -> np.ndarray:
    """G = F_B - B F_B^T B."""
    return FB - B @ FB.T @ B


def tangent_norm_sq(B, H) -> float:
    """tr(H^T H) - 1/2 tr(A^T A) with A = B^T H."""
    A = B.T @ H
    return float(np.sum(H * H) - 0.5 * np.sum(A * A))


def project_tangent(B, Z) -> np.ndarray:
    """Project Z onto the tangent space at B (B^T Delta skew)."""
    BZ = B.T @ Z
    return Z - B @ (0.5 * (BZ + BZ.T))


def geodesic_frame(B, H):
    """A, Q, R for the geodesic from B in direction H."""
    A = B.T @ H
    A = 0.5 * (A - A.T)
    Q, R = np.linalg.qr(H - B @ (B.T @ H))
    return A, Q, R


def _generator(A, R):
    d = A.shape[0]
    return np.block([[A, -R.T], [R, np.zeros((d, d))]])


def geodesic_step(B, A, Q, R, t: float, S=None):
    """B(t) = B M(t) + Q N(t) with (M; N) = exp(t [[A, -R^T], [R, 0]]) (I; 0).

    Returns ``(B(t), M, N)``.  ``S`` may pass the precomputed block generator.
    """
    d = B.shape[1]
    if d == 1:
        # A = 0 and the generator is a plane rotation.
        r = R[0, 0] * t
        M = np.array([[np.cos(r)]])
        N = np.array([[np.sin(r)]])
    else:
        E = expm(t * (_generator(A, R) if S is None else S))
        M = E[:d, :d]
        N = E[d:, :d]
    return B @ M + Q @ N, M, N


def parallel_transport(H, B, R, M, N) -> np.ndarray:
    """tau H = H M - B R^T N."""
    return H @ M - B @ R.T @ N


def _inner(Bn, D1, D2) -> float:
    """Canonical inner product tr(D1^T (I - 1/2 B B^T) D2)."""
    return float(np.sum(D1 * D2) - 0.5 * np.sum((Bn.T @ D1) * (Bn.T @ D2)))


def line_search(F, B, H, A, Q, R, window: float, f0: float | None = None):
    """Minimize ``F(B(t))`` over ``t`` in ``[0, window]``.

    The window is halved (up to 20 times) until a point strictly better than
    ``t = 0`` is found.  Returns ``(t_min, F(B(t_min)), stalled)``; a stall
    returns ``t_min = 0``.
    """
    if f0 is None:
        f0 = F(B)

    S = _generator(A, R)

    def phi(t):
        Bt, _, _ = geodesic_step(B, A, Q, R, t, S)
        val = F(Bt)
        return val if np.isfinite(val) else np.inf

    w = float(window)
    for _ in range(MAX_SHRINKS + 1):
        if not (w > 0 and np.isfinite(w)):
            break
        res = minimize_scalar(phi, bounds=(0.0, w), method="bounded",
                              options={"xatol": XATOL * w})
        t, ft = float(res.x), float(res.fun)
        fw = phi(w)
        if fw < ft:
            t, ft = w, fw
        if ft < f0:
            return t, ft, False
        w *= SHRINK_FACTOR
    return 0.0, f0, True


def cg_optimize(obj: ObjectiveHandle, B0, tol: float = 1e-8, max_iter: int = 200,
                record_orthogonality: bool = False) -> CGResult:
    """Maximize ``obj.value`` over semi-orthogonal p x d matrices.

    Stops when the squared canonical gradient norm drops below ``tol``.
    """
    B = orthonormalize(np.asarray(B0, dtype=float))
    p, d = B.shape
    F = lambda X: -float(obj.value(X))  # noqa: E731
    FB = lambda X: -np.asarray(obj.gradient(X), dtype=float)  # noqa: E731
    reset_every = max(d * (p - d) + d * (d - 1) // 2, 1)

    f = F(B)
    G = canonical_gradient(FB(B), B)
    H = -G
    fresh = True
    angle = 1.0
    trace, ortho = [], []
    converged = stalled = False
    k = 0
    while True:
        gn = tangent_norm_sq(B, G)
        if not trace or trace[-1]["iteration"] != k:
            # Retries and resets revisit the same iterate; record it once.
            trace.append({"iteration": k, "objective": -f, "gradient_norm": gn})
            if record_orthogonality:
                ortho.append(float(np.linalg.norm(B.T @ B - np.eye(d))))
        if gn < tol:
            converged = True
            break
        if k >= max_iter:
            break
        hn = np.linalg.norm(H)
        A, Q, R = geodesic_frame(B, H)
        window = min(1.0, WINDOW_GROWTH * angle) / hn
        t, f_new, stall = line_search(F, B, H, A, Q, R, window, f0=f)
        if not stall:
            Bn, M, N = geodesic_step(B, A, Q, R, t)
            Bn = orthonormalize(Bn)
            f_new = F(Bn)
            # Re-orthonormalization may undo a gain at rounding level.
            stall = not f_new < f
        if stall:
            if fresh:
                if angle < 1.0:
                    # Retry once from the full window before declaring a stall.
                    angle = 1.0
                    continue
                stalled = True
                break
            H, fresh = -G, True
            continue
        angle = max(t * hn, 1e-12)
        Gn = canonical_gradient(FB(Bn), Bn)
        tH = project_tangent(Bn, parallel_transport(H, B, R, M, N))
        gamma = _inner(Bn, Gn - G, Gn) / _inner(Bn, G, G)
        H = -Gn + gamma * tH
        k += 1
        fresh = False
        if k % reset_every == 0 or _inner(Bn, H, Gn) >= 0:
            H, fresh = -Gn, True
        B, G, f = Bn, Gn, f_new

    return CGResult(B=B, value=-f, converged=converged, iterations=k, stalled=stalled,
                    trace=trace, orthogonality=ortho)
