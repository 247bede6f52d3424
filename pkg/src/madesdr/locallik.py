"""Local likelihood fits of (alpha, gamma) by Newton-Raphson.

For an evaluation point X and reduction B the local design has rows
``Z_i = (1, (X_i - X)^T B)`` and the local log-likelihood is

    L(xi) = sum_i w_i [y_i Z_i^T xi - b(Z_i^T xi + o_i)] / a_i

(the base measure is dropped; it does not depend on xi).  All evaluation
points are fitted together: arrays carry a leading axis over points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expfam import Family, xlogy_safe

MAX_HALVINGS = 30
RIDGE_EPS = 1e-8
SINGULAR_RCOND = 1e-13


@dataclass
class LocalDesign:
    """Design for one evaluation point.

    Attributes
    ----------
    Z : (n, d+1) array, first column all ones
    w : (n,) nonnegative weights
    y : (n,) responses on the model scale
    a : (n,) dispersion scales a_i(phi)
    offset : (n,) additive offsets
    """

    family: Family
    Z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    a: np.ndarray
    offset: np.ndarray | float = 0.0

    @classmethod
    def from_reduced(cls, family, diffs, w, y, a=None, offset=0.0):
        """Build from reduced differences ``(X_i - X)^T B`` of shape (n, d)."""
        diffs = np.asarray(diffs, dtype=float)
        if diffs.ndim == 1:
            diffs = diffs[:, None]
        Z = np.column_stack([np.ones(diffs.shape[0]), diffs])
        y = np.asarray(y, dtype=float)
        a = np.ones_like(y) if a is None else np.asarray(a, dtype=float)
        return cls(family, Z, np.asarray(w, dtype=float), y, a, offset)


@dataclass
class LocalFit:
    xi: np.ndarray
    converged: bool
    iterations: int
    step_norm: float
    ridged: bool = False


@dataclass
class LocalFits:
    """Fits for a batch of evaluation points (row j belongs to point j)."""

    xi: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    step_norm: np.ndarray
    ridged: np.ndarray
    loglik: np.ndarray

    @property
    def alpha(self):
        return self.xi[:, 0]

    @property
    def gamma(self):
        return self.xi[:, 1:]

    def __getitem__(self, j) -> LocalFit:
        return LocalFit(self.xi[j].copy(), bool(self.converged[j]), int(self.iterations[j]),
                        float(self.step_norm[j]), bool(self.ridged[j]))


# -- batched kernels --------------------------------------------------------

def _theta(Z, xi, offset):
    return np.matmul(Z, xi[:, :, None])[:, :, 0] + offset


def _loglik(family, Z, W, y, a, offset, xi):
    theta = _theta(Z, xi, offset)
    lo, hi = family.theta_bounds
    with np.errstate(invalid="ignore", over="ignore"):
        terms = W * (xlogy_safe(y, theta) - family.b(theta)) / a
    # Zero-weight rows never contribute, even where theta is out of range.
    terms = np.where(W > 0, terms, 0.0)
    ll = terms.sum(axis=1)
    bad = np.any(((theta < lo) | (theta > hi) | ~np.isfinite(theta)) & (W > 0), axis=1)
    ll[bad | ~np.isfinite(ll)] = -np.inf
    return ll


def _score_hess(family, Z, W, y, a, offset, xi):
    theta = _theta(Z, xi, offset)
    with np.errstate(invalid="ignore", over="ignore"):
        r = W * (y - family.mean(theta)) / a
        v = W * family.variance(theta) / a
    r = np.where(W > 0, r, 0.0)
    v = np.where(W > 0, v, 0.0)
    Zt = Z.transpose(0, 2, 1)
    score = np.matmul(Zt, r[:, :, None])[:, :, 0]
    info = np.matmul(Zt * v[:, None, :], Z)
    return score, info


def _solve(info, score):
    """Solve info @ step = score, ridging numerically singular systems."""
    k = info.shape[-1]
    eig = np.linalg.eigvalsh(info)
    scale = np.maximum(np.abs(eig[:, -1]), np.finfo(float).tiny)
    singular = eig[:, 0] <= SINGULAR_RCOND * scale
    if np.any(singular):
        tr = np.trace(info[singular], axis1=1, axis2=2) / k
        ridge = RIDGE_EPS * np.maximum(tr, 1e-12)
        info = info.copy()
        info[singular] += ridge[:, None, None] * np.eye(k)
    try:
        step = np.linalg.solve(info, score[..., None])[..., 0]
    except np.linalg.LinAlgError:
        step = np.stack([np.linalg.lstsq(m, s, rcond=None)[0] for m, s in zip(info, score)])
    return step, singular


def default_start(family: Family, W, y, offset, d: int):
    """Intercept at the link of the weighted mean response, zero slopes."""
    W = np.atleast_2d(W)
    ybar = W @ y
    obar = W @ np.broadcast_to(np.asarray(offset, dtype=float), y.shape)
    if family.name == "binomial":
        ybar = np.clip(ybar, 1e-3, 1 - 1e-3)
    elif family.name != "gaussian":
        ybar = np.maximum(ybar, 1e-3)
    alpha = family.link(ybar) - obar
    lo, hi = family.theta_bounds
    alpha = np.clip(alpha, lo, hi)
    if family.name not in ("binomial", "poisson", "gaussian"):
        # Keep every local theta inside a negative domain for mildly positive offsets.
        alpha = np.minimum(alpha, -1e-3 - np.max(np.broadcast_to(offset, y.shape)))
    return np.column_stack([alpha, np.zeros((W.shape[0], d))])


def fit_batch(family: Family, Z, W, y, a, offset=0.0, xi0=None,
              tol: float = 1e-8, max_iter: int = 50) -> LocalFits:
    """Newton-Raphson with step halving for every evaluation point.

    Parameters
    ----------
    Z : (m, n, d+1) local designs
    W : (m, n) kernel weights (row j for evaluation point j)
    y, a : (n,) model-scale responses and dispersion scales
    offset : scalar or (n,) offsets
    xi0 : (m, d+1) starting values, or None for :func:`default_start`
    """
    Z = np.asarray(Z, dtype=float)
    W = np.asarray(W, dtype=float)
    m, n, k = Z.shape
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (n,))
    start = default_start(family, W, y, offset, k - 1)
    if xi0 is None:
        xi = start
    else:
        xi = np.array(xi0, dtype=float).reshape(m, k)
    ll = _loglik(family, Z, W, y, a, offset, xi)
    bad = ~np.isfinite(ll)
    if np.any(bad):
        xi[bad] = start[bad]
        ll[bad] = _loglik(family, Z[bad], W[bad], y, a, offset, xi[bad])

    converged = np.zeros(m, dtype=bool)
    done = np.zeros(m, dtype=bool)
    iters = np.zeros(m, dtype=int)
    step_norm = np.full(m, np.inf)
    ridged = np.zeros(m, dtype=bool)

    for _ in range(max_iter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        Za, Wa = Z[act], W[act]
        score, info = _score_hess(family, Za, Wa, y, a, offset, xi[act])
        step, sing = _solve(info, score)
        ridged[act] |= sing
        snorm = np.linalg.norm(step, axis=1)
        small_score = np.max(np.abs(score), axis=1) < tol
        t = np.ones(act.size)
        new_ll = np.full(act.size, -np.inf)
        trial = xi[act].copy()
        # Steps already below tolerance are not searched: rounding would only halve them.
        pending = ~((snorm < tol) | small_score)
        for _h in range(MAX_HALVINGS + 1):
            if not pending.any():
                break
            idx = np.flatnonzero(pending)
            cand = xi[act[idx]] + t[idx, None] * step[idx]
            cll = _loglik(family, Za[idx], Wa[idx], y, a, offset, cand)
            ok = cll >= ll[act[idx]]
            trial[idx[ok]] = cand[ok]
            new_ll[idx[ok]] = cll[ok]
            pending[idx[ok]] = False
            t[pending] *= 0.5
        skipped = (snorm < tol) | small_score
        taken = ~pending & ~skipped
        eff = np.where(taken, t * snorm, 0.0)
        counted = taken & (eff >= tol)
        iters[act[counted]] += 1
        xi[act[taken]] = trial[taken]
        ll[act[taken]] = new_ll[taken]
        step_norm[act] = eff
        # Converged when the step is below tolerance or the score already vanishes.
        conv = (snorm < tol) | (taken & (eff < tol)) | small_score
        stalled = ~taken & ~conv
        converged[act[conv]] = True
        done[act[conv | stalled]] = True

    return LocalFits(xi=xi, converged=converged, iterations=iters, step_norm=step_norm,
                     ridged=ridged, loglik=ll)


# -- single-design interface ------------------------------------------------

def _batched(design: LocalDesign):
    n = design.Z.shape[0]
    off = np.broadcast_to(np.asarray(design.offset, dtype=float), (n,))
    return design.Z[None], np.asarray(design.w, dtype=float)[None], design.y, design.a, off


def local_loglik(design: LocalDesign, xi) -> float:
    Z, W, y, a, off = _batched(design)
    return float(_loglik(design.family, Z, W, y, a, off, np.asarray(xi, float)[None])[0])


def local_score(design: LocalDesign, xi) -> np.ndarray:
    """Z^T W H(xi): sum_i w_i (y_i - b'(Z_i^T xi)) / a_i * Z_i."""
    Z, W, y, a, off = _batched(design)
    score, _ = _score_hess(design.family, Z, W, y, a, off, np.asarray(xi, float)[None])
    return score[0]


def local_jacobian(design: LocalDesign, xi) -> np.ndarray:
    """Z^T W J_H(xi) = -sum_i w_i b''(Z_i^T xi) / a_i Z_i Z_i^T."""
    Z, W, y, a, off = _batched(design)
    _, info = _score_hess(design.family, Z, W, y, a, off, np.asarray(xi, float)[None])
    return -info[0]


def newton_fit(design: LocalDesign, xi0=None, tol: float = 1e-8, max_iter: int = 50) -> LocalFit:
    Z, W, y, a, off = _batched(design)
    start = None if xi0 is None else np.asarray(xi0, float)[None]
    return fit_batch(design.family, Z, W, y, a, off, start, tol=tol, max_iter=max_iter)[0]


def local_designs(P_train, P_eval) -> np.ndarray:
    """Stack local designs for every evaluation point.

    ``P_train`` (n, d) and ``P_eval`` (m, d) are reduced predictors ``X B``;
    returns ``Z`` of shape (m, n, d+1).
    """
    P_train = np.asarray(P_train, dtype=float).reshape(len(P_train), -1)
    P_eval = np.asarray(P_eval, dtype=float).reshape(len(P_eval), -1)
    diffs = P_train[None, :, :] - P_eval[:, None, :]
    ones = np.ones(diffs.shape[:2] + (1,))
    return np.concatenate([ones, diffs], axis=2)
