"""Predictors for new points given a fitted reduction.

NW
    Nadaraya-Watson average of the training responses with kernel weights
    on the reduced predictors.
LL1
    Refit the local likelihood at the new point with B fixed and return
    the inverse link of the intercept.
LL2
    As LL1, but the inverse link is applied to the kernel-weighted average
    of the local linear predictor over the training points.
"""

from __future__ import annotations

import warnings

import numpy as np

from .kernel import kernel_weights
from .locallik import LocalFits, fit_batch, local_designs
from .made import MadeFit

METHODS = ("NW", "LL1", "LL2")


class PredictionWarning(RuntimeWarning):
    pass


def _as_points(fit: MadeFit, Xstar) -> np.ndarray:
    Xs = np.asarray(Xstar, dtype=float)
    if Xs.ndim == 1:
        Xs = Xs.reshape(1, -1)
    if Xs.shape[1] != fit.X_train.shape[1]:
        raise ValueError(f"expected {fit.X_train.shape[1]} predictors, got {Xs.shape[1]}")
    if not np.all(np.isfinite(Xs)):
        raise ValueError("prediction points must be finite")
    return Xs


def prediction_weights(fit: MadeFit, Xstar) -> np.ndarray:
    """w_{i*}: row per new point, column per training point."""
    Xs = _as_points(fit, Xstar)
    if fit.config.weight_mode == "raw":
        return kernel_weights(fit.X_train, Xs, fit.bandwidth)
    return kernel_weights(fit.X_train @ fit.B, Xs @ fit.B, fit.bandwidth)


def predict_nw(fit: MadeFit, Xstar) -> np.ndarray:
    W = prediction_weights(fit, Xstar)
    y = fit.ys_train
    # Centering on one response makes a constant response come back exactly.
    return y[0] + W @ (y - y[0])


def local_fit_at(fit: MadeFit, Xstar) -> tuple[LocalFits, np.ndarray]:
    """Local (alpha, gamma) at each new point with B fixed; also returns the weights."""
    Xs = _as_points(fit, Xstar)
    W = prediction_weights(fit, Xs)
    fam = fit.family
    Z = local_designs(fit.X_train @ fit.B, Xs @ fit.B)
    a = fam.dispersion_scale(fit.phi, fit.trials_train)
    cfg = fit.config
    fits = fit_batch(fam, Z, W, fit.ys_train, a, fit.offset_train, None,
                     tol=cfg.newton_tol, max_iter=cfg.newton_max_iter)
    return fits, W


def _offset(offset, m):
    return np.zeros(m) if offset is None else np.broadcast_to(np.asarray(offset, float), (m,))


def _fallback(fit, Xstar, fits, pred):
    bad = ~fits.converged | ~np.isfinite(pred)
    if np.any(bad):
        warnings.warn(f"local fit did not converge at {int(bad.sum())} point(s); using NW there",
                      PredictionWarning, stacklevel=3)
        pred = pred.copy()
        pred[bad] = predict_nw(fit, np.asarray(Xstar, float).reshape(-1, fit.X_train.shape[1])[bad])
    return pred


def predict_ll1(fit: MadeFit, Xstar, offset=None) -> np.ndarray:
    fits, _ = local_fit_at(fit, Xstar)
    pred = fit.family.mean(fits.alpha + _offset(offset, len(fits.alpha)))
    return _fallback(fit, Xstar, fits, pred)


def predict_ll2(fit: MadeFit, Xstar, offset=None) -> np.ndarray:
    Xs = _as_points(fit, Xstar)
    fits, W = local_fit_at(fit, Xs)
    # Weighted mean of gamma^T B^T (X_i - X*) over the training points.
    PX, Ps = fit.X_train @ fit.B, Xs @ fit.B
    centered = W @ PX - Ps
    eta = fits.alpha + np.sum(fits.gamma * centered, axis=1)
    pred = fit.family.mean(eta + _offset(offset, len(eta)))
    return _fallback(fit, Xs, fits, pred)


def predict(fit: MadeFit, Xstar, method: str = "NW", offset=None) -> np.ndarray:
    method = method.upper().replace("-", "").replace("_", "")
    method = {"LLI": "LL1", "LLII": "LL2"}.get(method, method)
    if method == "NW":
        return predict_nw(fit, Xstar)
    if method == "LL1":
        return predict_ll1(fit, Xstar, offset)
    if method == "LL2":
        return predict_ll2(fit, Xstar, offset)
    raise ValueError(f"unknown predictor {method!r}; expected one of {METHODS}")


def prediction_error(y_true, y_pred, metric: str = "scaled-mse", threshold: float = 0.5) -> float:
    """Misclassification rate or MSE scaled by var(y_true).

    For ``misclass`` the prediction is thresholded: yhat = 1 if p >= threshold.
    """
    y = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if y.shape != yp.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yp.shape}")
    if metric == "misclass":
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("misclassification error needs binary truth")
        return float(np.mean(y != (yp >= threshold).astype(float)))
    if metric in ("scaled-mse", "mse"):
        mse = float(np.mean((y - yp) ** 2))
        if metric == "mse":
            return mse
        var = float(np.var(y))
        if var == 0:
            warnings.warn("zero response variance; returning unscaled MSE", PredictionWarning,
                          stacklevel=2)
            return mse
        return mse / var
    raise ValueError(f"unknown metric {metric!r}")
