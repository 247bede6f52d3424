"""Minimum average deviance estimation.

Alternates per-point Newton fits of the local coefficients (alpha_j, gamma_j)
with conjugate-gradient optimization of the shared reduction ``B`` on the
Stiefel manifold, refreshing the kernel weights on ``X B`` after each pass.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .expfam import Family, SupportError
from .kernel import Bandwidth, bandwidth_from_rule, kernel_weights, raw_weights
from .locallik import LocalFits, fit_batch, local_designs
from .stiefel import ObjectiveHandle, cg_optimize, orthonormalize

log = logging.getLogger(__name__)

DISPERSION_FLOOR = 1e-12


class MadeWarning(RuntimeWarning):
    pass


@dataclass
class Dataset:
    """Responses, predictors and per-observation context.

    ``y`` is stored on the response scale (success counts for binomial data).
    ``train`` and ``eval`` select the training set (sums over i) and the
    evaluation points (sums over j); both default to every observation.
    """

    y: np.ndarray
    X: np.ndarray
    trials: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    dispersion: Optional[float] = None
    train: Optional[np.ndarray] = None
    eval: Optional[np.ndarray] = None
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        n = self.y.shape[0]
        if self.X.shape[0] != n:
            raise ValueError(f"X has {self.X.shape[0]} rows but y has {n}")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("dataset contains missing or non-finite values")
        self.trials = np.ones(n) if self.trials is None else np.broadcast_to(
            np.asarray(self.trials, dtype=float), (n,)).copy()
        self.offset = np.zeros(n) if self.offset is None else np.broadcast_to(
            np.asarray(self.offset, dtype=float), (n,)).copy()
        if self.train is not None:
            self.train = np.asarray(self.train, dtype=int)
        if self.eval is not None:
            self.eval = np.asarray(self.eval, dtype=int)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def train_idx(self) -> np.ndarray:
        return np.arange(self.n) if self.train is None else self.train

    @property
    def eval_idx(self) -> np.ndarray:
        return self.train_idx if self.eval is None else self.eval

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.y[idx], self.X[idx], self.trials[idx], self.offset[idx],
                       self.dispersion, names=self.names)

    def with_response(self, y) -> "Dataset":
        return replace(self, y=np.asarray(y, dtype=float))


@dataclass
class MadeConfig:
    """Estimator settings.

    ``h`` overrides the rule ``h = c n^(-1/(d+4))`` when given.
    """

    d: int = 1
    c: float = 1.0
    h: Optional[float] = None
    weight_mode: str = "refined"
    init: str = "pfc"
    B0: Optional[np.ndarray] = None
    init_weights: str = "refined"
    outer_tol: float = 1e-4
    outer_max_iter: int = 100
    dispersion_mode: str = "known"
    newton_tol: float = 1e-8
    newton_max_iter: int = 50
    cg_tol: float = 1e-8
    cg_max_iter: int = 200
    seed: Optional[int] = None

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("d must be nonnegative")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.weight_mode not in ("raw", "refined"):
            raise ValueError(f"weight_mode must be 'raw' or 'refined', got {self.weight_mode!r}")
        if self.init not in ("pfc", "random", "user"):
            raise ValueError(f"init must be 'pfc', 'random' or 'user', got {self.init!r}")
        if self.init_weights not in ("raw", "refined"):
            raise ValueError("init_weights must be 'raw' or 'refined'")
        if self.dispersion_mode not in ("known", "estimate"):
            raise ValueError("dispersion_mode must be 'known' or 'estimate'")
        if self.init == "user" and self.B0 is None:
            raise ValueError("init='user' requires B0")

    def bandwidth(self, n: int, d: Optional[int] = None) -> Bandwidth:
        d = self.d if d is None else d
        if self.h is not None:
            return Bandwidth(h=float(self.h))
        return bandwidth_from_rule(self.c, n, d)


@dataclass
class MadeFit:
    """Result of :func:`fit`.

    The training arrays are kept so that the fit can predict on its own.
    """

    family: Family
    config: MadeConfig
    B: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    local_converged: np.ndarray
    weights: np.ndarray
    bandwidth: Bandwidth
    phi: float
    X_train: np.ndarray
    y_train: np.ndarray
    trials_train: np.ndarray
    offset_train: np.ndarray
    X_eval: np.ndarray
    offset_eval: np.ndarray
    eval_idx: np.ndarray
    objective: float
    trace: list = field(default_factory=list)
    converged: bool = False
    outer_iterations: int = 0
    names: Optional[Sequence[str]] = None

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def theta_eval(self) -> np.ndarray:
        """Fitted natural parameter at each evaluation point (offset included)."""
        return self.alpha + self.offset_eval

    @property
    def fitted(self) -> np.ndarray:
        """Fitted means at the evaluation points (proportions for binomial)."""
        return self.family.mean(self.theta_eval)

    @property
    def ys_train(self) -> np.ndarray:
        return self.family.scale_response(self.y_train, self.trials_train)


# -- objective and gradient -------------------------------------------------

class _Parts:
    """Training/evaluation arrays pulled out of a Dataset once."""

    def __init__(self, data: Dataset, family: Family, phi=None):
        M, N = data.train_idx, data.eval_idx
        self.M, self.N = M, N
        self.XM, self.XN = data.X[M], data.X[N]
        self.ys = family.scale_response(data.y[M], data.trials[M])
        self.trials = data.trials[M]
        phi = data.dispersion if phi is None else phi
        self.phi = family.default_dispersion if phi is None else phi
        self.a = family.dispersion_scale(self.phi, self.trials)
        self.oM = data.offset[M]
        self.oN = data.offset[N]
        self.logf0 = family.log_base(self.ys, self.phi, self.trials)


class _QTerms:
    """Q(B) and dQ/dB with (alpha, gamma, W) frozen.

    theta_ji = alpha_j + gamma_j^T B^T (X_i - X_j) + o_i is formed as one
    product of augmented matrices; the weights are pre-scaled by y_i / a_i
    and 1 / a_i so each evaluation is a couple of passes over an n x n array.
    """

    def __init__(self, family, parts, alpha, gamma, W):
        self.family = family
        self.XM, self.XN, self.oM = parts.XM, parts.XN, parts.oM
        self.alpha = np.asarray(alpha, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float).reshape(len(self.alpha), -1)
        W = np.asarray(W, dtype=float)
        self.W = W
        self.Wy = W * (parts.ys / parts.a)[None, :]
        self.Wa = W / parts.a[None, :]
        with np.errstate(invalid="ignore"):
            self.base = float(np.sum(np.where(W > 0, W * parts.logf0[None, :], 0.0)))

    def theta(self, B):
        g = self.gamma
        if B.shape[1] == 0:
            return self.alpha[:, None] + self.oM[None, :]
        PM, PN = self.XM @ B, self.XN @ B
        th = g @ PM.T
        th += (self.alpha - np.sum(g * PN, axis=1))[:, None]
        th += self.oM
        return th

    def _guarded(self, theta):
        lo, hi = self.family.theta_bounds
        live = self.W > 0
        th = theta[live]
        return not np.all(self.family.in_domain(th) & (th >= lo) & (th <= hi))

    def value(self, B, include_base=False):
        th = self.theta(B)
        fam = self.family
        if fam.name in ("geometric", "negbin", "exponential", "gamma", "invgaussian"):
            if np.any(th[self.W > 0] >= 0):
                return -np.inf
        with np.errstate(invalid="ignore", over="ignore"):
            val = float(np.vdot(self.Wy, th) - np.vdot(self.Wa, fam.b(th)))
        if not np.isfinite(val):
            # Overflow in b() where the weight is zero, or a genuine domain exit.
            if self._guarded(th):
                return -np.inf
            live = self.W > 0
            with np.errstate(invalid="ignore", over="ignore"):
                val = float(np.sum(self.Wy[live] * th[live] - self.Wa[live] * fam.b(th[live])))
            if not np.isfinite(val):
                return -np.inf
        return val + self.base if include_base else val

    def gradient(self, B):
        th = self.theta(B)
        with np.errstate(invalid="ignore", over="ignore"):
            R = self.Wy - self.Wa * self.family.mean(th)
        if not np.all(np.isfinite(R)):
            R = np.where(self.W > 0, R, 0.0)
        g = self.gamma
        return self.XM.T @ (R.T @ g) - self.XN.T @ (R.sum(axis=1)[:, None] * g)


def _q_value(family, parts, alpha, gamma, B, W, include_base=True):
    return _QTerms(family, parts, alpha, gamma, W).value(B, include_base)


def _q_gradient(family, parts, alpha, gamma, B, W):
    return _QTerms(family, parts, alpha, gamma, W).gradient(B)


def objective_q(data: Dataset, family: Family, alphas, gammas, B, weights,
                include_base: bool = True) -> float:
    """Full local log-likelihood summed over evaluation points.

    ``weights`` has one row per evaluation point and one column per training
    point.  Returns ``-inf`` if any weighted natural parameter leaves the
    family's domain.
    """
    B = np.asarray(B, dtype=float).reshape(data.p, -1)
    gammas = np.asarray(gammas, dtype=float).reshape(len(alphas), B.shape[1])
    return _q_value(family, _Parts(data, family), alphas, gammas, B,
                    np.asarray(weights, dtype=float), include_base)


def gradient_q_wrt_b(data: Dataset, family: Family, alphas, gammas, B, weights) -> np.ndarray:
    """dQ/dB (p x d) with weights, alphas and gammas held fixed."""
    B = np.asarray(B, dtype=float).reshape(data.p, -1)
    gammas = np.asarray(gammas, dtype=float).reshape(len(alphas), B.shape[1])
    return _q_gradient(family, _Parts(data, family), alphas, gammas, B,
                       np.asarray(weights, dtype=float))


# -- initialization -----------------------------------------------------------

def init_pfc(data: Dataset, d: int, family: Optional[Family] = None) -> np.ndarray:
    """Top-d eigenvectors of the fitted covariance X^T F (F^T F)^- F^T X / n.

    ``F`` has rows (y_i, y_i^2, ..., y_i^d), centered and scaled column-wise
    (which leaves the projection unchanged up to the intercept).
    """
    M = data.train_idx
    X = data.X[M]
    y = data.y[M] if family is None else family.scale_response(data.y[M], data.trials[M])
    n, p = X.shape
    if d == 0:
        return np.zeros((p, 0))
    if n <= d:
        raise ValueError(f"need n > d for PFC initialization (n={n}, d={d})")
    Xc = X - X.mean(axis=0)
    F = np.column_stack([y ** k for k in range(1, d + 1)])
    F = F - F.mean(axis=0)
    sd = F.std(axis=0)
    if np.all(sd == 0):
        warnings.warn("constant response; PFC initializer falls back to a uniform direction",
                      MadeWarning, stacklevel=2)
        return _uniform_basis(p, d)
    F = F[:, sd > 0] / sd[sd > 0]
    FtF = F.T @ F
    if np.linalg.matrix_rank(FtF) < F.shape[1]:
        warnings.warn("rank-deficient F^T F in PFC initializer; using pseudo-inverse",
                      MadeWarning, stacklevel=2)
    XtF = Xc.T @ F
    sigma_fit = XtF @ np.linalg.pinv(FtF) @ XtF.T / n
    w, V = np.linalg.eigh(0.5 * (sigma_fit + sigma_fit.T))
    B = V[:, np.argsort(w)[::-1][:d]]
    return orthonormalize(B)


def _uniform_basis(p: int, d: int) -> np.ndarray:
    first = np.full((p, 1), 1.0 / np.sqrt(p))
    return orthonormalize(np.column_stack([first, np.eye(p)[:, : d - 1]])) if d > 1 else first


def random_basis(p: int, d: int, rng) -> np.ndarray:
    return orthonormalize(rng.standard_normal((p, d)))


def subspace_distance(B, Bhat) -> float:
    """rho = ||(I - Bhat Bhat^T) B||_F."""
    B = np.asarray(B, dtype=float)
    Bhat = np.asarray(Bhat, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if Bhat.ndim == 1:
        Bhat = Bhat[:, None]
    if B.shape[0] != Bhat.shape[0]:
        raise ValueError(f"shape mismatch: {B.shape} vs {Bhat.shape}")
    return float(np.linalg.norm(B - Bhat @ (Bhat.T @ B)))


# -- dispersion -----------------------------------------------------------------

def estimate_dispersion(data: Dataset, family: Family, alphas, gammas, B, weights) -> float:
    """Dispersion step with (alpha, gamma, B) fixed.

    Gaussian: mean squared residual of the fitted means at the evaluation
    points.  Gamma and inverse Gaussian: maximize the full objective over
    phi (log-grid bracket, then bounded Brent on log phi).
    """
    parts = _Parts(data, family)
    B = np.asarray(B, dtype=float).reshape(data.p, -1)
    gammas = np.asarray(gammas, dtype=float).reshape(len(alphas), B.shape[1])
    W = np.asarray(weights, dtype=float)
    if family.name == "gaussian":
        N = data.eval_idx
        resid = data.y[N] - family.mean(np.asarray(alphas) + data.offset[N])
        return max(float(np.mean(resid ** 2)), DISPERSION_FLOOR)
    if family.name not in ("gamma", "invgaussian"):
        raise ValueError(f"dispersion is fixed at 1 for the {family.name} family")

    def negq(logphi):
        parts_phi = _Parts(data, family, phi=float(np.exp(logphi)))
        return -_q_value(family, parts_phi, alphas, gammas, B, W)

    grid = np.log(parts.phi) + np.linspace(-12, 12, 49)
    vals = np.array([negq(g) for g in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(negq, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return max(float(np.exp(res.x)), DISPERSION_FLOOR)


# -- the estimator ----------------------------------------------------------------

def _weights(parts, B, bw, mode):
    if mode == "raw" or B is None:
        return kernel_weights(parts.XM, parts.XN, bw)
    return kernel_weights(parts.XM @ B, parts.XN @ B, bw)


def _local_step(family, parts, B, W, xi0, cfg) -> LocalFits:
    Z = local_designs(parts.XM @ B, parts.XN @ B)
    return fit_batch(family, Z, W, parts.ys, parts.a, parts.oM, xi0,
                     tol=cfg.newton_tol, max_iter=cfg.newton_max_iter)


def _b_step(family, parts, alpha, gamma, W, B, cfg, fixed=None, C=None):
    """Maximize Q over B with (alpha, gamma, W) frozen.

    With ``fixed`` (p x k) the first k columns of B are held at ``fixed`` and
    the remaining columns are ``C V`` for an orthonormal basis ``C`` of the
    complement, so the optimizer runs on St(d - k, p - k).
    """
    terms = _QTerms(family, parts, alpha, gamma, W)
    if fixed is None:
        res = cg_optimize(ObjectiveHandle(value=terms.value, gradient=terms.gradient), B,
                          tol=cfg.cg_tol, max_iter=cfg.cg_max_iter)
        return res.B, res
    k = fixed.shape[1]

    def full(V):
        return np.column_stack([fixed, C @ V])

    handle = ObjectiveHandle(value=lambda V: terms.value(full(V)),
                             gradient=lambda V: C.T @ terms.gradient(full(V))[:, k:])
    res = cg_optimize(handle, C.T @ B[:, k:], tol=cfg.cg_tol, max_iter=cfg.cg_max_iter)
    return full(res.B), res


def _initial_basis(data, family, cfg) -> np.ndarray:
    p, d = data.p, cfg.d
    if cfg.init == "user":
        B0 = np.asarray(cfg.B0, dtype=float).reshape(p, d)
        return orthonormalize(B0)
    if cfg.init == "random":
        return random_basis(p, d, np.random.default_rng(cfg.seed))
    return init_pfc(data, d, family)


def _alternate(data, family, cfg, parts, bw, B, fixed=None, C=None) -> MadeFit:
    """Alternate local Newton fits, the B-step and the weight refresh until B settles."""
    if cfg.weight_mode == "raw" or cfg.init_weights == "raw":
        W = _weights(parts, None, bw, "raw")
    else:
        W = _weights(parts, B, bw, "refined")
    xi = None
    trace = []
    converged = False
    outer = 0
    for outer in range(1, cfg.outer_max_iter + 1):
        fits = _local_step(family, parts, B, W, xi, cfg)
        xi = fits.xi
        ok = np.isfinite(fits.loglik)
        if not ok.all():
            warnings.warn(f"{int((~ok).sum())} local fit(s) failed; excluded from the B-step",
                          MadeWarning, stacklevel=3)
        Wb = np.where(ok[:, None], W, 0.0)
        B_new, res = _b_step(family, parts, xi[:, 0], xi[:, 1:], Wb, B, cfg, fixed, C)
        if cfg.dispersion_mode == "estimate":
            phi = estimate_dispersion(_with_disp(data, parts.phi), family,
                                      xi[:, 0], xi[:, 1:], B_new, Wb)
            parts = _Parts(data, family, phi=phi)
        trace.append(_q_value(family, parts, xi[:, 0], xi[:, 1:], B_new, Wb))
        if cfg.weight_mode == "refined":
            W = _weights(parts, B_new, bw, "refined")
        change = subspace_distance(B_new, B)
        log.debug("outer %d: Q=%.10g change=%.3g cg_iters=%d", outer, trace[-1], change,
                  res.iterations)
        B = B_new
        if change < cfg.outer_tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"MADE did not converge in {cfg.outer_max_iter} outer iterations",
                      MadeWarning, stacklevel=3)
    final = _local_step(family, parts, B, W, xi, cfg)
    return _make_fit(data, family, cfg, parts, B, final, W, bw, trace, converged, outer)


def complement_basis(B0) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(B0)."""
    B0 = np.asarray(B0, dtype=float)
    p, k = B0.shape
    U, _, _ = np.linalg.svd(B0, full_matrices=True)
    return U[:, k:]


def fit_extension(data: Dataset, family: Family, B0, config: Optional[MadeConfig] = None,
                  **overrides) -> MadeFit:
    """Fit one extra direction beta orthogonal to a fixed basis ``B0``.

    The reduction is ``[B0, beta]`` with ``beta`` on the unit sphere of the
    complement of span(B0); B0 itself is not refit.  The loading on the new
    direction at point j is ``fit.gamma[j, -1]``.
    """
    B0 = orthonormalize(np.asarray(B0, dtype=float).reshape(data.p, -1))
    k = B0.shape[1]
    if k >= data.p:
        raise ValueError(f"no complement left: B0 already spans all {data.p} predictors")
    cfg = config if config is not None else MadeConfig()
    cfg = replace(cfg, d=k + 1, **overrides)
    family.check_support(data.y, data.trials)
    M = data.train_idx
    if len(M) < k + 3:
        raise ValueError(f"need at least {k + 3} training observations, got {len(M)}")
    C = complement_basis(B0)
    if cfg.init == "random":
        v = random_basis(C.shape[1], 1, np.random.default_rng(cfg.seed))
    else:
        v = init_pfc(replace(data, X=data.X @ C), 1, family)
    B = np.column_stack([B0, C @ v])
    parts = _Parts(data, family)
    return _alternate(data, family, cfg, parts, cfg.bandwidth(len(M)), B, fixed=B0, C=C)


def fit(data: Dataset, family: Family, config: Optional[MadeConfig] = None, **overrides) -> MadeFit:
    """Estimate the reduction B and local coefficients.

    Parameters
    ----------
    data : Dataset
    family : Family
    config : MadeConfig, optional
        Keyword overrides are applied on top of ``config``.

    Returns
    -------
    MadeFit
    """
    cfg = config if config is not None else MadeConfig()
    if overrides:
        cfg = replace(cfg, **overrides)
    family.check_support(data.y, data.trials)
    p, d = data.p, cfg.d
    if d > p:
        raise ValueError(f"d={d} exceeds the number of predictors p={p}")
    M = data.train_idx
    if len(M) < d + 2:
        raise ValueError(f"need at least d+2={d + 2} training observations, got {len(M)}")

    parts = _Parts(data, family)
    bw = cfg.bandwidth(len(M))
    trace = []
    converged = True
    outer = 0

    if d == 0:
        B = np.zeros((p, 0))
        W = (kernel_weights(parts.XM, parts.XN, bw) if cfg.weight_mode == "raw"
             else kernel_weights(parts.XM[:, :0], parts.XN[:, :0], bw))
    elif d == p:
        B = np.eye(p)
        W = _weights(parts, B, bw, cfg.weight_mode)
    else:
        B = _initial_basis(data, family, cfg)
        return _alternate(data, family, cfg, parts, bw, B)

    final = _local_step(family, parts, B, W, None, cfg)
    if cfg.dispersion_mode == "estimate":
        phi = estimate_dispersion(_with_disp(data, parts.phi), family, final.xi[:, 0],
                                  final.xi[:, 1:], B, W)
        parts = _Parts(data, family, phi=phi)
        final = _local_step(family, parts, B, W, final.xi, cfg)
    trace.append(_q_value(family, parts, final.xi[:, 0], final.xi[:, 1:], B, W))
    return _make_fit(data, family, cfg, parts, B, final, W, bw, trace, converged, outer)


def _with_disp(data, phi):
    return replace(data, dispersion=phi)


def _make_fit(data, family, cfg, parts, B, fits, W, bw, trace, converged, outer) -> MadeFit:
    alpha, gamma = fits.xi[:, 0].copy(), fits.xi[:, 1:].copy()
    return MadeFit(
        family=family, config=cfg, B=B, alpha=alpha, gamma=gamma,
        local_converged=fits.converged.copy(), weights=W, bandwidth=bw, phi=float(parts.phi),
        X_train=parts.XM.copy(), y_train=data.y[parts.M].copy(),
        trials_train=parts.trials.copy(), offset_train=parts.oM.copy(),
        X_eval=parts.XN.copy(), offset_eval=parts.oN.copy(), eval_idx=parts.N.copy(),
        objective=_q_value(family, parts, alpha, gamma, B, W),
        trace=trace, converged=converged, outer_iterations=outer, names=data.names,
    )


def made_loglik(fit: MadeFit) -> float:
    """Full-data log-likelihood at the fitted regressions theta_hat(X_j).

    Requires the evaluation points to coincide with the training points.
    """
    fam = fit.family
    ys = fit.ys_train
    if fit.X_eval.shape != fit.X_train.shape or not np.array_equal(fit.X_eval, fit.X_train):
        raise ValueError("likelihood needs evaluation points equal to the training points")
    return float(np.sum(fam.loglik(ys, fit.theta_eval, fit.phi, fit.trials_train)))


__all__ = [
    "Dataset", "MadeConfig", "MadeFit", "objective_q", "gradient_q_wrt_b", "init_pfc",
    "fit", "fit_extension", "complement_basis", "estimate_dispersion", "subspace_distance", "made_loglik", "random_basis",
    "SupportError",
]
