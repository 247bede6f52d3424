"""Choosing the dimension of the reduction.

Three procedures are provided: a sequential permutation test on the local
loadings of one extra direction, a parametric bootstrap of a likelihood-ratio
type statistic, and K-fold cross-validation of prediction loss.  The two
tests run for d0 = 0, 1, ... and stop at the first d0 that is not rejected.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ._parallel import child_seeds, pool_map, resolve_threads
from .expfam import Family
from .made import (Dataset, MadeConfig, MadeFit, complement_basis, fit, fit_extension,
                   init_pfc, made_loglik)
from .predict import predict

SUMMARIES: dict[str, Callable[[np.ndarray], float]] = {
    "mean": lambda g: float(np.mean(g)),
    "mean-abs": lambda g: float(np.mean(np.abs(g))),
    "median": lambda g: float(np.median(g)),
}

LOSSES = ("squared", "absolute", "misclass")


class DimensionWarning(RuntimeWarning):
    pass


@dataclass
class TestOutcome:
    """One test of H0: d = d0 against d = d0 + 1."""

    __test__ = False  # not a pytest class

    method: str
    d0: int
    statistic: float
    p_value: float
    replicates: np.ndarray
    n_failed: int = 0
    level: float = 0.05

    @property
    def rejected(self) -> bool:
        return bool(np.isfinite(self.p_value) and self.p_value <= self.level)


@dataclass
class DimTestResult:
    """Outcome of a dimension selection run.

    ``records`` holds one entry per tested d0 (tests) or per candidate d
    (cross-validation, where ``statistic`` is the summed held-out loss and
    ``p_value`` is NaN).
    """

    d_hat: int
    method: str
    records: list = field(default_factory=list)
    seed: Optional[int] = None
    level: Optional[float] = None
    partial: bool = False
    notes: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [{"method": self.method, "d0": r.d0, "statistic": r.statistic,
                 "p_value": r.p_value} for r in self.records]

    def to_dict(self) -> dict:
        return {"d_hat": int(self.d_hat), "method": self.method, "seed": self.seed,
                "level": self.level, "partial": self.partial, "notes": list(self.notes),
                "records": [{k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                             for k, v in row.items()} for row in self.rows()]}


# -- helpers ------------------------------------------------------------------

def _entropy(seed):
    return int(np.random.SeedSequence(seed).entropy) if seed is None else seed


def _config(config, **kw) -> MadeConfig:
    cfg = config if config is not None else MadeConfig()
    return replace(cfg, **kw)


def _quiet(func, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return func(*args, **kwargs)


def _permuted(data: Dataset, idx) -> Dataset:
    # The response travels with its trial count and offset.
    return replace(data, y=data.y[idx], trials=data.trials[idx], offset=data.offset[idx])


def _collect(values, method, d0):
    vals = [v for v in values if v is not None and np.isfinite(v)]
    failed = len(values) - len(vals)
    if failed:
        warnings.warn(f"{method} d0={d0}: {failed} of {len(values)} replicate fit(s) failed "
                      f"and were dropped", DimensionWarning, stacklevel=3)
    return np.asarray(vals, dtype=float), failed


# -- permutation test ---------------------------------------------------------

def augmented_loadings(data: Dataset, family: Family, config: MadeConfig, d0: int,
                       B0=None) -> np.ndarray:
    """Local loadings gamma_j on the extra direction of the d0 + 1 model."""
    if d0 == 0:
        res = fit(data, family, _config(config, d=1))
    else:
        res = fit_extension(data, family, B0, config)
    return res.gamma[:, -1]


def _perm_task(args):
    data, family, config, d0, B0, summary, seed = args
    idx = np.random.default_rng(seed).permutation(data.n)
    try:
        g = _quiet(augmented_loadings, _permuted(data, idx), family, config, d0, B0)
        return SUMMARIES[summary](g)
    except Exception:
        return None


def permutation_test(data: Dataset, family: Family, config: Optional[MadeConfig] = None,
                     d0: int = 0, R: int = 100, level: float = 0.05, seed=None,
                     summary: str = "mean", B0=None, include_identity: bool = False,
                     threads: Optional[int] = None) -> TestOutcome:
    """Permutation test of H0: d = d0 against d = d0 + 1.

    The statistic is a summary (default: the mean) of the local loadings on
    the extra direction.  For ``d0 > 0`` the null basis B0 is estimated once
    (unless given) and reused for every permutation.  The p-value is the
    fraction of permutations with ``|u_r| > |u|``.

    Parameters
    ----------
    include_identity : bool
        Use the identity as the first of the R permutations.  Its statistic
        is ``u`` itself and it is counted as an exceedance, so the p-value is
        at least 1/R.
    """
    if d0 < 0 or d0 >= data.p:
        raise ValueError(f"d0 must lie in [0, p-1] = [0, {data.p - 1}], got {d0}")
    if R < 1:
        raise ValueError("R must be >= 1")
    if summary not in SUMMARIES:
        raise ValueError(f"unknown summary {summary!r}; expected one of {tuple(SUMMARIES)}")
    cfg = config if config is not None else MadeConfig()
    if d0 > 0 and B0 is None:
        B0 = _quiet(fit, data, family, _config(cfg, d=d0)).B
    u = SUMMARIES[summary](_quiet(augmented_loadings, data, family, cfg, d0, B0))
    seeds = child_seeds(_entropy(seed), R)
    if include_identity:
        seeds = seeds[1:]
    tasks = [(data, family, cfg, d0, B0, summary, s) for s in seeds]
    reps, failed = _collect(pool_map(_perm_task, tasks, resolve_threads(threads)),
                            "permutation", d0)
    exceed = np.abs(reps) > abs(u)
    if include_identity:
        reps = np.concatenate([[u], reps])
        exceed = np.concatenate([[True], exceed])
    p = float(np.mean(exceed)) if reps.size else float("nan")
    return TestOutcome("permutation", d0, u, p, reps, failed, level)


# -- parametric bootstrap -----------------------------------------------------

def _larger_fit(data, family, cfg, null_fit: MadeFit) -> MadeFit:
    """d0 + 1 fit started from the null basis plus a PFC direction in its complement."""
    d0 = null_fit.d
    if d0 == 0:
        return fit(data, family, _config(cfg, d=1))
    if d0 + 1 == data.p:
        return fit(data, family, _config(cfg, d=data.p))
    C = complement_basis(null_fit.B)
    v = init_pfc(replace(data, X=data.X @ C), 1, family)
    start = np.column_stack([null_fit.B, C @ v])
    return fit(data, family, _config(cfg, d=d0 + 1, init="user", B0=start))


def lrt_statistic(data: Dataset, family: Family, config: MadeConfig, d0: int):
    """Return (lambda_hat, null fit)."""
    f0 = fit(data, family, _config(config, d=d0))
    f1 = _larger_fit(data, family, config, f0)
    return 2.0 * (made_loglik(f1) - made_loglik(f0)), f0


def _boot_task(args):
    data, family, config, d0, theta0, phi0, seed = args
    rng = np.random.default_rng(seed)
    try:
        y = family.sample(theta0, rng, phi=phi0, trials=data.trials)
        lam, _ = _quiet(lrt_statistic, data.with_response(y), family, config, d0)
        return lam
    except Exception:
        return None


def bootstrap_lrt(data: Dataset, family: Family, config: Optional[MadeConfig] = None,
                  d0: int = 0, R: int = 100, level: float = 0.05, seed=None,
                  threads: Optional[int] = None) -> TestOutcome:
    """Parametric bootstrap of lambda = 2 [log L(d0 + 1) - log L(d0)].

    Replicate responses are drawn from the null fit's regressions
    theta_0(X_j); both models are refit on every replicate and the p-value
    is the fraction with ``lambda_r >= lambda``.
    """
    if d0 < 0 or d0 >= data.p:
        raise ValueError(f"d0 must lie in [0, p-1] = [0, {data.p - 1}], got {d0}")
    if R < 1:
        raise ValueError("R must be >= 1")
    if data.train is not None or data.eval is not None:
        raise ValueError("the bootstrap test needs every observation in both roles")
    cfg = config if config is not None else MadeConfig()
    lam, f0 = _quiet(lrt_statistic, data, family, cfg, d0)
    seeds = child_seeds(_entropy(seed), R)
    tasks = [(data, family, cfg, d0, f0.theta_eval, f0.phi, s) for s in seeds]
    reps, failed = _collect(pool_map(_boot_task, tasks, resolve_threads(threads)),
                            "bootstrap", d0)
    p = float(np.mean(reps >= lam)) if reps.size else float("nan")
    return TestOutcome("bootstrap", d0, lam, p, reps, failed, level)


# -- sequential selection -----------------------------------------------------

def sequential_dimension(data: Dataset, family: Family, config: Optional[MadeConfig] = None,
                         method: str = "permutation", level: float = 0.05, R: int = 100,
                         seed=None, budget: Optional[float] = None,
                         max_d: Optional[int] = None, summary: str = "mean",
                         threads: Optional[int] = None) -> DimTestResult:
    """Test d0 = 0, 1, ... and return the first d0 that is not rejected.

    ``budget`` is a wall-clock limit in seconds checked before each test; when
    it runs out the result is flagged ``partial`` and ``d_hat`` is the first
    untested d0 (a lower bound).
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if method not in ("permutation", "bootstrap"):
        raise ValueError(f"method must be 'permutation' or 'bootstrap', got {method!r}")
    seed = _entropy(seed)
    top = data.p if max_d is None else min(int(max_d), data.p)
    seeds = child_seeds(seed, max(top, 1))
    out = DimTestResult(d_hat=top, method=method, seed=seed, level=level)
    start = time.monotonic()
    for d0 in range(top):
        if budget is not None and time.monotonic() - start > budget:
            out.d_hat, out.partial = d0, True
            out.notes.append(f"budget of {budget:g}s exhausted before testing d0={d0}")
            return out
        if method == "permutation":
            rec = permutation_test(data, family, config, d0, R, level, seeds[d0], summary,
                                   threads=threads)
        else:
            rec = bootstrap_lrt(data, family, config, d0, R, level, seeds[d0], threads=threads)
        out.records.append(rec)
        if rec.n_failed:
            out.notes.append(f"d0={d0}: {rec.n_failed} replicate(s) dropped")
        if not rec.rejected:
            out.d_hat = d0
            return out
    return out


# -- cross-validation ---------------------------------------------------------

@dataclass
class CVRecord:
    d0: int
    statistic: float
    p_value: float = float("nan")
    fold_losses: Optional[np.ndarray] = None


def _loss(kind, y, yhat) -> np.ndarray:
    if kind == "squared":
        return (y - yhat) ** 2
    if kind == "absolute":
        return np.abs(y - yhat)
    if kind == "misclass":
        return (y != (yhat >= 0.5)).astype(float)
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def cv_folds(n: int, K: int, seed=None) -> list[np.ndarray]:
    """Random partition of range(n) into K folds; K = n gives leave-one-out in order."""
    if not 2 <= K <= n:
        raise ValueError(f"K must satisfy 2 <= K <= n={n}, got {K}")
    if K == n:
        return [np.array([i]) for i in range(n)]
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, K)]


def _cv_task(args):
    data, family, cfg, d, test, loss, predictor = args
    train = np.setdiff1d(np.arange(data.n), test)
    res = _quiet(fit, data.subset(train), family, _config(cfg, d=d))
    yhat = _quiet(predict, res, data.X[test], predictor, data.offset[test])
    y = family.scale_response(data.y[test], data.trials[test])
    return float(np.sum(_loss(loss, y, yhat)))


def cv_dimension(data: Dataset, family: Family, config: Optional[MadeConfig] = None,
                 K: int = 5, loss: str = "squared", predictor: str = "NW", seed=None,
                 dims: Optional[Sequence[int]] = None,
                 threads: Optional[int] = None) -> DimTestResult:
    """K-fold cross-validated prediction loss for each candidate dimension.

    Returns the smallest d attaining the minimum summed held-out loss.  Folds
    whose training responses are all identical are skipped with a warning.
    """
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    cfg = config if config is not None else MadeConfig()
    seed = _entropy(seed)
    dims = list(range(data.p + 1)) if dims is None else sorted(int(d) for d in dims)
    folds = cv_folds(data.n, K, seed)
    ys = family.scale_response(data.y, data.trials)
    kept = []
    for k, test in enumerate(folds):
        train = np.setdiff1d(np.arange(data.n), test)
        if np.ptp(ys[train]) == 0:
            warnings.warn(f"fold {k}: training responses are all identical; fold skipped",
                          DimensionWarning, stacklevel=2)
            continue
        kept.append(test)
    if not kept:
        raise ValueError("every fold has a degenerate training response")
    tasks = [(data, family, cfg, d, test, loss, predictor) for d in dims for test in kept]
    flat = pool_map(_cv_task, tasks, resolve_threads(threads))
    table = np.asarray(flat, dtype=float).reshape(len(dims), len(kept))
    totals = table.sum(axis=1)
    out = DimTestResult(d_hat=dims[int(np.argmin(totals))], method="cv", seed=seed)
    out.records = [CVRecord(d, float(t), fold_losses=row) for d, t, row in zip(dims, totals, table)]
    if len(kept) < len(folds):
        out.notes.append(f"{len(folds) - len(kept)} fold(s) skipped")
    return out


__all__ = [
    "TestOutcome", "DimTestResult", "CVRecord", "permutation_test", "bootstrap_lrt",
    "sequential_dimension", "cv_dimension", "cv_folds", "augmented_loadings", "lrt_statistic",
    "SUMMARIES", "LOSSES",
]
