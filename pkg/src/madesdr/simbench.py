"""Simulation designs and experiment runners.

Designs reproduce the single-index settings used to study MADE: an inverse
binomial design, a forward Gaussian design with mixed-type predictors and a
forward Poisson design, plus their prediction-study variants.  All share the
direction beta = (-1, 1, -1, 2, -2, 2) / sqrt(15).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from ._parallel import child_seeds, pool_map, resolve_threads
from .expfam import Family
from .made import Dataset, MadeConfig, fit, subspace_distance
from .predict import prediction_error, predict

BETA = np.array([-1.0, 1.0, -1.0, 2.0, -2.0, 2.0]) / np.sqrt(15.0)

DESIGNS = (
    "binomial-inverse",
    "gaussian-forward",
    "poisson-forward",
    "binomial-pred",
    "gaussian-pred",
    "poisson-pred",
)

DESIGN_FAMILY = {
    "binomial-inverse": "binomial",
    "gaussian-forward": "gaussian",
    "poisson-forward": "poisson",
    "binomial-pred": "binomial",
    "gaussian-pred": "gaussian",
    "poisson-pred": "poisson",
}

# Bandwidth multipliers used by the experiment runners (h = c n^(-1/5) at d = 1).
DEFAULT_C = {
    "binomial": 1.0,
    "gaussian": 0.5,
    "poisson": 1.0,
}


@dataclass(frozen=True)
class SimDesign:
    name: str
    n: int
    n_e: int = 0
    seed: int = 0
    sigma: float = 0.5

    def __post_init__(self):
        if self.name not in DESIGNS:
            raise ValueError(f"unknown design {self.name!r}; expected one of {DESIGNS}")

    @property
    def family(self) -> Family:
        fam = DESIGN_FAMILY[self.name]
        return Family(fam, 0.3 ** 2) if fam == "gaussian" else Family(fam)

    @property
    def beta(self) -> np.ndarray:
        return BETA.copy()


def gaussian_mean(u):
    """exp(1.8 u) / (1 + exp(5 u^2))."""
    u = np.asarray(u, dtype=float)
    return np.exp(1.8 * u - np.logaddexp(0.0, 5.0 * u * u))


def poisson_mean(u, scale=3.5):
    return scale * np.exp(np.sin(np.pi * np.asarray(u, dtype=float) / 2.0))


def _mixed_predictors(n, rng):
    return np.column_stack([
        rng.binomial(1, 0.7, n),
        rng.binomial(5, 0.8, n),
        rng.exponential(1 / 3.0, n),   # rate 3
        rng.exponential(1 / 3.0, n),
        rng.uniform(-2.0, 2.0, n),
        rng.gamma(5.0, 1 / 10.0, n),   # shape 5, rate 10
    ]).astype(float)


def _draw(name, n, rng, sigma):
    if n == 0:
        return np.zeros(0), np.zeros((0, 6))
    if name in ("binomial-inverse", "binomial-pred"):
        prob = 0.7 if name == "binomial-inverse" else 0.52
        y = rng.binomial(1, prob, n).astype(float)
        X = y[:, None] * BETA[None, :] + sigma * rng.standard_normal((n, 6))
        return y, X
    if name in ("gaussian-forward", "gaussian-pred"):
        X = _mixed_predictors(n, rng)
        y = rng.normal(gaussian_mean(X @ BETA), 0.3)
        return y, X
    if name == "poisson-forward":
        X = rng.uniform(0.0, 3.0, (n, 6))
        return rng.poisson(poisson_mean(X @ BETA, 3.5)).astype(float), X
    X = rng.uniform(-1.0, 2.0, (n, 6))
    return rng.poisson(poisson_mean(X @ BETA, 4.0)).astype(float), X


def generate(design: SimDesign, rng: Optional[np.random.Generator] = None):
    """Draw a training set and, when ``n_e > 0``, an independent test set.

    Returns ``(train, test)``; ``test`` is None when ``n_e == 0``.
    """
    rng = np.random.default_rng(design.seed) if rng is None else rng
    y, X = _draw(design.name, design.n, rng, design.sigma)
    train = Dataset(y, X)
    if design.n_e:
        ye, Xe = _draw(design.name, design.n_e, rng, design.sigma)
        return train, Dataset(ye, Xe)
    return train, None


def _config_for(family: Family, config: Optional[MadeConfig]) -> MadeConfig:
    if config is not None:
        return config
    return MadeConfig(d=1, c=DEFAULT_C[family.name])


def _distance_task(args):
    name, n, rep, seed, config = args
    design = SimDesign(name, n, seed=seed)
    train, _ = generate(design)
    cfg = _config_for(design.family, config)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit(train, design.family, cfg)
        return {"design": name, "n": n, "replicate": rep, "seed": seed,
                "rho": subspace_distance(design.beta, res.B), "converged": res.converged,
                "error": ""}
    except Exception as exc:  # recorded, not raised: one bad replicate should not sink a table
        return {"design": name, "n": n, "replicate": rep, "seed": seed, "rho": float("nan"),
                "converged": False, "error": f"{type(exc).__name__}: {exc}"}


def run_distance_experiment(design: str, n_grid: Sequence[int] = (25, 50, 100, 200, 400),
                            replicates: int = 20, config: Optional[MadeConfig] = None,
                            seed: int = 0, threads: Optional[int] = None) -> list[dict]:
    """rho(S_B, S_Bhat) for each sample size and replicate (long format)."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    tasks = []
    for n in n_grid:
        seeds = child_seeds([seed, int(n), DESIGNS.index(design)], replicates)
        tasks += [(design, int(n), r, s, config) for r, s in enumerate(seeds)]
    return pool_map(_distance_task, tasks, resolve_threads(threads))


def _prediction_task(args):
    name, n, n_e, rep, seed, config = args
    design = SimDesign(name, n, n_e=n_e, seed=seed)
    train, test = generate(design)
    fam = design.family
    cfg = _config_for(fam, config)
    metric = "misclass" if fam.name == "binomial" else "scaled-mse"
    rows = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit(train, fam, cfg)
            for method in ("NW", "LL1", "LL2"):
                pred = predict(res, test.X, method)
                rows.append({"design": name, "n": n, "replicate": rep, "seed": seed,
                             "predictor": method, "metric": metric,
                             "error": prediction_error(test.y, pred, metric), "failure": ""})
    except Exception as exc:
        rows.append({"design": name, "n": n, "replicate": rep, "seed": seed, "predictor": "",
                     "metric": metric, "error": float("nan"),
                     "failure": f"{type(exc).__name__}: {exc}"})
    return rows


def run_prediction_experiment(design: str, n_list: Sequence[int] = (20, 200), n_e: int = 200,
                              replicates: int = 20, config: Optional[MadeConfig] = None,
                              seed: int = 0, threads: Optional[int] = None) -> list[dict]:
    """Prediction error of NW, LL1 and LL2 on fresh test sets (long format)."""
    if n_e == 0:
        return []
    tasks = []
    for n in n_list:
        seeds = child_seeds([seed, int(n), DESIGNS.index(design)], replicates)
        tasks += [(design, int(n), n_e, r, s, config) for r, s in enumerate(seeds)]
    out = []
    for rows in pool_map(_prediction_task, tasks, resolve_threads(threads)):
        out.extend(rows)
    return out


def manifest(kind: str, design: str, seed: int, config: Optional[MadeConfig], **extra) -> dict:
    cfg = {} if config is None else {k: v for k, v in asdict(config).items() if k != "B0"}
    blob = json.dumps({"design": design, "config": cfg, **extra}, sort_keys=True, default=str)
    return {"kind": kind, "design": design, "seed": seed, "config": cfg, **extra,
            "config_hash": hashlib.sha256(blob.encode()).hexdigest()[:16]}


def median_by(rows: Iterable[dict], key: str, value: str) -> dict:
    groups: dict = {}
    for r in rows:
        v = r[value]
        if np.isfinite(v):
            groups.setdefault(r[key], []).append(v)
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}
