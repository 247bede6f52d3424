"""CSV ingestion, key=value configuration files and fit documents.

Fit documents are JSON with a format tag and version.  Matrices are stored
row-major as nested lists; floats go through ``repr`` so a save/load cycle
is exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .expfam import Family
from .kernel import Bandwidth, kernel_weights
from .made import Dataset, MadeConfig, MadeFit

FIT_FORMAT = "madesdr-fit"
FIT_VERSION = 1

MISSING_TOKENS = {"", "na", "nan", "null", "none", "?"}


class DataError(ValueError):
    """Input data could not be read or is unusable."""


# -- CSV ingestion ------------------------------------------------------------

@dataclass
class Table:
    header: list
    rows: list

    def column(self, name: str) -> list:
        if name not in self.header:
            raise DataError(f"column {name!r} not found; available: {', '.join(self.header)}")
        k = self.header.index(name)
        return [r[k] for r in self.rows]


def read_table(path) -> Table:
    """Rectangular CSV with a header row."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = [[c.strip() for c in r] for r in rows[1:]]
    if not body:
        raise DataError(f"{path}: header but no data rows")
    bad = [i + 2 for i, r in enumerate(body) if len(r) != len(header)]
    if bad:
        raise DataError(f"{path}: rows {_fmt_rows(bad)} do not have {len(header)} fields")
    return Table(header, body)


def _fmt_rows(rows, limit=20) -> str:
    shown = ", ".join(str(r) for r in rows[:limit])
    return shown + (f" (+{len(rows) - limit} more)" if len(rows) > limit else "")


def numeric_columns(table: Table, names: Sequence[str]) -> np.ndarray:
    """Named columns as a float matrix; missing or non-numeric cells raise DataError."""
    cols = [table.column(n) for n in names]
    missing = sorted({i + 2 for col in cols for i, v in enumerate(col)
                      if v.lower() in MISSING_TOKENS})
    if missing:
        raise DataError(f"missing values in rows {_fmt_rows(missing)} "
                        f"(line numbers, header is line 1)")
    out = np.empty((len(table.rows), len(names)))
    for k, (name, col) in enumerate(zip(names, cols)):
        for i, v in enumerate(col):
            try:
                out[i, k] = float(v)
            except ValueError:
                raise DataError(f"non-numeric value {v!r} in column {name!r}, line {i + 2}") from None
    if not np.all(np.isfinite(out)):
        raise DataError("non-finite numeric values in input")
    return out


def standardize(X, center=None, scale=None):
    """Center and scale columns to unit (n - 1) variance.

    Returns ``(Xs, center, scale)``; pass a stored center/scale to apply an
    existing transformation to new data.
    """
    X = np.asarray(X, dtype=float)
    if center is None:
        center = X.mean(axis=0)
        scale = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
        scale = np.where(scale > 0, scale, 1.0)
    return (X - center) / scale, np.asarray(center, float), np.asarray(scale, float)


def ingest_csv(path, response: str, predictors: Optional[Sequence[str]] = None,
               trials: Optional[str] = None, offset: Optional[str] = None,
               standardize_x: bool = False, exclude: Sequence[str] = ()):
    """Read a CSV into a :class:`Dataset`.

    Predictors default to every column other than the response, trials,
    offset and ``exclude`` columns.  Returns ``(dataset, preprocessing)``
    where ``preprocessing`` records the centering and scaling applied (or is
    None).
    """
    table = read_table(path)
    special = {response, trials, offset, *exclude} - {None}
    if predictors is None:
        predictors = [h for h in table.header if h not in special]
    predictors = list(predictors)
    if not predictors:
        raise DataError("no predictor columns")
    extra = [c for c in (trials, offset) if c]
    # One pass over every used column so all offending rows are reported together.
    M = numeric_columns(table, predictors + [response] + extra)
    X, y = M[:, :len(predictors)], M[:, len(predictors)]
    m = M[:, len(predictors) + 1 + extra.index(trials)] if trials else None
    o = M[:, len(predictors) + 1 + extra.index(offset)] if offset else None
    if m is not None and (np.any(m < 1) or np.any(m != np.round(m))):
        raise DataError("trial counts must be positive integers")
    prep = None
    if standardize_x:
        X, center, scale = standardize(X)
        prep = {"center": center.tolist(), "scale": scale.tolist()}
    return Dataset(y, X, trials=m, offset=o, names=predictors), prep


# -- key=value configuration ----------------------------------------------------

def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


# -- fit documents --------------------------------------------------------------

def _matrix(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.reshape(a.shape[0], -1).tolist() if a.ndim == 2
            else a.tolist()}


def _unmatrix(doc) -> np.ndarray:
    shape = tuple(doc["shape"])
    return np.asarray(doc["data"], dtype=float).reshape(shape)


def fit_to_dict(fit: MadeFit, preprocessing: Optional[dict] = None) -> dict:
    cfg = asdict(fit.config)
    cfg["B0"] = None if fit.config.B0 is None else _matrix(fit.config.B0)
    return {
        "format": FIT_FORMAT,
        "version": FIT_VERSION,
        "family": {"name": fit.family.name, "shape": fit.family.shape},
        "config": cfg,
        "B": _matrix(fit.B),
        "bandwidth": {"h": fit.bandwidth.h, "c": fit.bandwidth.c},
        "phi": fit.phi,
        "local_fits": {"alpha": fit.alpha.tolist(), "gamma": _matrix(fit.gamma),
                       "converged": [bool(c) for c in fit.local_converged]},
        "objective": fit.objective,
        "trace": [float(v) for v in fit.trace],
        "converged": bool(fit.converged),
        "outer_iterations": int(fit.outer_iterations),
        "names": None if fit.names is None else list(fit.names),
        "training": {"X": _matrix(fit.X_train), "y": fit.y_train.tolist(),
                     "trials": fit.trials_train.tolist(), "offset": fit.offset_train.tolist()},
        "evaluation": {"X": _matrix(fit.X_eval), "offset": fit.offset_eval.tolist(),
                       "index": [int(i) for i in fit.eval_idx]},
        "preprocessing": preprocessing,
    }


def fit_from_dict(doc: dict) -> MadeFit:
    if doc.get("format") != FIT_FORMAT:
        raise DataError("not a fit document")
    if doc.get("version") != FIT_VERSION:
        raise DataError(f"unsupported fit document version {doc.get('version')!r}")
    fam = Family(doc["family"]["name"], doc["family"]["shape"])
    cfg = dict(doc["config"])
    cfg["B0"] = None if cfg["B0"] is None else _unmatrix(cfg["B0"])
    config = MadeConfig(**cfg)
    B = _unmatrix(doc["B"])
    bw = Bandwidth(h=doc["bandwidth"]["h"], c=doc["bandwidth"]["c"])
    tr, ev = doc["training"], doc["evaluation"]
    XM, XN = _unmatrix(tr["X"]), _unmatrix(ev["X"])
    if config.weight_mode == "raw":
        W = kernel_weights(XM, XN, bw)
    else:
        W = kernel_weights(XM @ B, XN @ B, bw)
    lf = doc["local_fits"]
    return MadeFit(
        family=fam, config=config, B=B, alpha=np.asarray(lf["alpha"], float),
        gamma=_unmatrix(lf["gamma"]), local_converged=np.asarray(lf["converged"], bool),
        weights=W, bandwidth=bw, phi=float(doc["phi"]), X_train=XM,
        y_train=np.asarray(tr["y"], float), trials_train=np.asarray(tr["trials"], float),
        offset_train=np.asarray(tr["offset"], float), X_eval=XN,
        offset_eval=np.asarray(ev["offset"], float), eval_idx=np.asarray(ev["index"], int),
        objective=float(doc["objective"]), trace=list(doc["trace"]),
        converged=bool(doc["converged"]), outer_iterations=int(doc["outer_iterations"]),
        names=doc["names"],
    )


def save_fit(fit: MadeFit, path, preprocessing: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_to_dict(fit, preprocessing), fh, indent=1)


def load_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read fit document {path}: {exc}") from None


def load_fit(path) -> MadeFit:
    return fit_from_dict(load_document(path))


def write_rows(path, rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> None:
    """Write dict rows as CSV (floats via repr for exact round trips)."""
    rows = list(rows)
    columns = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in (r[c] for c in columns)])
