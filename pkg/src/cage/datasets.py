"""Synthetic benchmark data and CSV ingestion."""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from cage._rng import stream
from cage._toml import bundled_path
from cage.chain_graph import bundled_chain_graph
from cage.scm import load_scm, sample

SYNTHETIC_KINDS = ("direct_cause", "markovian", "mixed")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    target_name: str
    normalization: dict = None
    load_report: dict = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        X = np.asarray(self.X, dtype=float).reshape(-1, len(self.feature_names))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} feature rows but {y.size} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.y.size

    def columns(self):
        """Feature columns as a ``{name: array}`` table."""
        return {f: self.X[:, i] for i, f in enumerate(self.feature_names)}

    def take(self, idx):
        return replace(self, X=self.X[idx], y=self.y[idx], load_report=None)

    def is_binary(self):
        return bool(np.all(np.isin(self.y, (0.0, 1.0))))


def bundled_scm(kind, noise_param=None):
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic dataset {kind!r}; choose from {SYNTHETIC_KINDS}")
    return load_scm(bundled_path(f"{kind}.toml"), noise_param=noise_param)


def generate_synthetic(kind, n, seed=0, noise_param=None):
    """Sample ``n`` rows of a bundled SCM; returns ``(dataset, scm, chain_graph)``."""
    scm = bundled_scm(kind, noise_param)
    data = sample(scm, None, n, seed)
    cols = [scm.variables.index(f) for f in scm.features]
    ds = Dataset(data[:, cols], data[:, scm.variables.index(scm.target)], scm.features, scm.target)
    chain = bundled_chain_graph(kind, scm.features, target=scm.target)
    return ds, scm, chain


def load_csv(path, target):
    """Read a headed, comma-separated file; rows with a missing or non-numeric cell are dropped."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        if target not in header:
            raise ValueError(f"target column {target!r} not found; available columns: {header}")
        rows, dropped, read = [], 0, 0
        for raw in reader:
            if not raw:
                continue
            read += 1
            try:
                vals = [float(c) for c in raw] if len(raw) == len(header) else None
            except ValueError:
                vals = None
            if vals is None or not all(math.isfinite(v) for v in vals):
                dropped += 1
                continue
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path} has no valid rows ({dropped} dropped)")
    table = np.array(rows)
    t = header.index(target)
    features = [h for i, h in enumerate(header) if i != t]
    X = np.delete(table, t, axis=1)
    report = {"path": str(path), "rows_read": read, "rows_kept": len(rows), "rows_dropped": dropped}
    return Dataset(X, table[:, t], features, target, load_report=report)


def write_load_report(report, path):
    lines = [f"{k}: {v}" for k, v in report.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def normalize_split(d, train_fraction=0.75, seed=0, normalize=True):
    """Shuffle, split, and z-score the features with training-split statistics."""
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    if train_fraction < 1.0 and d.n < 2:
        raise ValueError("need at least 2 rows to split")
    perm = stream(seed, 7).permutation(d.n)
    n_train = int(round(train_fraction * d.n))
    train, test = d.take(perm[:n_train]), d.take(perm[n_train:])
    if not normalize:
        return train, test
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    flat = std == 0
    if np.any(flat):
        names = [f for f, z in zip(d.feature_names, flat) if z]
        warnings.warn(f"zero-variance features normalized to zero: {names}", RuntimeWarning)
    scale = np.where(flat, 1.0, std)
    record = {"mean": mean, "std": scale}
    return (replace(train, X=(train.X - mean) / scale, normalization=record),
            replace(test, X=(test.X - mean) / scale, normalization=record))


def denormalize(d):
    if d.normalization is None:
        return d
    rec = d.normalization
    return replace(d, X=d.X * rec["std"] + rec["mean"], normalization=None)
