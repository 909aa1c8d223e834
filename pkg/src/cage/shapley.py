"""Global Shapley importance of features for a model's loss.

The value of a coalition ``S`` is the negative expected loss of the prediction
averaged over completions of the out-of-coalition features:

    v(S) = -E_{x,y}[ L( E[f(X) | x_S], y ) ]

``cage`` completes from the interventional distribution implied by a chain graph;
``sage`` resamples each missing feature independently from its empirical marginal.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np

from cage._rng import stream
from cage.gaussian import CoalitionSampler, GibbsConfig
from cage.predictors import as_feature_matrix, compute_loss

METHODS = ("cage", "sage")
MAX_ORACLE_FEATURES = 20
TRACE_EVERY = 100

# stream tags keep value-function draws and permutation draws apart
_VALUE_STREAM = 1
_PERM_STREAM = 2


class MarginalSampler:
    """Independent per-feature resampling from a pool of rows."""

    def __init__(self, background):
        self.background = np.asarray(background, dtype=float)
        if self.background.ndim != 2 or self.background.shape[0] < 1:
            raise ValueError("background must be a non-empty 2-d table")

    def complete(self, rows, coalition_idx, rng):
        X = np.array(rows, dtype=float, copy=True)
        R, d = X.shape
        keep = set(coalition_idx)
        for j in range(d):
            if j not in keep:
                X[:, j] = self.background[rng.integers(0, self.background.shape[0], R), j]
        return X


class _IndexedSampler:
    """Adapter so the Gaussian sampler accepts column indices like the marginal one."""

    def __init__(self, sampler, names):
        self.sampler = sampler
        self.names = names

    def complete(self, rows, coalition_idx, rng):
        return self.sampler.complete(rows, [self.names[j] for j in coalition_idx], rng)


def make_completer(method, features, joint=None, chain=None, background=None,
                   sampler="exact", gibbs=GibbsConfig()):
    """Object with ``complete(rows, coalition_idx, rng)`` for the requested method."""
    if method == "sage":
        return MarginalSampler(background)
    if method != "cage":
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if chain is None or joint is None:
        raise ValueError("cage requires a chain graph and a fitted joint Gaussian")
    if tuple(joint.names) != tuple(features):
        joint = joint.marginal(features)
    return _IndexedSampler(CoalitionSampler(joint, chain, mode=sampler, gibbs=gibbs), tuple(features))


def _mask(idx):
    m = 0
    for j in idx:
        m |= 1 << j
    return m


def _members(mask, d):
    return [j for j in range(d) if mask >> j & 1]


def _predict(model, X):
    return np.asarray(model.predict(X), dtype=float)


def coalition_losses(completer, coalition_idx, X, y, model, loss, M, rng, mean_pred=None):
    """Per-row loss of the prediction averaged over ``M`` completions."""
    K, d = X.shape
    if len(coalition_idx) == 0:
        mp = float(np.mean(_predict(model, X))) if mean_pred is None else mean_pred
        return compute_loss(loss, np.full(K, mp), y, reduce=False)
    if len(set(coalition_idx)) == d:
        return compute_loss(loss, _predict(model, X), y, reduce=False)
    rows = np.repeat(X, M, axis=0)
    completed = completer.complete(rows, list(coalition_idx), rng)
    preds = _predict(model, completed).reshape(K, M).mean(axis=1)
    return compute_loss(loss, preds, y, reduce=False)


def _prepare(X, y, model):
    features = tuple(model.feature_names_)
    X = as_feature_matrix(X, features)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError(f"{X.shape[0]} feature rows but {y.size} targets")
    if X.shape[0] == 0:
        raise ValueError("no data rows")
    return X, y, features


def estimate_value(method, coalition, X, y, model, loss="mse", joint=None, chain=None, M=64,
                   seed=0, sampler="exact", background=None, gibbs=GibbsConfig(),
                   return_stderr=False):
    """Monte Carlo estimate of ``v(S)`` over every row of ``(X, y)``.

    ``coalition`` holds feature names. The empty coalition uses the loss of the
    dataset-mean prediction; the full coalition uses direct predictions. With
    ``return_stderr`` the standard error across rows is returned as well.
    """
    X, y, features = _prepare(X, y, model)
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    unknown = set(coalition) - set(features)
    if unknown:
        raise ValueError(f"coalition has unknown feature {sorted(unknown)[0]!r}")
    idx = sorted(features.index(f) for f in coalition)
    completer = make_completer(method, features, joint, chain,
                               X if background is None else background, sampler, gibbs)
    rng = stream(seed, _VALUE_STREAM, _mask(idx))
    losses = coalition_losses(completer, idx, X, y, model, loss, M, rng)
    value = -float(np.mean(losses))
    if not return_stderr:
        return value
    se = float(np.std(losses, ddof=1) / np.sqrt(losses.size)) if losses.size > 1 else 0.0
    return value, se


@dataclass
class ExplanationResult:
    method: str
    features: tuple
    phi: np.ndarray
    stderr: np.ndarray
    n_outer: int
    n_inner: int
    seed: int
    value_empty: float
    value_full: float
    trace: list = field(default_factory=list)
    oracle: bool = False
    sampler: str = "exact"

    def as_dict(self):
        return {
            "method": self.method,
            "features": list(self.features),
            "phi": {f: float(p) for f, p in zip(self.features, self.phi)},
            "stderr": {f: float(s) for f, s in zip(self.features, self.stderr)},
            "n_outer": int(self.n_outer),
            "n_inner": int(self.n_inner),
            "seed": int(self.seed),
            "value_empty": float(self.value_empty),
            "value_full": float(self.value_full),
            "trace": [{"iteration": int(it), "phi": [float(p) for p in phi]} for it, phi in self.trace],
            "oracle": bool(self.oracle),
            "sampler": self.sampler,
        }

    @classmethod
    def from_dict(cls, d):
        feats = tuple(d["features"])
        return cls(
            method=d["method"], features=feats,
            phi=np.array([d["phi"][f] for f in feats]),
            stderr=np.array([d["stderr"][f] for f in feats]),
            n_outer=d["n_outer"], n_inner=d["n_inner"], seed=d["seed"],
            value_empty=d["value_empty"], value_full=d["value_full"],
            trace=[(t["iteration"], np.array(t["phi"])) for t in d.get("trace", [])],
            oracle=d.get("oracle", False), sampler=d.get("sampler", "exact"),
        )

    def efficiency_gap(self):
        return float(np.sum(self.phi) - (self.value_full - self.value_empty))


def _permutation_deltas(i, ctx):
    """Loss reductions of one outer iteration, indexed by feature."""
    X, y, model, loss, M, seed, completer, mean_pred = ctx
    rng = stream(seed, _PERM_STREAM, i)
    K, d = X.shape
    k = int(rng.integers(K))
    order = rng.permutation(d)
    x = X[k:k + 1]
    yk = y[k:k + 1]
    loss_prev = compute_loss(loss, np.array([mean_pred]), yk)
    deltas = np.zeros(d)
    coalition = []
    for j in order:
        coalition.append(int(j))
        current = coalition_losses(completer, coalition, x, yk, model, loss, M, rng)[0]
        deltas[j] = loss_prev - current
        loss_prev = current
    if not np.all(np.isfinite(deltas)):
        raise FloatingPointError(f"non-finite loss delta in outer iteration {i}")
    return deltas


def estimate_permutation(method, X, y, model, loss="mse", joint=None, chain=None, N=2000, M=64,
                         seed=0, workers=1, sampler="exact", background=None,
                         gibbs=GibbsConfig(), target_stderr=None):
    """Permutation-sampling estimate of every feature's global Shapley value.

    Each outer iteration draws one instance and one feature ordering from its own
    counter-keyed stream, so results do not depend on ``workers``. Iterations run in
    blocks of 100; with ``target_stderr`` the run stops after the first block at which
    every standard error is below the threshold.
    """
    X, y, features = _prepare(X, y, model)
    if N < 1 or M < 1:
        raise ValueError(f"N and M must be >= 1, got N={N}, M={M}")
    completer = make_completer(method, features, joint, chain,
                               X if background is None else background, sampler, gibbs)
    mean_pred = float(np.mean(_predict(model, X)))
    ctx = (X, y, model, loss, M, seed, completer, mean_pred)
    d = len(features)
    deltas = np.zeros((N, d))
    trace = []
    done = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while done < N:
            block = range(done, min(done + TRACE_EVERY, N))
            if pool is None:
                rows = [_permutation_deltas(i, ctx) for i in block]
            else:
                rows = list(pool.map(_permutation_deltas, block, [ctx] * len(block)))
            deltas[block.start:block.stop] = rows
            done = block.stop
            if done % TRACE_EVERY == 0:
                trace.append((done, deltas[:done].mean(axis=0)))
            if target_stderr is not None and done > 1:
                se = deltas[:done].std(axis=0, ddof=1) / np.sqrt(done)
                if np.all(se < target_stderr):
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    deltas = deltas[:done]
    phi = deltas.mean(axis=0)
    stderr = deltas.std(axis=0, ddof=1) / np.sqrt(done) if done > 1 else np.zeros(d)
    empty = -float(np.mean(compute_loss(loss, np.full(y.size, mean_pred), y, reduce=False)))
    full = -float(np.mean(compute_loss(loss, _predict(model, X), y, reduce=False)))
    return ExplanationResult(method, features, phi, stderr, done, M, seed, empty, full, trace,
                             sampler=sampler if method == "cage" else "marginal")


@dataclass
class CoalitionValueCache:
    """Value estimates for every subset, indexed by bitmask over ``features``."""

    features: tuple
    values: np.ndarray
    stderr: np.ndarray
    method: str = "game"
    M: int = 0
    seed: int = 0

    def __post_init__(self):
        self.features = tuple(self.features)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.zeros_like(self.values) if self.stderr is None else np.asarray(self.stderr, float)

    @property
    def d(self):
        return len(self.features)

    @classmethod
    def from_values(cls, features, values, method="game"):
        """Cache for an explicit game: ``values`` is a mapping of subsets or a 2^d array."""
        features = tuple(features)
        d = len(features)
        if isinstance(values, dict):
            arr = np.full(1 << d, np.nan)
            for subset, v in values.items():
                arr[_mask(features.index(f) for f in subset)] = v
        else:
            arr = np.asarray(values, dtype=float)
        return cls(features, arr, None, method=method)

    def value(self, subset):
        return float(self.values[_mask(self.features.index(f) for f in subset)])

    def check_complete(self):
        if self.values.shape != (1 << self.d,):
            raise ValueError(f"cache holds {self.values.size} values, expected {1 << self.d}")
        bad = np.flatnonzero(~np.isfinite(self.values))
        if bad.size:
            missing = [self.features[j] for j in _members(int(bad[0]), self.d)]
            raise ValueError(f"cache is missing subset {{{', '.join(missing)}}}")

    def combine(self, other, a=1.0, b=1.0):
        if self.features != other.features:
            raise ValueError("caches are over different features")
        return CoalitionValueCache(self.features, a * self.values + b * other.values, None)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bitmask", "members", "value", "stderr"])
        for mask in range(1 << self.d):
            members = ";".join(self.features[j] for j in _members(mask, self.d))
            w.writerow([mask, members, repr(float(self.values[mask])), repr(float(self.stderr[mask]))])
        return buf.getvalue()


def build_value_cache(method, X, y, model, loss="mse", joint=None, chain=None, M=64, seed=0,
                      sampler="exact", background=None, gibbs=GibbsConfig()):
    """Estimate ``v(S)`` for all ``2^d`` subsets with the same streams as :func:`estimate_value`."""
    X, y, features = _prepare(X, y, model)
    d = len(features)
    if d > MAX_ORACLE_FEATURES:
        raise ValueError(f"{d} features exceeds the enumeration limit of {MAX_ORACLE_FEATURES}")
    values = np.empty(1 << d)
    stderr = np.empty(1 << d)
    for mask in range(1 << d):
        subset = [features[j] for j in _members(mask, d)]
        values[mask], stderr[mask] = estimate_value(
            method, subset, X, y, model, loss, joint, chain, M, seed, sampler,
            background, gibbs, return_stderr=True)
    return CoalitionValueCache(features, values, stderr, method=method, M=M, seed=seed)


def _popcounts(d):
    masks = np.arange(1 << d)
    return np.array([bin(m).count("1") for m in masks]), masks


def _shapley_weights(d):
    """Weight of ``v(S + i) - v(S)`` in the Shapley sum, by ``|S|``."""
    return np.array([1.0 / (d * comb(d - 1, s)) for s in range(d)])


def shapley_coefficients(d):
    """Matrix ``C`` with ``phi = C @ values`` over bitmask-indexed values."""
    pop, masks = _popcounts(d)
    w = _shapley_weights(d)
    C = np.zeros((d, 1 << d))
    for i in range(d):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        C[i, without | bit] += w[pop[without]]
        C[i, without] -= w[pop[without]]
    return C


def exact_enumerate(cache):
    """Shapley values by full subset enumeration of a complete cache."""
    cache.check_complete()
    d = cache.d
    pop, masks = _popcounts(d)
    w = _shapley_weights(d)
    v = cache.values
    phi = np.empty(d)
    for i in range(d):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(w[pop[without]] * (v[without | bit] - v[without]))
    return ExplanationResult(cache.method, cache.features, phi, np.zeros(d), 0, cache.M, cache.seed,
                             float(v[0]), float(v[-1]), oracle=True)


def enumeration_stderr(cache):
    """Standard error of each enumerated value propagated from the cache's own errors."""
    C = shapley_coefficients(cache.d)
    return np.sqrt((C ** 2) @ (cache.stderr ** 2))


def wls_shapley(cache):
    """Shapley values as the kernel-weighted least-squares fit of the game.

    Minimizes ``sum_S w(S) (v(S) - v(0) - sum_{i in S} phi_i)^2`` over proper non-empty
    subsets with ``w(S) = (d-1) / (C(d,|S|) |S| (d-|S|))``, subject to
    ``sum phi = v(full) - v(0)``.
    """
    cache.check_complete()
    d = cache.d
    v = cache.values
    total = v[-1] - v[0]
    if d == 1:
        return np.array([total])
    pop, masks = _popcounts(d)
    proper = masks[(pop > 0) & (pop < d)]
    Z = ((proper[:, None] >> np.arange(d)) & 1).astype(float)
    s = pop[proper]
    weights = (d - 1) / (np.array([comb(d, k) for k in s], dtype=float) * s * (d - s))
    b = v[proper] - v[0]
    ZtW = Z.T * weights
    kkt = np.zeros((d + 1, d + 1))
    kkt[:d, :d] = 2.0 * ZtW @ Z
    kkt[:d, d] = 1.0
    kkt[d, :d] = 1.0
    rhs = np.concatenate([2.0 * ZtW @ b, [total]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("weighted least-squares system is singular") from exc
    return sol[:d]
