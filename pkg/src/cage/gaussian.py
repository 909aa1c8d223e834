"""Joint Gaussian feature model and the out-of-coalition samplers built on it.

All conditionals are derived analytically from one fitted mean and covariance.
The interventional completion follows the chain-graph factorization: components are
visited in causal order and each out-of-coalition block is drawn given every
variable in earlier components (plus, for interacting components, the block's
in-coalition members).
"""

from dataclasses import dataclass

import numpy as np

from cage._rng import stream
from cage.chain_graph import parents_of_component

DEFAULT_RIDGE = 1e-6


class ConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianModel:
    names: tuple
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size) or len(self.names) != mean.size:
            raise ValueError("mean, covariance and names disagree in dimension")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self):
        return self.mean.size

    def indices(self, features):
        pos = {n: i for i, n in enumerate(self.names)}
        try:
            return [pos[f] for f in features]
        except KeyError as exc:
            raise ConditioningError(f"unknown feature {exc.args[0]!r}") from None

    def marginal(self, features):
        idx = self.indices(features)
        return GaussianModel(tuple(features), self.mean[idx], self.covariance[np.ix_(idx, idx)])


@dataclass(frozen=True)
class GibbsConfig:
    """``sweeps`` retained states, each ``thinning`` sweeps apart, after ``burn_in`` sweeps."""

    sweeps: int = 1
    burn_in: int = 100
    thinning: int = 5

    def __post_init__(self):
        if self.sweeps < 1 or self.burn_in < 0 or self.thinning < 1:
            raise ValueError(f"invalid Gibbs configuration {self}")


def fit_gaussian(data, ridge=DEFAULT_RIDGE, names=None):
    """Column means and the unbiased sample covariance plus ``ridge * I``."""
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2 or X.shape[1] < 1:
        raise ValueError(f"need at least 2 rows and 1 column, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite entries")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1)) + ridge * np.eye(X.shape[1])
    cov = 0.5 * (cov + cov.T)
    lo = np.linalg.eigvalsh(cov)[0]
    if not lo > 0:
        raise ConditioningError(
            f"covariance is degenerate (smallest eigenvalue {lo:.3g}); increase ridge")
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    return GaussianModel(names, X.mean(axis=0), cov)


def _regression(cov, rest, given):
    """Coefficients ``A = S_rg S_gg^-1`` and the Schur complement ``S_rr - A S_gr``."""
    S_rr = cov[np.ix_(rest, rest)]
    if not given:
        return np.zeros((len(rest), 0)), S_rr
    S_rg = cov[np.ix_(rest, given)]
    S_gg = cov[np.ix_(given, given)]
    A = np.linalg.solve(S_gg, S_rg.T).T
    schur = S_rr - A @ S_rg.T
    return A, 0.5 * (schur + schur.T)


def condition(g, given):
    """Gaussian over the remaining features given ``{feature: value}``."""
    if not given:
        return g
    g_idx = g.indices(list(given))
    rest = [i for i in range(g.dim) if i not in set(g_idx)]
    if not rest:
        raise ConditioningError("cannot condition on every variable")
    values = np.array([given[f] for f in given], dtype=float)
    A, cov = _regression(g.covariance, rest, g_idx)
    mean = g.mean[rest] + A @ (values - g.mean[g_idx])
    return GaussianModel(tuple(g.names[i] for i in rest), mean, cov)


def _cholesky(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        lo = np.linalg.eigvalsh(cov)[0]
        raise ConditioningError(f"Cholesky failed; smallest eigenvalue {lo:.3g}") from None


def draw(g, n, seed=0, rng=None):
    """``n`` independent draws via the Cholesky factor; columns in ``g.names`` order."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = stream(seed) if rng is None else rng
    L = _cholesky(g.covariance)
    return g.mean + rng.standard_normal((n, g.dim)) @ L.T


class _GibbsKernel:
    """Univariate full conditionals of ``target`` within the joint over ``target + given``."""

    def __init__(self, cov, mean, target, given):
        self.joint = list(target) + list(given)
        self.k = len(target)
        sub = cov[np.ix_(self.joint, self.joint)]
        Q = np.linalg.inv(sub)
        self.mu = mean[self.joint]
        self.diag = np.diag(Q)[: self.k].copy()
        # x_j | rest = mu_j - sum_{i != j} (Q_ji / Q_jj) (x_i - mu_i)
        self.weights = Q[: self.k] / self.diag[:, None]
        for j in range(self.k):
            self.weights[j, j] = 0.0
        self.sd = 1.0 / np.sqrt(self.diag)

    def run(self, given_values, rng, cfg, retain=False):
        """Advance one chain per row of ``given_values``; return final or retained states."""
        R = given_values.shape[0]
        state = np.empty((R, len(self.joint)))
        state[:, : self.k] = self.mu[: self.k]
        state[:, self.k:] = given_values
        centered_given = given_values - self.mu[self.k:]
        kept = []
        total = cfg.burn_in + cfg.sweeps * cfg.thinning
        for sweep in range(1, total + 1):
            for j in range(self.k):
                dev = state[:, : self.k] - self.mu[: self.k]
                shift = dev @ self.weights[j, : self.k] + centered_given @ self.weights[j, self.k:]
                state[:, j] = self.mu[j] - shift + self.sd[j] * rng.standard_normal(R)
            if retain and sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0:
                kept.append(state[:, : self.k].copy())
        return np.stack(kept, axis=1) if retain else state[:, : self.k].copy()


def _check_target(g, target, given):
    target = list(target)
    if not target:
        raise ConditioningError("Gibbs target set is empty")
    overlap = set(target) & set(given)
    if overlap:
        raise ConditioningError(f"features {sorted(overlap)} are both target and given")
    # index order of the model, not caller order
    t_idx = sorted(g.indices(target))
    return t_idx, g.indices(list(given))


def gibbs_chain(g, target, given, cfg=GibbsConfig(), seed=0, rng=None):
    """Retained states of one Gibbs chain, shape ``(cfg.sweeps, len(target))``.

    Columns follow the model's feature order restricted to ``target``.
    """
    t_idx, g_idx = _check_target(g, target, given)
    kernel = _GibbsKernel(g.covariance, g.mean, t_idx, g_idx)
    values = np.array([[given[f] for f in given]], dtype=float).reshape(1, len(g_idx))
    rng = stream(seed) if rng is None else rng
    return kernel.run(values, rng, cfg, retain=True)[0]


def gibbs_draw(g, target, given, cfg=GibbsConfig(), seed=0, rng=None):
    """One joint draw of ``target`` given ``{feature: value}``; the chain's final state."""
    return gibbs_chain(g, target, given, cfg, seed=seed, rng=rng)[-1]


class CoalitionSampler:
    """Completes feature vectors for a coalition from the interventional distribution.

    Conditioning plans depend only on the coalition, so they are cached per subset and
    applied to whole batches of instances at once.
    """

    def __init__(self, joint, chain, mode="exact", gibbs=GibbsConfig()):
        if mode not in ("exact", "gibbs"):
            raise ValueError(f"mode must be 'exact' or 'gibbs', got {mode!r}")
        if set(chain.feature_universe) != set(joint.names):
            raise ValueError("chain graph and joint Gaussian cover different features")
        self.joint = joint
        self.chain = chain
        self.mode = mode
        self.gibbs = gibbs
        self._plans = {}

    def _plan(self, coalition):
        key = frozenset(coalition)
        plan = self._plans.get(key)
        if plan is not None:
            return plan
        g = self.joint
        plan = []
        for t, comp in enumerate(self.chain.components, start=1):
            out = [f for f in comp.members if f not in key]
            if not out:
                continue
            cond = sorted(g.indices(parents_of_component(self.chain, t)))
            if not comp.confounded:
                cond += g.indices([f for f in comp.members if f in key])
            tgt = sorted(g.indices(out))
            try:
                if self.mode == "gibbs" and not comp.confounded:
                    plan.append(("gibbs", tgt, cond, _GibbsKernel(g.covariance, g.mean, tgt, cond)))
                    continue
                A, cov = _regression(g.covariance, tgt, cond)
                offset = g.mean[tgt] - A @ g.mean[cond]
                if comp.confounded:
                    scale = np.sqrt(np.clip(np.diag(cov), 0.0, None))
                    plan.append(("independent", tgt, cond, (A, offset, scale)))
                else:
                    plan.append(("joint", tgt, cond, (A, offset, _cholesky(cov))))
            except (np.linalg.LinAlgError, ConditioningError) as exc:
                raise ConditioningError(f"component {t}: {exc}") from exc
        self._plans[key] = plan
        return plan

    def complete(self, rows, coalition, rng):
        """One completion per row of ``rows`` (features in ``joint.names`` order).

        Columns in ``coalition`` are kept; all others are overwritten by draws.
        """
        X = np.array(rows, dtype=float, copy=True)
        R = X.shape[0]
        for kind, tgt, cond, payload in self._plan(coalition):
            if kind == "gibbs":
                X[:, tgt] = payload.run(X[:, cond], rng, self.gibbs)
                continue
            A, offset, factor = payload
            mean = offset + X[:, cond] @ A.T
            z = rng.standard_normal((R, len(tgt)))
            X[:, tgt] = mean + (z * factor if kind == "independent" else z @ factor.T)
        return X


def sample_out_coalition(joint, chain, instance, coalition, m, mode="exact", seed=0,
                         gibbs=GibbsConfig()):
    """``m`` completed copies of ``instance`` for the given coalition.

    ``instance`` maps feature name to value and must cover the coalition.
    """
    missing = [f for f in coalition if f not in instance]
    if missing:
        raise ValueError(f"instance lacks in-coalition feature {missing[0]!r}")
    unknown = set(coalition) - set(joint.names)
    if unknown:
        raise ValueError(f"coalition has unknown feature {sorted(unknown)[0]!r}")
    base = np.array([instance.get(f, joint.mean[i]) for i, f in enumerate(joint.names)])
    rows = np.repeat(base[None, :], m, axis=0)
    if set(coalition) == set(joint.names):
        return rows
    sampler = CoalitionSampler(joint, chain, mode=mode, gibbs=gibbs)
    return sampler.complete(rows, coalition, stream(seed))
