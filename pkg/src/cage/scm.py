"""Linear-Gaussian structural causal models.

A :class:`LinearScm` is a DAG of structural equations

    X_v <- intercept_v + sum_p coef[v, p] * X_p + noise_std_v * eps_v,   eps_v ~ N(0, 1)

with mutually independent noise. Interventions replace an equation by a constant.
"""

import heapq
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cage._rng import blocked_standard_normal
from cage._toml import load_toml


class StructuralError(ValueError):
    """Raised for malformed or cyclic structural causal models."""


@dataclass(frozen=True)
class Intervention:
    """``do(X_v = value)`` for every ``(v, value)`` pair in ``assignments``."""

    assignments: dict = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, pairs):
        out = {}
        for name, value in pairs:
            if name in out:
                raise StructuralError(f"variable {name!r} assigned twice in intervention")
            out[name] = float(value)
        return cls(out)

    def __bool__(self):
        return bool(self.assignments)


@dataclass(frozen=True)
class MomentSummary:
    variables: tuple
    mean: np.ndarray
    covariance: np.ndarray

    def index(self, name):
        return self.variables.index(name)

    def var(self, name):
        i = self.index(name)
        return float(self.covariance[i, i])


@dataclass(frozen=True)
class LinearScm:
    """Immutable linear SCM; validated on construction.

    ``coefficients`` maps ``(child, parent)`` to the edge weight. ``features`` and
    ``target`` are optional metadata used when the SCM serves as a dataset generator.
    """

    variables: tuple
    intercepts: dict
    coefficients: dict
    noise_std: dict
    name: str = "scm"
    features: tuple = ()
    target: str = ""

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "features", tuple(self.features))
        names = set(self.variables)
        if len(names) != len(self.variables):
            raise StructuralError("duplicate variable names")
        for v in self.variables:
            if v not in self.intercepts or v not in self.noise_std:
                raise StructuralError(f"variable {v!r} lacks an intercept or noise_std")
            if not self.noise_std[v] >= 0:
                raise StructuralError(f"noise_std of {v!r} must be >= 0, got {self.noise_std[v]}")
        for child, parent in self.coefficients:
            for v in (child, parent):
                if v not in names:
                    raise StructuralError(f"coefficient references undeclared variable {v!r}")
            if child == parent:
                raise StructuralError(f"self-loop on {child!r}")
        for v in self.features:
            if v not in names:
                raise StructuralError(f"feature {v!r} is not a declared variable")
        if self.target and self.target not in names:
            raise StructuralError(f"target {self.target!r} is not a declared variable")
        topological_order(self)

    @property
    def n_variables(self):
        return len(self.variables)

    def parents(self, v):
        return [p for p in self.variables if self.coefficients.get((v, p), 0.0) != 0.0]

    def coefficient_matrix(self):
        """``B[i, j]`` = weight of edge ``variables[j] -> variables[i]``."""
        idx = {v: i for i, v in enumerate(self.variables)}
        B = np.zeros((self.n_variables, self.n_variables))
        for (child, parent), w in self.coefficients.items():
            B[idx[child], idx[parent]] = w
        return B

    def with_variable(self, name, intercept=0.0, noise_std=1.0, as_feature=True):
        """Copy with an extra source variable (no edges)."""
        return LinearScm(
            variables=self.variables + (name,),
            intercepts={**self.intercepts, name: float(intercept)},
            coefficients=dict(self.coefficients),
            noise_std={**self.noise_std, name: float(noise_std)},
            name=self.name,
            features=self.features + ((name,) if as_feature else ()),
            target=self.target,
        )


def _find_cycle_member(scm, remaining):
    # walk parent pointers inside the unresolved set until a node repeats
    node = next(v for v in scm.variables if v in remaining)
    seen = []
    while node not in seen:
        seen.append(node)
        node = next(p for p in scm.parents(node) if p in remaining)
    return node


def topological_order(scm):
    """Parents-first ordering with ties broken by declaration order."""
    pos = {v: i for i, v in enumerate(scm.variables)}
    indeg = {v: 0 for v in scm.variables}
    children = {v: [] for v in scm.variables}
    for (child, parent), w in scm.coefficients.items():
        if w != 0.0:
            indeg[child] += 1
            children[parent].append(child)
    ready = [pos[v] for v in scm.variables if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = scm.variables[heapq.heappop(ready)]
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, pos[c])
    if len(order) != len(scm.variables):
        remaining = set(scm.variables) - set(order)
        v = _find_cycle_member(scm, remaining)
        raise StructuralError(f"cycle detected through variable {v!r}")
    return order


def _check_intervention(scm, intervention):
    if intervention is None:
        return {}
    assignments = intervention.assignments if isinstance(intervention, Intervention) else dict(intervention)
    for v in assignments:
        if v not in scm.variables:
            raise StructuralError(f"intervention targets unknown variable {v!r}")
    return assignments


def sample(scm, intervention=None, n=1, seed=0):
    """Draw ``n`` rows (columns in ``scm.variables`` order).

    Noise comes from counter-keyed blocks, so a fixed seed reproduces the table
    bit-for-bit and intervening on one variable leaves the others' noise unchanged.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    assignments = _check_intervention(scm, intervention)
    idx = {v: i for i, v in enumerate(scm.variables)}
    eps = blocked_standard_normal(seed, n, scm.n_variables)
    out = np.empty((n, scm.n_variables))
    for v in topological_order(scm):
        i = idx[v]
        if v in assignments:
            out[:, i] = assignments[v]
            continue
        col = scm.intercepts[v] + scm.noise_std[v] * eps[:, i]
        for p in scm.parents(v):
            col = col + scm.coefficients[(v, p)] * out[:, idx[p]]
        out[:, i] = col
    return out


def analytic_moments(scm, intervention=None):
    """Closed-form mean and covariance: mu = (I-B)^-1 c, Sigma = (I-B)^-1 D (I-B)^-T."""
    assignments = _check_intervention(scm, intervention)
    B = scm.coefficient_matrix()
    c = np.array([scm.intercepts[v] for v in scm.variables], dtype=float)
    D = np.diag([scm.noise_std[v] ** 2 for v in scm.variables])
    for v, value in assignments.items():
        i = scm.variables.index(v)
        B[i, :] = 0.0
        c[i] = value
        D[i, i] = 0.0
    A = np.linalg.inv(np.eye(scm.n_variables) - B)
    cov = A @ D @ A.T
    return MomentSummary(scm.variables, A @ c, 0.5 * (cov + cov.T))


def load_scm(path, noise_param=None):
    """Read an SCM definition file.

    ``noise_param`` overrides the file's ``noise_param`` key; ``"var"`` reads each
    ``noise`` entry as a variance instead of a standard deviation.
    """
    doc = load_toml(path)
    mode = noise_param or doc.get("noise_param", "std")
    if mode not in ("std", "var"):
        raise StructuralError(f"noise_param must be 'std' or 'var', got {mode!r}")
    variables, intercepts, noise, coefs = [], {}, {}, {}
    for entry in doc.get("variable", []):
        v = entry["name"]
        variables.append(v)
        intercepts[v] = float(entry.get("intercept", 0.0))
        spread = float(entry.get("noise", 1.0))
        if spread < 0:
            raise StructuralError(f"noise of {v!r} must be >= 0")
        noise[v] = spread if mode == "std" else float(np.sqrt(spread))
        for parent, w in entry.get("parents", {}).items():
            coefs[(v, parent)] = float(w)
    return LinearScm(
        variables=tuple(variables),
        intercepts=intercepts,
        coefficients=coefs,
        noise_std=noise,
        name=doc.get("name", Path(path).stem),
        features=tuple(doc.get("features", ())),
        target=doc.get("target", ""),
    )


def dump_scm(scm):
    """Serialize to the definition-file syntax read by :func:`load_scm` (std convention)."""
    lines = [f'name = "{scm.name}"', 'noise_param = "std"']
    if scm.target:
        lines.append(f'target = "{scm.target}"')
    if scm.features:
        lines.append("features = [" + ", ".join(f'"{f}"' for f in scm.features) + "]")
    for v in scm.variables:
        lines += ["", "[[variable]]", f'name = "{v}"',
                  f"intercept = {scm.intercepts[v]!r}", f"noise = {scm.noise_std[v]!r}"]
        parents = {p: scm.coefficients[(v, p)] for p in scm.parents(v)}
        if parents:
            lines.append("parents = { " + ", ".join(f"{p} = {w!r}" for p, w in parents.items()) + " }")
    return "\n".join(lines) + "\n"
