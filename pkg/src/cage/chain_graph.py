"""Causal chain graphs: ordered partitions of the features into chain components.

Components are causally ordered among themselves; within a component the structure
is unknown and summarized by a mode. ``confounded`` members share hidden common causes,
so intervening on some members says nothing about the others. ``interacting`` members
influence each other, so out-of-coalition members are conditioned on in-coalition ones.
"""

from dataclasses import dataclass

from cage._toml import bundled_path, load_toml

MODES = ("confounded", "interacting")


class ChainGraphError(ValueError):
    pass


@dataclass(frozen=True)
class ChainComponent:
    members: tuple
    mode: str

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ChainGraphError("chain component must have at least one member")
        if self.mode not in MODES:
            raise ChainGraphError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def confounded(self):
        return self.mode == "confounded"


@dataclass(frozen=True)
class ChainGraph:
    components: tuple
    feature_universe: tuple

    def __len__(self):
        return len(self.components)

    def component_of(self, feature):
        for t, comp in enumerate(self.components, start=1):
            if feature in comp.members:
                return t
        raise KeyError(feature)

    def to_toml(self):
        blocks = []
        for comp in self.components:
            members = ", ".join(f'"{m}"' for m in comp.members)
            blocks.append(f'[[component]]\nmembers = [{members}]\nmode = "{comp.mode}"\n')
        return "\n".join(blocks)


def build_chain_graph(components, feature_universe, target=None):
    """Validate an ordered partition of ``feature_universe``.

    ``components`` holds :class:`ChainComponent` objects or ``(members, mode)`` pairs.
    """
    universe = tuple(feature_universe)
    comps = tuple(c if isinstance(c, ChainComponent) else ChainComponent(tuple(c[0]), c[1])
                  for c in components)
    known = set(universe)
    seen = set()
    for comp in comps:
        for f in comp.members:
            if f not in known:
                raise ChainGraphError(f"unknown feature {f!r} in chain graph")
            if f in seen:
                raise ChainGraphError(f"feature {f!r} appears in more than one component")
            seen.add(f)
    missing = [f for f in universe if f not in seen]
    if missing:
        raise ChainGraphError(f"feature {missing[0]!r} is not assigned to any component")
    if target is not None and target in seen:
        raise ChainGraphError(f"target {target!r} must not be a chain-graph member")
    return ChainGraph(comps, universe)


def parents_of_component(g, t):
    """All members of components strictly before ``t`` (1-based)."""
    if not 1 <= t <= len(g.components):
        raise IndexError(f"component index {t} out of range 1..{len(g.components)}")
    out = set()
    for comp in g.components[: t - 1]:
        out.update(comp.members)
    return out


def load_chain_graph(path, feature_universe, target=None):
    doc = load_toml(path)
    comps = []
    for i, entry in enumerate(doc.get("component", []), start=1):
        if "mode" not in entry:
            raise ChainGraphError(f"component {i} has no mode")
        comps.append(ChainComponent(tuple(entry["members"]), entry["mode"]))
    return build_chain_graph(comps, feature_universe, target=target)


def bundled_chain_graph(name, feature_universe, target=None):
    """One of ``direct_cause``, ``markovian``, ``mixed``, ``adni``."""
    return load_chain_graph(bundled_path(f"{name}.chain.toml"), feature_universe, target)


def single_component(feature_universe, mode="interacting"):
    return build_chain_graph([(tuple(feature_universe), mode)], feature_universe)
