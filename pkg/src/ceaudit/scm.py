"""Linear-additive structural causal models over DAGs.

Every node carries an equation ``x = intercept + sum(coeff * parent) + u``
where ``u`` is drawn from the node's noise distribution. The three preset
structures (chain, fork, collider) share seven student-style features
``x1..x7`` and a numeric outcome ``y``.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

__all__ = [
    "NoiseSpec",
    "StructuralEquation",
    "Node",
    "Scm",
    "StructureKind",
    "NotADagError",
    "validate",
    "topo_order",
    "eval_node",
    "evaluate",
    "preset",
    "scm_to_dict",
    "scm_from_dict",
    "load_scm",
    "save_scm",
    "scm_digest",
]

FEATURES = ("x1", "x2", "x3", "x4", "x5", "x6", "x7")
OUTCOME = "y"

# y = 0.4 + 0.6 x1 + 0.4 x2 + 0.6 x3 + 0.7 x4 + 0.4 x5 + 0.4 x6 + u_y
Y_INTERCEPT = 0.4
Y_COEFFS = {"x1": 0.6, "x2": 0.4, "x3": 0.6, "x4": 0.7, "x5": 0.4, "x6": 0.4}
CROSS_LINK = 0.4
COLLIDER_Y_TO_X3 = 0.6


class NotADagError(ValueError):
    """Raised when the parent relation of an Scm contains a cycle."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    mu: float = 0.0
    sigma: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.sigma > 0:
                raise ValueError(f"gaussian noise needs sigma > 0, got {self.sigma}")
        elif self.kind == "bernoulli":
            if not 0.0 <= self.p <= 1.0:
                raise ValueError(f"bernoulli noise needs 0 <= p <= 1, got {self.p}")
        else:
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> NoiseSpec:
        return cls("gaussian", mu=float(mu), sigma=float(sigma))

    @classmethod
    def bernoulli(cls, p: float) -> NoiseSpec:
        return cls("bernoulli", p=float(p))

    @property
    def mean(self) -> float:
        return self.mu if self.kind == "gaussian" else self.p

    @property
    def std(self) -> float:
        if self.kind == "gaussian":
            return self.sigma
        return (self.p * (1.0 - self.p)) ** 0.5


@dataclass(frozen=True)
class StructuralEquation:
    """``intercept + sum(coeff * parent) + noise``.

    ``noise_free`` is only set by do-surgery: the node then evaluates to its
    intercept and ignores any noise value.
    """

    intercept: float = 0.0
    parents: tuple[tuple[str, float], ...] = ()
    noise_free: bool = False

    @property
    def parent_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.parents)

    @classmethod
    def constant(cls, value: float) -> StructuralEquation:
        return cls(intercept=float(value), parents=(), noise_free=True)


@dataclass(frozen=True)
class Node:
    name: str
    noise: NoiseSpec
    equation: StructuralEquation = field(default_factory=StructuralEquation)

    @property
    def is_root(self) -> bool:
        return not self.equation.parents


@dataclass(frozen=True)
class Scm:
    """An ordered collection of nodes plus the designated outcome node.

    Construction does not check acyclicity; use :func:`validate`.
    """

    nodes: tuple[Node, ...]
    outcome: str = OUTCOME

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    @property
    def features(self) -> tuple[str, ...]:
        """All non-outcome nodes in declaration order."""
        return tuple(n.name for n in self.nodes if n.name != self.outcome)

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(f"no node named {name!r}")

    def parents_of(self, name: str) -> tuple[str, ...]:
        return self.node(name).equation.parent_names

    def with_node(self, new: Node) -> Scm:
        return replace(
            self, nodes=tuple(new if n.name == new.name else n for n in self.nodes)
        )


class StructureKind(str, enum.Enum):
    CHAIN = "chain"
    FORK = "fork"
    COLLIDER = "collider"


def _find_cycle(scm: Scm) -> list[str] | None:
    known = set(scm.names)
    children: dict[str, list[str]] = {n: [] for n in scm.names}
    for node in scm.nodes:
        for parent in node.equation.parent_names:
            if parent in known:
                children[parent].append(node.name)

    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(scm.names, WHITE)
    stack: list[str] = []

    def visit(name: str) -> list[str] | None:
        colour[name] = GREY
        stack.append(name)
        for child in children[name]:
            if colour[child] == GREY:
                return stack[stack.index(child):] + [child]
            if colour[child] == WHITE:
                found = visit(child)
                if found:
                    return found
        stack.pop()
        colour[name] = BLACK
        return None

    for name in scm.names:
        if colour[name] == WHITE:
            found = visit(name)
            if found:
                return found
    return None


def validate(scm: Scm) -> list[str]:
    """Check the structural invariants of ``scm``.

    Returns:
        A list of human-readable violations; empty when the model is valid.
    """
    problems = []
    seen: set[str] = set()
    for node in scm.nodes:
        if not node.name:
            problems.append("empty node name")
        if node.name in seen:
            problems.append(f"duplicate node {node.name!r}")
        seen.add(node.name)

    for node in scm.nodes:
        parents = node.equation.parent_names
        if len(set(parents)) != len(parents):
            problems.append(f"node {node.name!r}: duplicate parent")
        for parent in parents:
            if parent == node.name:
                problems.append(f"node {node.name!r}: self-loop")
            elif parent not in seen:
                problems.append(f"node {node.name!r}: unknown parent {parent!r}")

    if scm.outcome not in seen:
        problems.append(f"outcome {scm.outcome!r} is not a declared node")

    cycle = _find_cycle(scm)
    if cycle:
        problems.append("cycle detected: " + " -> ".join(cycle))
    return problems


def topo_order(scm: Scm) -> list[str]:
    """Kahn's algorithm, breaking ties by declaration order.

    Raises:
        NotADagError: if the graph has a cycle.
    """
    index = {name: i for i, name in enumerate(scm.names)}
    indegree = {name: 0 for name in scm.names}
    children: dict[str, list[str]] = {name: [] for name in scm.names}
    for node in scm.nodes:
        for parent in node.equation.parent_names:
            if parent not in index:
                raise KeyError(f"node {node.name!r} has unknown parent {parent!r}")
            if parent == node.name:
                raise NotADagError(f"not a DAG: self-loop on {node.name!r}")
            children[parent].append(node.name)
            indegree[node.name] += 1

    ready = [index[n] for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        name = scm.names[heapq.heappop(ready)]
        order.append(name)
        for child in children[name]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, index[child])
    if len(order) != len(scm.nodes):
        raise NotADagError("not a DAG")
    return order


def eval_node(eq: StructuralEquation, parent_values: Mapping[str, float], noise: float) -> float:
    if eq.noise_free:
        return eq.intercept
    total = eq.intercept
    for name, coeff in eq.parents:
        try:
            total += coeff * parent_values[name]
        except KeyError:
            raise KeyError(f"missing value for parent {name!r}") from None
    return total + noise


def _y_equation(include_x3: bool) -> StructuralEquation:
    terms = [(k, v) for k, v in Y_COEFFS.items() if include_x3 or k != "x3"]
    return StructuralEquation(intercept=Y_INTERCEPT, parents=tuple(terms))


_ROOT_NOISE = {
    "x1": NoiseSpec.gaussian(50, 5),
    "x2": NoiseSpec.gaussian(20, 1),
    "x3": NoiseSpec.gaussian(45, 6),
    "x4": NoiseSpec.bernoulli(0.6),
    "x5": NoiseSpec.bernoulli(0.3),
    "x6": NoiseSpec.gaussian(70, 5),
    "x7": NoiseSpec.gaussian(50, 5),
}
_STD_NORMAL = NoiseSpec.gaussian(0, 1)


def preset(kind: StructureKind | str) -> Scm:
    """Build one of the three seven-feature student SCMs.

    Root features draw from their population distribution; every node with
    parents (the cross-linked grade and ``y``) gets standard-normal noise.
    """
    kind = StructureKind(kind)
    nodes = {name: Node(name, spec) for name, spec in _ROOT_NOISE.items()}

    if kind is StructureKind.CHAIN:
        nodes["x3"] = Node("x3", _STD_NORMAL, StructuralEquation(0.0, (("x7", CROSS_LINK),)))
        y_eq = _y_equation(include_x3=True)
    elif kind is StructureKind.FORK:
        nodes["x7"] = Node("x7", _STD_NORMAL, StructuralEquation(0.0, (("x3", CROSS_LINK),)))
        y_eq = _y_equation(include_x3=True)
    else:
        nodes["x3"] = Node(
            "x3",
            _STD_NORMAL,
            StructuralEquation(0.0, (("x7", CROSS_LINK), (OUTCOME, COLLIDER_Y_TO_X3))),
        )
        y_eq = _y_equation(include_x3=False)

    ordered = [nodes[name] for name in FEATURES]
    ordered.append(Node(OUTCOME, _STD_NORMAL, y_eq))
    return Scm(tuple(ordered), OUTCOME)


def _noise_to_dict(spec: NoiseSpec) -> dict:
    if spec.kind == "gaussian":
        return {"kind": "gaussian", "mu": spec.mu, "sigma": spec.sigma}
    return {"kind": "bernoulli", "p": spec.p}


def scm_to_dict(scm: Scm) -> dict:
    nodes = []
    for node in scm.nodes:
        entry = {
            "name": node.name,
            "noise": _noise_to_dict(node.noise),
            "intercept": node.equation.intercept,
            "parents": [{"name": p, "coeff": c} for p, c in node.equation.parents],
        }
        if node.equation.noise_free:
            entry["noise_free"] = True
        nodes.append(entry)
    return {"outcome": scm.outcome, "nodes": nodes}


def scm_from_dict(data: Mapping) -> Scm:
    nodes = []
    for entry in data["nodes"]:
        noise = entry["noise"]
        kind = noise["kind"]
        if kind == "gaussian":
            spec = NoiseSpec.gaussian(noise.get("mu", 0.0), noise.get("sigma", 1.0))
        else:
            spec = NoiseSpec(kind, p=float(noise.get("p", 0.5)))
        eq = StructuralEquation(
            intercept=float(entry.get("intercept", 0.0)),
            parents=tuple((p["name"], float(p["coeff"])) for p in entry.get("parents", ())),
            noise_free=bool(entry.get("noise_free", False)),
        )
        nodes.append(Node(entry["name"], spec, eq))
    return Scm(tuple(nodes), data.get("outcome", OUTCOME))


def scm_digest(scm: Scm) -> str:
    payload = json.dumps(scm_to_dict(scm), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_scm(scm: Scm, path) -> None:
    with open(path, "w") as fh:
        json.dump(scm_to_dict(scm), fh, indent=2)
        fh.write("\n")


def load_scm(path) -> Scm:
    with open(path) as fh:
        return scm_from_dict(json.load(fh))


def evaluate(scm: Scm, noise: Mapping[str, float], order: Iterable[str] | None = None) -> dict[str, float]:
    """Evaluate every node given one noise value per node."""
    values: dict[str, float] = {}
    for name in order if order is not None else topo_order(scm):
        eq = scm.node(name).equation
        if eq.noise_free:
            values[name] = eq.intercept
            continue
        if name not in noise:
            raise KeyError(f"missing noise for node {name!r}")
        values[name] = eval_node(eq, values, noise[name])
    return values
