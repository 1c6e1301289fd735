"""PBN model types, structural measures, random generation and perturbations.

Truth tables are indexed by the parent assignment read as a binary number
with the first listed parent as the most significant bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

PROB_ATOL = 1e-9
MAX_PARENTS = 30


class ModelError(ValueError):
    """Structural or probabilistic inconsistency in a PBN model."""


@dataclass(frozen=True)
class PredictorFunction:
    parents: tuple[int, ...]
    truth_table: tuple[int, ...]
    selection_prob: float

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "truth_table", tuple(int(b) for b in self.truth_table))
        object.__setattr__(self, "selection_prob", float(self.selection_prob))
        if len(self.parents) > MAX_PARENTS:
            raise ModelError(f"at most {MAX_PARENTS} parents per function are supported")
        if len(set(self.parents)) != len(self.parents):
            raise ModelError(f"duplicate parent in {self.parents}")
        if len(self.truth_table) != 1 << len(self.parents):
            raise ModelError(
                f"truth table has {len(self.truth_table)} entries, "
                f"expected {1 << len(self.parents)} for {len(self.parents)} parents"
            )
        if any(b not in (0, 1) for b in self.truth_table):
            raise ModelError("truth table entries must be 0 or 1")
        if not 0.0 <= self.selection_prob <= 1.0:
            raise ModelError(f"selection probability {self.selection_prob} outside [0, 1]")

    @property
    def arity(self) -> int:
        return len(self.parents)

    def evaluate(self, bits) -> int:
        """Apply to a full state given as a sequence of node values."""
        idx = 0
        for p in self.parents:
            idx = (idx << 1) | int(bits[p])
        return self.truth_table[idx]

    @classmethod
    def constant(cls, value: int, selection_prob: float = 1.0) -> "PredictorFunction":
        return cls((), (int(value),), selection_prob)


@dataclass(frozen=True)
class NodeSpec:
    index: int
    functions: tuple[PredictorFunction, ...]
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        if not self.functions:
            raise ModelError(f"node {self.index} has no predictor functions")
        total = math.fsum(f.selection_prob for f in self.functions)
        if abs(total - 1.0) > PROB_ATOL:
            raise ModelError(
                f"node {self.index}: selection probabilities sum to {total!r}, expected 1"
            )

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(f.selection_prob for f in self.functions)


@dataclass(frozen=True)
class PBNModel:
    nodes: tuple[NodeSpec, ...]
    perturbation_p: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "perturbation_p", float(self.perturbation_p))
        n = len(self.nodes)
        if n == 0:
            raise ModelError("a model needs at least one node")
        if not (self.perturbation_p == 0.0 or 0.0 < self.perturbation_p < 1.0):
            raise ModelError("perturbation must be 0 or lie in (0, 1)")
        names = set()
        for i, node in enumerate(self.nodes):
            if node.index != i:
                raise ModelError(f"node indices must be 0..n-1 in order; got {node.index} at {i}")
            for f in node.functions:
                bad = [p for p in f.parents if not 0 <= p < n]
                if bad:
                    raise ModelError(f"node {i}: parent index {bad[0]} out of range for {n} nodes")
            if node.name is not None:
                if node.name in names:
                    raise ModelError(f"duplicate node name {node.name!r}")
                names.add(node.name)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def realization_count(self) -> int:
        return math.prod(len(node.functions) for node in self.nodes)

    def functions(self):
        for node in self.nodes:
            yield from node.functions

    def node_index(self, key: str | int) -> int:
        """Resolve a node by index or by name."""
        if isinstance(key, int) or (isinstance(key, str) and key.strip().isdigit()):
            i = int(key)
            if not 0 <= i < self.n:
                raise ModelError(f"node index {i} out of range")
            return i
        for node in self.nodes:
            if node.name == key:
                return node.index
        raise ModelError(f"unknown node {key!r}")


def density(model: PBNModel) -> float:
    """Mean over nodes of the total parent count of all predictor functions."""
    return sum(f.arity for f in model.functions()) / model.n


@dataclass(frozen=True)
class GeneratorSpec:
    node_count: int
    min_funcs: int = 1
    max_funcs: int = 1
    min_parents: int = 1
    max_parents: int = 1
    seed: int = 0
    perturbation_p: float = 0.001

    def __post_init__(self):
        if self.node_count < 1:
            raise ModelError("node_count must be positive")
        if not 1 <= self.min_funcs <= self.max_funcs:
            raise ModelError("need 1 <= min_funcs <= max_funcs")
        if not 0 <= self.min_parents <= self.max_parents <= self.node_count:
            raise ModelError("need 0 <= min_parents <= max_parents <= node_count")
        if self.max_parents > MAX_PARENTS:
            raise ModelError(f"max_parents above {MAX_PARENTS} is not supported")
        if not 0 <= self.seed < 2**64:
            raise ModelError("seed must be a 64-bit unsigned integer")


def generate_random(spec: GeneratorSpec) -> PBNModel:
    """Random PBN with the requested structure; a pure function of ``spec``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.node_count
    nodes = []
    for i in range(n):
        count = int(rng.integers(spec.min_funcs, spec.max_funcs + 1))
        weights = 1.0 - rng.random(count)  # uniform on (0, 1]
        weights = weights / weights.sum()
        funcs = []
        for w in weights:
            k = int(rng.integers(spec.min_parents, spec.max_parents + 1))
            parents = rng.choice(n, size=k, replace=False)
            table = rng.integers(0, 2, size=1 << k)
            funcs.append(PredictorFunction(tuple(parents.tolist()), tuple(table.tolist()), float(w)))
        nodes.append(NodeSpec(i, _renormalized(funcs)))
    return PBNModel(tuple(nodes), spec.perturbation_p)


def _renormalized(funcs: list[PredictorFunction]) -> tuple[PredictorFunction, ...]:
    # push the rounding residue into the last function so fsum is exactly 1
    head = funcs[:-1]
    last = 1.0 - math.fsum(f.selection_prob for f in head)
    return tuple(head) + (replace(funcs[-1], selection_prob=min(1.0, max(0.0, last))),)


def _replace_node(model: PBNModel, node: NodeSpec) -> PBNModel:
    nodes = list(model.nodes)
    nodes[node.index] = node
    return PBNModel(tuple(nodes), model.perturbation_p)


def perturb_selection_prob(model: PBNModel, node: int, func: int, new_p: float) -> PBNModel:
    """Set one selection probability, rescaling the node's others proportionally."""
    if not 0 <= node < model.n:
        raise ModelError(f"node {node} out of range")
    spec = model.nodes[node]
    if not 0 <= func < len(spec.functions):
        raise ModelError(f"node {node} has no function {func}")
    if not 0.0 <= new_p <= 1.0:
        raise ModelError("new selection probability must lie in [0, 1]")
    probs = spec.probs
    old = probs[func]
    if new_p == old:
        return model
    rest = math.fsum(c for j, c in enumerate(probs) if j != func)
    if rest == 0.0:
        raise ModelError(f"node {node}: no mass to redistribute")
    new_probs = [c + (old - new_p) * c / rest for c in probs]
    new_probs[func] = new_p
    if min(new_probs) < 0.0:
        raise ModelError(f"node {node}: perturbation produced a negative probability")
    funcs = tuple(replace(f, selection_prob=c) for f, c in zip(spec.functions, new_probs))
    return _replace_node(model, replace(spec, functions=funcs))


def force_node_constant(model: PBNModel, node: int, value: int) -> PBNModel:
    """Replace all predictors of ``node`` by the constant function ``value``."""
    if not 0 <= node < model.n:
        raise ModelError(f"node {node} out of range")
    if value not in (0, 1):
        raise ModelError("forced value must be 0 or 1")
    spec = model.nodes[node]
    return _replace_node(model, replace(spec, functions=(PredictorFunction.constant(value),)))


def make_model(
    functions: Sequence[Sequence[tuple[Sequence[int], Sequence[int], float]]],
    perturbation_p: float,
    names: Sequence[Optional[str]] | None = None,
) -> PBNModel:
    """Build a model from nested ``(parents, truth_table, prob)`` triples."""
    nodes = []
    for i, funcs in enumerate(functions):
        name = names[i] if names is not None else None
        nodes.append(NodeSpec(i, tuple(PredictorFunction(*f) for f in funcs), name))
    return PBNModel(tuple(nodes), perturbation_p)
