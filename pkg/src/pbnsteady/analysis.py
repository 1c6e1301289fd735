"""Influences and long-run sensitivities.

Every steady-state quantity can be computed ``"exact"`` (enumeration, small
models only) or ``"estimate"`` (one two-state run per meta state).  Estimated
probabilities of non-conjunctive events are sums over disjoint full
conjunctions, one run per conjunction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exact, twostate
from .model import PBNModel, PredictorFunction, force_node_constant, perturb_selection_prob
from .sim import MetaPredicate, SimCursor

MODES = ("uniform", "exact", "estimate")
MAX_JOINT_NODES = 16


def derive_seed(root: int, *keys: int) -> int:
    """Deterministic 64-bit child seed; independent of evaluation order."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def partial_derivative(f: PredictorFunction, j: int) -> PredictorFunction:
    """``x -> f(x with x_j=0) XOR f(x with x_j=1)`` over the parents of ``f`` other than ``j``.

    The result carries selection probability 1; it is a plain Boolean function.
    """
    if j not in f.parents:
        return PredictorFunction.constant(0)
    pos = f.parents.index(j)
    k = f.arity
    shift = k - 1 - pos  # bit of x_j in f's table index
    rest = tuple(p for p in f.parents if p != j)
    table = []
    for a in range(1 << (k - 1)):
        high = (a >> shift) << (shift + 1)
        low = a & ((1 << shift) - 1)
        base = high | low
        table.append(f.truth_table[base] ^ f.truth_table[base | (1 << shift)])
    return PredictorFunction(rest, tuple(table), 1.0)


def satisfying_predicates(g: PredictorFunction) -> list[MetaPredicate]:
    """Disjoint full conjunctions over ``g``'s parents covering ``g = 1``.

    Only meaningful when ``g`` has at least one parent.
    """
    k = g.arity
    preds = []
    for a, out in enumerate(g.truth_table):
        if out:
            lits = tuple((p, (a >> (k - 1 - b)) & 1) for b, p in enumerate(g.parents))
            preds.append(MetaPredicate(lits))
    return preds


@dataclass
class _Context:
    """Per-call cache of steady-state probabilities for the chosen mode."""

    model: PBNModel | None
    mode: str
    params: twostate.TwoStateParams | None = None
    seed: int = 0
    pi: np.ndarray | None = None
    cache: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)

    def probability(self, pred: MetaPredicate) -> float:
        key = pred.literals
        if key not in self.cache:
            if self.mode == "exact":
                if self.pi is None:
                    self.pi = exact.steady_state(self.model)
                self.cache[key] = float(self.pi[pred.mask(self.model.n)].sum())
            else:
                seed = derive_seed(self.seed, len(self.cache))
                res = twostate.run(SimCursor(self.model, seed), pred, self.params)
                self.runs.append(res)
                self.cache[key] = res.q_hat
        return self.cache[key]


def _make_context(model, mode, params, seed, pi) -> _Context:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    if mode != "uniform" and model is None:
        raise ValueError(f"mode {mode!r} needs the model")
    if mode == "estimate" and params is None:
        raise ValueError("estimate mode needs TwoStateParams")
    return _Context(model, mode, params, seed, pi)


def _influence(f: PredictorFunction, j: int, ctx: _Context) -> float:
    d = partial_derivative(f, j)
    if d.arity == 0:
        return float(d.truth_table[0])
    if ctx.mode == "uniform":
        return sum(d.truth_table) / len(d.truth_table)
    total = sum(ctx.probability(pred) for pred in satisfying_predicates(d))
    return min(1.0, max(0.0, total))


def influence_on_function(f: PredictorFunction, j: int, mode: str = "uniform", *,
                          model: PBNModel | None = None, params=None, seed: int = 0,
                          pi=None) -> float:
    """Probability, under the chosen state distribution, that toggling ``x_j`` toggles ``f``."""
    return _influence(f, j, _make_context(model, mode, params, seed, pi))


def influence_on_node(model: PBNModel, source: int, target: int, mode: str = "uniform", *,
                      params=None, seed: int = 0, pi=None) -> float:
    """Selection-probability weighted influence of ``source`` on ``target``'s predictors."""
    ctx = _make_context(model, mode, params, seed, pi)
    return _node_influence(model, source, target, ctx)


def _node_influence(model, source, target, ctx) -> float:
    return sum(f.selection_prob * _influence(f, source, ctx) for f in model.nodes[target].functions)


@dataclass
class InfluenceReport:
    target: int
    mode: str
    influences: dict[int, float]
    probes: int = 0

    def influence(self, node: int) -> float:
        return self.influences.get(node, 0.0)


def influence_report(model: PBNModel, target: int, mode: str = "uniform", *, params=None,
                     seed: int = 0, pi=None) -> InfluenceReport:
    """Influences of every parent of ``target``; nodes that are not parents get 0."""
    ctx = _make_context(model, mode, params, seed, pi)
    parents = sorted({p for f in model.nodes[target].functions for p in f.parents})
    values = {k: _node_influence(model, k, target, ctx) for k in parents}
    return InfluenceReport(target, mode, values, probes=len(ctx.runs))


@dataclass
class JointDistribution:
    observed_nodes: tuple[int, ...]
    probs: np.ndarray  # index bits: first observed node most significant
    estimated: bool
    r: float | None = None
    runs: list = field(default_factory=list, repr=False)

    def outcome(self, index: int) -> tuple[int, ...]:
        m = len(self.observed_nodes)
        return tuple((index >> (m - 1 - b)) & 1 for b in range(m))


def outcome_predicate(nodes: Sequence[int], index: int) -> MetaPredicate:
    m = len(nodes)
    return MetaPredicate(tuple((node, (index >> (m - 1 - b)) & 1) for b, node in enumerate(nodes)))


def joint_distribution(model: PBNModel, nodes: Sequence[int], params=None, *, seed: int = 0,
                       method: str = "estimate", pi=None) -> JointDistribution:
    """Steady-state joint distribution of ``nodes``; one independent run per outcome when estimated."""
    nodes = tuple(int(x) for x in nodes)
    if not nodes:
        raise ValueError("at least one observed node is required")
    if len(nodes) > MAX_JOINT_NODES:
        raise ValueError(f"at most {MAX_JOINT_NODES} observed nodes")
    if len(set(nodes)) != len(nodes) or any(not 0 <= x < model.n for x in nodes):
        raise ValueError("observed nodes must be distinct valid indices")
    if method == "exact":
        if pi is None:
            pi = exact.steady_state(model)
        return JointDistribution(nodes, exact.marginal(pi, model.n, nodes), estimated=False)
    if method != "estimate":
        raise ValueError("method must be 'exact' or 'estimate'")
    if params is None:
        raise ValueError("estimate method needs TwoStateParams")
    runs = []
    for o in range(1 << len(nodes)):
        cursor = SimCursor(model, derive_seed(seed, o))
        runs.append(twostate.run(cursor, outcome_predicate(nodes, o), params))
    probs = np.array([run.q_hat for run in runs])
    return JointDistribution(nodes, probs, estimated=True, r=params.r, runs=runs)


def _distance(a: JointDistribution, b: JointDistribution, norm: float) -> float:
    return float(np.linalg.norm(a.probs - b.probs, ord=norm))


def _pair(base: PBNModel, perturbed: PBNModel, observed, params, seed, method, paired):
    jd0 = joint_distribution(base, observed, params, seed=derive_seed(seed, 0), method=method)
    key = 0 if paired else 1
    jd1 = joint_distribution(perturbed, observed, params, seed=derive_seed(seed, key), method=method)
    return jd0, jd1


def sensitivity_selection_prob(model: PBNModel, node: int, func: int, new_p: float,
                               observed: Sequence[int], norm: float = 1, params=None, *,
                               seed: int = 0, method: str = "estimate",
                               paired: bool = False) -> float:
    """Norm distance between observed joint distributions before and after resetting one
    selection probability.

    ``paired=True`` reuses the base model's seeds for the perturbed model
    (common random numbers).
    """
    perturbed = perturb_selection_prob(model, node, func, new_p)
    jd0, jd1 = _pair(model, perturbed, observed, params, seed, method, paired)
    return _distance(jd1, jd0, norm)


def sensitivity_onoff(model: PBNModel, node: int, observed: Sequence[int], norm: float = 1,
                      params=None, *, seed: int = 0, method: str = "estimate",
                      paired: bool = False) -> float:
    """Larger of the distances caused by forcing ``node`` permanently to 0 and to 1."""
    base = joint_distribution(model, observed, params, seed=derive_seed(seed, 0), method=method)
    out = []
    for value in (0, 1):
        forced = force_node_constant(model, node, value)
        key = 0 if paired else 1 + value
        jd = joint_distribution(forced, observed, params, seed=derive_seed(seed, key), method=method)
        out.append(_distance(jd, base, norm))
    return max(out)
