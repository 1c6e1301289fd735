"""PBN trajectory simulation and meta-state observation."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from ._accel import default_backend
from .alias import build_alias
from .model import ModelError, PBNModel

MIN_BUFFER = 1 << 14


class CompiledModel(NamedTuple):
    n: int
    nwords: int
    fstart: np.ndarray
    fcount: np.ndarray
    aprob: np.ndarray
    aalias: np.ndarray
    par_off: np.ndarray
    par_cnt: np.ndarray
    parents: np.ndarray
    tt_off: np.ndarray
    tt: np.ndarray
    multi_nodes: np.ndarray
    padded_parents: np.ndarray
    padded_weights: np.ndarray


def compile_model(model: PBNModel) -> CompiledModel:
    """Flatten a model into the arrays consumed by the kernels."""
    n = model.n
    funcs = list(model.functions())
    fcount = np.array([len(node.functions) for node in model.nodes], dtype=np.int64)
    fstart = np.concatenate([[0], np.cumsum(fcount)[:-1]]).astype(np.int64)
    aprob = np.ones(len(funcs))
    aalias = np.zeros(len(funcs), dtype=np.int64)
    for node, fs in zip(model.nodes, fstart):
        table = build_alias(node.probs)
        aprob[fs : fs + table.size] = table.prob
        aalias[fs : fs + table.size] = table.alias
    par_cnt = np.array([f.arity for f in funcs], dtype=np.int64)
    par_off = np.concatenate([[0], np.cumsum(par_cnt)[:-1]]).astype(np.int64)
    parents = np.array([p for f in funcs for p in f.parents], dtype=np.int64)
    sizes = np.array([len(f.truth_table) for f in funcs], dtype=np.int64)
    tt_off = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    tt = np.array([b for f in funcs for b in f.truth_table], dtype=np.uint8)

    width = max(1, int(par_cnt.max()))
    padded_parents = np.zeros((len(funcs), width), dtype=np.int64)
    padded_weights = np.zeros((len(funcs), width), dtype=np.int64)
    for j, f in enumerate(funcs):
        k = f.arity
        padded_parents[j, :k] = f.parents
        padded_weights[j, :k] = 1 << np.arange(k - 1, -1, -1, dtype=np.int64)
    return CompiledModel(
        n=n,
        nwords=(n + 63) // 64,
        fstart=fstart,
        fcount=fcount,
        aprob=aprob,
        aalias=aalias,
        par_off=par_off,
        par_cnt=par_cnt,
        parents=parents if parents.size else np.zeros(0, dtype=np.int64),
        tt_off=tt_off,
        tt=tt,
        multi_nodes=np.flatnonzero(fcount > 1),
        padded_parents=padded_parents,
        padded_weights=padded_weights,
    )


@dataclass(frozen=True)
class MetaPredicate:
    """Conjunction of ``node == value`` literals defining meta state 1."""

    literals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        lits = tuple((int(i), int(v)) for i, v in self.literals)
        object.__setattr__(self, "literals", lits)
        if not lits:
            raise ValueError("a meta predicate needs at least one literal")
        nodes = [i for i, _ in lits]
        if len(set(nodes)) != len(nodes):
            raise ValueError("a node may appear only once in a meta predicate")
        if any(v not in (0, 1) or i < 0 for i, v in lits):
            raise ValueError("literals must be (node >= 0, bit) pairs")

    @property
    def nodes(self) -> np.ndarray:
        return np.array([i for i, _ in self.literals], dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.literals], dtype=np.int64)

    def check(self, n: int) -> None:
        if any(i >= n for i, _ in self.literals):
            raise ModelError(f"predicate refers to a node outside 0..{n - 1}")

    def mask(self, n: int) -> np.ndarray:
        """Boolean vector over all ``2**n`` states (node 0 = least significant bit)."""
        self.check(n)
        states = np.arange(1 << n, dtype=np.int64)
        keep = np.ones(states.size, dtype=bool)
        for i, v in self.literals:
            keep &= ((states >> i) & 1) == v
        return keep

    def __str__(self) -> str:
        return "&".join(f"{i}={v}" for i, v in self.literals)


_LITERAL = re.compile(r"^([A-Za-z0-9_.\-]+)=([01])$")


def parse_predicate(text: str, model: PBNModel | None = None) -> MetaPredicate:
    """Parse ``"name=1&3=0"``; names need ``model`` for resolution."""
    lits = []
    for part in re.sub(r"\s+", "", text).split("&"):
        m = _LITERAL.match(part)
        if not m:
            raise ValueError(f"invalid literal {part!r} in predicate {text!r}")
        key, val = m.groups()
        if model is not None:
            idx = model.node_index(key)
        elif key.isdigit():
            idx = int(key)
        else:
            raise ValueError(f"node name {key!r} needs a model to resolve")
        lits.append((idx, int(val)))
    pred = MetaPredicate(tuple(lits))
    if model is not None:
        pred.check(model.n)
    return pred


def project(state, pred: MetaPredicate) -> int:
    """1 iff every literal of ``pred`` holds in ``state``."""
    state = np.asarray(state)
    return int(all(int(state[i]) == v for i, v in pred.literals))


_FORCING = {None: None, "never": 2.0, "always": -1.0}


class SimCursor:
    """Stateful PBN trajectory generator.

    Parameters
    ----------
    model : PBNModel
    seed : int
        Seeds a PCG64 stream; equal seeds give equal trajectories on either
        backend.
    state : array-like of 0/1, optional
        Initial state; all zeros by default.
    perturbation : {None, "never", "always"}
        Test hook forcing the perturbation gate closed or open.
    backend : {"numba", "numpy"}, optional
        Kernel implementation; defaults from ``PBNSTEADY_DISABLE_NUMBA``.
    """

    def __init__(self, model: PBNModel, seed: int, state=None, perturbation=None,
                 backend: str | None = None, buffer_size: int | None = None):
        if perturbation not in _FORCING:
            raise ValueError("perturbation must be None, 'never' or 'always'")
        if perturbation == "always" and model.perturbation_p == 0.0:
            raise ValueError("cannot force perturbations when perturbation_p is 0")
        self.model = model
        self.compiled = compile_model(model)
        self.backend = backend or default_backend()
        if self.backend not in ("numba", "numpy"):
            raise ValueError(f"unknown backend {self.backend!r}")
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.PCG64(self.seed))
        n = model.n
        self._bufsize = buffer_size or max(MIN_BUFFER, 64 * (n + 1))
        self._buf = self.rng.random(self._bufsize)
        self._pos = 0
        forced = _FORCING[perturbation]
        self._gate = forced if forced is not None else (1.0 - model.perturbation_p) ** n
        self._scratch = np.zeros(self.compiled.nwords, dtype=np.uint64)
        self.steps = 0
        if state is None:
            state = np.zeros(n, dtype=np.uint8)
        self.state = state

    @property
    def state(self) -> np.ndarray:
        return kernels.unpack(self._words, self.model.n)

    @state.setter
    def state(self, bits) -> None:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (self.model.n,) or np.any(bits > 1):
            raise ValueError(f"state must be {self.model.n} bits")
        self._words = kernels.pack(bits, self.compiled.nwords)

    def _refill(self, stalled: bool) -> None:
        if stalled:
            self._bufsize *= 2
        rest = self._buf[self._pos :]
        self._buf = np.concatenate([rest, self.rng.random(self._bufsize - rest.size)])
        self._pos = 0

    def _advance(self, steps: int, lits=None, lag: int = 0, first: int = 1, out=None) -> None:
        cm = self.compiled
        if lits is None:
            lit_node = lit_val = np.zeros(0, dtype=np.int64)
        else:
            lit_node, lit_val = lits
        if out is None:
            out = np.zeros(0, dtype=np.int8)
        p = self.model.perturbation_p
        total = 0
        while total < steps:
            if self.backend == "numba":
                done, pos = kernels.advance_numba(
                    self._words, self._scratch, cm.n, steps - total, self._buf, self._pos,
                    self._gate, p, cm.fstart, cm.fcount, cm.aprob, cm.aalias, cm.par_off,
                    cm.par_cnt, cm.parents, cm.tt_off, cm.tt, lit_node, lit_val, lag, first,
                    total, out,
                )
            else:
                done, pos = kernels.advance_numpy(
                    self._words, cm, steps - total, self._buf, self._pos, self._gate, p,
                    lit_node, lit_val, lag, first, total, out,
                )
            total += done
            self._pos = pos
            if total < steps:
                self._refill(stalled=(done == 0 and pos == 0))
        self.steps += steps

    def step(self) -> np.ndarray:
        self._advance(1)
        return self.state

    def simulate(self, steps: int) -> None:
        if steps < 0:
            raise ValueError("steps must be non-negative")
        if steps:
            self._advance(steps)

    def sample_binary_sequence(self, pred: MetaPredicate, count: int, lag: int = 1,
                               first: int = 1) -> np.ndarray:
        """Project states ``first, first + lag, ...`` (``count`` of them) onto ``pred``.

        With the default ``first=1`` this advances the cursor by
        ``1 + (count - 1) * lag`` steps.
        """
        if lag < 1:
            raise ValueError("lag must be >= 1")
        pred.check(self.model.n)
        out = np.zeros(count, dtype=np.int8)
        if count:
            self._advance(first + (count - 1) * lag, (pred.nodes, pred.values), lag, first, out)
        return out

    def binary_source(self, pred: MetaPredicate, lag: int = 1) -> "PredicateSource":
        return PredicateSource(self, pred, lag)


class PredicateSource:
    """Subsampled meta-state process ``Z_t = Z_{1 + (t - 1) k}`` drawn from a cursor."""

    def __init__(self, cursor: SimCursor, pred: MetaPredicate, lag: int = 1):
        pred.check(cursor.model.n)
        self.cursor = cursor
        self.pred = pred
        self.lag = lag
        self._origin = cursor.steps
        self._drawn = 0

    @property
    def steps(self) -> int:
        return self.cursor.steps - self._origin

    def draw(self, count: int) -> np.ndarray:
        first = 1 if self._drawn == 0 else self.lag
        out = self.cursor.sample_binary_sequence(self.pred, count, self.lag, first=first)
        self._drawn += count
        return out
