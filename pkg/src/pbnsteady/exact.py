"""Exact steady-state analysis for PBNs small enough to enumerate.

Distributions are vectors over the ``2**n`` states with node 0 as the least
significant bit of the state index.  The transition operator is applied in
two structured parts instead of as a dense matrix:

* predictor update, weighted by ``(1 - p)^n``: each source state pushes its
  mass onto the product distribution of per-node "next value is 1"
  probabilities, stored once as a sparse matrix;
* perturbation: ``n`` per-bit mixing passes realise the full XOR kernel
  ``p^h (1 - p)^(n - h)``, from which the ``h = 0`` term is removed.
"""

from __future__ import annotations

import logging
import warnings
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .model import PBNModel
from .sim import MetaPredicate

log = logging.getLogger(__name__)

DEFAULT_CAP = 20
DENSE_CAP = 12
MAX_OPERATOR_ENTRIES = 50_000_000
STEP_TOL = 1e-12
RESIDUAL_TOL = 1e-10


class ExactError(RuntimeError):
    pass


def _check_size(model: PBNModel, cap: int) -> None:
    if model.n > cap:
        raise ExactError(f"exact analysis limited to {cap} nodes, model has {model.n}")


def node_one_probability(model: PBNModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per state and node: P(next value = 1 | predictor update).

    Returns ``(q, certain_one, certain_zero)``, each of shape ``(2**n, n)``;
    the boolean masks mark nodes whose predictors all agree.
    """
    n = model.n
    states = np.arange(1 << n, dtype=np.int64)
    q = np.zeros((states.size, n))
    ones = np.zeros((states.size, n), dtype=np.int64)
    for i, node in enumerate(model.nodes):
        for f in node.functions:
            idx = np.zeros(states.size, dtype=np.int64)
            for parent in f.parents:
                idx = (idx << 1) | ((states >> parent) & 1)
            out = np.asarray(f.truth_table, dtype=np.int64)[idx]
            q[:, i] += f.selection_prob * out
            ones[:, i] += out
    counts = np.array([len(node.functions) for node in model.nodes])
    return q, ones == counts, ones == 0


def _function_operator(model: PBNModel) -> sp.csr_matrix:
    n = model.n
    q, one, zero = node_one_probability(model)
    src = np.arange(1 << n, dtype=np.int64)
    dst = np.zeros(src.size, dtype=np.int64)
    w = np.ones(src.size)
    for i in range(n):
        qi = q[src, i]
        c1 = one[src, i]
        split = ~(c1 | zero[src, i])
        dst = dst | (c1.astype(np.int64) << i)
        if split.any():
            s_src, s_dst, s_w, s_q = src[split], dst[split], w[split], qi[split]
            keep = ~split
            src = np.concatenate([src[keep], s_src, s_src])
            dst = np.concatenate([dst[keep], s_dst, s_dst | (1 << i)])
            w = np.concatenate([w[keep], s_w * (1.0 - s_q), s_w * s_q])
            if src.size > MAX_OPERATOR_ENTRIES:
                raise ExactError("predictor operator too large for exact analysis")
    size = 1 << n
    return sp.csr_matrix((w, (src, dst)), shape=(size, size))


@lru_cache(maxsize=32)
def _pushforward(model: PBNModel) -> sp.csr_matrix:
    return _function_operator(model).T.tocsr()


def _flip_kernel(dist: np.ndarray, n: int, p: float) -> np.ndarray:
    v = dist
    for i in range(n):
        v = v.reshape(-1, 2, 1 << i)
        v = (1.0 - p) * v + p * v[:, ::-1, :]
    return v.reshape(-1)


def apply_transition(dist, model: PBNModel, cap: int = DEFAULT_CAP) -> np.ndarray:
    """One step of the PBN's Markov chain applied to a row distribution."""
    _check_size(model, cap)
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (1 << model.n,):
        raise ValueError(f"distribution must have {1 << model.n} entries")
    return _step(dist, _pushforward(model), model.n, model.perturbation_p)


def _step(dist: np.ndarray, push: sp.csr_matrix, n: int, p: float) -> np.ndarray:
    pushed = push @ dist
    if p == 0.0:
        return pushed
    stay = (1.0 - p) ** n
    return stay * pushed + _flip_kernel(dist, n, p) - stay * dist


def dense_transition_matrix(model: PBNModel, cap: int = DENSE_CAP) -> np.ndarray:
    """Explicit ``2**n x 2**n`` transition matrix, row = source state."""
    _check_size(model, cap)
    n, p = model.n, model.perturbation_p
    size = 1 << n
    q, _, _ = node_one_probability(model)
    func = np.ones((size, 1))
    for i in reversed(range(n)):
        # node n-1 is the most significant bit, so it enters the Kronecker product first
        func = np.einsum("sa,sb->sab", func, np.stack([1.0 - q[:, i], q[:, i]], axis=1))
        func = func.reshape(size, -1)
    states = np.arange(size)
    ham = np.array([bin(x).count("1") for x in range(size)])
    h = ham[states[:, None] ^ states[None, :]]
    flip = np.where(h > 0, p**h * (1.0 - p) ** (n - h), 0.0)
    return (1.0 - p) ** n * func + flip


def steady_state(model: PBNModel, cap: int = DEFAULT_CAP, tol: float = STEP_TOL,
                 max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution by power iteration from the uniform distribution."""
    _check_size(model, cap)
    if model.perturbation_p == 0.0:
        warnings.warn("perturbation_p = 0: the chain need not be ergodic")
    push = _pushforward(model)
    n, p = model.n, model.perturbation_p
    pi = np.full(1 << n, 1.0 / (1 << n))
    for it in range(1, max_iter + 1):
        nxt = _step(pi, push, n, p)
        nxt /= nxt.sum()
        delta = np.abs(nxt - pi).sum()
        pi = nxt
        if delta < tol:
            break
    else:
        raise ExactError(f"power iteration did not converge in {max_iter} iterations")
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    res = residual(pi, model, cap)
    if res >= RESIDUAL_TOL:
        raise ExactError(f"stationary residual {res:.3g} above {RESIDUAL_TOL}")
    log.debug("power iteration converged after %d iterations (residual %.2e)", it, res)
    return pi


def residual(pi, model: PBNModel, cap: int = DEFAULT_CAP) -> float:
    return float(np.abs(apply_transition(pi, model, cap) - pi).sum())


def exact_meta_probability(model: PBNModel, pred: MetaPredicate, pi=None) -> float:
    if pi is None:
        pi = steady_state(model)
    return float(pi[pred.mask(model.n)].sum())


def marginal(pi, n: int, nodes) -> np.ndarray:
    """Joint distribution of ``nodes``, first listed node as most significant bit."""
    nodes = list(nodes)
    states = np.arange(1 << n, dtype=np.int64)
    idx = np.zeros(states.size, dtype=np.int64)
    for node in nodes:
        idx = (idx << 1) | ((states >> node) & 1)
    return np.bincount(idx, weights=np.asarray(pi), minlength=1 << len(nodes))


def format_distribution(pi) -> str:
    return "".join(f"{s} {p:.17g}\n" for s, p in enumerate(pi))
