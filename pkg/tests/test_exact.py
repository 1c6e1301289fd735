import itertools

import numpy as np
import pytest

from conftest import identity_model, random_small
from pbnsteady.exact import (
    ExactError, apply_transition, dense_transition_matrix, exact_meta_probability,
    format_distribution, marginal, residual, steady_state,
)
from pbnsteady.model import force_node_constant, make_model
from pbnsteady.sim import MetaPredicate


def literal_matrix(model):
    """Transition matrix by enumerating every realization and every flip vector."""
    n, p = model.n, model.perturbation_p
    size = 1 << n
    P = np.zeros((size, size))
    for s in range(size):
        bits = np.array([(s >> i) & 1 for i in range(n)], dtype=np.uint8)
        for choice in itertools.product(*[node.functions for node in model.nodes]):
            prob = np.prod([f.selection_prob for f in choice])
            nxt = sum(f.evaluate(bits) << i for i, f in enumerate(choice))
            P[s, nxt] += (1 - p) ** n * prob
        for t in range(size):
            h = bin(s ^ t).count("1")
            if h:
                P[s, t] += p**h * (1 - p) ** (n - h)
    return P


def test_identity_one_step():
    assert np.allclose(apply_transition([1.0, 0.0], identity_model(0.1)), [0.9, 0.1], atol=1e-15)


def test_permutation_preserves_uniform():
    # node0 := node1, node1 := node2, node2 := node0 is a permutation of states
    model = make_model([[((1,), (0, 1), 1.0)], [((2,), (0, 1), 1.0)], [((0,), (0, 1), 1.0)]], 0.0)
    u = np.full(8, 1 / 8)
    assert np.allclose(apply_transition(u, model), u, atol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_dense_matches_literal_enumeration(seed):
    model = random_small(seed, n=3, p=0.07)
    assert np.allclose(dense_transition_matrix(model), literal_matrix(model), atol=1e-14, rtol=0)


@pytest.mark.parametrize("seed", range(20))
def test_structured_matches_dense(seed):
    model = random_small(seed, p=0.05)
    P = dense_transition_matrix(model)
    rng = np.random.default_rng(seed)
    dist = rng.random(1 << model.n)
    dist /= dist.sum()
    assert np.abs(apply_transition(dist, model) - dist @ P).max() <= 1e-12


def test_identity_steady_state():
    for p in (0.01, 0.3, 0.9):
        assert np.allclose(steady_state(identity_model(p)), [0.5, 0.5], atol=1e-10)


def test_embedded_two_state_chain():
    a, b, p = 24 / 11873, 24 / 25, 1e-4
    c1 = (a - p) / (1 - p)  # constant-1 weight: from 0 the chain moves with total prob a
    c0 = (b - p) / (1 - p)  # constant-0 weight: from 1 the chain moves with total prob b
    model = make_model([[((), (1,), c1), ((), (0,), c0), ((0,), (0, 1), 1 - c0 - c1)]], p)
    P = dense_transition_matrix(model)
    assert np.allclose(P, [[1 - a, a], [b, 1 - b]], atol=1e-15)
    pi = steady_state(model)
    assert np.round(pi, 6).tolist() == [0.997899, 0.002101]


@pytest.mark.parametrize("seed", range(10))
def test_power_iteration_matches_linear_solve(seed):
    model = random_small(100 + seed, n=3, p=0.02)
    P = dense_transition_matrix(model)
    size = P.shape[0]
    A = np.vstack([(P - np.eye(size)).T, np.ones(size)])
    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0
    direct = np.linalg.lstsq(A, rhs, rcond=None)[0]
    pi = steady_state(model)
    assert np.abs(pi - direct).max() <= 1e-9
    assert np.all(pi > 0) and abs(pi.sum() - 1) <= 1e-10
    assert residual(pi, model) < 1e-10


def test_meta_probability():
    model = identity_model(0.2)
    assert exact_meta_probability(model, MetaPredicate(((0, 1),))) == pytest.approx(0.5, abs=1e-10)
    model = random_small(4, n=4)
    pi = steady_state(model)
    full = exact_meta_probability(model, MetaPredicate(((0, 0),)), pi) + \
        exact_meta_probability(model, MetaPredicate(((0, 1),)), pi)
    assert full == pytest.approx(1.0, abs=1e-10)


def test_forced_node_still_flips():
    model = random_small(9, n=3, p=0.05)
    forced = force_node_constant(model, 1, 1)
    pi = steady_state(forced)
    prob = exact_meta_probability(forced, MetaPredicate(((1, 1),)), pi)
    # the forced bit is its own two-state chain: 1 -> 0 iff its perturbation bit
    # fires (p); 0 -> 1 on a predictor step or its own flip (p + (1-p)^n)
    p, n = 0.05, 3
    a, b = p + (1 - p) ** n, p
    assert prob < 1.0
    assert prob == pytest.approx(a / (a + b), abs=1e-9)


def test_marginal_ordering():
    pi = np.zeros(8)
    pi[0b110] = 1.0  # node1 = 1, node2 = 1, node0 = 0
    assert marginal(pi, 3, [2, 0]).tolist() == [0, 0, 1, 0]
    assert marginal(pi, 3, [0, 2]).tolist() == [0, 1, 0, 0]


def test_caps_and_warnings():
    model = random_small(1, n=4)
    with pytest.raises(ExactError):
        steady_state(model, cap=3)
    with pytest.raises(ExactError):
        dense_transition_matrix(model, cap=3)
    with pytest.raises(ValueError):
        apply_transition(np.ones(3) / 3, model)
    with pytest.warns(UserWarning):
        steady_state(identity_model(0.0))


def test_p_zero_cycle_reports_nonconvergence():
    model = make_model([[((1,), (0, 1), 1.0)], [((0,), (0, 1), 1.0)]], 0.0)
    dist = np.array([0.0, 1.0, 0.0, 0.0])
    assert apply_transition(dist, model).tolist() == [0.0, 0.0, 1.0, 0.0]
    with pytest.warns(UserWarning):
        pi = steady_state(model)  # uniform is already a fixed point of the swap
    assert np.allclose(pi, 0.25)


def test_format_distribution():
    assert format_distribution([0.25, 0.75]) == "0 0.25\n1 0.75\n"
