import numpy as np
import pytest

from pbnsteady.model import GeneratorSpec, generate_random, make_model

IDENTITY_TEXT = """\
pbn 1
nodes 1
perturbation 0.1
node 0
func 1.0 : 0 : 01
end
"""


def identity_model(p=0.1):
    return make_model([[((0,), (0, 1), 1.0)]], p)


def swap_model(p=0.0):
    """node0 := node1, node1 := node0."""
    return make_model([[((1,), (0, 1), 1.0)], [((0,), (0, 1), 1.0)]], p)


def random_small(seed, n=None, p=0.01, funcs=(1, 3), parents=(1, 3)):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 5))
    return generate_random(GeneratorSpec(
        node_count=n, min_funcs=funcs[0], max_funcs=funcs[1],
        min_parents=min(parents[0], n), max_parents=min(parents[1], n),
        seed=seed, perturbation_p=p,
    ))


@pytest.fixture
def identity():
    return identity_model()


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS:
        terminalreporter.write_line(line)
