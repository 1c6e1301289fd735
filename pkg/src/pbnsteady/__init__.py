"""Steady-state estimation for large probabilistic Boolean networks."""

from .alias import AliasTable, build_alias
from .exact import apply_transition, exact_meta_probability, steady_state
from .model import (
    GeneratorSpec,
    ModelError,
    NodeSpec,
    PBNModel,
    PredictorFunction,
    density,
    force_node_constant,
    generate_random,
    perturb_selection_prob,
)
from .pbnformat import ParseError, load_model, parse_model, save_model, serialize_model
from .sim import MetaPredicate, SimCursor, parse_predicate, project
from .twostate import TwoStateParams, TwoStateRun, estimate, run, safe_n0_range

__version__ = "0.1.0"
