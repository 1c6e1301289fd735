"""``pbn-steady`` command line.

Every command writes line-delimited JSON records (one object per line) to
stdout or ``--out``; ``--pretty`` prints ``key: value`` blocks instead.
Exit status: 0 success, 1 usage error, 2 operational failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from . import analysis, exact, twostate
from ._accel import HAVE_NUMBA, default_backend
from .model import GeneratorSpec, ModelError, density, generate_random
from .pbnformat import parse_model, serialize_model
from .sim import SimCursor, parse_predicate

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
HEURISTIC_FLAGS = {
    "simple": "simple",
    "controlled": "controlled",
    "pitfall": "pitfall_avoidance",
    "none": "none",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunRecord:
    command: str
    model: str
    model_sha256: str
    predicate: str
    r: float
    s: float
    epsilon: float
    k: int
    m0: int
    n0: int
    heuristic: str
    alpha_hat: float
    beta_hat: float
    M: int
    N: int
    total_steps: int
    iterations: int
    q_hat: float
    seed: int
    wall_time_ms: float
    replication: int = 0


def _emit(records, args) -> None:
    lines = []
    for rec in records:
        rec = asdict(rec) if not isinstance(rec, dict) else rec
        if getattr(args, "pretty", False):
            lines.append("\n".join(f"{k}: {v}" for k, v in rec.items()) + "\n")
        else:
            lines.append(json.dumps(rec))
    text = "\n".join(lines) + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _model(path):
    text = Path(path).read_text(encoding="utf-8")
    return parse_model(text), hashlib.sha256(text.encode("utf-8")).hexdigest()


def _params(args) -> twostate.TwoStateParams:
    try:
        n0 = None if str(args.n0).upper() == "AUTO" else int(args.n0)
        return twostate.TwoStateParams(
            r=args.r, s=args.s, epsilon=args.epsilon, k=args.k, m0=args.m0, n0=n0,
            heuristic=HEURISTIC_FLAGS[args.heuristic],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _predicate(text: str, model):
    try:
        return parse_predicate(text, model)
    except ValueError as exc:
        raise UsageError(f"bad --predicate: {exc}") from None


def _nodes(text: str, model) -> list[int]:
    return [model.node_index(tok.strip()) for tok in text.split(",") if tok.strip()]


# -- steady --------------------------------------------------------------------


def _steady_one(job):
    model_path, argv, pred_text, params, seed, rep = job
    model, digest = _model(model_path)
    pred = parse_predicate(pred_text, model)
    res = twostate.run(SimCursor(model, seed), pred, params)
    return RunRecord(
        command=argv, model=str(model_path), model_sha256=digest, predicate=str(pred),
        r=params.r, s=params.s, epsilon=params.epsilon, k=params.k, m0=params.m0, n0=res.n0,
        heuristic=params.heuristic, alpha_hat=res.alpha_hat, beta_hat=res.beta_hat, M=res.M,
        N=res.N, total_steps=res.total_steps, iterations=res.iterations, q_hat=res.q_hat,
        seed=seed, wall_time_ms=res.wall_time * 1e3, replication=rep,
    )


def cmd_steady(args) -> int:
    params = _params(args)
    model, _ = _model(args.model)
    _predicate(args.predicate, model)  # fail fast on a bad predicate
    argv = " ".join(sys.argv)
    jobs = [(args.model, argv, args.predicate, params, args.seed + i, i)
            for i in range(args.replications)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_steady_one, jobs))
    else:
        records = [_steady_one(job) for job in jobs]
    _emit(records, args)
    return EXIT_OK


# -- exact ---------------------------------------------------------------------


def cmd_exact(args) -> int:
    model, digest = _model(args.model)
    pi = exact.steady_state(model, cap=args.cap)
    if args.predicate:
        pred = _predicate(args.predicate, model)
        _emit([{"command": "exact", "model": args.model, "model_sha256": digest,
                "predicate": str(pred), "probability": exact.exact_meta_probability(model, pred, pi),
                "residual": exact.residual(pi, model, args.cap)}], args)
    else:
        _emit([{"state": s, "prob": float(p)} for s, p in enumerate(pi)], args)
    return EXIT_OK


# -- influence / sensitivity -----------------------------------------------------


def cmd_influence(args) -> int:
    model, digest = _model(args.model)
    target = model.node_index(args.target)
    params = _params(args) if args.mode == "estimate" else None
    report = analysis.influence_report(model, target, args.mode, params=params, seed=args.seed)
    sources = [model.node_index(args.source)] if args.source else sorted(report.influences)
    records = [{"command": "influence", "model": args.model, "model_sha256": digest,
                "source": k, "target": target, "mode": args.mode,
                "influence": report.influence(k), "probes": report.probes, "seed": args.seed}
               for k in sources]
    _emit(records, args)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    model, digest = _model(args.model)
    node = model.node_index(args.node)
    observed = _nodes(args.observe, model)
    params = _params(args) if args.method == "estimate" else None
    norm = float("inf") if args.norm == "inf" else float(args.norm)
    common = dict(params=params, seed=args.seed, method=args.method, paired=args.paired)
    if args.kind == "selection":
        if args.func_index is None or args.new_p is None:
            raise UsageError("--kind selection needs --func and --new-p")
        value = analysis.sensitivity_selection_prob(model, node, args.func_index, args.new_p, observed,
                                                    norm, **common)
    else:
        value = analysis.sensitivity_onoff(model, node, observed, norm, **common)
    _emit([{"command": "sensitivity", "kind": args.kind, "model": args.model,
            "model_sha256": digest, "node": node, "func": args.func_index, "new_p": args.new_p,
            "observed": observed, "norm": args.norm, "method": args.method,
            "sensitivity": value, "seed": args.seed}], args)
    return EXIT_OK


# -- structure -----------------------------------------------------------------


def _generator_spec(args) -> GeneratorSpec:
    try:
        return GeneratorSpec(args.nodes, args.min_funcs, args.max_funcs, args.min_parents,
                             args.max_parents, args.seed, args.perturbation)
    except ModelError as exc:
        raise UsageError(str(exc)) from None


def cmd_generate(args) -> int:
    model = generate_random(_generator_spec(args))
    text = serialize_model(model)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(json.dumps({"command": "generate", "out": args.out, "nodes": model.n,
                          "density": density(model), "seed": args.seed}))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_density(args) -> int:
    model, digest = _model(args.model)
    _emit([{"command": "density", "model": args.model, "model_sha256": digest,
            "nodes": model.n, "density": density(model)}], args)
    return EXIT_OK


def cmd_safe_n0(args) -> int:
    if args.r <= 0 or not 0 < args.s < 1:
        raise UsageError("need r > 0 and s in (0, 1)")
    rng = twostate.safe_n0_range(args.r, args.s)
    _emit([{"command": "safe-n0", "r": args.r, "s": args.s,
            "n0_range": twostate.format_range(rng),
            "lower": rng[0] if rng else None, "upper": rng[1] if rng else None}], args)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.model:
        model, _ = _model(args.model)
        source = args.model
    else:
        model = generate_random(_generator_spec(args))
        source = f"generated:{args.nodes}"
    backends = ["numba", "numpy"] if args.backend == "both" else [args.backend or default_backend()]
    if "numba" in backends and not HAVE_NUMBA:
        raise UsageError("numba is not installed")
    records = []
    for backend in backends:
        cursor = SimCursor(model, args.seed, backend=backend)
        cursor.simulate(min(args.steps, 10))  # compile / warm up
        steps = args.steps if backend == "numba" else min(args.steps, args.numpy_steps)
        t0 = time.perf_counter()
        cursor.simulate(steps)
        elapsed = time.perf_counter() - t0
        records.append({"command": "bench", "model": source, "nodes": model.n,
                        "density": density(model), "backend": backend, "steps": steps,
                        "wall_time_s": elapsed, "steps_per_s": steps / elapsed if elapsed else None,
                        "seed": args.seed})
    _emit(records, args)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _add_estimator_flags(p, required_r=True):
    p.add_argument("--r", type=float, required=required_r, default=None if required_r else 0.01,
                   help="half-width precision")
    p.add_argument("--s", type=float, default=0.95, help="confidence level")
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--k", type=int, default=1, help="subsampling lag")
    p.add_argument("--m0", type=int, default=5)
    p.add_argument("--n0", default="AUTO")
    p.add_argument("--heuristic", choices=sorted(HEURISTIC_FLAGS), default="simple")


def _add_generator_flags(p, required=True):
    p.add_argument("--nodes", type=int, required=required)
    p.add_argument("--min-funcs", type=int, default=1)
    p.add_argument("--max-funcs", type=int, default=1)
    p.add_argument("--min-parents", type=int, default=1)
    p.add_argument("--max-parents", type=int, default=1)
    p.add_argument("--perturbation", type=float, default=0.001)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pbn-steady", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("steady", help="estimate a meta-state steady-state probability")
    p.add_argument("--model", required=True)
    p.add_argument("--predicate", required=True, help='e.g. "name=1&3=0"')
    _add_estimator_flags(p)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--jobs", type=int, default=int(os.environ.get("PBN_STEADY_JOBS", "1")))
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("exact", help="exact steady state of a small model")
    p.add_argument("--model", required=True)
    p.add_argument("--predicate")
    p.add_argument("--cap", type=int, default=exact.DEFAULT_CAP)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("influence", help="influences of a node's parents")
    p.add_argument("--model", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--source")
    p.add_argument("--mode", choices=analysis.MODES, default="uniform")
    _add_estimator_flags(p, required_r=False)
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("sensitivity", help="long-run sensitivity of observed nodes")
    p.add_argument("--model", required=True)
    p.add_argument("--kind", choices=("selection", "onoff"), required=True)
    p.add_argument("--node", required=True)
    p.add_argument("--func", type=int, dest="func_index")
    p.add_argument("--new-p", type=float)
    p.add_argument("--observe", required=True, help="comma-separated node indices or names")
    p.add_argument("--norm", default="1")
    p.add_argument("--method", choices=("exact", "estimate"), default="estimate")
    p.add_argument("--paired", action="store_true", help="common random numbers")
    _add_estimator_flags(p, required_r=False)
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("generate", help="random PBN in .pbn format")
    _add_generator_flags(p)
    p.add_argument("--seed", type=_u64, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("density", help="density of a model")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("safe-n0", help="safe initial sample sizes for pitfall avoidance")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--s", type=float, default=0.95)
    p.set_defaults(func=cmd_safe_n0)

    p = sub.add_parser("bench", help="trajectory throughput")
    p.add_argument("--model")
    _add_generator_flags(p, required=False)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--numpy-steps", type=int, default=5_000,
                   help="step cap for the numpy backend")
    p.add_argument("--backend", choices=("numba", "numpy", "both"))
    p.add_argument("--seed", type=_u64, required=True)
    p.set_defaults(func=cmd_bench)

    for action in sub.choices.values():
        action.add_argument("--out")
        action.add_argument("--pretty", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and not args.model and args.nodes is None:
        parser.error("bench needs --model or --nodes")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pbn-steady: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (twostate.EstimatorError, exact.ExactError, ModelError, ValueError, OSError) as exc:
        print(f"pbn-steady: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
