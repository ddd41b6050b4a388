"""Command-line interface: ``attrpi {estimate,interval,simulate,coverage,solve}``.

Every command prints (or writes) its fully resolved configuration, so a
run can be repeated exactly.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import AggregateTable, DataError, ExperimentData, expand_aggregate, load_experiment, write_experiment
from .design import DesignDescriptor
from .estimands import (
    EstimandError,
    RegressionScheme,
    RegressorSpec,
    Tau1Scheme,
    beta_adj_weights,
    build_scheme,
    contrasts_from_config,
    tau1_weights,
)
from .exposure import build_propensity_classes, compute_exposure
from .intervals import (
    SCALES,
    BetaAdjProcedure,
    FixedMomentsProcedure,
    Tau1Procedure,
    alpha_from_level,
    default_moments,
    format_table,
    results_to_csv,
    tau1_interval,
)
from .moments import BlockMoments, MomentError, bias_bound, cached_mc_moments
from .simulate import (
    VaccineSimParams,
    adversarial_theta,
    coverage_study,
    gen_vaccinesim,
    generic_population,
)
from .solver import BoundProblem, SolverError, brute_force, solve_bnb, solve_relaxed
from .split import METHODS, SplitError, compute_split

EXIT_ERROR = 1
EXIT_MISSING = 2

logger = logging.getLogger("attrpi")


class MissingInput(Exception):
    def __init__(self, path):
        super().__init__(f"input file not found: {path}")
        self.path = path


def _existing(path) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise MissingInput(p)
    return p


def _read_json(path):
    with _existing(path).open() as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# shared input handling


def _add_data_args(p):
    g = p.add_argument_group("input")
    g.add_argument("--data", help="unit CSV (columns y, x, optional theta and covariates)")
    g.add_argument("--edges", help="edge CSV with src,dst (zero-based)")
    g.add_argument("--undirected", action="store_true", help="treat edges as undirected")
    g.add_argument("--aggregate", help="aggregate CSV with group,arm,events,size")
    g.add_argument("--spec", help="estimand spec JSON (default: difference in means)")
    g.add_argument("--design", choices=["srs", "bernoulli", "stratified-srs"],
                   help="randomization design (default from spec, else srs)")
    g.add_argument("--strata", help="covariate holding strata for stratified-srs")
    g.add_argument("--classes", nargs="*", help="propensity class keys (covariates or out-degree)")
    g.add_argument("--replications", "-R", type=int, default=20_000, help="Monte Carlo draws for moments")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1, help="worker cap")


def _load_data(args) -> ExperimentData:
    if args.aggregate:
        return expand_aggregate(AggregateTable.read_csv(_existing(args.aggregate)))
    if not args.data:
        raise DataError("one of --data or --aggregate is required")
    from .data import Schema

    return load_experiment(_existing(args.data), _existing(args.edges), Schema(undirected=args.undirected))


def _spec(args) -> dict:
    return _read_json(args.spec) if args.spec else {"scheme": "tau1", "name": "tau1"}


def _design(args, spec, data) -> DesignDescriptor:
    dcfg = dict(spec.get("design", {}))
    kind = args.design or dcfg.get("kind", "srs")
    strata = args.strata or dcfg.get("strata")
    if kind == "bernoulli" and "rho" in dcfg:
        return DesignDescriptor.bernoulli(data.n_units, float(dcfg["rho"]), args.seed)
    return DesignDescriptor.matching_observed(data, kind, strata, args.seed)


def _classes(args, spec, data):
    keys = args.classes if args.classes else spec.get("classes")
    return build_propensity_classes(data, keys) if keys else None


def _schemes(spec, data, classes):
    """``[(name, scheme)]``; regression specs expand into one scheme per contrast."""
    if spec.get("scheme", "tau1") == "regression":
        return [(name, RegressionScheme(RegressorSpec.from_config(spec, c), data, classes, name))
                for name, c in contrasts_from_config(spec)]
    sch = build_scheme(spec, data, classes)
    return [(spec.get("name", sch.name), sch)]


def _moments(args, spec, scheme, data, design):
    m = default_moments(scheme, data, design, args.replications, args.seed, args.threads)
    if isinstance(m, BlockMoments) and spec.get("blocks"):
        m = m.refine(data.covariate(spec["blocks"]))
    return m


def _resolved(args, extra=None) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    if extra:
        cfg.update(extra)
    return cfg


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config_line(cfg) -> str:
    return "# resolved-config: " + json.dumps(cfg, sort_keys=True, default=str) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    data = _load_data(args)
    spec = _spec(args)
    design = _design(args, spec, data)
    classes = _classes(args, spec, data)
    lines = []
    for name, sch in _schemes(spec, data, classes):
        w = sch.weights(np.asarray(data.x), np.random.default_rng(args.seed))
        est = float(w @ data.y)
        m = _moments(args, spec, sch, data, design)
        if isinstance(m, BlockMoments):
            contrib = m.sizes * m.mean
            bl, bh = float(np.minimum(contrib, 0).sum()), float(np.maximum(contrib, 0).sum())
        else:
            bl, bh = bias_bound(m.mean_w)
        s = SCALES[args.scale]
        lines.append([name, f"{est * s:.{args.digits}f}", f"{bl * s:.{args.digits}f}",
                      f"{bh * s:.{args.digits}f}", m.provenance()["method"]])
    head = ["Estimand", "Point Estimate", "Bias lo", "Bias hi", "Moments"]
    widths = [max(len(r[i]) for r in [head] + lines) for i in range(len(head))]
    body = "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + lines)
    cfg = _resolved(args, {"design": design.to_config()})
    _emit(_config_line(cfg) + body + "\n", args.output)
    return 0


def _interval_results(args, data, spec, design, classes):
    level = args.level
    constraints = list(spec.get("constraints", []))
    if args.theta_mean_cap is not None:
        constraints.append({"type": "mean_cap", "cap": args.theta_mean_cap})
    if args.constraints:
        constraints.extend(_read_json(args.constraints))
    if spec.get("scheme") == "beta_adj_alt":
        if design.kind != "srs":
            raise DataError("the alternative exposure-slope interval requires an srs design")
        if classes is None:
            raise DataError("the alternative exposure-slope interval needs --classes")
        proc = BetaAdjProcedure(data.network, classes, data.n_treated, 1.0 - level,
                                constraints=constraints, split_method=args.split,
                                solver=args.solver, node_budget=args.node_budget,
                                time_budget=args.time_budget, threads=args.threads)
        return [proc(data)], constraints
    results = []
    for name, sch in _schemes(spec, data, classes):
        if isinstance(sch, Tau1Scheme) and design.kind == "srs" and not args.general:
            cap = args.theta_mean_cap
            r = tau1_interval(data, alpha_from_level(level), cap)
            r.estimand = name
            results.append(r)
            continue
        m = _moments(args, spec, sch, data, design)
        splits = METHODS if args.compare_splits else (args.split,)
        for method in splits:
            proc = FixedMomentsProcedure(sch, design, alpha_from_level(level), m,
                                         constraints=constraints, split_method=method,
                                         solver=args.solver, node_budget=args.node_budget,
                                         time_budget=args.time_budget,
                                         widen_by_bias=args.widen_by_bias, threads=args.threads,
                                         name=name if len(splits) == 1 else f"{name} [{method}]")
            results.append(proc(data, np.random.default_rng(args.seed)))
    return results, constraints


def cmd_interval(args) -> int:
    data = _load_data(args)
    spec = _spec(args)
    design = _design(args, spec, data)
    classes = _classes(args, spec, data)
    results, constraints = _interval_results(args, data, spec, design, classes)
    if spec.get("scheme") == "beta_adj_alt":
        alpha, convention = 1.0 - args.level, "level = 1 - alpha, z = z_{1-alpha/2}"
    else:
        alpha, convention = alpha_from_level(args.level), "level = 1 - 2*alpha, z = z_{1-alpha}"
    cfg = _resolved(args, {"design": design.to_config(), "constraints": constraints,
                           "alpha": alpha, "level_convention": convention})
    if args.format == "csv":
        text = _config_line(cfg) + results_to_csv(results, args.scale)
    else:
        text = _config_line(cfg) + format_table(results, args.scale, args.digits) + "\n"
    _emit(text, args.output)
    return 0


def cmd_simulate(args) -> int:
    if args.model == "vaccinesim":
        params = VaccineSimParams(n_neighborhoods=args.neighborhoods, mean_size=args.mean_size,
                                  re_scale=args.re_scale)
        data = gen_vaccinesim(params, args.seed)
    else:
        pop = generic_population(args.n, args.network, args.degree, args.theta, args.p_theta,
                                 args.effect, args.seed)
        design = DesignDescriptor.srs(args.n, args.n // 2, args.seed)
        from .design import draw_rng

        data = pop.experiment(design.draw(draw_rng(args.seed, 0)))
    write_experiment(data, args.out, args.edges_out)
    cfg = _resolved(args, {"n_units": data.n_units, "n_treated": data.n_treated})
    Path(str(args.out) + ".config.json").write_text(json.dumps(cfg, sort_keys=True, indent=1) + "\n")
    sys.stdout.write(_config_line(cfg))
    return 0


def cmd_coverage(args) -> int:
    pop = generic_population(args.n, args.network, args.degree, args.theta, args.p_theta,
                             args.effect, args.seed)
    n1 = int(round(args.n * args.treated_fraction))
    from .design import draw_rng

    if args.estimand == "weighted":
        design = DesignDescriptor.bernoulli(args.n, args.treated_fraction, args.seed)
    else:
        design = DesignDescriptor.srs(args.n, n1, args.seed)
    data0 = pop.experiment(design.draw(draw_rng(args.seed, 10**9)))
    if args.estimand == "tau1":
        proc = Tau1Procedure(alpha_from_level(args.level), args.theta_mean_cap)

        def weights_fn(d):
            return tau1_weights(d.x)
        if args.adversarial:
            general = FixedMomentsProcedure(
                Tau1Scheme(), design, alpha_from_level(args.level),
                default_moments(Tau1Scheme(), data0, design), node_budget=args.node_budget)
            theta = general(data0).theta_U
            pop = pop.with_theta(theta)
    elif args.estimand == "beta_adj":
        classes = build_propensity_classes(data0, ["out-degree"])
        proc = BetaAdjProcedure(pop.network, classes, n1, 1.0 - args.level, node_budget=args.node_budget)

        def weights_fn(d):
            return beta_adj_weights(compute_exposure(d.network, d.x), classes)
    else:
        classes = build_propensity_classes(data0, ["out-degree"])
        from .estimands import WeightedScheme

        sch = WeightedScheme(data0, classes, z_min=1)
        m = cached_mc_moments(sch, data0, design, args.replications, args.seed, threads=args.threads)
        proc = FixedMomentsProcedure(sch, design, alpha_from_level(args.level), m,
                                     node_budget=args.node_budget)

        def weights_fn(d):
            return sch.weights(d.x)
    if args.adversarial and args.estimand != "tau1":
        _, report = adversarial_theta(proc, data0, pop, design, weights_fn, args.reps, args.seed)
    else:
        report = coverage_study(pop, design, proc, weights_fn, args.reps, args.seed, label=args.estimand)
    cfg = _resolved(args)
    _emit(_config_line(cfg) + report.to_csv(), args.output)
    sys.stderr.write(report.summary() + "\n")
    return 0


def cmd_solve(args) -> int:
    problem = BoundProblem.load(_existing(args.problem))
    if args.sense:
        problem = problem.with_sense(args.sense)
    if args.split:
        problem.split = compute_split(problem.Q, args.split)
    if args.brute_force:
        res = brute_force(problem)
    elif args.relaxed:
        res = solve_relaxed(problem)
    else:
        res = solve_bnb(problem, node_budget=args.node_budget, time_budget=args.time_budget)
    cfg = _resolved(args, {"split_method": problem.split.method if problem.split else None})
    out = {"value": res.value, "status": res.status, "nodes": res.nodes, "gap": res.gap,
           "incumbent": None if res.incumbent is None else [int(v) if float(v).is_integer() else float(v)
                                                            for v in res.incumbent]}
    _emit(_config_line(cfg) + json.dumps(out, sort_keys=True) + "\n", args.output)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--split", choices=METHODS, default="sdp-lite", help="diagonal split method")
    g.add_argument("--solver", choices=["bnb", "relaxed", "brute-force"], default="bnb")
    g.add_argument("--node-budget", type=int, default=10_000)
    g.add_argument("--time-budget", type=float, default=None, help="seconds per bound solve")


def _add_output_args(p):
    p.add_argument("--output", "-o", help="write to this path instead of stdout")
    p.add_argument("--scale", choices=list(SCALES), default="raw",
                   help="presentation scale (values are stored as proportions)")
    p.add_argument("--digits", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attrpi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="point estimates and bias bounds")
    _add_data_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("interval", help="prediction intervals")
    _add_data_args(p)
    _add_solver_args(p)
    _add_output_args(p)
    p.add_argument("--level", type=float, default=0.90,
                   help="coverage level 1-2*alpha (alternative slope interval: 1-alpha)")
    p.add_argument("--theta-mean-cap", type=float, default=None,
                   help="assume mean(theta) <= this value")
    p.add_argument("--constraints", help="JSON list of additional theta constraints")
    p.add_argument("--widen-by-bias", action="store_true", help="add the bias bound to the endpoints")
    p.add_argument("--general", action="store_true",
                   help="use the optimization pipeline even where a closed form exists")
    p.add_argument("--compare-splits", action="store_true", help="report intervals under every split method")
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.set_defaults(func=cmd_interval)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--model", choices=["vaccinesim", "generic"], default="vaccinesim")
    p.add_argument("--out", required=True, help="unit CSV path")
    p.add_argument("--edges-out", required=True, help="edge CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--neighborhoods", type=int, default=40)
    p.add_argument("--mean-size", type=float, default=25.0)
    p.add_argument("--re-scale", type=float, default=1.0, help="sd of the neighborhood participation effect")
    _add_population_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coverage", help="coverage study on a synthetic population")
    p.add_argument("--estimand", choices=["tau1", "beta_adj", "weighted"], default="tau1")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--level", type=float, default=0.90)
    p.add_argument("--treated-fraction", type=float, default=0.5)
    p.add_argument("--theta-mean-cap", type=float, default=None)
    p.add_argument("--adversarial", action="store_true", help="use the bound solve's worst-case theta")
    p.add_argument("--node-budget", type=int, default=200)
    p.add_argument("--replications", "-R", type=int, default=20_000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o")
    _add_population_args(p)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("solve", help="run a bound problem file through the solver")
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--brute-force", action="store_true", help="enumerate all binary points")
    p.add_argument("--relaxed", action="store_true", help="root relaxation bound only")
    p.add_argument("--sense", choices=["max", "min"])
    p.add_argument("--split", choices=METHODS, help="recompute the split with this method")
    p.add_argument("--node-budget", type=int, default=100_000)
    p.add_argument("--time-budget", type=float, default=None)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_solve)
    return parser


def _add_population_args(p):
    g = p.add_argument_group("generic population")
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--network", choices=["ring", "er"], default="ring")
    g.add_argument("--degree", type=float, default=2)
    g.add_argument("--theta", choices=["bernoulli", "block", "half"], default="half")
    g.add_argument("--p-theta", type=float, default=0.5)
    g.add_argument("--effect", choices=["none", "cure", "spillover", "cause"], default="none")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingInput as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_MISSING
    except (DataError, EstimandError, MomentError, SolverError, SplitError, ValueError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
