"""Command-line entry point.

Subcommands: bne, bfne, price, learn-sim, serve, report.  File outputs land
under --out and are byte-deterministic for a fixed seed.  Exit codes: 0 on
success, 1 on invalid input, 2 on infeasible instances.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .choice import PopulationSamples, UserParams, load_population
from .diagrams import emit_network_diagrams
from .equilibria import (
    EquilibriumResult,
    FlexibilityProfile,
    InfeasibleDemandError,
    fully_flexible_profile,
    solve_bfne,
    solve_bne,
)
from .learning import (
    ChoiceDatum,
    MHConfig,
    Prior,
    QuerySpace,
    SynthesisConfig,
    random_query,
    sample_posterior,
    simulate_choice,
    synthesize_query,
)
from .network import DemandSpec, NetworkError, load_network
from .pricing import (
    InfeasiblePricingError,
    SolverConfig,
    load_problem,
    social_objective,
    solve_pricing,
    solve_pricing_partial_control,
    verify_structure,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2


def _write_json(doc: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _print_equilibrium(tag: str, result: EquilibriumResult) -> None:
    print(f"{tag}: m_eq={result.m_eq} m_all={result.m_all} "
          f"eq_latency={result.eq_latency:.6g} cost={result.cost:.6g}")
    print(f"{'road':>6} {'f_h':>12} {'f_a':>12} {'s':>3}")
    for i in range(result.routing.n):
        print(f"{i + 1:>6} {result.routing.f_h[i]:>12.4f} "
              f"{result.routing.f_a[i]:>12.4f} {int(result.routing.s[i]):>3}")


def _load_profile(path: str) -> FlexibilityProfile:
    doc = json.loads(Path(path).read_text())
    levels = tuple(
        (float(level["kappa"]), float(level["phi"])) for level in doc["levels"])
    return FlexibilityProfile(levels=levels)


def cmd_bne(args: argparse.Namespace) -> int:
    try:
        network = load_network(args.network)
    except (NetworkError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = solve_bne(network, DemandSpec(args.lambda_h, args.lambda_a))
    except InfeasibleDemandError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _print_equilibrium("BNE", result)
    if args.out:
        _write_json(result.to_dict(), Path(args.out) / "bne.json")
    return EXIT_OK


def cmd_bfne(args: argparse.Namespace) -> int:
    try:
        network = load_network(args.network)
        profile = _load_profile(args.profile)
    except (NetworkError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = solve_bfne(network, DemandSpec(args.lambda_h, args.lambda_a), profile)
    except InfeasibleDemandError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _print_equilibrium("BFNE", result)
    if args.out:
        _write_json(result.to_dict(), Path(args.out) / "bfne.json")
    return EXIT_OK


def cmd_price(args: argparse.Namespace) -> int:
    try:
        problem = load_problem(args.problem)
    except (NetworkError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    config = SolverConfig(restarts=args.restarts, seed=args.seed)
    try:
        if problem.uncontrolled_lambda_b is not None:
            solution = solve_pricing_partial_control(problem, config)
        else:
            solution = solve_pricing(problem, config)
    except InfeasiblePricingError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    print(f"pricing: k={solution.k} objective={solution.objective:.6g} "
          f"profit={solution.profit:.6g} max_residual={solution.max_residual:.3g}")
    print(f"{'road':>6} {'f_h':>12} {'f_a':>12} {'price':>12} {'s':>3}")
    for i in range(solution.routing.n):
        print(f"{i + 1:>6} {solution.routing.f_h[i]:>12.4f} "
              f"{solution.routing.f_a[i]:>12.4f} {solution.prices[i]:>12.4f} "
              f"{int(solution.routing.s[i]):>3}")
    structure = verify_structure(problem, solution)
    print(f"structure check: free_flow_road={structure.free_flow_road} "
          f"equal_prefix={structure.equal_prefix_latencies} "
          f"no_humans_beyond_k={structure.no_humans_beyond_k}")

    # benchmark comparison on the embedded network at the full demands
    demand = DemandSpec(problem.lambda_h,
                        problem.lambda_a + (problem.uncontrolled_lambda_b or 0.0))
    comparison: dict[str, float | None] = {}
    for tag, solver in (("bne", lambda: solve_bne(problem.network, demand)),
                        ("bfne_fully_flexible",
                         lambda: solve_bfne(problem.network, demand,
                                            fully_flexible_profile()))):
        try:
            bench = solver()
            avg = bench.cost / (demand.lambda_h + demand.lambda_a) \
                if demand.lambda_h + demand.lambda_a > 0 else math.nan
            comparison[tag] = avg
            print(f"benchmark {tag}: cost={bench.cost:.6g} avg_latency={avg:.6g}")
        except InfeasibleDemandError:
            comparison[tag] = None
            print(f"benchmark {tag}: infeasible at full demand")

    if args.out:
        doc = solution.to_dict()
        doc["benchmark_avg_latency"] = comparison
        _write_json(doc, Path(args.out) / "price.json")
    return EXIT_OK


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _learning_curves(true_user: UserParams, prior: Prior, space: QuerySpace,
                     budget: int, num_samples: int, restarts: int,
                     seed: int, user_idx: int, active: bool) -> list[tuple]:
    """One simulated elicitation run; returns per-query curve rows."""
    mode = 0 if active else 1
    choice_rng = np.random.default_rng(_derived_seed(seed, user_idx, mode, 10_000))
    data: list[ChoiceDatum] = []
    init_rng = np.random.default_rng(_derived_seed(seed, user_idx, mode, 0))
    samples = PopulationSamples(prior.sample(init_rng, num_samples))
    rows = []
    truth = true_user.as_array()
    for step in range(budget):
        if active:
            query = synthesize_query(samples, space, SynthesisConfig(
                restarts=restarts, seed=_derived_seed(seed, user_idx, mode, step + 1)))
        else:
            query = random_query(space, np.random.default_rng(
                _derived_seed(seed, user_idx, mode, step + 1)))
        chosen = simulate_choice(true_user, query.offer, choice_rng)
        data.append(ChoiceDatum(offer=query.offer, chosen=chosen))
        samples = sample_posterior(data, prior, num_samples, MHConfig(
            seed=_derived_seed(seed, user_idx, mode, 20_000 + step)))
        mean = samples.values.mean(axis=0)
        err = float(np.linalg.norm(mean - truth))
        trace = float(np.cov(samples.values.T).trace())
        rows.append((step + 1, err, trace))
    return rows


def _write_curve_csv(rows: list[tuple], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["query_index", "posterior_mean_error", "trace_covariance"])
        for row in rows:
            writer.writerow([row[0], repr(row[1]), repr(row[2])])


def cmd_learn_sim(args: argparse.Namespace) -> int:
    try:
        population = load_population(args.true_params)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.budget < 1:
        print("error: budget must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    prior = Prior()
    space = QuerySpace()
    out = Path(args.out) if args.out else Path(".")
    summary_rows = []
    for idx, user in enumerate(population.users()):
        active = _learning_curves(user, prior, space, args.budget, args.num_samples,
                                  args.restarts, args.seed, idx, active=True)
        rand = _learning_curves(user, prior, space, args.budget, args.num_samples,
                                args.restarts, args.seed, idx, active=False)
        _write_curve_csv(active, out / f"active_{idx:03d}.csv")
        _write_curve_csv(rand, out / f"random_{idx:03d}.csv")
        summary_rows.append((idx, repr(active[-1][2]), repr(rand[-1][2]),
                             int(active[-1][2] < rand[-1][2])))
        print(f"user {idx}: final trace active={active[-1][2]:.5g} "
              f"random={rand[-1][2]:.5g}")
    with open(out / "summary.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["user", "final_trace_active", "final_trace_random",
                         "active_wins"])
        writer.writerows(summary_rows)
    wins = sum(r[3] for r in summary_rows)
    print(f"active wins {wins}/{len(summary_rows)}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    try:
        app = create_app(args.data_dir, args.static_dir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    except SystemExit:
        raise
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        network = load_network(args.network)
    except (NetworkError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    eq_latency = None
    if args.lambda_h is not None and args.lambda_a is not None:
        try:
            eq_latency = solve_bne(
                network, DemandSpec(args.lambda_h, args.lambda_a)).eq_latency
        except InfeasibleDemandError:
            print("note: demand infeasible, omitting equilibrium overlay")
    out = Path(args.out) if args.out else Path(".")
    written = emit_network_diagrams(network, out, eq_latency)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixedroads",
        description="Equilibrium benchmarks, pricing, and preference learning "
                    "for mixed-autonomy parallel road networks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bne", help="best-case Nash equilibrium benchmark")
    p.add_argument("network", help="network JSON file")
    p.add_argument("--lambda-h", type=float, required=True)
    p.add_argument("--lambda-a", type=float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bne)

    p = sub.add_parser("bfne", help="best-case flexible Nash equilibrium benchmark")
    p.add_argument("network", help="network JSON file")
    p.add_argument("--lambda-h", type=float, required=True)
    p.add_argument("--lambda-a", type=float, required=True)
    p.add_argument("--profile", required=True, help="flexibility profile JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bfne)

    p = sub.add_parser("price", help="solve the planner pricing optimization")
    p.add_argument("problem", help="pricing problem JSON file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("learn-sim", help="simulated active-vs-random learning")
    p.add_argument("true_params", help="JSONL of true user parameters")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--num-samples", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_learn_sim)

    p = sub.add_parser("serve", help="run the elicitation service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None,
                   help="storage root (default: env ELICIT_DATA_DIR)")
    p.add_argument("--static-dir", default=None,
                   help="built frontend to serve under /app")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="emit network diagram CSV/SVG pairs")
    p.add_argument("network", help="network JSON file")
    p.add_argument("--lambda-h", type=float, default=None)
    p.add_argument("--lambda-a", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
