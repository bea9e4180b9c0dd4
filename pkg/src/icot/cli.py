"""Command-line front end.

Exit status: 0 success, 1 failed check or solver failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, io, ot, relay, sphere, suites
from .errors import CertificationError, ConvergenceError, InputError, NumericRangeError

OUTPUT_ENV = "ICOT_OUTPUT_DIR"


class UsageError(Exception):
    pass


def parse_grid(text: str) -> np.ndarray:
    """'start:stop:steps' -> inclusive linear grid; a comma list is taken verbatim."""
    try:
        if ":" in text:
            start, stop, steps = text.split(":")
            steps = int(steps)
            if steps < 1:
                raise ValueError
            return np.linspace(float(start), float(stop), steps)
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected start:stop:steps or a comma list") from None


def _output_path(args) -> Path | None:
    if not args.output:
        return None
    path = Path(args.output)
    base = os.environ.get(OUTPUT_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, text: str) -> None:
    path = _output_path(args)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _emit_table(args, header, rows, svg=None) -> None:
    if args.format == "json":
        _emit(args, io.table_json(header, rows))
    elif args.format == "svg":
        if svg is None:
            raise UsageError("svg output is only available for curve-producing commands")
        _emit(args, svg)
    else:
        _emit(args, io.table_csv(header, rows))


def _need_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for sampling commands")
    return args.seed


def cmd_ot(args) -> int:
    if not args.input or len(args.input) != 2:
        raise UsageError("ot needs exactly two --input files (Z then Y)")
    (Z, _), (Y, _) = io.read_distribution(args.input[0]), io.read_distribution(args.input[1])
    C = ot.cost_matrix(Z, Y, args.p)
    cfg = ot.SolverConfig(tol=args.tol, max_iter=args.max_iter)
    if args.lam is not None:
        coupling = ot.sinkhorn(C, Z, Y, args.lam, cfg)
        result = {"value": coupling.expected_cost(C), "lambdaStar": args.lam, "fallback": False}
    elif args.R is None:
        value, coupling = ot.exact_ot(C, Z, Y)
        result = {"value": value, "lambdaStar": 0.0, "fallback": False}
    else:
        sol = ot.solve_info_constrained(C, Z, Y, args.R, cfg)
        coupling = sol.coupling
        result = {"value": sol.value, "lambdaStar": sol.lambda_star, "fallback": sol.fallback}
    result["mutualInformation"] = ot.mutual_information(coupling)
    if args.format == "json":
        result["coupling"] = coupling.joint
        _emit(args, io.dumps_json(result))
    elif args.format == "svg":
        raise UsageError("svg output is only available for curve-producing commands")
    else:
        if args.output:
            _emit(args, io.coupling_csv(coupling))
        for k in ("value", "lambdaStar", "mutualInformation", "fallback"):
            print(f"{k}: {io.fmt(result[k], io.CONSOLE_FMT)}")
    return 0


def cmd_bounds(args) -> int:
    spec = bounds.GaussianSpec(args.mean, args.sigma, args.n)
    m = spec.summary()
    R = args.R
    out = {
        "talagrand": bounds.talagrand_rhs(spec),
        "newBound": bounds.new_rhs(m),
        "infoBound": bounds.info_rhs(m, R),
        "dominance": bounds.dominance_compare(m).slack,
        "R": R,
        "sigma": args.sigma,
        "n": args.n,
    }
    status = 0
    if args.samples:
        seed = _need_seed(args)
        target = io.read_quantile_table(args.input[0]) if args.input else spec
        if args.input:
            m = target.summary(args.n)
            out["infoBound"] = bounds.info_rhs(m, R)
        samples = bounds.construct_coupling(target, R, args.samples, seed, args.n)
        reports = {}
        for tau in args.tau:
            rep = bounds.verify_constructed_coupling(samples, m, tau)
            reports[io.fmt(tau, io.CONSOLE_FMT)] = rep.to_dict()
            status |= 0 if rep.passed else 1
        out["couplingCheck"] = reports
    if args.format == "csv":
        header = ["talagrand", "newBound", "infoBound", "dominance", "R", "sigma", "n"]
        _emit(args, io.table_csv(header, [[out[h] for h in header]]))
        if "couplingCheck" in out:
            for tau, rep in out["couplingCheck"].items():
                print(f"tau={tau}: {'pass' if rep['passed'] else 'FAIL'}", file=sys.stderr)
    elif args.format == "json":
        _emit(args, io.dumps_json(out))
    else:
        raise UsageError("svg output is only available for curve-producing commands")
    return status


def _sphere_set(kind: str, theta: float, n: int) -> sphere.SphericalSet:
    if kind == "cap":
        return sphere.SphericalSet.cap(theta, n)
    if kind == "capUnion":
        # two antipodal caps carrying the measure of a single cap of angle theta
        half = sphere.effective_angle(sphere.cap_measure(theta, n) / 2, n)
        pole = np.zeros(n)
        pole[0] = 1.0
        return sphere.SphericalSet.cap_union([half, half], [pole, -pole])
    if kind == "band":
        return sphere.SphericalSet.band(theta, n)
    raise UsageError(f"unknown set kind {kind!r}")


def cmd_sphere(args) -> int:
    if args.input:
        try:
            cfg = json.loads(Path(args.input[0]).read_text(encoding="utf-8"))
            params = cfg.get("params", {})
        except (ValueError, AttributeError) as exc:
            raise InputError(f"{args.input[0]}: malformed sphere configuration ({exc})") from exc
        args.kind = cfg.get("kind", args.kind)
        args.theta = params.get("theta", args.theta)
        args.omega = params.get("omega", args.omega)
        args.epsilon = params.get("epsilon", args.epsilon)
        args.experiment = params.get("experiment", args.experiment)
        if "n" in cfg:
            args.grid = str(cfg["n"]) if not isinstance(cfg["n"], list) else ",".join(map(str, cfg["n"]))
        args.samples = cfg.get("samples", args.samples)
        args.seed = cfg.get("seed", args.seed)
    ns = [int(v) for v in parse_grid(args.grid)] if args.grid else [args.n]
    header = ["n", "theta", "omega", "epsilon", "estimate", "stderr", "exact"]
    rows = []
    for n in ns:
        if args.experiment == "exponent":
            err = sphere.cap_exponent_check(args.theta, [n])[0][1]
            rows.append([n, args.theta, math.nan, math.nan, err, 0.0, err])
        elif args.experiment == "intersection":
            rate = sphere.log_cap_intersection(args.theta, args.omega, n) / n
            rows.append([n, args.theta, args.omega, math.nan, rate, 0.0, rate])
        elif args.experiment == "blowup":
            A = _sphere_set(args.kind, args.theta, n)
            exact = A.blowup_measure(args.omega)
            if args.samples:
                est = sphere.mc_blowup(A, args.omega, n, args.samples, _need_seed(args))
                rows.append([n, args.theta, args.omega, math.nan, est.estimate, est.stderr, exact])
            else:
                rows.append([n, args.theta, args.omega, math.nan, exact, 0.0, exact])
        else:  # concentration
            A = _sphere_set(args.kind, args.theta, n)
            est = sphere.mc_intersection_concentration(
                A, args.omega, args.epsilon, n, args.samples or 1000, _need_seed(args)
            )
            exact = (
                sphere.concentration_fraction_exact(args.theta, args.omega, args.epsilon, n)
                if args.kind == "cap"
                else None
            )
            rows.append([n, args.theta, args.omega, args.epsilon, est.fraction, est.stderr, exact])
    svg = io.svg_lines([r[0] for r in rows], {"estimate": [r[4] for r in rows]}, "n", args.experiment)
    _emit_table(args, header, rows, svg)
    return 0


def cmd_relay(args) -> int:
    Ps = parse_grid(args.P)
    Ns = parse_grid(args.N)
    C0s = parse_grid(args.grid) if args.grid else np.array([0.0])
    header = ["P", "N", "C0", "sdpi", "upper", "cutset", "cInfty", "gap", "argCprime", "argR"]
    rows = []
    status = 0
    for P in Ps:
        for N in Ns:
            for C0 in C0s:
                rep = relay.bound_report(relay.RelayParams(float(P), float(N), float(C0)))
                d = rep.to_dict()
                rows.append([d[h] for h in header])
                if math.isfinite(C0) and not rep.certified:
                    status = 1
    series = {"upper": [r[4] for r in rows], "cutset": [r[5] for r in rows], "cInfty": [r[6] for r in rows]}
    svg = io.svg_lines([r[2] for r in rows], series, "C0", "rate (nats)")
    _emit_table(args, header, rows, svg)
    return status


def cmd_tradeoff(args) -> int:
    R_grid = parse_grid(args.grid) if args.grid else np.linspace(0.0, 3.0, 13)
    if len(R_grid) < 2 or np.any(np.diff(R_grid) <= 0) or R_grid[0] < 0:
        raise UsageError("the R grid must be increasing, nonnegative and have at least two points")
    ref = bounds.discretize_gaussian(args.points)
    if args.input:
        Z, meta = io.read_distribution(args.input[0])
        if Z.dim != 1:
            raise UsageError("tradeoff needs a scalar distribution")
        if "entropy" not in meta:
            raise UsageError("distribution file needs meta.entropy (differential entropy in nats)")
        m = bounds.MomentSummary(Z.second_moment(), float(meta["entropy"]), 1)
    else:
        Z = bounds.discretize_gaussian(args.points, args.sigma, args.mean)
        m = bounds.GaussianSpec(args.mean, args.sigma, 1).summary()
    C = ot.cost_matrix(Z, ref, 2.0)
    cfg = ot.SolverConfig(tol=args.tol)
    rows = []
    for R in R_grid:
        try:
            sol = ot.solve_info_constrained(C, Z, ref, float(R), cfg)
        except ConvergenceError as exc:
            raise ConvergenceError(f"solver failed at R={R:.12g}: {exc}", exc.residual) from exc
        rows.append([float(R), bounds.info_rhs(m, float(R)), sol.value])
    header = ["R", "infoBound", "solverValue"]
    svg = io.svg_lines(R_grid, {"bound": [r[1] for r in rows], "solver": [r[2] for r in rows]}, "R (nats)", "W2^2")
    _emit_table(args, header, rows, svg)
    values = [r[2] for r in rows]
    monotone = all(b <= a + 10 * args.tol for a, b in zip(values, values[1:]))
    if not monotone:
        print("solver curve is not nonincreasing in R", file=sys.stderr)
    return 0 if monotone else 1


def cmd_suite(args) -> int:
    try:
        report = suites.run_suite(args.name, seed=args.seed or 0)
    except KeyError:
        raise UsageError(f"unknown suite {args.name!r}; choose from {', '.join(suites.SUITES)}") from None
    _emit(args, io.dumps_json(report))
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}", file=sys.stderr)
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", action="append", help="input file (repeatable)")
    common.add_argument("--output", help=f"output file; relative paths resolve under ${OUTPUT_ENV} when set")
    common.add_argument("--format", choices=("csv", "json", "svg"), default="csv")
    common.add_argument("--seed", type=int, help="random seed (required when sampling)")
    common.add_argument("--grid", help="start:stop:steps or comma list")
    common.add_argument("--tol", type=float, default=1e-9)

    p = argparse.ArgumentParser(prog="icot", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ot", parents=[common], help="exact, entropic or information-constrained OT")
    s.add_argument("--R", type=float, help="information budget in nats")
    s.add_argument("--lam", type=float, help="fixed regularisation weight (entropic OT)")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--max-iter", type=int, default=100_000)
    s.set_defaults(func=cmd_ot)

    s = sub.add_parser("bounds", parents=[common], help="Gaussian bounds and the sampled coupling check")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--mean", type=float, default=0.0)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--R", type=float, default=0.5)
    s.add_argument("--tau", type=float, nargs="+", default=[3.0, 5.0, 10.0])
    s.add_argument("--samples", type=int, default=0)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sphere", parents=[common], help="cap measures, intersections and blowups")
    s.add_argument("--experiment", choices=("exponent", "intersection", "blowup", "concentration"), default="blowup")
    s.add_argument("--kind", choices=("cap", "capUnion", "band"), default="cap")
    s.add_argument("--theta", type=float, default=math.pi / 3)
    s.add_argument("--omega", type=float, default=math.pi / 3)
    s.add_argument("--epsilon", type=float, default=0.05)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--samples", type=int, default=0)
    s.set_defaults(func=cmd_sphere)

    s = sub.add_parser("relay", parents=[common], help="relay bound sweep over C0 (--grid)")
    s.add_argument("--P", default="1", help="value, comma list or start:stop:steps")
    s.add_argument("--N", default="1", help="value, comma list or start:stop:steps")
    s.set_defaults(func=cmd_relay)

    s = sub.add_parser("tradeoff", parents=[common], help="cost-information tradeoff curve over an R grid")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--mean", type=float, default=0.0)
    s.add_argument("--points", type=int, default=400)
    s.set_defaults(func=cmd_tradeoff, tol=1e-7)

    s = sub.add_parser("suite", parents=[common], help="run a verification bundle")
    s.add_argument("name", help=", ".join(suites.SUITES))
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InputError) as exc:
        print(f"icot: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"icot: error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2
    except (ConvergenceError, NumericRangeError, CertificationError) as exc:
        print(f"icot: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
