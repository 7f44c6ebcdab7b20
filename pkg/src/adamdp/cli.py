"""Command-line front end: ``adamdp <command> [options]``.

Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 enumeration guard exceeded.
Set ``ADAMDP_THREADS`` to let sweeps and simulations use several threads.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from contextlib import contextmanager

import numpy as np

from .adherence import AdherenceSpec, as_spec, export_lp, solve_adamdp
from .adversarial import AdherenceDistribution, check_saddle, simulate_random_adherence
from .analysis import theta_sweep
from .constrained import CardinalityBudget, evaluate_constrained, export_mip
from .core import StationaryPolicy, solve_nominal, validate_instance
from .errors import AdaMDPError, GuardExceededError
from .instances import (
    InstanceBundle,
    healthcare_template,
    load_bundle,
    machine_replacement_template,
    toy_counterexample,
)
from .robust import BaselineAmbiguity, ThetaInterval, robust_baseline_solve, robust_theta_solve

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_GUARD = 0, 1, 2, 3


class UsageError(Exception):
    """Bad combination of command-line options."""


def fmt(x) -> str:
    return format(float(x), ".12g")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("ADAMDP_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Argument resolution


def load_source(args) -> InstanceBundle:
    if args.instance:
        return load_bundle(args.instance)
    if args.builtin == "toy":
        return toy_counterexample(args.lam, args.epsilon)
    if args.builtin == "machine":
        return machine_replacement_template()
    if args.builtin == "healthcare":
        return healthcare_template()
    raise UsageError("give --instance PATH or --builtin NAME")


def pick_policy(bundle: InstanceBundle, name: str | None, role: str) -> StationaryPolicy:
    if name is None:
        if not bundle.baselines:
            raise UsageError(f"instance defines no policies; cannot choose a {role}")
        return next(iter(bundle.baselines.values()))
    if name not in bundle.baselines:
        known = ", ".join(bundle.baselines) or "none"
        raise UsageError(f"unknown {role} {name!r} (available: {known})")
    return bundle.baselines[name]


def default_recommendation(bundle: InstanceBundle, name: str | None, tol: float) -> StationaryPolicy:
    """``--recommend`` policy; defaults to ``"alg"`` when defined, else the nominal optimum."""
    if name is not None:
        return pick_policy(bundle, name, "recommendation")
    if "alg" in bundle.baselines:
        return bundle.baselines["alg"]
    return solve_nominal(bundle.instance, tol).recommendation


def read_theta_file(path: str) -> AdherenceSpec:
    """A JSON number, list (per state) or nested list (per state-action)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [[float(x) for x in line.split()] for line in text.splitlines() if line.strip()]
        if all(len(row) == 1 for row in data):
            data = [row[0] for row in data]
    return as_spec(data)


def adherence_from(args, default: float | None = None) -> AdherenceSpec:
    if getattr(args, "theta_file", None):
        return read_theta_file(args.theta_file)
    if args.theta is None:
        if default is None:
            raise UsageError("give --theta or --theta-file")
        return AdherenceSpec.scalar(default)
    return AdherenceSpec.scalar(args.theta)


def scalar_theta(args) -> float:
    if getattr(args, "theta_file", None):
        raise UsageError("this command needs a scalar --theta")
    if args.theta is None:
        raise UsageError("give --theta")
    return float(args.theta)


@contextmanager
def output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def write_csv(path, header, rows) -> None:
    with output(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def policy_table(bundle: InstanceBundle, pi: StationaryPolicy) -> list[str]:
    inst = bundle.instance
    lines = []
    for s in range(inst.n_states):
        row = pi.probs[s]
        if np.count_nonzero(row) == 1:
            act = inst.action_label(int(np.argmax(row)))
        else:
            act = " ".join(f"{inst.action_label(a)}:{fmt(p)}" for a, p in enumerate(row) if p > 0)
        lines.append(f"  {inst.state_label(s):>6} -> {act}")
    return lines


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(args) -> int:
    bundle = load_source(args)
    problems = validate_instance(bundle.instance)
    if not problems:
        print(f"{bundle.name or 'instance'}: valid")
        return EXIT_OK
    for p in problems:
        print(f"{p.kind}: {p.message}")
    return EXIT_INVALID


def cmd_solve(args) -> int:
    bundle = load_source(args)
    base = pick_policy(bundle, args.baseline, "baseline")
    spec = adherence_from(args)
    res = solve_adamdp(bundle.instance, base, spec, args.tol)
    print("recommendation:")
    print("\n".join(policy_table(bundle, res.recommendation)))
    print(f"return: {fmt(res.expected_return)}")
    print(f"iterations: {res.iterations}")
    print(f"residual: {fmt(res.residual)}")
    if args.out:
        inst = bundle.instance
        write_csv(args.out, ["state", "value"],
                  [(inst.state_label(s), float(v)) for s, v in enumerate(res.value)])
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle = load_source(args)
    base = pick_policy(bundle, args.baseline, "baseline")
    sweep = theta_sweep(bundle.instance, base, args.grid, args.bisection_tol, workers=threads())
    det = sweep.deterioration
    rows = [(float(t), float(o), float(n), float(d), int(i))
            for t, o, n, d, i in zip(sweep.grid, sweep.returns_opt, sweep.returns_naive, det,
                                     sweep.segment_ids)]
    write_csv(args.out, ["theta", "return_opt", "return_naive", "deterioration", "segment_id"], rows)
    bp_path = args.breakpoints or (f"{args.out}.breakpoints.csv" if args.out and args.out != "-" else None)
    if bp_path:
        write_csv(bp_path, ["breakpoint"], [(float(b),) for b in sweep.breakpoints])
    else:
        for b in sweep.breakpoints:
            print(f"breakpoint: {fmt(b)}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    bundle = load_source(args)
    base = pick_policy(bundle, args.baseline, "baseline")
    rec = default_recommendation(bundle, args.recommend, args.tol)
    dist = AdherenceDistribution(args.dist, scalar_theta(args))
    rep = simulate_random_adherence(bundle.instance, rec, base, dist, args.horizon, args.trials,
                                    args.seed, workers=threads())
    write_csv(args.out, ["quantity", "value"],
              [(k, float(v)) if k in ("mean", "std_error", "truncation") else (k, int(v))
               for k, v in rep.rows()])
    return EXIT_OK


def cmd_check_saddle(args) -> int:
    bundle = load_source(args)
    base = pick_policy(bundle, args.baseline, "baseline")
    rep = check_saddle(bundle.instance, base, scalar_theta(args), args.tol, args.u_grid)
    write_csv(args.out, ["quantity", "value"], [(k, float(v)) for k, v in rep.rows()])
    return EXIT_OK


def cmd_constrained(args) -> int:
    bundle = load_source(args)
    base = pick_policy(bundle, args.baseline, "baseline")
    rec = default_recommendation(bundle, args.recommend, args.tol)
    budget = CardinalityBudget(args.k)
    u, worst = evaluate_constrained(bundle.instance, rec, base, budget)
    inst = bundle.instance
    print("adhering states: " + (" ".join(inst.state_label(s) for s in np.flatnonzero(u)) or "none"))
    print(f"worst_return: {fmt(worst)}")
    if args.out:
        write_csv(args.out, ["state", "u"], [(inst.state_label(s), int(x)) for s, x in enumerate(u)])
    return EXIT_OK


def cmd_robust(args) -> int:
    bundle = load_source(args)
    inst = bundle.instance
    if args.vertices or args.ambiguity:
        theta = scalar_theta(args)
        if args.vertices:
            names = [n for n in args.vertices.split(",") if n]
            amb = BaselineAmbiguity.from_policies([pick_policy(bundle, n, "baseline") for n in names])
        elif bundle.baseline_ambiguity is None:
            raise UsageError("instance has no baseline_ambiguity section")
        else:
            amb = bundle.baseline_ambiguity
        res = robust_baseline_solve(inst, amb, theta, args.tol)
        print("recommendation:")
        print("\n".join(policy_table(bundle, res.recommendation)))
        print(f"robust_return: {fmt(res.expected_return)}")
        return EXIT_OK
    if args.theta_lo is None or args.theta_hi is None:
        raise UsageError("give --theta-lo/--theta-hi, or --vertices/--ambiguity with --theta")
    base = pick_policy(bundle, args.baseline, "baseline")
    res, cert = robust_theta_solve(inst, base, ThetaInterval(args.theta_lo, args.theta_hi), args.tol,
                                   certify=not args.no_certificate)
    print("recommendation:")
    print("\n".join(policy_table(bundle, res.recommendation)))
    print(f"robust_return: {fmt(res.expected_return)}")
    if cert is not None:
        print(f"certificate_maxmin: {fmt(cert.maxmin)}")
        print(f"certificate_ok: {str(cert.ok).lower()}")
    return EXIT_OK


def cmd_export(args) -> int:
    bundle = load_source(args)
    base = pick_policy(bundle, args.baseline, "baseline")
    buf = io.StringIO()
    if args.format == "lp":
        export_lp(bundle.instance, base, adherence_from(args), buf)
    else:
        if args.k is None:
            raise UsageError("--format mip needs --k")
        rec = default_recommendation(bundle, args.recommend, args.tol)
        export_mip(bundle.instance, rec, base, CardinalityBudget(args.k), buf)
    with output(args.out) as fh:
        fh.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adamdp", description="Adherence-aware MDP solver.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--instance", help="instance bundle (JSON)")
    src.add_argument("--builtin", choices=("toy", "machine", "healthcare"), default="toy",
                     help="builtin instance (default: toy)")
    common.add_argument("--lambda", dest="lam", type=float, default=0.5,
                        help="discount of the builtin toy instance (default 0.5)")
    common.add_argument("--epsilon", type=int, choices=(-1, 1), default=-1,
                        help="reward offset of the toy instance's fifth state")
    common.add_argument("--baseline", help="baseline policy name (default: first in the bundle)")
    common.add_argument("--tol", type=float, default=1e-8)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (default: stdout)")

    theta = argparse.ArgumentParser(add_help=False)
    tgroup = theta.add_mutually_exclusive_group()
    tgroup.add_argument("--theta", type=float)
    tgroup.add_argument("--theta-file", help="per-state or per-state-action adherence levels")

    def add(name, func, helptext, *parents):
        p = sub.add_parser(name, parents=[common, *parents], help=helptext)
        p.set_defaults(func=func)
        return p

    add("validate", cmd_validate, "report instance invariant violations")
    add("solve", cmd_solve, "optimal recommendation for an adherence level", theta)
    p = add("sweep", cmd_sweep, "returns and policy segments over theta in [0, 1]")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--bisection-tol", type=float, default=1e-6)
    p.add_argument("--breakpoints", help="breakpoint CSV (default: <out>.breakpoints.csv)")
    p = add("simulate", cmd_simulate, "Monte Carlo return under random adherence", theta)
    p.add_argument("--dist", choices=AdherenceDistribution.KINDS, default="bernoulli")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--recommend", help="recommended policy name (default: 'alg' or the nominal optimum)")
    p = add("check-saddle", cmd_check_saddle, "equilibrium checks against adversarial adherence", theta)
    p.add_argument("--u-grid", type=int, default=1001)
    p = add("constrained", cmd_constrained, "worst case with at most k adhering states")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--recommend")
    p = add("robust", cmd_robust, "robust recommendation for uncertain theta or baseline", theta)
    p.add_argument("--theta-lo", type=float)
    p.add_argument("--theta-hi", type=float)
    p.add_argument("--no-certificate", action="store_true")
    p.add_argument("--vertices", help="comma-separated policy names spanning the baseline set")
    p.add_argument("--ambiguity", action="store_true", help="use the bundle's baseline_ambiguity")
    p = add("export", cmd_export, "write the LP or MIP model", theta)
    p.add_argument("--format", choices=("lp", "mip"), default="lp")
    p.add_argument("--k", type=int)
    p.add_argument("--recommend")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GuardExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AdaMDPError, UsageError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
