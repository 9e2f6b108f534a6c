"""Command-line front end.

Generates instances, solves the LP hierarchy, runs Monte Carlo simulations,
and reproduces the verification numbers.  Human-readable PASS/FAIL lines go
to stdout; full reports are written as JSON with --out ("-" for stdout) and
(x, ratio) curves as CSV with --curve-csv.

Exit codes: 0 all requested pass-targets hold, 1 a pass-target failed or a
verifier invariant broke, 2 bad arguments or missing files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional

from .lp import load_solution, save_solution, solve_jaillet_lu_lp, solve_lp
from .model import (
    gen_hardness_edge_weighted,
    gen_jaillet_lu,
    gen_random,
    load_instance,
    save_instance,
)
from .simulate import monte_carlo
from .verify import (
    GridConfig,
    VerifierReport,
    first_level_curve,
    hardness_bound,
    jaillet_lu_closed_form,
    jaillet_lu_report,
    property_suite,
    second_level_ratio,
    top_half_ode_check,
    top_half_report,
)

# stable per-component seed offset so `all` draws an independent stream
_JL_SIM_SEED_OFFSET = 7211


def _timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _load_instance_checked(path: str):
    try:
        return load_instance(path)
    except FileNotFoundError:
        print(f"instance not found: {path}", file=sys.stderr)
        raise SystemExit(2)


def _write_json(payload: dict, out: Optional[str]) -> None:
    if out is None:
        return
    text = json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n"
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as f:
            f.write(text)


def _write_curve(curve, path: Optional[str]) -> None:
    if path is None:
        return
    if not curve:
        print("no (x, ratio) curve for this verifier", file=sys.stderr)
        raise SystemExit(2)
    with open(path, "w") as f:
        f.write("x,ratio\n")
        for x, r in curve:
            f.write(f"{x:.10g},{r:.10g}\n")


def _print_reports(reports: list[VerifierReport]) -> int:
    """One PASS/FAIL line per report plus its headline values; 0 iff all pass."""
    ok = True
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.target}")
        for k, v in r.values.items():
            print(f"  {k} = {v:.12g}")
        if not r.passed:
            ok = False
            if r.notes:
                print(f"  note: {r.notes}")
    return 0 if ok else 1


def _report_payload(reports: list[VerifierReport]) -> dict:
    return {
        "generated_at": _timestamp(),
        "reports": [r.to_dict() for r in reports],
    }


# ------------------------------------------------------------------ commands


def _cmd_gen(a) -> int:
    if a.kind == "random":
        inst = gen_random(
            a.n_types,
            a.n_offline,
            a.edge_prob,
            (a.rate_min, a.rate_max),
            (a.weight_min, a.weight_max),
            a.weight_class,
            a.free_disposal,
            a.seed,
        )
    elif a.kind == "hardness-ew":
        inst = gen_hardness_edge_weighted(a.n, a.x, a.eps, a.c_star)
    else:
        inst = gen_jaillet_lu()
    save_instance(inst, a.out)
    print(
        f"wrote {a.out}: {inst.n_types} types, {inst.offline_count} offline, "
        f"total rate {inst.total_rate:.6g}"
    )
    return 0


def _cmd_lp(a) -> int:
    inst = _load_instance_checked(a.instance)
    if a.jl:
        sol = solve_jaillet_lu_lp(inst)
    else:
        sol = solve_lp(inst, level=a.level, tol=a.tol)
    if a.out:
        save_solution(sol, a.out)
    print(f"objective {sol.objective:.10g}  status {sol.status}  cuts {sol.cuts_added}")
    return 0 if sol.status == "Optimal" else 1


def _cmd_simulate(a) -> int:
    inst = _load_instance_checked(a.instance)
    x = None
    if a.algo != "greedy":
        if a.solution:
            try:
                sol = load_solution(inst, a.solution)
            except FileNotFoundError:
                print(f"solution not found: {a.solution}", file=sys.stderr)
                raise SystemExit(2)
        else:
            sol = solve_lp(inst, level=a.level)
        x = sol.matching
    rep = monte_carlo(
        inst,
        x,
        a.algo,
        a.trials,
        a.seed,
        model=a.model,
        Lambda=a.Lambda,
        compute_opt=not a.no_opt,
    )
    if a.out:
        payload = {"generated_at": _timestamp(), **rep.to_dict()}
        _write_json(payload, a.out)
    opt = "n/a" if rep.opt_mean is None else f"{rep.opt_mean:.6f}"
    ratio = "n/a" if rep.ratio is None else f"{rep.ratio:.6f}"
    print(
        f"alg {rep.alg_mean:.6f} +- {rep.alg_stderr:.3g}  opt {opt}  "
        f"ratio {ratio}  trials {rep.trials}"
    )
    return 0


def _second_level_reports(a) -> tuple[list[VerifierReport], list]:
    dt = a.dt if a.dt is not None else 1e-3
    grid = GridConfig(
        dt=dt,
        dx=a.dx if a.dx is not None else dt,
        dlambda=a.dlambda,
        lambda_cap=a.cap,
    )
    # the 0.716 guarantee needs the dt=1e-4 grid; coarser grids target 0.70
    thr = a.threshold if a.threshold is not None else (0.716 if dt <= 1e-4 else 0.70)
    xs = a.x if a.x else [1.0]
    reports = [second_level_ratio(x, grid, pass_threshold=thr) for x in xs]
    curve = [(x, r.values["ratio"]) for x, r in zip(xs, reports)]
    return reports, curve


def _cmd_verify(a) -> int:
    curve: list = []
    if a.which == "top-half":
        reports = [top_half_report(), top_half_ode_check(a.dt if a.dt else 1e-4)]
        print(f"gamma = {reports[0].values['gamma']:.12f}")
    elif a.which == "jl":
        reports = [jaillet_lu_report()]
    elif a.which == "first-level":
        thr = a.threshold if a.threshold is not None else 0.707
        rep = first_level_curve(
            dt=a.dt if a.dt else 1e-5, xs=a.x or None, pass_threshold=thr
        )
        reports, curve = [rep], rep.curve
    elif a.which == "second-level":
        reports, curve = _second_level_reports(a)
    elif a.which == "hardness":
        if a.x and len(a.x) > 1:
            print("hardness takes a single --x", file=sys.stderr)
            return 2
        thr = a.threshold if a.threshold is not None else 0.703
        reports = [
            hardness_bound(
                a.n,
                a.x[0] if a.x else 0.94,
                m_frac=a.m_frac,
                k_strategy=a.strategy,
                pass_threshold=thr,
            )
        ]
    else:  # properties
        reports = [property_suite(seed=a.seed, trials=a.trials)]
    code = _print_reports(reports)
    _write_json(_report_payload(reports), a.out)
    _write_curve(curve, a.curve_csv)
    return code


def _jl_simulation_report(trials: int, seed: int) -> VerifierReport:
    jl = jaillet_lu_closed_form()
    rep = monte_carlo(
        gen_jaillet_lu(),
        None,
        "greedy",
        trials,
        seed + _JL_SIM_SEED_OFFSET,
        model="poisson",
        compute_opt=False,
    )
    dev = abs(rep.alg_mean - jl.alg)
    sigmas = dev / rep.alg_stderr if rep.alg_stderr > 0 else float("inf")
    return VerifierReport(
        name="jaillet-lu-simulation",
        values={
            "alg_mean": rep.alg_mean,
            "alg_stderr": rep.alg_stderr,
            "closed_form": jl.alg,
            "deviation_sigmas": sigmas,
            "ratio_vs_two": rep.alg_mean / 2.0,
        },
        params={"trials": trials, "seed": seed + _JL_SIM_SEED_OFFSET, "algo": "greedy"},
        passed=dev <= 3.0 * rep.alg_stderr,
        target="simulated greedy mean within 3 sigma of the closed form",
    )


def _cmd_all(a) -> int:
    first = first_level_curve()
    reports = [
        top_half_report(),
        top_half_ode_check(),
        jaillet_lu_report(),
        first,
        second_level_ratio(1.0, GridConfig(dt=1e-3, dx=1e-3), pass_threshold=0.70),
        hardness_bound(10**6, 0.94),
        property_suite(seed=a.seed),
        _jl_simulation_report(a.trials, a.seed),
    ]
    print(f"gamma = {reports[0].values['gamma']:.12f}")
    code = _print_reports(reports)
    _write_json(_report_payload(reports), a.out)
    _write_curve(first.curve, a.curve_csv)
    return code


# ------------------------------------------------------------------- parser


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stochmatch",
        description="Online stochastic matching: instances, LPs, simulation, verification.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write an instance JSON file")
    g.add_argument("--kind", choices=["random", "hardness-ew", "jaillet-lu"], required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-types", type=int, default=6)
    g.add_argument("--n-offline", type=int, default=4)
    g.add_argument("--edge-prob", type=float, default=0.6)
    g.add_argument("--rate-min", type=float, default=0.3)
    g.add_argument("--rate-max", type=float, default=1.5)
    g.add_argument("--weight-min", type=float, default=0.5)
    g.add_argument("--weight-max", type=float, default=3.0)
    g.add_argument("--weight-class", choices=["unweighted", "vertex", "edge"], default="edge")
    g.add_argument("--free-disposal", action="store_true")
    g.add_argument("--n", type=int, default=20, help="offline count for hardness-ew")
    g.add_argument("--x", type=float, default=0.94, help="per-vertex mass for hardness-ew")
    g.add_argument("--eps", type=float, default=1e-3)
    g.add_argument("--c-star", type=float, default=0.81)
    g.set_defaults(func=_cmd_gen)

    l = sub.add_parser("lp", help="solve the LP at a hierarchy level")
    l.add_argument("--instance", required=True)
    l.add_argument("--level", type=int, default=2)
    l.add_argument("--jl", action="store_true", help="surplus-cap LP instead of the hierarchy")
    l.add_argument("--tol", type=float, default=1e-7)
    l.add_argument("--out")
    l.set_defaults(func=_cmd_lp)

    s = sub.add_parser("simulate", help="Monte Carlo run of one algorithm")
    s.add_argument("--instance", required=True)
    s.add_argument("--algo", choices=["suggested", "top-half", "ocs", "greedy"], required=True)
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--model", choices=["poisson", "fixed"], default="poisson")
    s.add_argument("--Lambda", type=int, default=0, help="arrival count for --model fixed")
    s.add_argument("--level", type=int, default=2, help="LP level used to build x")
    s.add_argument("--solution", help="reuse a saved LP solution instead of solving")
    s.add_argument("--no-opt", action="store_true")
    s.add_argument("--out", help="report JSON path, '-' for stdout")
    s.set_defaults(func=_cmd_simulate)

    v = sub.add_parser("verify", help="run one verifier and report pass/fail")
    v.add_argument(
        "--which",
        choices=["top-half", "first-level", "second-level", "hardness", "jl", "properties"],
        required=True,
    )
    v.add_argument("--dt", type=float)
    v.add_argument("--dx", type=float)
    v.add_argument("--dlambda", type=float)
    v.add_argument("--cap", type=float, default=40.0)
    v.add_argument("--x", type=float, nargs="+")
    v.add_argument("--n", type=int, default=10**6)
    v.add_argument("--m-frac", type=float, default=0.405)
    v.add_argument("--strategy", choices=["prefix", "direct"], default="prefix")
    v.add_argument("--threshold", type=float)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--out", help="report JSON path, '-' for stdout")
    v.add_argument("--curve-csv", help="write the (x, ratio) curve as CSV")
    v.set_defaults(func=_cmd_verify)

    r = sub.add_parser("all", help="every verifier at default grids plus a JL simulation")
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--trials", type=int, default=200_000)
    r.add_argument("--out", help="report JSON path, '-' for stdout")
    r.add_argument("--curve-csv", help="write the first-level curve as CSV")
    r.set_defaults(func=_cmd_all)

    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
