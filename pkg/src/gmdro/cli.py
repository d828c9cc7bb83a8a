"""Command-line interface.

Subcommands: gic, solve, recover, evaluate, experiment, plotdata.
Exit codes: 0 ok, 2 parse/parameter error, 3 infeasible, 4 tolerance breach.
Angles are degrees at this boundary; GMDRO_THREADS caps worker concurrency;
GMDRO_NUMBA=0 selects the pure-numpy kernels.
"""

import argparse
import csv
import io as _io
import json
import math
import os
import sys

import numpy as np

from .ambiguity import (AmbiguityError, AmbiguitySet, EFieldVector,
                        RNG_ALGORITHM, build_polytope_support, sample_support)
from .dro import DroError, solve_dro
from .formulation import FormulationError, Options, build_deterministic, build_sp
from .grid import build_dc_network, solve_gic
from .grid.model import GridError, SwitchingDecision
from .io.casefile import CaseError, parse_case
from .io.results import (ResultBundle, read_results, report_to_dict,
                         write_results)
from .optkernel import solve_mip
from .recovery import (PowerFlowError, RecoveryError, check_sample_sufficiency,
                       evaluate_approach, out_of_sample_cost,
                       recover_operations, run_experiment_grid)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_TOLERANCE = 4

TRIANGLE_ANGLES = (0.0, 90.0, 180.0)
PENTAGON_ANGLES = (0.0, 45.0, 90.0, 135.0, 180.0)


class CliError(RuntimeError):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _load(args):
    case = parse_case(args.case)
    for w in case.warnings:
        print(f"warning: {w}", file=sys.stderr)
    net = case.net
    dc = build_dc_network(net, vd_bound=case.params.vd_max)
    opts = Options(kappa_l=case.params.kappa_l, kappa_s=case.params.kappa_s,
                   enforce_ieff_limit=getattr(args, "ieff_limit", False))
    return case, net, dc, opts


def _support(args):
    angles = PENTAGON_ANGLES if args.support == "pentagon" else TRIANGLE_ANGLES
    return build_polytope_support(args.R, angles), angles


def _meta(case, args, extra=None):
    meta = {
        "case": case.name,
        "case_sha": case.sha,
        "rng": RNG_ALGORITHM,
        "seed": getattr(args, "seed", None),
        "eps": getattr(args, "eps", None),
    }
    for key in ("R", "m_frac", "delta_mu", "support", "algo", "approach",
                "train", "test", "samples", "validate"):
        if hasattr(args, key):
            meta[key] = getattr(args, key)
    if extra:
        meta.update(extra)
    return meta


def _emit(bundle, args):
    data = write_results(bundle, fmt=getattr(args, "format", "json"),
                         include_timings=getattr(args, "timings", False))
    if getattr(args, "out", None):
        with open(args.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.write(data.decode())


def cmd_gic(args):
    case, net, dc, opts = _load(args)
    z = SwitchingDecision.all_on(net)
    for e in args.off:
        if e not in net.branch_pos:
            raise CliError(f"unknown branch {e} in --off", EXIT_PARSE)
        z.za[e] = 0
    state = solve_gic(dc, z, (args.xi_e, args.xi_n))
    print(f"# GIC flow for case {case.name} at field "
          f"({args.xi_e}, {args.xi_n}) V/km")
    print("node voltages [V]:")
    for k, node in enumerate(dc.nodes):
        kind = f"bus {node.bus}" if node.bus is not None else f"neutral (a={node.a:g})"
        print(f"  {node.key:>8}  {state.vd[k]:14.6f}   {kind}")
    print("arc currents [A]:")
    for k, arc in enumerate(dc.arcs):
        lbl = arc.winding or "line"
        print(f"  arc {arc.id:>3} -> branch {arc.branch:>3} ({lbl:>4})  "
              f"{state.id_amps[k]:14.6f}")
    print("effective transformer GICs [A]:")
    for e, val in sorted(state.ieff.items()):
        print(f"  branch {e:>3}  {val:14.6f}")
    print("per-bus GIC reactive loss at nominal voltage [p.u.]:")
    for b in net.buses:
        print(f"  bus {b.id:>3}  {state.loss_coeff.get(b.id, 0.0):14.8f}")
    if max(abs(state.vd)) > dc.vd_bound:
        print(f"warning: a node voltage exceeds the bound {dc.vd_bound} V",
              file=sys.stderr)
    return EXIT_OK


def cmd_solve(args):
    case, net, dc, opts = _load(args)
    support, angles = _support(args)
    mag = args.m_frac * args.R
    mu = (mag * math.cos(math.radians(args.delta_mu)),
          mag * math.sin(math.radians(args.delta_mu)))
    bundle = ResultBundle(meta=_meta(case, args))

    if args.algo in ("ccg", "accel-ccg"):
        res = solve_dro(net, dc, support, mu, opts, algorithm=args.algo,
                        eps=args.eps)
        bundle.value = res.value
        bundle.switching = {"off_branches": res.switching.off_branches(),
                            "off_generators": res.switching.off_generators()}
        bundle.certificate = {"lam_e": res.certificate.lam_e,
                              "lam_n": res.certificate.lam_n,
                              "eta": res.certificate.eta}
        bundle.ccg_log = res.state.log
        bundle.meta["status"] = res.state.status
        bundle.meta["master_solves"] = res.state.master_solves
        model = res.model
        code = EXIT_TOLERANCE if res.state.status == "tolerance-breach" else EXIT_OK
    elif args.algo == "triangle":
        if args.support != "triangle":
            raise CliError("--algo triangle requires --support triangle",
                           EXIT_PARSE)
        from .ambiguity import worst_case_distribution
        from .formulation import build_triangle_monolithic, field_radius

        tri = [tuple(v) for v in support]
        wcd = worst_case_distribution(tri, mu)
        model, fs, _ = build_triangle_monolithic(net, dc, tri, wcd.p, opts,
                                                 field_bound=field_radius(tri))
        sol = solve_mip(model)
        if sol.status != "optimal":
            raise CliError(f"monolithic solve: {sol.status}", EXIT_INFEASIBLE)
        z = fs.switching(sol.x)
        bundle.value = sol.obj
        bundle.switching = {"off_branches": z.off_branches(),
                            "off_generators": z.off_generators()}
        bundle.meta["worst_case_p"] = list(wcd.p)
        code = EXIT_OK
    elif args.algo == "deterministic":
        model, fs, _ = build_deterministic(net, dc, mu, opts)
        sol = solve_mip(model)
        if sol.status != "optimal":
            raise CliError(f"deterministic solve: {sol.status}", EXIT_INFEASIBLE)
        z = fs.switching(sol.x)
        bundle.value = sol.obj
        bundle.switching = {"off_branches": z.off_branches(),
                            "off_generators": z.off_generators()}
        code = EXIT_OK
    elif args.algo == "sp":
        samples = sample_support(support, args.train, args.seed)
        model, fs, _ = build_sp(net, dc, samples, opts)
        sol = solve_mip(model)
        if sol.status != "optimal":
            raise CliError(f"sample-average solve: {sol.status}", EXIT_INFEASIBLE)
        z = fs.switching(sol.x)
        bundle.value = sol.obj
        bundle.switching = {"off_branches": z.off_branches(),
                            "off_generators": z.off_generators()}
        bundle.meta["train_used"] = len(samples)
        code = EXIT_OK
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown algorithm {args.algo}", EXIT_PARSE)

    if args.dump_lp:
        os.makedirs(args.dump_lp, exist_ok=True)
        with open(os.path.join(args.dump_lp, "model.lp"), "w") as fh:
            model.dump_lp(fh)
    _emit(bundle, args)
    return code


def _switching_from_file(path, net):
    with open(path, "rb") as fh:
        raw = fh.read()
    doc = json.loads(raw)
    if "switching" in doc:
        doc = doc["switching"]
    z = SwitchingDecision.all_on(net)
    for e in doc.get("off_branches", []):
        z.za[int(e)] = 0
    for k in doc.get("off_generators", []):
        z.zg[int(k)] = 0
    return z


def cmd_recover(args):
    case, net, dc, opts = _load(args)
    z = _switching_from_file(args.z, net)
    support, _ = _support(args)
    mag = args.m_frac * args.R
    mu = (mag * math.cos(math.radians(args.delta_mu)),
          mag * math.sin(math.radians(args.delta_mu)))
    samples = sample_support(support, args.samples, args.seed)
    op, lam, eta, rounds = recover_operations(net, dc, z, samples, mu, opts,
                                              eps=args.eps)
    bundle = ResultBundle(meta=_meta(case, args, {"rounds": rounds}))
    bundle.switching = {"off_branches": z.off_branches(),
                        "off_generators": z.off_generators()}
    bundle.certificate = {"lam_e": lam.lam_e, "lam_n": lam.lam_n, "eta": eta}
    bundle.meta["eta_hat"] = eta
    if args.validate > 0:
        validation = sample_support(support, args.validate, args.seed + 1)
        viol = check_sample_sufficiency(net, dc, z, op, lam, eta, validation,
                                        opts.kappa_s)
        bundle.sufficiency = [{"train_size": len(samples),
                               "validate_size": len(validation),
                               "violations": viol}]
    _emit(bundle, args)
    return EXIT_OK


def _polar_protocol_samples(rmax, n, seed):
    """Magnitude uniform on [0, rmax], direction uniform on [0, 180] deg."""
    rng = np.random.Generator(np.random.PCG64(seed))
    mags = rng.uniform(0.0, rmax, n)
    angs = rng.uniform(0.0, math.pi, n)
    return [EFieldVector(m * math.cos(a), m * math.sin(a))
            for m, a in zip(mags, angs)]


def cmd_evaluate(args):
    case, net, dc, opts = _load(args)
    protocol = args.m_frac is None
    if protocol:
        train = _polar_protocol_samples(args.R, args.train, args.seed)
        test = _polar_protocol_samples(args.R, args.test, args.seed + 1)
        mmean = sum(math.hypot(*p) for p in train) / len(train)
        dmean = sum(math.degrees(math.atan2(p[1], p[0])) for p in train) / len(train)
        amb = AmbiguitySet.polar(args.R, mmean / args.R, dmean)
        samples = train
    else:
        amb = AmbiguitySet.polar(args.R, args.m_frac, args.delta_mu)
        train = sample_support(amb.support, args.train, args.seed)
        test = (sample_support(amb.support, args.test, args.seed + 1)
                if args.test > 0 else None)
        samples = train
    rep, z, op, lam, eta = evaluate_approach(
        net, dc, args.approach, amb=amb, samples=samples, train_samples=train,
        test_samples=test, opts=opts, eps=args.eps)
    bundle = ResultBundle(meta=_meta(case, args, {
        "protocol": protocol,
        "mu_e": float(amb.mean.xe), "mu_n": float(amb.mean.xn)}))
    bundle.report = report_to_dict(rep)
    bundle.switching = {"off_branches": rep.off_branches,
                        "off_generators": rep.off_generators}
    bundle.value = rep.c4
    _emit(bundle, args)
    return EXIT_OK


def cmd_experiment(args):
    case, net, dc, opts = _load(args)
    with open(args.grid) as fh:
        try:
            grid = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CaseError(f"grid file: {exc}") from exc
    rows = run_experiment_grid(
        net, dc,
        radii=grid.get("R", [10.0]),
        m_fracs=grid.get("m_frac", [0.5]),
        deltas_deg=grid.get("delta_mu_deg", [45.0]),
        seed=int(grid.get("seed", 1)),
        opts=opts,
        approaches=grid.get("approaches", ["a1"]),
        n_train=int(grid.get("train", 50)),
        eps=float(grid.get("eps", 1e-4)),
    )
    bundle = ResultBundle(meta=_meta(case, args, {"grid": grid}),
                          grid_rows=rows)
    os.makedirs(args.out, exist_ok=True)
    for fmt in ("json", "csv"):
        data = write_results(bundle, fmt=fmt, include_timings=args.timings)
        with open(os.path.join(args.out, f"results.{fmt}"), "wb") as fh:
            fh.write(data)
    failures = [r for r in rows if r.get("status") != "ok"]
    print(f"{len(rows)} rows written to {args.out} "
          f"({len(failures)} failures)")
    return EXIT_OK if not failures else EXIT_TOLERANCE


def cmd_plotdata(args):
    with open(args.infile, "rb") as fh:
        bundle = read_results(fh.read())
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    if args.kind == "bounds":
        w.writerow(["iter", "lb", "ub", "gap"])
        for rec in bundle.ccg_log:
            w.writerow([rec.get("iter"), rec.get("lb"), rec.get("ub"),
                        rec.get("gap")])
    elif args.kind == "losses":
        w.writerow(["instance", "approach", "shed_total", "loss_total",
                    "dqloss_total"])
        rows = bundle.grid_rows or ([{**(bundle.report or {}),
                                      "instance": 0,
                                      "approach": (bundle.report or {}).get("approach")}]
                                    if bundle.report else [])
        for r in rows:
            w.writerow([r.get("instance", 0), r.get("approach"),
                        r.get("shed_total"), r.get("loss_total"),
                        r.get("dqloss_total")])
    else:  # costs
        w.writerow(["instance", "approach", "C1", "C2", "C3", "C4"])
        if bundle.grid_rows:
            for r in bundle.grid_rows:
                w.writerow([r.get("instance"), r.get("approach"), r.get("C1"),
                            r.get("C2"), r.get("C3"), r.get("C4")])
        elif bundle.report:
            r = bundle.report
            w.writerow([0, r.get("approach"), r.get("c1"), r.get("c2"),
                        r.get("c3"), r.get("c4")])
    sys.stdout.write(out.getvalue())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="gmdro",
        description="Distributionally robust switching and dispatch under "
                    "uncertain geomagnetic E-fields")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--case", required=True, help="case file (JSON or matpower-gmd)")

    sp = sub.add_parser("gic", help="solve the GIC flow for a fixed field")
    common(sp)
    sp.add_argument("--xi-e", type=float, required=True, dest="xi_e")
    sp.add_argument("--xi-n", type=float, required=True, dest="xi_n")
    sp.add_argument("--off", type=lambda s: [int(t) for t in s.split(",") if t],
                    default=[], help="comma-separated branch ids to switch off")
    sp.set_defaults(func=cmd_gic)

    sp = sub.add_parser("solve", help="solve the robust switching model")
    common(sp)
    sp.add_argument("--support", choices=("pentagon", "triangle"),
                    default="pentagon")
    sp.add_argument("--R", type=float, default=10.0)
    sp.add_argument("--m-frac", type=float, default=0.5, dest="m_frac")
    sp.add_argument("--delta-mu", type=float, default=45.0, dest="delta_mu",
                    help="mean field direction [deg]")
    sp.add_argument("--algo", choices=("ccg", "accel-ccg", "triangle",
                                       "deterministic", "sp"),
                    default="accel-ccg")
    sp.add_argument("--eps", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--train", type=int, default=50,
                    help="sample count for --algo sp")
    sp.add_argument("--ieff-limit", action="store_true", dest="ieff_limit",
                    help="enforce per-transformer effective-GIC limits")
    sp.add_argument("--dump-lp", default=None, dest="dump_lp",
                    help="directory for an LP-format model dump")
    sp.add_argument("--timings", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("recover", help="recover AC-feasible operations")
    common(sp)
    sp.add_argument("--z", required=True, help="switching decision file")
    sp.add_argument("--support", choices=("pentagon", "triangle"),
                    default="pentagon")
    sp.add_argument("--R", type=float, default=10.0)
    sp.add_argument("--m-frac", type=float, default=0.5, dest="m_frac")
    sp.add_argument("--delta-mu", type=float, default=45.0, dest="delta_mu")
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--validate", type=int, default=0)
    sp.add_argument("--eps", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--timings", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_recover)

    sp = sub.add_parser("evaluate", help="evaluate an approach in/out of sample")
    common(sp)
    sp.add_argument("--approach", choices=("a1", "a2", "a3", "sp"),
                    required=True)
    sp.add_argument("--R", type=float, default=10.0)
    sp.add_argument("--m-frac", type=float, default=None, dest="m_frac",
                    help="fixed-instance mode; omit for the averaged protocol")
    sp.add_argument("--delta-mu", type=float, default=45.0, dest="delta_mu")
    sp.add_argument("--train", type=int, default=100)
    sp.add_argument("--test", type=int, default=1000)
    sp.add_argument("--eps", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--timings", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("experiment", help="run a configuration grid")
    common(sp)
    sp.add_argument("--grid", required=True, help="grid configuration JSON")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--timings", action="store_true")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("plotdata", help="emit CSV series from a result file")
    sp.add_argument("--in", required=True, dest="infile")
    sp.add_argument("--kind", choices=("bounds", "losses", "costs"),
                    required=True)
    sp.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (CaseError, AmbiguityError, FormulationError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (RecoveryError, PowerFlowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
