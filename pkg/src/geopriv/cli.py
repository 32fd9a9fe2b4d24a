"""Command-line interface: ``geopriv <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input and 2 when a solver or a
privacy audit fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .anonymity import (asymptotic_kappa, bayes_vulnerability, dataset_k_anonymity,
                        delete_for_k, empirical_kappa, kappa_sup, min_deletion_fraction)
from .experiments import (BENCHMARK_COMPONENTS, ExperimentConfig, MechanismSpec,
                          convergence_study, emit_heatmap, run_sweep)
from .grid import Grid, IngestError, build_grid, empirical_prior, ingest_checkins, synth_population
from .linprog import assemble_lp, export_lp, import_solution
from .mechanism import (GeoIndViolation, build_planar_laplacian, identity_mechanism,
                        obfuscate_dataset, verify_geo_ind)
from .optimal import SolverError, build_optql, mechanism_from_solution
from .spanner import build_spanner

log = logging.getLogger("geopriv")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _default_seed():
    return int(os.environ.get("GEOPRIV_SEED", 0))


def _grid_args(p):
    p.add_argument("--grid", help="grid JSON written by 'geopriv grid'")
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)


def _grid(args) -> Grid:
    if getattr(args, "grid", None):
        return gio.read_grid(args.grid)
    return build_grid(rows=args.rows, cols=args.cols)


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, default=float)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_grid(args):
    grid = build_grid(tuple(args.origin), args.rows, args.cols, tuple(args.cell_size))
    if args.out:
        gio.write_grid(grid, args.out)
    print(json.dumps(grid.to_dict()))


def cmd_ingest(args):
    grid = _grid(args)
    with open(args.input, newline="", encoding="utf-8") as fh:
        users, prior, skipped = ingest_checkins(fh, grid, args.policy)
    gio.write_users(users, args.users_out)
    gio.write_prior(prior, args.prior_out)
    print(f"{len(users)} users, {skipped} out-of-bounds rows skipped")


def cmd_synth(args):
    grid = _grid(args)
    comps = json.loads(args.components) if args.components else BENCHMARK_COMPONENTS
    users, prior = synth_population(grid, [tuple(c) for c in comps], args.n, args.seed)
    gio.write_users(users, args.users_out)
    gio.write_prior(prior, args.prior_out)
    print(f"{len(users)} users written to {args.users_out}")


def _prior_for(args, grid):
    if getattr(args, "prior", None):
        return gio.read_prior(args.prior, grid.n_regions)
    if getattr(args, "users", None):
        return empirical_prior(gio.read_users(args.users).regions, grid.n_regions)
    log.warning("no --prior or --users given; using the uniform prior")
    return np.full(grid.n_regions, 1.0 / grid.n_regions)


def _lp_constraints(args, grid):
    return "full" if args.mode == "full" else build_spanner(grid, args.delta)


def cmd_mechanism(args):
    grid = _grid(args)
    if args.kind == "identity":
        mech = identity_mechanism(grid)
    elif args.kind == "pl":
        mech = build_planar_laplacian(grid, args.epsilon)
    elif args.solution:
        # externally solved program, e.g. from 'geopriv export-lp'
        prior = _prior_for(args, grid)
        lp = assemble_lp(prior, grid, args.epsilon, _lp_constraints(args, grid), args.relaxed)
        with open(args.solution, newline="") as fh:
            x = import_solution(lp, fh)
        audit = args.epsilon * args.delta if args.mode == "spanner" and args.relaxed else args.epsilon
        mech = mechanism_from_solution(x, grid, args.epsilon, "OptQL-external", audit)
    else:
        prior = _prior_for(args, grid)
        res = build_optql(prior, grid, args.epsilon, mode=args.mode, delta=args.delta,
                          relaxed=args.relaxed, solver=args.solver)
        mech = res.mechanism
        print(f"quality loss {res.quality_loss:.6g} ({res.solution.solver}, "
              f"{res.solution.iterations} iterations)")
    gio.write_mechanism(mech, grid, args.out)
    print(f"{mech.label} written to {args.out}")


def cmd_verify(args):
    mech, meta = gio.read_mechanism(args.mechanism)
    grid = gio.grid_from_meta(meta)
    eps = args.epsilon if args.epsilon is not None else mech.epsilon
    rep = verify_geo_ind(mech, grid, eps, args.include_bottom, args.tolerance)
    _dump({"satisfied": rep.satisfied, "max_violation_ratio": rep.max_violation_ratio,
           "witness": None if rep.witness is None else
           [rep.witness[0], rep.witness[1], "BOTTOM" if rep.witness[2] == -1 else rep.witness[2]],
           "epsilon": eps, "include_bottom": rep.include_bottom})
    return EXIT_OK if rep.satisfied else EXIT_FAILED


def cmd_obfuscate(args):
    users = gio.read_users(args.users)
    mech, _ = gio.read_mechanism(args.mechanism)
    ds = obfuscate_dataset(users, mech, args.seed)
    gio.write_dataset(ds, args.out)
    print(f"{len(ds)} reports written to {args.out} ({int(ds.bottom_mask.sum())} BOTTOM)")


def cmd_anonymize(args):
    ds = gio.read_dataset(args.dataset)
    kept, deleted, bottom = delete_for_k(ds, args.k, drop_bottom=not args.keep_bottom)
    gio.write_dataset(kept, args.out)
    _dump({"n": len(ds), "kept": len(kept), "deleted_count": deleted, "bottom_count": bottom,
           "deleted_fraction": deleted / len(ds)})


def cmd_audit(args):
    ds = gio.read_dataset(args.dataset)
    rep = dataset_k_anonymity(ds, args.include_bottom, kappas=args.kappa)
    out = json.loads(rep.to_json())
    out["empirical_kappa"] = {repr(a): empirical_kappa(ds, a, args.include_bottom) for a in args.alpha}
    if args.mechanism:
        mech, meta = gio.read_mechanism(args.mechanism)
        grid = gio.grid_from_meta(meta)
        prior = (gio.read_prior(args.prior, grid.n_regions) if args.prior
                 else empirical_prior(ds.true_regions, grid.n_regions))
        pv, post = bayes_vulnerability(prior, mech)
        out["population"] = {
            "asymptotic_kappa": asymptotic_kappa(prior, mech, args.include_bottom),
            "kappa_sup": {repr(a): kappa_sup(prior, mech, a, args.include_bottom) for a in args.alpha},
            "min_deletion_fraction": {repr(k): min_deletion_fraction(prior, mech, k, args.include_bottom)
                                      for k in args.kappa},
            "prior_vulnerability": pv, "posterior_vulnerability": post}
    _dump(out, args.out)


def _experiment_config(args) -> ExperimentConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    for key in ("epsilons", "ks", "alphas", "seed", "output_dir", "n_jobs", "sizes", "trials"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "mechanisms", None):
        data["mechanisms"] = args.mechanisms
    return ExperimentConfig.from_dict(data)


def cmd_sweep(args):
    cfg = _experiment_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(cfg)
    gio.write_table([r.as_dict() for r in rows], out / "sweep.csv")
    print(f"{len(rows)} rows written to {out / 'sweep.csv'}")


def cmd_converge(args):
    cfg = _experiment_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table, reference = convergence_study(cfg)
    gio.write_table(table, out / "converge.csv")
    gio.write_table(reference, out / "kappa_reference.csv")
    print(f"{len(table)} rows written to {out / 'converge.csv'}")


def cmd_heatmap(args):
    ds = gio.read_dataset(args.dataset)
    counts = emit_heatmap(ds, _grid(args), args.out)
    print(f"{int((counts > 0).sum())} occupied regions written to {args.out}")


def cmd_export_lp(args):
    grid = _grid(args)
    prior = _prior_for(args, grid)
    lp = assemble_lp(prior, grid, args.epsilon, _lp_constraints(args, grid), args.relaxed)
    Path(args.out).write_text(export_lp(lp))
    print(f"{lp.n_variables} variables, {lp.n_inequalities + lp.n_equalities} constraints "
          f"written to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults; flags override it")
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (default: $GEOPRIV_SEED or 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="geopriv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("grid", parents=[common], help="describe a grid")
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--cols", type=int, default=20)
    p.add_argument("--origin", type=float, nargs=2, default=(0.0, 0.0), metavar=("LAT", "LON"))
    p.add_argument("--cell-size", type=float, nargs=2, default=(1.0, 1.0), metavar=("DLAT", "DLON"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("ingest", parents=[common], help="check-in CSV to users and prior")
    _grid_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--policy", default="first-by-timestamp",
                   choices=["first-by-timestamp", "most-frequent-region"])
    p.add_argument("--users-out", default="users.csv")
    p.add_argument("--prior-out", default="prior.csv")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="synthetic population")
    _grid_args(p)
    p.add_argument("--components", help="JSON list of [center_region, spread, weight]")
    p.add_argument("-n", "--n", type=int, default=2000)
    p.add_argument("--users-out", default="users.csv")
    p.add_argument("--prior-out", default="prior.csv")
    p.set_defaults(func=cmd_synth)

    def lp_args(p):
        p.add_argument("--epsilon", type=float, required=True)
        p.add_argument("--prior")
        p.add_argument("--users", help="take the empirical prior of this users CSV")
        p.add_argument("--mode", choices=["full", "spanner"], default="full")
        p.add_argument("--delta", type=float, default=1.09)
        p.add_argument("--relaxed", action="store_true",
                       help="spend epsilon on the spanner metric (certifies epsilon*delta)")

    p = sub.add_parser("mechanism", parents=[common], help="build a mechanism file")
    p.add_argument("kind", choices=["pl", "optql", "identity"])
    _grid_args(p)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--prior")
    p.add_argument("--users", help="take the empirical prior of this users CSV")
    p.add_argument("--mode", choices=["full", "spanner"], default="full")
    p.add_argument("--delta", type=float, default=1.09)
    p.add_argument("--relaxed", action="store_true")
    p.add_argument("--solver", choices=["auto", "simplex", "highs"], default="auto")
    p.add_argument("--solution", help="CSV variable,value from an external LP solver")
    p.add_argument("--out", default="mechanism.csv")
    p.set_defaults(func=cmd_mechanism)

    p = sub.add_parser("verify", parents=[common], help="audit geo-indistinguishability")
    p.add_argument("--mechanism", required=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--include-bottom", action="store_true")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("obfuscate", parents=[common], help="apply a mechanism to users")
    p.add_argument("--users", required=True)
    p.add_argument("--mechanism", required=True)
    p.add_argument("--out", default="obfuscated.csv")
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("anonymize", parents=[common], help="delete reports below k")
    p.add_argument("--dataset", required=True)
    p.add_argument("-k", "--k", type=int, required=True)
    p.add_argument("--keep-bottom", action="store_true")
    p.add_argument("--out", default="anonymized.csv")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("audit", parents=[common], help="anonymity report of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mechanism")
    p.add_argument("--prior")
    p.add_argument("--alpha", type=float, nargs="*", default=[0.0, 0.05, 0.1])
    p.add_argument("--kappa", type=float, nargs="*", default=[])
    p.add_argument("--include-bottom", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)

    for name, func, helptext in (("sweep", cmd_sweep, "epsilon sweep to sweep.csv"),
                                 ("converge", cmd_converge, "kappa convergence study")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--epsilons", type=float, nargs="+")
        p.add_argument("--mechanisms", nargs="+", type=_mech_arg)
        p.add_argument("--ks", type=int, nargs="+")
        p.add_argument("--alphas", type=float, nargs="+")
        p.add_argument("--output-dir")
        p.add_argument("--n-jobs", type=int)
        p.add_argument("--sizes", type=int, nargs="+")
        p.add_argument("--trials", type=int)
        p.set_defaults(func=func, experiment=True)

    p = sub.add_parser("heatmap", parents=[common], help="per-region report counts")
    p.add_argument("--dataset", required=True)
    _grid_args(p)
    p.add_argument("--out", default="heatmap.csv")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("export-lp", parents=[common], help="write the LP in CPLEX-LP format")
    _grid_args(p)
    lp_args(p)
    p.add_argument("--out", default="optql.lp")
    p.set_defaults(func=cmd_export_lp)
    return parser


def _mech_arg(text):
    """``PL``, ``OptQL-full`` or ``OptQL-spanner:1.09``."""
    name, _, delta = text.partition(":")
    item = {"name": name}
    if delta:
        item["delta"] = float(delta)
    MechanismSpec.parse(item)
    return item


def _apply_config(parser, argv, args):
    """Re-parse with ``--config`` values as defaults so explicit flags still win."""
    data = json.loads(Path(args.config).read_text())
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in data.items()
                        if k.replace("-", "_") in known})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config and not getattr(args, "experiment", False):
            args = _apply_config(parser, argv, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None and not getattr(args, "experiment", False):
        args.seed = _default_seed()
    if getattr(args, "kind", None) == "pl" or getattr(args, "kind", None) == "optql":
        if args.epsilon is None:
            print("geopriv mechanism: --epsilon is required", file=sys.stderr)
            return EXIT_INVALID
    try:
        code = args.func(args)
    except (SolverError, GeoIndViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, IndexError, KeyError, IngestError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
