"""Command line front end.

Subcommands
-----------
study     : run a convergence study from a JSON config, emit rates.csv,
            summary.json and plot.gp into --out.
snorm     : tabulate the multiplier-norm distance kappa(eps) for a layout
            family, emit kappa.csv.
corrector : tabulate the boundary-layer residual mu(eps) for the unit cell
            of a layout family, emit mu.csv; optionally calibrate the
            kappa <= C*sqrt(mu) certificate against the empirical kappa.
mesh      : build one mesh (perforated, box, interface or slab) and write
            it in the plain-text mesh format.
validate  : check a study or layout config without solving anything.

All subcommands accept --config FILE (JSON), --out DIR, --jobs K, --seed N.
The JSON schemas are documented in the README.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import corrector as corrector_mod
from . import snorm as snorm_mod
from . import fem, geometry, harness, meshing
from .errors import PerfhomError


def _load_config(path):
    if not path:
        raise SystemExit("a --config file is required for this subcommand")
    with open(path) as fh:
        return json.load(fh)


def _eta_rule(doc):
    rule = doc.get("eta_rule", 1.0)
    if isinstance(rule, list):
        rule = (rule[0], float(rule[1]))
    return rule


def _layout_fn(doc):
    kind = doc.get("layout_kind", "periodic")
    params = doc.get("layout_params", {})
    rule = _eta_rule(doc)
    return lambda eps: geometry.make_layout(kind, params, eps, rule)


def _eps_list(doc):
    eps = doc.get("eps_list")
    if not eps:
        raise SystemExit("config must supply a non-empty eps_list")
    return [float(e) for e in eps]


def cmd_study(args):
    doc = _load_config(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    config = harness.StudyConfig.from_dict(doc)
    report = harness.run_study(config, jobs=args.jobs)
    paths = harness.emit_report(report, args.out)
    if report.degenerate:
        print("degenerate input (all errors zero); nothing to fit")
    for norm in sorted(report.slopes):
        fit = report.slopes[norm]
        print(f"{norm}: slope {fit['slope']:.3f} +- {fit['stderr']:.3f} "
              f"({fit['n_rows']} accepted rows)")
    if report.dominance_ok is not None:
        print(f"bound dominance: {'ok' if report.dominance_ok else 'VIOLATED'}"
              f" (C_fit={report.c_fit:.3g})")
    if report.uniformity:
        print(f"rhs uniformity spread: {report.uniformity['max_spread']:.2f} "
              f"({'ok' if report.uniformity['ok'] else 'VIOLATED'})")
    print("wrote " + ", ".join(paths))
    bad = report.dominance_ok is False or (
        report.uniformity and not report.uniformity["ok"])
    return 1 if bad else 0


def cmd_snorm(args):
    doc = _load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    rows = snorm_mod.kappa_table(
        _eps_list(doc), _layout_fn(doc),
        alpha0=doc.get("alpha0"),
        points_per_bump=int(doc.get("points_per_bump", 8)),
        out_csv=os.path.join(args.out, "kappa.csv"),
        seed=args.seed if args.seed is not None else int(doc.get("seed", 0)))
    for r in rows:
        note = "  [stalled]" if r.get("stalled") else ""
        print(f"eps={r['eps']:.6g}  kappa={r['kappa']:.6e}  "
              f"cavities={r['n_cavities']}  trace_dofs={r['trace_dofs']}{note}")
    return 0


def cmd_corrector(args):
    doc = _load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    rule = _eta_rule(doc)
    if not isinstance(rule, (int, float)):
        raise SystemExit("corrector tables assume a fixed cell: eta_rule "
                         "must be a constant")
    eps_list = _eps_list(doc)
    layout_fn = _layout_fn(doc)
    beta = corrector_mod.cell_beta_from_layout(layout_fn(eps_list[0]),
                                               n=int(doc.get("grid", 256)))
    kappas = None
    if doc.get("calibrate"):
        rows = snorm_mod.kappa_table(eps_list, layout_fn,
                                     seed=args.seed or 0)
        kappas = [r["kappa"] for r in rows]
    table, calibration = corrector_mod.mu_table(
        eps_list, beta, modes=int(doc.get("modes", 64)),
        tau0=float(doc.get("tau0", 1.0)), kappas=kappas,
        out_csv=os.path.join(args.out, "mu.csv"))
    for r in table:
        line = f"eps={r['eps']:.6g}  mu={r['mu']:.6e}"
        if "kappa" in r:
            ok = "yes" if r["certified"] else "NO"
            line += f"  kappa={r['kappa']:.6e}  certified={ok}"
        print(line)
    if calibration is not None:
        print(f"calibration C = {calibration:.4f}  (kappa <= C*sqrt(mu))")
    return 0


def cmd_mesh(args):
    doc = _load_config(args.config)
    kind = doc.get("mesh_kind", "perforated")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "mesh.txt")
    if kind == "perforated":
        eps = float(doc["eps"])
        layout = _layout_fn(doc)(eps)
        h = float(doc.get("h", 0.75 * eps))
        mesh = meshing.mesh_perforated(layout, h,
                                       float(doc.get("refine", 4.0)))
        layout.to_json(os.path.join(args.out, "layout.json"))
    elif kind in ("box", "interface"):
        dim = int(doc.get("dim", 2))
        lo, hi = doc.get("domain", geometry._default_domain(dim))
        h = float(doc["h"])
        if kind == "box":
            mesh = meshing.mesh_box(lo, hi, h)
        else:
            mesh = meshing.mesh_interface(lo, hi, float(doc.get("s0", 0.0)), h)
    elif kind == "slab":
        mesh = meshing.mesh_slab(doc.get("lengths", [1.0]),
                                 float(doc.get("height", 0.5)),
                                 float(doc["h"]))
    else:
        raise SystemExit(f"unknown mesh_kind {kind!r}")
    mesh.check()
    mesh.to_text(path)
    vols = mesh.simplex_volumes()
    print(f"{mesh.n_vertices} vertices, {mesh.n_simplices} simplices, "
          f"volume range [{vols.min():.3e}, {vols.max():.3e}]")
    print(f"wrote {path}")
    return 0


def cmd_validate(args):
    doc = _load_config(args.config)
    failures = 0

    def check(name, fn):
        nonlocal failures
        try:
            extra = fn()
        except (PerfhomError, ValueError, KeyError) as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"  ok {name}" + (f": {extra}" if extra else ""))

    if "theorem" in doc:
        config = harness.StudyConfig.from_dict(doc)
        check("study config", config.validate)
        lo, hi = geometry._default_domain(config.dim)
        pts = np.stack([np.linspace(a, b, 7) for a, b in zip(lo, hi)], axis=1)
        check("coefficients",
              lambda: "c0 ok (min eig %.4g)" %
              config.coefficients().validate_ellipticity(pts))
        check("solvability threshold", lambda: "lam0_hat = %.4g" %
              fem.estimate_lambda0(config.coefficients(),
                                   config.nonlinearity()))
        for eps in config.eps_list:
            check(f"layout at eps={eps:.6g}",
                  lambda e=eps: f"{config.layout(e).n_cavities} cavities")
    else:
        layout_fn = _layout_fn(doc)
        for eps in _eps_list(doc):
            check(f"layout at eps={eps:.6g}",
                  lambda e=eps: f"{layout_fn(e).n_cavities} cavities")
    print("validation " + ("FAILED" if failures else "passed"))
    return 1 if failures else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="perfhom",
        description="Homogenization toolkit for domains perforated along "
                    "a hyperplane")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel jobs for the eps sweep")
    common.add_argument("--seed", type=int, default=None,
                        help="RNG seed override")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("study", parents=[common],
                   help="run a convergence study").set_defaults(fn=cmd_study)
    sub.add_parser("snorm", parents=[common],
                   help="tabulate kappa(eps)").set_defaults(fn=cmd_snorm)
    sub.add_parser("corrector", parents=[common],
                   help="tabulate mu(eps)").set_defaults(fn=cmd_corrector)
    sub.add_parser("mesh", parents=[common],
                   help="build and export one mesh").set_defaults(fn=cmd_mesh)
    sub.add_parser("validate", parents=[common],
                   help="check a config without solving").set_defaults(
                       fn=cmd_validate)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PerfhomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
