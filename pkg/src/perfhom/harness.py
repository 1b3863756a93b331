"""Convergence studies against the homogenization rate bounds.

A study sweeps eps, solves the perforated problem and the matching
homogenized problem, measures the error norms over the perforated domain,
certifies each row with a two-mesh Richardson guard, fits log-log slopes,
and checks single-constant dominance of the predicted bound.  Constants in
the bounds are unknown, so only exponents and dominance are asserted.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import alpha as alpha_mod
from . import fem, geometry, meshing, snorm, solvers

log = logging.getLogger(__name__)

DEFAULT_SWEEP = (1 / 8, 1 / 12, 1 / 16, 1 / 24, 1 / 32, 1 / 48, 1 / 64)
DEFAULT_SWEEP_3D = (1 / 4, 1 / 6, 1 / 8)

# theorem tag -> (asserted norm, needs kappa, side condition, homogenized kind)
_THEOREMS = {
    "T1a": ("h1", False, "a_zero", "plain"),
    "T1b": ("h1", False, "eta_to_zero", "plain"),
    "T2": ("h1", True, None, "delta"),
    "T3a": ("l2", False, "a_zero", "plain"),
    "T3b": ("l2", False, "eta_to_zero", "plain"),
    "T4": ("l2", True, None, "delta"),
}


def predicted_bound(theorem, eps, eta, n, kappa=None, f_norms=None):
    """Rate bound with C = 1; the harness fits the constant separately.

    f_norms: (||f|| over the perforated domain, ||f|| over the cavities);
    required for the two-term L2 theorems, optional scaling otherwise.
    """
    if theorem not in _THEOREMS:
        raise ValueError(f"unknown theorem tag {theorem!r}")
    needs_kappa = _THEOREMS[theorem][1]
    if needs_kappa and kappa is None:
        raise ValueError(f"{theorem} bound requires kappa")
    two_term = theorem in ("T3a", "T3b", "T4")
    if two_term and f_norms is None:
        raise ValueError(f"{theorem} bound requires both f norms")
    second = eps * eta + math.sqrt(eps) * eta ** (n / 2.0)
    if theorem == "T1a":
        first = second
    elif theorem == "T1b":
        first = eps * eta + eta ** (n - 1)
    elif theorem == "T2":
        first = math.sqrt(eps) + kappa
    elif theorem == "T3a":
        first = eps ** 2 * eta ** 2 + eps * eta ** n
    elif theorem == "T3b":
        first = eps ** 2 * eta + eta ** (n - 1)
    else:
        first = eps + kappa
    if not two_term:
        scale = 1.0 if f_norms is None else f_norms[0]
        return first * scale
    return first * f_norms[0] + second * f_norms[1]


def fit_rate(pairs):
    """Least squares on (log eps, log error) -> (slope, intercept, stderr)."""
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 3:
        raise ValueError("rate fit needs at least 3 points")
    if any(e <= 0 or v <= 0 for e, v in pairs):
        raise ValueError("rate fit needs positive values")
    x = np.log([p[0] for p in pairs])
    y = np.log([p[1] for p in pairs])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(x) - 2
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = math.sqrt(float((resid ** 2).sum()) / dof / sxx) if dof > 0 else 0.0
    return float(coef[0]), float(coef[1]), stderr


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _rhs_trig(x, cut=None):
    v = np.sin(np.pi * x[:, 0]) * np.cos(0.5 * np.pi * x[:, -1])
    return v if cut is None else v * cut(x)


def _rhs_gauss(x, cut=None):
    r2 = ((x - 0.35) ** 2).sum(axis=1)
    v = np.exp(-4.0 * r2)
    return v if cut is None else v * cut(x)


def _rhs_poly(x, cut=None):
    v = 1.0 + x[:, 0] * (1.0 - x[:, 0]) - 0.5 * x[:, -1]
    return v if cut is None else v * cut(x)


def _rhs_zero(x, cut=None):
    return np.zeros(len(x))


_RHS_BY_NAME = {"trig": _rhs_trig, "gauss": _rhs_gauss, "poly": _rhs_poly,
                "zero": _rhs_zero}


def standard_rhs(names=("trig", "gauss", "poly"), vanish_near_s=False,
                 s0=0.0, inner=0.15, outer=0.3):
    """Named smooth right-hand sides, optionally cut off around the interface.

    The cutoff is exactly 0 for |x_n - s0| < inner and 1 beyond outer, so the
    cavity-band f-norm vanishes identically once cavities fit in the band.
    """
    cut = None
    if vanish_near_s:
        def cut(x):
            d = np.abs(x[:, -1] - s0)
            return smoothstep((d - inner) / (outer - inner))
    return [(name, lambda x, _f=_RHS_BY_NAME[name], _c=cut: _f(x, _c))
            for name in names]


def f_norm_cavities(layout, f):
    """||f|| over the cavity interiors via per-shape mapped quadrature."""
    total = 0.0
    scale = layout.cavity_scale
    for center, shape in zip(layout.centers, layout.shapes):
        pts, w = shape.area_quadrature(layout.dim)
        x = center[None, :] + scale * pts
        total += float(np.sum(np.abs(f(x)) ** 2 * w)) * scale ** layout.dim
    return math.sqrt(total)


@dataclass
class StudyConfig:
    theorem: str
    dim: int = 2
    layout_kind: str = "periodic"
    layout_params: dict = field(default_factory=dict)
    eta_rule: object = 1.0
    drift: object = None
    reaction: object = 0.0
    c0: float = 1.0
    matrix: object = None
    nbc_kind: str = "zero"
    nbc_sigma: object = 0.0
    rhs_names: tuple = ("trig", "gauss", "poly")
    vanish_near_s: bool = False
    eps_list: tuple = ()
    h_factor: float = 0.75
    refine_floor: float = 4.0
    guard_tol: float = 0.1
    lam: float | None = None
    u0_refine_cap: int = 2
    seed: int = 0

    def __post_init__(self):
        if not self.eps_list:
            self.eps_list = DEFAULT_SWEEP if self.dim == 2 else DEFAULT_SWEEP_3D
        self.eps_list = tuple(float(e) for e in self.eps_list)
        self.validate()

    def validate(self):
        if self.theorem not in _THEOREMS:
            raise ValueError(f"unknown theorem tag {self.theorem!r}")
        side = _THEOREMS[self.theorem][2]
        if side == "a_zero" and self.nbc_kind != "zero":
            raise ValueError(f"{self.theorem} requires a == 0")
        if side == "eta_to_zero":
            decaying = isinstance(self.eta_rule, tuple) and self.eta_rule[0] == "power" \
                and float(self.eta_rule[1]) > 0
            if not decaying:
                raise ValueError(f"{self.theorem} requires a decaying eta rule")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        if len(self.rhs_names) < 3:
            raise ValueError("at least 3 right-hand sides are required")

    def coefficients(self):
        return fem.CoefficientSet(dim=self.dim, matrix=self.matrix,
                                  drift=self.drift, reaction=self.reaction,
                                  c0=self.c0)

    def nonlinearity(self):
        return fem.NonlinearBC(self.nbc_kind, sigma=self.nbc_sigma)

    def layout(self, eps):
        return geometry.make_layout(self.layout_kind, dict(self.layout_params),
                                    eps, eta_rule=self.eta_rule)

    def to_dict(self):
        doc = asdict(self)
        for key in ("drift", "reaction", "matrix", "nbc_sigma"):
            v = doc[key]
            if callable(v) or isinstance(v, complex):
                raise ValueError(f"{key} must be plain real data in configs")
            if isinstance(v, np.ndarray):
                doc[key] = v.tolist()
        doc["eta_rule"] = list(self.eta_rule) if isinstance(self.eta_rule, tuple) \
            else self.eta_rule
        doc["eps_list"] = list(self.eps_list)
        doc["rhs_names"] = list(self.rhs_names)
        return doc

    @staticmethod
    def from_dict(doc):
        doc = dict(doc)
        er = doc.get("eta_rule", 1.0)
        if isinstance(er, list):
            doc["eta_rule"] = (er[0], float(er[1]))
        if isinstance(doc.get("eps_list"), list):
            doc["eps_list"] = tuple(doc["eps_list"])
        if isinstance(doc.get("rhs_names"), list):
            doc["rhs_names"] = tuple(doc["rhs_names"])
        return StudyConfig(**doc)


@dataclass
class RateReport:
    config: dict
    rows: list
    slopes: dict
    c_fit: float | None
    dominance_ok: bool | None
    uniformity: dict
    degenerate: bool = False
    kappa_rows: list = field(default_factory=list)

    def to_dict(self):
        return {
            "config": self.config, "rows": self.rows, "slopes": self.slopes,
            "c_fit": self.c_fit, "dominance_ok": self.dominance_ok,
            "uniformity": self.uniformity, "degenerate": self.degenerate,
            "kappa_rows": self.kappa_rows,
        }

    @staticmethod
    def from_dict(doc):
        return RateReport(**doc)

    def accepted(self, norm):
        key = f"accepted_{norm}"
        return [r for r in self.rows if r.get(key)]

    @property
    def primary_norm(self):
        return _THEOREMS[self.config["theorem"]][0]


def _interface_s0(config):
    lo, hi = geometry._default_domain(config.dim)
    return lo, hi, 0.0


def _solve_homogenized(config, kind, lam, h0, f, alpha0):
    lo, hi, s0 = _interface_s0(config)
    opts = solvers.SolveOptions(lam=lam)
    if kind == "plain":
        m0 = meshing.mesh_box(lo, hi, h0)
        return solvers.solve_homogenized_plain(m0, config.coefficients(), f, opts)
    m0 = meshing.mesh_interface(lo, hi, s0, h0)
    return solvers.solve_homogenized_delta(
        m0, config.coefficients(), alpha0, config.nonlinearity(), f, opts)


def _study_row(config, eps, kappa_val=None):
    """All solves and measurements for one eps; returns a report row."""
    norm_key, needs_kappa, _, homog_kind = _THEOREMS[config.theorem]
    layout = config.layout(eps)
    eta = layout.eta
    coeffs = config.coefficients()
    nbc = config.nonlinearity()
    lam = config.lam
    if lam is None:
        lam = fem.estimate_lambda0(coeffs, nbc) - 1.0
    opts = solvers.SolveOptions(lam=lam)

    lo, hi, s0 = _interface_s0(config)
    fs = standard_rhs(config.rhs_names, config.vanish_near_s, s0)

    h = config.h_factor * eps
    refine = max(config.refine_floor, 2.5 * h / (eps * eta))
    mesh_h = meshing.mesh_perforated(layout, h, refine)
    mesh_half = meshing.mesh_perforated(layout, h / 2.0, refine)

    alpha0 = alpha_mod.alpha0_mean(layout) if homog_kind == "delta" else None

    sys_h = fem.assemble(mesh_h, coeffs, dirichlet="outer", lam=lam)
    sys_half = fem.assemble(mesh_half, coeffs, dirichlet="outer", lam=lam)

    def solve_eps(system, f):
        load = fem.load_vector(system.mesh, f)
        u, _ = solvers.solve_assembled(system, "cavity", nbc, None, opts,
                                       load=load)
        return u

    name0, f0 = fs[0]
    u_h = solve_eps(sys_h, f0)
    u_half = solve_eps(sys_half, f0)

    # refine u_0's own mesh until its Richardson increment is subdominant
    h0 = h / 2.0
    u0_field = _solve_homogenized(config, homog_kind, lam, h0, f0, alpha0)
    e_prev = None
    for _ in range(config.u0_refine_cap + 1):
        vals = meshing.interpolate(u0_field.mesh, u0_field.values, mesh_h.vertices)
        e_cur = fem.norms(mesh_h, u_h - vals)
        if e_prev is not None:
            idx = 0 if norm_key == "l2" else 2
            if e_cur[idx] > 0 and abs(e_prev[idx] - e_cur[idx]) < 0.1 * e_cur[idx]:
                break
        e_prev = e_cur
        h0 /= 2.0
        u0_field = _solve_homogenized(config, homog_kind, lam, h0, f0, alpha0)
    u0_mesh, u0_vals = u0_field.mesh, u0_field.values

    e_h = fem.norms(mesh_h, u_h - meshing.interpolate(u0_mesh, u0_vals, mesh_h.vertices))
    e_half = fem.norms(mesh_half,
                       u_half - meshing.interpolate(u0_mesh, u0_vals, mesh_half.vertices))

    def guard(i):
        if e_half[i] == 0.0:
            return 0.0
        return abs(e_h[i] - e_half[i]) / e_half[i]

    guard_l2, guard_h1 = guard(0), guard(2)

    f_omega = fem.l2_of_function(mesh_h, f0)
    f_theta = f_norm_cavities(layout, f0)
    bound = predicted_bound(config.theorem, eps, eta, config.dim,
                            kappa=kappa_val, f_norms=(f_omega, f_theta))

    # uniformity across right-hand sides, measured on the h mesh
    ratios = {name0: (e_h[0], e_h[2], f_omega)}
    u0_sys = fem.assemble(u0_mesh, coeffs, dirichlet="outer", lam=lam)
    u0_weight = alpha0 if homog_kind == "delta" else None
    u0_selector = "interface" if homog_kind == "delta" else None
    for name, f in fs[1:]:
        uh = solve_eps(sys_h, f)
        load0 = fem.load_vector(u0_mesh, f)
        if homog_kind == "delta":
            u0v, _ = solvers.solve_assembled(u0_sys, u0_selector, nbc,
                                             u0_weight, opts, load=load0)
        else:
            u0v = fem.solve_linear(u0_sys, load0, tol=opts.linear_tol)
        err = fem.norms(mesh_h, uh - meshing.interpolate(u0_mesh, u0v, mesh_h.vertices))
        ratios[name] = (err[0], err[2], fem.l2_of_function(mesh_h, f))

    return {
        "eps": eps,
        "eta": eta,
        "err_l2": e_half[0],
        "err_h1": e_half[2],
        "bound": bound,
        "guard_l2": guard_l2,
        "guard_h1": guard_h1,
        "accepted_l2": guard_l2 < config.guard_tol,
        "accepted_h1": guard_h1 < config.guard_tol,
        "kappa": kappa_val,
        "f_norm_omega": f_omega,
        "f_norm_theta": f_theta,
        "per_f": {k: {"l2": v[0], "h1": v[1], "f_norm": v[2]}
                  for k, v in ratios.items()},
        "n_vertices": mesh_half.n_vertices,
    }


def _row_worker(args):
    doc, eps, kappa_val = args
    return _study_row(StudyConfig.from_dict(doc), eps, kappa_val)


def run_study(config, jobs=1):
    """Full sweep -> RateReport; see the module docstring for the protocol."""
    norm_key, needs_kappa, _, _ = _THEOREMS[config.theorem]

    kappa_map = {}
    kappa_rows = []
    if needs_kappa:
        kappa_rows = snorm.kappa_table(config.eps_list, config.layout,
                                       seed=config.seed)
        kappa_map = {r["eps"]: r["kappa"] for r in kappa_rows}

    if jobs > 1:
        doc = config.to_dict()
        args = [(doc, e, kappa_map.get(e)) for e in config.eps_list]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_row_worker, args))
    else:
        rows = [_study_row(config, e, kappa_map.get(e))
                for e in config.eps_list]

    degenerate = all(r["err_l2"] == 0.0 and r["err_h1"] == 0.0 for r in rows)
    slopes = {}
    c_fit = None
    dominance_ok = None
    if not degenerate:
        for key in ("l2", "h1"):
            acc = [r for r in rows if r[f"accepted_{key}"] and r[f"err_{key}"] > 0]
            if len(acc) >= 3:
                slope, intercept, stderr = fit_rate(
                    [(r["eps"], r[f"err_{key}"]) for r in acc])
                slopes[key] = {"slope": slope, "stderr": stderr,
                               "n_rows": len(acc)}
        acc = [r for r in rows if r[f"accepted_{norm_key}"]]
        if acc:
            c_fit = acc[0][f"err_{norm_key}"] / acc[0]["bound"]
            dominance_ok = all(
                r[f"err_{norm_key}"] <= 1.25 * c_fit * r["bound"] + 1e-300
                for r in acc)

    spreads = {}
    for r in rows:
        vals = [v[norm_key] / max(v["f_norm"], 1e-300) for v in r["per_f"].values()]
        if max(vals) > 0:
            spreads[r["eps"]] = max(vals) / max(min(vals), 1e-300)
    uniformity = {
        "max_spread": max(spreads.values()) if spreads else None,
        "per_eps": spreads,
        "ok": all(s < 3.0 for s in spreads.values()) if spreads else None,
    }

    return RateReport(config.to_dict(), rows, slopes, c_fit, dominance_ok,
                      uniformity, degenerate, kappa_rows)


def emit_report(report, out_dir):
    """Write rates.csv, summary.json and plot.gp; returns the paths.

    rates.csv carries only the rows accepted in the theorem's own norm;
    summary.json keeps every row with its guard ratios and flags.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "rates.csv")
    cols = ["eps", "eta", "err_l2", "err_h1", "bound", "guard_l2", "guard_h1"]
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in report.accepted(report.primary_norm):
            fh.write(",".join(repr(float(r[c])) for c in cols) + "\n")
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=float)
    gp_path = os.path.join(out_dir, "plot.gp")
    with open(gp_path, "w") as fh:
        fh.write(
            "set logscale xy\n"
            "set xlabel 'eps'\n"
            "set ylabel 'error'\n"
            "set datafile separator ','\n"
            "set key left top\n"
            f"plot 'rates.csv' every ::1 using 1:3 with linespoints title 'L2', \\\n"
            f"     'rates.csv' every ::1 using 1:4 with linespoints title 'H1', \\\n"
            f"     'rates.csv' every ::1 using 1:5 with lines title 'bound'\n"
        )
    return csv_path, json_path, gp_path
