"""Trace norms on the interface measured through a graded slab.

The slab is the box (tangential extent of S) x (0, tau0/2), meshed fine at
the bottom and geometrically coarsened upward, with the energy form

    ||V||_K^2 = ||grad V||^2 + ||V||^2        (no essential conditions).

For a weight field w on S (typically alpha_eps - alpha0) the induced
seminorm of the weighted trace functional is

    snorm(w)^2 = sup_Phi  (Phi^H B_w^H K^{-1} B_w Phi) / (Phi^H S_c Phi),

where (B_w Phi)_i = int_S w Phi phi_i and S_c is the Schur complement of K
on the bottom nodes, so Phi^H S_c Phi is the minimal extension energy.  The
top of the pencil is found by power iteration; S_c^{-1} r comes from one
full-slab solve, since the bottom block of K^{-1} [r; 0] is exactly
S_c^{-1} r.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem, meshing
from .errors import NoConvergenceError

log = logging.getLogger(__name__)


@dataclass
class SlabSpace:
    """Graded slab mesh with its energy matrix and trace bookkeeping."""

    mesh: object
    matrix: sp.csr_matrix
    bottom: np.ndarray
    interior: np.ndarray
    _lu: object = field(default=None, repr=False)
    _lu_ii: object = field(default=None, repr=False)

    @property
    def n_trace(self):
        return len(self.bottom)

    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix.tocsc())
        return self._lu

    def lu_interior(self):
        if self._lu_ii is None:
            Kii = self.matrix[self.interior][:, self.interior].tocsc()
            self._lu_ii = spla.splu(Kii)
        return self._lu_ii

    def solve(self, rhs):
        return self.lu().solve(rhs)

    def schur_solve(self, r_bottom):
        """S_c^{-1} r via the bottom block of a full-slab solve."""
        rhs = np.zeros(self.mesh.n_vertices, dtype=np.asarray(r_bottom).dtype)
        rhs[self.bottom] = r_bottom
        return self.solve(rhs)[self.bottom]

    def extension(self, phi):
        """Minimal-energy extension of bottom data phi into the slab."""
        K = self.matrix
        rhs = -(K[self.interior][:, self.bottom] @ phi)
        v = np.zeros(self.mesh.n_vertices, dtype=np.asarray(phi).dtype)
        v[self.bottom] = phi
        v[self.interior] = self.lu_interior().solve(rhs)
        return v

    def extension_energy(self, phi):
        v = self.extension(phi)
        return float(np.real(np.vdot(v, self.matrix @ v)))

    def trace_matrix(self, weight):
        """Sparse B_w with (B_w Phi)_i = int_S w Phi_h phi_i, Phi on bottom nodes."""
        cache = fem.build_facet_cache(self.mesh, "interface", weight)
        nv = self.mesh.n_vertices
        d = cache.nodes.shape[1]
        pairs = np.einsum("qi,qj->qij", cache.basis, cache.basis)
        vals = np.einsum("fq,qij->fij", cache.w, pairs)
        rows = np.repeat(cache.nodes, d, axis=1).ravel()
        cols = np.tile(cache.nodes, (1, d)).ravel()
        M = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
        return M[:, self.bottom]

    def lift(self, weight, phi):
        """Neumann lift U = K^{-1} B_w phi of bottom nodal data phi."""
        B = self.trace_matrix(weight)
        return self.solve(B @ phi)

    def lift_energy(self, weight, phi):
        """(w phi, U)_S = ||U||_K^2 for the Neumann lift U."""
        B = self.trace_matrix(weight)
        g = B @ phi
        U = self.solve(g)
        return float(np.real(np.vdot(g, U)))


def build_slab(tangential_lo, tangential_hi, h_bottom, tau0=1.0, grow=1.35):
    lo = np.atleast_1d(np.asarray(tangential_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(tangential_hi, dtype=float))
    mesh = meshing.mesh_slab(hi - lo, tau0 / 2.0, h_bottom, grow=grow)
    if np.any(lo != 0.0):
        mesh.vertices[:, :-1] += lo
        for i in range(len(lo)):
            mesh.grid["axes"][i] = mesh.grid["axes"][i] + lo[i]
    co = fem.CoefficientSet(dim=mesh.dim, reaction=1.0, lam=0.0)
    K = fem.assemble(mesh, co, dirichlet=None).matrix
    bottom = np.unique(mesh.facets[mesh.facet_mask("interface")])
    interior = np.setdiff1d(np.arange(mesh.n_vertices), bottom)
    return SlabSpace(mesh, K, bottom, interior)


def slab_for_layout(layout, points_per_bump=8, tau0=None):
    """Slab whose bottom resolves the density bumps of the layout."""
    lo, hi = layout.tangential_extent
    R2 = layout.constants["R2"]
    if tau0 is None:
        tau0 = layout.constants.get("tau0", 1.0)
    h = 2.0 * layout.eps * R2 / points_per_bump
    return build_slab(lo, hi, h, tau0=tau0)


def s_norm(slab, weight, seed=0, tol=1e-9, maxiter=300, restarts=3,
           return_info=False):
    """Power iteration for the pencil (B^H K^{-1} B, S_c); returns the sqrt.

    Runs a few independently seeded restarts and keeps the largest converged
    Rayleigh quotient; info records per-restart iteration counts and whether
    any restart stalled short of tol.
    """
    B = slab.trace_matrix(weight)
    nb = slab.n_trace

    def apply_a(w):
        return (B.getH() @ slab.solve(B @ w)).real

    best = 0.0
    info = {"iterations": [], "stalled": False, "restarts": restarts}
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        w = rng.standard_normal(nb)
        w /= np.linalg.norm(w)
        lam_prev, lam, converged = math.inf, 0.0, False
        for it in range(1, maxiter + 1):
            z = apply_a(w)
            zn = np.linalg.norm(z)
            if zn == 0.0:
                lam, converged = 0.0, True
                break
            w_new = slab.schur_solve(z)
            # with S_c w_new = z exactly, the Rayleigh quotient at w_new
            # needs only one more application of A
            den = float(np.real(np.vdot(w_new, z)))
            num = float(np.real(np.vdot(w_new, apply_a(w_new))))
            lam = num / den
            w = w_new / np.linalg.norm(w_new)
            if abs(lam - lam_prev) <= tol * max(lam, 1e-300):
                converged = True
                break
            lam_prev = lam
        info["iterations"].append(it if zn > 0 else 0)
        if not converged:
            info["stalled"] = True
        best = max(best, lam)
    if info["stalled"]:
        log.warning("s-norm power iteration stalled; value may be a lower bound")
    val = math.sqrt(max(best, 0.0))
    return (val, info) if return_info else val


def kappa(slab, density, alpha0=None, **kw):
    """s-norm distance between the layout density and its homogenized mean."""
    if alpha0 is None:
        alpha0 = density.mean()
    if callable(alpha0):
        diff = lambda x: density.tangential(x[:, :-1]) - alpha0(x[:, :-1])
    else:
        diff = lambda x: density.tangential(x[:, :-1]) - float(alpha0)
    return s_norm(slab, diff, **kw)


def kappa_table(eps_values, layout_fn, density_fn=None, alpha0=None,
                points_per_bump=8, out_csv=None, seed=0):
    """kappa(eps) over a family of layouts; optionally writes 'eps,kappa' CSV.

    layout_fn: eps -> PerforationLayout.  density_fn defaults to the mollified
    surface density of the layout.
    """
    from . import alpha as alpha_mod

    rows = []
    for eps in eps_values:
        layout = layout_fn(eps)
        dens = density_fn(layout) if density_fn else alpha_mod.surface_density(layout)
        slab = slab_for_layout(layout, points_per_bump=points_per_bump)
        val, info = kappa(slab, dens, alpha0=alpha0, seed=seed, return_info=True)
        rows.append({
            "eps": float(eps),
            "kappa": float(val),
            "n_cavities": layout.n_cavities,
            "trace_dofs": slab.n_trace,
            "stalled": info["stalled"],
        })
        log.info("kappa(eps=%g) = %g", eps, val)
    if out_csv:
        with open(out_csv, "w") as fh:
            fh.write("eps,kappa\n")
            for r in rows:
                fh.write(f"{r['eps']!r},{r['kappa']!r}\n")
    return rows
