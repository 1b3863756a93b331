"""Nonlinear solves for the perforated problem and its two homogenized
limits.

The boundary nonlinearity is handled by damped Picard iteration, which
freezes a(., u) at the previous iterate and re-solves the fixed coercive
linear system (so one preconditioner serves every sweep), switching to
Newton once the step is small.  For complex states the Newton tangent is
R-linear (the saturating nonlinearity is not holomorphic), so the Newton
correction is solved on the split real form of the 2x2 Wirtinger block;
that system is small relative to the Picard work and is factorized
directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .errors import NoConvergenceError, PicardDivergenceError

log = logging.getLogger(__name__)


@dataclass
class SolveOptions:
    lam: float | None = None        # spectral shift; None -> lam0_hat - 1
    picard_tol: float = 1e-9        # relative nonlinear residual
    picard_max_iter: int = 80
    damping: float = 1.0            # initial Picard damping, adapted down
    linear_tol: float = 1e-11
    newton_switch: float = 1e-3     # relative step size triggering Newton
    newton_max_iter: int = 30
    enforce_threshold: bool = True
    initial: object = None          # optional nodal initial guess

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        for name in ("picard_tol", "linear_tol", "newton_switch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _resolve_lambda(coeffs, nbc, opts):
    lam0 = fem.estimate_lambda0(coeffs, nbc)
    lam = lam0 - 1.0 if opts.lam is None else float(opts.lam)
    if opts.enforce_threshold and lam >= lam0:
        raise ValueError(
            f"lam={lam} is not below the coercivity threshold {lam0:.6g}"
        )
    return lam


def solve_perforated(mesh, coeffs, nbc, f, opts=None):
    """Weak solution with the nonlinear flux condition on cavity boundaries."""
    opts = opts or SolveOptions()
    nbc = nbc or fem.NonlinearBC("zero")
    lam = _resolve_lambda(coeffs, nbc, opts)
    system = fem.assemble(mesh, coeffs, f=f, dirichlet="outer", lam=lam)
    u, info = _nonlinear_solve(system, "cavity", nbc, None, opts)
    info["lam"] = lam
    return fem.DiscreteField(mesh, u, info)


def solve_homogenized_plain(mesh, coeffs, f, opts=None, dirichlet="outer"):
    """Unperforated Dirichlet problem (the homogenized limit without S)."""
    opts = opts or SolveOptions()
    lam = _resolve_lambda(coeffs, None, opts)
    system = fem.assemble(mesh, coeffs, f=f, dirichlet=dirichlet, lam=lam)
    u = fem.solve_linear(system, system.load, tol=opts.linear_tol)
    return fem.DiscreteField(mesh, u, {"method": "linear", "lam": lam})


def solve_homogenized_delta(mesh, coeffs, alpha0, nbc, f, opts=None,
                            dirichlet="outer"):
    """Transmission problem with the weighted nonlinearity on the interface.

    alpha0 may be a constant, a callable of full coordinates on S, or any
    object with a .tangential method (a surface density).  Continuity across
    S holds by conformity; the conormal jump condition is natural.
    """
    opts = opts or SolveOptions()
    nbc = nbc or fem.NonlinearBC("zero")
    lam = _resolve_lambda(coeffs, nbc, opts)
    system = fem.assemble(mesh, coeffs, f=f, dirichlet=dirichlet, lam=lam)
    if hasattr(alpha0, "tangential"):
        weight = lambda x: alpha0.tangential(x[:, :-1])
    else:
        weight = alpha0
    u, info = _nonlinear_solve(system, "interface", nbc, weight, opts)
    info["lam"] = lam
    return fem.DiscreteField(mesh, u, info)


def solve_assembled(system, selector=None, nbc=None, weight=None, opts=None,
                    load=None):
    """Nonlinear solve on an already assembled system, reusing its caches.

    Sweeping several right-hand sides over one mesh should assemble once and
    call this with each load vector.
    """
    opts = opts or SolveOptions()
    nbc = nbc or fem.NonlinearBC("zero")
    return _nonlinear_solve(system, selector, nbc, weight, opts, load=load)


def _nonlinear_solve(system, selector, nbc, weight, opts, load=None):
    F = system.load if load is None else load
    if F is None:
        F = np.zeros(system.mesh.n_vertices)
    free = system.free
    fscale = max(float(np.linalg.norm(F[free])), 1e-300)

    if nbc.is_zero:
        u = fem.solve_linear(system, F, tol=opts.linear_tol)
        return u, {"method": "linear", "picard_iters": 0, "newton_iters": 0,
                   "residual": 0.0, "contraction": []}

    def residual(u):
        r_b, jac = fem.boundary_nonlinear(system, selector, nbc, u, weight)
        G = system.matrix @ u + r_b - F
        return G, jac

    if opts.initial is None:
        u = fem.solve_linear(system, F, tol=opts.linear_tol)
    else:
        u = np.array(opts.initial, copy=True)
        u[system.dirichlet_mask] = 0.0
    theta = opts.damping
    prev_step = None
    prev_res = math.inf
    grow_count = 0
    contraction = []
    picard_iters = 0
    switched = False

    for it in range(1, opts.picard_max_iter + 1):
        picard_iters = it
        r_b, _ = fem.boundary_nonlinear(system, selector, nbc, u, weight)
        G = system.matrix @ u + r_b - F
        res = float(np.linalg.norm(G[free])) / fscale
        if res <= opts.picard_tol:
            return u, {"method": "picard", "picard_iters": it, "newton_iters": 0,
                       "residual": res, "contraction": contraction}
        if res > prev_res * 1.0001:
            grow_count += 1
            if grow_count >= 2:
                theta *= 0.5
                grow_count = 0
                if theta < 1.0 / 16.0:
                    raise PicardDivergenceError(
                        f"Picard residual growing at damping {theta:.3g}; "
                        "lam is likely too close to the solvability threshold"
                    )
        prev_res = res
        u_lin = fem.solve_linear(system, F - r_b, tol=opts.linear_tol)
        step = u_lin - u
        snorm_ = float(np.linalg.norm(step[free]))
        if prev_step is not None and prev_step > 0:
            contraction.append(snorm_ / prev_step)
        prev_step = snorm_
        u = u + theta * step
        if snorm_ <= opts.newton_switch * max(float(np.linalg.norm(u[free])), 1.0):
            switched = True
            break

    if not switched:
        G, _ = residual(u)
        res = float(np.linalg.norm(G[free])) / fscale
        if res > opts.picard_tol:
            raise NoConvergenceError(
                f"Picard stalled at relative residual {res:.3e} "
                f"after {opts.picard_max_iter} iterations"
            )
        return u, {"method": "picard", "picard_iters": picard_iters,
                   "newton_iters": 0, "residual": res, "contraction": contraction}

    newton_iters = 0
    for it in range(1, opts.newton_max_iter + 1):
        G, jac = residual(u)
        res = float(np.linalg.norm(G[free])) / fscale
        if res <= opts.picard_tol:
            return u, {"method": "picard+newton", "picard_iters": picard_iters,
                       "newton_iters": newton_iters, "residual": res,
                       "contraction": contraction}
        newton_iters = it
        delta = _newton_step(system, jac, -G)
        # line search guards the global phase Newton inherited from Picard
        scale = 1.0
        for _ in range(6):
            G_try, _ = residual(u + scale * delta)
            if np.linalg.norm(G_try[free]) / fscale < res:
                break
            scale *= 0.5
        u = u + scale * delta
    G, _ = residual(u)
    res = float(np.linalg.norm(G[free])) / fscale
    if res <= opts.picard_tol:
        return u, {"method": "picard+newton", "picard_iters": picard_iters,
                   "newton_iters": newton_iters, "residual": res,
                   "contraction": contraction}
    raise NoConvergenceError(
        f"Newton stalled at relative residual {res:.3e}"
    )


def _newton_step(system, jac, rhs):
    """Solve (K + J_b) delta = rhs on free dofs.

    Real states keep the sparse Hermitian-dominant structure and reuse the
    Picard preconditioner; complex states go through the split real form of
    the R-linear tangent.
    """
    free = system.free
    K = system.matrix
    complex_state = np.iscomplexobj(rhs) or np.iscomplexobj(jac.A.data) \
        or np.iscomplexobj(K.data)
    if not complex_state:
        J = (K + jac.A + jac.B).tocsr()[free][:, free]
        b = np.asarray(rhs)[free]
        x, info = spla.bicgstab(J, b, rtol=1e-12, atol=1e-300, maxiter=400,
                                M=system.preconditioner())
        if info != 0:
            x = spla.splu(J.tocsc()).solve(b)
        out = np.zeros(len(rhs))
        out[free] = x
        return out
    M = (K + jac.A).tocsr()[free][:, free]
    B = jac.B.tocsr()[free][:, free]
    if np.iscomplexobj(M.data):
        Mr, Mi = M.real, M.imag
    else:
        Mr, Mi = M, sp.csr_matrix(M.shape)
    if np.iscomplexobj(B.data):
        Br, Bi = B.real, B.imag
    else:
        Br, Bi = B, sp.csr_matrix(B.shape)
    big = sp.bmat([[Mr + Br, -Mi + Bi], [Mi + Bi, Mr - Br]]).tocsc()
    b = np.asarray(rhs)[free]
    stacked = np.concatenate([b.real, b.imag])
    sol = spla.splu(big).solve(stacked)
    n = len(free)
    out = np.zeros(len(rhs), dtype=complex)
    out[free] = sol[:n] + 1j * sol[n:]
    return out
