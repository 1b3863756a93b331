"""P1 finite element core: assembly of the sesquilinear form, boundary
nonlinearities, Krylov linear solves, and mesh norms.

Conventions.  For the assembled matrix K and discrete vectors u, v,

    v^H K u = sum_ij (A_ij d_j u, d_i v) + sum_j (A_j d_j u, v)
              + (A_0 u, v) - lam (u, v),

with complex L2 products conjugating the test slot.  Cell quadrature is
degree 2, facet quadrature degree 3; both are exact for every P1 Gram
quantity used here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    MissingFacetTagsError,
    NoConvergenceError,
    NonEllipticCoefficientsError,
)

log = logging.getLogger(__name__)


def cell_quadrature(dim):
    """Degree-2 rule in barycentric coordinates: (points, weights)."""
    if dim == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        w = np.full(3, 1.0 / 3.0)
    elif dim == 3:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = np.array(
            [
                [a, b, b, b],
                [b, a, b, b],
                [b, b, a, b],
                [b, b, b, a],
            ]
        )
        w = np.full(4, 0.25)
    else:
        raise ValueError("dim must be 2 or 3")
    return pts, w


def facet_quadrature(dim):
    """Degree-3 rule on a facet (segment for dim=2, triangle for dim=3)."""
    if dim == 2:
        c = 0.5 / math.sqrt(3.0)
        pts = np.array([[0.5 + c, 0.5 - c], [0.5 - c, 0.5 + c]])
        w = np.array([0.5, 0.5])
    elif dim == 3:
        pts = np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [0.6, 0.2, 0.2],
                [0.2, 0.6, 0.2],
                [0.2, 0.2, 0.6],
            ]
        )
        w = np.array([-27.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0])
    else:
        raise ValueError("dim must be 2 or 3")
    return pts, w


def _eval_field(spec, x, dim, shape):
    """Evaluate a coefficient given as None, scalar, array, or callable."""
    m = len(x)
    if spec is None:
        return None
    if callable(spec):
        out = np.asarray(spec(x))
        want = (m,) + shape
        if out.shape != want:
            out = np.broadcast_to(out, want)
        return out
    arr = np.asarray(spec)
    return np.broadcast_to(arr, (m,) + shape)


@dataclass
class CoefficientSet:
    """Coefficients of the second-order operator.

    matrix : None (identity), constant (n, n) array, or callable x -> (m, n, n);
        must be real symmetric with lowest eigenvalue >= c0.
    drift : None, constant (n,) vector, or callable x -> (m, n); complex ok.
    reaction : scalar, or callable x -> (m,); complex ok.
    lam : spectral shift subtracted from the form.
    c0 : declared ellipticity constant.
    sup_drift / sup_reaction : declared sup bounds, required when the
        corresponding field is a callable (used by estimate_lambda0).
    """

    dim: int = 2
    matrix: object = None
    drift: object = None
    reaction: object = 0.0
    lam: float = 0.0
    c0: float = 1.0
    sup_drift: float | None = None
    sup_reaction: float | None = None

    def drift_bound(self):
        if self.drift is None:
            return 0.0
        if callable(self.drift):
            if self.sup_drift is None:
                raise ValueError("sup_drift must be declared for callable drift")
            return float(self.sup_drift)
        return float(np.max(np.abs(self.drift)))

    def reaction_bound(self):
        if callable(self.reaction):
            if self.sup_reaction is None:
                raise ValueError("sup_reaction must be declared for callable reaction")
            return float(self.sup_reaction)
        return float(np.max(np.abs(self.reaction)))

    def validate_ellipticity(self, sample_points):
        """Check min eigenvalue of the matrix >= c0 on sample points."""
        x = np.atleast_2d(sample_points)
        A = _eval_field(self.matrix, x, self.dim, (self.dim, self.dim))
        if A is None:
            lam_min = 1.0
        else:
            if not np.allclose(A, np.swapaxes(A, 1, 2), atol=1e-12):
                raise NonEllipticCoefficientsError("principal part not symmetric")
            if np.iscomplexobj(A):
                raise NonEllipticCoefficientsError("principal part must be real")
            lam_min = float(np.linalg.eigvalsh(A)[:, 0].min())
        if lam_min < self.c0 - 1e-12:
            raise NonEllipticCoefficientsError(
                f"sampled ellipticity {lam_min:.6g} below declared c0={self.c0}"
            )
        return lam_min


@dataclass
class NonlinearBC:
    """Boundary nonlinearity a(x, u) on cavity or interface facets.

    kind : "zero", "linear" (sigma(x)*u), or "saturating"
        (sigma(x)*u/(1+|u|)).  sigma may be a scalar or a callable of x.
    """

    kind: str = "zero"
    sigma: object = 0.0
    sup_sigma: float | None = None
    monotone: bool | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "saturating"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")

    @property
    def is_zero(self):
        return self.kind == "zero"

    @property
    def is_monotone(self):
        """Whether Re (a(u)-a(v)) conj(u-v) >= 0 holds pointwise.

        True for scalar real sigma >= 0 (both kinds: the Wirtinger pair
        satisfies A - |B| = sigma/(1+|u|)^2 >= 0); callables need an
        explicit declaration.
        """
        if self.monotone is not None:
            return self.monotone
        if self.is_zero:
            return True
        if callable(self.sigma):
            return False
        s = np.asarray(self.sigma)
        return bool(np.isrealobj(s) and np.all(s >= 0))

    def sigma_at(self, x):
        if callable(self.sigma):
            return np.asarray(self.sigma(x))
        return np.broadcast_to(np.asarray(self.sigma), (len(x),))

    def sigma_bound(self):
        if callable(self.sigma):
            if self.sup_sigma is None:
                raise ValueError("sup_sigma must be declared for callable sigma")
            return float(self.sup_sigma)
        return float(np.max(np.abs(self.sigma)))

    def lip_bound(self):
        """Upper bound for |da/dRe u| + |da/dIm u| (the paper-style a0)."""
        return 0.0 if self.is_zero else 2.0 * self.sigma_bound()

    def value(self, x, u):
        if self.is_zero:
            return np.zeros_like(u)
        s = self.sigma_at(x)
        if self.kind == "linear":
            return s * u
        return s * u / (1.0 + np.abs(u))

    def wirtinger(self, x, u):
        """Partial derivatives (A, B) with da = A*du + B*conj(du)."""
        if self.is_zero:
            z = np.zeros_like(u)
            return z, z
        s = self.sigma_at(x)
        if self.kind == "linear":
            return s * np.ones_like(u), np.zeros_like(u)
        rho = np.abs(u)
        g = 1.0 / (1.0 + rho)
        g2 = g * g
        A = s * (g - 0.5 * rho * g2)
        with np.errstate(invalid="ignore", divide="ignore"):
            B = np.where(rho > 0, -0.5 * s * g2 * u * u / np.where(rho > 0, rho, 1.0), 0.0)
        return A, B


@dataclass
class DiscreteField:
    """Nodal P1 field on a mesh."""

    mesh: object
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)

    def to_csv(self, path):
        v = self.values
        with open(path, "w") as fh:
            cols = [f"x{i+1}" for i in range(self.mesh.dim)]
            fh.write(",".join(cols) + ",Re(u),Im(u)\n")
            for x, u in zip(self.mesh.vertices, v):
                coords = ",".join(repr(float(c)) for c in x)
                fh.write(f"{coords},{float(np.real(u))!r},{float(np.imag(u))!r}\n")


@dataclass
class FacetCache:
    """Quadrature data for a facet set, reused across nonlinear iterations."""

    facet_idx: np.ndarray
    nodes: np.ndarray          # (F, d) vertex indices
    qp: np.ndarray             # (F, q, n) global quadrature points
    w: np.ndarray              # (F, q) weights including measure and weight field
    basis: np.ndarray          # (q, d) P1 values at the quadrature points

    @property
    def total_measure(self):
        return float(self.w.sum())


def build_facet_cache(mesh, selector, weight=None):
    mask = mesh.facet_mask(selector)
    if not mask.any():
        raise MissingFacetTagsError(f"no facets match {selector!r}")
    idx = np.where(mask)[0]
    nodes = mesh.facets[idx]
    bary, wq = facet_quadrature(mesh.dim)
    verts = mesh.vertices[nodes]                      # (F, d, n)
    qp = np.einsum("qk,fkn->fqn", bary, verts)
    meas = mesh.facet_measures(mask)
    w = meas[:, None] * wq[None, :]
    if weight is not None:
        flat = qp.reshape(-1, mesh.dim)
        wvals = weight(flat) if callable(weight) else np.broadcast_to(weight, (len(flat),))
        w = w * np.asarray(wvals).reshape(qp.shape[:2])
    return FacetCache(idx, nodes, qp, w, bary)


@dataclass
class BoundaryJacobian:
    """R-linear boundary Jacobian: J(du) = A du + B conj(du)."""

    A: sp.spmatrix
    B: sp.spmatrix

    def apply(self, du):
        return self.A @ du + self.B @ np.conj(du)

    def real_matrix(self):
        M = self.A + self.B
        if sp.issparse(M):
            err = abs(M.imag).max() if np.iscomplexobj(M.toarray() if M.nnz < 1 else M.data) else 0.0
        else:
            err = abs(np.imag(M)).max()
        if err > 1e-12:
            raise ValueError("boundary Jacobian is not real")
        return M.real.tocsr() if sp.issparse(M) else M.real


@dataclass
class AssembledSystem:
    """Sparse discrete operator with mass matrix and Dirichlet bookkeeping."""

    mesh: object
    matrix: sp.csr_matrix
    mass: sp.csr_matrix
    load: np.ndarray | None
    dirichlet_mask: np.ndarray
    coeffs: CoefficientSet
    lam: float
    caches: dict = field(default_factory=dict, repr=False)
    _free: np.ndarray | None = field(default=None, repr=False)
    _reduced: object = field(default=None, repr=False)
    _ilu: object = field(default=None, repr=False)
    _hermitian: bool | None = field(default=None, repr=False)

    @property
    def free(self):
        if self._free is None:
            self._free = np.where(~self.dirichlet_mask)[0]
        return self._free

    def reduced_matrix(self):
        if self._reduced is None:
            f = self.free
            self._reduced = self.matrix[f][:, f].tocsr()
        return self._reduced

    def facet_cache(self, selector, weight=None):
        key = (str(selector), id(weight) if weight is not None else None)
        if key not in self.caches:
            self.caches[key] = build_facet_cache(self.mesh, selector, weight)
        return self.caches[key]

    def is_hermitian(self):
        if self._hermitian is None:
            K = self.reduced_matrix()
            d = K - K.getH()
            scale = max(1.0, abs(K.data).max() if K.nnz else 1.0)
            self._hermitian = d.nnz == 0 or abs(d.data).max() <= 1e-12 * scale
        return self._hermitian

    def preconditioner(self):
        if self._ilu is None:
            K = self.reduced_matrix().tocsc()
            ilu = spla.spilu(K, drop_tol=1e-5, fill_factor=12)
            n = K.shape[0]
            self._ilu = spla.LinearOperator(
                (n, n), matvec=ilu.solve, dtype=K.dtype
            )
        return self._ilu


def assemble(mesh, coeffs, f=None, dirichlet="outer", lam=None):
    """Assemble the discrete form; see the module docstring for the identity.

    dirichlet : "outer" constrains every outer-boundary node, None keeps all
        nodes free, a callable(midpoints) keeps only the outer facets for
        which it returns True.
    """
    dim = mesh.dim
    lam = float(coeffs.lam if lam is None else lam)
    simp = mesh.simplices
    v = mesh.vertices[simp]                              # (ns, d+1, n)
    edges = v[:, 1:, :] - v[:, :1, :]                    # (ns, d, n)
    det = np.linalg.det(edges)
    vols = np.abs(det) / math.factorial(dim)
    inv = np.linalg.inv(edges)                           # (ns, n, d) inverse of rows
    grads = np.concatenate(
        [-inv.sum(axis=2)[:, None, :].transpose(0, 1, 2), np.swapaxes(inv, 1, 2)],
        axis=1,
    )                                                    # (ns, d+1, n)

    bary, wq = cell_quadrature(dim)
    qp = np.einsum("qk,fkn->fqn", bary, v)               # (ns, q, n)
    flat = qp.reshape(-1, dim)
    m = len(flat)

    A = _eval_field(coeffs.matrix, flat, dim, (dim, dim))
    drift = _eval_field(coeffs.drift, flat, dim, (dim,))
    reac = _eval_field(coeffs.reaction, flat, dim, ())

    dtype = float
    for arr in (drift, reac):
        if arr is not None and np.iscomplexobj(arr):
            dtype = complex

    nloc = dim + 1
    ns = len(simp)
    K_loc = np.zeros((ns, nloc, nloc), dtype=dtype)
    M_loc = np.zeros((ns, nloc, nloc))
    nq = len(wq)

    if A is None:
        stiff = np.einsum("fin,fjn->fij", grads, grads)
        K_loc += vols[:, None, None] * stiff
    else:
        Aq = A.reshape(ns, nq, dim, dim)
        for q in range(nq):
            Ag = np.einsum("fnm,fjm->fjn", Aq[:, q], grads)
            K_loc += (wq[q] * vols)[:, None, None] * np.einsum(
                "fin,fjn->fij", grads, Ag
            )
    if drift is not None:
        dq = drift.reshape(ns, nq, dim)
        for q in range(nq):
            Gd = np.einsum("fjn,fn->fj", grads, dq[:, q])
            K_loc += (wq[q] * vols)[:, None, None] * np.einsum(
                "i,fj->fij", bary[q], Gd
            )
    bb = np.einsum("q,qi,qj->ij", wq, bary, bary)
    M_loc += vols[:, None, None] * bb
    if reac is not None:
        rq = reac.reshape(ns, nq)
        for q in range(nq):
            K_loc = K_loc + (wq[q] * vols * rq[:, q])[:, None, None] * np.einsum(
                "i,j->ij", bary[q], bary[q]
            )

    rows = np.repeat(simp, nloc, axis=1).ravel()
    cols = np.tile(simp, (1, nloc)).ravel()
    nv = mesh.n_vertices
    K = sp.coo_matrix((K_loc.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    M = sp.coo_matrix((M_loc.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    K = (K - lam * M).tocsr()

    F = None
    if f is not None:
        F = load_vector(mesh, f)
        if np.iscomplexobj(F) and not np.iscomplexobj(K.data):
            K = K.astype(complex)

    mask = np.zeros(nv, dtype=bool)
    if dirichlet is not None:
        outer = mesh.facet_mask("outer")
        if callable(dirichlet):
            mids = mesh.vertices[mesh.facets[outer]].mean(axis=1)
            sel = np.asarray(dirichlet(mids), dtype=bool)
            chosen = np.where(outer)[0][sel]
        elif dirichlet == "outer":
            chosen = np.where(outer)[0]
        else:
            raise ValueError(f"unsupported dirichlet spec {dirichlet!r}")
        mask[np.unique(mesh.facets[chosen])] = True

    return AssembledSystem(
        mesh=mesh, matrix=K, mass=M, load=F, dirichlet_mask=mask,
        coeffs=coeffs, lam=lam,
    )


def load_vector(mesh, f):
    """Nodal load with entries (f, phi_i), degree-2 cell quadrature."""
    dim = mesh.dim
    simp = mesh.simplices
    v = mesh.vertices[simp]
    vols = np.abs(np.linalg.det(v[:, 1:, :] - v[:, :1, :])) / math.factorial(dim)
    bary, wq = cell_quadrature(dim)
    qp = np.einsum("qk,fkn->fqn", bary, v)
    flat = qp.reshape(-1, dim)
    fq = f(flat) if callable(f) else np.broadcast_to(f, (len(flat),))
    fq = np.asarray(fq).reshape(len(simp), len(wq))
    F = np.zeros(mesh.n_vertices, dtype=complex if np.iscomplexobj(fq) else float)
    contrib = np.einsum("q,fq,qi->fi", wq, fq, bary) * vols[:, None]
    np.add.at(F, simp.ravel(), contrib.ravel())
    return F


def l2_of_function(mesh, f, region=None):
    """L2 norm of a coefficient function over the mesh, degree-2 quadrature."""
    dim = mesh.dim
    simp = mesh.simplices if region is None else mesh.simplices[region]
    v = mesh.vertices[simp]
    vols = np.abs(np.linalg.det(v[:, 1:, :] - v[:, :1, :])) / math.factorial(dim)
    bary, wq = cell_quadrature(dim)
    qp = np.einsum("qk,fkn->fqn", bary, v)
    fq = np.asarray(f(qp.reshape(-1, dim))).reshape(len(simp), len(wq))
    val = np.einsum("f,q,fq->", vols, wq, np.abs(fq) ** 2)
    return math.sqrt(float(val))


def boundary_nonlinear(system, selector, nbc, u, weight=None):
    """Residual vector and Jacobian of the boundary term at state u.

    Satisfies v^H r = (w * a(., u_h), v)_{L2(facets)} for discrete v, with w
    an optional weight field on the facets.
    """
    cache = system.facet_cache(selector, weight)
    uq = np.einsum("qk,fk->fq", cache.basis, u[cache.nodes])
    flatx = cache.qp.reshape(-1, system.mesh.dim)
    flatu = uq.ravel()
    a = nbc.value(flatx, flatu).reshape(uq.shape)
    nv = system.mesh.n_vertices
    dtype = complex if (np.iscomplexobj(a) or np.iscomplexobj(u)) else float
    r = np.zeros(nv, dtype=dtype)
    contrib = np.einsum("fq,qk->fk", cache.w * a, cache.basis)
    np.add.at(r, cache.nodes.ravel(), contrib.ravel())

    Aq, Bq = nbc.wirtinger(flatx, flatu)
    Aq = np.asarray(Aq).reshape(uq.shape)
    Bq = np.asarray(Bq).reshape(uq.shape)
    d = cache.nodes.shape[1]
    pairs = np.einsum("qi,qj->qij", cache.basis, cache.basis)
    rows = np.repeat(cache.nodes, d, axis=1).ravel()
    cols = np.tile(cache.nodes, (1, d)).ravel()
    JA = np.einsum("fq,qij->fij", cache.w * Aq, pairs).ravel()
    JB = np.einsum("fq,qij->fij", cache.w * Bq, pairs).ravel()
    jac = BoundaryJacobian(
        sp.coo_matrix((JA, (rows, cols)), shape=(nv, nv)).tocsr(),
        sp.coo_matrix((JB, (rows, cols)), shape=(nv, nv)).tocsr(),
    )
    return r, jac


def solve_linear(system, rhs, tol=1e-10, maxiter=None, matrix=None):
    """Solve the reduced system to relative residual tol.

    Conjugate gradients for Hermitian systems, BiCGStab with an incomplete-LU
    preconditioner otherwise.  Raises NoConvergenceError at the iteration cap
    (usually a sign that lam is too close to the solvability threshold or the
    mesh is bad).
    """
    f = system.free
    K = system.reduced_matrix() if matrix is None else matrix[f][:, f].tocsr()
    b = np.asarray(rhs)[f]
    n = K.shape[0]
    if maxiter is None:
        maxiter = max(500, 20 * int(math.sqrt(n)))
    bnorm = np.linalg.norm(b)
    out = np.zeros(len(rhs), dtype=np.result_type(K.dtype, b.dtype))
    if bnorm == 0.0:
        return out
    if matrix is None:
        hermitian = system.is_hermitian()
    else:
        d = K - K.getH()
        hermitian = d.nnz == 0 or abs(d.data).max() <= 1e-12 * abs(K.data).max()
    # CG needs an SPD preconditioner; an incomplete LU of an SPD matrix is
    # not SPD in general and stalls CG on fine meshes, so use Jacobi there.
    if hermitian:
        precond = _jacobi(K)
    elif matrix is None:
        precond = system.preconditioner()
    else:
        Kc = K.tocsc()
        ilu = spla.spilu(Kc, drop_tol=1e-5, fill_factor=12)
        precond = spla.LinearOperator((n, n), matvec=ilu.solve, dtype=Kc.dtype)
    if np.iscomplexobj(b) and not np.iscomplexobj(K.data):
        xr = _krylov(K, b.real, tol, maxiter, precond, hermitian)
        xi = _krylov(K, b.imag, tol, maxiter, precond, hermitian)
        x = xr + 1j * xi
    else:
        x = _krylov(K, b, tol, maxiter, precond, hermitian)
    res = np.linalg.norm(K @ x - b)
    if res > 10.0 * tol * bnorm:
        raise NoConvergenceError(f"linear residual {res:.3e} above {tol:.1e}*|rhs|")
    out[f] = x
    return out


def _jacobi(K):
    d = K.diagonal().copy()
    d[d == 0] = 1.0
    inv = 1.0 / d
    return spla.LinearOperator(K.shape, matvec=lambda x: inv * x, dtype=K.dtype)


def _krylov(K, b, tol, maxiter, precond, hermitian):
    bnorm = np.linalg.norm(b)
    atol = tol * bnorm
    if hermitian:
        x, info = spla.cg(K, b, rtol=tol, atol=0.1 * atol, maxiter=maxiter, M=precond)
    else:
        x, info = spla.bicgstab(
            K, b, rtol=tol, atol=0.1 * atol, maxiter=maxiter, M=precond
        )
        if info != 0:
            x, info = spla.gmres(
                K, b, rtol=tol, atol=0.1 * atol, maxiter=maxiter, M=precond,
                restart=80,
            )
    if info != 0:
        raise NoConvergenceError(f"Krylov solver returned info={info}")
    return x


def estimate_lambda0(coeffs, nbc=None, geometry_constants=None):
    """Solvability threshold estimate lam0_hat = -C1 - C2 - c0/4.

    C1 = n*sup|A_j|^2/c0 + sup|A_0| absorbs the lower-order interior terms;
    C2 = a0*C_tr + a0^2*C_tr^2/c0 absorbs the boundary term through the trace
    constant C_tr (taken from geometry_constants, default 1).  Any lam below
    the returned value yields a coercive form.
    """
    c0 = float(coeffs.c0)
    n = int(coeffs.dim)
    C1 = n * coeffs.drift_bound() ** 2 / c0 + coeffs.reaction_bound()
    a0 = 0.0 if nbc is None else nbc.lip_bound()
    # monotone boundary terms are dissipative and need no spectral margin
    if nbc is not None and nbc.is_monotone:
        a0 = 0.0
    ctr = 1.0
    if geometry_constants is not None:
        ctr = float(geometry_constants.get("trace_constant", 1.0))
    C2 = a0 * ctr + (a0 * ctr) ** 2 / c0
    return -C1 - C2 - c0 / 4.0


def norms(mesh, u, region=None):
    """(L2, H1 seminorm, H1) of a P1 field, exactly integrated.

    region: optional boolean mask over simplices (e.g. a neighborhood of the
    interface); default is the whole mesh.
    """
    u = np.asarray(u)
    simp = mesh.simplices if region is None else mesh.simplices[region]
    v = mesh.vertices[simp]
    edges = v[:, 1:, :] - v[:, :1, :]
    det = np.linalg.det(edges)
    d = mesh.dim
    vols = np.abs(det) / math.factorial(d)
    ul = u[simp]
    ssum = np.abs(ul.sum(axis=1)) ** 2
    ssq = (np.abs(ul) ** 2).sum(axis=1)
    l2sq = float((vols * (ssum + ssq)).sum() / ((d + 1) * (d + 2)))
    inv = np.linalg.inv(edges)
    grads = np.concatenate([-inv.sum(axis=2)[:, None, :], np.swapaxes(inv, 1, 2)], axis=1)
    gu = np.einsum("fkn,fk->fn", grads, ul)
    h1sq = float((vols * (np.abs(gu) ** 2).sum(axis=1)).sum())
    return math.sqrt(l2sq), math.sqrt(h1sq), math.sqrt(l2sq + h1sq)


def h1_gram(mesh):
    """Sparse H1 Gram matrix (unit stiffness + mass), for spectral checks."""
    ident = CoefficientSet(dim=mesh.dim, reaction=1.0, lam=0.0)
    sys0 = assemble(mesh, ident, dirichlet=None)
    return sys0.matrix


def coercivity_margin(system, n_samples=100, seed=0):
    """Sampled Rayleigh bound: min over random v of Re(v^H K v)/||v||_H1^2."""
    G = h1_gram(system.mesh)
    f = system.free
    Kf = system.reduced_matrix()
    Gf = G[f][:, f]
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(n_samples):
        v = rng.standard_normal(len(f))
        if np.iscomplexobj(Kf.data):
            v = v + 1j * rng.standard_normal(len(f))
        num = np.real(np.vdot(v, Kf @ v))
        den = np.real(np.vdot(v, Gf @ v))
        best = min(best, num / den)
    return best
