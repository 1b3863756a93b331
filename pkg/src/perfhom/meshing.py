"""Simplicial meshes: structured interface meshes, graded slabs, and
Delaunay meshes of a box with cavities carved out.

No external mesh generator is used.  Cavity boundaries are approximated by
inscribed polygons/point shells whose vertices lie exactly on the analytic
boundary, so boundary quantities converge at O(h^2).  All triangulations go
through qhull (scipy.spatial.Delaunay); carved meshes verify that every
boundary facet is attributable to either the outer box or a cavity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import (
    InconsistentMeshError,
    MeshingError,
    MissingFacetTagsError,
    ResolutionTooCoarseError,
)

log = logging.getLogger(__name__)

OUTER_TAG = -1
INTERFACE_TAG = -2


@dataclass
class Mesh:
    """P1-ready simplicial mesh with tagged boundary/interface facets.

    facet_tags: OUTER_TAG for the outer boundary, INTERFACE_TAG for facets
    lying on the interface plane, k >= 0 for the boundary of cavity k.
    """

    vertices: np.ndarray
    simplices: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    h: float
    grid: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.simplices = np.asarray(self.simplices, dtype=np.int64)
        self.facets = np.asarray(self.facets, dtype=np.int64)
        self.facet_tags = np.asarray(self.facet_tags, dtype=np.int64)
        if self.facets.size == 0:
            self.facets = self.facets.reshape(0, self.dim)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_simplices(self):
        return len(self.simplices)

    def facet_mask(self, selector):
        """Boolean mask over facets: 'outer', 'interface', 'cavity', int, or
        an iterable of tags."""
        t = self.facet_tags
        if isinstance(selector, str):
            if selector == "outer":
                return t == OUTER_TAG
            if selector == "interface":
                return t == INTERFACE_TAG
            if selector == "cavity":
                return t >= 0
            raise ValueError(f"unknown facet selector {selector!r}")
        if isinstance(selector, (int, np.integer)):
            return t == int(selector)
        sel = set(int(s) for s in selector)
        return np.isin(t, list(sel))

    def facet_vertices(self, selector):
        mask = self.facet_mask(selector)
        if not mask.any():
            raise MissingFacetTagsError(f"no facets match {selector!r}")
        return np.unique(self.facets[mask])

    def simplex_volumes(self):
        v = self.vertices[self.simplices]
        edges = v[:, 1:, :] - v[:, :1, :]
        det = np.linalg.det(edges)
        return np.abs(det) / math.factorial(self.dim)

    def facet_measures(self, mask=None):
        f = self.facets if mask is None else self.facets[mask]
        v = self.vertices[f]
        if self.dim == 2:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        a = v[:, 1] - v[:, 0]
        b = v[:, 2] - v[:, 0]
        return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)

    def check(self):
        """Structural sanity; raises InconsistentMeshError on failure."""
        if self.simplices.min(initial=0) < 0 or (
            self.n_simplices and self.simplices.max() >= self.n_vertices
        ):
            raise InconsistentMeshError("simplex index out of range")
        if len(self.facets) and self.facets.max() >= self.n_vertices:
            raise InconsistentMeshError("facet index out of range")
        vol = self.simplex_volumes()
        if len(vol) and vol.min() <= 0:
            raise InconsistentMeshError("degenerate simplex (zero volume)")
        return True

    # -- text serialization -------------------------------------------------

    def to_text(self, path):
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {self.n_vertices} {self.n_simplices} {len(self.facets)}\n")
            for v in self.vertices:
                fh.write(" ".join(repr(float(x)) for x in v) + "\n")
            for s in self.simplices:
                fh.write(" ".join(str(int(i)) for i in s) + "\n")
            for f, t in zip(self.facets, self.facet_tags):
                fh.write(" ".join(str(int(i)) for i in f) + f" {int(t)}\n")

    @staticmethod
    def from_text(path):
        with open(path) as fh:
            header = fh.readline().split()
            dim, nv, ns, nf = (int(x) for x in header)
            verts = np.array(
                [[float(x) for x in fh.readline().split()] for _ in range(nv)]
            )
            simp = np.array(
                [[int(x) for x in fh.readline().split()] for _ in range(ns)],
                dtype=np.int64,
            )
            rows = [[int(x) for x in fh.readline().split()] for _ in range(nf)]
        rows = np.asarray(rows, dtype=np.int64).reshape(nf, dim + 1)
        mesh = Mesh(verts, simp, rows[:, :dim], rows[:, dim], h=0.0)
        mesh.check()
        return mesh


def _orient(vertices, simplices):
    v = vertices[simplices]
    det = np.linalg.det(v[:, 1:, :] - v[:, :1, :])
    flip = det < 0
    if flip.any():
        simplices = simplices.copy()
        simplices[flip, -1], simplices[flip, -2] = (
            simplices[flip, -2].copy(),
            simplices[flip, -1].copy(),
        )
    return simplices


def _boundary_faces(simplices, dim):
    """Faces belonging to exactly one simplex, via sorted-face counting."""
    ns = len(simplices)
    faces = []
    for i in range(dim + 1):
        idx = [j for j in range(dim + 1) if j != i]
        faces.append(simplices[:, idx])
    faces = np.concatenate(faces, axis=0)
    key = np.sort(faces, axis=1)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    return faces[first[counts == 1]]


def _on_box_side(pts, lo, hi, tol):
    """For facet vertex blocks (nf, d, dim): True if some coordinate plane of
    the box contains the whole facet."""
    on = np.zeros(len(pts), dtype=bool)
    for i in range(pts.shape[2]):
        on |= np.all(np.abs(pts[:, :, i] - lo[i]) < tol, axis=1)
        on |= np.all(np.abs(pts[:, :, i] - hi[i]) < tol, axis=1)
    return on


# ---------------------------------------------------------------------------
# structured meshes


def _segment(lo, hi, h):
    n = max(1, int(round((hi - lo) / h)))
    return np.linspace(lo, hi, n + 1)


def _segment_through(lo, hi, s, h):
    """Grid on [lo, hi] with s as an exact grid point."""
    left = _segment(lo, s, h)
    right = _segment(s, hi, h)
    return np.concatenate([left, right[1:]])


def _tri_grid(xs, ys):
    """Triangulate a tensor grid with parity-alternating diagonals."""
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cell_tri = np.empty((nx, ny, 2), dtype=np.int64)
    t = 0
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris[t] = (v00, v10, v11)
                tris[t + 1] = (v00, v11, v01)
            else:
                tris[t] = (v10, v11, v01)
                tris[t + 1] = (v10, v01, v00)
            cell_tri[i, j] = (t, t + 1)
            t += 2
    return verts, tris, cell_tri


_KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def _tet_grid(xs, ys, zs):
    """Kuhn 6-tet subdivision of a tensor grid (consistent face diagonals)."""
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = np.empty((6 * nx * ny * nz, 4), dtype=np.int64)
    cell_tet = np.empty((nx, ny, nz, 6), dtype=np.int64)
    t = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                base = np.array([i, j, k])
                for p, perm in enumerate(_KUHN_PERMS):
                    corner = base.copy()
                    ids = [vid(*corner)]
                    for ax in perm:
                        corner = corner.copy()
                        corner[ax] += 1
                        ids.append(vid(*corner))
                    tets[t] = ids
                    cell_tet[i, j, k, p] = t
                    t += 1
    return verts, tets, cell_tet


def mesh_box(domain_lo, domain_hi, h, dim=None):
    """Structured simplicial mesh of a box, outer boundary tagged."""
    return mesh_interface(domain_lo, domain_hi, None, h, dim=dim)


def mesh_interface(domain_lo, domain_hi, s0, h, dim=None):
    """Structured mesh with the plane {x_dim = s0} as an exact facet layer.

    Interior facets on the plane are appended and tagged INTERFACE_TAG; pass
    s0=None for a plain box mesh without interface facets.
    """
    lo = np.asarray(domain_lo, dtype=float)
    hi = np.asarray(domain_hi, dtype=float)
    dim = dim or len(lo)
    if s0 is not None and not lo[dim - 1] < s0 < hi[dim - 1]:
        raise ValueError("interface coordinate outside the box")
    axes = [_segment(lo[i], hi[i], h) for i in range(dim - 1)]
    if s0 is None:
        axes.append(_segment(lo[dim - 1], hi[dim - 1], h))
    else:
        axes.append(_segment_through(lo[dim - 1], hi[dim - 1], s0, h))

    if dim == 2:
        verts, simp, cell_map = _tri_grid(axes[0], axes[1])
    elif dim == 3:
        verts, simp, cell_map = _tet_grid(*axes)
    else:
        raise ValueError("dim must be 2 or 3")
    simp = _orient(verts, simp)

    tol = 1e-9 * max(hi - lo)
    bfaces = _boundary_faces(simp, dim)
    tags = np.full(len(bfaces), OUTER_TAG, dtype=np.int64)
    facets = [bfaces]
    tag_list = [tags]

    if s0 is not None:
        normal = verts[:, dim - 1]
        k = int(np.argmin(np.abs(axes[-1] - s0)))
        if dim == 2:
            xs, ys = axes
            nx = len(xs) - 1

            def vid(i, j):
                return i * (len(ys)) + j

            ifacets = np.array([[vid(i, k), vid(i + 1, k)] for i in range(nx)],
                               dtype=np.int64)
        else:
            xs, ys, zs = axes
            nxy = (len(ys)) * (len(zs))

            def vid3(i, j, kk):
                return (i * (len(ys)) + j) * (len(zs)) + kk

            ifacets = []
            for i in range(len(xs) - 1):
                for j in range(len(ys) - 1):
                    v00 = vid3(i, j, k)
                    v10 = vid3(i + 1, j, k)
                    v01 = vid3(i, j + 1, k)
                    v11 = vid3(i + 1, j + 1, k)
                    # same diagonal the Kuhn tets use on constant-z planes
                    ifacets.append((v00, v10, v11))
                    ifacets.append((v00, v11, v01))
            ifacets = np.asarray(ifacets, dtype=np.int64)
        if not np.all(np.abs(verts[np.unique(ifacets), dim - 1] - s0) < tol):
            raise InconsistentMeshError("interface layer misaligned")
        facets.append(ifacets)
        tag_list.append(np.full(len(ifacets), INTERFACE_TAG, dtype=np.int64))

    mesh = Mesh(
        verts,
        simp,
        np.concatenate(facets, axis=0),
        np.concatenate(tag_list),
        h=h,
        grid={"axes": axes, "cell_map": cell_map, "lo": lo, "hi": hi},
    )
    mesh.check()
    return mesh


def mesh_slab(lengths, height, h_bottom, grow=1.35, h_cap=None, dim=None):
    """Graded slab mesh: fine rows near the bottom boundary (the interface),
    geometrically coarsening upward.  Bottom facets are tagged INTERFACE_TAG.
    """
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    dim = dim or len(lengths) + 1
    if h_cap is None:
        h_cap = height / 8.0
    rows = [0.0]
    step = h_bottom
    while rows[-1] < height - 1e-12:
        step = min(step, h_cap, height - rows[-1])
        nxt = rows[-1] + step
        if height - nxt < 0.5 * step:
            nxt = height
        rows.append(nxt)
        step *= grow
    rows = np.asarray(rows)
    axes = [_segment(0.0, L, h_bottom) for L in lengths]
    axes.append(rows)
    if dim == 2:
        verts, simp, cell_map = _tri_grid(axes[0], axes[1])
    else:
        verts, simp, cell_map = _tet_grid(*axes)
    simp = _orient(verts, simp)
    bfaces = _boundary_faces(simp, dim)
    vpos = verts[bfaces]
    on_bottom = np.all(np.abs(vpos[:, :, dim - 1]) < 1e-12 * height, axis=1)
    tags = np.where(on_bottom, INTERFACE_TAG, OUTER_TAG).astype(np.int64)
    mesh = Mesh(verts, simp, bfaces, tags, h=h_bottom,
                grid={"axes": axes, "cell_map": cell_map,
                      "lo": np.zeros(dim), "hi": np.append(lengths, height)})
    mesh.check()
    return mesh


# ---------------------------------------------------------------------------
# perforated meshes


def _cavity_cloud(layout, k, h_near, h_band, gap_k, wall_k):
    """Boundary polygon/shell plus graded offset rings for cavity k."""
    shape = layout.shapes[k]
    center = layout.centers[k]
    cs = layout.cavity_scale
    dim = layout.dim
    rmax = shape.rmax(dim)
    blocks = []
    if dim == 2:
        L = cs * shape.boundary_measure(2)
        m = max(16, int(math.ceil(L / h_near)))
        blocks.append(center + cs * shape.boundary_points(2, m))
    else:
        A = cs * cs * shape.boundary_measure(3)
        m = max(64, int(math.ceil(2.2 * A / (h_near * h_near))))
        blocks.append(center + cs * shape.boundary_points(3, m))
    cap = min(0.45 * gap_k, 0.8 * (wall_k - cs * rmax), 4.0 * h_band + 2.0 * h_near)
    d, s = 0.0, h_near
    while True:
        d += s
        if d > cap:
            break
        if dim == 2:
            L_ring = cs * shape.boundary_measure(2) + 2.0 * math.pi * d
            m = max(12, int(math.ceil(L_ring / s)))
            blocks.append(center + cs * shape.boundary_points(2, m, offset=d / cs))
        else:
            A_ring = 4.0 * math.pi * (cs * rmax + d) ** 2
            m = max(32, int(math.ceil(2.2 * A_ring / (s * s))))
            blocks.append(center + cs * shape.boundary_points(3, m, offset=d / cs))
        s *= 1.35
        if s > h_band:
            break
    protect = cs * rmax + d + 0.55 * h_band
    return np.concatenate(blocks, axis=0), protect


def _graded_rows(lo, hi, s0, h_band, w_band, h, grow=1.5):
    rows = set()
    r = s0
    while r <= min(s0 + w_band, hi):
        rows.add(r)
        r += h_band
    r = s0
    while r >= max(s0 - w_band, lo):
        rows.add(r)
        r -= h_band
    # coarsen outward from the band edges
    for sign in (+1.0, -1.0):
        edge = s0 + sign * min(w_band, (hi - s0) if sign > 0 else (s0 - lo))
        r = edge
        step = h_band * grow
        limit = hi if sign > 0 else lo
        while (limit - r) * sign > 1e-12:
            step = min(step * grow, h, abs(limit - r))
            r = r + sign * step
            if (limit - r) * sign < 0.5 * step:
                r = limit
            rows.add(r)
    rows.add(lo)
    rows.add(hi)
    return np.array(sorted(rows))


def mesh_perforated(layout, h, refine_factor_near_cavities=4.0):
    """Mesh the box minus the cavities.

    The target size is h in the bulk, about eps*R2 in a band around the
    interface, and h/refine_factor_near_cavities at the cavity boundaries.
    Cavity boundary vertices lie exactly on the analytic boundaries.
    """
    dim = layout.dim
    lo = np.asarray(layout.domain_lo, dtype=float)
    hi = np.asarray(layout.domain_hi, dtype=float)
    eps, eta = layout.eps, layout.eta
    cs = layout.cavity_scale
    R2 = layout.constants["R2"]
    h_near = h / float(refine_factor_near_cavities)
    if h_near > eps * eta / 2.0:
        raise ResolutionTooCoarseError(
            f"near-cavity size {h_near:.3g} exceeds eps*eta/2 = {eps*eta/2:.3g}"
        )
    h_band = min(h, max(2.0 * h_near, eps * R2))
    centers = layout.centers
    n_cav = layout.n_cavities

    # distances used to cap the graded rings
    if n_cav >= 2:
        tree_c = cKDTree(centers)
        dnn = tree_c.query(centers, k=2)[0][:, 1]
    else:
        dnn = np.full(max(n_cav, 1), np.inf)
    wall = np.minimum(
        (centers - lo[None, :]).min(axis=1) if n_cav else np.array([np.inf]),
        (hi[None, :] - centers).min(axis=1) if n_cav else np.array([np.inf]),
    )

    clouds = []
    protect = np.zeros(n_cav)
    for k in range(n_cav):
        cloud, prot = _cavity_cloud(layout, k, h_near, h_band, dnn[k], wall[k])
        clouds.append(cloud)
        protect[k] = prot

    # background rows: normal positions with graded spacing, each row a
    # uniform tangential grid matched to the local row gap
    if n_cav:
        w_band = layout.constants["R0"] * eps + cs * R2 + protect.max() + h_band
    else:
        w_band = 2 * h_band
    rows = _graded_rows(lo[dim - 1], hi[dim - 1], layout.s0, h_band, w_band,
                        h, grow=1.5)
    gaps = np.diff(rows)
    rng = np.random.default_rng(20240817)
    bg_blocks = []
    for i, r in enumerate(rows):
        local = gaps[min(i, len(gaps) - 1)] if len(gaps) else h
        if i > 0:
            local = min(local, gaps[i - 1]) if i - 1 < len(gaps) else local
        dx = min(h, max(h_band, 0.9 * local))
        if dim == 2:
            xs = _segment(lo[0], hi[0], dx)
            bg_blocks.append(np.column_stack([xs, np.full(len(xs), r)]))
        else:
            xs = _segment(lo[0], hi[0], dx)
            ys = _segment(lo[1], hi[1], dx)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            blk = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, r)])
            # break the cospherical lattice degeneracy for qhull: each
            # coordinate is jittered only where it is strictly interior, so
            # wall points slide within their wall plane and the interface row
            # keeps its normal coordinate exact
            can = np.zeros(blk.shape, dtype=bool)
            tiny = 1e-12
            can[:, 0] = (blk[:, 0] > lo[0] + tiny) & (blk[:, 0] < hi[0] - tiny)
            can[:, 1] = (blk[:, 1] > lo[1] + tiny) & (blk[:, 1] < hi[1] - tiny)
            can[:, 2] = (lo[2] + tiny < r < hi[2] - tiny) and abs(r - layout.s0) > tiny
            amp = np.array([0.08 * dx, 0.08 * dx, 0.08 * min(dx, local)])
            blk += np.where(can, rng.uniform(-1.0, 1.0, blk.shape) * amp, 0.0)
            bg_blocks.append(blk)
    bg = np.concatenate(bg_blocks, axis=0)

    # keep wall points; drop interior background points inside protection radii
    on_wall = np.zeros(len(bg), dtype=bool)
    tol = 1e-12 * float((hi - lo).max())
    for i in range(dim):
        on_wall |= np.abs(bg[:, i] - lo[i]) < tol
        on_wall |= np.abs(bg[:, i] - hi[i]) < tol
    if n_cav:
        d_near, k_near = tree_c.query(bg) if n_cav >= 2 else (
            np.linalg.norm(bg - centers[0], axis=1), np.zeros(len(bg), dtype=int))
        drop = (d_near < protect[k_near]) & ~on_wall
        bg = bg[~drop]

    pts = np.concatenate(clouds + [bg], axis=0) if n_cav else bg

    tri = Delaunay(pts)
    simplices = tri.simplices
    centroids = pts[simplices].mean(axis=1)

    keep = np.ones(len(simplices), dtype=bool)
    if n_cav:
        if n_cav >= 2:
            d_c, k_c = tree_c.query(centroids)
        else:
            d_c = np.linalg.norm(centroids - centers[0], axis=1)
            k_c = np.zeros(len(centroids), dtype=int)
        rmaxs = np.array([s.rmax(dim) for s in layout.shapes])
        cand = d_c <= cs * rmaxs[k_c] + 1e-12
        for k in np.unique(k_c[cand]):
            rows_k = np.where(cand & (k_c == k))[0]
            y = (centroids[rows_k] - centers[k]) / cs
            inside = layout.shapes[k].contains(y)
            keep[rows_k[inside]] = False

    simplices = simplices[keep]

    # qhull can emit flat simplices whose vertices are all cocircular points
    # of one box face; they carry no volume and are safe to drop
    vols = np.abs(
        np.linalg.det(pts[simplices][:, 1:, :] - pts[simplices][:, :1, :])
    ) / math.factorial(dim)
    flat = vols <= 1e-10 * np.median(vols)
    if flat.any():
        vv = pts[simplices[flat]]
        wall_tol = 1e-9 * float((hi - lo).max())
        on_wall_simplex = np.zeros(int(flat.sum()), dtype=bool)
        for i in range(dim):
            on_wall_simplex |= np.all(np.abs(vv[:, :, i] - lo[i]) < wall_tol, axis=1)
            on_wall_simplex |= np.all(np.abs(vv[:, :, i] - hi[i]) < wall_tol, axis=1)
        if not on_wall_simplex.all():
            raise MeshingError("degenerate simplex away from the box walls")
        simplices = simplices[~flat]

    used = np.unique(simplices)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = pts[used]
    simplices = remap[simplices]
    simplices = _orient(verts, simplices)

    vols = np.abs(
        np.linalg.det(verts[simplices][:, 1:, :] - verts[simplices][:, :1, :])
    ) / math.factorial(dim)
    if vols.min() <= 0:
        raise MeshingError("degenerate simplex after carving")

    bfaces = _boundary_faces(simplices, dim)
    vpos = verts[bfaces]
    on_box = _on_box_side(vpos, lo, hi, 1e-9 * float((hi - lo).max()))
    tags = np.full(len(bfaces), OUTER_TAG, dtype=np.int64)
    inner = ~on_box
    if inner.any():
        if not n_cav:
            raise MeshingError("boundary facets not on the box in a solid mesh")
        mids = vpos[inner].mean(axis=1)
        if n_cav >= 2:
            d_m, k_m = tree_c.query(mids)
        else:
            d_m = np.linalg.norm(mids - centers[0], axis=1)
            k_m = np.zeros(len(mids), dtype=int)
        rmaxs = np.array([s.rmax(dim) for s in layout.shapes])
        bad = d_m > cs * rmaxs[k_m] + 3.0 * h_near
        if bad.any():
            raise MeshingError(
                f"{int(bad.sum())} boundary facets not attributable to a cavity"
            )
        tags[inner] = k_m
    present = set(np.unique(tags[tags >= 0]).tolist())
    if n_cav and present != set(range(n_cav)):
        raise MeshingError("some cavities have no boundary facets")

    mesh = Mesh(verts, simplices, bfaces, tags, h=h)
    mesh.check()
    return mesh


# ---------------------------------------------------------------------------
# point location and interpolation


def _barycentric(verts, simp, pts, simp_idx):
    v = verts[simp[simp_idx]]
    T = np.swapaxes(v[:, 1:, :] - v[:, :1, :], 1, 2)
    rhs = pts - v[:, 0, :]
    lam = np.linalg.solve(T, rhs[..., None])[..., 0]
    lam0 = 1.0 - lam.sum(axis=1, keepdims=True)
    return np.concatenate([lam0, lam], axis=1)


def locate(mesh, pts, tol=1e-10):
    """Simplex index containing each point (-1 if not found)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = len(pts)
    out = np.full(n, -1, dtype=np.int64)
    if mesh.grid is not None:
        axes = mesh.grid["axes"]
        cmap = mesh.grid["cell_map"]
        idx = []
        for a, ax in enumerate(axes):
            i = np.clip(np.searchsorted(ax, pts[:, a]) - 1, 0, len(ax) - 2)
            # snap points sitting on a grid line
            i = np.where(pts[:, a] <= ax[0], 0, i)
            idx.append(i)
        cand = cmap[tuple(idx)]  # (n, 2) or (n, 6)
        rem = np.arange(n)
        for c in range(cand.shape[1]):
            if len(rem) == 0:
                break
            lam = _barycentric(mesh.vertices, mesh.simplices, pts[rem], cand[rem, c])
            ok = np.all(lam >= -tol, axis=1)
            out[rem[ok]] = cand[rem[ok], c]
            rem = rem[~ok]
        return out
    # generic fallback: nearest centroids then barycentric checks
    cent = mesh.vertices[mesh.simplices].mean(axis=1)
    tree = cKDTree(cent)
    rem = np.arange(n)
    for k in (8, 32, 128):
        if len(rem) == 0:
            break
        k_eff = min(k, len(cent))
        _, nb = tree.query(pts[rem], k=k_eff)
        nb = np.atleast_2d(nb)
        found = np.full(len(rem), -1, dtype=np.int64)
        for c in range(k_eff):
            open_rows = found < 0
            if not open_rows.any():
                break
            lam = _barycentric(
                mesh.vertices, mesh.simplices, pts[rem[open_rows]], nb[open_rows, c]
            )
            ok = np.all(lam >= -tol, axis=1)
            rows = np.where(open_rows)[0][ok]
            found[rows] = nb[rows, c]
        out[rem] = found
        rem = rem[found < 0]
    return out


def interpolate(mesh, values, pts, tol=1e-10):
    """Evaluate a P1 field at points; raises if a point lies in no simplex."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    idx = locate(mesh, pts, tol=tol)
    if (idx < 0).any():
        raise MeshingError(f"{int((idx < 0).sum())} points outside the mesh")
    lam = _barycentric(mesh.vertices, mesh.simplices, pts, idx)
    vals = np.asarray(values)
    return np.einsum("pk,pk->p", lam, vals[mesh.simplices[idx]])
