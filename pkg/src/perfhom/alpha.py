"""Mollified surface density on the interface and its homogenized mean.

Each cavity k deposits a bump of mass (eps*eta)^(n-1) * |bd omega_k| on the
hyperplane S = {x_n = s0}, spread over the disc of radius eps*R2 around the
projected center:

    alpha_eps(x) = eta^(n-1) |bd omega_k| / R2^(n-1)
                   * zeta(|x' - M_k'| / (eps*R2)),

with zeta a radial mollifier normalized so its integral over the tangential
plane R^(n-1) is 1.  Integrating the bump then reproduces the cavity's own
boundary measure exactly, which is what makes the mean of alpha_eps
eps-independent for lattice layouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.spatial import cKDTree

from .errors import PointOffManifoldError


def bump(r):
    """Smooth compactly supported profile exp(-1/(1-r^2)) on |r| < 1."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Radial profile zeta(r) = amp * bump(r), unit mass over R^(dim-1)."""

    dim: int
    amp: float

    def __call__(self, r):
        return self.amp * bump(r)

    @property
    def zero_value(self):
        return self.amp * math.exp(-1.0)


@lru_cache(maxsize=None)
def make_mollifier(dim):
    if dim == 2:
        mass, _ = quad(lambda t: float(bump(t)), -1.0, 1.0)
    elif dim == 3:
        mass, _ = quad(lambda r: 2.0 * math.pi * r * float(bump(r)), 0.0, 1.0)
    else:
        raise ValueError("dim must be 2 or 3")
    return Mollifier(dim, 1.0 / mass)


@dataclass
class SurfaceDensity:
    """alpha_eps as a function on S, evaluable at tangential or full points."""

    layout: object
    mollifier: Mollifier
    coefs: np.ndarray        # per-cavity eta^(n-1)|bd omega_k|/R2^(n-1)
    support: float           # bump radius eps*R2

    def __post_init__(self):
        self._tree = cKDTree(self.layout.centers_tangential())

    def tangential(self, xp):
        """Evaluate at tangential coordinates xp of shape (m, dim-1)."""
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        vals = np.zeros(len(xp))
        hits = self._tree.query_ball_point(xp, self.support)
        cent = self.layout.centers_tangential()
        for i, ks in enumerate(hits):
            for k in ks:
                r = np.linalg.norm(xp[i] - cent[k]) / self.support
                vals[i] += self.coefs[k] * self.mollifier(r)
        return vals

    def __call__(self, x):
        """Evaluate at full points; they must lie on S up to a tight tolerance."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.asarray(self.layout.domain_lo)
        hi = np.asarray(self.layout.domain_hi)
        tol = 1e-9 * float(np.max(hi - lo))
        off = np.abs(x[:, -1] - self.layout.s0)
        if off.max() > tol:
            raise PointOffManifoldError(
                f"point off the interface by {off.max():.3e}"
            )
        return self.tangential(x[:, :-1])

    def sup_bound(self):
        """Rigorous upper bound: peak value times the support multiplicity."""
        return float(self.coefs.max()) * self.mollifier.zero_value * self.multiplicity()

    def multiplicity(self):
        """Max number of bump supports covering a single point of S."""
        cent = self.layout.centers_tangential()
        if len(cent) == 0:
            return 0
        hits = self._tree.query_ball_point(cent, 2.0 * self.support)
        return max(len(h) for h in hits)

    def mass(self):
        """Exact integral over S of alpha_eps, assuming supports inside S."""
        n = self.layout.dim
        scale = self.layout.cavity_scale
        return float((scale ** (n - 1) * self.layout.boundary_measures()).sum())

    def mean(self):
        """Average of alpha_eps over the interface S cut by the box."""
        lo, hi = self.layout.tangential_extent
        area = float(np.prod(hi - lo))
        return self.mass() / area

    def to_csv(self, path, samples=512):
        lo, hi = self.layout.tangential_extent
        if self.layout.dim == 2:
            s = np.linspace(lo[0], hi[0], samples)
            vals = self.tangential(s[:, None])
            with open(path, "w") as fh:
                fh.write("s,alpha\n")
                for si, vi in zip(s, vals):
                    fh.write(f"{float(si)!r},{float(vi)!r}\n")
        else:
            m = int(math.sqrt(samples))
            s1 = np.linspace(lo[0], hi[0], m)
            s2 = np.linspace(lo[1], hi[1], m)
            g1, g2 = np.meshgrid(s1, s2, indexing="ij")
            pts = np.column_stack([g1.ravel(), g2.ravel()])
            vals = self.tangential(pts)
            with open(path, "w") as fh:
                fh.write("s1,s2,alpha\n")
                for p, vi in zip(pts, vals):
                    fh.write(f"{float(p[0])!r},{float(p[1])!r},{float(vi)!r}\n")


def surface_density(layout):
    n = layout.dim
    R2 = layout.constants["R2"]
    moll = make_mollifier(n)
    coefs = layout.eta ** (n - 1) * layout.boundary_measures() / R2 ** (n - 1)
    return SurfaceDensity(layout, moll, coefs, layout.eps * R2)


def alpha0_lattice(shape, eta, cell, dim=2):
    """Homogenized constant for an eps-periodic lattice.

    cell: tangential periods of the lattice in units of eps (product is the
    tangential cell area of the rescaled period box).
    """
    area = float(np.prod(np.asarray(cell, dtype=float)))
    return eta ** (dim - 1) * shape.boundary_measure(dim) / area


def alpha0_mean(layout):
    """Box average of alpha_eps; equals alpha0_lattice for full lattices."""
    return surface_density(layout).mean()


def density_count(layout, r3=0.25):
    """Max number of projected centers in one covering ball of radius r3.

    Covering points are placed on the interface with spacing 7*r3/5, inside
    the admissible band [6*r3/5, 8*r3/5], extended to the tangential extent
    of the box.
    """
    cent = layout.centers_tangential()
    if len(cent) == 0:
        return 0
    lo, hi = layout.tangential_extent
    spacing = 1.4 * r3
    axes = [np.arange(a, b + spacing, spacing) for a, b in zip(lo, hi)]
    if layout.dim == 2:
        pts = axes[0][:, None]
    else:
        g = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([gi.ravel() for gi in g])
    tree = cKDTree(cent)
    counts = tree.query_ball_point(pts, r3, return_length=True)
    return int(counts.max())
