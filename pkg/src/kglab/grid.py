"""Radial grids, field states, quadrature and the discrete radial Laplacian.

All fields are radial functions on a uniform mesh of ``[0, r_max]``.  The last
node is a Dirichlet node: it is never updated by the dynamics.  On the
node-centred grid the origin carries zero quadrature weight for ``d >= 2`` and
is excluded from the unknowns; its value is refreshed by even extrapolation.

The second-order Laplacian is built from face coefficients chosen so that it
is symmetric with respect to the trapezoid weights and exact on ``1`` and
``r**2``.  In ``d = 3`` this reduces to ``(r u)'' / r`` and is diagonalised by
the type-I discrete sine transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import fft as sfft
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, InputError


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    d: int
    N: int
    r_max: float
    staggered: bool = False
    rule: str = "trapezoid"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ConfigurationError(f"dimension must be an integer >= 2, got {self.d}")
        if self.N < 3:
            raise ConfigurationError(f"need at least 3 nodes, got {self.N}")
        if not (self.r_max > 0 and math.isfinite(self.r_max)):
            raise ConfigurationError(f"r_max must be positive, got {self.r_max}")
        if self.rule not in ("trapezoid", "simpson"):
            raise ConfigurationError(f"unknown quadrature rule {self.rule!r}")

    @cached_property
    def h(self):
        if self.staggered:
            return self.r_max / (self.N - 0.5)
        return self.r_max / (self.N - 1)

    @cached_property
    def radii(self):
        i = np.arange(self.N, dtype=float)
        r = (i + 0.5) * self.h if self.staggered else i * self.h
        r[-1] = self.r_max
        r.flags.writeable = False
        return r

    @cached_property
    def omega(self):
        return sphere_area(self.d)

    @cached_property
    def weights(self):
        """Quadrature weights for integrals over the ball of radius ``r_max``."""
        r, h, d = self.radii, self.h, self.d
        jac = self.omega * r ** (d - 1)
        if self.rule == "simpson" and not self.staggered and (self.N - 1) % 2 == 0:
            c = np.ones(self.N)
            c[1:-1:2] = 4.0
            c[2:-1:2] = 2.0
            w = jac * c * h / 3.0
        else:
            w = jac * h
            w[-1] *= 0.5
            if not self.staggered:
                w[0] *= 0.5
        w.flags.writeable = False
        return w

    @cached_property
    def dyn_weights(self):
        # inner product the dynamics are symmetric in; trapezoid regardless of ``rule``
        w = self.omega * self.radii ** (self.d - 1) * self.h
        w[-1] = 0.0
        if not self.staggered:
            w[0] = 0.0
        w.flags.writeable = False
        return w

    @cached_property
    def first(self):
        """Index of the first dynamic node."""
        return 0 if self.staggered else 1

    @cached_property
    def interior(self):
        return slice(self.first, self.N - 1)

    @cached_property
    def _faces(self):
        # a[j] couples node j and j+1, scaled so that h**(d-1) * a ~ r_{j+1/2}**(d-1)
        d, n = self.d, self.N
        r = self.radii / self.h
        b = r ** (d - 1)
        a = np.zeros(n - 1)
        s = 0.0
        for j in range(self.first, n - 1):
            s += 2.0 * d * b[j]
            a[j] = s / (r[j + 1] ** 2 - r[j] ** 2)
        return a, b

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def kinetic(self, u):
        """Discrete ``||grad u||_2^2`` consistent with :meth:`laplacian`."""
        a, _ = self._faces
        du = np.diff(u)
        return float(self.omega * self.h ** (self.d - 2) * np.dot(a, du * du))

    def kinetic_density_faces(self, u):
        """Per-face kinetic contributions (length ``N - 1``), face j between nodes j, j+1."""
        a, _ = self._faces
        du = np.diff(u)
        return self.omega * self.h ** (self.d - 2) * a * du * du

    def laplacian(self, u, out=None):
        """Second-order radial Laplacian on the dynamic nodes; zero elsewhere."""
        a, b = self._faces
        flux = a * np.diff(u)
        if out is None:
            out = np.zeros_like(u)
        else:
            out[:] = 0.0
        s = self.interior
        out[s] = (flux[s] - np.concatenate(([0.0], flux))[s]) / (b[s] * self.h ** 2)
        return out

    def laplacian4(self, u):
        """Fourth-order Laplacian ``u'' + (d-1) u'/r`` using even reflection at r = 0.

        Valid on nodes ``0 .. N-3``; the last two entries are NaN.
        """
        h, d, n = self.h, self.d, self.N
        if self.staggered:
            ext = np.concatenate((u[1::-1], u))
            off = 2
        else:
            ext = np.concatenate((u[2:0:-1], u))
            off = 2
        out = np.full(n, np.nan)
        i = np.arange(0, n - 2)
        c = i + off
        d2 = (-ext[c + 2] + 16 * ext[c + 1] - 30 * ext[c] + 16 * ext[c - 1] - ext[c - 2]) / (12 * h * h)
        d1 = (-ext[c + 2] + 8 * ext[c + 1] - 8 * ext[c - 1] + ext[c - 2]) / (12 * h)
        r = self.radii[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = d2 + (d - 1) * d1 / r
        if not self.staggered:
            lap[0] = d * d2[0]
        out[: n - 2] = lap
        return out

    def fix_origin(self, u):
        """Refresh the non-dynamic origin value by even quadratic extrapolation."""
        if self.first == 1:
            u[0] = (4.0 * u[1] - u[2]) / 3.0
        return u

    @cached_property
    def spectral(self):
        return SpectralBasis(self)

    def __repr__(self):
        return (f"RadialGrid(d={self.d}, N={self.N}, r_max={self.r_max:g}, "
                f"staggered={self.staggered}, rule={self.rule!r})")


def make_grid(d, N, r_max, staggered=False, rule="trapezoid"):
    if N < 3:
        raise ConfigurationError(f"N must be at least 3, got {N}")
    return RadialGrid(int(d), int(N), float(r_max), bool(staggered), rule)


@dataclass(frozen=True, eq=False)
class RadialState:
    grid: RadialGrid
    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        for name in ("u", "v"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.N,):
                raise InputError(f"{name} has shape {arr.shape}, expected ({self.grid.N},)")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite values")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def with_fields(self, u=None, v=None, time=None):
        return replace(self,
                       u=self.u if u is None else u,
                       v=self.v if v is None else v,
                       time=self.time if time is None else time)

    def scaled(self, amplitude):
        return self.with_fields(u=amplitude * self.u, v=amplitude * self.v)


def sample(grid, profile, velocity=None):
    """Sample radial profiles on ``grid``; ``v`` defaults to zero."""
    r = grid.radii
    u = np.asarray(profile(r), dtype=float) * np.ones_like(r)
    if not np.all(np.isfinite(u)):
        raise InputError("profile produced non-finite samples")
    v = np.zeros_like(r) if velocity is None else np.asarray(velocity(r), dtype=float) * np.ones_like(r)
    if not np.all(np.isfinite(v)):
        raise InputError("velocity profile produced non-finite samples")
    return RadialState(grid, u, v, 0.0)


def zero_state(grid):
    return RadialState(grid, np.zeros(grid.N), np.zeros(grid.N), 0.0)


class SpectralBasis:
    """Eigen-decomposition of ``-laplacian`` on the dynamic nodes.

    Fields map to coefficients ``c = V^T D^{1/2} u`` where ``D`` holds the
    un-normalised trapezoid weights; then ``kinetic = omega h^d sum(lam c^2)``.
    ``d = 3`` on the node grid uses the orthonormal DST-I; other cases use a
    dense tridiagonal eigensolver.
    """

    def __init__(self, grid):
        self.grid = grid
        a, b = grid._faces
        s = grid.interior
        h2 = grid.h ** 2
        bi = b[s]
        n = bi.size
        self.n = n
        self.sqrt_b = np.sqrt(bi)
        self.scale = grid.omega * grid.h ** grid.d
        left = np.concatenate(([0.0], a))[s]
        right = a[s]
        diag = (left + right) / (bi * h2)
        off = -right[:-1] / (h2 * np.sqrt(bi[:-1] * bi[1:]))
        self.use_dst = grid.d == 3 and not grid.staggered
        if self.use_dst:
            k = np.arange(1, n + 1)
            self.lam = 4.0 / h2 * np.sin(np.pi * k / (2 * (n + 1))) ** 2
            self.vecs = None
        else:
            self.lam, self.vecs = eigh_tridiagonal(diag, off)

    def forward(self, u):
        x = self.sqrt_b * u[self.grid.interior]
        if self.use_dst:
            return sfft.dst(x, type=1, norm="ortho")
        return self.vecs.T @ x

    def inverse(self, c, boundary=0.0):
        if self.use_dst:
            x = sfft.idst(c, type=1, norm="ortho")
        else:
            x = self.vecs @ c
        u = np.zeros(self.grid.N)
        u[self.grid.interior] = x / self.sqrt_b
        u[-1] = boundary
        return self.grid.fix_origin(u)
