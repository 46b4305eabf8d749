"""Conserved and variational functionals of radial states.

Kinetic energy uses the face form consistent with the discrete Laplacian; all
other integrals use the grid quadrature weights.  ``K_inf`` is normalised as
``K_{0,1} / d`` so that in two dimensions
``||grad u||^2 + ||u_t||^2 = 2 (E - K_inf)`` holds exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError
from .nonlinearity import f_bundle


@dataclass(frozen=True)
class ScalingPair:
    alpha: float
    beta: float

    def admissible(self, d):
        a, b = self.alpha, self.beta
        return a >= 0 and 2 * a + d * b >= 0 and 2 * a + (d - 2) * b >= 0 and (a, b) != (0, 0)

    def validate(self, d):
        if not self.admissible(d):
            raise DomainError(f"scaling pair ({self.alpha}, {self.beta}) is not admissible in d={d}")
        return self

    def mu_bar(self, d):
        return 2 * self.alpha + max(self.beta * d, self.beta * (d - 2))

    def name(self):
        return f"K_{self.alpha:g},{self.beta:g}"

    def __add__(self, other):
        return ScalingPair(self.alpha + other.alpha, self.beta + other.beta)


K0 = ScalingPair(1.0, 0.0)
KINF = ScalingPair(0.0, 1.0)


def k2_pair(d):
    return ScalingPair(float(d), -2.0)


def canonical_pairs(d):
    return {"K0": K0, "Kinf": KINF, "K2": k2_pair(d)}


def random_pairs(d, n, rng):
    """``n`` admissible pairs with ``alpha^2 + beta^2 = 1``, sampled on the admissible arc."""
    # admissible cone: alpha >= 0, beta >= -2 alpha / d
    lo = math.atan2(-2.0 / d, 1.0)
    th = rng.uniform(lo + 1e-3, math.pi / 2, size=n)
    return [ScalingPair(float(np.cos(t)), float(np.sin(t))) for t in th]


@dataclass(frozen=True)
class StaticParts:
    """The four integrals every K is linear in."""

    d: int
    kinetic: float
    mass_L2: float
    F: float
    G0: float
    G2: float

    def K(self, pair, mass):
        a, b, d = pair.alpha, pair.beta, self.d
        return ((a + b * (d - 2) / 2) * self.kinetic + (a + b * d / 2) * mass * self.mass_L2
                - a * self.G0 - b * d * self.F)

    def K_free(self, pair, mass):
        a, b, d = pair.alpha, pair.beta, self.d
        return (a + b * (d - 2) / 2) * self.kinetic + (a + b * d / 2) * mass * self.mass_L2

    def J(self, mass):
        return 0.5 * self.kinetic + 0.5 * mass * self.mass_L2 - self.F


@dataclass(frozen=True)
class FunctionalBundle:
    E: float
    E_c: float
    J: float
    J_c: float
    F: float
    G0: float
    G2: float
    kinetic: float
    mass_L2: float
    vel_L2: float
    P: float
    M: float
    c: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def static_parts(u, grid, model):
    u = np.asarray(u, dtype=float)
    f, _, Df, g2 = f_bundle(model, u)
    return StaticParts(grid.d, grid.kinetic(u), grid.integrate(u * u),
                       grid.integrate(f), grid.integrate(Df), grid.integrate(g2))


def _check_dims(state, model):
    if state.grid.d != model.d:
        raise DomainError(f"state dimension {state.grid.d} differs from model dimension {model.d}")


def evaluate(state, model):
    _check_dims(state, model)
    s = static_parts(state.u, state.grid, model)
    vel = state.grid.integrate(state.v * state.v)
    c = model.c
    J1, Jc = s.J(1.0), s.J(c)
    return FunctionalBundle(
        E=J1 + 0.5 * vel, E_c=Jc + 0.5 * vel, J=J1, J_c=Jc, F=s.F, G0=s.G0, G2=s.G2,
        kinetic=s.kinetic, mass_L2=s.mass_L2, vel_L2=vel, P=0.0,
        M=vel + (1.0 - c) * s.mass_L2, c=c)


def K(state, model, pair, mass=None):
    """Scaling derivative ``K_{alpha,beta}`` at the given mass (default: the model's shift)."""
    _check_dims(state, model)
    pair.validate(model.d)
    mass = model.c if mass is None else float(mass)
    return static_parts(state.u, state.grid, model).K(pair, mass)


def K0_value(parts, mass):
    return parts.kinetic + mass * parts.mass_L2 - parts.G0


def Kinf_value(parts, mass):
    return parts.K(KINF, mass) / parts.d


def K2_value(parts):
    return 2.0 * parts.kinetic - parts.G2


def H_p(state, model, p, mass=None):
    """``J - K_0 / p`` at the given mass."""
    mass = model.c if mass is None else float(mass)
    s = static_parts(state.u, state.grid, model)
    return s.J(mass) - K0_value(s, mass) / p


def energy_density(state, mass=1.0):
    """Node densities of ``(|u_t|^2 + c|u|^2)/2`` and face densities of ``|grad u|^2/2`` (already weighted)."""
    g = state.grid
    nodes = 0.5 * g.weights * (state.v ** 2 + mass * state.u ** 2)
    faces = 0.5 * g.kinetic_density_faces(state.u)
    return nodes, faces


def free_energy(state, mass=1.0):
    nodes, faces = energy_density(state, mass)
    return float(nodes.sum() + faces.sum())


def exterior_energy(state, model=None, R=0.0, mass=1.0):
    """Free energy ``int_{|x|>R} e_F``; nodes with ``r > R`` and faces with midpoint ``> R``."""
    g = state.grid
    if not 0.0 <= R <= g.r_max * (1 + 1e-14):
        raise DomainError(f"R must lie in [0, r_max], got {R}")
    nodes, faces = energy_density(state, mass)
    r = g.radii
    mid = 0.5 * (r[1:] + r[:-1])
    return float(nodes[r > R].sum() + faces[mid > R].sum())


def exterior_profile(state, mass=1.0):
    """Exterior free energy at every grid radius (vectorised ``exterior_energy``)."""
    nodes, faces = energy_density(state, mass)
    # ext(r_i) = sum_{k > i} nodes_k + sum_{j >= i} faces_j
    node_tail = np.concatenate((np.cumsum(nodes[::-1])[::-1][1:], [0.0]))
    face_tail = np.concatenate((np.cumsum(faces[::-1])[::-1], [0.0]))
    return node_tail + face_tail


def concentration_radius(state, model, eps, mass=1.0, variant="energy", reference=None):
    """Smallest grid radius outside which the free energy is small.

    ``variant="energy"``: exterior ``<= eps * reference`` with reference ``E(u)``
    unless given.  ``variant="2d"``: interior ``>= E(u) - eps``.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    g = state.grid
    ext = exterior_profile(state, mass)
    total = ext[0] + (energy_density(state, mass)[0][0])
    if reference is None:
        reference = evaluate(state, model).E
    if variant == "energy":
        ok = ext <= eps * reference
    elif variant == "2d":
        ok = total - ext >= reference - eps
    else:
        raise DomainError(f"unknown concentration-radius variant {variant!r}")
    if total == 0.0:
        return 0.0
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return float(g.r_max)
    return float(g.radii[idx[0]])


# --------------------------------------------------------------------------
# persistence

def write_rows(path, rows, columns=None):
    """Write dict rows as CSV with ``repr``-exact floats."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(k)) for k in columns])
    return path


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return x
