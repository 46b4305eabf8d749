"""Membership in the sets K+ / K-, sign audits, variational lower-bound probes
and the energy-momentum boost algebra.

The threshold sets are tested with mass-1 functionals: ``E(u) <= m`` and the
sign of ``K_{alpha,beta}`` with mass 1.  Signs inside the dead band
``|K| <= sign_tol`` are reported as ``boundary_unresolved``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, InconsistencyError, InvariantViolation
from .functionals import (ScalingPair, canonical_pairs, random_pairs, static_parts)
from .grid import RadialState

K_PLUS, K_MINUS = "K_plus", "K_minus"
ABOVE, BOUNDARY = "above_threshold", "boundary_unresolved"


@dataclass
class Verdict:
    set: str
    energy_margin: float
    K_values: dict
    mass_used: float
    E: float = float("nan")
    m: float = float("nan")
    sign_tol: float = 0.0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _pair_items(d, pairs):
    if pairs is None:
        pairs = canonical_pairs(d)
    if isinstance(pairs, dict):
        items = list(pairs.items())
    else:
        items = [(p.name(), p) for p in pairs]
    for _, p in items:
        p.validate(d)
    return items


def _K(parts, name, pair, mass):
    val = parts.K(pair, mass)
    # Kinf is reported with the 1/d normalisation; the sign is unaffected
    return val / parts.d if name == "Kinf" else val


def classify(state, model, m, pairs=None, mass=1.0, sign_tol=None, energy_tol=None):
    """Place ``(u, u_t)`` in K_plus, K_minus, above_threshold or boundary_unresolved.

    ``pairs`` is a list of :class:`ScalingPair` or a name -> pair dict; the
    canonical pairs are always audited.  Mixed signs below threshold raise
    :class:`InconsistencyError` carrying every K value.
    """
    g = state.grid
    if g.d != model.d:
        raise DomainError(f"state dimension {g.d} differs from model dimension {model.d}")
    items = _pair_items(g.d, canonical_pairs(g.d))
    if pairs is not None:
        names = {n for n, _ in items}
        items += [(n, p) for n, p in _pair_items(g.d, pairs) if n not in names]
    s = static_parts(state.u, g, model)
    vel = g.integrate(state.v * state.v)
    E = s.J(mass) + 0.5 * vel
    h1 = s.kinetic + s.mass_L2
    if sign_tol is None:
        sign_tol = 1e-9 * h1
    if energy_tol is None:
        energy_tol = 1e-8 * m
    Kv = {n: _K(s, n, p, mass) for n, p in items}
    margin = m - E
    if h1 == 0.0 and vel == 0.0:
        return Verdict(K_PLUS, margin, Kv, mass, E, m, sign_tol)
    if E > m + energy_tol:
        kind = ABOVE
    elif any(abs(k) <= sign_tol for k in Kv.values()):
        kind = BOUNDARY
    else:
        pos = [k > 0 for k in Kv.values()]
        if all(pos):
            kind = K_PLUS
        elif not any(pos):
            kind = K_MINUS
        else:
            raise InconsistencyError("mixed K signs below the threshold", Kv)
    return Verdict(kind, margin, Kv, mass, E, m, sign_tol)


# --------------------------------------------------------------------------
# audits


@dataclass
class SignAuditReport:
    rows: list = field(default_factory=list)
    disagreements: list = field(default_factory=list)
    boundary: list = field(default_factory=list)
    n_states: int = 0

    @property
    def passed(self):
        return not self.disagreements

    def to_csv(self, path):
        cols = ["state", "pair", "alpha", "beta", "K", "sign"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in cols])
        return path


def sign_independence_audit(states, model, m, n_pairs=5, seed=0, mass=1.0, sign_tol_rel=1e-9):
    """Signs of K over ``n_pairs`` random admissible pairs plus the canonical ones, per state."""
    rng = np.random.default_rng(seed)
    rep = SignAuditReport()
    for i, st in enumerate(states):
        g = st.grid
        s = static_parts(st.u, g, model)
        E = s.J(mass) + 0.5 * g.integrate(st.v * st.v)
        if not E < m:
            raise DomainError(f"state {i} has E = {E:.6g} >= m = {m:.6g}")
        rep.n_states += 1
        tol = sign_tol_rel * (s.kinetic + s.mass_L2)
        items = list(canonical_pairs(g.d).items())
        items += [(f"random_{j}", p) for j, p in enumerate(random_pairs(g.d, n_pairs, rng))]
        signs = []
        for name, p in items:
            k = _K(s, name, p, mass)
            sg = 0 if abs(k) <= tol else int(np.sign(k))
            rep.rows.append({"state": i, "pair": name, "alpha": p.alpha, "beta": p.beta,
                             "K": float(k), "sign": sg})
            signs.append(sg)
        if 0 in signs:
            rep.boundary.append(i)
        elif len(set(signs)) > 1:
            rep.disagreements.append(i)
    return rep


@dataclass
class K2ProbeReport:
    n_total: int
    n_used: int
    min_ratio: float
    bound: float
    violations: list

    @property
    def passed(self):
        return not self.violations


def k2_lower_bound_probe(states, model, m, tol=1e-9):
    """Check ``K_2 >= (1 - c) ||grad phi||^2`` on states with ``J <= m`` and ``K_2 >= 0``."""
    c = model.c
    if model.d != 2 or not 0.0 < c < 1.0:
        raise DomainError("the K_2 probe needs a two-dimensional model with 0 < c < 1")
    used, ratios, bad = 0, [], []
    for i, st in enumerate(states):
        s = static_parts(st.u, st.grid, model)
        K2 = 2.0 * s.kinetic - s.G2
        if s.J(1.0) > m or K2 < 0:
            continue
        used += 1
        if s.kinetic > 0:
            ratios.append(K2 / s.kinetic)
        if K2 < (1.0 - c) * s.kinetic - tol * max(s.kinetic, 1.0):
            bad.append(i)
    rep = K2ProbeReport(len(states), used, min(ratios) if ratios else float("inf"), 1.0 - c, bad)
    if bad:
        raise InvariantViolation(f"K_2 lower bound violated on states {bad}; min ratio {rep.min_ratio:.6g}")
    return rep


@dataclass
class BdKReport:
    pair: ScalingPair
    mu_bar: float
    delta_hat: float
    n_plus: int
    n_minus: int
    minus_margin: float  # min of (-mu_bar M / 2 - K) over K- states


def bdK_probe(states, model, m, pair, tol=1e-10):
    """Probe the variational lower bounds on K^{(c)} over states with ``E <= m``.

    K+ states: largest ``delta`` in (0, 1] with ``K >= min(delta K_free, mu_bar M / 2)``.
    K- states: ``K <= -mu_bar M / 2`` or :class:`InvariantViolation`.
    """
    d, c = model.d, model.c
    pair.validate(d)
    if d == 2 and pair.alpha == 0:
        raise DomainError("(d, alpha) = (2, 0) is excluded")
    mub = pair.mu_bar(d)
    delta, n_plus, n_minus, margin = 1.0, 0, 0, float("inf")
    for st in states:
        g = st.grid
        s = static_parts(st.u, g, model)
        vel = g.integrate(st.v * st.v)
        if s.J(1.0) + 0.5 * vel > m:
            continue
        M = vel + (1.0 - c) * s.mass_L2
        K = s.K(pair, c)
        if K >= 0:
            n_plus += 1
            if K >= mub * M / 2 - tol:
                continue
            Kf = s.K_free(pair, c)
            delta = min(delta, K / Kf if Kf > 0 else 0.0)
        else:
            n_minus += 1
            gap = -mub * M / 2 - K
            margin = min(margin, gap)
            if gap < -tol * max(1.0, abs(K)):
                raise InvariantViolation(f"K^(c) = {K:.6g} exceeds -mu_bar M / 2 = {-mub * M / 2:.6g}")
    return BdKReport(pair, mub, max(delta, 0.0), n_plus, n_minus, margin)


# --------------------------------------------------------------------------
# sample states


def bump_states(grid, n, rng, amp=(0.1, 2.0), width=(0.3, 3.0), velocity=0.0):
    """Random smooth radial bumps ``A exp(-(r/w)^2) (1 + b r^2 / w^2)`` with optional velocity."""
    r = grid.radii
    out = []
    for _ in range(n):
        A = rng.uniform(*amp)
        w = rng.uniform(*width)
        b = rng.uniform(-0.3, 0.3)
        u = A * np.exp(-(r / w) ** 2) * (1 + b * (r / w) ** 2)
        u[-1] = 0.0
        v = velocity * rng.uniform(-1, 1) * np.exp(-(r / w) ** 2)
        v[-1] = 0.0
        out.append(RadialState(grid, u, v))
    return out


# --------------------------------------------------------------------------
# energy-momentum algebra


@dataclass(frozen=True)
class EnergyMomentum:
    E: float
    P: tuple

    def __post_init__(self):
        object.__setattr__(self, "P", tuple(float(x) for x in np.atleast_1d(self.P)))

    @property
    def P_norm(self):
        return math.sqrt(sum(x * x for x in self.P))

    def invariant(self):
        return self.E ** 2 - self.P_norm ** 2


def _hyperbolic(v):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    s = float(np.linalg.norm(v))
    if not s < 1.0:
        raise DomainError(f"boost velocity must satisfy |v| < 1, got {s}")
    a = 1.0 / math.sqrt(1.0 - s * s)
    return a, a * v


def lorentz_boost(ep, v):
    """``E' = a E + b.P``, ``P' = a P + b E`` with ``(a, b) = (1, v) / sqrt(1 - |v|^2)``."""
    a, b = _hyperbolic(v)
    P = np.asarray(ep.P)
    if b.size != P.size:
        raise DomainError(f"velocity has {b.size} components, momentum has {P.size}")
    return EnergyMomentum(a * ep.E + float(b @ P), tuple(a * P + b * ep.E))


def zero_momentum_reduce(ep):
    """Velocity ``v`` whose boost sends ``P`` to zero; the boosted energy is ``sqrt(E^2 - |P|^2)``."""
    Pn = ep.P_norm
    if not ep.E > Pn:
        raise DomainError(f"need E > |P|, got E = {ep.E}, |P| = {Pn}")
    v = -np.asarray(ep.P) / ep.E
    # E^2 - |P|^2 in exact rational arithmetic: near the light cone a rounded |P| loses digits
    q = Fraction(ep.E) ** 2 - sum(Fraction(float(x)) ** 2 for x in ep.P)
    E1 = math.sqrt(float(q))
    a = ep.E / E1
    P1 = a * np.asarray(ep.P) + a * v * ep.E
    return v, EnergyMomentum(E1, tuple(P1))
