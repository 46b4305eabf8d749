"""Radial time integration of ``u_tt = Delta u - mass u + f'(u)`` with diagnostics.

Two schemes: velocity-Verlet leapfrog and Strang splitting (exact spectral
free half-steps around a nonlinear kick).  The free Klein-Gordon flow is
solved exactly in time in the eigenbasis of the discrete Laplacian.
"""

from __future__ import annotations

import hashlib
import json
import math
import time as _time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, InstabilityError, InvariantViolation, SaturationError
from .functionals import KINF, static_parts, write_rows
from .grid import RadialState
from .nonlinearity import admissible_epsilon


@dataclass
class EvolveConfig:
    dt: float = 0.005
    T_final: float = 30.0
    scheme: str = "leapfrog"
    mass: float = 1.0
    record_every: int = 10
    blowup_factor: float = 10.0
    detect_blowup: bool = True
    detect_scatter: bool = True
    scatter_window: float = 2.0
    scatter_tol: float = 1e-3
    scatter_check_every: float = 1.0
    dispersal_radius: float = 6.0
    nonlinear_tol: float = 1e-4
    conc_eps: float = 0.1
    eps: float | None = None  # z-diagnostic exponent p - 2; default min(0.5, admissible)
    concavity_window: float | None = None  # default: Sturm-Liouville length
    concavity_tol: float = 0.0
    ext_radii: tuple = ()
    adaptive: bool = True
    stiffness: float = 0.5
    min_dt: float = 1e-9
    energy_tol: float | None = None  # near-threshold band around m
    seed: int = 0

    def validate(self, grid):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.dt > 0.5 * grid.h * (1 + 1e-12):
            raise ConfigurationError(f"CFL violated: dt = {self.dt:g} > 0.5 h = {0.5 * grid.h:g}")
        if self.scheme not in ("leapfrog", "strang"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.scatter_window < 2:
            raise ConfigurationError("scatter window must be >= 2")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        if self.T_final < 0:
            raise ConfigurationError("T_final must be >= 0")
        return self

    def to_dict(self):
        d = asdict(self)
        d["ext_radii"] = list(self.ext_radii)
        return d

    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# free flow


class FreeFlow:
    """Exact-in-time free Klein-Gordon flow of the discrete radial operator."""

    def __init__(self, grid, mass):
        self.grid = grid
        self.mass = float(mass)
        sb = grid.spectral
        self.basis = sb
        self.omega = np.sqrt(sb.lam + self.mass)
        self._lift = None

    @property
    def lift(self):
        """Static solution of ``(-Delta + mass) w = 0`` on dynamic nodes with boundary value 1."""
        if self._lift is None:
            g = self.grid
            a, b = g._faces
            s = g.interior
            idx = np.arange(g.N)[s]
            n = idx.size
            bi = b[s] * g.h ** 2
            left = np.concatenate(([0.0], a))[s]
            right = a[s]
            ab = np.zeros((3, n))
            ab[1] = (left + right) / bi + self.mass
            ab[0, 1:] = -right[:-1] / bi[:-1]
            ab[2, :-1] = -left[1:] / bi[1:]
            rhs = np.zeros(n)
            rhs[-1] = right[-1] / bi[-1]
            w = np.zeros(g.N)
            w[s] = solve_banded((1, 1), ab, rhs)
            w[-1] = 1.0
            self._lift = g.fix_origin(w)
        return self._lift

    def coefficients(self, u, v):
        ub = u[-1]
        w = u - ub * self.lift if ub != 0.0 else u
        return self.basis.forward(w), self.basis.forward(v), ub

    def fields(self, cu, cv, ub):
        u = self.basis.inverse(cu)
        v = self.basis.inverse(cv)
        if ub != 0.0:
            u = u + ub * self.lift
            u[-1] = ub
        return u, v

    def advance(self, u, v, t):
        cu, cv, ub = self.coefficients(u, v)
        co, si = np.cos(self.omega * t), np.sin(self.omega * t)
        nu = co * cu + si / self.omega * cv
        nv = -self.omega * si * cu + co * cv
        return self.fields(nu, nv, ub)

    def energy(self, u, v):
        cu, cv, _ = self.coefficients(u, v)
        return 0.5 * self.basis.scale * float(np.sum(self.omega ** 2 * cu * cu + cv * cv))


_FLOWS = {}


def free_flow(grid, mass):
    key = (id(grid), float(mass))
    fl = _FLOWS.get(key)
    if fl is None or fl.grid is not grid:
        fl = FreeFlow(grid, mass)
        _FLOWS[key] = fl
    return fl


def free_evolve(state, mass, t):
    """Free Klein-Gordon flow of ``state`` for time ``t``."""
    if t == 0:
        return state
    u, v = free_flow(state.grid, mass).advance(state.u, state.v, t)
    return RadialState(state.grid, u, v, state.time + t)


def mean_kinetic_split(state, L, mass=1.0):
    """Forward, backward and cross parts of ``int_0^L ||grad u_free(t)||^2 dt``."""
    if L < 2:
        raise ConfigurationError("mean-kinetic window must satisfy L >= 2")
    fl = free_flow(state.grid, mass)
    cu, cv, ub = fl.coefficients(state.u, state.v)
    if abs(ub) > 1e-12 * max(float(np.max(np.abs(state.u))), 1e-300):
        raise ConfigurationError("mean-kinetic split needs a zero Dirichlet value")
    om, lam, sc = fl.omega, fl.basis.lam, fl.basis.scale
    # u_k(t) = phi+ e^{i w t} + phi- e^{-i w t}
    php = 0.5 * (cu - 1j * cv / om)
    phm = 0.5 * (cu + 1j * cv / om)
    fwd = L * sc * float(np.sum(lam * np.abs(php) ** 2))
    bwd = L * sc * float(np.sum(lam * np.abs(phm) ** 2))
    cross = sc * float(np.sum(lam * np.imag(php * np.conj(phm) * np.expm1(2j * om * L)) / om))
    bound = 2.0 / (L * float(np.min(om))) * math.sqrt(fwd * bwd)
    if abs(cross) > bound * (1 + 1e-9) + 1e-300:
        raise InvariantViolation(f"cross term {cross:.3e} exceeds bound {bound:.3e}")
    return fwd, bwd, cross


# --------------------------------------------------------------------------
# steppers


def _force(grid, model, u, mass, nonlinear=True):
    a = grid.laplacian(u)
    s = grid.interior
    a[s] -= mass * u[s]
    if nonlinear:
        a[s] += model.df(u[s])
    return a


class Stepper:
    def __init__(self, grid, model, scheme, mass, nonlinear=True):
        self.grid, self.model, self.scheme, self.mass = grid, model, scheme, mass
        self.nonlinear = nonlinear
        self.flow = free_flow(grid, mass) if scheme == "strang" else None
        self._acc = None

    def __call__(self, u, v, dt):
        g = self.grid
        s = g.interior
        if self.scheme == "leapfrog":
            if self._acc is None:
                self._acc = _force(g, self.model, u, self.mass, self.nonlinear)
            v = v + 0.5 * dt * self._acc
            u = u.copy()
            u[s] += dt * v[s]
            g.fix_origin(u)
            self._acc = _force(g, self.model, u, self.mass, self.nonlinear)
            v = v + 0.5 * dt * self._acc
            g.fix_origin(v)
            return u, v
        u, v = self.flow.advance(u, v, 0.5 * dt)
        if self.nonlinear:
            v = v.copy()
            v[s] += dt * self.model.df(u[s])
        u, v = self.flow.advance(u, v, 0.5 * dt)
        return u, v

    def reset(self):
        self._acc = None


def step(state, model, config):
    """One time step of the configured scheme."""
    g = state.grid
    config.validate(g)
    st = Stepper(g, model, config.scheme, config.mass)
    u, v = st(np.array(state.u), np.array(state.v), config.dt)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise InstabilityError("non-finite field after step", state.time)
    return RadialState(g, u, v, state.time + config.dt)


# --------------------------------------------------------------------------
# diagnostics


BASE_COLUMNS = ["t", "dt", "y", "ydot", "vel_L2", "kinetic", "mass_L2", "F", "G0", "G2", "E", "E_c",
                "free_energy", "K0", "K2", "Kinf", "K0_c", "Kinf_c", "M", "H_p", "z", "norm2",
                "bracket", "conc_radius", "max_u", "free_distance"]


@dataclass
class DiagnosticsSeries:
    columns: list
    data: dict
    eps: float
    c: float
    ext_radii: tuple = ()

    @classmethod
    def empty(cls, eps, c, ext_radii=()):
        cols = BASE_COLUMNS + [f"ext_{i}" for i in range(len(ext_radii))]
        return cls(cols, {k: [] for k in cols}, eps, c, tuple(ext_radii))

    @classmethod
    def from_arrays(cls, eps=0.5, c=0.0, **arrays):
        data = {k: list(np.asarray(v, dtype=float)) for k, v in arrays.items()}
        cols = list(arrays)
        return cls(cols, data, eps, c)

    def append(self, row):
        for k in self.columns:
            self.data[k].append(row.get(k, float("nan")))

    def __len__(self):
        return len(self.data["t"]) if "t" in self.data else 0

    def __getitem__(self, key):
        return np.asarray(self.data[key], dtype=float)

    def has(self, key):
        return key in self.data and len(self.data[key]) == len(self) and len(self) > 0

    def second_difference(self, key):
        """Centred second derivative on the (uniform) record times; NaN at the ends."""
        x, t = self[key], self["t"]
        out = np.full_like(x, np.nan)
        if x.size >= 3:
            h1 = t[1:-1] - t[:-2]
            h2 = t[2:] - t[1:-1]
            out[1:-1] = 2 * (h1 * x[2:] - (h1 + h2) * x[1:-1] + h2 * x[:-2]) / (h1 * h2 * (h1 + h2))
        return out

    def first_difference(self, key):
        x, t = self[key], self["t"]
        out = np.full_like(x, np.nan)
        if x.size >= 3:
            out[1:-1] = (x[2:] - x[:-2]) / (t[2:] - t[:-2])
        return out

    def to_csv(self, path):
        rows = [{k: self.data[k][i] for k in self.columns} for i in range(len(self))]
        write_rows(path, rows, self.columns)
        manifest = {"columns": self.columns, "eps": self.eps, "c": self.c,
                    "ext_radii": list(self.ext_radii)}
        with open(str(path) + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
        return path


def _record(grid, model, u, v, t, dt, cfg, eps, c, p, free_distance):
    s = static_parts(u, grid, model)
    vel = grid.integrate(v * v)
    y = s.mass_L2
    J1 = s.J(1.0)
    nodes, faces = energy_density_arrays(grid, u, v, cfg.mass)
    ext = _exterior_from(nodes, faces)
    total = float(nodes.sum() + faces.sum())
    E = J1 + 0.5 * vel
    thr = cfg.conc_eps * E
    idx = np.flatnonzero(ext <= thr) if total > 0 else np.array([0])
    conc = float(grid.radii[idx[0]]) if idx.size else float(grid.r_max)
    if total == 0:
        conc = 0.0
    K0_1 = s.kinetic + y - s.G0
    row = {
        "t": t, "dt": dt, "y": y, "ydot": 2.0 * grid.integrate(u * v), "vel_L2": vel,
        "kinetic": s.kinetic, "mass_L2": y, "F": s.F, "G0": s.G0, "G2": s.G2, "E": E,
        "E_c": s.J(c) + 0.5 * vel, "free_energy": total,
        "K0": K0_1, "K2": 2.0 * s.kinetic - s.G2, "Kinf": s.K(KINF, 1.0) / grid.d,
        "K0_c": s.kinetic + c * y - s.G0, "Kinf_c": s.K(KINF, c) / grid.d,
        "M": vel + (1.0 - c) * y, "H_p": s.J(c) - (s.kinetic + c * y - s.G0) / p,
        "z": y ** (-eps / 4.0) if y > 0 else float("inf"),
        "norm2": s.kinetic + y + vel, "bracket": grid.integrate(u * v), "conc_radius": conc,
        "max_u": float(np.max(np.abs(u))), "free_distance": free_distance,
    }
    for i, R in enumerate(cfg.ext_radii):
        rr = min(R + t, grid.r_max)
        row[f"ext_{i}"] = _ext_at(grid, nodes, faces, rr)
    return row


def energy_density_arrays(grid, u, v, mass):
    nodes = 0.5 * grid.weights * (v * v + mass * u * u)
    faces = 0.5 * grid.kinetic_density_faces(u)
    return nodes, faces


def _exterior_from(nodes, faces):
    node_tail = np.concatenate((np.cumsum(nodes[::-1])[::-1][1:], [0.0]))
    face_tail = np.concatenate((np.cumsum(faces[::-1])[::-1], [0.0]))
    return node_tail + face_tail


def _ext_at(grid, nodes, faces, R):
    r = grid.radii
    mid = 0.5 * (r[1:] + r[:-1])
    return float(nodes[r > R].sum() + faces[mid > R].sum())


def _energy_distance(grid, du, dv, mass):
    nodes, faces = energy_density_arrays(grid, du, dv, mass)
    return math.sqrt(max(0.0, 2.0 * float(nodes.sum() + faces.sum())))


# --------------------------------------------------------------------------
# run records and detectors


@dataclass
class Detection:
    fired: bool
    criterion: str = ""
    time: float = float("nan")
    details: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    verdict: str
    detector: str
    t_end: float
    config: dict
    config_hash: str
    scheme: str
    seed: int
    energy_drift: float
    near_threshold: bool = False
    input_verdict: str | None = None
    scatter_distance: float = float("nan")
    detections: list = field(default_factory=list)
    elapsed: float = 0.0
    notes: list = field(default_factory=list)
    series_path: str | None = None
    final_state: RadialState | None = field(default=None, repr=False)

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "final_state"}
        d["detections"] = [asdict(x) for x in self.detections]
        return d

    def to_json(self, path=None, drop_timing=False):
        d = self.to_dict()
        if drop_timing:
            d.pop("elapsed", None)
        text = json.dumps(d, indent=2, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def sturm_liouville_length(eps, c):
    return 2.0 * math.pi / (eps * math.sqrt(1.0 - c))


def blowup_detect(series, model=None, config=None):
    """Post-hoc blowup criteria on a recorded series.

    (a) energy-norm growth by ``blowup_factor``; (c) the concavity
    ``z'' <= -(1-c) eps^2 z / 4`` held over a Sturm-Liouville window.
    """
    cfg = config or EvolveConfig()
    n = len(series)
    if n == 0:
        return Detection(False)
    t = series["t"]
    norm = np.sqrt(series["norm2"]) if series.has("norm2") else np.sqrt(np.abs(series["y"]))
    hits = np.flatnonzero(norm >= cfg.blowup_factor * norm[0])
    first = {}
    if hits.size:
        first["norm_growth"] = float(t[hits[0]])
    if series.has("z"):
        conc = concavity_mask(series, cfg.concavity_tol)
        win = cfg.concavity_window or sturm_liouville_length(series.eps, series.c)
        start = None
        for i in range(n):
            if conc[i]:
                if start is None:
                    start = t[i]
                if t[i] - start >= win:
                    first["concavity"] = float(t[i])
                    break
            else:
                start = None
    if not first:
        return Detection(False)
    crit = min(first, key=first.get)
    return Detection(True, crit, first[crit], {"all": first})


def concavity_mask(series, tol=0.0):
    z = series["z"]
    zdd = series.second_difference("z")
    eps, c = series.eps, series.c
    with np.errstate(invalid="ignore"):
        return zdd <= -(1 - c) * eps * eps * z / 4 + tol


def di_y_fraction(series, slack=0.0):
    """Fraction of interior record times where ``y'' >= (1+eps/4) y'^2/y + (1-c) eps y``."""
    y, yd = series["y"], series["ydot"]
    ydd = series.second_difference("y")
    eps, c = series.eps, series.c
    rhs = (1 + eps / 4) * yd * yd / y + (1 - c) * eps * y
    ok = ydd[1:-1] >= rhs[1:-1] - slack * np.abs(rhs[1:-1])
    return float(np.mean(ok)) if ok.size else float("nan"), ydd, rhs


def terminal_concavity(series, window=10):
    """True when the last ``window`` interior second differences of ``z`` are <= 0."""
    zdd = series.second_difference("z")[1:-1]
    if zdd.size < window:
        return False
    return bool(np.all(zdd[-window:] <= 0))


def virial_residual(series):
    """``max |y''/2 - (vel - K0)|`` over interior records (mass-1 K0)."""
    ydd = series.second_difference("y")
    res = ydd / 2 - (series["vel_L2"] - series["K0"])
    return float(np.nanmax(np.abs(res[1:-1])))


def equipartition_monitor(series, window=None):
    """Compare ``d/dt <u|u_t>`` with ``vel - kinetic - mass - (-G0)`` and emit window averages."""
    n = len(series)
    if n < 3:
        return {"residual_max": 0.0, "averages": {}}
    lhs = series.first_difference("bracket")
    rhs = series["vel_L2"] - series["kinetic"] - series["mass_L2"] + series["G0"]
    res = np.abs(lhs - rhs)[1:-1]
    t = series["t"]
    if window is None:
        window = t[-1] - t[0]
    sel = t >= t[-1] - window
    T = max(t[sel][-1] - t[sel][0], 1e-300)

    def mean(x):
        return float(np.trapezoid(x[sel], t[sel]) / T) if sel.sum() > 1 else float(x[-1])

    averages = {"kinetic": mean(series["kinetic"]), "vel_L2": mean(series["vel_L2"]),
                "mass_L2": mean(series["mass_L2"]),
                "G0_plus_F": mean(series["G0"] + series["F"])}
    return {"residual_max": float(np.max(res)), "residual": res, "averages": averages}


def exterior_smallness_check(series, scheme_eps, C_cap=None):
    """Empirical constant in ``ext(R + t) <= C (ext(R) at t=0 + scheme_eps)`` per radius."""
    out = {}
    for i, R in enumerate(series.ext_radii):
        e = series[f"ext_{i}"]
        C = float(np.max(e) / (e[0] + scheme_eps))
        out[R] = C
        if C_cap is not None and C > C_cap:
            raise InvariantViolation(f"exterior energy beyond the cone: C = {C:.3g} > {C_cap}")
    return out


def choose_eps(model, default=0.5):
    """z-diagnostic exponent: ``p - 2`` with ``p = 2.5`` unless the audit allows less."""
    return min(default, admissible_epsilon(model))


# --------------------------------------------------------------------------
# the driver


def evolve(state, model, config, m=None, input_verdict=None, free_model=None):
    """Integrate until ``T_final``, a blowup criterion, or the scattering detector fires."""
    g = state.grid
    cfg = config.validate(g)
    c = model.c
    eps = cfg.eps if cfg.eps is not None else choose_eps(model)
    p = 2.0 + eps
    sl_window = cfg.concavity_window or sturm_liouville_length(eps, c)
    series = DiagnosticsSeries.empty(eps, c, cfg.ext_radii)
    t0 = _time.time()

    u = np.array(state.u, dtype=float)
    v = np.array(state.v, dtype=float)
    v[-1] = 0.0
    t = float(state.time)
    dt = cfg.dt
    rec_every = cfg.record_every
    stepper = Stepper(g, model, cfg.scheme, cfg.mass)
    free_stepper = Stepper(g, model, cfg.scheme, cfg.mass, nonlinear=False)

    row0 = _record(g, model, u, v, t, dt, cfg, eps, c, p, float("nan"))
    series.append(row0)
    norm0 = math.sqrt(row0["norm2"])
    E0 = row0["E"]
    near = False
    if m is not None:
        tol = cfg.energy_tol if cfg.energy_tol is not None else 1e-8 * m
        near = abs(m - E0) <= tol
    detections = []
    verdict, detector = "undecided", ""
    scatter_distance = float("nan")
    notes = []

    # scattering window bookkeeping
    win = None  # dict(start, u, v, dmax, nl)
    next_check = t
    conc_start = None
    steps = 0
    T_end = cfg.T_final

    if norm0 == 0.0:
        verdict, detector = "scattered", "zero_state"
        scatter_distance = 0.0
        detections.append(Detection(True, "zero_state", t, {"distance": 0.0}))

    force = False
    while t < T_end - 1e-12 and verdict == "undecided":
        # nonlinear stiffness control
        if cfg.adaptive and steps % 5 == 0:
            mu = float(np.max(np.abs(u)))
            stiff = math.sqrt(max(float(np.max(model.d2f(np.array([mu])))), 0.0))
            while dt * stiff > cfg.stiffness and dt > cfg.min_dt:
                dt *= 0.5
                rec_every *= 2
                force = True
                stepper.reset()
                free_stepper.reset()
            if dt <= cfg.min_dt:
                notes.append(f"time step collapsed below {cfg.min_dt:g} at t = {t:.6g}")
                break
        try:
            u, v = stepper(u, v, dt)
            if win is not None:
                win["u"], win["v"] = free_stepper(win["u"], win["v"], dt)
        except SaturationError as exc:
            verdict, detector = "blew_up", "saturation"
            detections.append(Detection(True, "saturation", t, {"amplitude": exc.amplitude}))
            break
        t += dt
        steps += 1
        if steps % rec_every and t < T_end - 1e-12 and not force:
            continue
        force = False
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InstabilityError(
                f"non-finite field at t = {t:.6g}; check CFL (dt = {dt:g}, h = {g.h:g})", t)
        fd = float("nan")
        if win is not None:
            fd = _energy_distance(g, u - win["u"], v - win["v"], cfg.mass)
        row = _record(g, model, u, v, t, dt, cfg, eps, c, p, fd)
        series.append(row)

        if cfg.detect_blowup:
            if math.sqrt(row["norm2"]) >= cfg.blowup_factor * norm0:
                verdict, detector = "blew_up", "norm_growth"
                detections.append(Detection(True, "norm_growth", t, {"norm_ratio": math.sqrt(row["norm2"]) / norm0}))
                break
            zdd = series.second_difference("z")[-2] if len(series) >= 3 else np.nan
            if len(series) >= 3:
                zz = series.data["z"][-2]
                if zdd <= -(1 - c) * eps * eps * zz / 4 + cfg.concavity_tol:
                    conc_start = series.data["t"][-2] if conc_start is None else conc_start
                    if series.data["t"][-2] - conc_start >= sl_window:
                        verdict, detector = "blew_up", "concavity"
                        detections.append(Detection(True, "concavity", t, {"window": sl_window}))
                        break
                else:
                    conc_start = None

        if cfg.detect_scatter:
            if win is not None:
                win["dmax"] = max(win["dmax"], fd)
                win["nl"].append((t, row["G0"] + row["F"]))
                win["conc_min"] = min(win["conc_min"], row["conc_radius"])
                if win["dmax"] > cfg.scatter_tol:
                    win = None
                elif t - win["start"] >= cfg.scatter_window - 1e-12:
                    tt, nl = np.array(win["nl"]).T
                    nl_mean = float(np.trapezoid(nl, tt) / (tt[-1] - tt[0]))
                    if win["conc_min"] >= cfg.dispersal_radius and nl_mean <= cfg.nonlinear_tol:
                        verdict, detector = "scattered", "free_flow"
                        scatter_distance = win["dmax"]
                        detections.append(Detection(True, "free_flow", t, {
                            "window_start": win["start"], "distance": win["dmax"],
                            "nonlinear_mean": nl_mean, "conc_radius_min": win["conc_min"]}))
                        break
                    win = None
            if win is None and t >= next_check - 1e-12:
                win = {"start": t, "u": u.copy(), "v": v.copy(), "dmax": 0.0,
                       "nl": [(t, row["G0"] + row["F"])], "conc_min": row["conc_radius"]}
                free_stepper.reset()
                next_check = t + cfg.scatter_check_every

    E = series["E"]
    drift = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300)) if len(series) else 0.0
    rec = RunRecord(verdict=verdict, detector=detector, t_end=t, config=cfg.to_dict(),
                    config_hash=cfg.hash(), scheme=cfg.scheme, seed=cfg.seed, energy_drift=drift,
                    near_threshold=near, input_verdict=input_verdict,
                    scatter_distance=scatter_distance, detections=detections,
                    elapsed=_time.time() - t0, notes=notes,
                    final_state=RadialState(g, u, v, t) if np.all(np.isfinite(u)) else None)
    return rec, series
