"""Nonlinearity family: critical power, 2D exponential model, subcritical power.

Every model exposes ``f``, ``f'``, ``f''`` as vectorised functions of the field
amplitude together with the dimension and the mass shift ``c`` of the static
problem.  The exponential model also evaluates its derivatives pre-multiplied
by ``exp(-kappa0 u^2)`` so tail audits never overflow.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, SaturationError

_SERIES_TERMS = 40
# exp(kappa0 u^2) stays below ~1e304
_EXP_ARG_MAX = 700.0


def _exp_tail(x, start, weight=None):
    """sum_{k >= start} w(k) x^k / k! for 0 <= x <= 1 without cancellation."""
    total = np.zeros_like(x)
    term = x ** start / math.factorial(start)
    for k in range(start, start + _SERIES_TERMS):
        total += term * (1.0 if weight is None else weight(k))
        term = term * x / (k + 1)
    return total


class NonlinearityModel:
    kind = "abstract"
    d: int
    c: float

    def f(self, u):
        raise NotImplementedError

    def df(self, u):
        raise NotImplementedError

    def d2f(self, u):
        raise NotImplementedError

    def Df(self, u):
        u = np.asarray(u, dtype=float)
        return u * self.df(u)

    def D_minus(self, u, p):
        """``(D - p) f`` evaluated without cancellation where possible."""
        return self.Df(u) - p * self.f(u)

    def df_scalar(self, u):
        return float(self.df(u))

    def check(self, u):
        """Raise :class:`SaturationError` if ``u`` exceeds the model's amplitude cap."""

    def params(self):
        return {"kind": self.kind, **asdict(self)}

    @property
    def mass_shift(self):
        return self.c


@dataclass(frozen=True)
class CriticalPower(NonlinearityModel):
    """``f(u) = |u|^{2*} / 2*`` with ``2* = 2d / (d - 2)``; no mass shift."""

    d: int = 3
    c: float = 0.0
    kind = "critical_power"

    def __post_init__(self):
        if self.d < 3:
            raise ConfigurationError("critical power needs d >= 3")
        if self.c != 0.0:
            raise ConfigurationError("critical power has mass shift c = 0")

    @property
    def exponent(self):
        return 2.0 * self.d / (self.d - 2)

    def f(self, u):
        q = self.exponent
        return np.abs(u) ** q / q

    def df(self, u):
        q = self.exponent
        u = np.asarray(u, dtype=float)
        return np.abs(u) ** (q - 2) * u

    def d2f(self, u):
        q = self.exponent
        return (q - 1) * np.abs(u) ** (q - 2)

    def Df(self, u):
        return self.exponent * self.f(u)


@dataclass(frozen=True)
class SubcriticalPower(NonlinearityModel):
    """``f(u) = lam |u|^p / p``."""

    p: float = 3.0
    lam: float = 1.0
    d: int = 3
    c: float = 1.0
    kind = "subcritical_power"

    def __post_init__(self):
        if self.p <= 2:
            raise ConfigurationError("power must exceed 2")
        if not 0.0 <= self.c <= 1.0:
            raise ConfigurationError("mass shift must lie in [0, 1]")

    def f(self, u):
        return self.lam * np.abs(u) ** self.p / self.p

    def df(self, u):
        u = np.asarray(u, dtype=float)
        return self.lam * np.abs(u) ** (self.p - 2) * u

    def d2f(self, u):
        return self.lam * (self.p - 1) * np.abs(u) ** (self.p - 2)

    def Df(self, u):
        return self.p * self.f(u)


@dataclass(frozen=True)
class Exp2D(NonlinearityModel):
    """``f(u) = lam (e^{k u^2} - 1 - k u^2 - k^2 u^4 / 2) / (1 + |u|^beta)`` in two dimensions.

    ``p`` is the exponent used by the monotonicity audit, ``u_cap`` the
    amplitude beyond which evaluation raises :class:`SaturationError`.
    """

    kappa0: float = 5.0
    beta: float = 2.0
    lam: float = 0.005
    p: float = 6.0
    c: float = 0.0
    u_cap: float = 30.0
    d: int = 2
    kind = "exp2d"

    def __post_init__(self):
        if self.kappa0 <= 0 or self.lam <= 0:
            raise ConfigurationError("kappa0 and lam must be positive")
        if self.beta < 2:
            raise ConfigurationError("beta must be >= 2")
        if self.d != 2:
            raise ConfigurationError("the exponential model is two-dimensional")
        if not 0.0 <= self.c < 1.0:
            raise ConfigurationError("mass shift must lie in [0, 1)")

    @property
    def cap(self):
        return min(self.u_cap, math.sqrt(_EXP_ARG_MAX / self.kappa0))

    def with_mass_shift(self, c):
        return Exp2D(self.kappa0, self.beta, self.lam, self.p, float(c), self.u_cap)

    def check(self, u):
        peak = float(np.max(np.abs(u))) if np.size(u) else 0.0
        if peak > self.cap:
            raise SaturationError(f"|u| = {peak:.4g} exceeds saturation cap {self.cap:.4g}", peak)

    # scaled building blocks: every quantity carries a factor exp(-x), x = kappa0 u^2
    def _parts(self, u):
        u = np.asarray(u, dtype=float)
        x = self.kappa0 * u * u
        small = x < 1.0
        xs = np.where(small, x, 1.0)
        ex = np.exp(-x)
        # N = e^x - 1 - x - x^2/2, N1 = e^x - 1 - x, N2 = e^x - 1
        N = np.where(small, _exp_tail(xs, 3) * ex, -np.expm1(-x) - ex * (x + 0.5 * x * x))
        N1 = np.where(small, _exp_tail(xs, 2) * ex, -np.expm1(-x) - ex * x)
        N2 = -np.expm1(-x)
        au = np.abs(u)
        hden = 1.0 + au ** self.beta
        return u, x, au, hden, N, N1, N2

    def scaled(self, u):
        """``e^{-kappa0 u^2}`` times ``(f, f', f'')``."""
        u, x, au, hden, N, N1, N2 = self._parts(u)
        k, b, lam = self.kappa0, self.beta, self.lam
        g, g1 = N, 2 * k * u * N1
        g2 = 2 * k * N1 + 4 * k * k * u * u * N2
        h1 = b * au ** (b - 2) * u
        h2 = b * (b - 1) * au ** (b - 2)
        f = lam * g / hden
        f1 = lam * (g1 * hden - g * h1) / hden ** 2
        f2 = lam * ((g2 * hden - g * h2) / hden ** 2 - 2 * h1 * (g1 * hden - g * h1) / hden ** 3)
        return f, f1, f2

    def scaled_D_minus(self, u, p):
        """``e^{-kappa0 u^2} (D - p) f`` with the small-amplitude series kept exact."""
        u, x, au, hden, N, N1, N2 = self._parts(u)
        small = x < 1.0
        xs = np.where(small, x, 1.0)
        ex = np.exp(-x)
        # DN - pN = sum (2k - p) x^k / k!
        big = 2 * x * N1 - p * N
        series = _exp_tail(xs, 3, weight=lambda k: 2 * k - p) * ex
        DpN = np.where(small, series, big)
        hD = self.beta * au ** self.beta / hden
        return self.lam * (DpN - N * hD) / hden

    def _unscale(self, u, values):
        self.check(u)
        x = self.kappa0 * np.asarray(u, dtype=float) ** 2
        return values * np.exp(x)

    def f(self, u):
        return self._unscale(u, self.scaled(u)[0])

    def df(self, u):
        return self._unscale(u, self.scaled(u)[1])

    def d2f(self, u):
        return self._unscale(u, self.scaled(u)[2])

    def D_minus(self, u, p):
        return self._unscale(u, self.scaled_D_minus(u, p))

    def df_scalar(self, u):
        """Fast ``f'`` for a single float (ODE right-hand sides)."""
        k = self.kappa0
        x = k * u * u
        if abs(u) > self.cap:
            raise SaturationError(f"|u| = {abs(u):.4g} exceeds saturation cap {self.cap:.4g}", abs(u))
        if x < 0.1:
            t = x ** 3 / 6.0
            g = 0.0
            for j in range(3, 16):
                g += t
                t *= x / (j + 1)
            n1 = g + 0.5 * x * x
        else:
            n1 = math.expm1(x) - x
            g = n1 - 0.5 * x * x
        au = abs(u)
        h = 1.0 + au ** self.beta
        h1 = self.beta * au ** (self.beta - 2) * u
        return self.lam * (2 * k * u * n1 * h - g * h1) / (h * h)

    def bundle(self, u):
        """``(f, f', f'')`` in one pass."""
        self.check(u)
        f, f1, f2 = self.scaled(u)
        e = np.exp(self.kappa0 * np.asarray(u, dtype=float) ** 2)
        return f * e, f1 * e, f2 * e


def f_bundle(model, u):
    """Return ``(f, f', Df, G2-density)`` with ``G2-density = d (Df - 2 f)``."""
    u = np.asarray(u, dtype=float)
    model.check(u)
    if isinstance(model, Exp2D):
        f, f1, _ = model.bundle(u)
        Df = u * f1
        g2 = model.d * model.D_minus(u, 2.0)
    else:
        f, f1 = model.f(u), model.df(u)
        Df = model.Df(u)
        g2 = model.d * (Df - 2.0 * f)
    if np.ndim(u) == 0:
        return float(f), float(f1), float(Df), float(g2)
    return f, f1, Df, g2


def make_model(spec):
    """Build a model from a plain mapping (config files, JSON records)."""
    spec = dict(spec)
    kind = spec.pop("kind")
    spec.pop("mass_shift_source", None)
    if kind == "critical_power":
        return CriticalPower(d=int(spec.get("d", 3)))
    if kind == "subcritical_power":
        return SubcriticalPower(p=float(spec.get("p", 3.0)), lam=float(spec.get("lam", 1.0)),
                                d=int(spec.get("d", 3)), c=float(spec.get("c", 1.0)))
    if kind == "exp2d":
        keys = ("kappa0", "beta", "lam", "p", "c", "u_cap")
        return Exp2D(**{k: float(spec[k]) for k in keys if k in spec})
    raise ConfigurationError(f"unknown nonlinearity kind {kind!r}")


# --------------------------------------------------------------------------
# assumption audit


@dataclass
class AuditReport:
    applicable: bool
    exponent: float | None = None
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    largest_sample: float | None = None

    @property
    def passed(self):
        return self.applicable and all(self.checks.values())

    def failures(self):
        return [k for k, ok in self.checks.items() if not ok]

    def to_dict(self):
        return {"applicable": self.applicable, "passed": self.passed, "exponent": self.exponent,
                "checks": dict(self.checks), "details": dict(self.details),
                "largest_sample": self.largest_sample}


def _scaled_family(model, u):
    """(f, f', f'', Df, (D-2)(D-p) f, D^2 f) all times exp(-kappa0 u^2) for Exp2D, plain otherwise."""
    if isinstance(model, Exp2D):
        f, f1, f2 = model.scaled(u)
        Dp = model.scaled_D_minus(u, model.p)
        p = model.p
    else:
        f, f1, f2 = model.f(u), model.df(u), model.d2f(u)
        p = getattr(model, "p", None)
        Dp = model.Df(u) - p * f
    Df = u * f1
    # (D-2)(D-p)f = u^2 f'' - (p+1) u f' + 2 p f
    D2Dp = u * u * f2 - (p + 1) * Df + 2 * p * f
    D2f = Df + u * u * f2
    return f, f1, f2, Df, Dp, D2Dp, D2f


def assumption_audit(model, u_samples, tail_fraction=0.25, rel_tol=1e-12):
    """Sampled check of the 2D exponential-growth assumptions on ``model``.

    The limits at ``|u| -> infinity`` cannot be certified from finitely many
    samples; tail conditions are judged on the largest ``tail_fraction`` of the
    samples and the largest sample is reported.
    """
    if isinstance(model, CriticalPower) or model.d != 2:
        return AuditReport(applicable=False)
    u = np.sort(np.abs(np.asarray(u_samples, dtype=float)))
    u = u[u > 0]
    if isinstance(model, Exp2D):
        u = u[u <= model.cap]
    p = float(model.p)
    rep = AuditReport(applicable=True, exponent=p, largest_sample=float(u[-1]))
    f, f1, f2, Df, Dp, D2Dp, D2f = _scaled_family(model, u)
    scale = np.maximum(np.abs(Df), np.abs(f)) * rel_tol

    rep.checks["exponent_above_4"] = p > 4
    rep.checks["D_minus_p_nonneg"] = bool(np.all(Dp >= -scale))
    rep.checks["D2_D_minus_p_nonneg"] = bool(np.all(D2Dp >= -4 * p * scale))
    rep.details["min_D_minus_p"] = float(np.min(Dp))
    rep.details["min_D2_D_minus_p"] = float(np.min(D2Dp))

    # f(0) = f'(0) = f''(0) = 0
    z = np.array([0.0])
    rep.checks["vanishing_at_zero"] = bool(np.all(np.abs(np.concatenate(
        [np.atleast_1d(model.f(z)), np.atleast_1d(model.df(z)), np.atleast_1d(model.d2f(z))])) == 0.0))

    # limsup_{u->0} |u|^{-p} |D^2 f| < inf : ratio must stay bounded as u decreases
    small = u[u <= min(1e-1, u[len(u) // 4])]
    if small.size >= 4:
        if isinstance(model, Exp2D):
            ex = np.exp(model.kappa0 * small ** 2)
            _, g1, g2 = model.scaled(small)
            ratio = np.abs(small * g1 + small ** 2 * g2) * ex / small ** p
        else:
            ratio = np.abs(small * model.df(small) + small ** 2 * model.d2f(small)) / small ** p
        head = ratio[: max(2, small.size // 4)]
        rep.details["small_u_ratio_max"] = float(np.max(ratio))
        rep.checks["decay_at_zero"] = bool(np.all(np.isfinite(ratio)) and np.max(head) <= 2.0 * np.median(ratio) + 1e-300)
    else:
        rep.checks["decay_at_zero"] = False

    n_tail = max(4, int(len(u) * tail_fraction))
    tail = u[-n_tail:]
    if isinstance(model, Exp2D):
        k0 = model.kappa0
        ft, f1t, f2t = model.scaled(tail)
        Dft = tail * f1t
        ratio = Dft / ft
        rep.checks["Df_over_f_grows"] = bool(np.all(np.diff(ratio) > 0))
        rep.details["Df_over_f_last"] = float(ratio[-1])
        # kappa > kappa0: e^{-kappa u^2} f'' -> 0
        hi = np.exp(-0.1 * k0 * tail ** 2) * f2t
        rep.checks["f2_decay_above_kappa0"] = bool(hi[-1] < hi[0] and np.all(np.diff(hi[len(hi) // 2:]) < 0))
        # kappa < kappa0: e^{-kappa u^2} f -> inf
        lo = np.exp(0.1 * k0 * tail ** 2) * ft
        rep.checks["f_growth_below_kappa0"] = bool(np.all(np.diff(lo[len(lo) // 2:]) > 0))
        # e^{-kappa0 u^2} Df bounded on the tail
        bounded = np.abs(Dft)
        last_q = bounded[-max(2, n_tail // 4):]
        rep.details["scaled_Df_tail_max"] = float(np.max(bounded))
        rep.checks["Df_bound"] = bool(np.all(np.isfinite(bounded)) and np.max(last_q) <= 1.5 * np.max(bounded[: n_tail // 2]) + 1e-300)
    else:
        # power models never grow exponentially
        rep.checks["Df_over_f_grows"] = False
        rep.checks["f2_decay_above_kappa0"] = True
        rep.checks["f_growth_below_kappa0"] = False
        rep.checks["Df_bound"] = True
    return rep


def admissible_epsilon(model, u_samples=None, eps_grid=None):
    """Largest ``eps`` in the grid with ``(D - 4/(2-eps)) f >= 0`` and ``(D-2)^2 f >= 0`` on samples."""
    if isinstance(model, CriticalPower):
        return 2.0 - 4.0 / model.exponent
    if isinstance(model, SubcriticalPower):
        return 2.0 - 4.0 / model.p
    if u_samples is None:
        u_samples = np.logspace(-3, math.log10(model.cap * 0.999), 400)
    if eps_grid is None:
        eps_grid = np.linspace(0.01, 1.99, 199)
    u = np.asarray(u_samples, dtype=float)
    f, f1, f2 = model.scaled(u)
    Df = u * f1
    D2f = Df + u * u * f2
    # (D-2)^2 f = D^2 f - 4 Df + 4 f
    if np.any(D2f - 4 * Df + 4 * f < -1e-12 * np.abs(D2f)):
        return 0.0
    best = 0.0
    for eps in eps_grid:
        if np.all(model.scaled_D_minus(u, 4.0 / (2.0 - eps)) >= -1e-12 * np.abs(Df)):
            best = float(eps)
        else:
            break
    return best
