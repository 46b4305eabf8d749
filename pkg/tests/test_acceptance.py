"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line."""

import math
import time

import mpmath as mp
import numpy as np
import pytest

from kglab import (K0, KINF, CriticalPower, EnergyMomentum, ScalingPair, SubcriticalPower,
                   closed_form_W, k2_lower_bound_probe, make_grid, minimax_check, sample, shoot,
                   sign_independence_audit, tm_constant, zero_momentum_reduce)
from kglab import lab
from kglab.classifier import K_MINUS, K_PLUS, bump_states
from kglab.config import load_config
from kglab.evolution import EvolveConfig, FreeFlow, evolve, mean_kinetic_split, virial_residual
from kglab.functionals import evaluate
from kglab.ground_state import W_profile
from kglab.nonlinearity import Exp2D

M3 = math.sqrt(3.0) / 4.0 * math.pi ** 2
K32 = ScalingPair(3.0, -2.0)


def test_criterion_01_ground_state_oracle(acceptance):
    t0 = time.time()
    res = shoot(CriticalPower(3), 0.0, make_grid(3, 8192, 20.0))
    elapsed = time.time() - t0
    g = res.Q.grid
    W = closed_form_W(3, g)
    inner = g.radii < g.r_max / 2
    sup = float(np.max(np.abs(res.Q.u - W.u)[inner]))
    m_rel = abs(res.m - M3) / M3
    kin_rel = abs(res.parts.kinetic - 3 * res.m) / (3 * res.m)
    ok = res.Q0 == 1.0 and sup <= 1e-5 and m_rel <= 1e-4 and kin_rel <= 1e-6 and elapsed <= 10
    acceptance(1, ok, f"sup|Q-W| = {sup:.2e}, m rel = {m_rel:.2e}, kinetic/3m rel = {kin_rel:.2e}, "
                      f"{elapsed:.1f} s")
    assert ok


def _closure(res):
    p, c = res.parts, res.c
    vals = {"K_1,0": p.K(K0, c), "K_0,1": p.K(KINF, c), "K_3,-2": p.K(K32, c)}
    return max(abs(v) for v in vals.values()) / res.h1_norm2


def test_criterion_02_nehari_pohozaev_closure(acceptance, gs3, gs_exp2d):
    runs = {
        "critical d=3": gs3,
        "critical d=4": shoot(CriticalPower(4), 0.0, make_grid(4, 4096, 20.0)),
        "subcritical d=3": shoot(SubcriticalPower(p=3.0, d=3, c=1.0), 1.0, make_grid(3, 4001, 30.0)),
        "exp2d": gs_exp2d,
    }
    ratios = {k: _closure(v) for k, v in runs.items()}
    ok = all(r <= 1e-6 for r in ratios.values())
    acceptance(2, ok, "max |K|/||Q||^2_H1: " + ", ".join(f"{k} {v:.1e}" for k, v in ratios.items()))
    assert ok


def test_criterion_03_minimax(acceptance, gs3, exp2d, gs_exp2d):
    r3 = minimax_check(gs3, CriticalPower(3), n_samples=20, seed=0)
    r2 = minimax_check(gs_exp2d, exp2d[0], n_samples=20, seed=0)
    ok = (r3.passed and r2.passed and len(r3.values) == 20 and len(r2.values) == 20
          and r3.min_gap >= -1e-8 and r2.min_gap >= -1e-8)
    acceptance(3, ok, f"min J - m over 20 samples: d=3 {r3.min_gap:.2e}, exp2d {r2.min_gap:.2e}")
    assert ok


def _virial_run(N):
    g = make_grid(3, N, 20.0)
    st = sample(g, lambda r: np.exp(-r ** 2), lambda r: 0.3 * np.exp(-r ** 2))
    cfg = EvolveConfig(dt=0.5 * g.h, T_final=4.0, record_every=1, detect_scatter=False, adaptive=False)
    t0 = time.time()
    rec, series = evolve(st, CriticalPower(3), cfg)
    return rec, virial_residual(series), time.time() - t0


def test_criterion_04_virial_convergence(acceptance):
    out = [_virial_run(N) for N in (401, 801, 1601)]
    res = [r for _, r, _ in out]
    ratios = [res[i] / res[i + 1] for i in range(2)]
    bounded = all(rec.verdict == "undecided" and rec.energy_drift < 1e-3 for rec, _, _ in out)
    slowest = max(t for _, _, t in out)
    ok = bounded and min(ratios) >= 3.5 and slowest <= 60
    acceptance(4, ok, f"residuals {', '.join(f'{r:.2e}' for r in res)}; ratios "
                      f"{', '.join(f'{q:.2f}' for q in ratios)}; slowest {slowest:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def sweep(tmp_path_factory, gs3):
    out = tmp_path_factory.mktemp("sweep")
    cfg = load_config(None, [f"m={gs3.m!r}", "evolve.ext_radii=[1.0]"])
    t0 = time.time()
    rows, check = lab.run_sweep(cfg, out, plots=False, log=lambda *a: None)
    return rows, check, time.time() - t0


@pytest.mark.slow
def test_criterion_05_dichotomy_sweep(acceptance, sweep):
    rows, check, elapsed = sweep
    plus = [r for r in rows if r["class"] == K_PLUS]
    minus = [r for r in rows if r["class"] == K_MINUS]
    fired = all(r["verdict"] == "blew_up" and r["t_end"] < 30.0 for r in minus)
    close = all(r["verdict"] == "scattered" and r["scatter_distance"] <= 1e-3 for r in plus)
    ok = (len(rows) == 11 and check["passed"] and plus and minus and fired and close
          and len(check["sign_flips"]) == 1 and elapsed <= 15 * 60)
    dist = max((r["scatter_distance"] for r in plus), default=float("nan"))
    acceptance(5, ok, f"{len(plus)} K+ scattered (max distance {dist:.1e}), {len(minus)} K- blew up, "
                      f"flip at lam = {check['sign_flips']}, excluded {check['excluded']}, {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_06_blowup_mechanism(acceptance, sweep):
    rows, _, _ = sweep
    minus = [r for r in rows if r["class"] == K_MINUS]
    fr = [r["di_y_fraction"] for r in minus]
    conc = [r["terminal_concavity"] for r in minus]
    ok = bool(minus) and all(f >= 0.95 for f in fr) and all(c is True for c in conc)
    acceptance(6, ok, f"{len(minus)} K- runs, DI y fractions {fr}, terminal concavity {conc}")
    assert ok


def test_criterion_07_k2_lower_bound(acceptance, exp2d, gs_exp2d):
    model, _ = exp2d
    rng = np.random.default_rng(7)
    g = make_grid(2, 801, 20.0)
    pool = []
    # the probe keeps only states with J <= m and K2 >= 0
    while True:
        pool += bump_states(g, 100, rng, amp=(0.05, 1.5), width=(0.3, 3.0), velocity=0.5)
        rep = k2_lower_bound_probe(pool, model, gs_exp2d.m)
        if rep.n_used >= 200 or len(pool) >= 2000:
            break
    ok = rep.n_used >= 200 and rep.passed
    acceptance(7, ok, f"{rep.n_used} states used of {rep.n_total}, min K2/||grad||^2 = {rep.min_ratio:.4f} "
                      f">= 1 - c = {1 - model.c:.4f}, violations {len(rep.violations)}")
    assert ok


def _concentrated_states(n, rng):
    # lam (W_mu - W_mu(rho))_+ with mu rho = 100: mostly K- below threshold
    W = W_profile(3)[0]
    g = make_grid(3, 20001, 40.0)
    out = []
    while len(out) < n:
        mu, lam = rng.uniform(25, 60), rng.uniform(1.1, 1.6)
        rho = 100.0 / mu
        Wr = math.sqrt(mu) * W(mu * rho)
        st = sample(g, lambda r: np.where(r < rho, lam * (math.sqrt(mu) * W(mu * r) - Wr), 0.0))
        if evaluate(st, CriticalPower(3)).E < M3:
            out.append(st)
    return out


def test_criterion_08_sign_independence(acceptance):
    model = CriticalPower(3)
    rng = np.random.default_rng(8)
    g = make_grid(3, 801, 20.0)
    states = _concentrated_states(30, rng)
    while len(states) < 100:
        for s in bump_states(g, 50, rng, amp=(0.05, 2.0), width=(0.2, 2.0), velocity=0.5):
            if evaluate(s, model).E < M3 and len(states) < 100:
                states.append(s)
    rep = sign_independence_audit(states, model, M3, n_pairs=5, seed=8)
    n_minus = len({r["state"] for r in rep.rows if r["sign"] < 0})
    ok = rep.n_states == 100 and rep.passed and len(rep.rows) == 800 and n_minus > 0
    acceptance(8, ok, f"100 states x 8 pairs, {n_minus} states with negative K, "
                      f"{len(rep.disagreements)} disagreements, {len(rep.boundary)} in the dead band")
    assert ok


def test_criterion_09_lorentz_algebra(acceptance):
    rng = np.random.default_rng(9)
    worst = 0.0
    mp.mp.dps = 50
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        P = rng.normal(size=d) * 10 ** rng.uniform(-3, 3)
        E = float(np.linalg.norm(P)) * (1 + 10 ** rng.uniform(-8, 1)) + 1e-300
        _, ep = zero_momentum_reduce(EnergyMomentum(E, tuple(P)))
        ref = mp.sqrt(mp.mpf(E) ** 2 - sum(mp.mpf(float(x)) ** 2 for x in P))
        worst = max(worst, float(abs(ep.E - ref) / ref))
    ok = worst <= 1e-12
    acceptance(9, ok, f"max rel error of E' over 1000 samples = {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_10_exterior_smallness(acceptance, sweep):
    rows, _, _ = sweep
    Cs = [r["exterior_C"] for r in rows if r["verdict"] in ("scattered", "blew_up")]
    ok = bool(Cs) and all(np.isfinite(C) and C <= 2.0 for C in Cs)
    acceptance(10, ok, f"empirical C over {len(Cs)} runs: max {max(Cs):.3f}")
    assert ok


def _quadrature(fl, st, L, per_unit=12, nodes=40):
    x, w = np.polynomial.legendre.leggauss(nodes)
    pieces = int(math.ceil(per_unit * L))
    total = 0.0
    for k in range(pieces):
        a, b = k * L / pieces, (k + 1) * L / pieces
        for xi, wi in zip(x, w):
            u, _ = fl.advance(st.u, st.v, 0.5 * (a + b) + 0.5 * (b - a) * xi)
            total += 0.5 * (b - a) * wi * st.grid.kinetic(u)
    return total


def test_criterion_11_mean_kinetic_split(acceptance):
    rng = np.random.default_rng(11)
    g = make_grid(3, 401, 20.0)
    fl = FreeFlow(g, 1.0)
    worst = 0.0
    states = bump_states(g, 20, rng, amp=(0.1, 1.5), width=(0.3, 2.0), velocity=1.0)
    for st in states:
        for L in (2.0, 5.0):
            split = sum(mean_kinetic_split(st, L))
            ref = _quadrature(fl, st, L)
            worst = max(worst, abs(split - ref) / ref)
    ok = worst <= 1e-8
    acceptance(11, ok, f"max rel difference over 20 states, L in {{2, 5}}: {worst:.1e}")
    assert ok


def test_criterion_12_tm_constant(acceptance):
    t0 = time.time()
    a = tm_constant(Exp2D(kappa0=5.0, lam=0.005))
    b = tm_constant(Exp2D(kappa0=5.0, lam=0.01))
    elapsed = time.time() - t0
    lin = abs(b.value / a.value - 2.0) / 2.0
    ok = lin <= 0.05 and max(a.spread, b.spread) <= 0.01 and a.value < 1 and elapsed <= 300
    acceptance(12, ok, f"c(0.005) = {a.value:.6f}, c(0.01) = {b.value:.6f}, linearity {lin:.1e}, "
                       f"spread {max(a.spread, b.spread):.1e}, {elapsed:.0f} s")
    assert ok
