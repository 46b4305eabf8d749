"""Experiment runner behind the command line: ground state, classification,
evolution, sweeps and audits.  Every command reads a config mapping (see
:mod:`kglab.config`) and writes its artifacts under the output directory.
"""

from __future__ import annotations

import copy
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import plotting
from .classifier import (BOUNDARY, K_MINUS, K_PLUS, EnergyMomentum, bump_states, classify,
                         lorentz_boost, sign_independence_audit, zero_momentum_reduce)
from .config import config_hash, dump, get_path, set_path, sweep_values
from .errors import ConfigurationError, DomainError, KGLabError
from .evolution import (EvolveConfig, di_y_fraction, exterior_smallness_check, mean_kinetic_split,
                        terminal_concavity)
from .evolution import evolve as _evolve
from .functionals import evaluate, write_rows
from .ground_state import TMConfig, W_profile, minimax_check, shoot, tm_constant
from .grid import make_grid, sample, zero_state
from .io import load_state, read_table
from .nonlinearity import CriticalPower, Exp2D, assumption_audit, make_model

GS_JSON, GS_CSV = "groundstate.json", "groundstate.csv"


def base_model(cfg):
    spec = dict(cfg["model"])
    if "kind" not in spec:
        raise ConfigurationError("model.kind is required")
    return make_model(spec)


def _model_key(model):
    return {"kind": type(model).__name__, **{k: v for k, v in model.params().items() if k != "c"}}


# --------------------------------------------------------------------------
# ground state


def run_groundstate(cfg, out, plots=True, log=print):
    model = base_model(cfg)
    gcfg = cfg["groundstate"]
    tm_info = None
    if cfg.get("mass_shift") == "computed":
        if not isinstance(model, Exp2D):
            raise ConfigurationError("a computed mass shift needs the exp2d model")
        tm = tm_constant(model, TMConfig(seed=int(cfg.get("seed", 0)), **cfg.get("tm", {})))
        if not tm.value < 1.0:
            raise DomainError(f"computed mass shift {tm.value:.6g} is not below 1")
        model = model.with_mass_shift(tm.value)
        tm_info = tm.to_dict()
    grid = make_grid(model.d, int(gcfg["N"]), float(gcfg["r_max"]))
    res = shoot(model, model.c, grid, bracket=tuple(gcfg["bracket"]), rng_seed=int(cfg.get("seed", 0)))
    n_mm = int(gcfg.get("minimax_samples", 0))
    mm = minimax_check(res, model, n_mm, seed=int(cfg.get("seed", 0))) if n_mm else None
    info = res.to_dict()
    info["model"] = model.params() | {"kind": type(model).__name__}
    info["model_key"] = _model_key(model)
    info["config_hash"] = config_hash(cfg)
    info["minimax_min_gap"] = mm.min_gap if mm else None
    info["tm"] = tm_info
    info["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(out / GS_JSON, "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True, default=float)
    write_rows(out / GS_CSV, [{"r": r, "u": u, "v": 0.0} for r, u in zip(grid.radii, res.Q.u)],
               ["r", "u", "v"])
    if plots:
        plotting.plot_profile(grid.radii, res.Q.u, out / "groundstate.png",
                              r_max=min(grid.r_max, 10 * max(res.profile.r_core, 0.5)))
    log(f"m = {res.m:.12g}")
    log(f"c = {res.c:.12g}")
    log(f"||grad Q||^2 / d = {res.parts.kinetic / model.d:.12g}")
    log(f"Q(0) = {res.Q0:.12g}")
    log(f"grid residual = {res.residual_Linf:.3e}, profile residual = {res.profile_residual:.3e}")
    if res.profile.r_core < 4 * grid.h:
        log(f"note: core radius {res.profile.r_core:.2e} is below 4 h = {4 * grid.h:.2e}; grid values "
            "are under-resolved near r = 0, m and the K-values come from the profile quadrature")
    log("nehari: " + ", ".join(f"{k} = {v:.3e}" for k, v in res.nehari.items()))
    if mm:
        log(f"minimax min gap over {n_mm} samples = {mm.min_gap:.3e}")
    return res, info


def threshold(cfg, out):
    """``(m, c)`` from the config or the cached ground state."""
    model = base_model(cfg)
    if cfg.get("m") is not None and cfg.get("mass_shift") != "computed":
        return float(cfg["m"]), model.c, None
    path = Path(out) / GS_JSON
    if not path.exists():
        raise ConfigurationError(
            f"no ground state at {path}; run `kglab groundstate` with this config first")
    with open(path) as fh:
        info = json.load(fh)
    if info.get("model_key") != _model_key(model):
        raise ConfigurationError(f"cached ground state at {path} is for a different model; rerun groundstate")
    return float(info["m"]), float(info["c"]), info


def model_for(cfg, c):
    spec = dict(cfg["model"])
    if spec.get("kind") != "critical_power":
        spec["c"] = c
    return make_model(spec)


# --------------------------------------------------------------------------
# initial data


def _ground_profile(model, out):
    """Callable radial profile of the ground state (closed form when available)."""
    if isinstance(model, CriticalPower) and model.c == 0:
        return W_profile(model.d)[0]
    path = Path(out) / GS_CSV
    if not path.exists():
        raise ConfigurationError(f"no ground-state profile at {path}; run `kglab groundstate` first")
    cols = read_table(path)
    r, u = cols["r"], cols["u"]
    return lambda x: np.interp(x, r, u, right=0.0)


def make_state(cfg, model, out):
    s = cfg["state"]
    kind = s.get("kind", "zero")
    d = model.d
    grid = make_grid(d, int(s["N"]), float(s["r_max"]))
    if kind == "zero":
        return zero_state(grid)
    if kind == "csv":
        return load_state(Path(s["path"]), grid)
    if kind == "bump":
        A, w = float(s.get("amplitude", 1.0)), float(s.get("width", 1.0))
        return sample(grid, lambda r: np.where(r < grid.r_max, A * np.exp(-(r / w) ** 2), 0.0))
    lam, mu = float(s.get("lam", 1.0)), float(s.get("mu", 1.0))
    Q = _ground_profile(model, out)
    # dilation keeping ||grad Q|| fixed in the critical case
    sc = mu ** ((d - 2) / 2.0)

    def Qmu(r):
        return sc * Q(mu * np.asarray(r))

    if kind == "ground_state":
        return sample(grid, lambda r: np.where(r < grid.r_max, lam * Qmu(r), 0.0))
    if kind == "truncated_ground_state":
        rho = float(s["rho"])
        if not 0 < rho < grid.r_max:
            raise ConfigurationError(f"state.rho must lie in (0, r_max), got {rho}")
        edge = float(Qmu(rho))
        return sample(grid, lambda r: np.where(r < rho, lam * (Qmu(r) - edge), 0.0))
    raise ConfigurationError(f"unknown state kind {kind!r}")


# --------------------------------------------------------------------------
# classification


def run_classify(cfg, out, state_path=None, log=print):
    m, c, _ = threshold(cfg, out)
    model = model_for(cfg, c)
    if state_path is not None:
        g = make_grid(model.d, int(cfg["state"]["N"]), float(cfg["state"]["r_max"]))
        state = load_state(state_path, g)
    else:
        state = make_state(cfg, model, out)
    v = classify(state, model, m)
    with open(out / "verdict.json", "w") as fh:
        fh.write(json.dumps(v.to_dict(), indent=2, sort_keys=True))
    write_rows(out / "K_values.csv", [{"pair": k, "K": val} for k, val in v.K_values.items()],
               ["pair", "K"])
    log(f"verdict: {v.set}")
    log(f"E = {v.E:.10g}, m = {m:.10g}, m - E = {v.energy_margin:.6g}")
    for k, val in v.K_values.items():
        log(f"  {k:>6s} = {val: .6e}")
    return v


# --------------------------------------------------------------------------
# evolution


def evolve_config(cfg, grid):
    ev = dict(cfg.get("evolve") or {})
    names = {f.name for f in fields(EvolveConfig)}
    bad = set(ev) - names
    if bad:
        raise ConfigurationError(f"unknown evolve keys {sorted(bad)}")
    if ev.get("dt") is None:
        ev["dt"] = 0.5 * grid.h
    if "ext_radii" in ev:
        ev["ext_radii"] = tuple(float(x) for x in ev["ext_radii"])
    ev.setdefault("seed", int(cfg.get("seed", 0)))
    return EvolveConfig(**ev).validate(grid)


def _write_run(rec, series, d, plots, title):
    series.to_csv(d / "series.csv")
    pd = plotting.downsample(series)
    write_rows(d / "plot_data.csv",
               [{k: pd[k][i] for k in pd} for i in range(len(pd["t"]))], list(pd))
    if plots and len(series) > 1:
        plotting.plot_series(series, d / "series.png", title)
    rec.series_path = str(d / "series.csv")


def run_point(cfg, d, m, c, plots=True, gate=True, gs_dir=None):
    """Classify then (unless gated out) evolve one configuration; returns a summary row."""
    d = Path(d)
    d.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    rec_path = d / "record.json"
    if rec_path.exists():
        with open(rec_path) as fh:
            old = json.load(fh)
        if old.get("config_hash") == h and "row" in old:
            return old["row"]
    model = model_for(cfg, c)
    state = make_state(cfg, model, gs_dir if gs_dir is not None else d.parent)
    v = classify(state, model, m)
    row = {"E": v.E, "E_minus_m": v.E - m, "K2": v.K_values["K2"],
           "K2_sign": "+" if v.K_values["K2"] > 0 else ("-" if v.K_values["K2"] < 0 else "0"),
           "class": v.set, "verdict": "not_run", "detector": "", "t_end": 0.0,
           "scatter_distance": float("nan"), "near_threshold": v.set == BOUNDARY,
           "energy_drift": float("nan"), "di_y_fraction": float("nan"),
           "terminal_concavity": "", "exterior_C": float("nan"), "error": ""}
    out = {"config_hash": h, "verdict": v.to_dict()}
    if not gate or v.set in (K_PLUS, K_MINUS, BOUNDARY):
        ecfg = evolve_config(cfg, state.grid)
        rec, series = _evolve(state, model, ecfg, m=m, input_verdict=v.set)
        rec.near_threshold = rec.near_threshold or v.set == BOUNDARY
        _write_run(rec, series, d, plots, f"{v.set}: {rec.verdict}")
        row.update(verdict=rec.verdict, detector=rec.detector, t_end=rec.t_end,
                   scatter_distance=rec.scatter_distance, near_threshold=rec.near_threshold,
                   energy_drift=rec.energy_drift)
        if rec.verdict == "blew_up" and len(series) >= 3:
            row["di_y_fraction"] = di_y_fraction(series)[0]
            row["terminal_concavity"] = terminal_concavity(series)
        if series.ext_radii:
            E = series["E"]
            # the record that trips a blowup detector is not resolved by the grid
            if rec.verdict == "blew_up" and E.size > 2:
                E = E[:-1]
            scheme_eps = float(np.max(np.abs(E - E[0])))
            row["exterior_C"] = max(exterior_smallness_check(series, scheme_eps).values())
        out["run"] = rec.to_dict()
    out["row"] = row
    with open(rec_path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True, default=float)
    return row


def run_evolve(cfg, out, plots=True, log=print):
    m, c, _ = threshold(cfg, out)
    d = out / f"evolve_{config_hash(cfg)}"
    rec_path = d / "record.json"
    if rec_path.exists():
        rec_path.unlink()
    row = run_point(cfg, d, m, c, plots=plots, gate=False, gs_dir=out)
    dump(cfg, d / "config.yaml")
    log(f"input: {row['class']} (E - m = {row['E_minus_m']:.4g})")
    log(f"verdict: {row['verdict']} by {row['detector'] or '-'} at t = {row['t_end']:.6g}")
    log(f"energy drift = {row['energy_drift']:.3e}; outputs in {d}")
    return row


# --------------------------------------------------------------------------
# sweeps


def _point_safe(args):
    cfg, d, m, c, plots, gs_dir = args
    try:
        return run_point(cfg, d, m, c, plots=plots, gs_dir=gs_dir)
    except KGLabError as exc:
        return {"verdict": "error", "error": f"{type(exc).__name__}: {exc}"}


def run_sweep(cfg, out, plots=True, workers=None, log=print):
    axis, values = sweep_values(cfg)
    get_path(cfg, axis)
    m, c, _ = threshold(cfg, out)
    name = axis.split(".")[-1]
    root = out / f"sweep_{config_hash(cfg)}"
    root.mkdir(parents=True, exist_ok=True)
    dump(cfg, root / "config.yaml")
    jobs = []
    for i, val in enumerate(values):
        pc = set_path(copy.deepcopy(cfg), axis, val)
        pc.pop("sweep", None)
        jobs.append((pc, root / f"point_{i:03d}", m, c, plots, out))
    n_workers = max(1, min(int(workers or cfg.get("workers", 1)), len(jobs), os.cpu_count() or 1))
    t0 = time.time()
    if n_workers == 1:
        results = [_point_safe(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            results = list(ex.map(_point_safe, jobs))
    rows = []
    for val, (_, d, *_), res in zip(values, jobs, results):
        rows.append({name: val, **res, "dir": str(d.name)})
    rows.sort(key=lambda r: r[name])
    cols = [name, "E", "E_minus_m", "K2", "K2_sign", "class", "verdict", "detector", "t_end",
            "scatter_distance", "near_threshold", "energy_drift", "di_y_fraction",
            "terminal_concavity", "exterior_C", "error", "dir"]
    write_rows(root / "summary.csv", rows, cols)
    if plots:
        plotting.plot_sweep(rows, root / "summary.png", name)
    check = sweep_consistency(rows, name)
    with open(root / "consistency.json", "w") as fh:
        json.dump(check, fh, indent=2, sort_keys=True, default=float)
    for r in rows:
        log(f"{name} = {r[name]:<8g} {r.get('class', ''):>20s}  {r.get('verdict', ''):>10s}  "
            f"E-m = {float(r.get('E_minus_m', math.nan)):+.4f}  K2 {r.get('K2_sign', '')}  {r.get('error', '')}")
    log(f"consistent: {check['passed']} ({time.time() - t0:.1f} s); summary in {root / 'summary.csv'}")
    return rows, check


def sweep_consistency(rows, name="lam", scatter_tol=1e-3):
    """Verdicts against K2 signs on the evolved, non-flagged rows, ordered by parameter."""
    rows = sorted(rows, key=lambda r: float(r[name]))
    used = [r for r in rows if r.get("class") in (K_PLUS, K_MINUS) and not _truthy(r.get("near_threshold"))]
    want = {K_PLUS: "scattered", K_MINUS: "blew_up"}
    bad = []
    for r in used:
        ok = r.get("verdict") == want[r["class"]]
        if ok and r["class"] == K_PLUS:
            ok = float(r.get("scatter_distance", math.inf)) <= scatter_tol
        if not ok:
            bad.append(float(r[name]))
    signs = [r["K2_sign"] for r in used]
    verdicts = [r.get("verdict") for r in used]
    s_flips = [i for i in range(1, len(signs)) if signs[i] != signs[i - 1]]
    v_flips = [i for i in range(1, len(verdicts)) if verdicts[i] != verdicts[i - 1]]
    passed = bool(used) and not bad and len(s_flips) <= 1 and s_flips == v_flips
    return {"passed": passed, "n_used": len(used), "mismatched": bad,
            "sign_flips": [float(used[i][name]) for i in s_flips],
            "verdict_flips": [float(used[i][name]) for i in v_flips],
            "excluded": [float(r[name]) for r in rows if r not in used]}


def _truthy(x):
    return x is True or str(x).lower() in ("true", "1")


# --------------------------------------------------------------------------
# audit


def run_audit(cfg, out, log=print):
    """Assumption audit of the model plus quick invariant suites; returns a report dict."""
    model = base_model(cfg)
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    rep = {"model": model.params() | {"kind": type(model).__name__}}
    if isinstance(model, Exp2D):
        u = np.linspace(1e-3, 0.98 * model.cap, 4000)
        a = assumption_audit(model, u)
        rep["assumptions"] = a.to_dict()
        log(f"assumption audit: {'pass' if a.passed else 'FAIL ' + ', '.join(a.failures())}")
    else:
        rep["assumptions"] = {"applicable": False}
        log("assumption audit: not applicable (power nonlinearity)")

    # Lorentz algebra
    errs = []
    for _ in range(200):
        d = 1 + int(rng.integers(0, 3))
        P = rng.normal(size=d)
        E = np.linalg.norm(P) * (1 + rng.uniform(1e-3, 2))
        _, ep = zero_momentum_reduce(EnergyMomentum(E, P))
        errs.append(abs(ep.E - math.sqrt(E * E - P @ P)) / E)
        v = rng.uniform(-0.9, 0.9)
        back = lorentz_boost(lorentz_boost(EnergyMomentum(E, P[:1]), [v]), [-v])
        errs.append(abs(back.E - E) / E)
    rep["lorentz_max_rel_error"] = float(max(errs))
    log(f"lorentz algebra: max rel error {rep['lorentz_max_rel_error']:.2e}")

    # mean-kinetic split against time quadrature
    g = make_grid(model.d, 401, 20.0)
    st = bump_states(g, 1, rng, amp=(0.5, 1.0), velocity=1.0)[0]
    split = mean_kinetic_split(st, 2.0)
    rep["mean_kinetic_split"] = {"fwd": split[0], "bwd": split[1], "cross": split[2]}
    log(f"mean-kinetic split: fwd {split[0]:.4g}, bwd {split[1]:.4g}, cross {split[2]:.3g}")

    # sign independence on small states, when a threshold is known
    try:
        m, c, _ = threshold(cfg, out)
    except ConfigurationError:
        m = None
    if m is not None:
        mod = model_for(cfg, c)
        g = make_grid(mod.d, 801, 20.0)
        states = [s for s in bump_states(g, 60, rng, amp=(0.05, 1.5)) if evaluate(s, mod).E < m]
        sa = sign_independence_audit(states, mod, m, 5, int(cfg.get("seed", 0)))
        sa.to_csv(out / "sign_audit.csv")
        rep["sign_independence"] = {"states": sa.n_states, "disagreements": sa.disagreements,
                                    "boundary": sa.boundary}
        log(f"sign independence: {sa.n_states} states, {len(sa.disagreements)} disagreements")
    with open(out / "audit.json", "w") as fh:
        json.dump(rep, fh, indent=2, sort_keys=True, default=float)
    rep["passed"] = (rep["assumptions"].get("passed", True) is not False
                     and rep["lorentz_max_rel_error"] < 1e-12
                     and not rep.get("sign_independence", {}).get("disagreements"))
    return rep
