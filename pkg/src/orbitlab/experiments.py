"""Runners for each experiment kind.  Each returns ``(payload, series, counts, certificates)``;
the payload holds every reported number and is fully determined by the config."""

from __future__ import annotations

import math
import time

import numpy as np
from scipy import stats

from . import ergodic as erg
from .errors import BudgetExceeded, ConfigError
from .freegroup import ball_size
from .holder import make_bump, parity_vector
from .matgroup import (ELEMENTARY_GENERATORS, SANOV_GENERATORS, CongruenceQuotient, LatticeElement,
                       NormBallFamily, lps_rotations, norm_sq_bound, power_normalization,
                       sl2z_ball_chunks)
from .oracles import SpectralOracle
from .orbits import AnnulusBinner, lattice_orbit_chunks
from .records import make_record
from .spaces import Circle, DeSitter, FiniteCoset, Plane, Sphere2, fibonacci_sphere

DEFAULT_X1 = (1.0, math.sqrt(2) - 1)
DEFAULT_X2 = (math.pi / 2, math.e / 3)


def resolve_generators(spec):
    if spec == "sanov":
        return list(SANOV_GENERATORS)
    if spec == "elementary":
        return list(ELEMENTARY_GENERATORS)
    if spec == "lps5":
        return lps_rotations(5)
    return [LatticeElement(*g) for g in spec]


def _finite_setup(cfg):
    group = cfg.get("group", {})
    N = group.get("modulus", 5)
    gens = resolve_generators(group.get("generators", "sanov"))
    q = CongruenceQuotient(N)
    action = q.left_regular_action(gens)
    if not action.is_transitive():
        raise ConfigError(f"generators do not generate SL2(Z/{N}); the quotient action is not transitive")
    return q, action


def _finite_functions(cfg, space: FiniteCoset, base: int):
    rng = np.random.default_rng(cfg["seed"])
    out = []
    for spec in cfg.get("functions") or [{"type": "indicator"}]:
        kind = spec["type"]
        if kind == "indicator":
            pts = spec.get("points", [base])
            v = np.zeros(space.size)
            v[pts] = 1.0
            out.append((f"indicator{pts}", v))
        elif kind == "random":
            out.append(("random", rng.uniform(-1, 1, size=space.size)))
        else:
            c = int(spec.get("points", [base])[0])
            f = make_bump(space, c, spec.get("radius", 1.0), spec.get("exponent", 1.0))
            out.append((f"bump{c}", f(np.arange(space.size))))
    return out


def _radii(cfg, default_even: int):
    grid = cfg.get("grid", {})
    if grid.get("radii"):
        return sorted(set(grid["radii"]))
    return [2 * n for n in range(1, grid.get("n_even_max", default_even) + 1)]


def _check_budget(n_elements: float, cfg):
    if n_elements > cfg["budget"]:
        raise BudgetExceeded(int(n_elements), cfg["budget"], "group elements")


# ---------------------------------------------------------------------------


def run_free_quotient(cfg):
    q, action = _finite_setup(cfg)
    space = FiniteCoset(action, base=q.index[q.identity()])
    base = space.basepoint()
    radii = _radii(cfg, 8)
    odd = [r - 1 for r in radii if r >= 1]
    _check_budget(ball_size(action.rank, max(radii)), cfg)
    f0 = parity_vector(action)
    op = erg.free_limit_operator(action, f0)
    spec = SpectralOracle(action)
    series, results = {}, {}
    for name, fv in _finite_functions(cfg, space, base):
        entry = {}
        for label, rs in (("even", radii), ("odd", odd)):
            for p in ("sup", 2):
                s = erg.finite_error_series(action, fv, op, rs, p=p, meta={"f": name, "balls": label})
                key = f"{name}_{label}_{'sup' if p == 'sup' else 'L2'}"
                series[key] = s
                entry[f"{label}_{'sup' if p == 'sup' else 'L2'}"] = s.values
        sums = erg.finite_ball_sums(action, fv, radii)
        entry["average_at_base"] = [float(sums[k, base] / ball_size(action.rank, r))
                                    for k, r in enumerate(radii)]
        entry["limit_at_base"] = op.apply(fv, base)
        ns = [r // 2 for r in radii]
        try:
            theta, resid = erg.fit_exponent(ns, entry["even_sup"])
        except Exception:  # too few points for a fit
            theta, resid = float("nan"), float("nan")
        entry["theta_per_n"] = theta
        entry["fit_residual"] = resid
        results[name] = entry
    payload = {
        "radii": radii, "odd_radii": odd, "size": action.size, "rank": action.rank,
        "parity_vector_present": f0 is not None,
        "spectral": {"sigma2": spec.second_singular_value(), "rho0": spec.rho0()},
        "functions": results,
        "summary": {"functions": len(results), "rho0": spec.rho0()},
    }
    counts = {"largest_ball": ball_size(action.rank, max(radii))}
    return payload, series, counts, {"limit": "free_parity" if f0 is not None else "mean"}


def run_free_sphere2(cfg):
    gens = resolve_generators(cfg.get("group", {}).get("generators", "lps5"))
    gens = [np.asarray(g.as_array() if isinstance(g, LatticeElement) else g, float) for g in gens]
    n_even = cfg.get("grid", {}).get("n_even_max", 5)
    _check_budget(ball_size(len(gens), 2 * n_even), cfg)
    sp = cfg.get("space", {})
    grid = fibonacci_sphere(sp.get("grid_size", 1000))
    fspec = (cfg.get("functions") or [{"type": "bump"}])[0]
    center = np.asarray(fspec.get("center", [0.3, 0.5, 0.8]), float)
    center /= np.linalg.norm(center)
    radius = fspec.get("radius", 0.6)
    profile = fspec.get("profile", "c1")
    a = fspec.get("exponent", 1.0)
    S = Sphere2()
    f = make_bump(S, center, radius, a, profile)
    res = erg.sphere_even_ball_errors(gens, center, radius, grid, n_even, f.exact_mean,
                                      scale=f.sup_bound, profile=profile, budget=cfg["budget"])
    theta, resid = erg.fit_exponent(res["n"], res["sup"])
    last = res["sup"][-1]
    series = {"sup": erg.ErrorSeries(res["n"], res["sup"], "sup", {"grid": len(grid)}),
              "L2": erg.ErrorSeries(res["n"], res["l2"], "2", {"grid": len(grid)})}
    # off-grid allowance: Hölder constant times the grid's covering radius
    mesh = math.sqrt(4 / len(grid))
    payload = {
        **res, "theta_per_n": theta, "fit_residual": resid,
        "monotone": all(b < a_ for a_, b in zip(res["sup"], res["sup"][1:])),
        "cauchy_min_within_10pct": bool(min(res["sup"]) >= 0.9 * last),
        "off_grid_bound": f.constant * mesh ** a,
        "mean": f.exact_mean,
        "summary": {"theta_per_n": theta, "final_sup": last},
    }
    return payload, series, {"orbit_points": res["orbit_points"]}, {"bump": f.describe()}


def _lattice_quotient_hist(q: CongruenceQuotient, Ts, budget):
    bounds = np.array([norm_sq_bound(T) for T in Ts], dtype=np.int64)
    inc = np.zeros((len(Ts), q.order), dtype=np.int64)
    total = 0
    for block in sl2z_ball_chunks(norm_sq=int(bounds[-1]), budget=budget):
        nsq = np.sum(block * block, axis=1)
        level = np.searchsorted(bounds, nsq, side="left")
        np.add.at(inc, (level, q.indices_of(block)), 1)
        total += len(block)
    return np.cumsum(inc, axis=0), total


def run_lattice_quotient(cfg):
    group = cfg.get("group", {})
    N = group.get("modulus", 5)
    q = CongruenceQuotient(N)
    Ts = sorted(cfg["grid"].get("T", [2.0 ** k for k in range(3, 9)]))
    _check_budget(6 * Ts[-1] ** 2, cfg)
    hist, total = _lattice_quotient_hist(q, Ts, cfg["budget"])
    # regular action: gamma^{-1} x for gamma = g mod N is g^{-1} x
    mul = np.array([[q.index[q.mul(q.inv(g), x)] for x in q.elements] for g in q.elements])
    gens = resolve_generators(group.get("generators", "elementary"))
    space = FiniteCoset(q.left_regular_action(gens), base=q.index[q.identity()])
    series, results = {}, {}
    ts = [math.log(T) for T in Ts]
    for name, fv in _finite_functions(cfg, space, space.basepoint()):
        mean = float(np.mean(fv))
        sups, l2s = [], []
        for k in range(len(Ts)):
            avg = hist[k] @ fv[mul] / hist[k].sum()
            sups.append(float(np.max(np.abs(avg - mean))))
            l2s.append(float(np.sqrt(np.mean((avg - mean) ** 2))))
        series[f"{name}_sup"] = erg.ErrorSeries(ts, sups, "sup", {"f": name})
        series[f"{name}_L2"] = erg.ErrorSeries(ts, l2s, "2", {"f": name})
        try:
            theta, resid = erg.fit_exponent(ts, sups)
        except Exception:
            theta, resid = float("nan"), float("nan")
        results[name] = {"sup": sups, "L2": l2s, "theta_per_t": theta, "fit_residual": resid}
    payload = {"T": Ts, "t": ts, "ball_counts": hist.sum(axis=1).tolist(), "functions": results,
               "summary": {"largest_ball": int(hist[-1].sum())}}
    return payload, series, {"lattice_points": total}, {}


def _power_V(cfg):
    norm = cfg.get("normalization", {})
    alpha = norm.get("alpha")
    if alpha is None:
        raise ConfigError("plane experiments need normalization.alpha")
    return power_normalization(alpha, norm.get("beta", 1)), alpha, norm.get("beta", 1)


def run_plane_infinite(cfg):
    V, alpha, beta = _power_V(cfg)
    Ts = sorted(cfg.get("grid", {}).get("T", [2.0 ** k for k in range(6, 13)]))
    _check_budget(6 * Ts[-1] ** 2, cfg)
    sp = cfg.get("space", {})
    pts = [tuple(p) for p in sp.get("points", [DEFAULT_X1, DEFAULT_X2])]
    b = sp.get("bins", {})
    binner = AnnulusBinner(b.get("r_in", 0.25), b.get("r_out", 4.0), b.get("n_radial", 8), b.get("n_angular", 8))
    plane = Plane()
    tables = [erg.empirical_limit_density(plane, x, Ts, binner, V, budget=cfg["budget"]) for x in pts]
    first = tables[0]
    chi, df = erg.lebesgue_chi_square(first.counts[-1], binner.areas())
    chi_thr = float(stats.chi2.ppf(0.99, df))
    cauchy = max(t.tv_steps[-1] for t in tables)
    xdep = [erg.total_variation(first.normalized[-1], t.normalized[-1]) for t in tables[1:]]
    c, p = erg.radial_power_fit(first.normalized[-1], binner)
    mass = [float(v) for v in first.normalized.sum(axis=1)]
    payload = {
        "T": Ts, "alpha": alpha, "beta": beta, "points": [list(x) for x in pts],
        "tables": [t.to_dict() for t in tables],
        "chi_square": chi, "chi_square_df": df, "chi_square_99": chi_thr,
        "cauchy_residual": cauchy, "x_dependence_tv": xdep,
        "radial_fit": {"c": c, "p": p},
        "mass_bound": {"values": mass, "max_over_min": max(mass) / min(mass)},
        "summary": {"final_tv": cauchy, "chi_square": chi, "chi_square_99": chi_thr,
                    "x_dependence_tv": xdep, "radial_exponent": p},
    }
    series = {f"tv_x{i}": erg.ErrorSeries([math.log(T) for T in Ts[1:]], t.tv_steps, "tv", {"x": list(pts[i])})
              for i, t in enumerate(tables)}
    counts = {"orbit_points_per_start": _ball_count(Ts[-1]), "starts": len(pts)}
    return payload, series, counts, {"binning": binner.describe(), "normalization": f"t^{beta - 1} e^({alpha} t)"}


def _ball_count(T):
    from .matgroup import count_sl2z_ball
    return count_sl2z_ball(T)


def _level_sums(space, x, Ts, f, budget):
    """sum of f(gamma^{-1} x) and element counts over |gamma| <= T for each T, one pass."""
    bounds = np.array([norm_sq_bound(T) for T in Ts], dtype=np.int64)
    sums = np.zeros(len(Ts))
    counts = np.zeros(len(Ts), dtype=np.int64)
    parts = [[] for _ in Ts]
    for nsq, pts in lattice_orbit_chunks(space, x, Ts[-1], budget=budget):
        level = np.searchsorted(bounds, nsq, side="left")
        vals = f(pts)
        for k in range(len(Ts)):
            sel = level == k
            parts[k].append(math.fsum(vals[sel]))
            counts[k] += int(np.count_nonzero(sel))
    inc = np.array([math.fsum(p) for p in parts])
    sums = np.cumsum(inc)
    return sums, np.cumsum(counts)


def run_boundary_circle(cfg):
    Ts = sorted(cfg.get("grid", {}).get("T", [2.0 ** k for k in range(3, 10)]))
    _check_budget(6 * Ts[-1] ** 2, cfg)
    C = Circle()
    x = np.array(cfg.get("space", {}).get("points", [[1.0]])[0], float)
    fspec = (cfg.get("functions") or [{"type": "bump"}])[0]
    f = make_bump(C, np.array(fspec.get("center", [0.5])), fspec.get("radius", 0.4),
                  fspec.get("exponent", 1.0), fspec.get("profile", "holder"))
    sums, counts = _level_sums(C, x, Ts, f, cfg["budget"])
    avg = (sums / counts).tolist()
    diffs = [abs(b - a) for a, b in zip(avg, avg[1:])]
    payload = {"T": Ts, "averages": avg, "ball_counts": counts.tolist(), "cauchy_steps": diffs,
               "lebesgue_mean": f.exact_mean,
               "summary": {"final_average": avg[-1], "final_step": diffs[-1] if diffs else None}}
    series = {"cauchy": erg.ErrorSeries([math.log(T) for T in Ts[1:]], diffs, "abs", {"x": x.tolist()})}
    return payload, series, {"lattice_points": int(counts[-1])}, {"bump": f.describe()}


def run_desitter(cfg):
    Ts = sorted(cfg.get("grid", {}).get("T", [2.0 ** k for k in range(3, 11)]))
    _check_budget(6 * Ts[-1] ** 2, cfg)
    D = DeSitter()
    sp = cfg.get("space", {})
    x = D.basepoint() if not sp.get("points") else D.renormalize(np.array(sp["points"][0], float))
    r = sp.get("filtration_r", 1.0)
    sums, counts = _level_sums(D, x, Ts, lambda p: D.in_filtration(p, r).astype(float), cfg["budget"])
    ts = np.log(Ts)
    hits = sums
    # log N = log c + alpha t + (beta - 1) log t
    A = np.stack([np.ones_like(ts), ts, np.log(ts)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(np.maximum(hits, 1)), rcond=None)
    slope1 = float(np.polyfit(ts, np.log(np.maximum(hits, 1)), 1)[0])
    payload = {"T": Ts, "returns_to_X_r": hits.tolist(), "ball_counts": counts.tolist(),
               "basepoint": x.tolist(), "filtration_r": r,
               "fit": {"log_c": float(coef[0]), "alpha": float(coef[1]), "beta_minus_1": float(coef[2]),
                       "pure_exponential_alpha": slope1},
               "summary": {"alpha_fit": float(coef[1]), "beta_minus_1_fit": float(coef[2])}}
    return payload, {}, {"lattice_points": int(counts[-1])}, {"form": "x^2+y^2-z^2=1"}


def run_ratio(cfg):
    rc = cfg["ratio"]
    setting = rc.get("setting", "plane")
    if setting == "finite":
        q, action = _finite_setup(cfg)
        radii = _radii(cfg, 8)
        _check_budget(ball_size(action.rank, max(radii)), cfg)
        base = q.index[q.identity()]
        x1, x2 = int(rc.get("x1", base)), int(rc.get("x2", base))
        A1, A2 = rc.get("A1", [0]), rc.get("A2", [1])
        stat = erg.finite_ratio_statistic(action, x1, x2, A1, A2, radii)
        payload = {**stat.to_dict(), "setting": "finite",
                   "summary": {"final_ratio": stat.ratios()[-1]}}
        return payload, {"ratio": stat}, {"largest_ball": ball_size(action.rank, max(radii))}, {}
    Ts = sorted(cfg.get("grid", {}).get("T", [2.0 ** k for k in range(6, 13)]))
    _check_budget(6 * Ts[-1] ** 2, cfg)
    A1, A2 = rc.get("A1", [0.5, 1.0]), rc.get("A2", [2.0, 3.0])
    x1 = rc.get("x1", list(DEFAULT_X1))
    x2 = rc.get("x2", x1)
    stat = erg.lattice_ratio_statistic(Plane(), x1, x2, erg.annulus_indicator(*A1),
                                       erg.annulus_indicator(*A2), Ts, budget=cfg["budget"],
                                       sets_meta={"A1": A1, "A2": A2})
    ratios = stat.ratios()
    fluct = abs(ratios[-1] - ratios[-2]) / ratios[-1] if len(ratios) > 1 else float("nan")
    lebesgue = (A1[1] ** 2 - A1[0] ** 2) / (A2[1] ** 2 - A2[0] ** 2)
    payload = {**stat.to_dict(), "setting": "plane", "final_fluctuation": fluct,
               "lebesgue_ratio": lebesgue,
               "summary": {"final_ratio": ratios[-1], "final_fluctuation": fluct}}
    return payload, {"ratio": stat}, {"orbit_points_per_start": _ball_count(Ts[-1])}, {}


def run_monotonicity_audit(cfg):
    mc = cfg["monotonicity"]
    eps_grid = sorted(mc["eps"])
    T_max = min(float(mc.get("T_max", 200.0)), 200.0)
    _check_budget(6 * T_max ** 2 * len(eps_grid), cfg)
    n_t = mc.get("n_t", 6)
    t_grid = list(np.linspace(math.log(8.0), math.log(T_max), n_t))
    samples = {e: erg.sample_near_identity(e, mc.get("samples", 8), cfg["seed"] + i)
               for i, e in enumerate(eps_grid)}
    res = erg.coarse_monotone_check(NormBallFamily(), eps_grid, samples, t_grid,
                                    kappa_bound=lambda e: math.log1p(e) + 0.5 * math.log(2))
    payload = {**res, "t_grid": t_grid,
               "summary": {"a0": res["a0"], "kappa": [r["kappa"] for r in res["rows"]]}}
    return payload, {}, {"ball_elements": int(6 * T_max ** 2)}, {"kappa_bound": "log(1+eps) + log(2)/2"}


RUNNERS = {
    "free_quotient": run_free_quotient,
    "free_sphere2": run_free_sphere2,
    "lattice_quotient": run_lattice_quotient,
    "plane_infinite": run_plane_infinite,
    "boundary_circle": run_boundary_circle,
    "desitter": run_desitter,
    "ratio": run_ratio,
    "monotonicity_audit": run_monotonicity_audit,
}


def run(cfg: dict) -> tuple[dict, dict]:
    """Execute a validated config; returns (record, series).  Budget overruns propagate."""
    t0 = time.perf_counter()
    payload, series, counts, certs = RUNNERS[cfg["kind"]](cfg)
    timing = {"wall_seconds": time.perf_counter() - t0}
    return make_record(cfg, payload, timing, counts, certificates=certs), series
