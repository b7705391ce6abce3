"""Ball averages, limit operators, error series, rate predictors and audits."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, FitError, InvariantViolation, UndefinedRegime
from .freegroup import DEFAULT_BUDGET, FiniteAction, ball_size, sphere_size
from .holder import TestFunction
from .matgroup import NormBallFamily, count_sl2z_balls, sl2z_ball_array
from .orbits import free_orbit, inverse_images, lattice_orbit_chunks
from .spaces import FiniteCoset, GSpace, Plane, Sphere2

# ---------------------------------------------------------------------------
# group sources


@dataclass(frozen=True)
class WordBall:
    """Word-metric balls B_n of F_r acting through a finite action or matrices."""

    rank: int
    action: FiniteAction | None = None
    matrices: tuple | None = None

    def size(self, n: int) -> int:
        return ball_size(self.rank, int(n))


@dataclass
class BallAverageSpec:
    """Group source, space, normalisation and time grid of an averaging experiment.

    ``normalization`` is ``"count"`` (V = #B_t) or a callable ``t -> V(t)``.
    For word balls t is the integer radius; for norm balls t = log T.
    """

    group: WordBall | NormBallFamily
    space: GSpace
    times: Sequence[float]
    normalization: str | Callable = "count"
    budget: int | None = DEFAULT_BUDGET

    def __post_init__(self):
        ts = list(self.times)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("time grid must be strictly increasing")
        if self.budget is not None and ts:
            est = self.estimated_size(ts[-1])
            if est > self.budget:
                raise ConfigError(f"largest ball (~{est:.3g} elements) exceeds the budget {self.budget}")

    def estimated_size(self, t) -> float:
        if isinstance(self.group, WordBall):
            return float(self.group.size(t))
        return 6.0 * math.exp(2 * t)

    def count(self, t) -> float:
        if isinstance(self.group, WordBall):
            return float(self.group.size(t))
        return float(self.group.count(t))

    def V(self, t) -> float:
        v = self.count(t) if self.normalization == "count" else float(self.normalization(t))
        if not v > 0:
            raise ConfigError(f"normalisation V({t}) = {v} is not positive")
        return v


def _fvalues(f, pts) -> np.ndarray:
    return np.asarray(f(pts), dtype=float)


def finite_ball_sums(action: FiniteAction, fvals, radii: Sequence[int]) -> np.ndarray:
    """``out[k, x] = sum_{gamma in B_{radii[k]}} f(gamma^{-1} x)`` (exact integer weights)."""
    radii = list(radii)
    ops = action.sphere_operators(max(radii))
    cum = np.cumsum(np.stack(ops), axis=0)
    f = np.asarray(fvals, float)
    return np.array([cum[n].T @ f for n in radii])


def ball_average(spec: BallAverageSpec, f: TestFunction | np.ndarray, x, t) -> float:
    """``(1/V(t)) sum_{gamma in B_t} f(gamma^{-1} x)`` by exact enumeration of B_t."""
    V = spec.V(t)
    g = spec.group
    if isinstance(g, WordBall) and g.action is not None:
        fv = f if isinstance(f, np.ndarray) else _fvalues(f, np.arange(g.action.size))
        return float(finite_ball_sums(g.action, fv, [int(t)])[0, x] / V)
    if isinstance(g, WordBall):
        # balls are inversion closed: sum over gamma^{-1} x equals sum over gamma x
        pts, _ = free_orbit(g.matrices, np.asarray(x, float), int(t), budget=spec.budget)
        vals = _fvalues(f, pts)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite value from the space action")
        return math.fsum(vals) / V
    partial = []
    for _, pts in lattice_orbit_chunks(spec.space, x, math.exp(t), budget=spec.budget):
        vals = _fvalues(f, pts)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite value from the space action")
        partial.append(math.fsum(vals))
    return math.fsum(partial) / V


# ---------------------------------------------------------------------------
# limit operators


@dataclass
class MeanProjection:
    """f -> integral of f against the (probability) measure."""

    def apply(self, f, x, space: GSpace | None = None) -> float:
        if isinstance(f, np.ndarray):
            return float(np.mean(f))
        if f.exact_mean is not None:
            return float(f.exact_mean)
        raise ConfigError("mean of f unavailable: supply an exact mean")


@dataclass
class FreeParity:
    """f -> integral f + ((r-1)/r) <f, f0> f0(x); f0 is a counting-measure unit vector."""

    rank: int
    f0: np.ndarray | None

    def apply(self, f, x, space: GSpace | None = None) -> float:
        fv = f if isinstance(f, np.ndarray) else _fvalues(f, np.arange(len(self.f0) if self.f0 is not None else space.size))
        base = float(np.mean(fv))
        if self.f0 is None:
            return base
        return base + (self.rank - 1) / self.rank * float(np.dot(fv, self.f0)) * float(self.f0[x])

    def matrix(self, size: int) -> np.ndarray:
        P = np.full((size, size), 1.0 / size)
        if self.f0 is not None:
            P += (self.rank - 1) / self.rank * np.outer(self.f0, self.f0)
        return P


@dataclass
class DensityIntegral:
    """f -> scale * integral f(y) (|x| |y|)^(-alpha) dy on the plane, by quadrature."""

    alpha: float
    scale: float = 1.0
    points: np.ndarray | None = None
    weights: np.ndarray | None = None

    def weight(self, x, y) -> np.ndarray:
        w = (np.linalg.norm(x) * np.linalg.norm(y, axis=-1)) ** (-self.alpha)
        if np.any(w <= 0):
            raise InvariantViolation("density weight is not positive")
        return self.scale * w

    def apply(self, f, x, space: GSpace | None = None) -> float:
        if self.points is None:
            raise ConfigError("DensityIntegral needs quadrature points")
        vals = _fvalues(f, self.points)
        return float(np.sum(vals * self.weight(np.asarray(x, float), self.points) * self.weights))


LimitOperator = MeanProjection | FreeParity | DensityIntegral


def limit_apply(op, f, x, space: GSpace | None = None) -> float:
    return op.apply(f, x, space)


def free_limit_operator(action: FiniteAction, f0: np.ndarray | None) -> FreeParity:
    if f0 is None and len(action.orbits(even=True)) == 2:
        raise ConfigError("the action is bipartite: supply the parity vector f0")
    return FreeParity(action.rank, f0)


# ---------------------------------------------------------------------------
# error series


def _meta_hash(meta: dict) -> str:
    blob = json.dumps(meta, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ErrorSeries:
    times: list
    values: list
    norm: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.values):
            raise ValueError("error values must be nonnegative")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")

    def to_rows(self) -> list:
        h = _meta_hash(self.meta)
        return [[repr(float(t)), repr(float(v)), self.norm, h] for t, v in zip(self.times, self.values)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value", "norm", "metadata_hash"])
            w.writerows(self.to_rows())

    def to_dict(self) -> dict:
        return {"times": [float(t) for t in self.times], "values": [float(v) for v in self.values],
                "norm": self.norm, "meta": self.meta, "metadata_hash": _meta_hash(self.meta)}


def lp_norm(dev: np.ndarray, weights: np.ndarray, p) -> float:
    dev = np.abs(np.asarray(dev, float))
    if p in ("sup", "inf", math.inf):
        return float(np.max(dev))
    p = float(p)
    return float(np.sum(weights * dev ** p) ** (1 / p))


def finite_error_series(action: FiniteAction, fvals, op, radii: Sequence[int],
                        p="sup", meta: dict | None = None) -> ErrorSeries:
    """Exact error series on a finite space: all points, uniform weights."""
    m = action.size
    sums = finite_ball_sums(action, fvals, radii)
    limit = np.array([op.apply(np.asarray(fvals, float), x) for x in range(m)])
    vals = [lp_norm(sums[k] / ball_size(action.rank, n) - limit, np.full(m, 1.0 / m), p)
            for k, n in enumerate(radii)]
    return ErrorSeries(list(radii), vals, str(p), meta or {})


def error_series(spec: BallAverageSpec, f, op, points, weights=None, p=2,
                 meta: dict | None = None) -> ErrorSeries:
    """L^p (or sup) norm of ball average minus limit over a weighted point set."""
    pts = np.asarray(points)
    w = np.full(len(pts), 1.0 / len(pts)) if weights is None else np.asarray(weights, float)
    vals = []
    for t in spec.times:
        avg = np.array([ball_average(spec, f, x, t) for x in pts])
        lim = np.array([op.apply(f, x, spec.space) for x in pts])
        vals.append(lp_norm(avg - lim, w, p))
    m = {"space": spec.space.name, "sample_size": len(pts), **(meta or {})}
    return ErrorSeries(list(spec.times), vals, str(p), m)


def sup_error(averages: np.ndarray, limits: np.ndarray | float, grid=None) -> tuple[float, int]:
    """Exact maximum of |average - limit| over a finite grid, and its index."""
    dev = np.abs(np.asarray(averages, float) - np.asarray(limits, float))
    if dev.size == 0:
        raise ValueError("empty grid")
    i = int(np.argmax(dev))
    return float(dev[i]), i


# ---------------------------------------------------------------------------
# rate predictors


def balance_epsilon(a: float, rho: float, E: float) -> float:
    """The radius E^(1/(a+rho)) at which eps^-rho E and eps^a coincide."""
    return E ** (1.0 / (a + rho))


def predict_uniform_rate(a: float, rho: float, E: float) -> float:
    """Sup-norm rate E^(a/(a+rho)) obtained from an L^1/L^2 rate E."""
    if not (0 < a <= 1) or rho <= 0:
        raise ValueError("need a in (0, 1] and rho > 0")
    if not (0 < E < 1):
        raise UndefinedRegime(f"E = {E} outside (0, 1): no gain from balancing")
    return E ** (a / (a + rho))


def window_sup(series: ErrorSeries, t: float, kappa: float) -> float:
    """max of E over [t - kappa, t + kappa] with linear interpolation at the ends."""
    ts = np.asarray(series.times, float)
    es = np.asarray(series.values, float)
    lo, hi = t - kappa, t + kappa
    if lo < ts[0] - 1e-12 or hi > ts[-1] + 1e-12:
        raise ValueError(f"window [{lo}, {hi}] outside the recorded series [{ts[0]}, {ts[-1]}]")
    inner = es[(ts > lo) & (ts < hi)]
    ends = np.interp([lo, hi], ts, es)
    return float(max(np.max(ends), np.max(inner) if inner.size else -np.inf))


def transitive_rate(a0: float, a: float, rho: float, E_bar: float) -> float:
    if a0 <= 0:
        raise ValueError("a0 must be positive")
    b = min(a0, a)
    return predict_uniform_rate(b, rho, E_bar)


# ---------------------------------------------------------------------------
# exponent fitting


def fit_exponent(times, values, drop_fraction: float = 0.2) -> tuple[float, float]:
    """Least-squares slope theta of -log E against t after dropping the earliest points.

    Nonpositive entries are excluded first.  Returns (theta, residual norm).
    """
    t = np.asarray(times, float)
    e = np.asarray(values, float)
    keep = e > 0
    t, e = t[keep], e[keep]
    if len(t) < 4:
        raise FitError(f"need at least 4 positive values, have {len(t)}")
    k = int(math.floor(drop_fraction * len(t)))
    t, e = t[k:], e[k:]
    coef, res, *_ = np.polyfit(t, np.log(e), 1, full=True)
    resid = float(math.sqrt(res[0])) if len(res) else 0.0
    return float(-coef[0]), resid


# ---------------------------------------------------------------------------
# mass bound and coarse monotonicity


def mass_bound(spec: BallAverageSpec, y, r: float, t) -> float:
    """(1/V(t)) #{gamma in B_t : gamma^{-1} y in X_r}."""
    space = spec.space
    g = spec.group
    if isinstance(g, WordBall) and g.action is not None:
        return spec.count(t) / spec.V(t)  # compact: every point is in X
    if isinstance(g, WordBall):
        pts, _ = free_orbit(g.matrices, np.asarray(y, float), int(t), budget=spec.budget)
        return float(np.count_nonzero(space.in_filtration(pts, r))) / spec.V(t)
    hits = 0
    for _, pts in lattice_orbit_chunks(space, y, math.exp(t), budget=spec.budget):
        hits += int(np.count_nonzero(space.in_filtration(pts, r)))
    return hits / spec.V(t)


def sample_near_identity(eps: float, count: int, seed: int) -> list:
    """Elements exp(X) of SL_2(R) with |X|_op <= log(1 + eps); the identity and the
    extreme diagonal element are always included."""
    rng = np.random.default_rng(seed)
    s = math.log1p(eps)
    out = [np.eye(2), np.diag([1 + eps, 1 / (1 + eps)])]
    while len(out) < count:
        X = rng.normal(size=(2, 2))
        X -= np.trace(X) / 2 * np.eye(2)
        X *= s * rng.uniform(0.5, 1.0) / np.linalg.norm(X, 2)
        out.append(expm(X))
    return out


@dataclass
class MonotonicityRow:
    eps: float
    kappa: float
    delta: float
    kappa_bound: float


def coarse_monotone_check(family: NormBallFamily, eps_grid, samples: dict, t_grid,
                          kappa_bound: Callable[[float], float] | None = None) -> dict:
    """For each eps: the smallest kappa with g B_t inside B_{t+kappa} for all sampled g
    (every gamma of every enumerated ball is checked), and delta = max_t V(t+kappa)/V(t).

    ``samples[eps]`` lists the sampled g.  A kappa above ``kappa_bound(eps)``
    raises :class:`InvariantViolation` with the (g, t, gamma) witness.  The
    fitted ``a0`` is the slope of log(delta - 1) against log eps.
    """
    t_grid = sorted(t_grid)
    balls = {t: sl2z_ball_array(math.exp(t)) for t in t_grid}
    rows = []
    for eps in sorted(eps_grid, reverse=True):
        kappa, witness = 0.0, None
        for g in samples[eps]:
            g = np.asarray(g, float)
            for t in t_grid:
                B = balls[t].astype(float)
                # g gamma for each gamma = [[a, b], [c, d]]
                p = g[0, 0] * B[:, 0] + g[0, 1] * B[:, 2]
                q = g[0, 0] * B[:, 1] + g[0, 1] * B[:, 3]
                r_ = g[1, 0] * B[:, 0] + g[1, 1] * B[:, 2]
                s = g[1, 0] * B[:, 1] + g[1, 1] * B[:, 3]
                logs = 0.5 * np.log(p * p + q * q + r_ * r_ + s * s) - t
                j = int(np.argmax(logs))
                if logs[j] > kappa:
                    kappa, witness = float(logs[j]), (g.tolist(), t, balls[t][j].tolist())
        bound = kappa_bound(eps) if kappa_bound else math.inf
        if kappa > bound:
            raise InvariantViolation(f"support inclusion needs kappa {kappa:.4f} > {bound:.4f} at eps={eps}",
                                     witness=witness)
        Vs = count_sl2z_balls([math.exp(t) for t in t_grid])
        Vk = count_sl2z_balls([math.exp(t + kappa) for t in t_grid])
        delta = float(np.max(Vk / Vs))
        rows.append(MonotonicityRow(float(eps), kappa, delta, bound))
    rows.sort(key=lambda r: r.eps)
    le = np.log([r.eps for r in rows])
    ld = np.log([max(r.delta - 1, 1e-300) for r in rows])
    a0 = float(np.polyfit(le, ld, 1)[0]) if len(rows) >= 2 else float("nan")
    return {"rows": [asdict(r) for r in rows], "a0": a0}


# ---------------------------------------------------------------------------
# ratio statistics and empirical densities


@dataclass
class RatioStat:
    times: list
    n1: list
    n2: list
    sets: dict
    base_points: list

    def __post_init__(self):
        for seq in (self.n1, self.n2):
            if any(v < 0 for v in seq) or any(b < a for a, b in zip(seq, seq[1:])):
                raise ValueError("counts must be nonnegative and monotone in t")

    def ratios(self) -> list:
        return [a / b if b > 0 else float("nan") for a, b in zip(self.n1, self.n2)]

    @property
    def conclusive(self) -> bool:
        return bool(self.n2 and self.n2[-1] > 0)

    def write_csv(self, path) -> None:
        h = _meta_hash({"sets": self.sets, "base_points": self.base_points})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value", "n1", "n2", "metadata_hash"])
            for t, a, b, r in zip(self.times, self.n1, self.n2, self.ratios()):
                w.writerow([repr(float(t)), repr(float(r)), int(a), int(b), h])

    def to_dict(self) -> dict:
        return {"times": [float(t) for t in self.times], "n1": [int(v) for v in self.n1],
                "n2": [int(v) for v in self.n2], "ratios": self.ratios(), "sets": self.sets,
                "base_points": self.base_points}


def finite_ratio_statistic(action: FiniteAction, x1: int, x2: int, A1, A2, radii) -> RatioStat:
    """N_i(n) = #{gamma in B_n : gamma^{-1} x_i in A_i} on a finite action."""
    radii = list(radii)
    ops = action.sphere_operators(max(radii))
    cum = np.cumsum(np.stack(ops), axis=0)
    n1 = [int(cum[n][list(A1), x1].sum()) for n in radii]
    n2 = [int(cum[n][list(A2), x2].sum()) for n in radii]
    return RatioStat(radii, n1, n2, {"A1": list(map(int, A1)), "A2": list(map(int, A2))}, [x1, x2])


def annulus_indicator(r_lo: float, r_hi: float) -> Callable:
    return lambda pts: (np.hypot(pts[:, 0], pts[:, 1]) >= r_lo) & (np.hypot(pts[:, 0], pts[:, 1]) <= r_hi)


def lattice_ratio_statistic(space: GSpace, x1, x2, A1, A2, Ts, budget=DEFAULT_BUDGET,
                            sets_meta: dict | None = None) -> RatioStat:
    """N_i(T) = #{|gamma| <= T : gamma^{-1} x_i in A_i} for a grid of T, one pass per point."""
    from .matgroup import norm_sq_bound
    Ts = sorted(Ts)
    bounds = np.array([norm_sq_bound(T) for T in Ts], dtype=np.int64)
    counts = []
    for x, A in ((x1, A1), (x2, A2)):
        c = np.zeros(len(Ts), dtype=np.int64)
        for nsq, pts in lattice_orbit_chunks(space, np.asarray(x, float), Ts[-1], budget=budget):
            hit = nsq[A(pts)]
            c += np.array([np.count_nonzero(hit <= b) for b in bounds])
        counts.append(c.tolist())
    return RatioStat([math.log(T) for T in Ts], counts[0], counts[1], sets_meta or {},
                     [np.asarray(x1).tolist(), np.asarray(x2).tolist()])


def total_variation(h_new: np.ndarray, h_old: np.ndarray) -> float:
    """Half the L^1 distance between binned measures, relative to the mass of ``h_new``."""
    return 0.5 * float(np.sum(np.abs(h_new - h_old))) / float(np.sum(h_new))


@dataclass
class DensityTable:
    Ts: list
    counts: np.ndarray        # (len(Ts), nbins)
    normalized: np.ndarray    # counts / V(t)
    tv_steps: list            # TV between consecutive T
    binning: dict

    def to_dict(self) -> dict:
        return {"T": [float(T) for T in self.Ts], "counts": self.counts.tolist(),
                "normalized": self.normalized.tolist(), "tv_steps": self.tv_steps,
                "binning": self.binning}


def empirical_limit_density(space: GSpace, x, Ts, binner, V: Callable[[float], float],
                            budget=DEFAULT_BUDGET) -> DensityTable:
    """Histograms of {gamma^{-1} x : |gamma| <= T} / V(log T) for each T."""
    from .orbits import lattice_orbit_histograms
    if not isinstance(space, Plane):
        raise ConfigError("empirical limit densities are implemented for the plane")
    Ts = sorted(Ts)
    H = lattice_orbit_histograms(space, np.asarray(x, float), Ts, binner, budget=budget)
    norm = H / np.array([V(math.log(T)) for T in Ts])[:, None]
    tv = [total_variation(norm[i], norm[i - 1]) for i in range(1, len(Ts))]
    return DensityTable(Ts, H, norm, tv, binner.describe())


def lebesgue_chi_square(counts: np.ndarray, areas: np.ndarray) -> tuple[float, int]:
    """Pearson statistic of bin counts against expectations proportional to bin area."""
    counts = np.asarray(counts, float)
    expected = counts.sum() * areas / areas.sum()
    return float(np.sum((counts - expected) ** 2 / expected)), len(counts) - 1


def radial_power_fit(density: np.ndarray, binner) -> tuple[float, float]:
    """Fit (normalised count per unit area) ~ c |y|^-p over the radial rings; returns (c, p)."""
    ring_counts = density.reshape(binner.n_radial, binner.n_angular).sum(axis=1)
    ring_area = binner.areas().reshape(binner.n_radial, binner.n_angular).sum(axis=1)
    dens = ring_counts / ring_area
    r = binner.radial_centers()
    ok = dens > 0
    slope, icpt = np.polyfit(np.log(r[ok]), np.log(dens[ok]), 1)
    return float(math.exp(icpt)), float(-slope)


def power_annulus_mass(c: float, p: float, r_lo: float, r_hi: float) -> float:
    """Integral of c |y|^-p over {r_lo <= |y| <= r_hi}."""
    if abs(p - 2) < 1e-12:
        return 2 * math.pi * c * math.log(r_hi / r_lo)
    return 2 * math.pi * c * (r_hi ** (2 - p) - r_lo ** (2 - p)) / (2 - p)


# ---------------------------------------------------------------------------
# sphere experiments


def sphere_even_ball_errors(generators, bump_center, radius: float, grid: np.ndarray,
                            nmax_even: int, mean: float, scale: float = 1.0,
                            profile: str = "c1", budget=DEFAULT_BUDGET) -> dict:
    """Sup and L^2 errors of B_{2n} averages of a radial bump over a grid, n = 1..nmax_even."""
    from .orbits import sphere_cap_sums
    R = 2 * nmax_even
    orbit, levels = free_orbit(generators, np.asarray(bump_center, float), R, budget=budget)
    sums = sphere_cap_sums(grid, orbit, levels, R, radius, profile) * scale
    cum = np.cumsum(sums, axis=1)
    rank = len(generators)
    sup, l2, arg = [], [], []
    for n in range(1, nmax_even + 1):
        avg = cum[:, 2 * n] / ball_size(rank, 2 * n)
        e, i = sup_error(avg, mean)
        sup.append(e)
        arg.append(i)
        l2.append(float(np.sqrt(np.mean((avg - mean) ** 2))))
    return {"n": list(range(1, nmax_even + 1)), "sup": sup, "l2": l2, "argmax": arg,
            "orbit_points": int(len(orbit))}
