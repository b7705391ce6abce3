"""Metric measure spaces with group actions, filtrations and ball-mass certificates.

Points are numpy arrays (one row per point) for the continuous spaces and
integers for the finite ones.  Every space exposes ``dist``, ``act``,
``basepoint``, ``in_filtration`` and a :class:`MeasureModel`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, ResolutionError
from .freegroup import FiniteAction, ReducedWord, SubgroupChain
from .matgroup import FloatMatrix, LatticeElement, adjoint_so21

GOLDEN_ANGLE = math.pi * (3 - math.sqrt(5))


def _as_matrix(g) -> np.ndarray:
    if isinstance(g, FloatMatrix):
        return g.data
    if isinstance(g, LatticeElement):
        return g.as_array()
    if isinstance(g, np.ndarray) and g.ndim == 2:
        return g.astype(float)
    raise TypeError(f"cannot act with {type(g).__name__} on a continuous space")


@dataclass(frozen=True)
class MeasureModel:
    """Reference measure on a space.

    ``sampler(n, seed, r)`` returns ``(points, weights)``: a deterministic
    quasi-random sample of X_r whose weights sum to mu(X_r).  The certified
    lower bound is ``mu(D_eps(x)) >= m_r eps^rho`` for x in X_r and
    ``eps <= eps_max(r)``.
    """

    sampler: Callable
    rho: float
    m_r: Callable[[float], float]
    eps_max: Callable[[float], float]
    total_mass: Callable[[float], float]
    full_support: bool = True

    def mass_lower_bound(self, r: float, eps: float) -> float:
        return self.m_r(r) * eps ** self.rho


class GSpace:
    """Common interface; subclasses fill in geometry."""

    name = "space"
    isometric = False
    connected = True
    resolution = 0.0  # smallest positive distance (0 for continua)

    def dist(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def act(self, g, x):
        raise NotImplementedError

    def basepoint(self):
        raise NotImplementedError

    def in_filtration(self, x, r: float) -> np.ndarray:
        return np.asarray(self.dist(self.basepoint(), x)) <= r

    measure: MeasureModel

    def sample(self, n: int, seed: int = 0, r: float = 1.0):
        return self.measure.sampler(n, seed, r)


# ---------------------------------------------------------------------------
# continuous spaces


def fibonacci_sphere(n: int) -> np.ndarray:
    """n nearly uniform points on S^2 (Fibonacci lattice)."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    rad = np.sqrt(1 - z * z)
    phi = GOLDEN_ANGLE * np.arange(n)
    return np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)


def sobol(dim: int, n: int, seed: int) -> np.ndarray:
    """First n points of a scrambled Sobol sequence (drawn in a power-of-two block)."""
    m = max(0, math.ceil(math.log2(max(n, 1))))
    return qmc.Sobol(dim, scramble=True, seed=seed).random_base2(m)[:n]


def form_residual(x) -> np.ndarray:
    """|Q(x) - 1| relative to |x|^2, the float64 cancellation scale of Q."""
    x = np.asarray(x, float)
    return np.abs(Q_form(x) - 1) / np.maximum(1.0, np.sum(x * x, axis=-1))


def _rotate_sample(points: np.ndarray, seed: int) -> np.ndarray:
    if seed == 0:
        return points
    from scipy.spatial.transform import Rotation
    return points @ Rotation.random(random_state=seed).as_matrix().T


class Sphere2(GSpace):
    """Unit sphere with the great-circle metric and normalised area measure."""

    name = "sphere2"
    isometric = True

    def __init__(self):
        self.measure = MeasureModel(
            sampler=lambda n, seed=0, r=math.pi: (_rotate_sample(fibonacci_sphere(n), seed),
                                                  np.full(n, 1.0 / n)),
            rho=2.0,
            # sin^2(eps/2) >= (eps/pi)^2 on [0, pi]
            m_r=lambda r: 1 / math.pi ** 2,
            eps_max=lambda r: math.pi,
            total_mass=lambda r: 1.0,
        )

    def basepoint(self):
        return np.array([0.0, 0.0, 1.0])

    def dist(self, x, y):
        dot = np.sum(np.asarray(x, float) * np.asarray(y, float), axis=-1)
        return np.arccos(np.clip(dot, -1.0, 1.0))

    def act(self, g, x):
        M = _as_matrix(g)
        if M.shape != (3, 3):
            raise TypeError("sphere points are moved by 3x3 rotations")
        return np.asarray(x, float) @ M.T

    def in_filtration(self, x, r):
        return np.ones(np.shape(x)[:-1], dtype=bool) if r >= math.pi else super().in_filtration(x, r)

    def ball_mass(self, eps: float) -> float:
        """Exact normalised area of a cap of geodesic radius eps."""
        return math.sin(min(eps, math.pi) / 2) ** 2

    @staticmethod
    def chord(eps: float) -> float:
        return 2 * math.sin(min(eps, math.pi) / 2)


class Circle(GSpace):
    """The boundary RP^1, points are angles in [0, pi) acted on fractional-linearly.

    The distance is the angular distance mod pi and the measure is normalised length.
    """

    name = "circle"

    def __init__(self):
        def sampler(n, seed=0, r=math.pi / 2):
            u = sobol(1, n, seed)[:, 0] if seed else (np.arange(n) + 0.5) / n
            return (u * math.pi)[:, None], np.full(n, 1.0 / n)

        self.measure = MeasureModel(sampler=sampler, rho=1.0, m_r=lambda r: 2 / math.pi,
                                    eps_max=lambda r: math.pi / 2, total_mass=lambda r: 1.0)

    def basepoint(self):
        return np.array([0.0])

    def dist(self, x, y):
        d = np.abs(np.asarray(x, float)[..., 0] - np.asarray(y, float)[..., 0]) % math.pi
        return np.minimum(d, math.pi - d)

    def act(self, g, x):
        M = _as_matrix(g)
        if M.shape != (2, 2):
            raise TypeError("the boundary circle is moved by 2x2 matrices")
        th = np.asarray(x, float)[..., 0]
        u = M[0, 0] * np.cos(th) + M[0, 1] * np.sin(th)
        v = M[1, 0] * np.cos(th) + M[1, 1] * np.sin(th)
        return (np.arctan2(v, u) % math.pi)[..., None]

    def radon_nikodym(self, g, x) -> np.ndarray:
        """Derivative of the induced map on angles: the density of g_* mu against mu at g x."""
        M = _as_matrix(g)
        th = np.asarray(x, float)[..., 0]
        v = np.stack([np.cos(th), np.sin(th)], axis=-1) @ M.T
        return 1.0 / np.sum(v * v, axis=-1)


class Plane(GSpace):
    """R^2 minus the origin with Lebesgue measure and the annulus filtration
    X_r = {1/r <= |v| <= r}; SL_2 acts linearly."""

    name = "plane"

    def __init__(self, base=(1.0, 0.0)):
        self._base = np.asarray(base, float)

        def sampler(n, seed=0, r=2.0):
            u = sobol(2, n, seed)
            # area-uniform radius on the annulus
            rad = np.sqrt(r ** -2 + u[:, 0] * (r ** 2 - r ** -2))
            ang = 2 * math.pi * u[:, 1]
            area = math.pi * (r ** 2 - r ** -2)
            return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1), np.full(n, area / n)

        self.measure = MeasureModel(
            sampler=sampler, rho=2.0,
            # with eps at most half the annulus width a disc meets one boundary circle
            # and keeps over 40% of its area
            m_r=lambda r: math.pi / 4,
            eps_max=lambda r: (r - 1 / r) / 2,
            total_mass=lambda r: math.pi * (r ** 2 - r ** -2),
        )

    def basepoint(self):
        return self._base

    def dist(self, x, y):
        return np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)

    def act(self, g, x):
        M = _as_matrix(g)
        if M.shape != (2, 2):
            raise TypeError("the plane is moved by 2x2 matrices")
        return np.asarray(x, float) @ M.T

    def in_filtration(self, x, r):
        n = np.linalg.norm(np.asarray(x, float), axis=-1)
        return (n >= 1 / r) & (n <= r)


def Q_form(x) -> np.ndarray:
    x = np.asarray(x, float)
    return x[..., 0] ** 2 + x[..., 1] ** 2 - x[..., 2] ** 2


class DeSitter(GSpace):
    """The one-sheeted hyperboloid Q(x, y, z) = x^2 + y^2 - z^2 = 1 under SO^0(2,1).

    Coordinates (phi, z) with x + iy = sqrt(1 + z^2) e^{i phi}; the invariant
    area element is d phi dz and X_r = {|z| <= r}.  Distances are chordal in R^3.
    """

    name = "desitter"

    def __init__(self):
        def sampler(n, seed=0, r=1.0):
            u = sobol(2, n, seed)
            return self.from_coords(2 * math.pi * u[:, 0], r * (2 * u[:, 1] - 1)), \
                np.full(n, 4 * math.pi * r / n)

        self.measure = MeasureModel(
            sampler=sampler, rho=2.0,
            m_r=lambda r: 1.0 / (1 + r * r),
            eps_max=lambda r: 0.5,
            total_mass=lambda r: 4 * math.pi * r,
        )

    @staticmethod
    def from_coords(phi, z) -> np.ndarray:
        phi, z = np.asarray(phi, float), np.asarray(z, float)
        s = np.sqrt(1 + z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)

    @staticmethod
    def renormalize(x) -> np.ndarray:
        x = np.asarray(x, float)
        return x / np.sqrt(Q_form(x))[..., None]

    def basepoint(self):
        return self.from_coords(1.0, 0.0)

    def dist(self, x, y):
        return np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)

    def act(self, g, x):
        M = _as_matrix(g)
        if M.shape == (2, 2):
            M = adjoint_so21(M)
        if M.shape != (3, 3):
            raise TypeError("de Sitter points are moved by SO(2,1) or SL_2 matrices")
        return self.renormalize(np.asarray(x, float) @ M.T)

    def in_filtration(self, x, r):
        return np.abs(np.asarray(x, float)[..., 2]) <= r


# ---------------------------------------------------------------------------
# finite spaces


class FiniteCoset(GSpace):
    """A finite F_r-set with the discrete metric and uniform probability measure."""

    name = "finite"
    isometric = True
    connected = False
    resolution = 1.0

    def __init__(self, action: FiniteAction, base: int = 0):
        self.action = action
        self.size = action.size
        self._base = base

        def sampler(n=None, seed=0, r=1.0):
            return np.arange(self.size), np.full(self.size, 1.0 / self.size)

        self.measure = MeasureModel(sampler=sampler, rho=0.0, m_r=lambda r: 1.0 / self.size,
                                    eps_max=lambda r: 1.0, total_mass=lambda r: 1.0)

    def basepoint(self):
        return self._base

    def dist(self, x, y):
        return (np.asarray(x) != np.asarray(y)).astype(float)

    def act(self, g, x):
        if isinstance(g, ReducedWord):
            return self.action.act(g, int(x))
        if isinstance(g, (int, np.integer)):
            return int(self.action.letter_perms[int(g)][int(x)])
        raise TypeError(f"cannot act with {type(g).__name__} on a finite coset space")

    def in_filtration(self, x, r):
        return np.ones(np.shape(x), dtype=bool)


class ProfiniteLevel(FiniteCoset):
    """Deepest level F_r/Gamma_k of a subgroup chain with the profinite metric
    d(x, y) = 1/|F_r : Gamma_i| for the first level i where x and y differ."""

    name = "profinite"

    def __init__(self, chain: SubgroupChain):
        super().__init__(chain.levels[-1], chain.base)
        self.chain = chain
        # level labels of each deepest-level point, coarsest level first
        k = chain.depth
        labels = [None] * k
        labels[k - 1] = np.arange(self.size)
        for i in range(k - 2, -1, -1):
            labels[i] = chain.projections[i][labels[i + 1]]
        self.labels = np.stack(labels)
        self.resolution = 1.0 / chain.indices[-1]
        jumps = chain.index_jumps()
        self.max_jump = max(jumps) if jumps else chain.indices[0]
        self.measure = MeasureModel(
            sampler=self.measure.sampler, rho=1.0, m_r=lambda r: 1.0,
            eps_max=lambda r: 1.0, total_mass=lambda r: 1.0)

    def dist(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
        lx, ly = self.labels[:, x], self.labels[:, y]
        differ = lx != ly
        inv_idx = 1.0 / np.asarray(self.chain.indices, float)
        inv_idx = inv_idx.reshape((-1,) + (1,) * (differ.ndim - 1))
        return np.max(np.where(differ, inv_idx, 0.0), axis=0)


# ---------------------------------------------------------------------------
# balls and local dimension


@dataclass
class BallSample:
    points: np.ndarray
    weights: np.ndarray
    mass: float


def ball_points(space: GSpace, x, eps: float, points=None, weights=None,
                n: int = 20000, seed: int = 0, r: float | None = None) -> BallSample:
    """Weighted sample of the open ball {y : d(x, y) < eps}.

    Finite spaces are handled exactly; continuous spaces use the measure sampler
    (or a supplied weighted point set).
    """
    if eps <= 0:
        raise ValueError("radius must be positive")
    if points is None:
        rr = r if r is not None else (math.pi if isinstance(space, Sphere2) else 2.0)
        points, weights = space.sample(n, seed, rr)
    d = np.asarray(space.dist(x, points))
    inside = d < eps
    if not np.any(inside):
        raise ResolutionError(f"no sample point within {eps} of the centre; sample is too coarse")
    return BallSample(points[inside], weights[inside], float(np.sum(weights[inside])))


@dataclass
class DimensionCertificate:
    rho: float
    m_r: float
    slope: float
    eps_grid: list
    min_masses: list
    ok: bool = True
    worst: list = field(default_factory=list)


def local_dimension_certificate(space: GSpace, r: float, eps_grid, centers=None,
                                n: int = 50000, seed: int = 0,
                                candidates=None, slope_tol: float = 0.15) -> DimensionCertificate:
    """Smallest candidate rho matching the small-ball scaling on the grid.

    For each eps the minimum empirical mass over the centres is taken; rho is the
    smallest candidate at least the log-log slope of that curve minus
    ``slope_tol``, and m_r is the realised ``min mass / eps^rho``.  If no
    candidate qualifies, the report lists the worst (centre, eps) pairs.
    """
    eps_grid = sorted(float(e) for e in eps_grid)
    candidates = np.arange(0.5, 4.01, 0.5) if candidates is None else np.asarray(candidates, float)
    points, weights = space.sample(n, seed, r)
    if centers is None:
        inside = np.asarray(space.in_filtration(points, r))
        pool = points[inside]
        centers = pool[np.linspace(0, len(pool) - 1, min(64, len(pool))).astype(int)]
    min_masses, argmins = [], []
    for eps in eps_grid:
        masses = []
        for c in centers:
            d = np.asarray(space.dist(c, points))
            masses.append(float(np.sum(weights[d < eps])))
        j = int(np.argmin(masses))
        min_masses.append(masses[j])
        argmins.append(centers[j])
    mm = np.asarray(min_masses)
    if np.any(mm <= 0):
        raise ResolutionError("empty ball on the grid; sample is too coarse")
    slope = float(np.polyfit(np.log(eps_grid), np.log(mm), 1)[0]) if len(eps_grid) > 1 else 0.0
    ok_rho = [c for c in candidates if c >= slope - slope_tol]
    if not ok_rho:
        worst = sorted(zip(mm / np.asarray(eps_grid) ** candidates[-1], eps_grid,
                           [np.asarray(a).tolist() for a in argmins]))[:5]
        return DimensionCertificate(float("nan"), 0.0, slope, eps_grid, min_masses, ok=False,
                                    worst=[(w[2], w[1]) for w in worst])
    rho = float(min(ok_rho))
    m_r = float(np.min(mm / np.asarray(eps_grid) ** rho))
    return DimensionCertificate(rho, m_r, slope, eps_grid, min_masses)


# ---------------------------------------------------------------------------
# induced metric on a finite quotient


class MetricOnQuotient:
    """Distance on a finite F_r-set induced from the word metric on the image group.

    The acting group G is the (finite) permutation image of F_r, metrised by the
    left-invariant word length d(g, h) = |g^{-1} h|.  For x = g_1 o and
    y = g_2 o the distance is the minimum of |g_1^{-1} g_2| over all lifts, which
    makes the left action isometric.
    """

    def __init__(self, action: FiniteAction, base: int = 0, max_group_order: int = 20000):
        self.action = action
        self.base = base
        gens = [tuple(int(v) for v in p) for p in action.letter_perms]
        ident = tuple(range(action.size))
        length = {ident: 0}
        frontier = [ident]
        # right Cayley graph BFS: |g l| for letters l
        while frontier:
            nxt = []
            for g in frontier:
                for p in gens:
                    h = tuple(g[i] for i in p)  # g composed with p: (g o p)(i) = g[p[i]]
                    if h not in length:
                        length[h] = length[g] + 1
                        nxt.append(h)
                        if len(length) > max_group_order:
                            raise ConfigError("image group too large for the induced metric")
            frontier = nxt
        self.length = length
        self.lifts = {}
        for g in length:
            self.lifts.setdefault(g[base], []).append(g)

    def __call__(self, x: int, y: int) -> int:
        best = None
        for g1 in self.lifts[x]:
            inv = [0] * len(g1)
            for i, v in enumerate(g1):
                inv[v] = i
            for g2 in self.lifts[y]:
                k = tuple(inv[v] for v in g2)  # g1^{-1} g2
                val = self.length[k]
                if best is None or val < best:
                    best = val
        return best


def write_point_cloud(path, space: GSpace, points, weights=None) -> int:
    """CSV with columns space, x0, x1, ..., weight."""
    pts = np.atleast_2d(np.asarray(points, float))
    if pts.shape[0] == 1 and np.ndim(points) == 1 and isinstance(space, FiniteCoset):
        pts = pts.T
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, float)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["space"] + [f"x{i}" for i in range(pts.shape[1])] + ["weight"])
        for p, wi in zip(pts, w):
            wr.writerow([space.name] + [repr(float(v)) for v in p] + [repr(float(wi))])
    return len(pts)
