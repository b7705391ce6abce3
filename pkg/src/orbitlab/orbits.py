"""Orbit streams: every gamma in a ball applied to a point, in deterministic chunks."""

from __future__ import annotations

import math
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from .errors import BudgetExceeded
from .freegroup import DEFAULT_BUDGET, ball_size
from .matgroup import adjoint_so21_batch, norm_sq_bound, sl2z_ball_chunks
from .spaces import Circle, DeSitter, GSpace, Plane


def free_orbit(generators: Sequence[np.ndarray], point, nmax: int,
               budget: int | None = DEFAULT_BUDGET) -> tuple[np.ndarray, np.ndarray]:
    """Points ``gamma . point`` for every reduced word gamma of length <= nmax in the free
    group on the given matrices, with the word length of each point.

    Words are grown on the left (gamma' = g_l gamma), so each level is one
    matrix product per surviving letter.
    """
    rank = len(generators)
    total = ball_size(rank, nmax)
    if budget is not None and total > budget:
        raise BudgetExceeded(total, budget, "orbit points")
    letters = []
    for g in generators:
        g = np.asarray(g, float)
        letters.extend([g, np.linalg.inv(g)])
    dim = len(point)
    pts = np.empty((total, dim))
    levels = np.empty(total, dtype=np.int8)
    pts[0] = point
    levels[0] = 0
    pos = 1
    frontier = np.asarray(point, float)[None]
    first = np.array([-1])
    for n in range(1, nmax + 1):
        new_pts, new_first = [], []
        for l, M in enumerate(letters):
            keep = first != (l ^ 1)
            new_pts.append(frontier[keep] @ M.T)
            new_first.append(np.full(int(keep.sum()), l, dtype=np.int8))
        frontier = np.concatenate(new_pts)
        first = np.concatenate(new_first)
        pts[pos:pos + len(frontier)] = frontier
        levels[pos:pos + len(frontier)] = n
        pos += len(frontier)
    return pts, levels


@njit(cache=True)
def _cap_sums(grid, orbit, levels, nlev, radius, profile, a):
    """sums[i, n] = sum over orbit points y at level n of phi(d(grid_i, y))."""
    G = grid.shape[0]
    M = orbit.shape[0]
    out = np.zeros((G, nlev))
    cosR = math.cos(radius) if radius < math.pi else -1.0
    for i in range(G):
        x0, x1, x2 = grid[i, 0], grid[i, 1], grid[i, 2]
        for j in range(M):
            dot = x0 * orbit[j, 0] + x1 * orbit[j, 1] + x2 * orbit[j, 2]
            if dot > cosR:
                if dot > 1.0:
                    dot = 1.0
                s = math.acos(dot) / radius
                if profile == 0:
                    v = 1.0 - s ** a
                else:
                    v = (1.0 - s * s) ** 2
                out[i, levels[j]] += v
    return out


def sphere_cap_sums(grid: np.ndarray, orbit: np.ndarray, levels: np.ndarray, nmax: int,
                    radius: float, profile: str = "c1", a: float = 1.0) -> np.ndarray:
    """Per-level sums of a radial bump centred at the orbit points, evaluated on a grid.

    For an isometric action and f = phi(d(., c)), ``sum_{gamma in S_n} f(gamma^{-1} x)``
    equals ``sum_{gamma in S_n} phi(d(x, gamma c))``, which is what this returns
    (column n) when ``orbit`` is the orbit of c.
    """
    code = {"holder": 0, "c1": 1}[profile]
    return _cap_sums(np.ascontiguousarray(grid, dtype=np.float64),
                     np.ascontiguousarray(orbit, dtype=np.float64),
                     np.ascontiguousarray(levels, dtype=np.int64), nmax + 1,
                     float(radius), code, float(a))


def inverse_images(space: GSpace, mats: np.ndarray, x) -> np.ndarray:
    """gamma^{-1} x for each row (a, b, c, d) of an integer array, as float points."""
    a, b, c, d = (mats[:, i].astype(float) for i in range(4))
    if isinstance(space, Plane):
        x0, x1 = float(x[0]), float(x[1])
        # gamma^{-1} = [[d, -b], [-c, a]]
        return np.stack([d * x0 - b * x1, -c * x0 + a * x1], axis=1)
    if isinstance(space, Circle):
        th = float(np.asarray(x).ravel()[0])
        u = d * math.cos(th) - b * math.sin(th)
        v = -c * math.cos(th) + a * math.sin(th)
        return (np.arctan2(v, u) % math.pi)[:, None]
    if isinstance(space, DeSitter):
        inv = np.stack([d, -b, -c, a], axis=1)
        R = adjoint_so21_batch(inv)
        return space.renormalize(np.einsum("nij,j->ni", R, np.asarray(x, float)))
    raise TypeError(f"SL_2(Z) does not act on {space.name}")


def lattice_orbit_chunks(space: GSpace, x, T: float, budget: int | None = DEFAULT_BUDGET,
                         chunk: int = 1 << 20) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(norm_sq, points)`` blocks: the Frobenius norm^2 of gamma and gamma^{-1} x
    for every gamma in SL_2(Z) with |gamma| <= T."""
    for block in sl2z_ball_chunks(norm_sq=norm_sq_bound(T), chunk=chunk, budget=budget):
        nsq = np.sum(block * block, axis=1)
        yield nsq, inverse_images(space, block, x)


def lattice_orbit_histograms(space: GSpace, x, Ts: Sequence[float], binner,
                             budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
    """Counts per bin of {gamma^{-1} x : |gamma| <= T} for every T, in one pass.

    ``binner(points)`` returns a bin index per point (-1 to drop).
    """
    Ts = sorted(float(T) for T in Ts)
    bounds = np.array([norm_sq_bound(T) for T in Ts], dtype=np.int64)
    nbins = binner.nbins
    out = np.zeros((len(Ts), nbins), dtype=np.int64)
    for nsq, pts in lattice_orbit_chunks(space, x, Ts[-1], budget=budget):
        idx = binner(pts)
        keep = idx >= 0
        if not np.any(keep):
            continue
        idx, nsq = idx[keep], nsq[keep]
        # the first T whose bound admits each element
        level = np.searchsorted(bounds, nsq, side="left")
        inc = np.zeros((len(Ts), nbins), dtype=np.int64)
        np.add.at(inc, (level, idx), 1)
        out += np.cumsum(inc, axis=0)
    return out


class AnnulusBinner:
    """Polar bins on {r_in <= |y| <= r_out}: log-spaced radii times equal angles."""

    def __init__(self, r_in: float, r_out: float, n_radial: int = 8, n_angular: int = 8):
        self.r_in, self.r_out = r_in, r_out
        self.n_radial, self.n_angular = n_radial, n_angular
        self.nbins = n_radial * n_angular
        self.edges = np.geomspace(r_in, r_out, n_radial + 1)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        rad = np.hypot(pts[:, 0], pts[:, 1])
        ang = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * math.pi)
        ri = np.searchsorted(self.edges, rad, side="right") - 1
        ri = np.where(rad == self.r_out, self.n_radial - 1, ri)
        ai = np.minimum((ang / (2 * math.pi) * self.n_angular).astype(np.int64), self.n_angular - 1)
        ok = (ri >= 0) & (ri < self.n_radial)
        return np.where(ok, ri * self.n_angular + ai, -1)

    def areas(self) -> np.ndarray:
        ring = math.pi * np.diff(self.edges ** 2) / self.n_angular
        return np.repeat(ring, self.n_angular)

    def radial_centers(self) -> np.ndarray:
        return np.sqrt(self.edges[:-1] * self.edges[1:])

    def describe(self) -> dict:
        return {"r_in": self.r_in, "r_out": self.r_out, "n_radial": self.n_radial,
                "n_angular": self.n_angular}
