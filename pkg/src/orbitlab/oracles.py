"""Independent reference computations used to check the fast paths.

None of these share code with the production enumerators beyond the data
types: word lists are materialised explicitly, SL_2(Z) balls are found by
scanning every integer matrix, and finite-quotient limits come from an
eigendecomposition rather than from averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .freegroup import FiniteAction, sphere_size

# ---------------------------------------------------------------------------
# explicit word lists


def _word_list_levels(rank: int, nmax: int, init_state: np.ndarray, step, chunk: int = 1 << 21):
    """Depth-first walk over every reduced word of length <= nmax.

    ``init_state`` is the state of the empty word (one row); ``step(states, letter)``
    returns the states of ``w * letter`` for words ``w`` with those states.
    Yields ``(length, states)`` blocks, every word appearing in exactly one block.
    """
    L = 2 * rank
    yield 0, init_state
    if nmax == 0:
        return
    first = [step(init_state, l) for l in range(L)]
    stack = [(1, np.concatenate(first),
              np.repeat(np.arange(L, dtype=np.int8), [len(s) for s in first]))]
    while stack:
        n, states, last = stack.pop()
        yield n, states
        if n == nmax:
            continue
        kids, kid_last = [], []
        for l in range(L):
            keep = last != (l ^ 1)
            if np.any(keep):
                kids.append(step(states[keep], l))
                kid_last.append(np.full(int(keep.sum()), l, dtype=np.int8))
        child, child_last = np.concatenate(kids), np.concatenate(kid_last)
        for s in range(0, len(child), chunk):
            stack.append((n + 1, child[s:s + chunk], child_last[s:s + chunk]))


def word_list_sphere_columns(action: FiniteAction, x: int, nmax: int) -> np.ndarray:
    """``out[n, y] = #{gamma in S_n : gamma^{-1} x = y}`` by walking every word."""
    inv = [np.asarray(action.letter_perms[l ^ 1]) for l in range(2 * action.rank)]

    def step(points, l):
        # (w l)^{-1} x = l^{-1} (w^{-1} x)
        return inv[l][points]

    out = np.zeros((nmax + 1, action.size), dtype=np.int64)
    for n, pts in _word_list_levels(action.rank, nmax, np.array([x], dtype=np.int64), step):
        out[n] += np.bincount(pts, minlength=action.size)
    return out


def word_list_matrix_mod(generators, modulus: int, nmax: int) -> dict:
    """Residues of gamma^{-1} for every reduced word up to length nmax in the
    free group on the given integer 2x2 generators, reduced mod ``modulus``.

    Returns ``{n: counts}`` where ``counts`` maps packed residues
    ``((a N + b) N + c) N + d`` to multiplicities; only matrix arithmetic is used.
    """
    N = modulus
    mats = []
    for g in generators:
        a, b, c, d = (int(v) for v in (g.entries() if hasattr(g, "entries") else np.ravel(g)))
        mats.append((a % N, b % N, c % N, d % N))
        mats.append((d % N, -b % N, -c % N, a % N))
    # inverse of each letter, as a left multiplier on gamma^{-1}
    left = [np.array(mats[l ^ 1], dtype=np.int64) for l in range(len(mats))]

    def step(states, l):
        p, q, r, s = left[l]
        a, b, c, d = states[:, 0], states[:, 1], states[:, 2], states[:, 3]
        return np.stack([(p * a + q * c) % N, (p * b + q * d) % N,
                         (r * a + s * c) % N, (r * b + s * d) % N], axis=1)

    rank = len(generators)
    result = {n: np.zeros(N ** 4, dtype=np.int64) for n in range(nmax + 1)}
    init = np.array([[1, 0, 0, 1 % N]], dtype=np.int64)
    for n, st in _word_list_levels(rank, nmax, init, step):
        packed = ((st[:, 0] * N + st[:, 1]) * N + st[:, 2]) * N + st[:, 3]
        result[n] += np.bincount(packed, minlength=N ** 4)
    return result


# ---------------------------------------------------------------------------
# SL_2(Z) entry scan


def brute_force_sl2z_ball(T: float) -> set:
    """Every integer matrix with entries in [-floor T, floor T], det 1 and |.|_F <= T."""
    R = int(math.floor(T))
    N = int(math.floor(T * T * (1 + 1e-12)))
    v = np.arange(-R, R + 1, dtype=np.int64)
    a, b, c, d = np.meshgrid(v, v, v, v, indexing="ij")
    ok = (a * d - b * c == 1) & (a * a + b * b + c * c + d * d <= N)
    return set(zip(a[ok].tolist(), b[ok].tolist(), c[ok].tolist(), d[ok].tolist()))


# ---------------------------------------------------------------------------
# spectral oracle for ball averages on a finite quotient


def sphere_polynomials(mu: np.ndarray, rank: int, nmax: int) -> np.ndarray:
    """Eigenvalues of the sphere operators: ``p_n(mu)`` for the adjacency eigenvalue mu."""
    mu = np.asarray(mu, dtype=float)
    q = 2 * rank - 1
    p = np.zeros((nmax + 1,) + mu.shape)
    p[0] = 1.0
    if nmax >= 1:
        p[1] = mu
    for n in range(1, nmax):
        c = 2 * rank if n == 1 else q
        p[n + 1] = mu * p[n] - c * p[n - 1]
    return p


def spherical_rate(mu: float, rank: int) -> float:
    """Per-step exponential rate of ``p_n(mu) / |S_n|`` on the (2r)-regular tree."""
    q = 2 * rank - 1
    if abs(mu) <= 2 * math.sqrt(q):
        return 1.0 / math.sqrt(q)
    z = (abs(mu) + math.sqrt(mu * mu - 4 * q)) / 2
    return z / q


@dataclass
class SpectralOracle:
    """Eigendecomposition of the generator average of a finite F_r action."""

    action: FiniteAction
    tol: float = 1e-9

    def __post_init__(self):
        A = self.action.generator_average()
        if not np.allclose(A, A.T):
            raise ValueError("generator average must be symmetric")
        lam, vec = np.linalg.eigh(A)
        self.eigenvalues = lam
        self.eigenvectors = vec
        # group numerically equal eigenvalues into eigenspaces
        groups, start = [], 0
        for i in range(1, len(lam) + 1):
            if i == len(lam) or lam[i] - lam[start] > self.tol:
                groups.append((float(np.mean(lam[start:i])), vec[:, start:i]))
                start = i
        self.eigenspaces = groups

    @property
    def rank(self) -> int:
        return self.action.rank

    def limit_weight(self, lam: float) -> float:
        r = self.rank
        if abs(lam - 1) <= self.tol:
            return 1.0
        if abs(lam + 1) <= self.tol:
            return (r - 1) / r
        return 0.0

    def ball_multipliers(self, radii) -> np.ndarray:
        """``m[k, j]``: eigenvalue of the normalised ball operator of radius radii[k]
        on the j-th eigenspace."""
        radii = list(radii)
        mus = np.array([2 * self.rank * lam for lam, _ in self.eigenspaces])
        p = sphere_polynomials(mus, self.rank, max(radii))
        cum = np.cumsum(p, axis=0)
        sizes = np.cumsum([sphere_size(self.rank, k) for k in range(max(radii) + 1)])
        return np.array([cum[n] / sizes[n] for n in radii])

    def projection(self, j: int) -> np.ndarray:
        V = self.eigenspaces[j][1]
        return V @ V.T

    def ball_operator(self, radius: int) -> np.ndarray:
        m = self.ball_multipliers([radius])[0]
        return sum(mj * self.projection(j) for j, mj in enumerate(m))

    def limit_operator(self) -> np.ndarray:
        size = self.action.size
        out = np.zeros((size, size))
        for j, (lam, _) in enumerate(self.eigenspaces):
            w = self.limit_weight(lam)
            if w:
                out += w * self.projection(j)
        return out

    def second_singular_value(self) -> float:
        """Largest |lambda| of the generator average off the eigenvalues +-1."""
        vals = [abs(lam) for lam, _ in self.eigenspaces if abs(abs(lam) - 1) > self.tol]
        return max(vals) if vals else 0.0

    def rho0(self) -> float:
        """Per-step decay rate of even-ball averages towards the limit."""
        rates = [spherical_rate(2 * self.rank * lam, self.rank)
                 for lam, _ in self.eigenspaces if abs(abs(lam) - 1) > self.tol]
        # the -1 eigenspace converges to its limit weight like |S_{2n}|^{-1}
        return max(rates) if rates else 1.0 / (2 * self.rank - 1)

    def deviation_constant(self, f: np.ndarray, ns, rho0: float | None = None) -> float:
        """``C`` with ``max_x |B_{2n} f - P f| <= C rho0^{2n}`` for every n in ``ns``."""
        rho0 = self.rho0() if rho0 is None else rho0
        ns = list(ns)
        m = self.ball_multipliers([2 * n for n in ns])
        f = np.asarray(f, dtype=float)
        C = 0.0
        for j, (lam, _) in enumerate(self.eigenspaces):
            comp = np.max(np.abs(self.projection(j) @ f))
            if comp < 1e-14:
                continue
            dev = np.abs(m[:, j] - self.limit_weight(lam))
            C += comp * float(np.max(dev / rho0 ** (2 * np.array(ns, dtype=float))))
        return C
