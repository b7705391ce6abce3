"""Matrix groups: exact SL_2(Z) with norm-ball enumeration, congruence quotients,
the adjoint map SL_2(R) -> SO^0(2,1), rotations, and matrix norms.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import BudgetExceeded, ConfigError
from .freegroup import DEFAULT_BUDGET, FiniteAction

NORM_KINDS = ("euclidean", "max")


def matrix_norm(M, kind: str = "euclidean") -> float:
    """Euclidean (Frobenius) norm or max-entry norm of a matrix."""
    M = np.asarray(M, dtype=float)
    if kind == "euclidean":
        return float(np.sqrt(np.sum(M * M)))
    if kind == "max":
        return float(np.max(np.abs(M)))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def operator_norm(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=float), 2))


@dataclass(frozen=True)
class LatticeElement:
    """An element [[a, b], [c, d]] of SL_2(Z) with Python-int entries."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.a * self.d - self.b * self.c != 1:
            raise ValueError(f"determinant of {self.entries()} is not 1")

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    @classmethod
    def from_rows(cls, rows):
        (a, b), (c, d) = rows
        return cls(a, b, c, d)

    def entries(self) -> tuple:
        return (self.a, self.b, self.c, self.d)

    def rows(self) -> tuple:
        return ((self.a, self.b), (self.c, self.d))

    def __matmul__(self, o: "LatticeElement") -> "LatticeElement":
        return LatticeElement(self.a * o.a + self.b * o.c, self.a * o.b + self.b * o.d,
                              self.c * o.a + self.d * o.c, self.c * o.b + self.d * o.d)

    def __neg__(self) -> "LatticeElement":
        return LatticeElement(-self.a, -self.b, -self.c, -self.d)

    def inverse(self) -> "LatticeElement":
        return LatticeElement(self.d, -self.b, -self.c, self.a)

    def norm_sq(self) -> int:
        return self.a ** 2 + self.b ** 2 + self.c ** 2 + self.d ** 2

    def norm(self, kind: str = "euclidean") -> float:
        if kind == "euclidean":
            return math.sqrt(self.norm_sq())
        return float(max(abs(v) for v in self.entries()))

    def as_array(self) -> np.ndarray:
        return np.array(self.rows(), dtype=float)


def power_normalization(alpha: float, beta: int = 1) -> Callable[[float], float]:
    """t -> t^(beta-1) e^(alpha t)."""
    def V(t):
        return float(t) ** (beta - 1) * math.exp(alpha * t)
    V.description = f"t^{beta - 1} e^({alpha} t)"
    return V


def norm_sq_bound(T: float) -> int:
    """Largest integer N with N <= T^2, tolerant to float round-off in T^2."""
    return int(math.floor(float(T) * float(T) * (1 + 1e-12)))


class NormBallFamily:
    """Balls ``B_t = {g : log |g| <= t}`` in SL_2 with a normalisation V(t).

    ``normalization`` is either ``"count"`` (V(t) = #(Gamma cap B_t), computed
    exactly) or a callable ``t -> V(t)``.  Balls are taken closed; ties are a
    null set for every measure used here.
    """

    def __init__(self, kind: str = "euclidean", normalization="count"):
        if kind != "euclidean":
            raise ConfigError("only the Euclidean (Frobenius) ball family is enumerable")
        self.kind = kind
        self.normalization = normalization

    def threshold(self, t: float) -> float:
        return math.exp(t)

    def contains(self, g, t: float) -> bool:
        return matrix_norm(np.asarray(g.rows() if isinstance(g, LatticeElement) else g),
                           self.kind) <= math.exp(t) * (1 + 1e-12)

    def count(self, t: float) -> int:
        return count_sl2z_ball(math.exp(t))

    def V(self, t: float) -> float:
        if self.normalization == "count":
            return float(self.count(t))
        return float(self.normalization(t))

    def describe(self) -> dict:
        norm = self.normalization
        return {"kind": self.kind,
                "normalization": norm if isinstance(norm, str) else getattr(norm, "description", "callable")}


# ---------------------------------------------------------------------------
# SL_2(Z) ball enumeration


def _check_norm_range(N: int) -> None:
    if N > _kernels.MAX_NORM_SQ:
        raise ConfigError(f"norm^2 bound {N} exceeds the int64-safe range {_kernels.MAX_NORM_SQ}")


def estimate_ball_count(T: float) -> float:
    """Leading-order size 6 T^2 of the Frobenius ball (used for budget checks)."""
    return 6.0 * T * T


def count_sl2z_ball(T: float | None = None, norm_sq: int | None = None) -> int:
    """Exact #{gamma in SL_2(Z) : |gamma|_F <= T}; counts only, no emission."""
    N = norm_sq if norm_sq is not None else norm_sq_bound(T)
    if N < 2:
        return 0
    _check_norm_range(N)
    return int(_kernels.sl2z_counts(np.array([N], dtype=np.int64))[0])


def count_sl2z_balls(Ts: Sequence[float]) -> np.ndarray:
    Ns = np.array([norm_sq_bound(T) for T in Ts], dtype=np.int64)
    order = np.argsort(Ns, kind="stable")
    _check_norm_range(int(Ns.max()))
    counts = _kernels.sl2z_counts(np.ascontiguousarray(Ns[order]))
    out = np.empty_like(counts)
    out[order] = counts
    return out


def sl2z_ball_chunks(T: float | None = None, norm_sq: int | None = None,
                     chunk: int = 1 << 20, budget: int | None = DEFAULT_BUDGET) -> Iterator[np.ndarray]:
    """Yield int64 arrays of shape (k, 4) with rows (a, b, c, d), |gamma|_F <= T.

    The order is deterministic: top rows (a, b) ascending lexicographically, then
    the free parameter along the solution line ascending.
    """
    N = norm_sq if norm_sq is not None else norm_sq_bound(T)
    _check_norm_range(N)
    if budget is not None and estimate_ball_count(math.sqrt(N)) > 1.05 * budget + 16:
        raise BudgetExceeded(int(estimate_ball_count(math.sqrt(N))), budget, "lattice points")
    cap = max(int(chunk), 2 * _kernels.isqrt64(N) + 3)
    buf = np.empty((cap, 4), dtype=np.int64)
    R = _kernels.isqrt64(N)
    a, b = -R, -_kernels.isqrt64(N - R * R)
    done = False
    emitted = 0
    while not done:
        filled, a, b, done = _kernels.sl2z_fill(np.int64(N), np.int64(a), np.int64(b), buf)
        emitted += filled
        if budget is not None and emitted > budget:
            raise BudgetExceeded(emitted, budget, "lattice points")
        if filled:
            yield buf[:filled].copy()


def enumerate_sl2z_ball(T: float | None = None, norm_sq: int | None = None,
                        budget: int | None = DEFAULT_BUDGET) -> Iterator[LatticeElement]:
    """Stream every gamma in SL_2(Z) with |gamma|_F <= T exactly once."""
    N = norm_sq if norm_sq is not None else norm_sq_bound(T)
    if N < 2:
        return
    for block in sl2z_ball_chunks(norm_sq=N, budget=budget):
        for a, b, c, d in block.tolist():
            yield LatticeElement(a, b, c, d)


def sl2z_ball_array(T: float | None = None, norm_sq: int | None = None,
                    budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
    N = norm_sq if norm_sq is not None else norm_sq_bound(T)
    if N < 2:
        return np.empty((0, 4), dtype=np.int64)
    blocks = list(sl2z_ball_chunks(norm_sq=N, budget=budget))
    return np.concatenate(blocks) if blocks else np.empty((0, 4), dtype=np.int64)


def write_ball_csv(path, elements: Iterator[LatticeElement] | np.ndarray) -> int:
    """Dump ball elements with columns a,b,c,d,norm; returns the row count."""
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "c", "d", "norm"])
        for e in elements:
            a, b, c, d = e.entries() if isinstance(e, LatticeElement) else (int(v) for v in e)
            w.writerow([a, b, c, d, repr(math.sqrt(a * a + b * b + c * c + d * d))])
            rows += 1
    return rows


# ---------------------------------------------------------------------------
# float matrix groups


@dataclass(frozen=True)
class FloatMatrix:
    data: np.ndarray
    group: str  # "SO3", "SL2R" or "SO21"

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        res = group_residual(data, self.group)
        if res > 1e-9:
            raise ValueError(f"matrix is not in {self.group}: residual {res:.3e}")

    def __matmul__(self, o: "FloatMatrix") -> "FloatMatrix":
        return FloatMatrix(self.data @ o.data, self.group)

    def inverse(self) -> "FloatMatrix":
        return FloatMatrix(np.linalg.inv(self.data), self.group)


LORENTZ = np.diag([1.0, 1.0, -1.0])


def group_residual(M: np.ndarray, group: str) -> float:
    M = np.asarray(M, dtype=float)
    if group == "SO3":
        return float(max(np.max(np.abs(M.T @ M - np.eye(3))), abs(np.linalg.det(M) - 1)))
    if group == "SL2R":
        return float(abs(np.linalg.det(M) - 1))
    if group == "SO21":
        return float(max(np.max(np.abs(M.T @ LORENTZ @ M - LORENTZ)), abs(np.linalg.det(M) - 1)))
    raise ValueError(f"unknown group tag {group!r}")


def _sl2_basis(v):
    x, y, z = v
    return np.array([[x, y + z], [y - z, -x]])


def adjoint_so21(M) -> np.ndarray:
    """Matrix of X -> M X M^{-1} on traceless 2x2 matrices in coordinates (x, y, z)
    with X = [[x, y+z], [y-z, -x]], so that -det X = x^2 + y^2 - z^2 is preserved.
    """
    M = np.asarray(M, dtype=float)
    if abs(np.linalg.det(M) - 1) > 1e-12:
        raise ValueError("adjoint_so21 needs a unimodular matrix")
    Minv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])
    out = np.empty((3, 3))
    for j, e in enumerate(np.eye(3)):
        Y = M @ _sl2_basis(e) @ Minv
        out[:, j] = [Y[0, 0], (Y[0, 1] + Y[1, 0]) / 2, (Y[0, 1] - Y[1, 0]) / 2]
    return out


def adjoint_so21_batch(mats: np.ndarray) -> np.ndarray:
    """Vectorised adjoint for an (n, 4) array of rows (a, b, c, d) with ad - bc = 1."""
    a, b, c, d = (np.asarray(mats[:, i], dtype=float) for i in range(4))
    out = np.empty((len(a), 3, 3))
    # columns are images of (1,0,0), (0,1,0), (0,0,1)
    for j, (x, y, z) in enumerate(np.eye(3)):
        p, q, r_, s = x, y + z, y - z, -x
        # Y = M X M^{-1}, M^{-1} = [[d, -b], [-c, a]]
        y00 = (a * p + b * r_) * d + (a * q + b * s) * (-c)
        y01 = (a * p + b * r_) * (-b) + (a * q + b * s) * a
        y10 = (c * p + d * r_) * d + (c * q + d * s) * (-c)
        out[:, 0, j] = y00
        out[:, 1, j] = (y01 + y10) / 2
        out[:, 2, j] = (y01 - y10) / 2
    return out


def rotation_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    K = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def quaternion_rotation(q) -> np.ndarray:
    """Rotation matrix of the unit quaternion q / |q| with q = (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def lps_rotations(p: int = 5) -> list:
    """The (p+1)/2 rotations from integer quaternions of norm p with a > 0 odd and
    b, c, d even (p = 1 mod 4); together with their inverses they generate a free group.
    """
    if p % 4 != 1:
        raise ValueError("p must be 1 mod 4")
    sols = []
    r = int(math.isqrt(p))
    for a, b, c, d in itertools.product(range(-r, r + 1), repeat=4):
        if a * a + b * b + c * c + d * d == p and a > 0 and a % 2 == 1 \
                and b % 2 == 0 and c % 2 == 0 and d % 2 == 0:
            sols.append((a, b, c, d))
    # keep one of each conjugate pair (the conjugate gives the inverse rotation)
    chosen = []
    for s in sorted(sols, reverse=True):
        conj = (s[0], -s[1], -s[2], -s[3])
        if conj not in chosen:
            chosen.append(s)
    return [quaternion_rotation(q) for q in sorted(chosen, reverse=True)]


# ---------------------------------------------------------------------------
# congruence quotients


def sl2_mod_order(N: int) -> int:
    order = N ** 3
    num, den = 1, 1
    n, p = N, 2
    while n > 1:
        if n % p == 0:
            num *= p * p - 1
            den *= p * p
            while n % p == 0:
                n //= p
        p += 1
    return order * num // den


class CongruenceQuotient:
    """SL_2(Z/N) with exact modular arithmetic; elements are tuples (a, b, c, d)."""

    def __init__(self, N: int):
        if N < 2:
            raise ValueError("modulus must be >= 2")
        self.N = N
        self.elements = [e for e in itertools.product(range(N), repeat=4)
                         if (e[0] * e[3] - e[1] * e[2]) % N == 1]
        self.index = {e: i for i, e in enumerate(self.elements)}
        # dense lookup from packed residues to element index
        self._lut = np.full(N ** 4, -1, dtype=np.int64)
        for i, (a, b, c, d) in enumerate(self.elements):
            self._lut[((a * N + b) * N + c) * N + d] = i

    @property
    def order(self) -> int:
        return len(self.elements)

    def mul(self, x, y):
        N = self.N
        a, b, c, d = x
        e, f, g, h = y
        return ((a * e + b * g) % N, (a * f + b * h) % N, (c * e + d * g) % N, (c * f + d * h) % N)

    def inv(self, x):
        N = self.N
        a, b, c, d = x
        return (d % N, -b % N, -c % N, a % N)

    def identity(self):
        return (1, 0, 0, 1 % self.N)

    def reduce(self, g) -> tuple:
        if isinstance(g, LatticeElement):
            g = g.entries()
        elif len(g) == 2:
            g = (g[0][0], g[0][1], g[1][0], g[1][1])
        return tuple(int(v) % self.N for v in g)

    def indices_of(self, mats: np.ndarray) -> np.ndarray:
        """Element indices of an (n, 4) integer array, reduced mod N."""
        N = self.N
        r = np.mod(mats, N)
        return self._lut[((r[:, 0] * N + r[:, 1]) * N + r[:, 2]) * N + r[:, 3]]

    def left_regular_action(self, generators: Sequence, name: str | None = None) -> FiniteAction:
        """F_r acting on SL_2(Z/N) by left multiplication through the given generator images."""
        perms = []
        for g in generators:
            g = self.reduce(g)
            perms.append([self.index[self.mul(g, x)] for x in self.elements])
        act = FiniteAction(perms, name=name or f"SL2(Z/{self.N})")
        return act

    def generated_order(self, generators: Sequence) -> int:
        gens = [self.reduce(g) for g in generators]
        gens = gens + [self.inv(g) for g in gens]
        seen = {self.identity()}
        frontier = [self.identity()]
        while frontier:
            nxt = []
            for x in frontier:
                for g in gens:
                    y = self.mul(g, x)
                    if y not in seen:
                        seen.add(y)
                        nxt.append(y)
            frontier = nxt
        return len(seen)


SANOV_GENERATORS = (LatticeElement(1, 2, 0, 1), LatticeElement(1, 0, 2, 1))
ELEMENTARY_GENERATORS = (LatticeElement(1, 1, 0, 1), LatticeElement(1, 0, 1, 1))
