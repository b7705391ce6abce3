"""Exact combinatorics of the free group F_r.

Letters are packed as small integers: generator ``g_i`` (1-based) is letter
``2*(i-1)`` and its inverse is ``2*(i-1) + 1``, so ``l ^ 1`` inverts a letter and
the natural integer order is ``g1 < g1^-1 < g2 < g2^-1 < ...``.

A word ``l1 l2 ... ln`` acts on the left, ``w.x = l1(l2(...ln(x)))``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import BudgetExceeded, ConfigError

DEFAULT_BUDGET = 10**8


def inverse_letter(letter: int) -> int:
    return letter ^ 1


def letter_name(letter: int) -> str:
    ch = chr(ord("a") + letter // 2)
    return ch.upper() if letter & 1 else ch


def free_reduce(letters: Sequence[int]) -> tuple:
    """Freely reduce a letter sequence (cancel adjacent inverse pairs)."""
    stack = []
    for l in letters:
        if stack and stack[-1] == (l ^ 1):
            stack.pop()
        else:
            stack.append(l)
    return tuple(stack)


def sphere_size(rank: int, n: int) -> int:
    if n == 0:
        return 1
    return 2 * rank * (2 * rank - 1) ** (n - 1)


def ball_size(rank: int, n: int) -> int:
    return sum(sphere_size(rank, k) for k in range(n + 1))


@dataclass(frozen=True)
class ReducedWord:
    letters: tuple
    rank: int

    def __post_init__(self):
        if self.rank < 2:
            raise ValueError(f"rank must be >= 2, got {self.rank}")
        letters = tuple(int(l) for l in self.letters)
        object.__setattr__(self, "letters", letters)
        top = 2 * self.rank
        for i, l in enumerate(letters):
            if not 0 <= l < top:
                raise ValueError(f"letter {l} outside alphabet of rank {self.rank}")
            if i and letters[i - 1] == (l ^ 1):
                raise ValueError(f"word {letters} is not reduced at position {i}")

    @classmethod
    def from_letters(cls, letters: Sequence[int], rank: int) -> "ReducedWord":
        return cls(free_reduce(letters), rank)

    @classmethod
    def identity(cls, rank: int) -> "ReducedWord":
        return cls((), rank)

    @classmethod
    def generator(cls, i: int, rank: int) -> "ReducedWord":
        """The 1-based generator ``g_i``."""
        return cls((2 * (i - 1),), rank)

    @classmethod
    def parse(cls, text: str, rank: int) -> "ReducedWord":
        """Parse ``"aBb"``-style strings; lowercase = generator, uppercase = inverse."""
        letters = []
        for ch in text.strip():
            if ch in "e1":
                continue
            idx = ord(ch.lower()) - ord("a")
            letters.append(2 * idx + (1 if ch.isupper() else 0))
        return cls.from_letters(letters, rank)

    @property
    def length(self) -> int:
        return len(self.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __mul__(self, other: "ReducedWord") -> "ReducedWord":
        if other.rank != self.rank:
            raise ValueError("rank mismatch")
        return ReducedWord.from_letters(self.letters + other.letters, self.rank)

    def inverse(self) -> "ReducedWord":
        return ReducedWord(tuple(l ^ 1 for l in reversed(self.letters)), self.rank)

    def __str__(self) -> str:
        return "".join(letter_name(l) for l in self.letters) or "e"


def sign_character(word: ReducedWord) -> int:
    """The homomorphism F_r -> {+1, -1} given by word-length parity."""
    return 1 if len(word.letters) % 2 == 0 else -1


def _check_budget(count: int, budget: int | None) -> None:
    if budget is not None and count > budget:
        raise BudgetExceeded(count, budget, "words")


def enumerate_sphere(rank: int, n: int, budget: int | None = DEFAULT_BUDGET,
                     first_letters: Sequence[int] | None = None) -> Iterator[ReducedWord]:
    """Stream the reduced words of length exactly ``n`` in lexicographic order.

    ``first_letters`` restricts the stream to words starting with those letters,
    which partitions the sphere into at most ``2r`` independent shards.
    """
    if rank < 2 or n < 0:
        raise ValueError("need rank >= 2 and n >= 0")
    firsts = sorted(range(2 * rank) if first_letters is None else set(first_letters))
    count = 1 if n == 0 else len(firsts) * (2 * rank - 1) ** (n - 1)
    _check_budget(count, budget)
    if n == 0:
        yield ReducedWord((), rank)
        return
    for first in firsts:
        for letters in _odometer(rank, n, first):
            yield ReducedWord(letters, rank)


def _odometer(rank: int, n: int, first: int) -> Iterator[tuple]:
    top = 2 * rank

    def smallest_after(prev, start):
        l = start
        while l < top and l == (prev ^ 1):
            l += 1
        return l

    word = [first]
    for _ in range(1, n):
        word.append(smallest_after(word[-1], 0))
    while True:
        yield tuple(word)
        pos = n - 1
        while pos > 0:
            nxt = smallest_after(word[pos - 1], word[pos] + 1)
            if nxt < top:
                word[pos] = nxt
                for j in range(pos + 1, n):
                    word[j] = smallest_after(word[j - 1], 0)
                break
            pos -= 1
        else:
            return


def enumerate_ball(rank: int, n: int, budget: int | None = DEFAULT_BUDGET) -> Iterator[ReducedWord]:
    _check_budget(ball_size(rank, n), budget)
    for k in range(n + 1):
        yield from enumerate_sphere(rank, k, budget=None)


# ---------------------------------------------------------------------------
# homomorphisms into concrete groups


class PermutationTarget:
    """Permutations of ``range(m)`` as int arrays; ``(p*q)[x] = p[q[x]]``."""

    kind = "permutation"

    def __init__(self, size: int):
        self.size = size

    def identity(self):
        return np.arange(self.size)

    def mul(self, p, q):
        return p[q]

    def inv(self, p):
        out = np.empty_like(p)
        out[p] = np.arange(len(p))
        return out

    def equal(self, p, q) -> bool:
        return bool(np.array_equal(p, q))


class IntMatrixTarget:
    """Square integer matrices (tuples of tuples), optionally reduced mod N."""

    kind = "int_matrix"

    def __init__(self, dim: int = 2, modulus: int | None = None):
        self.dim = dim
        self.modulus = modulus

    def _red(self, m):
        if self.modulus is None:
            return tuple(tuple(int(v) for v in row) for row in m)
        return tuple(tuple(int(v) % self.modulus for v in row) for row in m)

    def identity(self):
        return self._red([[int(i == j) for j in range(self.dim)] for i in range(self.dim)])

    def mul(self, p, q):
        d = self.dim
        return self._red([[sum(p[i][k] * q[k][j] for k in range(d)) for j in range(d)]
                          for i in range(d)])

    def inv(self, p):
        if self.dim != 2:
            import sympy
            m = sympy.Matrix(p)
            if self.modulus is None:
                inv = m.inv()
                if any(v.q != 1 for v in inv):
                    raise ValueError("matrix is not invertible over the integers")
                return self._red(inv.tolist())
            return self._red(m.inv_mod(self.modulus).tolist())
        (a, b), (c, d) = p
        det = a * d - b * c
        if self.modulus is None:
            if det not in (1, -1):
                raise ValueError("matrix is not invertible over the integers")
            return self._red([[d * det, -b * det], [-c * det, a * det]])
        di = pow(det % self.modulus, -1, self.modulus)
        return self._red([[d * di, -b * di], [-c * di, a * di]])

    def equal(self, p, q) -> bool:
        return p == q


class FloatMatrixTarget:
    kind = "float_matrix"

    def __init__(self, dim: int):
        self.dim = dim

    def identity(self):
        return np.eye(self.dim)

    def mul(self, p, q):
        return p @ q

    def inv(self, p):
        return np.linalg.inv(p)

    def equal(self, p, q, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(np.asarray(p) - np.asarray(q))) <= tol)


class GroupHom:
    """A homomorphism F_r -> target group given by generator images."""

    def __init__(self, images: Sequence, target):
        if len(images) < 2:
            raise ValueError("need at least two generator images")
        self.target = target
        self.rank = len(images)
        self.letter_images = []
        for g in images:
            g = np.asarray(g) if target.kind != "int_matrix" else target._red(g)
            self.letter_images.extend([g, target.inv(g)])

    def apply(self, word: ReducedWord):
        if word.rank != self.rank:
            raise ValueError("rank mismatch")
        out = self.target.identity()
        for l in word.letters:
            out = self.target.mul(out, self.letter_images[l])
        return out


def sphere_sum(f: Callable, hom: GroupHom, x, n: int, act: Callable,
               budget: int | None = DEFAULT_BUDGET) -> float:
    """Streamed ``sum_{gamma in S_n} f(gamma^{-1} x)`` by explicit word enumeration."""
    terms = []
    for w in enumerate_sphere(hom.rank, n, budget=budget):
        terms.append(f(act(hom.apply(w.inverse()), x)))
    return float(np.sum(np.asarray(terms, dtype=float))) if terms else 0.0


# ---------------------------------------------------------------------------
# finite permutation actions


class FiniteAction:
    """Action of F_r on ``range(m)`` through permutation images of the generators."""

    def __init__(self, generator_perms: Sequence[Sequence[int]], name: str = ""):
        perms = [np.asarray(p, dtype=np.int64) for p in generator_perms]
        if len(perms) < 2:
            raise ValueError("need at least two generators")
        m = len(perms[0])
        for p in perms:
            if len(p) != m or not np.array_equal(np.sort(p), np.arange(m)):
                raise ValueError("generator images must be permutations of range(m)")
        self.rank = len(perms)
        self.size = m
        self.name = name
        self.letter_perms = []
        for p in perms:
            inv = np.empty_like(p)
            inv[p] = np.arange(m)
            self.letter_perms.extend([p, inv])
        for p in self.letter_perms:
            p.setflags(write=False)

    @classmethod
    def from_hom(cls, hom: GroupHom, points: Sequence, key: Callable = lambda g: g,
                 act: Callable | None = None, name: str = "") -> "FiniteAction":
        """Build the action of ``hom`` on a finite list of points (hashable via ``key``)."""
        index = {key(p): i for i, p in enumerate(points)}
        if act is None:
            act = hom.target.mul
        perms = []
        for i in range(hom.rank):
            g = hom.letter_images[2 * i]
            perms.append([index[key(act(g, p))] for p in points])
        return cls(perms, name=name)

    def act(self, word: ReducedWord, x: int) -> int:
        for l in reversed(word.letters):
            x = int(self.letter_perms[l][x])
        return x

    def letter_matrix(self, letter: int) -> np.ndarray:
        m = self.size
        P = np.zeros((m, m), dtype=np.int64)
        P[self.letter_perms[letter], np.arange(m)] = 1
        return P

    def sphere_operators(self, nmax: int) -> list:
        """Integer matrices ``S_n[y, x] = #{gamma in S_n : gamma^{-1} x = y}``.

        Computed by pushing counts through the non-backtracking transfer on
        (point, leftmost letter) pairs, so every word of the sphere is accounted
        for exactly once.
        """
        if ball_size(self.rank, nmax) >= 2**62:
            raise OverflowError("sphere counts would overflow int64")
        m, L = self.size, 2 * self.rank
        eye = np.eye(m, dtype=np.int64)
        ops = [eye]
        if nmax == 0:
            return ops
        # T[l][y, x]: words of the current length with leftmost letter l and gamma.x = y
        # (spheres are inversion-closed, so counting gamma.x counts gamma^{-1}.x).
        inv_perms = [self.letter_perms[l ^ 1] for l in range(L)]
        T = [eye[inv_perms[l], :] for l in range(L)]
        ops.append(sum(T))
        for _ in range(2, nmax + 1):
            total = sum(T)
            T = [(total - T[l ^ 1])[inv_perms[l], :] for l in range(L)]
            ops.append(sum(T))
        return ops

    def recursion_operators(self, nmax: int) -> list:
        """Sphere operators from ``S1 S_n = S_{n+1} + q S_{n-1}`` (q = 2r at n = 1, else 2r-1)."""
        m, r = self.size, self.rank
        ops = [np.eye(m, dtype=np.int64)]
        if nmax == 0:
            return ops
        S1 = sum(self.letter_matrix(l) for l in range(2 * r))
        ops.append(S1)
        for n in range(1, nmax):
            q = 2 * r if n == 1 else 2 * r - 1
            ops.append(S1 @ ops[n] - q * ops[n - 1])
        return ops

    def sphere_sum(self, f: np.ndarray, x: int, n: int) -> float:
        S = self.sphere_operators(n)[n]
        return float(np.dot(S[:, x], np.asarray(f)))

    def generator_average(self) -> np.ndarray:
        m = self.size
        A = np.zeros((m, m))
        for l in range(2 * self.rank):
            A[self.letter_perms[l], np.arange(m)] += 1.0
        return A / (2 * self.rank)

    def orbits(self, even: bool = False) -> list:
        """Orbits of F_r (or of the even-length-word subgroup) as sorted lists."""
        if even:
            steps = [self.letter_perms[a][self.letter_perms[b]]
                     for a in range(2 * self.rank) for b in range(2 * self.rank)]
        else:
            steps = self.letter_perms
        seen = np.full(self.size, -1)
        out = []
        for start in range(self.size):
            if seen[start] >= 0:
                continue
            seen[start] = len(out)
            comp, queue = [start], deque([start])
            while queue:
                y = queue.popleft()
                for p in steps:
                    z = int(p[y])
                    if seen[z] < 0:
                        seen[z] = len(out)
                        comp.append(z)
                        queue.append(z)
            out.append(sorted(comp))
        return out

    def is_transitive(self) -> bool:
        return len(self.orbits()) == 1

    def bipartition(self):
        """Two-colouring of the Schreier graph by word parity, or None if an odd cycle exists."""
        color = np.full(self.size, -1)
        color[0] = 0
        queue = deque([0])
        while queue:
            y = queue.popleft()
            for p in self.letter_perms:
                z = int(p[y])
                if color[z] < 0:
                    color[z] = 1 - color[y]
                    queue.append(z)
                elif color[z] == color[y]:
                    return None
        if np.any(color < 0):
            raise ConfigError("bipartition requires a transitive action")
        return color


# ---------------------------------------------------------------------------
# profinite metric from a chain of finite-index subgroups


class SubgroupChain:
    """Nested finite-index subgroups ``Gamma_1 > Gamma_2 > ...`` given by coset actions.

    Level ``i`` is the permutation action of F_r on ``F_r / Gamma_i`` with the
    base coset at index ``base``; ``gamma in Gamma_i`` iff it fixes the base.
    """

    def __init__(self, levels: Sequence[FiniteAction], base: int = 0):
        if not levels:
            raise ConfigError("empty subgroup chain")
        self.levels = list(levels)
        self.base = base
        rank = self.levels[0].rank
        if any(lv.rank != rank for lv in self.levels):
            raise ConfigError("all levels must be actions of the same free group")
        for lv in self.levels:
            if not lv.is_transitive():
                raise ConfigError(f"level {lv.name or lv.size} is not a transitive coset action")
        self.indices = [lv.size for lv in self.levels]
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ConfigError(f"indices must be strictly increasing, got {self.indices}")
        self.rank = rank
        self.projections = []
        for upper, lower in zip(self.levels, self.levels[1:]):
            proj = _equivariant_projection(lower, upper, base)
            if proj is None:
                raise ConfigError(f"chain not nested between indices {upper.size} and {lower.size}")
            self.projections.append(proj)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def index_jumps(self) -> list:
        return [b // a for a, b in zip(self.indices, self.indices[1:])]


def _equivariant_projection(fine: FiniteAction, coarse: FiniteAction, base: int):
    phi = np.full(fine.size, -1)
    phi[base] = base
    queue = deque([base])
    while queue:
        y = queue.popleft()
        for l in range(2 * fine.rank):
            z = int(fine.letter_perms[l][y])
            w = int(coarse.letter_perms[l][phi[y]])
            if phi[z] < 0:
                phi[z] = w
                queue.append(z)
            elif phi[z] != w:
                return None
    return phi


def profinite_metric(w1: ReducedWord, w2: ReducedWord, chain: SubgroupChain) -> float:
    """``max{1/|F_r:Gamma_i| : w1^{-1} w2 not in Gamma_i}`` over the recorded levels (0 if none)."""
    g = w1.inverse() * w2
    for idx, level in zip(chain.indices, chain.levels):
        if level.act(g, chain.base) != chain.base:
            return 1.0 / idx
    return 0.0
