"""Test functions with certified Hölder data, and the parity vector of a finite action."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import InvariantViolation, ResolutionError
from .freegroup import FiniteAction
from .spaces import Circle, FiniteCoset, GSpace, Plane, Sphere2

PROFILES = ("holder", "c1")


@dataclass
class TestFunction:
    """f with supp f inside X_r, |f| <= sup_bound and |f(x) - f(y)| <= constant d(x, y)^a."""

    __test__ = False  # not a pytest class

    evaluate: Callable
    space: GSpace
    support_radius: float
    exponent: float
    constant: float
    sup_bound: float
    exact_mean: float | None = None
    indicator: bool = False
    meta: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.evaluate(x)

    @property
    def in_unit_ball(self) -> bool:
        """Membership in C^a(X)_1: sup bound plus Hölder constant at most one."""
        return self.sup_bound + self.constant <= 1 + 1e-12

    def describe(self) -> dict:
        return {"support_radius": self.support_radius, "exponent": self.exponent,
                "constant": self.constant, "sup_bound": self.sup_bound,
                "exact_mean": self.exact_mean, "indicator": self.indicator, **self.meta}


def _profile(profile: str, a: float, radius: float):
    if profile == "holder":
        return (lambda d: np.maximum(0.0, 1.0 - (np.asarray(d) / radius) ** a)), radius ** -a
    if profile == "c1":
        if a != 1:
            raise ValueError("the C^1 profile is certified for a = 1 only")

        def phi(d):
            s = np.minimum(np.asarray(d) / radius, 1.0)
            return (1.0 - s * s) ** 2
        # max |d/ds (1 - s^2)^2| = 8 / (3 sqrt 3) at s = 1/sqrt 3
        return phi, 8.0 / (3.0 * math.sqrt(3.0)) / radius
    raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")


def radial_mean(space: GSpace, phi: Callable, radius: float, center=None) -> float | None:
    """Integral of phi(d(x, center)) against the space's reference measure, when closed-form
    geometry reduces it to a one-dimensional quadrature."""
    if isinstance(space, Sphere2):
        R = min(radius, math.pi)
        val, _ = integrate.quad(lambda t: float(phi(t)) * math.sin(t), 0, R, epsabs=1e-13, epsrel=1e-12)
        return 0.5 * val
    if isinstance(space, Circle):
        R = min(radius, math.pi / 2)
        val, _ = integrate.quad(lambda t: float(phi(t)), 0, R, epsabs=1e-13, epsrel=1e-12)
        return 2 * val / math.pi
    if isinstance(space, Plane):
        if center is not None and np.linalg.norm(center) <= radius:
            return None  # support meets the removed origin; no closed form used
        val, _ = integrate.quad(lambda s: float(phi(s)) * s, 0, radius, epsabs=1e-13, epsrel=1e-12)
        return 2 * math.pi * val
    return None


def make_bump(space: GSpace, center, radius: float, a: float = 1.0, profile: str = "holder",
              normalize: bool = True, support_radius: float | None = None) -> TestFunction:
    """Radial bump phi(d(x, center)) with phi(0) = 1 and phi = 0 beyond ``radius``.

    ``profile="holder"`` is 1 - (d/radius)^a with constant radius^-a;
    ``profile="c1"`` is (1 - (d/radius)^2)^2, Lipschitz with constant 8/(3 sqrt 3 radius).
    With ``normalize`` the bump is divided by 1 + constant so that it lies in C^a(X)_1.
    """
    if radius <= 0 or not (0 < a <= 1):
        raise ValueError("need radius > 0 and a in (0, 1]")
    if radius < space.resolution:
        raise ResolutionError(f"radius {radius} below the metric resolution {space.resolution}")
    phi, C = _profile(profile, a, radius)
    scale = 1.0 / (1.0 + C) if normalize else 1.0
    center = center if isinstance(space, FiniteCoset) else np.asarray(center, float)

    def evaluate(x):
        return scale * phi(space.dist(center, x))

    if isinstance(space, FiniteCoset):
        vals = evaluate(np.arange(space.size))
        mean = float(np.mean(vals))
    else:
        m = radial_mean(space, phi, radius, center)
        mean = None if m is None else scale * m
    if support_radius is None:
        support_radius = math.pi if isinstance(space, Sphere2) else float("inf")
    return TestFunction(evaluate, space, support_radius, a, scale * C, scale, mean,
                        meta={"profile": profile, "radius": radius, "normalized": normalize,
                              "center": np.asarray(center).tolist()})


def indicator(space: FiniteCoset, points) -> TestFunction:
    """Indicator of a subset of a finite space (flagged: legal only in ratio statistics
    and transitive-action experiments)."""
    mask = np.zeros(space.size)
    mask[np.asarray(points, dtype=int)] = 1.0
    return TestFunction(lambda x: mask[np.asarray(x)], space, 1.0, 1.0, 1.0, 1.0,
                        float(mask.mean()), indicator=True, meta={"points": list(map(int, np.atleast_1d(points)))})


def from_values(space: FiniteCoset, values) -> TestFunction:
    v = np.asarray(values, float)
    sup = float(np.max(np.abs(v)))
    # discrete metric: |f(x) - f(y)| <= max - min for x != y
    const = float(v.max() - v.min())
    return TestFunction(lambda x: v[np.asarray(x)], space, 1.0, 1.0, const, sup, float(v.mean()))


def holder_modulus(f: TestFunction, eps: float, points) -> float:
    """Empirical sup of |f(z) - f(w)| over sample pairs with d(z, w) < eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    pts = np.asarray(points)
    vals = np.asarray(f(pts), float)
    best, found = 0.0, False
    block = max(1, 4_000_000 // max(len(pts), 1))
    for s in range(0, len(pts), block):
        chunk = pts[s:s + block]
        close = np.asarray(f.space.dist(chunk[:, None], pts[None])) < eps
        idx = np.arange(s, s + len(chunk))
        close[np.arange(len(chunk)), idx] = False
        if np.any(close):
            found = True
            diff = np.abs(vals[s:s + len(chunk), None] - vals[None, :])
            best = max(best, float(np.max(np.where(close, diff, 0.0))))
    if not found:
        raise ResolutionError(f"no sampled pair closer than {eps}")
    return best


def holder_audit(f: TestFunction, xs, ys, tol: float = 1e-9) -> float:
    """Check |f(x) - f(y)| <= C d(x, y)^a on the given pairs; returns the worst ratio.

    A breach raises :class:`InvariantViolation` with the offending pair.
    """
    xs, ys = np.asarray(xs), np.asarray(ys)
    d = np.asarray(f.space.dist(xs, ys), float)
    lhs = np.abs(np.asarray(f(xs), float) - np.asarray(f(ys), float))
    rhs = f.constant * d ** f.exponent
    excess = lhs - rhs * (1 + tol) - tol
    if np.any(excess > 0):
        i = int(np.argmax(excess))
        raise InvariantViolation(f"Hölder certificate breached: {lhs[i]:.3e} > {rhs[i]:.3e}",
                                 witness=(xs[i].tolist() if xs.ndim > 1 else int(xs[i]),
                                          ys[i].tolist() if ys.ndim > 1 else int(ys[i])))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, 0.0)
    return float(np.max(ratio)) if len(ratio) else 0.0


def parity_vector(action: FiniteAction | GSpace) -> np.ndarray | None:
    """Unit vector (counting measure) spanning the sign-character eigenspace, or None.

    It exists exactly when the even-length words have two orbits, i.e. the
    Schreier graph is bipartite; then f0 = +-1/sqrt(m) by colour class.
    Connected continua never carry one.
    """
    if isinstance(action, GSpace):
        if action.connected or not isinstance(action, FiniteCoset):
            return None
        action = action.action
    if not action.is_transitive():
        raise ValueError("parity_vector expects a transitive action")
    color = action.bipartition()
    n_even = len(action.orbits(even=True))
    if color is None:
        assert n_even == 1
        return None
    assert n_even == 2
    return np.where(color == 0, 1.0, -1.0) / math.sqrt(action.size)
