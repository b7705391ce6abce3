import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from orbitlab.errors import ConfigError, FitError, UndefinedRegime
from orbitlab.ergodic import (BallAverageSpec, DensityIntegral, ErrorSeries, FreeParity, MeanProjection,
                              RatioStat, WordBall, annulus_indicator, balance_epsilon, ball_average,
                              coarse_monotone_check, empirical_limit_density, error_series,
                              finite_ball_sums, finite_error_series, finite_ratio_statistic,
                              fit_exponent, free_limit_operator, lattice_ratio_statistic,
                              lebesgue_chi_square, limit_apply, mass_bound, power_annulus_mass,
                              predict_uniform_rate, radial_power_fit, sample_near_identity,
                              sup_error, total_variation, transitive_rate, window_sup)
from orbitlab.freegroup import ball_size, enumerate_ball, sphere_size
from orbitlab.holder import make_bump, parity_vector
from orbitlab.matgroup import (LatticeElement, NormBallFamily, lps_rotations, operator_norm,
                               power_normalization)
from orbitlab.oracles import SpectralOracle, word_list_sphere_columns
from orbitlab.orbits import AnnulusBinner, lattice_orbit_chunks
from orbitlab.spaces import FiniteCoset, Plane, Sphere2


# ---------------------------------------------------------------------------
# ball averages


def test_constant_function_averages_to_one(sl2_mod5):
    _, action = sl2_mod5
    spec = BallAverageSpec(WordBall(2, action), FiniteCoset(action), [1, 4, 6])
    ones = np.ones(action.size)
    for t in spec.times:
        assert ball_average(spec, ones, 3, t) == 1.0

    S = Sphere2()
    rots = lps_rotations(5)
    sspec = BallAverageSpec(WordBall(3, matrices=tuple(rots)), S, [1, 2, 3])
    const = make_bump(S, [0, 0, 1], math.pi, normalize=False)
    const.evaluate = lambda pts: np.ones(len(np.atleast_2d(pts)))
    for t in sspec.times:
        assert ball_average(sspec, const, np.array([0.0, 0.0, 1.0]), t) == pytest.approx(1.0, abs=1e-15)

    P = Plane()
    pspec = BallAverageSpec(NormBallFamily(), P, [math.log(5), math.log(20)])
    for t in pspec.times:
        avg = ball_average(pspec, lambda pts: np.ones(len(pts)), np.array([1.0, 0.5]), t)
        assert avg == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("fixture", ["sl2_mod3", "sl2_mod5", "sl2_mod2"])
def test_finite_ball_average_matches_word_list(fixture, request, rng):
    _, action = request.getfixturevalue(fixture)
    f = rng.integers(-50, 50, size=action.size).astype(float)
    nmax = 8
    for x in (0, action.size // 2, action.size - 1):
        cols = word_list_sphere_columns(action, x, nmax)
        ball_counts = np.cumsum(cols, axis=0)
        sums = finite_ball_sums(action, f, range(nmax + 1))
        for n in range(nmax + 1):
            # integer data: the comparison is exact
            assert sums[n, x] == float(ball_counts[n] @ f)


def test_finite_ball_average_matches_action_on_words(sl2_mod3, rng):
    _, action = sl2_mod3
    f = rng.normal(size=action.size)
    spec = BallAverageSpec(WordBall(2, action), FiniteCoset(action), [4])
    x = 5
    direct = math.fsum(f[action.act(w.inverse(), x)] for w in enumerate_ball(2, 4))
    assert ball_average(spec, f, x, 4) == pytest.approx(direct / ball_size(2, 4), rel=1e-13)


def test_invariant_function_is_fixed():
    S = Sphere2()
    rots = lps_rotations(5)
    spec = BallAverageSpec(WordBall(3, matrices=tuple(rots)), S, [2])
    f = make_bump(S, [0, 0, 1], math.pi, normalize=False)
    f.evaluate = lambda pts: np.full(len(np.atleast_2d(pts)), 0.37)
    assert ball_average(spec, f, np.array([1.0, 0.0, 0.0]), 2) == pytest.approx(0.37, abs=1e-15)


@given(seed=st.integers(0, 2 ** 20), n=st.integers(0, 8), c=st.floats(-3, 3))
def test_linearity_positivity_contraction(seed, n, c):
    action = _cached_mod3()
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2, action.size))
    sf = finite_ball_sums(action, f, [n])[0]
    sg = finite_ball_sums(action, g, [n])[0]
    sfg = finite_ball_sums(action, f + c * g, [n])[0]
    assert np.allclose(sfg, sf + c * sg, atol=1e-9 * ball_size(2, n))
    pos = finite_ball_sums(action, np.abs(f), [n])[0]
    assert np.all(pos >= 0)
    avg = sf / ball_size(2, n)
    assert np.max(np.abs(avg)) <= np.max(np.abs(f)) + 1e-12


_MOD3 = {}


def _cached_mod3():
    if "a" not in _MOD3:
        from orbitlab.matgroup import SANOV_GENERATORS, CongruenceQuotient
        _MOD3["a"] = CongruenceQuotient(3).left_regular_action(SANOV_GENERATORS)
    return _MOD3["a"]


def test_nan_from_action_is_hard_error():
    S = Sphere2()
    spec = BallAverageSpec(WordBall(3, matrices=tuple(lps_rotations(5))), S, [1])
    f = make_bump(S, [0, 0, 1], 1.0)
    f.evaluate = lambda pts: np.full(len(np.atleast_2d(pts)), np.nan)
    with pytest.raises(FloatingPointError):
        ball_average(spec, f, np.array([0.0, 0.0, 1.0]), 1)


def test_spec_validation(sl2_mod3):
    _, action = sl2_mod3
    X = FiniteCoset(action)
    with pytest.raises(ConfigError):
        BallAverageSpec(WordBall(2, action), X, [2, 2])
    with pytest.raises(ConfigError):
        BallAverageSpec(WordBall(2, action), X, [1, 40], budget=10 ** 6)
    spec = BallAverageSpec(WordBall(2, action), X, [1], normalization=lambda t: 0.0)
    with pytest.raises(ConfigError):
        spec.V(1)


# ---------------------------------------------------------------------------
# limit operators


def test_mean_projection_and_free_parity_basics(sl2_mod2):
    _, action = sl2_mod2
    assert MeanProjection().apply(np.full(7, 2.5), 0) == 2.5
    with pytest.raises(ConfigError):
        MeanProjection().apply(_no_mean(), 0)
    f0 = parity_vector(action)
    op = FreeParity(2, f0)
    for x in range(action.size):
        assert limit_apply(op, f0, x) == pytest.approx(0.5 * f0[x], abs=1e-15)
    f = np.arange(action.size, dtype=float)
    assert FreeParity(2, None).apply(f, 3) == pytest.approx(f.mean())
    with pytest.raises(ConfigError):
        free_limit_operator(action, None)


def _no_mean():
    f = make_bump(Plane(), [0.5, 0.0], 1.0)
    assert f.exact_mean is None
    return f


@pytest.mark.parametrize("fixture", ["sl2_mod2", "sl2_mod3", "sl2_mod5"])
def test_free_parity_matches_spectral_limit(fixture, request, rng):
    _, action = request.getfixturevalue(fixture)
    oracle = SpectralOracle(action)
    op = free_limit_operator(action, parity_vector(action))
    assert np.allclose(op.matrix(action.size), oracle.limit_operator(), atol=1e-10)
    # sign of f0 does not matter
    if op.f0 is not None:
        assert np.allclose(FreeParity(2, -op.f0).matrix(action.size), op.matrix(action.size))
    # even-ball averages approach the limit no slower than C rho0^(2n)
    f = rng.normal(size=action.size)
    ns = list(range(1, 9))
    C = oracle.deviation_constant(f, ns)
    rho0 = oracle.rho0()
    sums = finite_ball_sums(action, f, [2 * n for n in ns])
    P = op.matrix(action.size) @ f
    for k, n in enumerate(ns):
        dev = np.max(np.abs(sums[k] / ball_size(2, 2 * n) - P))
        assert dev <= C * rho0 ** (2 * n) * (1 + 1e-9) + 1e-12


def test_sign_character_coupling(sl2_mod2):
    _, action = sl2_mod2
    f0 = parity_vector(action)
    for n in range(0, 10):
        signed = sum((-1) ** k * sphere_size(2, k) for k in range(n + 1))
        avg = finite_ball_sums(action, f0, [n])[0] / ball_size(2, n)
        assert np.allclose(avg, f0 * signed / ball_size(2, n), atol=1e-15)
        if n % 2:
            # odd balls: f0 times minus the surplus of odd-length words
            assert signed < 0


def test_density_integral_quadrature():
    P = Plane()
    pts, w = P.sample(1 << 16, seed=3, r=4.0)
    op = DensityIntegral(alpha=1.0, points=pts, weights=w)
    f = annulus_indicator(1.0, 2.0)
    x = np.array([2.0, 0.0])
    # int over 1 <= |y| <= 2 of |x|^-1 |y|^-1 dy = 2 pi (2 - 1) / |x|
    assert op.apply(lambda p: f(p).astype(float), x) == pytest.approx(math.pi, rel=5e-3)
    assert np.all(op.weight(x, pts) > 0)
    with pytest.raises(ConfigError):
        DensityIntegral(1.0).apply(f, x)


# ---------------------------------------------------------------------------
# error series, sup errors, fits


def test_error_series_vanishes_on_fixed_space(sl2_mod5):
    _, action = sl2_mod5
    op = FreeParity(2, None)
    s = finite_error_series(action, np.full(action.size, 0.7), op, [2, 4, 6], p=2)
    assert max(s.values) <= 1e-15
    P = Plane()
    spec = BallAverageSpec(NormBallFamily(), P, [math.log(4), math.log(8)])
    const = lambda pts: np.full(len(pts), 0.5)
    es = error_series(spec, const, _ConstOp(0.5), P.sample(4, r=2.0)[0], p=1)
    assert max(es.values) <= 1e-14
    assert es.meta["sample_size"] == 4


class _ConstOp:
    def __init__(self, c):
        self.c = c

    def apply(self, f, x, space=None):
        return self.c


def test_sup_dominates_l2_and_rate(sl2_mod5):
    _, action = sl2_mod5
    oracle = SpectralOracle(action)
    f = np.zeros(action.size)
    f[0] = 1.0
    op = FreeParity(2, None)
    # the tempered spectrum makes E oscillate; 14 even radii average it out
    radii = [2 * n for n in range(1, 15)]
    sup = finite_error_series(action, f, op, radii, p="sup")
    l2 = finite_error_series(action, f, op, radii, p=2)
    assert all(a >= b - 1e-15 for a, b in zip(sup.values, l2.values))
    theta, _ = fit_exponent(sup.times, sup.values)
    target = -math.log(oracle.rho0())
    assert abs(theta - target) <= 0.05 * target


def test_sup_error_examples():
    assert sup_error(np.array([0.2, 0.5, 0.1]), 0.2) == (pytest.approx(0.3), 1)
    assert sup_error(np.full(5, 0.4), 0.4)[0] == 0.0
    with pytest.raises(ValueError):
        sup_error(np.array([]), 0.0)


def test_fit_exponent_synthetic():
    t = np.arange(1, 21, dtype=float)
    theta, resid = fit_exponent(t, np.exp(-0.3 * t))
    assert theta == pytest.approx(0.3, abs=1e-9)
    assert resid < 1e-9
    theta, _ = fit_exponent(t, 2.0 * np.exp(-0.7 * t) * (1 + 0.01 * np.sin(t)))
    assert abs(theta - 0.7) <= 0.02
    vals = np.exp(-0.3 * t)
    vals[[2, 5]] = 0.0
    assert fit_exponent(t, vals)[0] == pytest.approx(0.3, abs=1e-9)
    with pytest.raises(FitError):
        fit_exponent(t[:5], [1.0, 0.0, -1.0, 0.5, 0.0])


@given(theta=st.floats(0.01, 3.0), c=st.floats(0.1, 10.0))
def test_fit_exponent_recovers_noisy_slope(theta, c):
    t = np.linspace(1, 30, 25)
    est, _ = fit_exponent(t, c * np.exp(-theta * t) * (1 + 0.01 * np.sin(t)))
    assert abs(est - theta) <= 0.02


def test_error_series_invariants_and_csv(tmp_path):
    s = ErrorSeries([1, 2, 3], [0.5, 0.2, 0.1], "2", {"space": "sphere2", "f": "bump"})
    path = tmp_path / "s.csv"
    s.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "value", "norm", "metadata_hash"]
    assert [float(r[1]) for r in rows[1:]] == [0.5, 0.2, 0.1]
    assert len({r[3] for r in rows[1:]}) == 1
    assert s.to_dict()["metadata_hash"] == rows[1][3]
    with pytest.raises(ValueError):
        ErrorSeries([1, 2], [0.1, -0.1], "2")
    with pytest.raises(ValueError):
        ErrorSeries([2, 1], [0.1, 0.1], "2")


# ---------------------------------------------------------------------------
# rate predictors


def test_rate_predictor_examples():
    assert predict_uniform_rate(0.5, 0.5, 1e-4) == pytest.approx(1e-2)
    assert predict_uniform_rate(1.0, 2.0, 1 - 1e-12) == pytest.approx(1.0)
    for E in (1.0, 2.0, 0.0):
        with pytest.raises(UndefinedRegime):
            predict_uniform_rate(1.0, 1.0, E)
    with pytest.raises(ValueError):
        predict_uniform_rate(1.5, 1.0, 0.1)
    assert transitive_rate(1.0, 1.0, 1.0, 1e-4) == pytest.approx(1e-2)
    assert transitive_rate(2.0, 0.3, 1.5, 0.01) == predict_uniform_rate(0.3, 1.5, 0.01)
    assert transitive_rate(0.2, 0.9, 1.5, 0.01) == predict_uniform_rate(0.2, 1.5, 0.01)
    with pytest.raises(ValueError):
        transitive_rate(0.0, 1.0, 1.0, 0.1)


@given(a=st.floats(0.01, 1.0), rho=st.floats(0.01, 5.0), E=st.floats(1e-12, 0.999))
def test_balancing_identity(a, rho, E):
    # keep eps a normal double
    assume(math.log(E) / (a + rho) > -700)
    eps = balance_epsilon(a, rho, E)
    total = eps ** -rho * E + eps ** a
    assert total == pytest.approx(2 * predict_uniform_rate(a, rho, E), rel=1e-9)


@given(values=st.lists(st.floats(0.0, 1.0), min_size=5, max_size=30), t=st.floats(0, 1),
       kappa=st.floats(0.01, 3.0))
def test_window_sup_properties(values, t, kappa):
    times = list(range(len(values)))
    s = ErrorSeries(times, values, "sup")
    centre = kappa + t * (len(values) - 1 - 2 * kappa)
    if centre - kappa < 0 or centre + kappa > len(values) - 1:
        with pytest.raises(ValueError):
            window_sup(s, centre, kappa)
        return
    w = window_sup(s, centre, kappa)
    assert w >= np.interp(centre, times, values) - 1e-12
    inside = [v for tt, v in zip(times, values) if centre - kappa <= tt <= centre + kappa]
    ends = np.interp([centre - kappa, centre + kappa], times, values)
    assert w == pytest.approx(max(inside + list(ends)), abs=1e-12)


# ---------------------------------------------------------------------------
# mass bound and coarse monotonicity


def test_mass_bound_compact_and_finite(sl2_mod5):
    _, action = sl2_mod5
    spec = BallAverageSpec(WordBall(2, action), FiniteCoset(action), [2, 5])
    assert all(mass_bound(spec, 0, 1.0, t) == 1.0 for t in spec.times)
    S = Sphere2()
    sspec = BallAverageSpec(WordBall(3, matrices=tuple(lps_rotations(5))), S, [1, 3])
    assert all(mass_bound(sspec, np.array([0.0, 0.6, 0.8]), math.pi, t) == 1.0 for t in sspec.times)


def test_mass_bound_plane_bounded():
    P = Plane()
    V = power_normalization(1.0, 1)
    Ts = [16, 32, 64, 128, 256]
    spec = BallAverageSpec(NormBallFamily(normalization=V), P, [math.log(T) for T in Ts],
                           normalization=V)
    vals = [mass_bound(spec, np.array([1.0, math.sqrt(2) - 1]), 2.0, t) for t in spec.times]
    assert min(vals) > 0
    assert max(vals) / min(vals) <= 10


def test_coarse_monotone_identity_only():
    out = coarse_monotone_check(NormBallFamily(), [0.1], {0.1: [np.eye(2)]},
                                [math.log(10), math.log(30)])
    row = out["rows"][0]
    assert row["kappa"] == 0.0 and row["delta"] == 1.0


def test_coarse_monotone_submultiplicative_bound():
    eps_grid = [0.02, 0.05, 0.1, 0.2]
    samples = {e: sample_near_identity(e, 12, seed=7) for e in eps_grid}
    for e, gs in samples.items():
        for g in gs:
            assert operator_norm(g) <= 1 + e + 1e-12
            assert operator_norm(np.linalg.inv(g)) <= 1 + e + 1e-12
    out = coarse_monotone_check(NormBallFamily(), eps_grid, samples,
                                [math.log(T) for T in (20, 60, 200)],
                                kappa_bound=lambda e: math.log1p(e) + math.log(math.sqrt(2)))
    kappas = [r["kappa"] for r in out["rows"]]
    assert all(k <= math.log1p(e) + 1e-12 for k, e in zip(kappas, sorted(eps_grid)))
    assert out["a0"] > 0


def test_coarse_monotone_violation_has_witness():
    from orbitlab.errors import InvariantViolation
    g = np.diag([1.5, 1 / 1.5])
    with pytest.raises(InvariantViolation) as exc:
        coarse_monotone_check(NormBallFamily(), [0.5], {0.5: [g]}, [math.log(10)],
                              kappa_bound=lambda e: 0.01)
    gm, t, gamma = exc.value.witness
    assert np.allclose(gm, g) and LatticeElement(*gamma).norm() <= 10


# ---------------------------------------------------------------------------
# ratio statistics and limit densities


def test_finite_ratio_statistics(sl2_mod5, tmp_path):
    _, action = sl2_mod5
    same = finite_ratio_statistic(action, 4, 4, [1, 2, 3], [1, 2, 3], range(0, 9))
    assert all(r == 1.0 for r in same.ratios()[1:])
    single = finite_ratio_statistic(action, 0, 0, [17], [42], [12, 14, 16])
    assert single.ratios()[-1] == pytest.approx(1.0, abs=1e-3)
    oracle = SpectralOracle(action)
    Bn = oracle.ball_operator(16)
    # normalised ball matrix is symmetric in the two points: the oracle gives the same ratio
    assert single.ratios()[-1] == pytest.approx(Bn[17, 0] / Bn[42, 0], rel=1e-9)
    single.write_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["t", "value", "n1", "n2", "metadata_hash"]
    with pytest.raises(ValueError):
        RatioStat([1, 2], [3, 2], [1, 1], {}, [0, 0])


def test_lattice_ratio_inconclusive_when_unreached():
    P = Plane()
    far = annulus_indicator(1e6, 2e6)
    stat = lattice_ratio_statistic(P, [1.0, 0.0], [1.0, 0.0], annulus_indicator(0.5, 1.0), far, [4, 8])
    assert not stat.conclusive
    assert math.isnan(stat.ratios()[-1])


def test_plane_density_trend_and_profile():
    P = Plane()
    binner = AnnulusBinner(0.25, 4.0, 8, 8)
    V = power_normalization(1.0, 1)
    x = np.array([1.0, math.sqrt(2) - 1])
    table = empirical_limit_density(P, x, [64, 128, 256, 512], binner, V)
    tv = table.tv_steps
    assert all(b < a for a, b in zip(tv, tv[1:]))
    c, p = radial_power_fit(table.normalized[-1], binner)
    assert 0.7 < p < 1.3
    chi2, dof = lebesgue_chi_square(table.counts[-1], binner.areas())
    assert chi2 > 10 * dof
    assert power_annulus_mass(c, p, 0.5, 1.0) > 0


def test_orbit_equivariance():
    """Gamma (g x) = Gamma x for g in the lattice, and |gamma g| <= |gamma| |g|."""
    P = Plane()
    x = np.array([0.7, 0.3])
    g = LatticeElement(2, 1, 1, 1)
    gx = P.act(g, x)
    T = 20.0
    small = np.concatenate([p for _, p in lattice_orbit_chunks(P, gx, T)])
    big = np.concatenate([p for _, p in lattice_orbit_chunks(P, x, T * g.norm())])
    key = lambda a: set(map(tuple, np.round(a, 9)))
    assert key(small) <= key(big)


def test_total_variation_basic():
    h = np.array([1.0, 2.0, 1.0])
    assert total_variation(h, h) == 0.0
    assert total_variation(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
