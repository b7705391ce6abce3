import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orbitlab.errors import BudgetExceeded, ConfigError
from orbitlab.freegroup import (FiniteAction, GroupHom, IntMatrixTarget, PermutationTarget,
                                ReducedWord, SubgroupChain, ball_size, enumerate_ball,
                                enumerate_sphere, free_reduce, profinite_metric, sign_character,
                                sphere_size, sphere_sum)
from orbitlab.matgroup import ELEMENTARY_GENERATORS, CongruenceQuotient
from orbitlab.oracles import word_list_sphere_columns


def words(rank, max_len=8):
    return st.lists(st.integers(0, 2 * rank - 1), max_size=max_len).map(
        lambda ls: ReducedWord.from_letters(ls, rank))


def brute_sphere_count(rank, n):
    L = 2 * rank
    return sum(1 for w in itertools.product(range(L), repeat=n)
               if all(w[i] ^ 1 != w[i + 1] for i in range(n - 1)))


@pytest.mark.parametrize("n,expected", [(0, 1), (1, 4), (3, 36)])
def test_sphere_counts_rank2(n, expected):
    assert sum(1 for _ in enumerate_sphere(2, n)) == expected


@pytest.mark.parametrize("rank,n", [(2, 4), (3, 3), (4, 2)])
def test_sphere_count_matches_string_filter(rank, n):
    ws = list(enumerate_sphere(rank, n))
    assert len(ws) == brute_sphere_count(rank, n) == sphere_size(rank, n)
    assert len(set(ws)) == len(ws)
    assert all(w.length == n for w in ws)


def test_enumeration_order_is_lexicographic():
    ws = [w.letters for w in enumerate_sphere(2, 3)]
    assert ws == sorted(ws)
    assert ws[0] == (0, 0, 0)


def test_ball_is_union_of_spheres():
    assert sum(1 for _ in enumerate_ball(2, 4)) == ball_size(2, 4) == 1 + 4 + 12 + 36 + 108


def test_budget_is_a_hard_error():
    with pytest.raises(BudgetExceeded):
        list(enumerate_sphere(2, 6, budget=100))
    with pytest.raises(BudgetExceeded):
        list(enumerate_ball(3, 12))  # 3.7e8 words > default budget


def test_sign_character_examples():
    assert sign_character(ReducedWord.identity(2)) == 1
    for i in range(2):
        assert sign_character(ReducedWord.generator(i + 1, 2)) == -1
    assert sign_character(ReducedWord.parse("ab", 2)) == 1


def test_parse_and_str_round_trip():
    w = ReducedWord.parse("aBb", 2)  # reduces to "a"
    assert str(w) == "a"
    assert ReducedWord.parse("abAB", 2).length == 4


def test_rank_one_is_rejected():
    with pytest.raises(ValueError):
        ReducedWord.identity(1)


@given(words(2), words(2))
def test_sign_character_is_multiplicative(u, v):
    assert sign_character(u * v) == sign_character(u) * sign_character(v)


@given(st.lists(st.integers(0, 5), max_size=12))
def test_reduction_is_idempotent(letters):
    once = free_reduce(letters)
    assert free_reduce(once) == once
    assert all(once[i] ^ 1 != once[i + 1] for i in range(len(once) - 1))


@given(words(3), words(3), words(3))
def test_group_axioms(u, v, w):
    e = ReducedWord.identity(3)
    assert (u * v) * w == u * (v * w)
    assert u * u.inverse() == e
    assert (u * v).inverse() == v.inverse() * u.inverse()


@given(words(2, 6), words(2, 6))
def test_hom_to_matrices_is_multiplicative(u, v):
    hom = GroupHom([((1, 2), (0, 1)), ((1, 0), (2, 1))], IntMatrixTarget(2))
    t = hom.target
    assert hom.apply(u * v) == t.mul(hom.apply(u), hom.apply(v))
    assert hom.apply(u.inverse()) == t.inv(hom.apply(u))


def test_hom_to_permutations():
    hom = GroupHom([np.array([1, 2, 0]), np.array([1, 0, 2])], PermutationTarget(3))
    w = ReducedWord.parse("abA", 2)
    assert np.array_equal(hom.apply(w * w.inverse()), np.arange(3))


def test_generic_sphere_sum_constant_function():
    hom = GroupHom([((1, 1), (0, 1)), ((1, 0), (1, 1))], IntMatrixTarget(2, modulus=3))
    act = lambda g, x: hom.target.mul(g, x)
    x = hom.target.identity()
    assert sphere_sum(lambda y: 1.0, hom, x, 3, act) == sphere_size(2, 3)


def test_sphere_sum_mass_conservation(sl2_mod5):
    _, action = sl2_mod5
    for n in range(5):
        S = action.sphere_operators(n)[n]
        # f = indicator of one coset summed over all x
        assert S[7, :].sum() == sphere_size(2, n)
        assert np.all(S.sum(axis=0) == sphere_size(2, n))


@pytest.mark.parametrize("rank,N", [(2, 5), (3, 3)])
def test_transfer_matches_word_list(rank, N):
    q = CongruenceQuotient(N)
    gens = [q.elements[i] for i in (5, 11, 17)][:rank]
    perms = [[q.index[q.mul(g, x)] for x in q.elements] for g in gens]
    action = FiniteAction(perms)
    ops = action.sphere_operators(6)
    for x in (0, 3):
        cols = word_list_sphere_columns(action, x, 6)
        for n in range(7):
            assert np.array_equal(ops[n][:, x], cols[n])


def test_sphere_sum_direct_enumeration(sl2_mod3):
    _, action = sl2_mod3
    f = np.arange(action.size, dtype=float)
    for n in range(4):
        direct = sum(f[action.act(w.inverse(), 2)] for w in enumerate_sphere(2, n))
        assert action.sphere_sum(f, 2, n) == direct


def test_convolution_coefficient_at_n1():
    """S1 S1 = S2 + 2r S0: every letter followed by its inverse returns to the start."""
    q = CongruenceQuotient(5)
    action = q.left_regular_action(ELEMENTARY_GENERATORS)
    S = action.sphere_operators(2)
    assert np.array_equal(S[1] @ S[1], S[2] + 4 * S[0])


def _chain(moduli):
    return [CongruenceQuotient(N).left_regular_action(ELEMENTARY_GENERATORS) for N in moduli]


def test_profinite_metric_levels():
    chain = SubgroupChain(_chain([2, 4]))
    assert chain.indices == [6, 48]
    a, b = ReducedWord.generator(1, 2), ReducedWord.generator(2, 2)
    assert profinite_metric(a, a, chain) == 0.0
    assert profinite_metric(ReducedWord.identity(2), a, chain) == 1 / 6
    # a^2 = [[1,2],[0,1]] is trivial mod 2 but not mod 4
    a2 = a * a
    assert profinite_metric(ReducedWord.identity(2), a2, chain) == 1 / 48


@given(words(2, 6), words(2, 6), words(2, 6))
def test_profinite_metric_is_left_invariant(g, u, v):
    chain = SubgroupChain(_chain([2, 4]))
    assert profinite_metric(g * u, g * v, chain) == profinite_metric(u, v, chain)


def test_non_nested_chain_is_rejected():
    with pytest.raises(ConfigError):
        SubgroupChain(_chain([3, 4]))
    with pytest.raises(ConfigError):
        SubgroupChain(_chain([4, 2]))
