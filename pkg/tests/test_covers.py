from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypercover.covers import (
    CoverHom,
    Permutation,
    TooLarge,
    UnderdeterminedFit,
    acceptance_rate,
    apply_word,
    block_generator,
    cycle_orbit_identity_check,
    enumerate_hom_arrays,
    enumerate_homs,
    fix_count,
    format_sample_line,
    hom_count,
    hook_dimension,
    moment_exact,
    parse_sample_line,
    partition_table,
    perm_compose,
    rational_fit,
    sample_hom_rejection,
    sample_homs,
    witten_zeta,
)
from hypercover.surface_group import surface_relator

import oracles


# --- permutations -------------------------------------------------------

def test_compose_examples():
    b = Permutation((2, 0, 1))
    assert perm_compose(Permutation.identity(3), b) == b
    t = Permutation.from_cycles(2, (0, 1))
    assert perm_compose(t, t) == Permutation.identity(2)
    a = Permutation.from_cycles(3, (0, 1, 2))
    assert perm_compose(a, Permutation.from_cycles(3, (0, 1))).images == (2, 1, 0)


def test_fix_count_examples():
    assert fix_count(Permutation.identity(5)) == 5
    p = Permutation.from_cycles(5, (0, 1, 2), (3, 4))
    assert fix_count(p) == 0
    assert fix_count(p ** 2) == 2
    assert cycle_orbit_identity_check(p, 6) and fix_count(p ** 6) == 5


perms = st.integers(1, 12).flatmap(lambda n: st.permutations(list(range(n))))


@settings(max_examples=300, deadline=None)
@given(perms, st.integers(1, 20))
def test_cycle_orbit_identity(images, k):
    p = Permutation(tuple(images))
    assert cycle_orbit_identity_check(p, k)
    assert cycle_orbit_identity_check(Permutation.identity(len(images)), k)
    if k == 1:
        assert fix_count(p) == p.cycle_type().get(1, 0)


def test_permutation_validation():
    with pytest.raises(ValueError):
        Permutation((0, 0))


# --- homomorphisms ------------------------------------------------------

def test_cover_hom_rejects_non_relation():
    a = (1, 0, 2)
    b = (0, 2, 1)
    with pytest.raises(ValueError):
        CoverHom.from_arrays(2, [a, b, (0, 1, 2), (0, 1, 2)])


def test_apply_word_matches_oracle_convention():
    homs = oracles.brute_force_homs(3)
    rng = np.random.default_rng(1)
    for idx in rng.integers(0, len(homs), 30):
        gens = homs[idx]
        h = CoverHom.from_arrays(2, gens)
        for w in ([1], [1, 2], [-3, 4, 1], [2, -1, -4, 3, 3]):
            assert apply_word(h, w).images == oracles.apply_word(gens, w)
        assert apply_word(h, []) == Permutation.identity(3)
        assert apply_word(h, surface_relator(2).letters) == Permutation.identity(3)
        assert apply_word(h, [1, 2, -2, -1]) == Permutation.identity(3)


def test_enumeration_counts_small():
    assert len(list(enumerate_homs(2, 1))) == 1
    assert len(list(enumerate_homs(2, 2))) == 16
    assert enumerate_hom_arrays(3).shape[0] == 486


def test_enumeration_matches_brute_force_set():
    ours = {tuple(tuple(int(x) for x in p) for p in g) for g in enumerate_hom_arrays(3)}
    brute = set(oracles.brute_force_homs(3))
    assert ours == brute


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_hom_counts_match_hook_dimensions(n):
    expected = oracles.hom_count_from_dims(n)
    assert hom_count(2, n) == expected
    assert enumerate_hom_arrays(n).shape[0] == expected


def test_hom_count_goldens():
    assert [hom_count(2, n) for n in range(1, 6)] == [1, 16, 486, 34176, 3858240]


def test_enumeration_too_large():
    with pytest.raises(TooLarge):
        enumerate_hom_arrays(6)


def test_witten_zeta_examples():
    assert witten_zeta(2, 3) == pytest.approx(2.25, abs=1e-15)
    assert witten_zeta(2, 2) == 2.0
    assert abs(witten_zeta(2, 12) - 2.0) < 0.05
    assert witten_zeta(2, 3, exact=True) == Fraction(9, 4)


def test_partition_table_dimension_identity():
    import math

    for n in range(1, 12):
        table = partition_table(n)
        assert sum(e.dim ** 2 for e in table.entries) == math.factorial(n)
    assert hook_dimension((3, 2)) == 5


def test_hom_count_log_mode():
    import math

    assert hom_count(2, 10, log=True) == pytest.approx(math.log(hom_count(2, 10)), rel=1e-14)
    assert isinstance(hom_count(2, 80), float)


def test_near_trivial_zeta_matches_full_sum():
    from hypercover.covers import _zeta_near_trivial

    for n in (30, 40):
        assert _zeta_near_trivial(2, n) == pytest.approx(witten_zeta(2, n), rel=1e-13)


# --- sampling -----------------------------------------------------------

def test_rejection_small_degrees_accept_immediately():
    rng = block_generator(3, 2, 1, 0)
    _, trials = sample_hom_rejection(2, 1, rng)
    assert trials == 1
    for _ in range(20):
        _, trials = sample_hom_rejection(2, 2, rng)
        assert trials == 1


def test_acceptance_rate_exact():
    assert acceptance_rate(2, 3) == pytest.approx(0.375, abs=1e-15)


def test_sampler_reproducible_and_thread_independent():
    a = sample_homs(2, 4, 300, seed=11, threads=1)
    b = sample_homs(2, 4, 300, seed=11, threads=4)
    assert np.array_equal(a.gens, b.gens) and np.array_equal(a.trials, b.trials)
    c = sample_homs(2, 4, 300, seed=12, threads=1)
    assert not np.array_equal(a.gens, c.gens)


def test_samples_are_homomorphisms():
    s = sample_homs(2, 5, 50, seed=3)
    for k in range(len(s)):
        h = s.hom(k)
        assert apply_word(h, surface_relator(2).letters) == Permutation.identity(5)


def test_sample_line_roundtrip():
    s = sample_homs(2, 4, 3, seed=9)
    for k in range(3):
        line = format_sample_line(s.hom(k), int(s.trials[k]))
        h, t = parse_sample_line(line)
        assert h == s.hom(k) and t == s.trials[k]


# --- moments ------------------------------------------------------------

def test_moment_trivial_cases():
    for n in (1, 2, 3, 4):
        assert moment_exact(2, n, [[]]) == n
        assert moment_exact(2, n, []) == 1


def test_moment_goldens():
    assert moment_exact(2, 3, [[1]], exact=True) == Fraction(10, 9)
    assert moment_exact(2, 3, [[1], [1]], exact=True) == Fraction(22, 9)
    assert [moment_exact(2, n, [[1]], exact=True) for n in (2, 3, 4, 5)] == [
        Fraction(1), Fraction(10, 9), Fraction(97, 89), Fraction(4438, 4019)]


def test_moment_matches_brute_force_oracle():
    homs = oracles.brute_force_homs(3)
    for w in ([1], [1, 2], [1, 2, -1, -2], [3, 3]):
        total = sum(oracles.fix_count(oracles.apply_word(g, w)) for g in homs)
        assert moment_exact(2, 3, [w], exact=True) == Fraction(total, len(homs))


def test_diagonal_moment_sums_to_trace_moment():
    full = moment_exact(2, 4, [[1, 2]], exact=True)
    diag = sum(moment_exact(2, 4, [[1, 2]], diagonal=i, exact=True) for i in range(4))
    assert full == diag


def test_rational_fit_examples():
    fit = rational_fit([(n, 3.5) for n in (2, 3, 4)], 0)
    assert fit.limit == pytest.approx(3.5) and np.allclose(fit.residuals, 0)
    data = [(n, 1.0 - 2.0 / n + 0.5 / n ** 2) for n in (2, 3, 4, 5)]
    fit = rational_fit(data, 2)
    assert np.allclose(fit.coeffs, [1.0, -2.0, 0.5], atol=1e-9)
    with pytest.raises(UnderdeterminedFit):
        rational_fit(data[:2], 2)


def test_rational_fit_of_exact_moments_has_finite_limit():
    data = [(n, moment_exact(2, n, [[1]])) for n in (2, 3, 4, 5)]
    fit = rational_fit(data, 2)
    assert np.isfinite(fit.limit)
    assert np.max(np.abs(fit.residuals)) < 0.05
