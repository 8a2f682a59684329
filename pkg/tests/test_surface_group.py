import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypercover.surface_group import (
    CatalogUnstable,
    GroupWord,
    NonHyperbolic,
    build_catalog,
    build_genus2_group,
    conjugate,
    dehn_cyclic_reduce,
    free_reduce,
    geodesic_length,
    random_word,
    read_catalog,
    same_element,
    surface_relator,
    word_matrix,
    write_catalog,
)

from oracles import (
    BOLZA_SYSTOLE_MP,
    bolza_generators_mp,
    brute_force_lengths,
    generators_float,
    length_from_trace_mp,
    word_trace_mp,
)

SYSTOLE = float(BOLZA_SYSTOLE_MP)


@pytest.fixture(scope="module")
def group():
    return build_genus2_group()


@pytest.fixture(scope="module")
def catalog_54(group):
    return build_catalog(group, 5.4)


# --- words --------------------------------------------------------------

def test_free_reduce_examples():
    assert free_reduce([1, -1, 2]).letters == (2,)
    assert free_reduce([]).letters == ()
    assert free_reduce([1, 2, -2, -1, 3]).letters == (3,)


def test_group_word_rejects_unreduced_and_bad_letters():
    with pytest.raises(ValueError):
        GroupWord((1, -1))
    with pytest.raises(ValueError):
        GroupWord((5,))
    with pytest.raises(ValueError):
        GroupWord((0,))


def test_dehn_examples():
    assert dehn_cyclic_reduce(surface_relator(2)).canonical.letters == ()
    c = dehn_cyclic_reduce([1])
    assert c.canonical.letters == (1,) and c.primitive
    c = dehn_cyclic_reduce([1, 1, 1])
    assert not c.primitive
    assert c.powerRoot[0].letters == (1,) and c.powerRoot[1] == 3
    assert c.canonical.letters == (1, 1, 1)


words = st.lists(st.sampled_from([1, -1, 2, -2, 3, -3, 4, -4]), max_size=10)


@settings(max_examples=300, deadline=None)
@given(words, words, st.integers(0, 20))
def test_canonical_invariant_under_conjugation_and_rotation(w, c, r):
    w = free_reduce(w).letters
    base = dehn_cyclic_reduce(w)
    assert dehn_cyclic_reduce(conjugate(w, c)).canonical == base.canonical
    if w:
        k = r % len(w)
        assert dehn_cyclic_reduce(free_reduce(w[k:] + w[:k])).canonical == base.canonical


@settings(max_examples=200, deadline=None)
@given(words, st.integers(0, 8))
def test_canonical_invariant_under_relator_insertion(w, pos):
    w = list(free_reduce(w).letters)
    pos = min(pos, len(w))
    rel = list(surface_relator(2).letters)
    inserted = free_reduce(w[:pos] + rel + w[pos:])
    assert dehn_cyclic_reduce(inserted).canonical == dehn_cyclic_reduce(w).canonical


@settings(max_examples=200, deadline=None)
@given(words)
def test_power_root_repeats(w):
    c = dehn_cyclic_reduce(free_reduce(w))
    if c.powerRoot is not None:
        root, k = c.powerRoot
        assert k >= 2 and c.canonical.letters == root.letters * k
        assert not c.primitive


def test_same_element_word_problem():
    rel = surface_relator(2).letters
    assert same_element([1, 2], free_reduce([1] + list(rel) + [2]).letters)
    assert not same_element([1, 2], [2, 1])


# --- matrices -----------------------------------------------------------

def test_group_construction(group):
    for m in group.generators:
        assert abs(np.linalg.det(m) - 1) < 1e-12
        assert abs(abs(np.trace(m)) - 2 * (1 + math.sqrt(2))) < 1e-12
    r = word_matrix(group, surface_relator(2))
    assert min(np.abs(r - np.eye(2)).max(), np.abs(r + np.eye(2)).max()) < 1e-9


def test_generators_match_high_precision_construction(group):
    ref = bolza_generators_mp()
    for m, r in zip(group.generators, ref):
        assert np.allclose(m, np.array(r.tolist(), dtype=float), atol=1e-13)
    assert abs(word_trace_mp(ref, surface_relator(2).letters) - 2) < mp.mpf(10) ** -30


def test_word_matrix_examples(group):
    assert np.array_equal(word_matrix(group, []), np.eye(2))
    assert np.allclose(word_matrix(group, [1, -1]), np.eye(2), atol=1e-12)
    assert np.allclose(word_matrix(group, [1]), group.generators[0])


def test_side_pairings_match_their_words(group):
    for m, w in zip(group.sidePairings, group.sidePairingWords):
        assert np.allclose(word_matrix(group, w), m, atol=1e-10)


def test_geodesic_length_examples():
    c = 1 + math.sqrt(2)
    s = math.sqrt(c * c - 1)
    assert abs(geodesic_length(np.array([[c, s], [s, c]])) - SYSTOLE) < 1e-12
    assert abs(SYSTOLE - 3.05714183896199632) < 1e-15
    m = np.array([[math.exp(1), 0], [0, math.exp(-1)]])
    assert abs(geodesic_length(m) - 2.0) < 1e-14
    with pytest.raises(NonHyperbolic):
        geodesic_length(np.array([[1.0, 1.0], [0.0, 1.0]]))


# --- catalog ------------------------------------------------------------

def test_catalog_below_systole_is_empty(group):
    assert len(build_catalog(group, 1.0).entries) == 0


def test_catalog_systole_orbit(group):
    cat = build_catalog(group, 3.2)
    # the Bolza surface has 12 systoles, hence 24 oriented classes
    assert len(cat.entries) == 24
    for e in cat.entries:
        assert abs(e.length - SYSTOLE) < 1e-9


def test_catalog_lengths_match_brute_force_spectrum(catalog_54):
    brute = brute_force_lengths(generators_float(), 6)
    spectrum = np.unique(np.round(brute[brute <= 5.4], 6))
    assert np.allclose(spectrum, np.unique(np.round(catalog_54.lengths, 6)))
    assert spectrum[0] == pytest.approx(SYSTOLE, abs=1e-6)


def test_catalog_multiplicities(catalog_54):
    lengths = np.round(catalog_54.lengths, 6)
    vals, counts = np.unique(lengths, return_counts=True)
    assert list(vals) == [3.057142, 4.896905]
    assert list(counts) == [24, 24]


def test_catalog_invariants(group, catalog_54):
    lengths = catalog_54.lengths
    assert np.all(np.diff(lengths) >= 0)
    canon = [e.cls.canonical for e in catalog_54.entries]
    assert len(set(canon)) == len(canon)
    gens = bolza_generators_mp()
    for e in catalog_54.entries:
        assert e.cls.primitive
        assert abs(geodesic_length(word_matrix(group, e.cls.canonical)) - e.length) < 1e-9
        assert abs(float(length_from_trace_mp(word_trace_mp(gens, e.cls.letters))) - e.length) < 1e-9
        # oriented: the inverse class is present as a separate entry
        inv = dehn_cyclic_reduce(e.cls.canonical.inverse()).canonical
        assert inv in canon


def test_catalog_explicit_bound_instability_detected(group):
    with pytest.raises(CatalogUnstable):
        build_catalog(group, 5.4, wordbound=3)


def test_catalog_roundtrip(tmp_path, catalog_54):
    path = tmp_path / "bolza.cat"
    write_catalog(catalog_54, path, "# provenance line\n")
    again = read_catalog(path)
    assert [e.cls.letters for e in again.entries] == [e.cls.letters for e in catalog_54.entries]
    assert [e.length for e in again.entries] == [e.length for e in catalog_54.entries]
    write_catalog(again, tmp_path / "b2.cat", "# provenance line\n")
    assert path.read_bytes() == (tmp_path / "b2.cat").read_bytes()


def test_catalog_checksum_detects_tampering(tmp_path, catalog_54):
    path = tmp_path / "bolza.cat"
    write_catalog(catalog_54, path)
    text = path.read_text().replace("primitive=1", "primitive=0", 1)
    path.write_text(text)
    with pytest.raises(ValueError):
        read_catalog(path)


def test_trace_is_class_function(group):
    rng = np.random.default_rng(5)
    for _ in range(200):
        w = random_word(rng, int(rng.integers(1, 9)))
        c = random_word(rng, int(rng.integers(0, 6)))
        W, C = word_matrix(group, w), word_matrix(group, c)
        t1 = abs(np.trace(W))
        t2 = abs(np.trace(word_matrix(group, conjugate(w, c))))
        # double-precision products lose accuracy in proportion to the entry sizes
        scale = np.abs(C).max() ** 2 * np.abs(W).max()
        assert abs(t1 - t2) <= 1e-12 * max(1.0, scale)
