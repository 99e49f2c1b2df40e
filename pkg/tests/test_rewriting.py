import itertools

from hypothesis import given, settings, strategies as st

from cstarbounds.rewriting import (
    ZERO, GroupWords, ProjectorWords, RewriteSystem, enumerate_words, free_reduce, group_inverse,
    group_rewrite_system, word_order,
)


def test_free_group_system_confluent():
    assert group_rewrite_system(3).is_confluent()


def test_product_system_confluent():
    assert GroupWords(4, split=2).rewrite_system().is_confluent()


def test_projector_system_confluent():
    assert ProjectorWords(3, 3).rewrite_system().is_confluent()


def test_nonconfluent_system_detected():
    rs = RewriteSystem("ab", {("a", "b"): ("b",), ("b", "b"): ("a",)})
    assert not rs.is_confluent()
    assert rs.critical_pairs()


def test_free_reduce():
    g, G = (0, 1), (0, -1)
    h = (1, 1)
    assert free_reduce([g, h, (1, -1), G]) == ()
    assert group_inverse((g, h)) == ((1, -1), G)


def test_basis_sizes():
    # reduced words of length <= 2 in F_2: 1 + 4 + 12
    assert len(GroupWords(2).basis(2)) == 17
    # F_1 x F_1 = Z^2: lattice points with |i| + |j| <= 2
    assert len(GroupWords(2, split=1).basis(2)) == 13


def test_basis_is_sorted_length_lex():
    b = ProjectorWords(2, 2).basis(2)
    assert b == sorted(b, key=word_order)
    assert b[0] == ()


group_words = st.lists(st.tuples(st.integers(0, 3), st.sampled_from([1, -1])), max_size=8).map(tuple)
proj_words = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 2), st.integers(0, 1)), max_size=6).map(tuple)


@settings(max_examples=200, deadline=None)
@given(group_words)
def test_group_canonicaliser_matches_rewriting(w):
    for split in (None, 2):
        gw = GroupWords(4, split)
        assert gw.reduce(w) == gw.rewrite_system().normal_form(w)


@settings(max_examples=200, deadline=None)
@given(proj_words)
def test_projector_canonicaliser_matches_rewriting(w):
    pw = ProjectorWords(3, 3)
    assert pw.reduce(w) == pw.rewrite_system().normal_form(w)


@settings(max_examples=100, deadline=None)
@given(group_words, group_words)
def test_reduction_is_a_homomorphism(u, v):
    gw = GroupWords(4, split=2)
    assert gw.reduce(gw.reduce(u) + gw.reduce(v)) == gw.reduce(u + v)
    assert gw.reduce(u + gw.adjoint(u)) == ()


def test_enumerate_words_distinct():
    pw = ProjectorWords(2, 3)
    b = enumerate_words(pw.letters(), pw.reduce, 3)
    assert len(b) == len(set(b))
    assert all(pw.reduce(w) == w for w in b)
    assert ZERO not in b
