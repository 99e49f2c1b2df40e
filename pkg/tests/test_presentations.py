from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from cstarbounds.npa import RelationSet, parse_relations
from cstarbounds.polynomial import QI, Polynomial
from cstarbounds.presentations import (
    Bracket, CertificateCache, NormAnswer, Presentation, PresentationError, apply_computable_map, ce_upper_stream,
    cw_index, cw_rational, decode_coefficient, decode_seq, encode_coefficient, encode_seq, norm_query, pair,
    softening_sequence, unpair,
)

FREE2 = Presentation(parse_relations("free(2)"))


def test_calkin_wilf_start():
    assert [cw_rational(j) for j in range(1, 8)] == [Fraction(1), Fraction(1, 2), Fraction(2), Fraction(1, 3),
                                                    Fraction(3, 2), Fraction(2, 3), Fraction(3)]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**4), st.integers(1, 10**4))
def test_calkin_wilf_inverse(a, b):
    q = Fraction(a, b)
    assert cw_rational(cw_index(q)) == q


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_pairing(a, b):
    assert unpair(pair(a, b)) == (a, b)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1000), max_size=6))
def test_sequences(xs):
    assert decode_seq(encode_seq(xs)) == xs


@settings(max_examples=100, deadline=None)
@given(st.fractions(min_value=-20, max_value=20, max_denominator=50),
       st.fractions(min_value=-20, max_value=20, max_denominator=50))
def test_coefficients(re, im):
    assume(re or im)
    c = QI(re, im)
    assert decode_coefficient(encode_coefficient(c)) == c


def test_zero_has_code_zero():
    assert FREE2.encode(Polynomial()) == 0
    assert FREE2.decode(0) == Polynomial()


def test_codes_bijective_prefix():
    seen = set()
    for c in range(2000):
        p = FREE2.decode(c)
        assert FREE2.encode(p) == c
        seen.add(p)
    assert len(seen) == 2000


def test_point_is_reduced():
    assert FREE2.point("u1*u1'*u2").polynomial == FREE2.point("u2").polynomial


@pytest.mark.parametrize("text, want", [("u1+u1'+u2+u2'", 4), ("u1-u2", 2)])
def test_norm_query_free(text, want):
    ans = norm_query(FREE2, FREE2.point(text), 10)
    assert isinstance(ans, NormAnswer)
    assert abs(ans.value - want) < Fraction(1, 2**10)
    assert ans.bracket.stages == 1


def test_norm_query_product_is_bracket_only():
    pres = Presentation(parse_relations("product(1)"))
    ans = norm_query(pres, pres.point("u1 + v1"), 4, max_stages=1, trials=2)
    assert isinstance(ans, Bracket)
    assert ans.lo <= 2 + 1e-12 <= ans.hi + 1e-8


def test_cache_roundtrip_and_verify(tmp_path):
    cache = CertificateCache(tmp_path)
    a = norm_query(FREE2, FREE2.point("u1-u2"), 8, cache=cache)
    assert cache.entries()
    b = norm_query(FREE2, FREE2.point("u1-u2"), 8, cache=cache)
    assert a.value == b.value
    assert all(ok for _, ok, _ in cache.verify())


def test_inclusion_map():
    src = Presentation(parse_relations("free(1)"))
    pt = src.point("u1 + 2")
    img, dist = apply_computable_map({"u1": "u2"}, src, FREE2, pt)
    assert img.polynomial == FREE2.point("u2 + 2").polynomial and dist == 0


def test_non_unitary_image_rejected():
    src = Presentation(parse_relations("free(1)"))
    with pytest.raises(PresentationError):
        apply_computable_map({"u1": "u1 + u2"}, src, FREE2, src.point("u1"))


def test_relations_must_survive():
    src = Presentation(parse_relations("product(1)"))
    with pytest.raises(PresentationError):
        apply_computable_map({"u1": "u1", "v1": "u2"}, src, FREE2, src.point("u1"))


def test_soft_to_softer_map():
    a = Presentation(RelationSet("soft", 1, Fraction(1, 4)))
    b = Presentation(RelationSet("soft", 1, Fraction(1, 2)))
    img, _ = apply_computable_map({"u1": "u1", "v1": "v1"}, a, b, a.point("u1*v1"))
    assert str(img.polynomial) == "u1*v1"
    with pytest.raises(PresentationError):
        apply_computable_map({"u1": "u1", "v1": "v1"}, b, a, b.point("u1*v1"))


def test_softening_commutator():
    p = Polynomial.var("u1") * Polynomial.var("v1") - Polynomial.var("v1") * Polynomial.var("u1")
    entries, exact = softening_sequence(p, 1, 3)
    bounds = [e.bound for e in entries]
    assert bounds == sorted(bounds, reverse=True)
    assert all(b >= exact - 1e-9 for b in bounds)
    assert bounds[1] == pytest.approx(0.5, abs=1e-6)


def test_ce_stream():
    pres = Presentation(parse_relations("product(1)"))
    up = ce_upper_stream(pres, pres.point("v1"), stages=2)
    assert up.is_monotone() and up.value == pytest.approx(1.0, abs=1e-6)
    assert ce_upper_stream(pres, pres.point("0"), stages=1).value == 0.0
    with pytest.raises(PresentationError):
        ce_upper_stream(FREE2, FREE2.point("u1"))
