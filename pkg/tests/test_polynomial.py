from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cstarbounds.polynomial import Polynomial, PolynomialSyntaxError, QI, parse_poly

VARS = ["u1", "u2"]


def test_parse_and_print_roundtrip():
    p = parse_poly("u1 + u1' + 2*u2 - 1/2", VARS)
    assert parse_poly(str(p), VARS) == p
    assert p.terms[()] == QI(Fraction(-1, 2))


def test_commutator_and_adjoint():
    c = parse_poly("[u1, u2]", VARS)
    assert c == parse_poly("u1*u2 - u2*u1", VARS)
    assert c.adjoint() == parse_poly("u2'*u1' - u1'*u2'", VARS)


def test_imaginary_unit():
    p = parse_poly("i*u1", VARS)
    assert not p.is_real()
    assert p.adjoint() == parse_poly("-i*u1'", VARS)


def test_unknown_symbol_rejected():
    with pytest.raises(PolynomialSyntaxError):
        parse_poly("u3", VARS)


def test_evaluate_matches_numpy(rng):
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3))
    p = parse_poly("u1*u2' - 3*u2 + i", VARS)
    want = a @ b.conj().T - 3 * b + 1j * np.eye(3)
    assert np.allclose(p.evaluate({"u1": a, "u2": b}), want)


def test_substitute():
    p = parse_poly("u1*u2", VARS)
    q = p.substitute({"u1": parse_poly("u2'", VARS)})
    assert q == parse_poly("u2'*u2", VARS)


words = st.lists(st.tuples(st.sampled_from(VARS), st.booleans()), max_size=3).map(tuple)
polys = st.lists(st.tuples(words, st.integers(-3, 3)), max_size=4).map(Polynomial)


@settings(max_examples=60, deadline=None)
@given(polys, polys)
def test_adjoint_is_antimultiplicative(p, q):
    assert (p * q).adjoint() == q.adjoint() * p.adjoint()
    assert p.adjoint().adjoint() == p


@settings(max_examples=60, deadline=None)
@given(polys)
def test_text_roundtrip(p):
    assert parse_poly(str(p), VARS) == p
