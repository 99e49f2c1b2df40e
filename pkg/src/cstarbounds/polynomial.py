"""Rational *-polynomials in noncommuting variables.

A polynomial is a finite map from words to nonzero Gaussian rationals.  A word
is a tuple of letters ``(name, starred)``; ``("u1", True)`` is ``u1*``.  No
relations are applied here: ``u1 u1*`` and the empty word are different words.
Relation-specific reduction lives in :mod:`cstarbounds.rewriting`.

Grammar accepted by :func:`parse_poly`::

    expr   := term (('+' | '-') term)*
    term   := unary ('*'? unary)*          # juxtaposition multiplies
    unary  := '-' unary | postfix
    postfix:= atom "'"*                    # postfix adjoint
    atom   := NUMBER ('/' NUMBER)? | 'i' | IDENT | '(' expr ')' | '[' expr ',' expr ']'

``[a, b]`` is the commutator ``ab - ba``.  Numbers may be decimals; they are
converted to exact fractions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

Letter = tuple[str, bool]
Word = tuple[Letter, ...]


class PolynomialSyntaxError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class QI:
    """Gaussian rational ``re + im*i`` with exact arithmetic."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @staticmethod
    def of(value) -> "QI":
        if isinstance(value, QI):
            return value
        if isinstance(value, complex):
            return QI(Fraction(value.real), Fraction(value.imag))
        return QI(Fraction(value), Fraction(0))

    def __add__(self, other) -> "QI":
        o = QI.of(other)
        return QI(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self) -> "QI":
        return QI(-self.re, -self.im)

    def __sub__(self, other) -> "QI":
        return self + (-QI.of(other))

    def __mul__(self, other) -> "QI":
        o = QI.of(other)
        return QI(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conj(self) -> "QI":
        return QI(self.re, -self.im)

    def __bool__(self) -> bool:
        return bool(self.re) or bool(self.im)

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def is_real(self) -> bool:
        return self.im == 0

    def abs_upper(self) -> float:
        # |re| + |im| >= modulus; cheap and safe for range bounds
        return float(abs(self.re) + abs(self.im))

    def __str__(self) -> str:
        if self.im == 0:
            return _frac_str(self.re)
        if self.re == 0:
            return f"{_frac_str(self.im)}*i"
        sign = "+" if self.im > 0 else "-"
        return f"({_frac_str(self.re)}{sign}{_frac_str(abs(self.im))}*i)"


def _frac_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


ONE = QI(Fraction(1))


def adjoint_word(word: Word) -> Word:
    return tuple((name, not star) for name, star in reversed(word))


def word_str(word: Word) -> str:
    if not word:
        return "1"
    return " ".join(name + ("'" if star else "") for name, star in word)


class Polynomial:
    """Immutable noncommutative *-polynomial with Gaussian rational coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Word, QI] | Iterable[tuple[Word, QI]] = ()):
        acc: dict[Word, QI] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for word, coeff in items:
            c = acc.get(tuple(word), QI()) + QI.of(coeff)
            acc[tuple(word)] = c
        self._terms = {w: c for w, c in acc.items() if c}
        self._hash = None

    # constructors
    @classmethod
    def constant(cls, value) -> "Polynomial":
        return cls({(): QI.of(value)})

    @classmethod
    def var(cls, name: str, star: bool = False) -> "Polynomial":
        return cls({((name, star),): ONE})

    @classmethod
    def monomial(cls, word: Word, coeff=1) -> "Polynomial":
        return cls({tuple(word): QI.of(coeff)})

    # access
    @property
    def terms(self) -> dict[Word, QI]:
        return dict(self._terms)

    def items(self):
        return sorted(self._terms.items(), key=lambda kv: _word_sort_key(kv[0]))

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((len(w) for w in self._terms), default=0)

    def variables(self) -> set[str]:
        return {name for w in self._terms for name, _ in w}

    def is_real(self) -> bool:
        return all(c.is_real() for c in self._terms.values())

    def coefficient_bound(self) -> float:
        return sum(c.abs_upper() for c in self._terms.values())

    # algebra
    def __add__(self, other) -> "Polynomial":
        other = _lift(other)
        return Polynomial(list(self._terms.items()) + list(other._terms.items()))

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({w: -c for w, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_lift(other))

    def __rsub__(self, other) -> "Polynomial":
        return _lift(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = _lift(other)
        out = []
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                out.append((w1 + w2, c1 * c2))
        return Polynomial(out)

    def __rmul__(self, other) -> "Polynomial":
        return _lift(other) * self

    def adjoint(self) -> "Polynomial":
        return Polynomial({adjoint_word(w): c.conj() for w, c in self._terms.items()})

    def substitute(self, mapping: Mapping[str, "Polynomial"]) -> "Polynomial":
        """Replace variables by polynomials; starred letters get the adjoint image."""
        out = Polynomial()
        for word, coeff in self._terms.items():
            term = Polynomial.constant(coeff)
            for name, star in word:
                if name in mapping:
                    img = mapping[name].adjoint() if star else mapping[name]
                else:
                    img = Polynomial.var(name, star)
                term = term * img
            out = out + term
        return out

    def evaluate(self, values: Mapping[str, np.ndarray], dim: int | None = None) -> np.ndarray:
        """Evaluate on square matrices (all of one size)."""
        if dim is None:
            dim = next(iter(values.values())).shape[0] if values else 1
        out = np.zeros((dim, dim), dtype=complex)
        eye = np.eye(dim, dtype=complex)
        cache: dict[Letter, np.ndarray] = {}
        for word, coeff in self._terms.items():
            mat = eye
            for letter in word:
                if letter not in cache:
                    name, star = letter
                    if name not in values:
                        raise KeyError(f"no value for variable {name!r}")
                    m = np.asarray(values[name], dtype=complex)
                    cache[letter] = m.conj().T if star else m
                mat = mat @ cache[letter]
            out = out + complex(coeff) * mat
        return out

    # identity
    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            try:
                other = _lift(other)
            except TypeError:
                return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"Polynomial({str(self)!r})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for word, coeff in self.items():
            if not word:
                parts.append(str(coeff))
            elif coeff == ONE:
                parts.append(word_str(word).replace(" ", "*"))
            elif coeff == -ONE:
                parts.append("-" + word_str(word).replace(" ", "*"))
            else:
                parts.append(f"{coeff}*{word_str(word).replace(' ', '*')}")
        text = " + ".join(parts)
        return text.replace("+ -", "- ")


def _word_sort_key(word: Word):
    return (len(word), word)


def _lift(value) -> Polynomial:
    if isinstance(value, Polynomial):
        return value
    if isinstance(value, (int, Fraction, QI, complex, float)):
        return Polynomial.constant(value)
    raise TypeError(f"cannot use {type(value).__name__} as a polynomial")


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/'()\[\],]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolynomialSyntaxError(f"unexpected character {text[pos:].strip()[:1]!r} at offset {pos}")
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str, variables: Iterable[str] | None):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.allowed = set(variables) if variables is not None else None

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, len(self.text))

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            want = repr(value) if value else "more input"
            raise PolynomialSyntaxError(f"expected {want} at offset {tok[2]} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Polynomial:
        p = self.expr()
        if self.i != len(self.toks):
            raise PolynomialSyntaxError(f"trailing input at offset {self.peek()[2]} in {self.text!r}")
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def _starts_unary(self) -> bool:
        kind, val, _ = self.peek()
        return kind in ("num", "ident") or val in ("(", "[")

    def term(self) -> Polynomial:
        p = self.unary()
        while True:
            if self.peek()[1] == "*":
                self.take()
                p = p * self.unary()
            elif self.peek()[1] == "/":
                self.take()
                den = self.take()
                if den[0] != "num":
                    raise PolynomialSyntaxError(f"division only by numbers (offset {den[2]})")
                p = p * Polynomial.constant(1 / Fraction(den[1]))
            elif self._starts_unary():
                p = p * self.unary()
            else:
                return p

    def unary(self) -> Polynomial:
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        return self.postfix()

    def postfix(self) -> Polynomial:
        p = self.atom()
        while self.peek()[1] == "'":
            self.take()
            p = p.adjoint()
        return p

    def atom(self) -> Polynomial:
        kind, val, pos = self.take()
        if kind == "num":
            return Polynomial.constant(Fraction(val))
        if kind == "ident":
            if val == "i":
                return Polynomial.constant(QI(Fraction(0), Fraction(1)))
            if self.allowed is not None and val not in self.allowed:
                raise PolynomialSyntaxError(f"unknown generator {val!r} at offset {pos}")
            return Polynomial.var(val)
        if val == "(":
            p = self.expr()
            self.take(")")
            return p
        if val == "[":
            a = self.expr()
            self.take(",")
            b = self.expr()
            self.take("]")
            return a * b - b * a
        raise PolynomialSyntaxError(f"unexpected {val!r} at offset {pos} in {self.text!r}")


def parse_poly(text: str, variables: Iterable[str] | None = None) -> Polynomial:
    """Parse a *-polynomial; ``variables`` restricts the allowed identifiers."""
    return _Parser(text, variables).parse()
