"""Word rewriting for the monoids behind the moment relaxations.

Two families of letters are used:

* group letters ``(g, e)``: generator index ``g`` with exponent ``e = +1 | -1``;
  ``e = -1`` is the adjoint (inverse) of a unitary.
* projector letters ``(party, x, a)``: the effect ``E^x_a`` of ``party`` 0 (Alice)
  or 1 (Bob).  The last answer of every question is eliminated by completeness.

Every rule has a left side of length two, so critical pairs are the overlaps
``xyz`` of two left sides; :meth:`RewriteSystem.critical_pairs` checks all of them.
Normal forms are length-lexicographic with letters ordered by party, then index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

Letter = Hashable
Word = tuple
ZERO = None  # a word that rewrites to the zero element


class RewriteSystem:
    """String rewriting with length-2 left sides; right sides are words or ZERO."""

    def __init__(self, alphabet: Sequence[Letter], rules: dict[tuple[Letter, Letter], Word | None]):
        self.alphabet = tuple(alphabet)
        self.rules = dict(rules)

    def step(self, word: Word) -> tuple[Word | None, bool]:
        for i in range(len(word) - 1):
            pair = (word[i], word[i + 1])
            if pair in self.rules:
                rhs = self.rules[pair]
                if rhs is ZERO:
                    return ZERO, True
                return word[:i] + tuple(rhs) + word[i + 2:], True
        return word, False

    def normal_form(self, word: Iterable[Letter]) -> Word | None:
        word = tuple(word)
        while True:
            word, changed = self.step(word)
            if word is ZERO or not changed:
                return word

    def _rewrite_at(self, word: Word, i: int) -> Word | None:
        rhs = self.rules[(word[i], word[i + 1])]
        if rhs is ZERO:
            return ZERO
        return word[:i] + tuple(rhs) + word[i + 2:]

    def critical_pairs(self) -> list[tuple[Word, Word | None, Word | None]]:
        """Overlaps xyz whose two one-step rewrites do not join; empty iff locally confluent."""
        bad = []
        for (x, y) in self.rules:
            for (y2, z) in self.rules:
                if y2 != y:
                    continue
                w = (x, y, z)
                left = self._rewrite_at(w, 0)
                right = self._rewrite_at(w, 1)
                nl = ZERO if left is ZERO else self.normal_form(left)
                nr = ZERO if right is ZERO else self.normal_form(right)
                if nl != nr:
                    bad.append((w, nl, nr))
        return bad

    def is_confluent(self) -> bool:
        # all rules shrink or sort, so the system terminates and local confluence suffices
        return not self.critical_pairs()


def letter_order(letter) -> tuple:
    return tuple(letter)


def word_order(word: Word) -> tuple:
    return (len(word), tuple(letter_order(l) for l in word))


# ---------------------------------------------------------------- group words

def group_rewrite_system(n_gens: int, commuting: Iterable[tuple[int, int]] = ()) -> RewriteSystem:
    """Free cancellation plus commutation of the listed generator pairs (g < h sorts first)."""
    alphabet = [(g, e) for g in range(n_gens) for e in (1, -1)]
    rules: dict = {}
    for g in range(n_gens):
        rules[((g, 1), (g, -1))] = ()
        rules[((g, -1), (g, 1))] = ()
    for g, h in commuting:
        lo, hi = min(g, h), max(g, h)
        for e1, e2 in itertools.product((1, -1), repeat=2):
            rules[((hi, e1), (lo, e2))] = ((lo, e2), (hi, e1))
    return RewriteSystem(alphabet, rules)


def free_reduce(word: Iterable[tuple[int, int]]) -> Word:
    out: list = []
    for g, e in word:
        if out and out[-1][0] == g and out[-1][1] == -e:
            out.pop()
        else:
            out.append((g, e))
    return tuple(out)


def group_inverse(word: Word) -> Word:
    return tuple((g, -e) for g, e in reversed(word))


@dataclass(frozen=True)
class GroupWords:
    """Reduced words of a free group, or of a direct product of two free groups.

    With ``split`` set, generators ``< split`` commute with those ``>= split`` and the
    normal form is (reduced word in the first factor)(reduced word in the second).
    """

    n_gens: int
    split: int | None = None

    def reduce(self, word: Iterable[tuple[int, int]]) -> Word:
        word = tuple(word)
        if self.split is None:
            return free_reduce(word)
        left = free_reduce(l for l in word if l[0] < self.split)
        right = free_reduce(l for l in word if l[0] >= self.split)
        return left + right

    def adjoint(self, word: Word) -> Word:
        return group_inverse(word)

    def rewrite_system(self) -> RewriteSystem:
        commuting = []
        if self.split is not None:
            commuting = [(g, h) for g in range(self.split) for h in range(self.split, self.n_gens)]
        return group_rewrite_system(self.n_gens, commuting)

    def letters(self) -> list[tuple[int, int]]:
        return [(g, e) for g in range(self.n_gens) for e in (1, -1)]

    def basis(self, length: int) -> list[Word]:
        return enumerate_words(self.letters(), self.reduce, length)


# ---------------------------------------------------------------- projector words

@dataclass(frozen=True)
class ProjectorWords:
    """Projective measurements of two commuting parties; k questions, n answers each.

    Letters are ``(party, x, a)`` with ``a < n - 1``; the last effect is 1 - sum of the rest.
    """

    k: int
    n: int

    def letters(self) -> list[tuple[int, int, int]]:
        return [(p, x, a) for p in (0, 1) for x in range(self.k) for a in range(self.n - 1)]

    def _reduce_party(self, word: Iterable[tuple[int, int, int]]) -> Word | None:
        out: list = []
        for letter in word:
            if out and out[-1][1] == letter[1]:
                if out[-1][2] == letter[2]:
                    continue
                return ZERO
            out.append(letter)
        return tuple(out)

    def reduce(self, word: Iterable[tuple[int, int, int]]) -> Word | None:
        word = tuple(word)
        a = self._reduce_party(l for l in word if l[0] == 0)
        if a is ZERO:
            return ZERO
        b = self._reduce_party(l for l in word if l[0] == 1)
        if b is ZERO:
            return ZERO
        return a + b

    def adjoint(self, word: Word) -> Word:
        return tuple(reversed(word))

    def rewrite_system(self) -> RewriteSystem:
        rules: dict = {}
        letters = self.letters()
        for s, t in itertools.product(letters, repeat=2):
            if s[0] == t[0] and s[1] == t[1]:
                rules[(s, t)] = (s,) if s == t else ZERO
            elif s[0] == 1 and t[0] == 0:
                rules[(s, t)] = (t, s)
        return RewriteSystem(letters, rules)

    def basis(self, length: int) -> list[Word]:
        return enumerate_words(self.letters(), self.reduce, length)


def enumerate_words(letters: Sequence, reduce: Callable[[Word], Word | None], length: int) -> list[Word]:
    """All distinct nonzero normal forms of products of at most ``length`` letters, length-lex sorted."""
    seen = {()}
    frontier = [()]
    for _ in range(length):
        nxt = []
        for w in frontier:
            for l in letters:
                r = reduce(w + (l,))
                if r is not ZERO and r not in seen:
                    seen.add(r)
                    nxt.append(r)
        frontier = nxt
    return sorted(seen, key=word_order)
