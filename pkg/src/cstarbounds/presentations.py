"""Presentations of group C*-algebras: codes, generated points, norm queries,
computable maps and softenings.

Code scheme (stable; cached data is keyed by it).  With g generators, the 2g
letters are x_1, x_1*, ..., x_g, x_g* (letter index 2i, 2i + 1).

* word  <-> N: bijective base-2g numeral, sum_j (l_j + 1) (2g)^(m - j); empty word is 0.
* Q     <-> N: 0 <-> 0, q > 0 <-> 2j - 1, q < 0 <-> 2j, with j the Calkin-Wilf index of |q|
  (root 1/1 has index 1; children of a/b are a/(a+b) = 2j and (a+b)/b = 2j + 1).
* Q(i) \\ {0} <-> N: re + im*i  <->  pair(Q(re), Q(im)) - 1, with the Cantor pairing.
* polynomial <-> N: terms sorted by word code w_1 < w_2 < ...; the finite sequence
  of pair(gap_j, coeff_j) with gap_1 = w_1, gap_j = w_j - w_{j-1} - 1, encoded as
  seq([]) = 0, seq([a] + rest) = 1 + pair(a, seq(rest)).  The zero polynomial is 0.

Polynomials are formal (no relations); decode(encode(p)) == p exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .npa import (MOMENT_CAP, CapExceeded, NormBound, RelationSet, RelaxationError, _admissible_degree,
                  group_norm_lower, group_norm_upper, group_polynomial, max_tensor_norm_bounds)
from .polynomial import QI, Polynomial, parse_poly
from .sdp import certify, read_sdpa, solution_from_json, solution_to_json, write_sdpa
from .streams import BoundStream

CODE_SCHEME = "cw-cantor-v1"


class PresentationError(ValueError):
    pass


# ---------------------------------------------------------------- pairing

def pair(a: int, b: int) -> int:
    s = a + b
    return s * (s + 1) // 2 + b


def unpair(z: int) -> tuple[int, int]:
    w = (math.isqrt(8 * z + 1) - 1) // 2
    t = w * (w + 1) // 2
    b = z - t
    return w - b, b


def encode_seq(items: Sequence[int]) -> int:
    out = 0
    for a in reversed(items):
        out = 1 + pair(a, out)
    return out


def decode_seq(code: int) -> list[int]:
    out = []
    while code:
        a, code = unpair(code - 1)
        out.append(a)
    return out


def cw_index(q: Fraction) -> int:
    """Calkin-Wilf index of a positive rational."""
    if q <= 0:
        raise ValueError("Calkin-Wilf index needs q > 0")
    a, b = q.numerator, q.denominator
    runs = []  # (bit, length) from the leaf up; a/b < 1 is a left child (bit 0)
    while (a, b) != (1, 1):
        if a < b:
            r = (b - 1) // a
            runs.append((0, r))
            b -= r * a
        else:
            r = (a - 1) // b
            runs.append((1, r))
            a -= r * b
    idx = 1
    for bit, r in reversed(runs):
        idx = (idx << r) | ((1 << r) - 1 if bit else 0)
    return idx


def cw_rational(j: int) -> Fraction:
    if j < 1:
        raise ValueError("Calkin-Wilf indices start at 1")
    a, b = 1, 1
    for bit in bin(j)[3:]:
        if bit == "0":
            b = a + b
        else:
            a = a + b
    return Fraction(a, b)


def encode_rational(q: Fraction) -> int:
    q = Fraction(q)
    if q == 0:
        return 0
    j = cw_index(abs(q))
    return 2 * j - 1 if q > 0 else 2 * j


def decode_rational(c: int) -> Fraction:
    if c == 0:
        return Fraction(0)
    j = (c + 1) // 2
    q = cw_rational(j)
    return q if c % 2 else -q


def encode_coefficient(c: QI) -> int:
    if not c:
        raise ValueError("zero coefficients are not encoded")
    return pair(encode_rational(c.re), encode_rational(c.im)) - 1


def decode_coefficient(code: int) -> QI:
    a, b = unpair(code + 1)
    return QI(decode_rational(a), decode_rational(b))


# ---------------------------------------------------------------- presentations

@dataclass(frozen=True)
class Presentation:
    """Unitary generators with a relation set; points are formal rational *-polynomials."""

    relations: RelationSet

    @property
    def generators(self) -> list[str]:
        return self.relations.generators

    def _letters(self) -> dict[tuple[str, bool], int]:
        return {(g, star): 2 * i + int(star) for i, g in enumerate(self.generators) for star in (False, True)}

    def encode_word(self, word) -> int:
        letters = self._letters()
        base = 2 * len(self.generators)
        code = 0
        for letter in word:
            if letter not in letters:
                raise PresentationError(f"unknown generator symbol {letter[0]!r}")
            code = code * base + letters[letter] + 1
        return code

    def decode_word(self, code: int) -> tuple:
        base = 2 * len(self.generators)
        out = []
        while code:
            code -= 1
            code, r = divmod(code, base)
            out.append((self.generators[r // 2], bool(r % 2)))
        return tuple(reversed(out))

    def encode(self, p: Polynomial) -> int:
        terms = sorted((self.encode_word(w), c) for w, c in p.terms.items())
        items, prev = [], -1
        for wc, c in terms:
            items.append(pair(wc - prev - 1, encode_coefficient(c)))
            prev = wc
        return encode_seq(items)

    def decode(self, code: int) -> Polynomial:
        if code < 0:
            raise PresentationError("codes are natural numbers")
        terms, prev = {}, -1
        for item in decode_seq(code):
            gap, cc = unpair(item)
            prev = prev + gap + 1
            terms[self.decode_word(prev)] = decode_coefficient(cc)
        return Polynomial(terms)

    def point(self, p: Polynomial | str | int) -> "GeneratedPoint":
        if isinstance(p, int):
            return GeneratedPoint(p, self.decode(p))
        if isinstance(p, str):
            p = parse_poly(p, self.generators)
        p = self.reduce(p)
        return GeneratedPoint(self.encode(p), p)

    def reduce(self, p: Polynomial) -> Polynomial:
        """Normal form under the group relations (soft relations only cancel u u*)."""
        rel = self.relations
        words = RelationSet("free", len(rel.generators)).words if rel.kind == "soft" else rel.exact().words
        index = {g: i for i, g in enumerate(rel.generators)}
        unknown = p.variables() - set(index)
        if unknown:
            raise PresentationError(f"unknown generator(s) {sorted(unknown)}")
        out: dict = {}
        for w, c in p.terms.items():
            gw = words.reduce((index[name], -1 if star else 1) for name, star in w)
            key = tuple((rel.generators[g], e < 0) for g, e in gw)
            out[key] = out.get(key, QI()) + c
        return Polynomial(out)

    def __str__(self) -> str:
        return str(self.relations)


@dataclass(frozen=True)
class GeneratedPoint:
    code: int
    polynomial: Polynomial


# ---------------------------------------------------------------- certificate cache

class CertificateCache:
    """Content-addressed JSON files; writes go through a temp file and os.replace."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(*parts) -> str:
        payload = json.dumps([CODE_SCHEME] + [str(p) for p in parts])
        return hashlib.sha256(payload.encode()).hexdigest()

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        try:
            return json.loads(self.path(key).read_text(encoding="utf-8"))
        except (FileNotFoundError, json.JSONDecodeError):
            return None

    def put(self, key: str, record: dict) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh)
            os.replace(tmp, self.path(key))
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def store_relaxation(self, key: str, result, meta: dict) -> None:
        """``result`` is a RelaxationResult (or None-solution constant result)."""
        record = {"key": key, "meta": meta, "bound": result.bound, "cert_hash": result.cert_hash}
        if result.solution is not None:
            record["sdpa"] = write_sdpa(result.relaxation.instance)
            record["solution"] = solution_to_json(result.solution)
            record["offset"] = result.relaxation.offset
        self.put(key, record)

    def entries(self) -> list[dict]:
        out = []
        for f in sorted(self.root.glob("*.json")):
            try:
                out.append(json.loads(f.read_text(encoding="utf-8")))
            except json.JSONDecodeError:
                out.append({"key": f.stem, "corrupt": True})
        return out

    def verify(self) -> list[tuple[str, bool, list[str]]]:
        """Re-run certify on every cached SDP certificate."""
        report = []
        for rec in self.entries():
            if rec.get("corrupt"):
                report.append((rec["key"], False, ["unreadable cache entry"]))
                continue
            if "sdpa" not in rec:
                report.append((rec["key"], True, []))
                continue
            inst = read_sdpa(rec["sdpa"])
            cert = certify(inst, solution_from_json(rec["solution"]))
            report.append((rec["key"], cert.passed, cert.violations))
        return report


def cached_norm_upper(p: Polynomial, rel: RelationSet, degree: int | None, cache: CertificateCache | None,
                      cap: int = MOMENT_CAP) -> NormBound:
    if cache is None:
        return group_norm_upper(p, rel, degree, cap)
    key = CertificateCache.key("group-norm", rel, Presentation(rel).encode(p), degree)
    rec = cache.get(key)
    if rec is not None and "norm" in rec.get("meta", {}):
        m = rec["meta"]
        return NormBound(m["norm"], rec["bound"], m["stage"], m["gap"], rec["cert_hash"], True)
    nb = group_norm_upper(p, rel, degree, cap)
    if nb.published and nb.result is not None:
        cache.store_relaxation(key, nb.result, {"norm": nb.bound, "stage": nb.stage, "gap": nb.gap,
                                                "relations": str(rel), "poly": str(p)})
    return nb


# ---------------------------------------------------------------- norm queries

@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    stages: int = 0
    lower_stream: BoundStream = field(repr=False, compare=False, default=None)
    upper_stream: BoundStream = field(repr=False, compare=False, default=None)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class NormAnswer:
    value: Fraction
    bracket: Bracket
    lower_stream: BoundStream = field(repr=False, compare=False, default=None)
    upper_stream: BoundStream = field(repr=False, compare=False, default=None)


def norm_query(pres: Presentation, point: GeneratedPoint, k: int, budget_secs: float = 60.0,
               max_stages: int = 4, dims: Sequence[int] = (1, 2, 3, 4), trials: int = 10, seed: int = 0,
               cache: CertificateCache | None = None, cap: int = MOMENT_CAP) -> NormAnswer | Bracket:
    """Rational q with |‖p‖ - q| < 2^-k, or the best Bracket when the budget ends.

    Only free(n) presentations return answers; other relation sets are bracket-only.
    """
    p = point.polynomial
    rel = pres.relations
    lower, upper = BoundStream("lower", "representations"), BoundStream("upper", "sos")
    start = time.monotonic()
    gp = group_polynomial(p, rel.exact())
    deg0 = _admissible_degree(max((len(w) for w in gp), default=0), rel)
    target = 2.0 ** (-k)
    stage = 0
    for stage in range(max_stages):
        d = dims[min(stage, len(dims) - 1)]
        lb = group_norm_lower(p, rel, dims=(d,), trials=trials, seed=seed + stage)
        lower.offer(("dim", d), lb.value, f"rep:{lb.label}:d={lb.dim}", witness=lb)
        try:
            ub = cached_norm_upper(p, rel, deg0 + 2 * stage, cache, cap)
            if ub.published:
                upper.offer(("degree", ub.stage), ub.bound, ub.cert_hash, ub.gap)
        except CapExceeded:
            pass
        if rel.kind == "free" and upper.value - lower.value < target:
            # |norm - mid| < 2^-(k+1), and the rounding costs at most 2^-(k+2)
            mid = Fraction((lower.value + upper.value) / 2).limit_denominator(2 ** (k + 2))
            return NormAnswer(mid, Bracket(lower.value, upper.value, stage + 1), lower, upper)
        if time.monotonic() - start > budget_secs:
            break
    return Bracket(lower.value, upper.value, stage + 1, lower, upper)


def ce_upper_stream(pres: Presentation, point: GeneratedPoint, stages: int = 3, cap: int = MOMENT_CAP) -> BoundStream:
    """Upper half of the max-tensor bounds for a product presentation."""
    rel = pres.relations
    if rel.kind != "product":
        raise PresentationError(f"c.e. upper streams are defined for product(n) presentations, not {rel}")
    _, upper = max_tensor_norm_bounds(point.polynomial, rel.n, stages=stages, trials=1, cap=cap)
    return upper


# ---------------------------------------------------------------- computable maps

def _is_unitary_word(p: Polynomial) -> bool:
    if len(p.terms) != 1:
        return False
    (c,) = p.terms.values()
    return c.re * c.re + c.im * c.im == 1


def check_map(mapping: Mapping[str, Polynomial], source: Presentation, target: Presentation) -> None:
    """Images must be unitary words in the target, and the source relations must survive."""
    missing = set(source.generators) - set(mapping)
    if missing:
        raise PresentationError(f"no image for generator(s) {sorted(missing)}")
    for g, img in mapping.items():
        if g not in source.generators:
            raise PresentationError(f"{g!r} is not a generator of {source}")
        if not img.variables() <= set(target.generators):
            raise PresentationError(f"image of {g} uses symbols outside {target}")
        if not _is_unitary_word(img):
            raise PresentationError(f"image of {g} is not a unitary word: {img}")
    rel = source.relations
    if rel.kind == "free":
        return
    for i in range(rel.n):
        for j in range(rel.n):
            u, v = mapping[f"u{i + 1}"], mapping[f"v{j + 1}"]
            if target.reduce(u * v) == target.reduce(v * u):
                continue
            # a generator-to-generator map between softenings may loosen eps
            tr = target.relations
            plain = (len(next(iter(u.terms))) == 1 and len(next(iter(v.terms))) == 1
                     and next(iter(u.terms))[0][0].startswith("u") and next(iter(v.terms))[0][0].startswith("v"))
            if tr.kind == "soft" and plain and (rel.kind == "product" or tr.eps >= rel.eps):
                continue
            raise PresentationError(f"relation [u{i + 1}, v{j + 1}] of {source} is not preserved in {target}")


def apply_computable_map(mapping: Mapping[str, Polynomial | str], source: Presentation, target: Presentation,
                         point: GeneratedPoint, k: int = 0) -> tuple[GeneratedPoint, Fraction]:
    """Image of a generated point under a polynomial map; exact, so the distance is 0."""
    mp = {g: (parse_poly(v, target.generators) if isinstance(v, str) else v) for g, v in mapping.items()}
    check_map(mp, source, target)
    image = target.reduce(point.polynomial.substitute(mp))
    return target.point(image), Fraction(0)


# ---------------------------------------------------------------- softenings

@dataclass(frozen=True)
class SofteningEntry:
    m: int
    bound: float         # published (running-min) upper bound on alpha_{m,p}
    raw: float
    cert_hash: str


def softening_sequence(p: Polynomial, n: int, m_max: int, degree: int | None = None,
                       cap: int = MOMENT_CAP) -> tuple[list[SofteningEntry], float]:
    """Upper bounds on ||p|| in the 1/m softening for m = 1..m_max, plus the exact-commutation bound.

    A bound for 1/m also bounds every 1/m' with m' > m (the softenings form an
    inductive system), so the published sequence is the running minimum.
    """
    if m_max < 1:
        raise PresentationError("m_max must be >= 1")
    soft1 = RelationSet("soft", n, Fraction(1))
    gp = group_polynomial(p, soft1)
    if degree is None:
        degree = _admissible_degree(max((len(w) for w in gp), default=0), soft1)
    exact = group_norm_upper(p, RelationSet("product", n), degree, cap)
    stream = BoundStream("upper", "softening")
    out = []
    for m in range(1, m_max + 1):
        nb = group_norm_upper(p, RelationSet("soft", n, Fraction(1, m)), degree, cap)
        if not nb.published:
            raise RelaxationError(f"softening bound at m={m} failed certification")
        e = stream.offer(m, nb.bound, nb.cert_hash)
        out.append(SofteningEntry(m, e.bound, nb.bound, e.certificate))
    return out, exact.bound
