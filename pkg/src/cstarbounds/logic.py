"""Restricted continuous-logic formulas over C*-algebras and interval evaluation.

Connectives: constants 0 and 1, ``half`` (x/2) and ``monus`` (x -. y = max(x - y, 0)).
Two derived connectives are stored as their own nodes and lowered only for the
restricted-flag check:

* ``Max(a, b)``      lowers to 1 -. ((1 -. b) -. (a -. b))   (max on [0, 1])
* ``TruncSum(a, b)`` lowers to 1 -. ((1 -. a) -. b)          (min(1, a + b) for a, b >= 0)

Atoms are ``norm(p)`` for a *-polynomial p, and ``pmin(p_1..p_n; q_1..q_n)`` for
||sum p_k (x) q_k||.  Quantified variables range over the unit ball of the
algebra with the given block signature.

Text grammar::

    f := '0' | '1' | 'half(' f ')' | 'monus(' f ',' f ')' | 'max(' f ',' f ')'
       | 'tsum(' f ',' f ')' | 'norm(' poly ')' | 'pmin(' polys ';' polys ')'
       | ('sup' | 'inf') IDENT ['@' HINT '(' IDENT ')'] '.' f
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .algebra import AlgebraElement, op_norm, p_min, povm_tolerance, sqrt_positive_part
from .games import NonlocalGame
from .polynomial import Polynomial, parse_poly

NORM_SLACK = 1e-9
HINTS = ("sqrt_pos",)


class FormulaError(ValueError):
    pass


# ---------------------------------------------------------------- nodes

@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Const(Node):
    value: int  # 0 or 1


@dataclass(frozen=True)
class Atom(Node):
    poly: Polynomial


@dataclass(frozen=True)
class PminAtom(Node):
    left: tuple[Polynomial, ...]
    right: tuple[Polynomial, ...]


@dataclass(frozen=True)
class Halve(Node):
    child: Node


@dataclass(frozen=True)
class Monus(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Max(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class TruncSum(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Quant(Node):
    kind: str           # "sup" | "inf"
    var: str
    body: Node
    hint: str | None = None   # e.g. "sqrt_pos:x1"


ZERO_F, ONE_F = Const(0), Const(1)


def lower(node: Node) -> Node:
    """Replace derived connectives by their monus forms."""
    if isinstance(node, Max):
        a, b = lower(node.left), lower(node.right)
        return Monus(ONE_F, Monus(Monus(ONE_F, b), Monus(a, b)))
    if isinstance(node, TruncSum):
        a, b = lower(node.left), lower(node.right)
        return Monus(ONE_F, Monus(Monus(ONE_F, a), b))
    if isinstance(node, Halve):
        return Halve(lower(node.child))
    if isinstance(node, Monus):
        return Monus(lower(node.left), lower(node.right))
    if isinstance(node, Quant):
        return Quant(node.kind, node.var, lower(node.body), node.hint)
    return node


def atom_variables(node: Node) -> set[str]:
    if isinstance(node, Atom):
        return node.poly.variables()
    if isinstance(node, PminAtom):
        return set().union(*(p.variables() for p in node.left + node.right))
    return set()


def free_variables(node: Node) -> list[str]:
    """Free variables in order of first appearance."""
    out: list[str] = []

    def walk(n: Node, bound: frozenset):
        if isinstance(n, (Atom, PminAtom)):
            polys = [n.poly] if isinstance(n, Atom) else list(n.left + n.right)
            for p in polys:
                for w, _ in p.items():
                    for name, _ in w:
                        if name not in bound and name not in out:
                            out.append(name)
        elif isinstance(n, Halve):
            walk(n.child, bound)
        elif isinstance(n, (Monus, Max, TruncSum)):
            walk(n.left, bound)
            walk(n.right, bound)
        elif isinstance(n, Quant):
            walk(n.body, bound | {n.var})

    walk(node, frozenset())
    return out


def bound_variables(node: Node) -> list[str]:
    if isinstance(node, Quant):
        return [node.var] + bound_variables(node.body)
    if isinstance(node, Halve):
        return bound_variables(node.child)
    if isinstance(node, (Monus, Max, TruncSum)):
        return bound_variables(node.left) + bound_variables(node.right)
    return []


# ---------------------------------------------------------------- modulus

@dataclass(frozen=True)
class Modulus:
    """Nondecreasing piecewise-linear function on (0, 1) given by rational breakpoints."""

    points: tuple[tuple[Fraction, Fraction], ...] = ((Fraction(0), Fraction(0)), (Fraction(1), Fraction(1)))

    def __post_init__(self):
        pts = tuple((Fraction(t), Fraction(v)) for t, v in self.points)
        if len(pts) < 2 or any(b[0] <= a[0] or b[1] < a[1] for a, b in zip(pts, pts[1:])):
            raise FormulaError("modulus breakpoints must be strictly increasing in t and nondecreasing in value")
        object.__setattr__(self, "points", pts)

    def __call__(self, eps) -> Fraction:
        e = Fraction(eps)
        pts = self.points
        if e <= pts[0][0]:
            return pts[0][1]
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if e <= t1:
                return v0 + (v1 - v0) * (e - t0) / (t1 - t0)
        return pts[-1][1]


@dataclass(frozen=True)
class Formula:
    node: Node
    free_vars: tuple[str, ...] = ()
    modulus: Modulus = field(default_factory=Modulus)

    def __post_init__(self):
        declared = tuple(self.free_vars) if self.free_vars else tuple(free_variables(self.node))
        missing = set(free_variables(self.node)) - set(declared)
        if missing:
            raise FormulaError(f"atoms reference undeclared variables {sorted(missing)}")
        clash = set(bound_variables(self.node)) & set(declared)
        if clash:
            raise FormulaError(f"variables both bound and free: {sorted(clash)}")
        object.__setattr__(self, "free_vars", declared)

    def is_restricted(self) -> bool:
        def ok(n: Node) -> bool:
            if isinstance(n, (Const, Atom, PminAtom)):
                return True
            if isinstance(n, Halve):
                return ok(n.child)
            if isinstance(n, Monus):
                return ok(n.left) and ok(n.right)
            if isinstance(n, Quant):
                return ok(n.body)
            return False

        return ok(lower(self.node))

    def is_universal(self) -> bool:
        """Restricted, and every quantifier acts as a sup once polarity is accounted for.

        The right argument of monus reverses polarity, so an inf there counts as a sup.
        """
        def walk(n: Node, positive: bool) -> bool:
            if isinstance(n, Quant):
                return (n.kind == "sup") == positive and walk(n.body, positive)
            if isinstance(n, Halve):
                return walk(n.child, positive)
            if isinstance(n, Monus):
                return walk(n.left, positive) and walk(n.right, not positive)
            if isinstance(n, (Max, TruncSum)):
                return walk(n.left, positive) and walk(n.right, positive)
            return True

        return self.is_restricted() and walk(self.node, True)

    def substitute(self, mapping: Mapping[str, Polynomial], free_vars: Sequence[str] | None = None) -> "Formula":
        node = substitute(self.node, mapping)
        if free_vars is None:
            free_vars = free_variables(node)
        return Formula(node, tuple(free_vars), self.modulus)

    def __str__(self) -> str:
        return to_text(self.node)


def substitute(node: Node, mapping: Mapping[str, Polynomial]) -> Node:
    if isinstance(node, Atom):
        return Atom(node.poly.substitute(mapping))
    if isinstance(node, PminAtom):
        return PminAtom(tuple(p.substitute(mapping) for p in node.left), tuple(q.substitute(mapping) for q in node.right))
    if isinstance(node, Halve):
        return Halve(substitute(node.child, mapping))
    if isinstance(node, (Monus, Max, TruncSum)):
        return type(node)(substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Quant):
        inner = {k: v for k, v in mapping.items() if k != node.var}
        return Quant(node.kind, node.var, substitute(node.body, inner), node.hint)
    return node


# ---------------------------------------------------------------- text form

def to_text(node: Node) -> str:
    if isinstance(node, Const):
        return str(node.value)
    if isinstance(node, Atom):
        return f"norm({node.poly})"
    if isinstance(node, PminAtom):
        return f"pmin({', '.join(map(str, node.left))}; {', '.join(map(str, node.right))})"
    if isinstance(node, Halve):
        return f"half({to_text(node.child)})"
    name = {Monus: "monus", Max: "max", TruncSum: "tsum"}.get(type(node))
    if name:
        return f"{name}({to_text(node.left)}, {to_text(node.right)})"
    if isinstance(node, Quant):
        hint = ""
        if node.hint:
            h, arg = node.hint.split(":")
            hint = f" @{h}({arg})"
        return f"{node.kind} {node.var}{hint} . {to_text(node.body)}"
    raise FormulaError(f"unknown node {node!r}")


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class _FormulaParser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def ws(self):
        while self.i < len(self.s) and self.s[self.i].isspace():
            self.i += 1

    def expect(self, tok: str):
        self.ws()
        if not self.s.startswith(tok, self.i):
            raise FormulaError(f"expected {tok!r} at offset {self.i} in {self.s!r}")
        self.i += len(tok)

    def ident(self) -> str:
        self.ws()
        m = _IDENT.match(self.s, self.i)
        if not m:
            raise FormulaError(f"expected identifier at offset {self.i}")
        self.i = m.end()
        return m.group()

    def balanced(self) -> str:
        """Text up to the ')' closing an already consumed '('."""
        depth, start = 0, self.i
        while self.i < len(self.s):
            ch = self.s[self.i]
            if ch in "([":
                depth += 1
            elif ch in ")]":
                if depth == 0 and ch == ")":
                    out = self.s[start:self.i]
                    self.i += 1
                    return out
                depth -= 1
            self.i += 1
        raise FormulaError(f"unbalanced parentheses in {self.s!r}")

    def parse(self) -> Node:
        node = self.formula()
        self.ws()
        if self.i != len(self.s):
            raise FormulaError(f"trailing input at offset {self.i} in {self.s!r}")
        return node

    def formula(self) -> Node:
        self.ws()
        if self.s.startswith("0", self.i) or self.s.startswith("1", self.i):
            self.i += 1
            return Const(int(self.s[self.i - 1]))
        word = self.ident()
        if word in ("sup", "inf"):
            var = self.ident()
            hint = None
            self.ws()
            if self.s.startswith("@", self.i):
                self.i += 1
                h = self.ident()
                if h not in HINTS:
                    raise FormulaError(f"unknown hint {h!r}")
                self.expect("(")
                hint = f"{h}:{self.ident()}"
                self.expect(")")
            self.expect(".")
            return Quant(word, var, self.formula(), hint)
        self.expect("(")
        if word == "norm":
            return Atom(parse_poly(self.balanced()))
        if word == "pmin":
            inner = self.balanced()
            parts = _split_top(inner, ";")
            if len(parts) != 2:
                raise FormulaError("pmin needs 'left polys ; right polys'")
            left = tuple(parse_poly(t) for t in _split_top(parts[0], ","))
            right = tuple(parse_poly(t) for t in _split_top(parts[1], ","))
            if len(left) != len(right):
                raise FormulaError(f"pmin has {len(left)} left and {len(right)} right factors")
            return PminAtom(left, right)
        if word == "half":
            child = self.formula()
            self.expect(")")
            return Halve(child)
        ctor = {"monus": Monus, "max": Max, "tsum": TruncSum}.get(word)
        if ctor is None:
            raise FormulaError(f"unknown connective {word!r}")
        a = self.formula()
        self.expect(",")
        b = self.formula()
        self.expect(")")
        return ctor(a, b)


def _split_top(text: str, sep: str) -> list[str]:
    out, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == sep and depth == 0:
            out.append(text[start:i])
            start = i + 1
    out.append(text[start:])
    return [t.strip() for t in out]


def parse_formula(text: str, free_vars: Sequence[str] | None = None) -> Formula:
    return Formula(_FormulaParser(text).parse(), tuple(free_vars or ()))


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __iter__(self):
        return iter((self.lo, self.hi))

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _poly_element(p: Polynomial, env: Mapping[str, AlgebraElement], sig: tuple[int, ...]) -> AlgebraElement:
    blocks = []
    for i, d in enumerate(sig):
        blocks.append(p.evaluate({name: env[name].blocks[i] for name in p.variables()}, d))
    return AlgebraElement(tuple(blocks))


def _ball_sample(rng: np.random.Generator, sig: tuple[int, ...]) -> AlgebraElement:
    blocks = [rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) for d in sig]
    x = AlgebraElement(tuple(blocks))
    return x.scale(1.0 / max(op_norm(x), 1e-300))


def _to_ball(x: AlgebraElement) -> AlgebraElement:
    n = op_norm(x)
    return x if n <= 1 else x.scale(1.0 / n)


class _Evaluator:
    def __init__(self, sig: tuple[int, ...], budget: int, rng: np.random.Generator,
                 witnesses: Mapping[str, Sequence[AlgebraElement]]):
        self.sig = sig
        self.budget = budget
        self.rng = rng
        self.witnesses = witnesses

    def atom_range(self, polys: Sequence[Polynomial], env) -> list[float]:
        out = []
        for p in polys:
            if p.variables() <= env.keys():
                out.append(op_norm(_poly_element(p, env, self.sig)))
            else:
                out.append(p.coefficient_bound())
        return out

    def eval(self, node: Node, env: dict, budget: int) -> Interval:
        if isinstance(node, Const):
            return Interval(float(node.value), float(node.value))
        if isinstance(node, Atom):
            if node.poly.variables() <= env.keys():
                v = op_norm(_poly_element(node.poly, env, self.sig))
                return Interval(v, v)
            return Interval(0.0, node.poly.coefficient_bound())
        if isinstance(node, PminAtom):
            if all(p.variables() <= env.keys() for p in node.left + node.right):
                v = p_min([_poly_element(p, env, self.sig) for p in node.left],
                          [_poly_element(q, env, self.sig) for q in node.right])
                return Interval(v, v)
            hi = sum(a * b for a, b in zip(self.atom_range(node.left, env), self.atom_range(node.right, env)))
            return Interval(0.0, hi)
        if isinstance(node, Halve):
            c = self.eval(node.child, env, budget)
            return Interval(c.lo / 2, c.hi / 2)
        if isinstance(node, Monus):
            a, b = self.eval(node.left, env, budget), self.eval(node.right, env, budget)
            return Interval(max(a.lo - b.hi, 0.0), max(a.hi - b.lo, 0.0))
        if isinstance(node, Max):
            a, b = self.eval(node.left, env, budget), self.eval(node.right, env, budget)
            return Interval(max(a.lo, b.lo), max(a.hi, b.hi))
        if isinstance(node, TruncSum):
            a, b = self.eval(node.left, env, budget), self.eval(node.right, env, budget)
            return Interval(min(1.0, a.lo + b.lo), min(1.0, a.hi + b.hi))
        if isinstance(node, Quant):
            return self.quantifier(node, env, budget)
        raise FormulaError(f"unknown node {node!r}")

    def quantifier(self, node: Quant, env: dict, budget: int) -> Interval:
        # gather the block of consecutive quantifiers of the same kind
        block, body = [], node
        while isinstance(body, Quant) and body.kind == node.kind:
            block.append(body)
            body = body.body
        sup = node.kind == "sup"
        names = [q.var for q in block]
        # opposite endpoint: range bound with the block unassigned
        outer = {k: v for k, v in env.items() if k not in names}
        rng_bound = self.eval(body, outer, 0) if budget >= 0 else None
        inner_budget = max(1, budget // 10)

        def score(assign: dict) -> tuple[float, Interval]:
            iv = self.eval(body, {**env, **assign}, inner_budget)
            return (iv.lo if sup else -iv.hi), iv

        candidates = []
        hinted = {}
        for q in block:
            if q.hint:
                h, arg = q.hint.split(":")
                hinted[q.var] = (h, arg)
        base = {}
        for q in block:
            if q.var in self.witnesses:
                base[q.var] = self.witnesses[q.var][0]
        one = AlgebraElement.identity(self.sig)
        zero = AlgebraElement.zero(self.sig)

        def resolve(assign: dict) -> dict:
            out = dict(assign)
            for var, (h, arg) in hinted.items():
                if var in out:
                    continue
                src = out.get(arg, env.get(arg))
                if src is not None and h == "sqrt_pos":
                    out[var] = _to_ball(sqrt_positive_part(src))
            return out

        def fill(default) -> dict:
            return resolve({**{v: default for v in names if v not in hinted}, **base})

        candidates.append(fill(one))
        candidates.append(fill(zero))
        n_wit = max((len(self.witnesses.get(v, ())) for v in names), default=0)
        for j in range(1, n_wit):
            cand = {v: self.witnesses[v][min(j, len(self.witnesses[v]) - 1)] for v in names if v in self.witnesses}
            candidates.append(resolve({**{v: one for v in names if v not in hinted}, **cand}))
        best_s, best_iv, best = -math.inf, None, None
        for cand in candidates:
            cand = {v: cand.get(v, one) for v in names}
            s, iv = score(cand)
            if s > best_s:
                best_s, best_iv, best = s, iv, cand
        spent = len(candidates)
        step = 0.5
        while spent < budget:
            if spent % 3 == 0 or best is None:
                cand = resolve({v: _ball_sample(self.rng, self.sig) for v in names if v not in hinted})
                cand = {v: cand.get(v, one) for v in names}
            else:
                v = names[int(self.rng.integers(len(names)))]
                cand = dict(best)
                cand[v] = _to_ball(best[v] + _ball_sample(self.rng, self.sig).scale(step))
                cand = {**cand, **{k: val for k, val in resolve({k: x for k, x in cand.items() if k not in hinted}).items()}}
                step = max(step * 0.97, 1e-3)
            s, iv = score(cand)
            spent += 1
            if s > best_s:
                best_s, best_iv, best = s, iv, cand
        if sup:
            return Interval(best_iv.lo, max(rng_bound.hi, best_iv.lo))
        return Interval(min(rng_bound.lo, best_iv.hi), best_iv.hi)


def eval_interval(f: Formula, assignment: Mapping[str, AlgebraElement], search_budget: int = 60, seed: int = 0,
                  signature: Sequence[int] | None = None,
                  witnesses: Mapping[str, Sequence[AlgebraElement]] | None = None) -> Interval:
    """An interval containing the value of ``f`` at ``assignment``.

    Quantifier-free formulas evaluate exactly.  For sup the lower end is the best
    witness found and the upper end the syntactic range bound; inf is symmetric.
    ``witnesses`` seeds the search for named bound variables.
    """
    missing = [v for v in f.free_vars if v not in assignment]
    if missing:
        raise FormulaError(f"unassigned free variable(s) {missing}")
    sig = None
    for name, x in assignment.items():
        if op_norm(x) > 1 + NORM_SLACK:
            raise FormulaError(f"{name} has norm {op_norm(x):.6g} > 1")
        if sig is None:
            sig = x.signature
        elif x.signature != sig:
            raise FormulaError("assigned elements have different signatures")
    if signature is not None:
        if sig is not None and tuple(signature) != sig:
            raise FormulaError(f"signature {tuple(signature)} differs from the assignment's {sig}")
        sig = tuple(signature)
    if sig is None:
        sig = (2,)
    ev = _Evaluator(sig, search_budget, np.random.default_rng(seed), dict(witnesses or {}))
    return ev.eval(f.node, dict(assignment), search_budget)


# ---------------------------------------------------------------- residual and value sentences

def max_of(nodes: Sequence[Node]) -> Node:
    if not nodes:
        raise FormulaError("max of nothing")
    out = nodes[0]
    for n in nodes[1:]:
        out = Max(out, n)
    return out


def rho_formula(n: int, xs: Sequence[str] | None = None, ys: Sequence[str] | None = None) -> Formula:
    """inf_y max(max_i ||x_i - y_i y_i*||, ||sum x_i - 1||): distance-to-POVM residual."""
    if n < 1:
        raise FormulaError("rho_formula needs n >= 1")
    xs = list(xs or [f"x{i + 1}" for i in range(n)])
    ys = list(ys or [f"y{i + 1}" for i in range(n)])
    terms = []
    for x, y in zip(xs, ys):
        X, Y = Polynomial.var(x), Polynomial.var(y)
        terms.append(Atom(X - Y * Y.adjoint()))
    total = sum((Polynomial.var(x) for x in xs), Polynomial()) - 1
    body: Node = max_of(terms + [Atom(total)])
    for x, y in reversed(list(zip(xs, ys))):
        body = Quant("inf", y, body, f"sqrt_pos:{x}")
    return Formula(body, tuple(xs))


def alpha_node(t: Node, factor: int = 4) -> Node:
    """min(1, factor * t) as a chain of truncated sums."""
    out = t
    for _ in range(factor - 1):
        out = TruncSum(out, t)
    return out


def game_variables(game: NonlocalGame) -> tuple[list[str], list[str]]:
    A = [f"A{x + 1}_{a + 1}" for x in range(game.k) for a in range(game.n)]
    B = [f"B{y + 1}_{b + 1}" for y in range(game.k) for b in range(game.n)]
    return A, B


def value_formula(game: NonlocalGame) -> Formula:
    """phi(x, y) = ||sum_i x_i (x) y_i|| over 2 k^2 n^2 free variables, indexed (x, y, a, b)."""
    N = game.k ** 2 * game.n ** 2
    xs = [f"p{i + 1}" for i in range(N)]
    ys = [f"q{i + 1}" for i in range(N)]
    node = PminAtom(tuple(Polynomial.var(v) for v in xs), tuple(Polynomial.var(v) for v in ys))
    return Formula(node, tuple(xs + ys))


def build_value_sentence(phi: Formula, game: NonlocalGame, alpha_factor: int = 4) -> Formula:
    """sup over (A, B) of phi(pi D A, B) -. alpha(max of the POVM residuals of A^x and B^y).

    phi's free variables are read as k^2 n^2 left then k^2 n^2 right variables,
    each block ordered (x, y, a, b) row-major.
    """
    k, n = game.k, game.n
    N = k * k * n * n
    if len(phi.free_vars) != 2 * N:
        raise FormulaError(f"phi has {len(phi.free_vars)} free variables; this game needs {2 * N}")
    Avars, Bvars = game_variables(game)
    mapping = {}
    for i, (x, y, a, b) in enumerate(itertools.product(range(k), range(k), range(n), range(n))):
        w = game.pi[x][y] * int(game.D[x, y, a, b])
        mapping[phi.free_vars[i]] = Polynomial.var(Avars[x * n + a]) * w
        mapping[phi.free_vars[N + i]] = Polynomial.var(Bvars[y * n + b])
    body = substitute(phi.node, mapping)
    residuals = []
    for party, names in (("A", Avars), ("B", Bvars)):
        for q in range(k):
            xs = names[q * n:(q + 1) * n]
            ys = [f"w{v}" for v in xs]
            residuals.append(rho_formula(n, xs, ys).node)
    sentence: Node = Monus(body, alpha_node(max_of(residuals), alpha_factor))
    for v in reversed(Avars + Bvars):
        sentence = Quant("sup", v, sentence)
    return Formula(sentence, (), phi.modulus)


def strategy_witnesses(game: NonlocalGame, A: np.ndarray, B: np.ndarray) -> dict[str, list[AlgebraElement]]:
    """Witness lists for the sentence's quantifiers from a strategy's POVMs."""
    Avars, Bvars = game_variables(game)
    out = {}
    for x in range(game.k):
        for a in range(game.n):
            out[Avars[x * game.n + a]] = [AlgebraElement.of(A[x, a])]
            out[Bvars[x * game.n + a]] = [AlgebraElement.of(B[x, a])]
    return out


def sentence_tolerance(phi: Formula, gap: Fraction = Fraction(1, 8)) -> float:
    """Residual below which repairing a near-POVM moves phi by less than ``gap``.

    Composes phi's declared modulus with the repair modulus.
    """
    return povm_tolerance(float(phi.modulus(gap)))
