"""Moment relaxations: upper bounds on commuting-operator game values and on
universal group C*-norms, plus representation-based lower bounds.

A relaxation assigns a linear functional L to the normal-form words of a
*-monoid and asks the moment matrix M[u, w] = L(u* w) to be PSD.  Words are
identified with their adjoints (real mode) or carry a real and an imaginary
variable (complex mode, lowered to a real block of twice the size).

Real mode is exact whenever the objective has real coefficients: if L is
feasible so is L o (transpose), and their average is real on every word.

Every feasible moment is bounded by 1 in modulus (diagonal entries are L(w*w),
which is 1 for unitaries and at most 1 for projector words by induction on the
word length), so the dual bound can be made rigorous with ``box=1``.
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.stats import unitary_group

from .games import NonlocalGame
from .polynomial import Polynomial, parse_poly
from .rewriting import ZERO, GroupWords, ProjectorWords, Word, word_order
from .sdp import (Certificate, SdpInstance, SdpSolution, certificate_hash, certified_bound, certify,
                  solve)
from .streams import BoundStream

log = logging.getLogger(__name__)

MOMENT_CAP = 400
DEFAULT_TOL = 1e-9


class RelaxationError(ValueError):
    pass


class CapExceeded(RelaxationError):
    pass


# ---------------------------------------------------------------- relation sets

@dataclass(frozen=True)
class RelationSet:
    """``free(n)``: u1..un.  ``product(n)``/``soft(n, eps)``: u1..un, v1..vn with
    [u_i, v_j] = 0, respectively ||[u_i, v_j]|| <= eps."""

    kind: str
    n: int
    eps: Fraction = Fraction(0)

    def __post_init__(self):
        if self.kind not in ("free", "product", "soft"):
            raise RelaxationError(f"unknown relation set {self.kind!r}")
        if self.n < 1:
            raise RelaxationError("relation sets need n >= 1")
        if self.eps < 0:
            raise RelaxationError("eps must be nonnegative")

    @property
    def generators(self) -> list[str]:
        us = [f"u{i + 1}" for i in range(self.n)]
        if self.kind == "free":
            return us
        return us + [f"v{i + 1}" for i in range(self.n)]

    @property
    def words(self) -> GroupWords:
        split = self.n if self.kind == "product" else None
        return GroupWords(len(self.generators), split)

    def commuting_pairs(self) -> list[tuple[int, int]]:
        if self.kind == "free":
            return []
        return [(i, self.n + j) for i in range(self.n) for j in range(self.n)]

    def exact(self) -> "RelationSet":
        """soft(n, 0) is product(n)."""
        if self.kind == "soft" and self.eps == 0:
            return RelationSet("product", self.n)
        return self

    def __str__(self) -> str:
        if self.kind == "soft":
            return f"soft({self.n}, {self.eps})"
        return f"{self.kind}({self.n})"


_REL = re.compile(r"^\s*(free|product|soft)\s*\(\s*(\d+)\s*(?:,\s*([0-9./]+)\s*)?\)\s*$")


def parse_relations(text: str) -> RelationSet:
    m = _REL.match(text)
    if not m:
        raise RelaxationError(f"cannot parse relation set {text!r} (expected free(n), product(n) or soft(n, eps))")
    kind, n, eps = m.group(1), int(m.group(2)), m.group(3)
    if (kind == "soft") != (eps is not None):
        raise RelaxationError(f"{kind} takes {'two arguments' if kind == 'soft' else 'one argument'}")
    try:
        eps_q = Fraction(eps) if eps is not None else Fraction(0)
    except (ValueError, ZeroDivisionError) as exc:
        raise RelaxationError(f"bad eps {eps!r}") from exc
    return RelationSet(kind, n, eps_q)


def group_polynomial(p: Polynomial, rel: RelationSet) -> dict[Word, complex]:
    """Map a polynomial over the generator names to reduced group words."""
    index = {g: i for i, g in enumerate(rel.generators)}
    unknown = p.variables() - set(index)
    if unknown:
        raise RelaxationError(f"unknown generator(s) {sorted(unknown)} for {rel}")
    words = rel.words
    out: dict[Word, complex] = {}
    for w, c in p.terms.items():
        gw = words.reduce((index[name], -1 if star else 1) for name, star in w)
        out[gw] = out.get(gw, 0) + complex(c)
    return {w: c for w, c in out.items() if c != 0}


# ---------------------------------------------------------------- generic builder

@dataclass
class MomentRelaxation:
    basis: list[Word]
    instance: SdpInstance
    offset: float
    complex_mode: bool
    classes: list[Word]              # variable j -> the word class it represents
    parts: list[str]                 # "re" or "im"
    localizer_sizes: list[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.basis)


class _Linearizer:
    """L(word) as a complex-affine form in the real moment variables."""

    def __init__(self, reduce: Callable, adjoint: Callable, complex_mode: bool):
        self.reduce = reduce
        self.adjoint = adjoint
        self.complex_mode = complex_mode
        self.index: dict[tuple[Word, str], int] = {}
        self.cache: dict[Word, dict[int, complex]] = {}

    def _var(self, cls: Word, part: str) -> int:
        key = (cls, part)
        if key not in self.index:
            self.index[key] = len(self.index)
        return self.index[key]

    def form(self, word: Iterable) -> dict[int, complex]:
        """Keys are variable indices; -1 is the constant term."""
        nf = self.reduce(tuple(word))
        if nf is ZERO:
            return {}
        if nf in self.cache:
            return self.cache[nf]
        if nf == ():
            out = {-1: 1.0 + 0j}
        else:
            adj = self.reduce(self.adjoint(nf))
            cls = min(nf, adj, key=word_order)
            out = {self._var(cls, "re"): 1.0 + 0j}
            if self.complex_mode and adj != nf:
                out[self._var(cls, "im")] = 1j if nf == cls else -1j
        self.cache[nf] = out
        return out

    def combine(self, terms: Iterable[tuple[complex, Iterable]]) -> dict[int, complex]:
        acc: dict[int, complex] = {}
        for coeff, word in terms:
            for v, z in self.form(word).items():
                acc[v] = acc.get(v, 0) + coeff * z
        return acc


def _block_entries(lin: _Linearizer, rows: Sequence[Word], cols_fn, complex_mode: bool):
    """Triplets (var, flat index, value) for a Hermitian block given entry forms."""
    N = len(rows)
    size = 2 * N if complex_mode else N
    trip: list[tuple[int, int, float]] = []

    def put(v, i, j, val):
        if val != 0:
            trip.append((v, i * size + j, val))

    for i in range(N):
        for j in range(i, N):
            form = cols_fn(i, j)
            for v, z in form.items():
                re_, im_ = z.real, z.imag
                put(v, i, j, re_)
                if i != j:
                    put(v, j, i, re_)
                if complex_mode:
                    put(v, N + i, N + j, re_)
                    if i != j:
                        put(v, N + j, N + i, re_)
                        put(v, N + i, j, im_)
                        put(v, j, N + i, im_)
                        put(v, i, N + j, -im_)
                        put(v, N + j, i, -im_)
    return size, trip


def build_relaxation(reduce: Callable, adjoint: Callable, basis: Sequence[Word],
                     objective: Iterable[tuple[complex, Word]],
                     localizers: Sequence[tuple[Sequence[tuple[complex, Word]], Sequence[Word]]] = (),
                     complex_mode: bool = False) -> MomentRelaxation:
    """max Re L(objective) over moment matrices of ``basis`` (and localizing blocks) that are PSD."""
    lin = _Linearizer(reduce, adjoint, complex_mode)
    basis = list(basis)
    blocks = []
    blocks.append(_block_entries(
        lin, basis, lambda i, j: lin.form(adjoint(basis[i]) + basis[j]), complex_mode))
    loc_sizes = []
    for g, lbasis in localizers:
        lbasis = list(lbasis)
        loc_sizes.append(len(lbasis))

        def entry(i, j, g=g, lbasis=lbasis):
            return lin.combine((c, adjoint(lbasis[i]) + tuple(w) + lbasis[j]) for c, w in g)

        blocks.append(_block_entries(lin, lbasis, entry, complex_mode))
    obj = lin.combine(objective)
    m = len(lin.index)
    c = np.zeros(m)
    for v, z in obj.items():
        if v >= 0:
            c[v] = z.real
    offset = float(obj.get(-1, 0).real)
    F, sizes = [], []
    for size, trip in blocks:
        if trip:
            v, idx, val = zip(*trip)
            rows = np.array(v) + 1   # constant -1 -> row 0
        else:
            rows, idx, val = [], [], []
        Fb = sp.csr_matrix((np.array(val, dtype=float), (np.array(rows, dtype=int), np.array(idx, dtype=int))),
                           shape=(m + 1, size * size))
        Fb.sum_duplicates()
        F.append(Fb)
        sizes.append(size)
    inst = SdpInstance(c, tuple(F), tuple(sizes), "max")
    classes = [None] * m
    parts = [None] * m
    for (cls, part), j in lin.index.items():
        classes[j], parts[j] = cls, part
    return MomentRelaxation(basis, inst, offset, complex_mode, classes, parts, loc_sizes)


@dataclass
class RelaxationResult:
    bound: float                 # rigorous (certified) bound on the relaxation optimum
    value: float                 # solver's primal value
    gap: float
    stage: int
    cert_hash: str
    certificate: Certificate | None
    relaxation: MomentRelaxation | None = field(default=None, repr=False)
    solution: SdpSolution | None = field(default=None, repr=False)

    @property
    def published(self) -> bool:
        return self.certificate is None or self.certificate.passed


def _solve_relaxation(rel: MomentRelaxation, stage: int, tol: float) -> RelaxationResult:
    if rel.instance.m == 0:
        # nothing to optimise: the objective is a constant
        return RelaxationResult(rel.offset, rel.offset, 0.0, stage, "constant", None, rel, None)
    sol = solve(rel.instance, tol=tol)
    cert = certify(rel.instance, sol, tol=max(1e-7, 10 * tol))
    bound = certified_bound(rel.instance, sol, box=1.0) + rel.offset
    if not cert.passed:
        log.warning("relaxation at stage %d not certified: %s", stage, "; ".join(cert.violations))
    return RelaxationResult(bound, sol.primal_objective + rel.offset, sol.gap, stage,
                            certificate_hash(rel.instance, sol), cert, rel, sol)


# ---------------------------------------------------------------- games

def _effect(x: int, a: int, n: int, party: int) -> list[tuple[float, Word]]:
    if a < n - 1:
        return [(1.0, ((party, x, a),))]
    return [(1.0, ())] + [(-1.0, ((party, x, b),)) for b in range(n - 1)]


def game_objective(g: NonlocalGame) -> list[tuple[float, Word]]:
    """sum pi(x,y) D(x,y,a,b) L(E^x_a F^y_b), with the last effects eliminated."""
    payoff = g.payoff()
    terms = []
    for x, y, a, b in itertools.product(range(g.k), range(g.k), range(g.n), range(g.n)):
        w = payoff[x, y, a, b]
        if w == 0:
            continue
        for ca, wa in _effect(x, a, g.n, 0):
            for cb, wb in _effect(y, b, g.n, 1):
                terms.append((w * ca * cb, wa + wb))
    return terms


def npa_relaxation(g: NonlocalGame, level: int, cap: int = MOMENT_CAP) -> MomentRelaxation:
    if level < 1:
        raise RelaxationError("level must be >= 1")
    words = ProjectorWords(g.k, g.n)
    basis = words.basis(level)
    if len(basis) > cap:
        raise CapExceeded(f"level {level} needs a {len(basis)}x{len(basis)} moment matrix (cap {cap})")
    return build_relaxation(words.reduce, words.adjoint, basis, game_objective(g))


def npa_upper_bound(g: NonlocalGame, level: int, cap: int = MOMENT_CAP, tol: float = DEFAULT_TOL) -> RelaxationResult:
    """Certified upper bound on the commuting-operator value at NPA level ``level``."""
    return _solve_relaxation(npa_relaxation(g, level, cap), level, tol)


# ---------------------------------------------------------------- group norms

def _admissible_degree(p_deg: int, rel: RelationSet) -> int:
    t = max(p_deg, 1)
    if rel.exact().kind == "soft":
        t = max(t, 2)
    return 2 * t


def group_relaxation(p: Polynomial, rel: RelationSet, degree: int | None = None,
                     cap: int = MOMENT_CAP) -> MomentRelaxation:
    """max L(p* p) subject to the relations, at moment degree 2t."""
    rel = rel.exact()
    gp = group_polynomial(p, rel)
    words = rel.words
    p_deg = max((len(w) for w in gp), default=0)
    need = _admissible_degree(p_deg, rel)
    if degree is None:
        degree = need
    if degree < need:
        raise RelaxationError(f"degree {degree} too small for this polynomial and {rel} (need >= {need})")
    t = degree // 2
    basis = words.basis(t)
    if len(basis) > cap:
        raise CapExceeded(f"degree {degree} needs {len(basis)} words (cap {cap})")
    objective = [(np.conj(c1) * c2, words.adjoint(w1) + w2) for (w1, c1), (w2, c2) in
                 itertools.product(gp.items(), repeat=2)]
    complex_mode = any(abs(c.imag) > 0 for c in gp.values())
    localizers = []
    if rel.kind == "soft":
        eps2 = float(rel.eps) ** 2
        lbasis = words.basis(t - 2)
        for i in range(rel.n):
            for j in range(rel.n):
                u, v = (i, 1), (rel.n + j, 1)
                comm = [(1.0, (u, v)), (-1.0, (v, u))]
                # eps^2 - c* c with c = uv - vu
                g = [(eps2, ())]
                for (a, wa), (b, wb) in itertools.product(comm, repeat=2):
                    g.append((-a * b, words.adjoint(wa) + wb))
                localizers.append((g, lbasis))
    return build_relaxation(words.reduce, words.adjoint, basis, objective, localizers, complex_mode)


@dataclass
class NormBound:
    bound: float          # upper bound on the norm (sqrt of the certified bound on L(p*p))
    squared: float
    stage: int
    gap: float
    cert_hash: str
    published: bool
    result: RelaxationResult | None = field(default=None, repr=False)


def group_norm_upper(p: Polynomial, rel: RelationSet, degree: int | None = None, cap: int = MOMENT_CAP,
                     tol: float = DEFAULT_TOL) -> NormBound:
    """Upper bound on the universal norm of ``p``; nonincreasing in ``degree``."""
    gp = group_polynomial(p, rel.exact())
    if set(gp) <= {()}:
        # a scalar after reduction: the norm is exact
        c = abs(gp.get((), 0))
        return NormBound(c, c * c, degree or 0, 0.0, "exact", True)
    relax = group_relaxation(p, rel, degree, cap)
    stage = degree if degree is not None else 2 * max(1, max((len(w) for w in relax.basis), default=1))
    res = _solve_relaxation(relax, stage, tol)
    sq = max(0.0, res.bound)
    return NormBound(math.sqrt(sq), sq, stage, res.gap, res.cert_hash, res.published, res)


def softened_norm_upper(p: Polynomial, n: int, eps, degree: int | None = None, cap: int = MOMENT_CAP,
                        tol: float = DEFAULT_TOL) -> NormBound:
    """Upper bound on ||p|| in the universal algebra of 2n unitaries with ||[u_i, v_j]|| <= eps."""
    return group_norm_upper(p, RelationSet("soft", n, Fraction(eps)), degree, cap, tol)


# ---------------------------------------------------------------- lower bounds

@dataclass
class RepresentationBound:
    value: float
    dim: int
    label: str
    matrices: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def check_representation(mats: dict[str, np.ndarray], rel: RelationSet, atol: float = 1e-9) -> bool:
    """Unitarity plus the relation set, verified numerically."""
    d = next(iter(mats.values())).shape[0]
    eye = np.eye(d)
    for U in mats.values():
        if np.linalg.norm(U.conj().T @ U - eye, 2) > atol:
            return False
    if rel.kind == "free":
        return True
    bound = 0.0 if rel.kind == "product" else float(rel.eps)
    for i in range(rel.n):
        for j in range(rel.n):
            U, V = mats[f"u{i + 1}"], mats[f"v{j + 1}"]
            if np.linalg.norm(U @ V - V @ U, 2) > bound + atol * (rel.kind == "product"):
                return False
    return True


def _structured(rel: RelationSet) -> Iterable[tuple[str, dict[str, np.ndarray]]]:
    gens = rel.generators
    g = len(gens)
    # scalar phases: every relation set admits commuting scalars
    roots = [1, -1, 1j, -1j] if 4 ** g <= 256 else [1, -1]
    for combo in itertools.product(roots, repeat=g):
        if len(roots) ** g > 256 and combo[0] != 1:
            continue
        yield "phase", {name: np.array([[z]], dtype=complex) for name, z in zip(gens, combo)}
    # permutation matrices in dimension 2 (tensor form for the two-sided sets)
    perms = [np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])]
    if rel.kind == "free":
        if 3 ** g <= 729:
            p3 = [np.eye(3)[list(s)] for s in itertools.permutations(range(3))]
            for combo in itertools.product(p3, repeat=g):
                yield "permutation", {name: P.astype(complex) for name, P in zip(gens, combo)}
        return
    if 4 ** g <= 256:
        for combo in itertools.product(perms, repeat=g):
            mats = {}
            for k, (name, P) in enumerate(zip(gens, combo)):
                mats[name] = (np.kron(P, np.eye(2)) if k < rel.n else np.kron(np.eye(2), P)).astype(complex)
            yield "permutation", mats


def _haar(rel: RelationSet, d: int, rng: np.random.Generator) -> tuple[str, dict[str, np.ndarray]]:
    gens = rel.generators
    if rel.kind == "free":
        return "haar", {name: unitary_group.rvs(d, random_state=rng) if d > 1 else
                        np.exp(2j * np.pi * rng.random()) * np.eye(1) for name in gens}
    Us = [unitary_group.rvs(d, random_state=rng) if d > 1 else np.exp(2j * np.pi * rng.random()) * np.eye(1)
          for _ in gens]
    eye = np.eye(d)
    product = {}
    for k, name in enumerate(gens):
        product[name] = np.kron(Us[k], eye) if k < rel.n else np.kron(eye, Us[k])
    if rel.kind == "product" or rel.eps == 0 or d == 1 or rng.random() < 0.5:
        return "haar-product", product
    return "haar-soft", _soft_pair(rel, d, rng)


def _soft_pair(rel: RelationSet, d: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """u_i Haar-random; v_j = exp(i s H_j) with s bisected so every ||[u_i, v_j]|| <= eps."""
    eps = float(rel.eps)
    us = [unitary_group.rvs(d, random_state=rng) for _ in range(rel.n)]
    mats = {f"u{i + 1}": u for i, u in enumerate(us)}
    for j in range(rel.n):
        A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        H = (A + A.conj().T) / 2
        w, v = np.linalg.eigh(H)

        def vmat(s):
            return (v * np.exp(1j * s * w)) @ v.conj().T

        def worst(s):
            V = vmat(s)
            return max(np.linalg.norm(u @ V - V @ u, 2) for u in us)

        lo, hi = 0.0, np.pi / max(np.abs(w).max(), 1e-12)
        if worst(hi) <= eps:
            lo = hi
        else:
            for _ in range(50):
                mid = (lo + hi) / 2
                if worst(mid) <= eps * (1 - 1e-9):
                    lo = mid
                else:
                    hi = mid
        mats[f"v{j + 1}"] = vmat(lo)
    return mats


def _represented_norm(p: Polynomial, mats: dict[str, np.ndarray]) -> float:
    d = next(iter(mats.values())).shape[0]
    return float(np.linalg.norm(p.evaluate(mats, d), 2))


def representation_candidates(p: Polynomial, rel: RelationSet, dims: Sequence[int] = (1, 2, 3),
                              trials: int = 20, seed: int = 0):
    """Structured representations first, then Haar samples per dimension rung."""
    rng = np.random.default_rng(seed)
    for label, mats in _structured(rel):
        yield label, mats
    for d in dims:
        for _ in range(trials):
            yield _haar(rel, d, rng)


def group_norm_lower(p: Polynomial, rel: RelationSet, dims: Sequence[int] = (1, 2, 3), trials: int = 20,
                     seed: int = 0) -> RepresentationBound:
    """Best represented norm over verified finite-dimensional representations."""
    unknown = p.variables() - set(rel.generators)
    if unknown:
        raise RelaxationError(f"unknown generator(s) {sorted(unknown)} for {rel}")
    best = RepresentationBound(0.0, 1, "none")
    for label, mats in representation_candidates(p, rel, dims, trials, seed):
        if not check_representation(mats, rel):
            continue
        val = _represented_norm(p, mats)
        if val > best.value:
            best = RepresentationBound(val, next(iter(mats.values())).shape[0], label, mats)
    return best


def max_tensor_norm_bounds(p: Polynomial, n: int, stages: int = 3, dims: Sequence[int] = (1, 2, 3),
                           trials: int = 10, seed: int = 0, cap: int = MOMENT_CAP,
                           tol: float = DEFAULT_TOL) -> tuple[BoundStream, BoundStream]:
    """Interleaved (lower, upper) streams for ||p|| in C*(F_n x F_n).

    Upper: SoS at increasing degree under exact commutation.  Lower: tensor-form
    representations at increasing dimension, which converge to the minimal norm only.
    """
    rel = RelationSet("product", n)
    lower, upper = BoundStream("lower", "max-tensor"), BoundStream("upper", "max-tensor")
    gp = group_polynomial(p, rel)
    deg0 = _admissible_degree(max((len(w) for w in gp), default=0), rel)
    for s in range(stages):
        d = dims[min(s, len(dims) - 1)]
        lb = group_norm_lower(p, rel, dims=(d,), trials=trials, seed=seed + s)
        lower.offer(d, lb.value, f"rep:{lb.label}:d={lb.dim}", witness=lb)
        try:
            ub = group_norm_upper(p, rel, deg0 + 2 * s, cap, tol)
        except CapExceeded:
            break
        if ub.published:
            upper.offer(ub.stage, ub.bound, ub.cert_hash, ub.gap)
    return lower, upper


def parse_group_poly(text: str, rel: RelationSet) -> Polynomial:
    return parse_poly(text, rel.generators)
