"""Nonlocal games, correlation tables and the value functional.

Indices are 0-based in memory.  The game file format is 1-based::

    {"k": 2, "n": 2,
     "pi": [["1/4", "1/4"], ["1/4", "1/4"]],
     "D": [[x, y, a, b, bit], ...]}          # omitted entries are 0
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

ENUMERATION_CAP = 10**7


class GameFormatError(ValueError):
    """Malformed game input; ``where`` names the offending field or line."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NonlocalGame:
    k: int
    n: int
    pi: tuple[tuple[Fraction, ...], ...]
    D: np.ndarray  # shape (k, k, n, n), entries in {0, 1}
    name: str = ""

    def __post_init__(self):
        D = np.array(self.D, dtype=np.int64)
        D.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "pi", tuple(tuple(Fraction(v) for v in row) for row in self.pi))

    @property
    def pi_array(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.pi])

    def payoff(self) -> np.ndarray:
        """pi(x, y) * D(x, y, a, b) as a float array indexed [x, y, a, b]."""
        return self.pi_array[:, :, None, None] * self.D

    def to_json(self) -> dict:
        entries = [
            [x + 1, y + 1, a + 1, b + 1, 1]
            for x, y, a, b in itertools.product(range(self.k), range(self.k), range(self.n), range(self.n))
            if self.D[x, y, a, b]
        ]
        return {
            "k": self.k,
            "n": self.n,
            "pi": [[str(v) for v in row] for row in self.pi],
            "D": entries,
        }


@dataclass(frozen=True, eq=False)
class Correlation:
    """p(a, b | x, y), stored as an array indexed [x, y, a, b]."""

    p: np.ndarray
    k: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 4 or p.shape[0] != p.shape[1] or p.shape[2] != p.shape[3]:
            raise ValueError(f"correlation table has shape {p.shape}, expected (k, k, n, n)")
        if p.min() < -1e-12:
            raise ValueError(f"negative probability {p.min():.3g}")
        sums = p.sum(axis=(2, 3))
        if np.abs(sums - 1).max() > 1e-9:
            raise ValueError(f"rows not normalised (max defect {np.abs(sums - 1).max():.3g})")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "k", p.shape[0])
        object.__setattr__(self, "n", p.shape[2])

    @classmethod
    def deterministic(cls, f, g, k: int, n: int) -> "Correlation":
        p = np.zeros((k, k, n, n))
        for x in range(k):
            for y in range(k):
                p[x, y, f[x], g[y]] = 1.0
        return cls(p)


def game_value(g: NonlocalGame, p: Correlation) -> float:
    """sum_{x,y} pi(x,y) sum_{a,b} D(x,y,a,b) p(a,b|x,y), with compensated summation."""
    if (p.k, p.n) != (g.k, g.n):
        raise ValueError(f"shape mismatch: game (k={g.k}, n={g.n}) vs correlation (k={p.k}, n={p.n})")
    terms = (g.payoff() * p.p).ravel()
    return float(math.fsum(terms))


def classical_value(g: NonlocalGame, cap: int = ENUMERATION_CAP) -> Fraction:
    """Exact best deterministic value.

    Alice's n^k functions are enumerated; Bob best-responds per question, which is
    exact because his payoff separates over y once Alice is fixed.
    """
    count = g.n ** g.k
    if count * count > cap:
        raise EnumerationCapError(f"{count}^2 strategy pairs exceed the cap {cap}")
    pi = g.pi
    best = Fraction(0)
    for f in itertools.product(range(g.n), repeat=g.k):
        total = Fraction(0)
        for y in range(g.k):
            total += max(
                sum((pi[x][y] for x in range(g.k) if g.D[x, y, f[x], b]), Fraction(0)) for b in range(g.n)
            )
        best = max(best, total)
    return best


def validate_game(g: NonlocalGame) -> list[str]:
    """Human-readable diagnostics; empty when the game is well formed."""
    issues = []
    total = sum((v for row in g.pi for v in row), Fraction(0))
    if total != 1:
        issues.append(f"normalization-defect {1 - total}")
    for x, row in enumerate(g.pi):
        for y, v in enumerate(row):
            if v < 0:
                issues.append(f"negative pi at ({x + 1},{y + 1})")
    bad = np.argwhere((g.D != 0) & (g.D != 1))
    for idx in bad:
        x, y, a, b = (int(i) + 1 for i in idx)
        issues.append(f"binarity violation at ({x},{y},{a},{b}): {int(g.D[tuple(idx)])}")
    return issues


def make_game(k: int, n: int, pi, D, name: str = "", strict: bool = True) -> NonlocalGame:
    g = NonlocalGame(k, n, pi, np.asarray(D), name)
    if k < 2 or n < 2:
        raise GameFormatError("k and n must be at least 2", "k/n")
    if np.shape(g.D) != (k, k, n, n):
        raise GameFormatError(f"D has shape {np.shape(g.D)}, expected {(k, k, n, n)}", "D")
    if strict:
        issues = validate_game(g)
        if issues:
            raise GameFormatError("; ".join(issues), "pi/D")
    return g


def game_from_json(data: dict, name: str = "") -> NonlocalGame:
    for key in ("k", "n", "pi"):
        if key not in data:
            raise GameFormatError("missing field", key)
    k, n = data["k"], data["n"]
    if not isinstance(k, int) or not isinstance(n, int):
        raise GameFormatError("must be integers", "k/n")
    if len(data["pi"]) != k or any(len(row) != k for row in data["pi"]):
        raise GameFormatError(f"expected a {k}x{k} array", "pi")
    pi = []
    for x, row in enumerate(data["pi"]):
        out = []
        for y, v in enumerate(row):
            try:
                out.append(Fraction(str(v)))
            except (ValueError, ZeroDivisionError) as exc:
                raise GameFormatError(f"not a rational: {v!r}", f"pi[{x + 1}][{y + 1}]") from exc
        pi.append(out)
    D = np.zeros((k, k, n, n), dtype=np.int64)
    for i, entry in enumerate(data.get("D", [])):
        if not isinstance(entry, list) or len(entry) != 5:
            raise GameFormatError("expected [x, y, a, b, bit]", f"D[{i}]")
        x, y, a, b, bit = entry
        if not (1 <= x <= k and 1 <= y <= k and 1 <= a <= n and 1 <= b <= n):
            raise GameFormatError("index out of range (indices are 1-based)", f"D[{i}]")
        D[x - 1, y - 1, a - 1, b - 1] = bit
    return make_game(k, n, pi, D, name)


def load_game(path: str | Path) -> NonlocalGame:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFormatError(exc.msg, f"{path}:line {exc.lineno} col {exc.colno}") from exc
    if not isinstance(data, dict):
        raise GameFormatError("top level must be an object", str(path))
    return game_from_json(data, name=Path(path).stem)


def dump_game(g: NonlocalGame, path: str | Path) -> None:
    Path(path).write_text(json.dumps(g.to_json(), indent=1), encoding="utf-8")


# ---------------------------------------------------------------- fixtures

def chsh() -> NonlocalGame:
    """CHSH: win iff a XOR b == x AND y, questions uniform."""
    D = np.zeros((2, 2, 2, 2), dtype=np.int64)
    for x, y, a, b in itertools.product(range(2), repeat=4):
        D[x, y, a, b] = int((a ^ b) == (x & y))
    q = Fraction(1, 4)
    return make_game(2, 2, [[q, q], [q, q]], D, "chsh")


def constant_game(bit: int, k: int = 2, n: int = 2) -> NonlocalGame:
    q = Fraction(1, k * k)
    D = np.full((k, k, n, n), bit, dtype=np.int64)
    return make_game(k, n, [[q] * k for _ in range(k)], D, "all-win" if bit else "no-win")


# Magic square answers: Alice's row fillings have product +1, Bob's columns -1.
ROW_FILLINGS = [s for s in itertools.product((1, -1), repeat=3) if s[0] * s[1] * s[2] == 1]
COLUMN_FILLINGS = [t for t in itertools.product((1, -1), repeat=3) if t[0] * t[1] * t[2] == -1]


def magic_square() -> NonlocalGame:
    """Mermin-Peres magic square: k = 3 rows/columns, n = 4 parity-constrained fillings."""
    D = np.zeros((3, 3, 4, 4), dtype=np.int64)
    for x, y in itertools.product(range(3), repeat=2):
        for a, row in enumerate(ROW_FILLINGS):
            for b, col in enumerate(COLUMN_FILLINGS):
                D[x, y, a, b] = int(row[y] == col[x])
    q = Fraction(1, 9)
    return make_game(3, 4, [[q] * 3 for _ in range(3)], D, "magic-square")


FIXTURES = {
    "chsh": chsh,
    "magic-square": magic_square,
    "all-win": lambda: constant_game(1),
    "no-win": lambda: constant_game(0),
}


def resolve_game(spec: str) -> NonlocalGame:
    """A built-in fixture name or a path to a game file."""
    if spec in FIXTURES:
        return FIXTURES[spec]()
    return load_game(spec)


def random_game(rng: np.random.Generator, k: int = 2, n: int = 2) -> NonlocalGame:
    weights = rng.integers(1, 4, size=(k, k))
    total = int(weights.sum())
    pi = [[Fraction(int(w), total) for w in row] for row in weights]
    D = rng.integers(0, 2, size=(k, k, n, n))
    return make_game(k, n, pi, D, "random")
