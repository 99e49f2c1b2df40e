"""Finite-dimensional quantum strategies and the see-saw lower-bound engine.

A strategy on C^d (x) C^d is stored with xi reshaped to a d x d matrix Psi, so
that p(a,b|x,y) = sum conj(Psi_ij) A^x_a[i,k] Psi_kl B^y_b[j,l].  Fixing Bob
and Psi, the value is sum_{x,a} tr(A^x_a Q^x_a) with
Q^x_a = sum_{y,b} pi D Psi (B^y_b)^T Psi^*, and symmetrically for Bob.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .games import COLUMN_FILLINGS, ROW_FILLINGS, Correlation, NonlocalGame, game_value
from .streams import BoundStream

log = logging.getLogger(__name__)

POVM_CHECK_TOL = 1e-10
STATE_NORM_TOL = 1e-12
RECHECK_TOL = 1e-10
DETERMINISTIC_CAP = 4096


class StrategyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuantumStrategy:
    d: int
    A: np.ndarray   # (k, n, d, d)
    B: np.ndarray   # (k, n, d, d)
    xi: np.ndarray  # (d*d,)

    def __post_init__(self):
        A = np.array(self.A, dtype=complex)
        B = np.array(self.B, dtype=complex)
        xi = np.array(self.xi, dtype=complex).ravel()
        d = int(self.d)
        for name, M in (("A", A), ("B", B)):
            if M.ndim != 4 or M.shape[2:] != (d, d):
                raise StrategyError(f"{name} has shape {M.shape}, expected (k, n, {d}, {d})")
        if A.shape[:2] != B.shape[:2]:
            raise StrategyError(f"A is {A.shape[:2]} but B is {B.shape[:2]}")
        if xi.size != d * d:
            raise StrategyError(f"state has {xi.size} entries, expected {d * d}")
        if abs(np.linalg.norm(xi) - 1) > STATE_NORM_TOL:
            raise StrategyError(f"state norm {np.linalg.norm(xi):.15g} differs from 1")
        for name, M in (("A", A), ("B", B)):
            r = povm_defect(M)
            if r > POVM_CHECK_TOL:
                raise StrategyError(f"{name} is not a POVM family (defect {r:.3g})")
        for arr in (A, B, xi):
            arr.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "xi", xi)

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def to_text(self) -> str:
        """Header ``strategy d k n``, then labelled row-major matrices of ``re im`` pairs."""
        lines = [f"strategy {self.d} {self.k} {self.n}"]
        for party, M in (("A", self.A), ("B", self.B)):
            for x in range(self.k):
                for a in range(self.n):
                    lines.append(f"{party} {x + 1} {a + 1}")
                    for row in M[x, a]:
                        lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
        lines.append("xi")
        lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in self.xi))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QuantumStrategy":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        head = lines[0].split()
        if head[0] != "strategy" or len(head) != 4:
            raise StrategyError("line 1: expected 'strategy d k n'")
        d, k, n = (int(v) for v in head[1:])

        def row(line: str, width: int, lineno: int) -> np.ndarray:
            vals = [float(v) for v in line.split()]
            if len(vals) != 2 * width:
                raise StrategyError(f"line {lineno}: expected {width} complex entries, got {len(vals) / 2:g}")
            return np.array(vals[0::2]) + 1j * np.array(vals[1::2])

        mats = {"A": np.zeros((k, n, d, d), complex), "B": np.zeros((k, n, d, d), complex)}
        i = 1
        for party in ("A", "B"):
            for x in range(k):
                for a in range(n):
                    if lines[i].split() != [party, str(x + 1), str(a + 1)]:
                        raise StrategyError(f"line {i + 1}: expected '{party} {x + 1} {a + 1}'")
                    for r in range(d):
                        mats[party][x, a, r] = row(lines[i + 1 + r], d, i + 2 + r)
                    i += d + 1
        if lines[i] != "xi":
            raise StrategyError(f"line {i + 1}: expected 'xi'")
        xi = row(lines[i + 1], d * d, i + 2)
        return cls(d, mats["A"], mats["B"], xi)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def povm_defect(M: np.ndarray) -> float:
    """max over questions of (negativity of any effect, ||sum_a M^x_a - 1||)."""
    d = M.shape[2]
    worst = 0.0
    for x in range(M.shape[0]):
        for a in range(M.shape[1]):
            E = M[x, a]
            worst = max(worst, float(np.abs(E - E.conj().T).max()))
            worst = max(worst, -float(np.linalg.eigvalsh((E + E.conj().T) / 2).min()))
        worst = max(worst, float(np.linalg.norm(M[x].sum(axis=0) - np.eye(d), 2)))
    return worst


def correlation_of(s: QuantumStrategy) -> Correlation:
    Psi = s.xi.reshape(s.d, s.d)
    p = np.einsum("ij,xaik,kl,ybjl->xyab", Psi.conj(), s.A, Psi, s.B, optimize=True)
    if np.abs(p.imag).max(initial=0.0) > 1e-12:
        raise StrategyError(f"correlation has imaginary residue {np.abs(p.imag).max():.3g}")
    p = p.real
    p[(p < 0) & (p > -1e-12)] = 0.0
    return Correlation(p)


def strategy_value(g: NonlocalGame, s: QuantumStrategy) -> float:
    return game_value(g, correlation_of(s))


# ---------------------------------------------------------------- see-saw steps

def _alice_operators(P: np.ndarray, B: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    # Q[x,a] = sum_{y,b} P[x,y,a,b] Psi B[y,b]^T Psi^*
    K = np.einsum("xyab,ybjl->xajl", P, B.transpose(0, 1, 3, 2))
    return np.einsum("ij,xajl,kl->xaik", Psi, K, Psi.conj())


def _bob_operators(P: np.ndarray, A: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    # R[y,b] = sum_{x,a} P[x,y,a,b] Psi^T A[x,a]^T conj(Psi)
    K = np.einsum("xyab,xaki->ybki", P, A.transpose(0, 1, 3, 2))
    return np.einsum("ki,ybkl,lj->ybij", Psi, K, Psi.conj())


def _herm(M: np.ndarray) -> np.ndarray:
    return (M + M.conj().T) / 2


def _psd_sqrt(R: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(_herm(R))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def best_response(Q: np.ndarray, current: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """POVM maximising sum_a tr(M_a Q_a) for one question.

    For two outcomes this is exact: the projector onto the positive eigenspace of
    Q_0 - Q_1.  For more outcomes, pairs (a, a') are re-split inside the fixed
    sum R = M_a + M_a', which is an exact step, so the objective never decreases.
    """
    n, d = Q.shape[0], Q.shape[1]
    if n == 2:
        w, v = np.linalg.eigh(_herm(Q[0] - Q[1]))
        P = (v[:, w > 0]) @ v[:, w > 0].conj().T
        return np.array([P, np.eye(d) - P])
    M = np.array(current, dtype=complex)
    for _ in range(sweeps):
        for a, b in itertools.combinations(range(n), 2):
            R = _herm(M[a] + M[b])
            Rh = _psd_sqrt(R)
            w, v = np.linalg.eigh(_herm(Rh @ (Q[a] - Q[b]) @ Rh))
            P = v[:, w > 0] @ v[:, w > 0].conj().T
            Ma = _herm(Rh @ P @ Rh)
            M[a], M[b] = Ma, R - Ma
    return M


def _objective(P: np.ndarray, A: np.ndarray, B: np.ndarray, Psi: np.ndarray) -> float:
    return float(np.einsum("xaik,xaki->", A, _alice_operators(P, B, Psi)).real)


def _best_state(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = A.shape[2]
    T = np.einsum("xyab,xaik,ybjl->ijkl", P, A, B).reshape(d * d, d * d)
    w, v = np.linalg.eigh(_herm(T))
    return v[:, -1]


def random_povm(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Square parameterisation: M_a = S^{-1/2} T_a^* T_a S^{-1/2}."""
    T = rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))
    Ms = np.einsum("aji,ajk->aik", T.conj(), T)
    w, v = np.linalg.eigh(Ms.sum(axis=0))
    Si = (v / np.sqrt(w)) @ v.conj().T
    return np.array([_herm(Si @ M @ Si) for M in Ms])


def _clean_povm(M: np.ndarray) -> np.ndarray:
    """Project iterates back onto exact POVMs to stop round-off from accumulating."""
    out = np.empty_like(M)
    d = M.shape[2]
    for x in range(M.shape[0]):
        parts = []
        for a in range(M.shape[1]):
            w, v = np.linalg.eigh(_herm(M[x, a]))
            parts.append((v * np.clip(w, 0, None)) @ v.conj().T)
        w, v = np.linalg.eigh(_herm(sum(parts)))
        Si = (v / np.sqrt(np.clip(w, 1e-300, None))) @ v.conj().T
        for a, Pa in enumerate(parts):
            out[x, a] = _herm(Si @ Pa @ Si)
        out[x, -1] = np.eye(d) - out[x, :-1].sum(axis=0)
    return out


def seesaw_run(g: NonlocalGame, A: np.ndarray, B: np.ndarray, Psi: np.ndarray, iters: int,
               tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Alternate Alice, Bob and state updates; the objective is nondecreasing."""
    P = g.payoff()
    d = A.shape[2]
    val = _objective(P, A, B, Psi)
    for _ in range(iters):
        Q = _alice_operators(P, B, Psi)
        A = np.array([best_response(Q[x], A[x]) for x in range(g.k)])
        R = _bob_operators(P, A, Psi)
        B = np.array([best_response(R[y], B[y]) for y in range(g.k)])
        Psi = _best_state(P, A, B).reshape(d, d)
        new = _objective(P, A, B, Psi)
        if new < val - 1e-12:
            log.debug("see-saw step lowered the objective by %.3g", val - new)
        if abs(new - val) <= tol:
            val = new
            break
        val = new
    return A, B, Psi, val


def _deterministic_povms(f: Sequence[int], n: int) -> np.ndarray:
    M = np.zeros((len(f), n, 1, 1), dtype=complex)
    for x, a in enumerate(f):
        M[x, a, 0, 0] = 1.0
    return M


def _finish(g: NonlocalGame, A, B, Psi) -> tuple[float, QuantumStrategy]:
    d = A.shape[2]
    xi = Psi.ravel() / np.linalg.norm(Psi)
    s = QuantumStrategy(d, _clean_povm(A), _clean_povm(B), xi)
    return strategy_value(g, s), s


def _restart_rng(seed: int, rung: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rung, restart]))


def seesaw_lower_bound(g: NonlocalGame, d: int, restarts: int = 8, iters: int = 100, seed: int = 0,
                       rung: int = 0) -> tuple[float, QuantumStrategy]:
    """Best see-saw value over restarts; the value is recomputed from the witness.

    At d = 1, Alice's deterministic strategies are enumerated (Bob best-responds), so
    the result is the classical value whenever n^k <= DETERMINISTIC_CAP.
    """
    if d < 1:
        raise StrategyError("dimension must be >= 1")
    best: tuple[float, QuantumStrategy] | None = None

    def consider(A, B, Psi):
        nonlocal best
        val, s = _finish(g, A, B, Psi)
        if best is None or val > best[0]:
            best = (val, s)

    if d == 1 and g.n ** g.k <= DETERMINISTIC_CAP:
        P = g.payoff()
        Psi = np.ones((1, 1), dtype=complex)
        for f in itertools.product(range(g.n), repeat=g.k):
            A = _deterministic_povms(f, g.n)
            R = _bob_operators(P, A, Psi)
            # scalar best response: Bob's best answer per question
            b_idx = [int(np.argmax(R[y, :, 0, 0].real)) for y in range(g.k)]
            B = _deterministic_povms(b_idx, g.n)
            consider(A, B, Psi)
        return best

    for r in range(max(1, restarts)):
        rng = _restart_rng(seed, rung, r)
        A = np.array([random_povm(rng, g.n, d) for _ in range(g.k)])
        B = np.array([random_povm(rng, g.n, d) for _ in range(g.k)])
        v = rng.standard_normal(d * d) + 1j * rng.standard_normal(d * d)
        Psi = (v / np.linalg.norm(v)).reshape(d, d)
        A, B, Psi, _ = seesaw_run(g, A, B, Psi, iters)
        consider(A, B, Psi)
    return best


def dimension_ladder(schedule: Sequence[int] | None = None) -> Iterator[int]:
    """The given rungs, or 1, 2, 4, 8, ... without end."""
    if schedule is not None:
        yield from schedule
        return
    d = 1
    while True:
        yield d
        d *= 2


def lower_bound_emissions(g: NonlocalGame, schedule: Sequence[int] | None = None, seed: int = 0,
                          restarts: int = 8, iters: int = 50) -> Iterator[tuple[int, float, QuantumStrategy]]:
    """One (d, value, witness) per rung; the iteration budget doubles per rung."""
    for rung, d in enumerate(dimension_ladder(schedule)):
        val, s = seesaw_lower_bound(g, d, restarts, iters * 2 ** rung, seed, rung)
        check = strategy_value(g, s)
        if abs(check - val) > RECHECK_TOL:
            raise StrategyError(f"witness re-check failed at d={d}: {val} vs {check}")
        yield d, check, s


def strategy_hash(s: QuantumStrategy) -> str:
    import hashlib
    return hashlib.sha256(s.to_text().encode()).hexdigest()[:16]


def lower_bound_stream(g: NonlocalGame, schedule: Sequence[int] = (1, 2, 4, 8), seed: int = 0,
                       restarts: int = 8, iters: int = 50) -> BoundStream:
    """Running maxima of the see-saw rungs; each emission carries its witness."""
    stream = BoundStream("lower", "see-saw")
    for d, val, s in lower_bound_emissions(g, schedule, seed, restarts, iters):
        stream.offer(d, val, strategy_hash(s), witness=s)
    return stream


# ---------------------------------------------------------------- fixtures

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Mermin-Peres square: rows multiply to +1, columns to -1
_SQUARE = [
    [(1, "XI"), (1, "IX"), (1, "XX")],
    [(1, "IZ"), (1, "ZI"), (1, "ZZ")],
    [(-1, "XZ"), (-1, "ZX"), (1, "YY")],
]


def _square_observable(r: int, c: int) -> np.ndarray:
    sign, labels = _SQUARE[r][c]
    return sign * np.kron(_PAULI[labels[0]], _PAULI[labels[1]])


def magic_square_strategy() -> QuantumStrategy:
    """Perfect d = 4 strategy: two maximally entangled qubit pairs.

    Alice measures the commuting observables of row x; Bob those of column y,
    transposed, so both report the same eigenvalue for the shared cell.
    """
    eye = np.eye(4)
    A = np.zeros((3, 4, 4, 4), dtype=complex)
    B = np.zeros((3, 4, 4, 4), dtype=complex)
    for x in range(3):
        for a, s in enumerate(ROW_FILLINGS):
            A[x, a] = (eye + s[0] * _square_observable(x, 0)) @ (eye + s[1] * _square_observable(x, 1)) / 4
    for y in range(3):
        for b, t in enumerate(COLUMN_FILLINGS):
            Pi = (eye + t[0] * _square_observable(0, y)) @ (eye + t[1] * _square_observable(1, y)) / 4
            B[y, b] = Pi.T
    xi = np.eye(4, dtype=complex).ravel() / 2
    return QuantumStrategy(4, A, B, xi)


def chsh_strategy() -> QuantumStrategy:
    """Maximally entangled qubits; Alice at angles 0, pi/2 and Bob at pi/4, -pi/4."""
    def proj(theta):
        v = np.array([np.cos(theta / 2), np.sin(theta / 2)])
        P = np.outer(v, v).astype(complex)
        return np.array([P, np.eye(2) - P])

    A = np.array([proj(0.0), proj(np.pi / 2)])
    B = np.array([proj(np.pi / 4), proj(-np.pi / 4)])
    xi = np.eye(2, dtype=complex).ravel() / np.sqrt(2)
    return QuantumStrategy(2, A, B, xi)
