"""Finite-dimensional C*-algebra arithmetic on block-diagonal matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Empirical repair modulus: max_i ||A_i - B_i|| <= REPAIR_ENVELOPE * residual
# (frozen from the randomized sweep in tests/test_acceptance.py).
REPAIR_ENVELOPE = 5.0
POVM_TOL = 1e-12


class SignatureError(ValueError):
    pass


class RepairError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """Element of a direct sum of full matrix algebras M_{d_1} + ... + M_{d_r}."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.blocks:
            raise SignatureError("an element needs at least one block")
        fixed = []
        for b in self.blocks:
            b = np.array(b, dtype=complex)
            if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 1:
                raise SignatureError(f"block of shape {b.shape} is not square with dimension >= 1")
            b.setflags(write=False)
            fixed.append(b)
        object.__setattr__(self, "blocks", tuple(fixed))

    @classmethod
    def of(cls, *blocks) -> "AlgebraElement":
        return cls(tuple(np.atleast_2d(np.asarray(b, dtype=complex)) for b in blocks))

    @classmethod
    def identity(cls, signature: Sequence[int]) -> "AlgebraElement":
        return cls(tuple(np.eye(d) for d in _checked(signature)))

    @classmethod
    def zero(cls, signature: Sequence[int]) -> "AlgebraElement":
        return cls(tuple(np.zeros((d, d)) for d in _checked(signature)))

    @property
    def signature(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    def _same(self, other: "AlgebraElement"):
        if self.signature != other.signature:
            raise SignatureError(f"signatures differ: {self.signature} vs {other.signature}")

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._same(other)
        return AlgebraElement(tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._same(other)
        return AlgebraElement(tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __matmul__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._same(other)
        return AlgebraElement(tuple(a @ b for a, b in zip(self.blocks, other.blocks)))

    def scale(self, c: complex) -> "AlgebraElement":
        return AlgebraElement(tuple(c * b for b in self.blocks))

    def adjoint(self) -> "AlgebraElement":
        return AlgebraElement(tuple(b.conj().T for b in self.blocks))

    def hermitian_part(self) -> "AlgebraElement":
        return AlgebraElement(tuple((b + b.conj().T) / 2 for b in self.blocks))

    def allclose(self, other: "AlgebraElement", atol: float = 1e-12) -> bool:
        return self.signature == other.signature and all(
            np.allclose(a, b, atol=atol, rtol=0) for a, b in zip(self.blocks, other.blocks)
        )

    # External interface: entries as [re, im] pairs, signature as a dimension list.
    def to_json(self) -> dict:
        return {
            "signature": list(self.signature),
            "blocks": [[[[float(z.real), float(z.imag)] for z in row] for row in b] for b in self.blocks],
        }

    @classmethod
    def from_json(cls, data: dict) -> "AlgebraElement":
        sig = list(data["signature"])
        blocks = []
        for d, raw in zip(sig, data["blocks"], strict=True):
            arr = np.array([[complex(re, im) for re, im in row] for row in raw], dtype=complex)
            if arr.shape != (d, d):
                raise SignatureError(f"block declared {d}x{d} but has shape {arr.shape}")
            blocks.append(arr)
        return cls(tuple(blocks))

    def __repr__(self) -> str:
        return f"AlgebraElement(signature={self.signature})"


def _checked(signature: Sequence[int]) -> tuple[int, ...]:
    sig = tuple(int(d) for d in signature)
    if not sig or any(d < 1 for d in sig):
        raise SignatureError(f"invalid signature {signature!r}")
    return sig


def op_norm(x: AlgebraElement) -> float:
    """C*-norm: the largest singular value over all blocks."""
    return max(float(np.linalg.norm(b, 2)) for b in x.blocks)


def positive_part(x: AlgebraElement) -> AlgebraElement:
    out = []
    for b in x.hermitian_part().blocks:
        w, v = np.linalg.eigh(b)
        out.append((v * np.clip(w, 0, None)) @ v.conj().T)
    return AlgebraElement(tuple(out))


def sqrt_positive_part(x: AlgebraElement) -> AlgebraElement:
    out = []
    for b in x.hermitian_part().blocks:
        w, v = np.linalg.eigh(b)
        out.append((v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T)
    return AlgebraElement(tuple(out))


def kron(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    """Elementary tensor; the tensor signature lists d_i * e_j in row-major (i, j) order."""
    return AlgebraElement(tuple(np.kron(x, y) for x in a.blocks for y in b.blocks))


def min_tensor(a: Sequence[AlgebraElement], b: Sequence[AlgebraElement]) -> AlgebraElement:
    """sum_k a_k (x) b_k in the spatial tensor product."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} left factors, {len(b)} right factors")
    if not a:
        raise ValueError("need at least one pair of factors")
    sa, sb = a[0].signature, b[0].signature
    if any(x.signature != sa for x in a) or any(y.signature != sb for y in b):
        raise SignatureError("factors on one side must share a signature")
    blocks = []
    for i in range(len(sa)):
        for j in range(len(sb)):
            acc = np.zeros((sa[i] * sb[j],) * 2, dtype=complex)
            for x, y in zip(a, b):
                acc += np.kron(x.blocks[i], y.blocks[j])
            blocks.append(acc)
    return AlgebraElement(tuple(blocks))


def p_min(a: Sequence[AlgebraElement], b: Sequence[AlgebraElement]) -> float:
    """||sum_k a_k (x) b_k||; equals the max tensor norm too, since these algebras are nuclear."""
    return op_norm(min_tensor(a, b))


class PovmCandidate:
    """A tuple of algebra elements that should be a POVM."""

    def __init__(self, elements: Sequence[AlgebraElement]):
        elements = tuple(elements)
        if not elements:
            raise ValueError("a POVM candidate needs at least one element")
        sig = elements[0].signature
        if any(e.signature != sig for e in elements):
            raise SignatureError("POVM elements must share one signature")
        self.elements = elements

    @property
    def length(self) -> int:
        return len(self.elements)

    @property
    def signature(self) -> tuple[int, ...]:
        return self.elements[0].signature

    def distance(self, other: "PovmCandidate") -> float:
        return max(op_norm(x - y) for x, y in zip(self.elements, other.elements, strict=True))

    def to_json(self) -> dict:
        return {"signature": list(self.signature), "elements": [e.to_json()["blocks"] for e in self.elements]}

    @classmethod
    def from_json(cls, data: dict) -> "PovmCandidate":
        sig = data["signature"]
        return cls([AlgebraElement.from_json({"signature": sig, "blocks": e}) for e in data["elements"]])

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)


def povm_residual(c: PovmCandidate) -> float:
    """Residual at the square-root witness y_i = sqrt(x_i^+).

    This upper-bounds the infimum over all witnesses and vanishes exactly on POVMs.
    """
    total = AlgebraElement.zero(c.signature)
    worst = 0.0
    for x in c.elements:
        y = sqrt_positive_part(x)
        worst = max(worst, op_norm(x - y @ y.adjoint()))
        total = total + x
    worst = max(worst, op_norm(total - AlgebraElement.identity(c.signature)))
    return worst


def povm_repair(c: PovmCandidate) -> PovmCandidate:
    """Nearby exact POVM: clip to positive parts, then renormalise by S^{-1/2} . S^{-1/2}."""
    r = povm_residual(c)
    if r >= 0.25:
        raise RepairError(f"residual {r:.3g} too large to repair (needs < 1/4)")
    parts = [positive_part(x) for x in c.elements]
    inv_roots = []
    for i in range(len(c.signature)):
        s = sum(p.blocks[i] for p in parts)
        w, v = np.linalg.eigh((s + s.conj().T) / 2)
        if w.min() < 1e-8:
            raise RepairError(f"sum of positive parts is near-singular (min eigenvalue {w.min():.3g})")
        inv_roots.append((v / np.sqrt(w)) @ v.conj().T)
    out = []
    for p in parts:
        blocks = []
        for i, b in enumerate(p.blocks):
            m = inv_roots[i] @ b @ inv_roots[i]
            blocks.append((m + m.conj().T) / 2)
        out.append(AlgebraElement(tuple(blocks)))
    return PovmCandidate(out)


def povm_tolerance(eps: float) -> float:
    """Residual below which repair moves every element by less than ``eps``."""
    return eps / REPAIR_ENVELOPE
