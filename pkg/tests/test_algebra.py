import numpy as np
import pytest

from cstarbounds.algebra import (
    AlgebraElement, PovmCandidate, RepairError, SignatureError, kron, min_tensor, op_norm, p_min,
    povm_repair, povm_residual, positive_part,
)


def test_direct_sum_norm_is_max_over_blocks():
    x = AlgebraElement.of(np.diag([1.0, -3.0]), [[2.0]])
    assert op_norm(x) == pytest.approx(3.0)
    assert x.signature == (2, 1)


def test_signature_mismatch():
    with pytest.raises(SignatureError):
        AlgebraElement.of(np.eye(2)) + AlgebraElement.of(np.eye(3))


def test_json_roundtrip(rng):
    x = AlgebraElement.of(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)), [[0.5]])
    assert AlgebraElement.from_json(x.to_json()).allclose(x, atol=0)


def test_positive_part():
    x = AlgebraElement.of(np.diag([2.0, -1.0]))
    assert positive_part(x).allclose(AlgebraElement.of(np.diag([2.0, 0.0])))


def test_pmin_pauli_sum():
    pauli = [np.eye(2), [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], np.diag([1, -1])]
    els = [AlgebraElement.of(m) for m in pauli]
    # 1 (x) 1 + X (x) X + Y (x) Y + Z (x) Z is twice the swap
    assert p_min(els, els) == pytest.approx(2.0, abs=1e-12)


def test_kron_multiplicative_norm(rng):
    a = AlgebraElement.of(rng.standard_normal((3, 3)))
    b = AlgebraElement.of(rng.standard_normal((2, 2)), rng.standard_normal((1, 1)))
    assert op_norm(kron(a, b)) == pytest.approx(op_norm(a) * op_norm(b), rel=1e-12)
    assert min_tensor([a], [b]).signature == (6, 3)


def test_povm_repair_fixture():
    c = PovmCandidate([AlgebraElement.of(np.diag([1.1, 0.0])), AlgebraElement.of(np.diag([0.0, 0.9]))])
    assert povm_residual(c) == pytest.approx(0.1, abs=1e-12)
    fixed = povm_repair(c)
    assert povm_residual(fixed) < 1e-12
    assert c.distance(fixed) == pytest.approx(0.1, abs=1e-12)


def test_exact_povm_is_fixed():
    c = PovmCandidate([AlgebraElement.of(np.diag([0.3, 1.0])), AlgebraElement.of(np.diag([0.7, 0.0]))])
    assert povm_residual(c) < 1e-15
    assert povm_repair(c).distance(c) < 1e-12


def test_repair_refuses_large_residual():
    c = PovmCandidate([AlgebraElement.of(np.diag([2.0, 0.0])), AlgebraElement.of(np.diag([0.0, 1.0]))])
    with pytest.raises(RepairError):
        povm_repair(c)
