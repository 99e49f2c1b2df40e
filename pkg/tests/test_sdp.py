import numpy as np
import pytest

from cstarbounds.sdp import (
    SdpError, SdpInstance, certificate_hash, certified_bound, certify, lower_hermitian, read_sdpa, solution_from_json,
    solution_to_json, solve, write_sdpa,
)


def hand_examples():
    # min x s.t. [[x]] >= 0
    a = SdpInstance.from_dense([1.0], [np.zeros((1, 1)), np.eye(1)], sense="min")
    # max t s.t. I - t I >= 0
    b = SdpInstance.from_dense([1.0], [np.eye(2), -np.eye(2)])
    # max <diag(1,-1), X> over density matrices X = [[s, t], [t, 1 - s]]; objective 2s - 1
    c = SdpInstance.from_dense([2.0, 0.0], [np.diag([0.0, 1.0]), np.diag([1.0, -1.0]), np.array([[0, 1.0], [1, 0]])])
    return [(a, 0.0, 0.0), (b, 1.0, 0.0), (c, 1.0, -1.0)]


@pytest.mark.parametrize("case", range(3))
def test_hand_examples(case):
    p, want, offset = hand_examples()[case]
    s = solve(p)
    assert s.status == "optimal"
    assert s.primal_objective + offset == pytest.approx(want, abs=1e-7)
    cert = certify(p, s)
    assert cert.passed, cert.violations
    assert s.weak_duality_violations == 0


def test_corrupted_x_flagged():
    p, _, _ = hand_examples()[1]
    s = solve(p)
    s.x = s.x + 0.5
    assert any("primal infeasible" in v for v in certify(p, s).violations)


def test_negative_dual_eigenvalue_flagged():
    p, _, _ = hand_examples()[1]
    s = solve(p)
    s.Y = [s.Y[0] - np.eye(2)]
    assert any("not PSD" in v for v in certify(p, s).violations)


def test_certified_bound_is_an_upper_bound():
    p, want, _ = hand_examples()[1]
    s = solve(p)
    assert certified_bound(p, s) >= want - 1e-12
    assert certified_bound(p, s) == pytest.approx(want, abs=1e-7)


def test_tolerance_range_checked():
    p, _, _ = hand_examples()[0]
    with pytest.raises(SdpError):
        solve(p, tol=1e-2)


def test_deterministic():
    p, _, _ = hand_examples()[2]
    a, b = solve(p), solve(p)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_sdpa_roundtrip(tmp_path):
    for p, _, _ in hand_examples():
        q = read_sdpa(write_sdpa(p))
        assert q.digest() == p.digest()
        s = solve(p)
        s2 = solution_from_json(solution_to_json(s))
        assert certificate_hash(q, s2) == certificate_hash(p, s)


def test_hermitian_lowering_preserves_psd(rng):
    g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    h = g @ g.conj().T
    w = np.linalg.eigvalsh(lower_hermitian(h))
    assert w.min() > -1e-12
    # each eigenvalue of H appears twice
    assert np.allclose(np.sort(w), np.sort(np.repeat(np.linalg.eigvalsh(h), 2)))


def test_complex_constraint_via_lowering():
    # max t s.t. H - t I >= 0 with Hermitian H; the optimum is the least eigenvalue
    h = np.array([[2.0, 1j], [-1j, 2.0]])
    p = SdpInstance.from_dense([1.0], [lower_hermitian(h), -np.eye(4)])
    s = solve(p)
    assert s.primal_objective == pytest.approx(1.0, abs=1e-7)
