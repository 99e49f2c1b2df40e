"""Acceptance criteria, each at its stated tolerance; every test prints one PASS/FAIL line.

The lines are also collected and repeated in the terminal summary (see conftest.py).
"""

import time
from fractions import Fraction

import numpy as np
import scipy.linalg

from cstarbounds.algebra import REPAIR_ENVELOPE, AlgebraElement, PovmCandidate, kron, op_norm, p_min, povm_repair, povm_residual
from cstarbounds.decider import PromiseInstance, decide, replay, same_race
from cstarbounds.games import chsh, classical_value, constant_game, magic_square, random_game
from cstarbounds.npa import (
    RelationSet, group_norm_upper, max_tensor_norm_bounds, npa_upper_bound, parse_group_poly, parse_relations,
)
from cstarbounds.polynomial import Polynomial
from cstarbounds.presentations import NormAnswer, Presentation, apply_computable_map, norm_query, softening_sequence
from cstarbounds.sdp import SdpInstance, certify, solve
from cstarbounds.strategies import lower_bound_stream, random_povm, seesaw_lower_bound, strategy_value

RESULTS: list[str] = []


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1

def test_1_chsh_sandwich():
    t0 = time.monotonic()
    g = chsh()
    cv = classical_value(g)
    lo, strat = seesaw_lower_bound(g, 2, restarts=8, iters=100, seed=0)
    relax = npa_upper_bound(g, 1)
    hi = relax.bound
    secs = time.monotonic() - t0
    ok = (cv == Fraction(3, 4) and lo >= 0.8534 and relax.published and hi <= 0.85356
          and hi - lo <= 2e-3 and lo <= hi and abs(strategy_value(g, strat) - lo) < 1e-10 and secs <= 60)
    report(1, ok, f"classical={cv} lower={lo:.10f} upper={hi:.10f} width={hi - lo:.2e} time={secs:.2f}s")


# ---------------------------------------------------------------- 2

def test_2_decider_soundness():
    fixtures = [("no-win", constant_game(0), "LowCase"), ("all-win", constant_game(1), "HighCase"),
                ("magic-square", magic_square(), "HighCase")]
    bad, worst = [], 0.0
    for name, g, want in fixtures:
        for seed in range(50):
            t0 = time.monotonic()
            v = decide(PromiseInstance(g, "co"), budget_secs=120, seed=seed, deterministic=True)
            secs = time.monotonic() - t0
            worst = max(worst, secs)
            r = replay(v, g)
            if v.outcome != want or secs > 120 or not same_race(v, r):
                bad.append((name, seed, v.outcome))
    report(2, not bad, f"150 runs, {len(bad)} wrong or non-replayable, slowest {worst:.2f}s {bad[:3]}")


# ---------------------------------------------------------------- 3

def test_3_free_group_norms():
    pres = Presentation(parse_relations("free(2)"))
    tol = Fraction(1, 2 ** 10)
    parts, ok = [], True
    for text, want in (("u1+u1'+u2+u2'", 4), ("u1-u2", 2)):
        t0 = time.monotonic()
        ans = norm_query(pres, pres.point(text), 10, budget_secs=60)
        secs = time.monotonic() - t0
        good = isinstance(ans, NormAnswer) and abs(ans.value - want) < tol and secs <= 60
        ok &= good
        parts.append(f"{text} -> {getattr(ans, 'value', ans)} ({secs:.2f}s)")
    report(3, ok, "; ".join(parts))


# ---------------------------------------------------------------- 4

def _random_element(rng, d):
    return AlgebraElement.of(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))


def _dense(x: AlgebraElement) -> np.ndarray:
    return scipy.linalg.block_diag(*x.blocks)


def _oracle_norm(A, B) -> float:
    # independent path: dense Kronecker products, then the top eigenvalue of T* T
    T = sum(np.kron(_dense(a), _dense(b)) for a, b in zip(A, B))
    w = np.linalg.eigvalsh(T.conj().T @ T)
    return float(np.sqrt(max(w[-1], 0.0)))


def test_4_tensor_oracle():
    rng = np.random.default_rng(4)
    worst, worst_mult = 0.0, 0.0
    for _ in range(500):
        n = int(rng.integers(1, 5))
        da, db = (int(v) for v in rng.integers(2, 5, size=2))
        A = [_random_element(rng, da) for _ in range(n)]
        B = [_random_element(rng, db) for _ in range(n)]
        got, want = p_min(A, B), _oracle_norm(A, B)
        worst = max(worst, abs(got - want) / max(1.0, want))
        a, b = A[0], B[0]
        worst_mult = max(worst_mult, abs(op_norm(kron(a, b)) - op_norm(a) * op_norm(b)) / max(1.0, op_norm(a) * op_norm(b)))
    report(4, worst <= 1e-10 and worst_mult <= 1e-10,
           f"500 inputs, max deviation {worst:.2e}, multiplicativity {worst_mult:.2e}")


# ---------------------------------------------------------------- 5

def _perturbed_povm(rng):
    n, d = int(rng.integers(1, 5)), int(rng.integers(1, 7))
    M = random_povm(rng, n, d)
    target = rng.uniform(0.0, 0.2)
    H = rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))
    H = (H + H.conj().transpose(0, 2, 1)) / 2
    while True:
        cand = PovmCandidate([AlgebraElement.of(m + h) for m, h in zip(M, H * target / max(1e-300, np.abs(H).max()))])
        if povm_residual(cand) <= 0.2:
            return cand
        target /= 2


def test_5_povm_repair():
    rng = np.random.default_rng(5)
    worst_res, modulus, fails = 0.0, 0.0, 0
    for _ in range(200):
        c = _perturbed_povm(rng)
        r = povm_residual(c)
        fixed = povm_repair(c)
        out = povm_residual(fixed)
        dist = c.distance(fixed)
        worst_res = max(worst_res, out)
        if r > 0:
            modulus = max(modulus, dist / r)
        if out > 1e-12 or dist > REPAIR_ENVELOPE * r + 1e-15:
            fails += 1
    report(5, fails == 0, f"200 candidates, output residual <= {worst_res:.1e}, "
                          f"empirical modulus {modulus:.3f} (envelope {REPAIR_ENVELOPE:g}), {fails} failures")


# ---------------------------------------------------------------- 6

def _random_sdp(rng):
    sizes = [int(v) for v in rng.integers(1, 6, size=int(rng.integers(1, 4)))]
    m = int(rng.integers(1, 7))

    def sym(n):
        a = rng.standard_normal((n, n))
        return (a + a.T) / 2

    F = [[sym(n) for n in sizes] for _ in range(m)]
    F0 = []
    for n in sizes:
        g = rng.standard_normal((n, n))
        F0.append(g @ g.T + np.eye(n))          # x = 0 is strictly feasible
    Y0 = []
    for n in sizes:
        g = rng.standard_normal((n, n))
        Y0.append(g @ g.T + np.eye(n))          # a strictly feasible dual point fixes c
    sense = "max" if rng.random() < 0.5 else "min"
    sign = -1.0 if sense == "max" else 1.0
    c = np.array([sign * sum(np.sum(Fi[b] * Y0[b]) for b in range(len(sizes))) for Fi in F])
    return SdpInstance.from_dense(c, [F0] + F, sizes, sense)


def _hand_sdps():
    return [SdpInstance.from_dense([1.0], [np.zeros((1, 1)), np.eye(1)], sense="min"),
            SdpInstance.from_dense([1.0], [np.eye(2), -np.eye(2)]),
            SdpInstance.from_dense([2.0, 0.0], [np.diag([0.0, 1.0]), np.diag([1.0, -1.0]), np.array([[0, 1.0], [1, 0]])])]


def test_6_sdp_certificates():
    rng = np.random.default_rng(6)
    instances = [_random_sdp(rng) for _ in range(50)] + _hand_sdps()
    bad, worst_gap, violations = [], 0.0, 0
    for i, p in enumerate(instances):
        # the gap criterion is absolute, so use the tightest relative tolerance
        s = solve(p, tol=1e-10)
        cert = certify(p, s)
        violations += s.weak_duality_violations
        worst_gap = max(worst_gap, cert.gap)
        if not cert.passed or cert.gap > 1e-7 or s.status != "optimal":
            bad.append((i, s.status, cert.violations[:1]))
    report(6, not bad and violations == 0,
           f"{len(instances)} instances, max gap {worst_gap:.1e}, weak-duality violations {violations}, failures {bad[:3]}")


# ---------------------------------------------------------------- 7

def test_7_monotonicity():
    violations, checks = [], 0
    rng = np.random.default_rng(7)
    games = [("chsh", chsh())] + [(f"random{i}", random_game(rng, 2, 2)) for i in range(3)]
    for name, g in games:
        b1, b2 = npa_upper_bound(g, 1).bound, npa_upper_bound(g, 2).bound
        checks += 1
        if b2 > b1 + 1e-9:
            violations.append(f"npa {name}: {b1} -> {b2}")
        st = lower_bound_stream(g, schedule=(1, 2), restarts=4, iters=50)
        checks += 1
        if not st.is_monotone() or st.value > b2 + 1e-6:
            violations.append(f"see-saw {name}")
    free2 = parse_relations("free(2)")
    for text in ("u1 + u2 + u1*u2", "u1 - u2 + u1*u1", "u1*u2 - u2*u1 + 1/2"):
        p = parse_group_poly(text, free2)
        bounds = [group_norm_upper(p, free2, d).bound for d in (4, 6)]
        checks += 1
        if bounds[1] > bounds[0] + 1e-9:
            violations.append(f"degree {text}: {bounds}")
    prod1 = RelationSet("product", 1)
    for text in ("[u1, v1]", "u1 + v1 + u1*v1'"):
        p = parse_group_poly(text, prod1)
        entries, exact = softening_sequence(p, 1, 4)
        vals = [e.bound for e in entries]
        checks += 1
        if any(b > a + 1e-12 for a, b in zip(vals, vals[1:])) or any(v < exact - 1e-7 for v in vals):
            violations.append(f"softening {text}: {vals} vs {exact}")
        lower, upper = max_tensor_norm_bounds(p, 1, stages=2, trials=2)
        checks += 1
        if not (lower.is_monotone() and upper.is_monotone()):
            violations.append(f"max-tensor streams {text}")
    v = decide(PromiseInstance(chsh(), "co", Fraction(13, 16), Fraction(1), Fraction(1, 32)), max_turns=4)
    lows = [e.bound for e in v.transcript if e.stream == "lower"]
    ups = [e.bound for e in v.transcript if e.stream == "upper"]
    checks += 1
    if lows != sorted(lows) or ups != sorted(ups, reverse=True):
        violations.append("decider transcript")
    report(7, not violations, f"{checks} stream checks, {len(violations)} violations {violations[:3]}")


# ---------------------------------------------------------------- 8

def _random_poly(rng, gens):
    terms = {}
    for _ in range(int(rng.integers(1, 4))):
        word = tuple((gens[int(rng.integers(len(gens)))], bool(rng.integers(2))) for _ in range(int(rng.integers(0, 4))))
        terms[word] = Fraction(int(rng.integers(-3, 4)), int(rng.integers(1, 4))) or 1
    return Polynomial(terms)


def test_8_codes_and_maps():
    bad_codes = 0
    for rel in ("free(2)", "product(1)"):
        pres = Presentation(parse_relations(rel))
        bad_codes += sum(pres.encode(pres.decode(c)) != c for c in range(10 ** 4))
    rng = np.random.default_rng(8)
    cases = [
        (Presentation(parse_relations("free(2)")), Presentation(parse_relations("free(2)")),
         {"u1": "u1*u2", "u2": "u2'"}),
        (Presentation(parse_relations("product(1)")), Presentation(parse_relations("product(2)")),
         {"u1": "u1*u2", "v1": "v2*v1"}),
    ]
    bad_maps = 0
    for i in range(100):
        src, tgt, mp = cases[i % 2]
        p = src.point(_random_poly(rng, src.generators))
        q = src.point(_random_poly(rng, src.generators))
        pq = src.point(p.polynomial * q.polynomial)
        img_p, _ = apply_computable_map(mp, src, tgt, p)
        img_q, _ = apply_computable_map(mp, src, tgt, q)
        img_pq, dist = apply_computable_map(mp, src, tgt, pq)
        prod = tgt.point(img_p.polynomial * img_q.polynomial)
        if img_pq.polynomial != prod.polynomial or img_pq.code != prod.code or dist != 0:
            bad_maps += 1
    report(8, bad_codes == 0 and bad_maps == 0,
           f"2 x 10^4 codes, {bad_codes} round-trip failures; 100 map pairs, {bad_maps} multiplicativity failures")
