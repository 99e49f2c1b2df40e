import numpy as np
import pytest

from cstarbounds.algebra import AlgebraElement, PovmCandidate, povm_residual
from cstarbounds.games import chsh, constant_game
from cstarbounds.logic import (
    FormulaError, Max, TruncSum, build_value_sentence, eval_interval, lower, parse_formula,
    rho_formula, strategy_witnesses, to_text, value_formula,
)
from cstarbounds.strategies import chsh_strategy


def ev(text, **assign):
    f = parse_formula(text, list(assign) or None)
    return eval_interval(f, {k: AlgebraElement.of(v) for k, v in assign.items()})


def test_connectives_on_constants():
    iv = ev("monus(1, half(1))")
    assert iv.lo == iv.hi == pytest.approx(0.5)
    assert ev("max(half(1), half(half(1)))").hi == pytest.approx(0.5)
    assert ev("tsum(half(1), 1)").hi == pytest.approx(1.0)


@pytest.mark.parametrize("a, b", [(0.0, 0.0), (0.25, 0.75), (0.9, 0.3), (1.0, 1.0), (0.5, 0.5)])
def test_derived_connectives_lower_to_base(a, b):
    # Max and TruncSum are sugar; both forms must agree on [0, 1]
    x, y = np.diag([a]), np.diag([b])
    for text in ("max(norm(x), norm(y))", "tsum(norm(x), norm(y))"):
        f = parse_formula(text, ["x", "y"])
        g = type(f)(lower(f.node), f.free_vars)
        env = {"x": AlgebraElement.of(x), "y": AlgebraElement.of(y)}
        assert eval_interval(f, env).lo == pytest.approx(eval_interval(g, env).lo, abs=1e-15)
    assert ev("max(norm(x), norm(y))", x=x, y=y).lo == pytest.approx(max(a, b))
    assert ev("tsum(norm(x), norm(y))", x=x, y=y).lo == pytest.approx(min(1.0, a + b))


def test_lowered_formula_uses_only_base_connectives():
    f = parse_formula("max(tsum(norm(x), half(1)), 0)", ["x"])
    seen = []

    def walk(n):
        seen.append(type(n))
        for v in vars(n).values():
            if isinstance(v, tuple):
                for w in v:
                    if hasattr(w, "__dataclass_fields__"):
                        walk(w)
            elif hasattr(v, "__dataclass_fields__") and not hasattr(v, "terms"):
                walk(v)

    walk(lower(f.node))
    assert Max not in seen and TruncSum not in seen


def test_sup_over_ball():
    iv = ev("sup x . norm(x)")
    assert iv.lo == pytest.approx(1.0, abs=1e-9)


def test_free_variable_must_be_assigned():
    with pytest.raises(FormulaError):
        eval_interval(parse_formula("norm(x)", ["x"]), {})


def test_norm_bound_enforced():
    with pytest.raises(FormulaError):
        ev("norm(x)", x=np.eye(2) * 2)


def test_text_roundtrip():
    f = parse_formula("sup x . monus(norm(x*x' - 1/2), half(tsum(norm(x), 0)))")
    assert parse_formula(to_text(f.node)).node == f.node


def test_rho_matches_residual():
    # a contraction-valued near-POVM: the elements sum to diag(0.9, 1)
    els = [AlgebraElement.of(np.diag([0.9, 0.0])), AlgebraElement.of(np.diag([0.0, 1.0]))]
    iv = eval_interval(rho_formula(2), {"x1": els[0], "x2": els[1]})
    assert iv.hi == pytest.approx(povm_residual(PovmCandidate(els)), abs=1e-12)
    assert iv.hi == pytest.approx(0.1, abs=1e-12)


def test_rho_vanishes_on_povm():
    f = rho_formula(2)
    iv = eval_interval(f, {"x1": AlgebraElement.of(np.diag([0.3, 1.0])), "x2": AlgebraElement.of(np.diag([0.7, 0.0]))})
    assert iv.lo == 0.0 and iv.hi < 1e-12


def test_value_sentence_shape():
    s = build_value_sentence(value_formula(chsh()), chsh())
    assert s.free_vars == ()
    assert s.is_restricted() and s.is_universal()


def test_value_sentence_brackets_chsh():
    g = chsh()
    s = build_value_sentence(value_formula(g), g)
    strat = chsh_strategy()
    iv = eval_interval(s, {}, search_budget=4, witnesses=strategy_witnesses(g, strat.A, strat.B))
    assert iv.lo >= 0.8535
    assert iv.lo <= iv.hi


def test_value_sentence_no_win_is_zero():
    g = constant_game(0)
    iv = eval_interval(build_value_sentence(value_formula(g), g), {}, search_budget=4)
    assert iv.lo == iv.hi == 0.0


def test_sentence_tolerance():
    from fractions import Fraction

    from cstarbounds.logic import Modulus, sentence_tolerance
    phi = value_formula(chsh())
    assert sentence_tolerance(phi) == pytest.approx(1 / 40)
    steep = type(phi)(phi.node, phi.free_vars, Modulus(((0, 0), (Fraction(1, 2), 1), (1, 1))))
    assert sentence_tolerance(steep) == pytest.approx(1 / 20)
