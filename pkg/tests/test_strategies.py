import numpy as np
import pytest

from cstarbounds.games import chsh, constant_game, magic_square
from cstarbounds.strategies import (
    QuantumStrategy, StrategyError, chsh_strategy, correlation_of, lower_bound_stream, magic_square_strategy,
    povm_defect, random_povm, seesaw_lower_bound, strategy_value,
)

TSIRELSON = (2 + np.sqrt(2)) / 4


def test_chsh_explicit_strategy():
    assert strategy_value(chsh(), chsh_strategy()) == pytest.approx(TSIRELSON, abs=1e-12)


def test_magic_square_explicit_strategy():
    s = magic_square_strategy()
    assert s.d == 4
    assert strategy_value(magic_square(), s) == pytest.approx(1.0, abs=1e-12)


def test_seesaw_chsh():
    val, s = seesaw_lower_bound(chsh(), 2, restarts=8, iters=100, seed=0)
    assert val >= 0.8534
    assert strategy_value(chsh(), s) == pytest.approx(val, abs=1e-10)


def test_seesaw_d1_is_classical():
    val, _ = seesaw_lower_bound(chsh(), 1)
    assert val == pytest.approx(0.75, abs=1e-12)


def test_constant_games():
    assert seesaw_lower_bound(constant_game(1), 2)[0] == pytest.approx(1.0)
    assert seesaw_lower_bound(constant_game(0), 2)[0] == pytest.approx(0.0)


def test_random_povm_is_exact(rng):
    M = random_povm(rng, 3, 4)
    assert povm_defect(M[None]) < 1e-12


def test_text_roundtrip():
    s = chsh_strategy()
    t = QuantumStrategy.from_text(s.to_text())
    assert np.array_equal(t.A, s.A) and np.array_equal(t.B, s.B) and np.array_equal(t.xi, s.xi)


def test_invalid_strategy_rejected():
    s = chsh_strategy()
    with pytest.raises(StrategyError):
        QuantumStrategy(s.d, s.A * 1.1, s.B, s.xi)


def test_correlation_is_normalised():
    p = correlation_of(magic_square_strategy()).p
    assert np.allclose(p.sum(axis=(2, 3)), 1.0)


def test_lower_stream_nondecreasing():
    st = lower_bound_stream(chsh(), schedule=(1, 2), restarts=4, iters=50)
    assert st.is_monotone()
    assert st.value >= 0.8534
