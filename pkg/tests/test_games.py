import json
from fractions import Fraction

import numpy as np
import pytest

from cstarbounds.games import (
    Correlation, GameFormatError, chsh, classical_value, constant_game, game_from_json, game_value, load_game,
    magic_square, make_game, random_game, resolve_game, validate_game,
)


def test_chsh_classical():
    assert classical_value(chsh()) == Fraction(3, 4)


def test_magic_square_classical():
    assert classical_value(magic_square()) == Fraction(8, 9)


def test_constant_games():
    assert classical_value(constant_game(1)) == 1
    assert classical_value(constant_game(0)) == 0


def test_uniform_correlation_on_chsh():
    p = Correlation(np.full((2, 2, 2, 2), 0.25))
    assert game_value(chsh(), p) == pytest.approx(0.5)


def test_classical_value_matches_brute_force(rng):
    for _ in range(5):
        g = random_game(rng, 2, 2)
        best = max(game_value(g, Correlation.deterministic(f, h, 2, 2))
                   for f in np.ndindex(2, 2) for h in np.ndindex(2, 2))
        assert float(classical_value(g)) == pytest.approx(best, abs=1e-12)


def test_json_roundtrip(tmp_path):
    g = magic_square()
    path = tmp_path / "ms.json"
    path.write_text(json.dumps(g.to_json()))
    h = load_game(path)
    assert h.pi == g.pi and np.array_equal(h.D, g.D)


def test_diagnostics_name_field(tmp_path):
    with pytest.raises(GameFormatError, match="pi"):
        game_from_json({"k": 2, "n": 2, "pi": [[1, 0]]})
    path = tmp_path / "bad.json"
    path.write_text('{"k": 2,\n "n": }')
    with pytest.raises(GameFormatError, match="line 2"):
        load_game(path)


def test_validate_reports_defects():
    g = make_game(2, 2, [[Fraction(1, 2), 0], [0, 0]], np.zeros((2, 2, 2, 2)), strict=False)
    assert validate_game(g)


def test_fixture_lookup():
    assert resolve_game("chsh").k == 2
    assert classical_value(resolve_game("all-win")) == 1
