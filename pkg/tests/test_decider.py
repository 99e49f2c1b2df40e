import itertools
from fractions import Fraction

import pytest

from cstarbounds.decider import (
    PromiseError, PromiseInstance, TranscriptEntry, decide, parse_transcript, replay, same_race, transcript_text,
)
from cstarbounds.games import chsh, constant_game, magic_square


def test_promise_validation():
    with pytest.raises(PromiseError):
        PromiseInstance(chsh(), "co", Fraction(1, 2), Fraction(1), Fraction(1, 8))
    with pytest.raises(PromiseError):
        PromiseInstance(chsh(), "qa")
    inst = PromiseInstance(chsh(), "star")
    assert inst.target == "entangled"
    assert (inst.low_threshold, inst.high_threshold) == (9 / 16, 15 / 16)


@pytest.mark.parametrize("game, want", [(constant_game(0), "LowCase"), (constant_game(1), "HighCase"),
                                        (magic_square(), "HighCase"), (chsh(), "HighCase")])
def test_verdicts(game, want):
    v = decide(PromiseInstance(game), seed=3)
    assert v.outcome == want
    assert v.lower <= v.upper + 1e-6
    assert same_race(v, replay(v, game))


def test_entangled_target_low_case():
    v = decide(PromiseInstance(constant_game(0), "star"))
    assert v.outcome == "LowCase"


def test_budget_exhausted_with_bracket():
    # one turn only: the classical 3/4 is below low + tau = 27/32, and no upper bound exists yet
    inst = PromiseInstance(chsh(), "co", Fraction(13, 16), Fraction(1), Fraction(1, 32))
    v = decide(inst, max_turns=1)
    assert v.outcome == "BudgetExhausted"
    assert v.lower <= v.upper
    assert v.transcript[-1].stream == "budget"
    assert decide(inst, budget_secs=0).outcome == "BudgetExhausted"


def test_transcript_roundtrip():
    v = decide(PromiseInstance(constant_game(0)))
    entries = parse_transcript(transcript_text(v.transcript))
    assert [e.key() for e in entries] == [e.key() for e in v.transcript]


def test_fake_clock_slices():
    ticks = itertools.count()
    v = decide(PromiseInstance(constant_game(0)), deterministic=False, slice_secs=5, clock=lambda: next(ticks) * 0.1)
    assert v.outcome == "LowCase"


def test_entry_key_ignores_timestamp():
    a = TranscriptEntry("lower", 1, 0.5, "h", 1.0)
    b = TranscriptEntry("lower", 1, 0.5, "h", 2.0)
    assert a == b and a.key() == b.key()
