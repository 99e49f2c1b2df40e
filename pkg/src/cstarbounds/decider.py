"""Promise-gap decisions by racing a lower-bound stream against an upper-bound stream.

Lower stream: see-saw over the dimension ladder 1, 2, 4, ...  Upper stream: NPA
levels 1, 2, ... until the moment-size cap.  The upper stream bounds the
commuting-operator value, which dominates the entangled value, so for
``target="entangled"`` a LowCase verdict is still sound but the upper stream need
not converge to the right number.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterator

from .games import NonlocalGame
from .npa import MOMENT_CAP, CapExceeded, npa_upper_bound
from .strategies import QuantumStrategy, lower_bound_emissions, strategy_hash
from .streams import BoundStream

TARGETS = {"entangled": "entangled", "star": "entangled", "commuting": "commuting", "co": "commuting"}
CONSISTENCY_TOL = 1e-6
MAX_DIMENSION = 32


class PromiseError(ValueError):
    pass


class DeciderInvariantError(RuntimeError):
    """lower > upper: one of the producers is wrong."""


@dataclass(frozen=True)
class PromiseInstance:
    game: NonlocalGame
    target: str = "commuting"
    low: Fraction = Fraction(1, 2)
    high: Fraction = Fraction(1)
    tau: Fraction = Fraction(1, 16)

    def __post_init__(self):
        if self.target not in TARGETS:
            raise PromiseError(f"target must be one of {sorted(TARGETS)}, got {self.target!r}")
        object.__setattr__(self, "target", TARGETS[self.target])
        low, high, tau = Fraction(self.low), Fraction(self.high), Fraction(self.tau)
        if not 0 <= low < high <= 1:
            raise PromiseError(f"need 0 <= low < high <= 1, got low={low}, high={high}")
        if not 0 < tau < (high - low) / 4:
            raise PromiseError(f"need 0 < tau < (high - low)/4 = {(high - low) / 4}, got {tau}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "tau", tau)

    @property
    def low_threshold(self) -> float:
        """HighCase once a certified lower bound exceeds this."""
        return float(self.low + self.tau)

    @property
    def high_threshold(self) -> float:
        """LowCase once a certified upper bound drops below this."""
        return float(self.high - self.tau)


@dataclass(frozen=True)
class TranscriptEntry:
    stream: str          # lower | upper | budget | exhausted
    stage: Any
    bound: float
    cert: str
    timestamp: float = field(default=0.0, compare=False)

    def key(self) -> tuple:
        return (self.stream, self.stage, self.bound, self.cert)

    def to_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_line(cls, line: str) -> "TranscriptEntry":
        d = json.loads(line)
        return cls(d["stream"], d["stage"], d["bound"], d["cert"], d.get("timestamp", 0.0))


@dataclass
class Verdict:
    outcome: str                 # LowCase | HighCase | BudgetExhausted
    witness: Any
    transcript: list[TranscriptEntry]
    lower: float
    upper: float
    config: dict

    @property
    def bracket(self) -> tuple[float, float]:
        return (self.lower, self.upper)


def race_transcript(v: Verdict) -> list[TranscriptEntry]:
    return list(v.transcript)


def transcript_text(entries: list[TranscriptEntry]) -> str:
    return "".join(e.to_line() + "\n" for e in entries)


def parse_transcript(text: str) -> list[TranscriptEntry]:
    return [TranscriptEntry.from_line(ln) for ln in text.splitlines() if ln.strip()]


def _upper_producer(g: NonlocalGame, cap: int, max_level: int | None) -> Iterator:
    level = 1
    while max_level is None or level <= max_level:
        try:
            res = npa_upper_bound(g, level, cap)
        except CapExceeded:
            return
        yield level, res
        level += 1


def _lower_producer(g: NonlocalGame, seed: int, restarts: int, iters: int) -> Iterator:
    ladder = []
    d = 1
    while d <= MAX_DIMENSION:
        ladder.append(d)
        d *= 2
    yield from lower_bound_emissions(g, ladder, seed, restarts, iters)


def decide(inst: PromiseInstance, budget_secs: float = 120.0, seed: int = 0, deterministic: bool = True,
           slice_secs: float = 2.0, restarts: int = 8, iters: int = 50, cap: int = MOMENT_CAP,
           max_level: int | None = None, max_turns: int | None = None,
           clock: Callable[[], float] = time.monotonic) -> Verdict:
    """Round-robin race; the first stream to cross its threshold fixes the verdict.

    With ``deterministic`` each turn takes exactly one emission, so the emission
    order depends only on the inputs; otherwise a turn lasts ``slice_secs``.
    """
    config = {"target": inst.target, "low": str(inst.low), "high": str(inst.high), "tau": str(inst.tau),
              "seed": seed, "restarts": restarts, "iters": iters, "cap": cap, "max_level": max_level,
              "deterministic": deterministic}
    start = clock()
    lower, upper = BoundStream("lower", "see-saw"), BoundStream("upper", "npa")
    producers = {"lower": _lower_producer(inst.game, seed, restarts, iters),
                 "upper": _upper_producer(inst.game, cap, max_level)}
    exhausted: set[str] = set()
    transcript: list[TranscriptEntry] = []
    witnesses: dict[str, Any] = {}
    turns = 0

    def finish(outcome, witness):
        return Verdict(outcome, witness, transcript, lower.value, upper.value, config)

    def budget_left() -> bool:
        return clock() - start < budget_secs

    order = ["lower", "upper"]
    i = 0
    while True:
        if len(exhausted) == 2:
            transcript.append(TranscriptEntry("exhausted", turns, math.nan, "", clock() - start))
            return finish("BudgetExhausted", None)
        if not budget_left() or (max_turns is not None and turns >= max_turns):
            transcript.append(TranscriptEntry("budget", turns, math.nan, "", clock() - start))
            return finish("BudgetExhausted", None)
        name = order[i % 2]
        i += 1
        if name in exhausted:
            continue
        slice_end = clock() + slice_secs
        while True:
            try:
                stage, payload = _next(producers[name])
            except StopIteration:
                exhausted.add(name)
                break
            turns += 1
            if name == "lower":
                val, strat = payload
                e = lower.offer(stage, val, strategy_hash(strat), witness=strat)
                witnesses["lower"] = e.witness
            else:
                if not payload.published:
                    continue
                e = upper.offer(stage, payload.bound, payload.cert_hash, payload.gap)
                if e.raw == e.bound:
                    witnesses["upper"] = payload
            transcript.append(TranscriptEntry(name, stage, e.bound, e.certificate, clock() - start))
            if lower.value > upper.value + CONSISTENCY_TOL:
                raise DeciderInvariantError(
                    f"lower bound {lower.value} exceeds upper bound {upper.value} at turn {turns}")
            if lower.value > inst.low_threshold:
                return finish("HighCase", witnesses["lower"])
            if upper.value < inst.high_threshold:
                return finish("LowCase", witnesses.get("upper"))
            if deterministic or clock() >= slice_end or not budget_left():
                break
            if max_turns is not None and turns >= max_turns:
                break


def _next(it: Iterator) -> tuple[Any, Any]:
    item = next(it)
    if len(item) == 3:           # lower producer: (d, value, strategy)
        d, val, s = item
        return d, (val, s)
    return item


def replay(v: Verdict, game: NonlocalGame) -> Verdict:
    """Re-run with the recorded configuration for as many turns as the original took."""
    c = v.config
    inst = PromiseInstance(game, c["target"], Fraction(c["low"]), Fraction(c["high"]), Fraction(c["tau"]))
    turns = sum(1 for e in v.transcript if e.stream in ("lower", "upper"))
    return decide(inst, budget_secs=math.inf, seed=c["seed"], deterministic=True, restarts=c["restarts"],
                  iters=c["iters"], cap=c["cap"], max_level=c["max_level"],
                  max_turns=turns if v.outcome == "BudgetExhausted" else None)


def same_race(a: Verdict, b: Verdict) -> bool:
    """Identical outcome and emission sequence, ignoring timestamps and budget markers' turn counts."""
    ka = [e.key() for e in a.transcript if e.stream in ("lower", "upper")]
    kb = [e.key() for e in b.transcript if e.stream in ("lower", "upper")]
    return a.outcome == b.outcome and ka == kb
