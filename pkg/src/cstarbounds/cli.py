"""Command-line entry point.

Every subcommand writes line-delimited records ``kind stage value gap cert-hash``
(or the same records as JSON lines with ``--format structured``).  Exit status:
0 on success, 2 on invalid input, 3 when the budget ran out and only a bracket
is available, 1 when ``--verify`` finds a bad cached certificate.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .algebra import AlgebraElement, PovmCandidate, p_min, povm_repair, povm_residual
from .decider import PromiseInstance, decide, transcript_text
from .games import EnumerationCapError, FIXTURES, classical_value, resolve_game
from .logic import eval_interval, parse_formula
from .npa import (
    DEFAULT_TOL, MOMENT_CAP, CapExceeded, RelationSet, max_tensor_norm_bounds, npa_upper_bound,
    parse_relations,
)
from .polynomial import parse_poly
from .presentations import (
    Bracket, CertificateCache, NormAnswer, Presentation, cached_norm_upper, norm_query, softening_sequence,
)
from .report import Record, emit, plot_streams
from .strategies import QuantumStrategy, lower_bound_emissions, strategy_hash
from .streams import BoundStream

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3


class CliError(ValueError):
    pass


def _digest(*parts) -> str:
    h = hashlib.sha256(json.dumps([__version__] + [str(p) for p in parts]).encode())
    return h.hexdigest()[:16]


def _ints(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise CliError(f"expected a comma separated list of integers, got {text!r}") from exc
    if not vals or any(v < 1 for v in vals):
        raise CliError(f"expected positive integers, got {text!r}")
    return vals


def _positive(name: str, v, strict: bool = True):
    if v is None:
        return
    if (strict and not v > 0) or (not strict and v < 0):
        raise CliError(f"--{name} must be {'positive' if strict else 'nonnegative'}, got {v}")


def _read_json(path: str):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc


def _element(data, where: str) -> AlgebraElement:
    try:
        return AlgebraElement.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{where}: malformed algebra element ({exc})") from exc


class Run:
    """Collects records and figures for one invocation."""

    def __init__(self, args):
        self.args = args
        self.records: list[Record] = []
        self.figures: list[Path] = []
        self.cache = CertificateCache(args.cache_dir) if args.cache_dir else None

    def add(self, kind, stage, value, gap=None, cert=None):
        self.records.append(Record.of(kind, stage, value, gap, cert))

    def stream(self, s: BoundStream, kind: str | None = None, stage_label: str = ""):
        for e in s.emissions:
            stage = f"{stage_label}{e.stage}" if stage_label else e.stage
            self.add(kind or s.direction, stage, e.bound, e.gap, e.certificate)

    def figure(self, name: str, title: str, series, hlines=()):
        if not self.args.figure_dir:
            return
        self.figures.append(plot_streams(Path(self.args.figure_dir) / f"{name}.png", title, series, hlines))


# ---------------------------------------------------------------- subcommands

def _npa_cached(run: Run, g, level: int, tol: float, cap: int):
    cache = run.cache
    key = CertificateCache.key("npa", __version__, json.dumps(g.to_json(), sort_keys=True), level, tol)
    if cache is not None:
        rec = cache.get(key)
        if rec is not None and "gap" in rec.get("meta", {}):
            return rec["bound"], rec["meta"]["gap"], rec["cert_hash"], True
    res = npa_upper_bound(g, level, cap, tol)
    if cache is not None and res.published:
        cache.store_relaxation(key, res, {"gap": res.gap, "game": g.name, "level": level})
    return res.bound, res.gap, res.cert_hash, res.published


def cmd_game_bounds(run: Run) -> int:
    a = run.args
    g = resolve_game(a.game)
    ladder = _ints(a.dim_ladder)
    gid = _digest(json.dumps(g.to_json(), sort_keys=True))
    try:
        cv = classical_value(g)
        run.add("classical", "exact", cv, 0, f"enum:{gid}")
    except EnumerationCapError as exc:
        print(f"note: classical value skipped ({exc})", file=sys.stderr)
    lower, upper = BoundStream("lower", "see-saw"), BoundStream("upper", "npa")
    best = None
    for d, val, strat in lower_bound_emissions(g, ladder, a.seed, a.restarts, a.iters):
        e = lower.offer(d, val, strategy_hash(strat), witness=strat)
        run.add("lower", f"d={d}", e.bound, None, e.certificate)
        best = e.witness
    for level in range(1, a.level + 1):
        try:
            bound, gap, cert, ok = _npa_cached(run, g, level, a.tol, a.cap)
        except CapExceeded as exc:
            print(f"note: stopping at level {level} ({exc})", file=sys.stderr)
            break
        if not ok:
            print(f"note: level {level} certificate failed, bound withheld", file=sys.stderr)
            continue
        e = upper.offer(level, bound, cert, gap)
        run.add("upper", f"level={level}", e.bound, e.gap, e.certificate)
    if lower.emissions and upper.emissions:
        lo, hi = lower.value, upper.value
        run.add("bracket", "final", f"{lo!r},{hi!r}", hi - lo, f"{lower.best.certificate}+{upper.best.certificate}")
    if a.strategy_out and best is not None:
        best.save(a.strategy_out)
    run.figure(f"game-bounds-{g.name or 'game'}", f"{g.name}: value bounds",
               [("lower (see-saw)", lower.values()), ("upper (NPA)", upper.values())])
    return EXIT_OK


def cmd_decide(run: Run) -> int:
    a = run.args
    g = resolve_game(a.game)
    inst = PromiseInstance(g, a.target, Fraction(a.low), Fraction(a.high), Fraction(a.tau))
    v = decide(inst, budget_secs=a.budget_secs, seed=a.seed, deterministic=a.deterministic,
               restarts=a.restarts, iters=a.iters)
    for e in v.transcript:
        if e.stream in ("lower", "upper"):
            run.add(e.stream, f"{'d' if e.stream == 'lower' else 'level'}={e.stage}", e.bound, None, e.cert)
    if isinstance(v.witness, QuantumStrategy):
        wit = strategy_hash(v.witness)
    else:
        wit = getattr(v.witness, "cert_hash", None)
    width = v.upper - v.lower if math.isfinite(v.upper - v.lower) else None
    run.add("verdict", f"turns={len(v.transcript)}", v.outcome, width, wit)
    if a.transcript:
        Path(a.transcript).write_text(transcript_text(v.transcript), encoding="utf-8")
    lows = [e.bound for e in v.transcript if e.stream == "lower"]
    ups = [e.bound for e in v.transcript if e.stream == "upper"]
    run.figure(f"decide-{g.name or 'game'}", f"{g.name}: {v.outcome}",
               [("lower", lows), ("upper", ups)],
               [("high - tau", inst.high_threshold), ("low + tau", inst.low_threshold)])
    return EXIT_BUDGET if v.outcome == "BudgetExhausted" else EXIT_OK


def _tensor_input(a) -> tuple[list[AlgebraElement], list[AlgebraElement]]:
    if a.fixture:
        if a.fixture != "swap":
            raise CliError(f"unknown tensor-norm fixture {a.fixture!r} (known: swap)")
        # sum of Pauli products, which is twice the swap operator minus the identity
        pauli = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]
        els = [AlgebraElement.of(m) for m in pauli]
        return els, els
    data = _read_json(a.input)
    if not isinstance(data, dict) or "a" not in data or "b" not in data:
        raise CliError(f"{a.input}: expected an object with fields 'a' and 'b'")
    A = [_element(x, f"{a.input}: a[{i}]") for i, x in enumerate(data["a"])]
    B = [_element(x, f"{a.input}: b[{i}]") for i, x in enumerate(data["b"])]
    if len(A) != len(B) or not A:
        raise CliError(f"{a.input}: 'a' and 'b' must be nonempty and of equal length")
    return A, B


def cmd_tensor_norm(run: Run) -> int:
    a = run.args
    if a.poly is not None:
        if a.n is None:
            raise CliError("--poly needs --n, the number of generators per tensor factor")
        p = parse_poly(a.poly, RelationSet("product", a.n).generators)
        lower, upper = max_tensor_norm_bounds(p, a.n, stages=a.stages, seed=a.seed, cap=a.cap)
        run.stream(lower, stage_label="d=")
        run.stream(upper, stage_label="degree=")
        run.figure("tensor-norm", f"max tensor norm of {a.poly}",
                   [("lower", lower.values()), ("upper", upper.values())])
        return EXIT_OK
    if not (a.input or a.fixture):
        raise CliError("give --input FILE, --fixture NAME or --poly TEXT")
    A, B = _tensor_input(a)
    val = p_min(A, B)
    cert = _digest(*(json.dumps(x.to_json()) for x in A + B))
    run.add("pmin", "exact", val, 0, f"eig:{cert}")
    return EXIT_OK


def _add_norm_streams(run: Run, lower: BoundStream | None, upper: BoundStream | None):
    if lower is not None:
        for e in lower.emissions:
            run.add("lower", f"d={e.stage[1]}", e.bound, None, e.certificate)
    if upper is not None:
        for e in upper.emissions:
            run.add("upper", f"degree={e.stage[1]}", e.bound, e.gap, e.certificate)


def cmd_group_norm(run: Run) -> int:
    a = run.args
    rel = parse_relations(a.relations)
    pres = Presentation(rel)
    point = pres.point(a.poly)
    if a.degree is not None:
        nb = cached_norm_upper(point.polynomial, rel, a.degree, run.cache, a.cap)
        if not nb.published:
            raise CliError(f"degree {a.degree} relaxation failed certification")
        run.add("upper", f"degree={nb.stage}", nb.bound, nb.gap, nb.cert_hash)
        return EXIT_OK
    ans = norm_query(pres, point, a.precision, budget_secs=a.budget_secs, max_stages=a.stages,
                     trials=a.trials, seed=a.seed, cache=run.cache, cap=a.cap)
    br = ans.bracket if isinstance(ans, NormAnswer) else ans
    lo_s = ans.lower_stream
    up_s = ans.upper_stream
    _add_norm_streams(run, lo_s, up_s)
    certs = f"{lo_s.best.certificate if lo_s.best else '-'}+{up_s.best.certificate if up_s.best else '-'}"
    run.add("bracket", f"stages={br.stages}", f"{br.lo!r},{br.hi!r}", br.width, certs)
    run.figure("group-norm", f"norm of {a.poly} in {rel}",
               [("lower", lo_s.values()), ("upper", up_s.values())])
    if isinstance(ans, NormAnswer):
        run.add("answer", f"precision={a.precision}", ans.value, br.width, certs)
        return EXIT_OK
    return EXIT_BUDGET


def cmd_soft_norm(run: Run) -> int:
    a = run.args
    p = parse_poly(a.poly, RelationSet("product", a.n).generators)
    if a.eps is not None:
        rel = RelationSet("soft", a.n, Fraction(a.eps))
        nb = cached_norm_upper(p, rel, a.degree, run.cache, a.cap)
        if not nb.published:
            raise CliError("softened relaxation failed certification")
        run.add("soft", f"eps={rel.eps}", nb.bound, nb.gap, nb.cert_hash)
        return EXIT_OK
    entries, exact = softening_sequence(p, a.n, a.m_max, a.degree, a.cap)
    for e in entries:
        run.add("soft", f"m={e.m}", e.bound, None, e.cert_hash)
    run.add("exact", "product", exact, None, _digest("exact", a.poly, a.n, a.degree))
    run.figure("soft-norm", f"softenings of {a.poly}", [("upper, eps = 1/m", [e.bound for e in entries])],
               [("exact commutation", exact)])
    return EXIT_OK


def _povm_fixture(name: str) -> PovmCandidate:
    if name != "diag":
        raise CliError(f"unknown povm fixture {name!r} (known: diag)")
    return PovmCandidate([AlgebraElement.of(np.diag([1.1, 0.0])), AlgebraElement.of(np.diag([0.0, 0.9]))])


def cmd_povm_repair(run: Run) -> int:
    a = run.args
    if a.input:
        data = _read_json(a.input)
        try:
            cand = PovmCandidate.from_json(data)
        except (KeyError, TypeError) as exc:
            raise CliError(f"{a.input}: malformed POVM candidate ({exc})") from exc
    else:
        cand = _povm_fixture(a.fixture or "diag")
    cert = _digest(json.dumps(cand.to_json()))
    res = povm_residual(cand)
    fixed = povm_repair(cand)
    dist = cand.distance(fixed)
    run.add("residual", "input", res, None, f"povm:{cert}")
    run.add("residual", "repaired", povm_residual(fixed), None, f"povm:{cert}")
    run.add("distance", "repaired", dist, None, f"povm:{cert}")
    for i, e in enumerate(fixed):
        blocks = json.dumps(e.to_json()["blocks"], separators=(",", ":"))
        run.add("element", i + 1, blocks, None, f"povm:{cert}")
    if a.out:
        Path(a.out).write_text(json.dumps(fixed.to_json()), encoding="utf-8")
    return EXIT_OK


def cmd_formula_eval(run: Run) -> int:
    a = run.args
    text = Path(a.formula_file).read_text(encoding="utf-8") if a.formula_file else a.formula
    if text is None:
        raise CliError("give --formula TEXT or --formula-file FILE")
    free = [v for v in (a.free or "").split(",") if v]
    f = parse_formula(text, free or None)
    assignment = {}
    if a.assign:
        data = _read_json(a.assign)
        if not isinstance(data, dict):
            raise CliError(f"{a.assign}: expected an object mapping names to elements")
        assignment = {k: _element(v, f"{a.assign}: {k}") for k, v in data.items()}
    sig = _ints(a.signature) if a.signature else None
    iv = eval_interval(f, assignment, a.search_budget, a.seed, sig)
    cert = f"formula:{_digest(text, json.dumps({k: v.to_json() for k, v in assignment.items()}))}"
    run.add("restricted", "-", f.is_restricted(), None, cert)
    run.add("universal", "-", f.is_universal(), None, cert)
    run.add("lower", f"budget={a.search_budget}", iv.lo, None, cert)
    run.add("upper", f"budget={a.search_budget}", iv.hi, iv.width, cert)
    return EXIT_OK


def cmd_codes(run: Run) -> int:
    a = run.args
    pres = Presentation(parse_relations(a.relations))
    cert = f"codes:{_digest(pres.relations)}"
    if a.encode is not None:
        pt = pres.point(a.encode)
        run.add("code", str(pt.polynomial) or "0", pt.code, None, cert)
    if a.decode is not None:
        if a.decode < 0:
            raise CliError("codes are nonnegative integers")
        run.add("point", a.decode, str(pres.decode(a.decode)) or "0", None, cert)
    if a.range is not None:
        bad = 0
        for c in range(a.range):
            q = pres.decode(c)
            if pres.encode(q) != c:
                bad += 1
        run.add("roundtrip", f"codes<{a.range}", a.range - bad, bad, cert)
        if bad:
            return EXIT_FAIL
    if a.encode is None and a.decode is None and a.range is None:
        raise CliError("give --encode POLY, --decode CODE or --range N")
    return EXIT_OK


def cmd_verify(run: Run) -> int:
    if run.cache is None:
        raise CliError("--verify needs --cache-dir")
    ok = True
    for key, passed, violations in run.cache.verify():
        run.add("verify", key[:16], "pass" if passed else "fail", None, key[:16])
        for v in violations:
            print(f"{key[:16]}: {v}", file=sys.stderr)
        ok &= passed
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "game-bounds": cmd_game_bounds,
    "decide": cmd_decide,
    "tensor-norm": cmd_tensor_norm,
    "group-norm": cmd_group_norm,
    "norm": cmd_group_norm,
    "soft-norm": cmd_soft_norm,
    "povm-repair": cmd_povm_repair,
    "formula-eval": cmd_formula_eval,
    "codes": cmd_codes,
}


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    sup = argparse.SUPPRESS
    common.add_argument("--format", choices=("text", "structured"), default=sup, help="report style")
    common.add_argument("--output", default=sup, help="write the report here instead of stdout")
    common.add_argument("--cache-dir", default=sup, help="certificate cache directory")
    common.add_argument("--figure-dir", default=sup, help="render bound-stream plots (PNG) here")
    common.add_argument("--seed", type=int, default=sup)

    ap = argparse.ArgumentParser(prog="cstarbounds", parents=[common],
                                 description="Certified bounds for nonlocal games and C*-algebra norms.")
    ap.set_defaults(format="text", output=None, cache_dir=None, figure_dir=None, seed=0)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--verify", action="store_true", help="re-certify every cached SDP certificate")
    sub = ap.add_subparsers(dest="command")
    games = ", ".join(sorted(FIXTURES))

    p = sub.add_parser("game-bounds", parents=[common], help="classical value, see-saw and NPA bounds")
    p.add_argument("--game", required=True, help=f"fixture ({games}) or game file")
    p.add_argument("--level", type=int, default=1, help="highest NPA level")
    p.add_argument("--dim-ladder", default="1,2", help="see-saw dimensions, e.g. 1,2,4,8")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--cap", type=int, default=MOMENT_CAP, help="largest moment matrix")
    p.add_argument("--strategy-out", help="save the best strategy found")

    p = sub.add_parser("decide", parents=[common], help="promise-gap decision by racing bound streams")
    p.add_argument("--game", required=True, help=f"fixture ({games}) or game file")
    p.add_argument("--target", default="co", help="co (commuting) or star (entangled)")
    p.add_argument("--budget-secs", type=float, default=120.0)
    p.add_argument("--deterministic", action="store_true", help="one emission per turn")
    p.add_argument("--low", default="1/2")
    p.add_argument("--high", default="1")
    p.add_argument("--tau", default="1/16")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--transcript", help="write the JSON-lines transcript here")

    p = sub.add_parser("tensor-norm", parents=[common], help="minimal or maximal tensor norms")
    p.add_argument("--input", help="JSON with element lists 'a' and 'b'")
    p.add_argument("--fixture", help="built-in input (swap)")
    p.add_argument("--poly", help="polynomial in u1..un, v1..vn for the max tensor norm of group algebras")
    p.add_argument("--n", type=int)
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--cap", type=int, default=MOMENT_CAP)

    for name in ("group-norm", "norm"):
        p = sub.add_parser(name, parents=[common], help="norm of a group-algebra element")
        p.add_argument("--relations", required=True, help="free(n), product(n) or soft(n, eps)")
        p.add_argument("--poly", required=True)
        p.add_argument("--precision", type=int, default=10, help="answer within 2^-precision")
        p.add_argument("--budget-secs", type=float, default=60.0)
        p.add_argument("--stages", type=int, default=4)
        p.add_argument("--trials", type=int, default=10)
        p.add_argument("--degree", type=int, help="only the SoS bound at this degree")
        p.add_argument("--cap", type=int, default=MOMENT_CAP)

    p = sub.add_parser("soft-norm", parents=[common], help="norm bounds under softened commutation")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--poly", required=True)
    p.add_argument("--m-max", type=int, default=4, help="softenings eps = 1/m for m = 1..m-max")
    p.add_argument("--eps", help="a single softening parameter instead")
    p.add_argument("--degree", type=int)
    p.add_argument("--cap", type=int, default=MOMENT_CAP)

    p = sub.add_parser("povm-repair", parents=[common], help="project a near-POVM onto the POVMs")
    p.add_argument("--input", help="JSON POVM candidate")
    p.add_argument("--fixture", help="built-in candidate (diag, the default)")
    p.add_argument("--out", help="write the repaired POVM as JSON")

    p = sub.add_parser("formula-eval", parents=[common], help="interval value of a restricted formula")
    p.add_argument("--formula")
    p.add_argument("--formula-file")
    p.add_argument("--free", help="comma separated free variables, in order")
    p.add_argument("--assign", help="JSON mapping variable names to algebra elements")
    p.add_argument("--signature", help="block sizes when nothing is assigned, e.g. 2 or 2,1")
    p.add_argument("--search-budget", type=int, default=60)

    p = sub.add_parser("codes", parents=[common], help="integer codes of generated points")
    p.add_argument("--relations", required=True)
    p.add_argument("--encode", help="polynomial to encode")
    p.add_argument("--decode", type=int, help="code to decode")
    p.add_argument("--range", type=int, help="round-trip check of codes 0..N-1")
    return ap


def _validate(a) -> None:
    for name in ("level", "restarts", "iters", "stages", "trials", "precision", "m_max", "n", "cap",
                 "search_budget", "degree"):
        v = getattr(a, name, None)
        if v is not None:
            _positive(name.replace("_", "-"), v)
    for name in ("budget_secs", "tol"):
        v = getattr(a, name, None)
        if v is not None:
            _positive(name.replace("_", "-"), v)
    if getattr(a, "seed", 0) < 0:
        raise CliError(f"--seed must be nonnegative, got {a.seed}")
    if getattr(a, "range", None) is not None:
        _positive("range", a.range, strict=False)
    if getattr(a, "dim_ladder", None) is not None:
        _ints(a.dim_ladder)


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    """Parse, dispatch and write the report; returns the exit status."""
    stdout = stdout or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None and not args.verify:
        ap.print_usage(sys.stderr)
        print("error: a subcommand or --verify is required", file=sys.stderr)
        return EXIT_INVALID
    try:
        _validate(args)
        r = Run(args)
        status = cmd_verify(r) if args.command is None else COMMANDS[args.command](r)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = emit(r.records, args.format)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    for f in r.figures:
        print(f"figure: {f}", file=sys.stderr)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
