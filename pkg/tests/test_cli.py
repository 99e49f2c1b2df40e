import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from cstarbounds.cli import run
from cstarbounds.report import Record, emit, parse


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    return code, parse(out.getvalue(), "structured" if "structured" in argv else "text")


def find(records, kind):
    return [r for r in records if r.kind == kind]


field = st.text(alphabet=st.characters(blacklist_categories=("Z", "C")), min_size=1, max_size=12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.builds(Record, field, field, field, field, field), max_size=5))
def test_report_roundtrip(records):
    for style in ("text", "structured"):
        assert parse(emit(records, style), style) == records


def test_record_formatting():
    r = Record.of("upper", "level=1", 0.1 + 0.2, None, "abc")
    assert r.text() == "upper level=1 0.30000000000000004 - abc"
    assert float(r.value) == 0.1 + 0.2


def test_parse_rejects_short_lines():
    with pytest.raises(ValueError, match="line 1"):
        parse("upper 1 0.5\n")


def test_game_bounds_chsh(tmp_path):
    code, recs = call("game-bounds", "--game", "chsh", "--level", "1", "--dim-ladder", "1,2",
                      "--cache-dir", str(tmp_path / "c"), "--figure-dir", str(tmp_path / "f"))
    assert code == 0
    assert find(recs, "classical")[0].value == "3/4"
    assert float(find(recs, "lower")[-1].value) >= 0.8535
    assert float(find(recs, "upper")[-1].value) <= 0.8536
    assert all(r.cert != "-" for r in recs)
    assert list((tmp_path / "f").glob("*.png"))
    code, ver = call("--cache-dir", str(tmp_path / "c"), "--verify")
    assert code == 0 and ver and all(r.value == "pass" for r in ver)


def test_group_norm():
    code, recs = call("group-norm", "--relations", "free(2)", "--poly", "u1-u2", "--precision", "8")
    assert code == 0
    assert find(recs, "answer")[0].value == "2"


def test_norm_alias_structured():
    code, recs = call("norm", "--relations", "free(2)", "--poly", "u1+u1'+u2+u2'", "--precision", "10",
                      "--format", "structured")
    assert code == 0 and find(recs, "answer")[0].value == "4"


def test_bracket_only_exits_3():
    code, recs = call("group-norm", "--relations", "product(1)", "--poly", "u1+v1", "--stages", "1",
                      "--trials", "2")
    assert code == 3 and find(recs, "bracket")


def test_povm_repair_fixture(tmp_path):
    out = tmp_path / "fixed.json"
    code, recs = call("povm-repair", "--out", str(out))
    assert code == 0
    dist = float(find(recs, "distance")[0].value)
    assert dist == pytest.approx(0.1, abs=1e-12)
    assert json.loads(out.read_text())["signature"] == [2]


def test_decide_transcript(tmp_path):
    t = tmp_path / "t.jsonl"
    code, recs = call("decide", "--game", "no-win", "--target", "co", "--deterministic", "--transcript", str(t))
    assert code == 0 and find(recs, "verdict")[0].value == "LowCase"
    assert t.read_text().strip()


def test_tensor_norm_file(tmp_path):
    el = {"signature": [1], "blocks": [[[[0.5, 0.0]]]]}
    f = tmp_path / "in.json"
    f.write_text(json.dumps({"a": [el, el], "b": [el, el]}))
    code, recs = call("tensor-norm", "--input", str(f))
    assert code == 0 and float(find(recs, "pmin")[0].value) == pytest.approx(0.5)


def test_soft_norm_and_codes_and_formula():
    code, recs = call("soft-norm", "--n", "1", "--poly", "[u1,v1]", "--m-max", "2")
    assert code == 0 and len(find(recs, "soft")) == 2
    code, recs = call("codes", "--relations", "free(2)", "--range", "200")
    assert code == 0 and find(recs, "roundtrip")[0].gap == "0"
    code, recs = call("formula-eval", "--formula", "sup x . norm(x)", "--signature", "2")
    assert code == 0 and float(find(recs, "lower")[0].value) == pytest.approx(1.0)


@pytest.mark.parametrize("argv", [
    ["game-bounds", "--game", "missing.json"],
    ["game-bounds", "--game", "chsh", "--dim-ladder", "1,x"],
    ["group-norm", "--relations", "free(2)", "--poly", "u9"],
    ["decide", "--game", "chsh", "--target", "qa"],
    ["decide", "--game", "chsh", "--tau", "1/2"],
    ["codes", "--relations", "free(2)"],
    ["no-such-command"],
    [],
])
def test_validation_errors_exit_2(argv):
    assert run(argv, stdout=io.StringIO()) == 2


def test_malformed_game_file_diagnostics(tmp_path, capsys):
    f = tmp_path / "g.json"
    f.write_text('{"k": 2, "n": 2,\n "pi": [[1, 0], [0]]}')
    assert run(["game-bounds", "--game", str(f)], stdout=io.StringIO()) == 2
    assert "pi" in capsys.readouterr().err
