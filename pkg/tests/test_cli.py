import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from switchstab.cli import main
from switchstab.fileio import (ProblemError, dumps, encode, parse_problem, problem_from_obj,
                               problem_to_obj)
from switchstab.fixtures import example_41, example_42, example_43
from switchstab.fileio import Problem


def write_problem(path, system, gains=None, params=None):
    path.write_text(dumps(problem_to_obj(Problem(system, gains, params or {}))))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# -- parsing ---------------------------------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False)
entry = st.one_of(finite, st.tuples(finite, finite).map(list))


@st.composite
def problems(draw):
    n = draw(st.integers(1, 3))
    N = draw(st.integers(1, 3))
    systems = [{"A": draw(st.lists(st.lists(entry, min_size=n, max_size=n), min_size=n, max_size=n)),
                "B": draw(st.lists(entry, min_size=n, max_size=n))} for _ in range(N)]
    obj = {"systems": systems}
    if draw(st.booleans()):
        obj["gains"] = draw(st.lists(st.lists(entry, min_size=n, max_size=n), min_size=N, max_size=N))
    if draw(st.booleans()):
        obj["params"] = {"eps_c": draw(st.floats(1e-6, 0.5)), "seed": draw(st.integers(0, 99))}
    return obj


@settings(max_examples=80, deadline=None)
@given(problems())
def test_round_trip(obj):
    p = parse_problem(json.dumps(obj))
    q = parse_problem(dumps(problem_to_obj(p)))
    assert np.array_equal(p.system.As, q.system.As)
    assert np.array_equal(p.system.Bs, q.system.Bs)
    assert (p.gains is None) == (q.gains is None)
    if p.gains is not None:
        assert np.array_equal(p.gains, q.gains)
    assert p.params == q.params


def test_complex_entries_and_column_forms():
    p = parse_problem('{"systems": [{"A": [[[0, 1], 0.5], [0, 0.2]], "B": [[1], [2]]}]}')
    assert p.system.As[0][0, 0] == 1j
    assert np.allclose(p.system.Bs[0], [1, 2])
    assert encode(np.array([1 + 2j, 3 + 0j])) == [[1.0, 2.0], 3.0]
    assert encode(np.array([3 + 0j])) == [3.0]
    assert encode([np.inf, -np.inf, np.nan]) == ["inf", "-inf", "nan"]


@pytest.mark.parametrize("text, match", [
    ("{", "line 1 column 2"),
    ("[]", "top level"),
    ('{"systems": []}', "systems"),
    ('{"systems": [{"A": [[1]]}]}', "keys A and B"),
    ('{"systems": [{"A": [[1, 2]], "B": [1]}]}', "systems"),
    ('{"systems": [{"A": [["x"]], "B": [1]}]}', r"systems\[0\]\.A"),
    ('{"systems": [{"A": [[1]], "B": [1]}], "gains": [[1, 2]]}', "gains"),
    ('{"systems": [{"A": [[1]], "B": [1]}], "extra": 1}', "unknown keys"),
    ('{"systems": [{"A": [[1]], "B": [1]}], "params": {"eps": 1}}', "params"),
    ('{"systems": [{"A": [[1]], "B": [1]}], "params": {"seed": 1.5}}', "seed"),
    ('{"systems": [{"A": [[1, 0], [0, 1]], "B": [1, 0]}, {"A": [[1]], "B": [1]}]}', "dimension"),
])
def test_malformed_problems(text, match):
    with pytest.raises(ProblemError, match=match):
        parse_problem(text)


@settings(max_examples=60, deadline=None,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.text(max_size=60))
def test_fuzzed_input_exits_1(tmp_path, capsys, text):
    try:
        parse_problem(text)
        return
    except ProblemError:
        pass
    f = tmp_path / "bad.json"
    f.write_text(text, encoding="utf-8")
    code, out, err = run(["check", str(f)], capsys)
    assert code == 1 and out == ""
    assert "input_error" in err


def test_missing_file_exits_1(tmp_path, capsys):
    code, _, err = run(["design", str(tmp_path / "nope.json")], capsys)
    assert code == 1 and "exit=1" in err


def test_invalid_system_exits_1(tmp_path, capsys):
    p = tmp_path / "p.json"
    p.write_text('{"systems": [{"A": [[1, 0], [0, 1]], "B": [1, 0]}]}')
    code, _, _ = run(["design", str(p)], capsys)
    assert code == 1


# -- pipelines ---------------------------------------------------------------------

def test_design_exit_codes(tmp_path, capsys):
    for name, system, want in (("41", example_41(), 0), ("42", example_42(1.5), 2),
                               ("43", example_43(), 3)):
        f = write_problem(tmp_path / f"{name}.json", system)
        code, out, err = run(["design", f], capsys)
        assert code == want, name
        report = json.loads(out)
        assert report["status"]["exit_code"] == want
        assert f"exit={want}" in err


def test_design_report_contents(tmp_path, capsys):
    f = write_problem(tmp_path / "p.json", example_41())
    code, out, _ = run(["design", f], capsys)
    r = json.loads(out)
    assert code == 0
    assert r["tool"] == "switchstab" and r["command"] == "design"
    assert r["settings"]["eps_c"] == 1e-4 and r["seed"] == 0
    assert r["inputs"]["systems"][0]["A"] == example_41().As[0].real.tolist()


def test_check_and_simulate(tmp_path, capsys):
    s = example_41()
    from switchstab import realize_real_gains, run_algorithm1
    K = realize_real_gains(run_algorithm1(s), s).gains
    f = write_problem(tmp_path / "p.json", s, K)
    code, out, _ = run(["check", f], capsys)
    assert code == 0
    trace = tmp_path / "trace.json"
    code, out, _ = run(["simulate", f, "--horizon", "50", "--trace", str(trace)], capsys)
    assert code == 0
    assert trace.exists()
    json.loads(trace.read_text())


def test_check_needs_gains(tmp_path, capsys):
    f = write_problem(tmp_path / "p.json", example_41())
    code, _, _ = run(["check", f], capsys)
    assert code == 1


def test_synthesize_exit_codes(tmp_path, capsys):
    f = write_problem(tmp_path / "a.json", example_41())
    assert run(["synthesize", f], capsys)[0] == 0
    f = write_problem(tmp_path / "b.json", example_42(1.5))
    assert run(["synthesize", f], capsys)[0] == 3


@pytest.mark.parametrize("which", ["4.1", "4.3"])
def test_examples_reproduce(which, capsys):
    code, _, err = run(["examples", which], capsys)
    assert code == 0
    assert "PASS" in err and "FAIL" not in err


def test_reproducible_reports(tmp_path, capsys):
    f = write_problem(tmp_path / "p.json", example_43())
    a = run(["design", f, "--horizon", "100"], capsys)
    b = run(["design", f, "--horizon", "100"], capsys)
    assert a == b


def test_seed_precedence(tmp_path, capsys, monkeypatch):
    f = write_problem(tmp_path / "p.json", example_41(), params={"seed": 5})
    monkeypatch.setenv("SWITCHSTAB_SEED", "9")
    assert json.loads(run(["synthesize", f], capsys)[1])["seed"] == 5
    assert json.loads(run(["synthesize", f, "--seed", "3"], capsys)[1])["seed"] == 3
    g = write_problem(tmp_path / "q.json", example_41())
    assert json.loads(run(["synthesize", g], capsys)[1])["seed"] == 9
    monkeypatch.setenv("SWITCHSTAB_SEED", "x")
    assert run(["synthesize", g], capsys)[0] == 1


def test_bad_eps_is_input_error(tmp_path, capsys):
    f = write_problem(tmp_path / "p.json", example_41())
    assert run(["design", f, "--eps-c", "1.5"], capsys)[0] == 1


def test_output_file(tmp_path, capsys):
    f = write_problem(tmp_path / "p.json", example_41())
    out = tmp_path / "r.json"
    code, stdout, _ = run(["synthesize", f, "-o", str(out)], capsys)
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["status"]["exit_code"] == 0
