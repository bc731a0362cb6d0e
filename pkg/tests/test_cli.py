import json
from pathlib import Path

import pytest

from edgelab.cli import HARNESSES, build_parser, dispatch, emit

SNAPSHOTS = Path(__file__).parent / "snapshots"
SUBCOMMANDS = ["exact-law", "edgeworth", "error", "resonance", "tilde-delta", "fourier-oracle",
               "lattice", "limit-sample", "harness"]


def run(capsys, argv):
    code = dispatch(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_exact_law_csv(capsys, tmp_path):
    csv = tmp_path / "law.csv"
    code, out, _ = run(capsys, ["exact-law", "--atoms", "-1,0,1", "--probs", "0.25,0.5,0.25",
                                "--n", "2", "--csv", str(csv)])
    assert code == 0
    rows = csv.read_text().splitlines()
    assert len(rows) == 6  # header plus five support points
    assert sum(float(r.split(",")[1]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-15)
    env = json.loads(out)
    assert env["schema_version"] == "1"
    assert env["config_echo"]["n"] == 2 and env["config_echo"]["seed"] == 0
    assert env["results"]["support_size"] == 5


def test_edgeworth_dsym(capsys):
    code, out, _ = run(capsys, ["edgeworth", "--r", "2", "--z", "0", "--n", "100"])
    assert code == 0 and json.loads(out)["results"]["value"] == 0.5


def test_error_codes(capsys):
    code, _, err = run(capsys, ["edgeworth", "--bogus", "1"])
    assert code == 1 and err.startswith("E:1:")
    code, _, err = run(capsys, ["edgeworth", "--atoms", "0,1,2"])
    assert code == 1 and err.startswith("E:1:MeanNotZero")
    assert err.count("\n") == 1
    code, _, err = run(capsys, ["fourier-oracle", "--n", "300", "--tol", "1e-40"])
    assert code == 2 and err.startswith("E:2:QuadratureFail")
    code, _, err = run(capsys, ["lattice", "--out", "/nonexistent/dir/x.json"])
    assert code == 1 and err.startswith("E:1:IoError")


@pytest.mark.parametrize("argv", [
    ["error", "--n", "50"],
    ["resonance", "--atoms", "-1,0.1,0.5", "--probs", "0.2,0.5,0.3", "--k", "3"],
    ["tilde-delta", "--atoms", "-1,0.1,0.5", "--probs", "0.2,0.5,0.3", "--n", "500"],
    ["lattice", "--haar", "2", "--seed", "4"],
    ["limit-sample", "--N", "5", "--which", "Y"],
])
def test_subcommands_deterministic(capsys, argv, tmp_path):
    # same path both times: the output path is part of the config echo
    a = tmp_path / "a.json"
    assert dispatch(argv + ["--out", str(a)]) == 0
    first = a.read_bytes()
    assert dispatch(argv + ["--out", str(a)]) == 0
    assert a.read_bytes() == first
    env = json.loads(a.read_text())
    assert set(env) == {"schema_version", "config_echo", "results"}


def test_harness_exit_code(capsys):
    code, out, _ = run(capsys, ["harness", "diophantine", "--n-list", "100,200"])
    env = json.loads(out)
    assert code == (0 if env["results"]["pass"] else 3)


def test_emit(tmp_path):
    p = tmp_path / "e.csv"
    n = emit((["a", "b"], []), "csv", p)
    assert p.read_bytes() == b"a,b\n" and n == 4
    n = emit((["a", "b"], [[0.1, 2], [1 / 3, 5]]), "csv", p)
    assert p.read_text() == "a,b\n0.10000000000000001,2\n0.33333333333333331,5\n"
    assert n == len(p.read_bytes())
    res = {"z": [0.1, 1 / 3, 1e-300], "a": {"y": 2, "x": -0.0}}
    q = tmp_path / "e.json"
    emit(res, "json", q)
    text = q.read_text()
    assert json.loads(text) == res
    assert text.index('"a"') < text.index('"z"')
    with pytest.raises(OSError):
        emit(res, "json", tmp_path / "missing" / "x.json")


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 7\nz = 0.5\n")
    code, out, _ = run(capsys, ["edgeworth", "--config", str(cfg), "--n", "9"])
    echo = json.loads(out)["config_echo"]
    assert code == 0 and echo["n"] == 9 and echo["z"] == 0.5
    cfg.write_text("wrong = 1\n")
    code, _, err = run(capsys, ["edgeworth", "--config", str(cfg)])
    assert code == 1 and "unknown config key" in err


def _help_text(argv, capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    with pytest.raises(SystemExit):
        build_parser().parse_args(argv + ["--help"])
    return capsys.readouterr().out


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_snapshot(cmd, capsys, monkeypatch):
    text = _help_text([cmd] + (["limit"] if cmd == "harness" else []), capsys, monkeypatch)
    snap = SNAPSHOTS / f"help_{cmd}.txt"
    assert text == snap.read_text()
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[cmd]
    for act in sub._actions:
        if act.option_strings and act.dest != "help":
            assert act.option_strings[-1] in text
    assert text.count("(default:") >= len([a for a in sub._actions if a.option_strings]) - 1


def test_harness_names():
    assert HARNESSES == ("limit", "diophantine", "llt", "joint", "mixscale")
