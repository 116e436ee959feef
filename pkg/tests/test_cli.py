import csv
import io
import json

import numpy as np
import pytest

from impactset import write_fixtures
from impactset.cli import main


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    return write_fixtures(tmp_path_factory.mktemp("scenes"))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_resolve_wheel_to_rest(capsys, fixtures):
    code, out, _ = run(capsys, "resolve", "--scene", fixtures["wheel.json"],
                       "--strategy", "simultaneous", "--step", "1e-4")
    assert code == 0
    table = rows(out)
    assert table[0] == ["s", "v_0", "v_1", "v_2", "lambda_n_A", "lambda_n_B", "K"]
    assert all(len(r) == 1 + 3 + 2 + 1 for r in table)
    assert abs(float(table[-1][-1])) <= 1e-8
    assert "\r\n" in out


def test_resolve_json(capsys, fixtures):
    code, out, _ = run(capsys, "resolve", "--scene", fixtures["box.json"], "--format", "json",
                       "--strategy", "sequential:A,B")
    data = json.loads(out)
    assert code == 0 and data["terminated"] and data["ids"] == ["A", "B"]
    assert len(data["s"]) == len(data["v"]) == len(data["K"])


def test_resolve_writes_file(capsys, fixtures, tmp_path):
    target = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "resolve", "--scene", fixtures["wheel.json"], "--out", target)
    assert code == 0 and out == ""
    assert target.read_bytes().startswith(b"s,v_0")


def test_resolve_nontermination_exit_code(capsys, fixtures):
    code, out, err = run(capsys, "resolve", "--scene", fixtures["degenerate3.json"],
                         "--strategy", "simultaneous", "--s-max", "0.01")
    assert code == 3 and "not resolved" in err
    assert len(rows(out)) > 1


def test_sample_wheel(capsys, fixtures):
    code, out, _ = run(capsys, "sample", "--scene", fixtures["wheel.json"], "--n", "100",
                       "--seed", "7")
    table = rows(out)
    assert code == 0
    assert table[0] == ["v_plus_0", "v_plus_1", "v_plus_2", "multiplicity", "terminated"]
    assert len(table) - 1 >= 3
    assert sum(int(r[3]) for r in table[1:]) == 100


def test_sample_flags_unterminated_rows(capsys, fixtures):
    code, out, _ = run(capsys, "sample", "--scene", fixtures["degenerate3.json"], "--n", "3",
                       "--s-max", "0.05")
    assert code == 0
    assert "false" in [r[-1] for r in rows(out)[1:]]


def test_check_degeneracy(capsys, fixtures):
    code, out, _ = run(capsys, "check", "--scene", fixtures["degenerate3.json"],
                       "--property", "degeneracy")
    assert code == 1 and "FAIL" in out and "v = [" in out
    code, out, _ = run(capsys, "check", "--scene", fixtures["wheel.json"],
                       "--property", "degeneracy", "--n", "300")
    assert code == 0 and "PASS" in out


@pytest.mark.parametrize("prop", ["dissipation", "termination", "homogeneity"])
def test_check_properties_pass_on_wheel(capsys, fixtures, prop):
    code, out, _ = run(capsys, "check", "--scene", fixtures["wheel.json"], "--property", prop,
                       "--strategy", "dirichlet:1:10")
    assert code == 0 and out.startswith(f"{prop}: PASS")


def test_bound(capsys, fixtures):
    code, out, _ = run(capsys, "bound", "--scene", fixtures["wheel.json"])
    table = rows(out)
    assert code == 0 and table[0] == ["id", "epsilon", "S"]
    assert [r[0] for r in table[1:]] == ["A", "B"]
    assert all(float(r[2]) > 0 for r in table[1:])


@pytest.mark.parametrize("argv", [
    ["resolve", "--scene", "missing.json"],
    ["resolve", "--strategy", "bogus"],
    ["resolve", "--strategy", "sequential:A"],
    ["resolve", "--step", "-1"],
    ["sample", "--n", "0"],
    ["check", "--property", "nonsense"],
    ["frobnicate"],
])
def test_configuration_errors_exit_2(capsys, fixtures, argv):
    if "--scene" not in argv and argv[0] != "frobnicate":
        argv = argv + ["--scene", str(fixtures["wheel.json"])]
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_bad_scene_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 2, "mass": [[1,0],[0,1]], "contacts": [], "v0": [0, -1], "x": 1}')
    code, _, err = run(capsys, "resolve", "--scene", bad)
    assert code == 2 and "x: unknown field" in err


@pytest.mark.parametrize("argv", [
    ["sample", "--n", "20", "--seed", "3"],
    ["resolve", "--strategy", "vertex:5+stick=random", "--seed", "9"],
])
def test_byte_identical_reruns(fixtures, tmp_path, argv):
    outputs = []
    for k in range(2):
        target = tmp_path / f"run{k}.csv"
        assert main(argv + ["--scene", str(fixtures["box.json"]), "--out", str(target)]) == 0
        outputs.append(target.read_bytes())
    assert outputs[0] == outputs[1]


def test_resolve_values_in_original_coordinates(capsys, fixtures):
    _, out, _ = run(capsys, "resolve", "--scene", fixtures["wheel.json"],
                    "--strategy", "sequential:A,B")
    last = np.array([float(x) for x in rows(out)[-1][1:4]])
    assert np.allclose(last, [1 / 9, 1 / 9, -1 / 9], atol=2e-3)
