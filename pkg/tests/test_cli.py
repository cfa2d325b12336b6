import json

import numpy as np
import pytest

from multimono import cli
from multimono.gallery import get_case
from multimono.report import jsonable


def _write(path, data):
    path.write_text(json.dumps(jsonable(data)))
    return str(path)


@pytest.fixture
def files(tmp_path):
    return {
        "g57": _write(tmp_path / "g57.json", get_case("ex5.7").gamma.to_dict()),
        "g56": _write(tmp_path / "g56.json", get_case("ex5.6").gamma.to_dict()),
        "g51": _write(tmp_path / "g51.json", get_case("ex5.1").gamma.to_dict()),
        "t51": _write(tmp_path / "t51.json", get_case("ex5.1").tuple.to_dict()),
        "tcor": _write(tmp_path / "tcor.json", get_case("cor5.2").tuple.to_dict()),
        "fin": _write(tmp_path / "fin.json", get_case("ex5.5-id").gamma.to_dict()),
        "dir": tmp_path,
    }


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gallery_run_passes(capsys):
    code, out, _ = run(capsys, "gallery", "run", "ex5.6")
    assert code == 0
    rows = json.loads(out)["checks"]
    assert rows and all(r["match"] for r in rows)


def test_gallery_list(capsys):
    code, out, _ = run(capsys, "gallery", "list")
    assert code == 0
    assert "ex5.4" in [c["id"] for c in json.loads(out)["cases"]]


def test_cyclic_fail_exit_1_with_witness(capsys, files):
    code, out, _ = run(capsys, "cyclic", "--input", files["g57"], "--order", "3", "--budget", "100000")
    assert code == 1
    assert json.loads(out)["witness"]["slack"] < 0


def test_malformed_input_exit_3(capsys, files):
    bad = files["dir"] / "bad.json"
    bad.write_text('{"config": {"N": 3, "d": 2}, "body": {"kind": "finite", "points": [[[1, "x"]]]}}')
    code, _, err = run(capsys, "monotone", "--input", str(bad))
    assert code == 3
    assert "$.body.points[0][0][1]" in err


def test_unknown_field_rejected(capsys, files):
    bad = files["dir"] / "extra.json"
    bad.write_text('{"config": {"N": 2, "d": 1, "M": 4}, "body": {"kind": "finite", "points": [[[1], [2]]]}}')
    code, _, err = run(capsys, "monotone", "--input", str(bad))
    assert code == 3 and "$.config" in err


def test_not_json_and_missing_file(capsys, files):
    bad = files["dir"] / "x.json"
    bad.write_text("{")
    assert run(capsys, "monotone", "--input", str(bad))[0] == 3
    assert run(capsys, "monotone", "--input", str(files["dir"] / "none.json"))[0] == 3


def test_usage_errors_exit_3(capsys, files):
    assert run(capsys, "bogus")[0] == 3
    assert run(capsys, "monotone")[0] == 3
    assert run(capsys, "monotone", "--input", files["g51"], "--order", "x")[0] == 3


def test_inconclusive_exit_2(capsys, files):
    assert run(capsys, "maximal", "--input", files["fin"])[0] == 2


def test_monotone_and_maximal_pass(capsys, files):
    assert run(capsys, "monotone", "--input", files["g56"])[0] == 0
    assert run(capsys, "maximal", "--input", files["g56"])[0] == 0
    assert run(capsys, "monotone", "--input", files["g57"])[0] == 1


def test_resolvents(capsys, files):
    assert run(capsys, "resolvents", "--input", files["g56"])[0] == 0
    code, out, _ = run(capsys, "resolvents", "--input", files["g57"], "--index", "1")
    assert code == 0 and "samples" in json.loads(out)["details"]
    assert run(capsys, "resolvents", "--input", files["g57"])[0] == 1


def test_envelope_plot_csv(capsys, files):
    plot = files["dir"] / "env.csv"
    code, _, _ = run(capsys, "envelope", "--tuple", files["t51"], "--input", files["g51"], "--emit-plot", str(plot))
    assert code == 0
    lines = plot.read_bytes().split(b"\n")
    assert lines[0] == b"s1,envelope_sum,q"
    s, e, qv = map(float, lines[1].split(b","))
    assert s == -3.0 and e == pytest.approx(4.5) and qv == 4.5
    assert b"\r" not in plot.read_bytes()


def test_splitting_plot_csv(capsys, files):
    plot = files["dir"] / "sp.csv"
    code, _, _ = run(
        capsys, "splitting", "--tuple", files["t51"], "--input", files["g51"], "--grid-steps", "5",
        "--emit-plot", str(plot),
    )
    assert code == 0
    rows = plot.read_text().strip().split("\n")
    assert rows[0] == "x1_1,x2_1,x3_1,slack" and len(rows) == 1 + 5**3


def test_prox_partition_and_relax(capsys, files):
    assert run(capsys, "prox-partition", "--tuple", files["t51"])[0] == 0
    code, out, _ = run(capsys, "relax", "--tuple", files["tcor"], "--grid-steps", "61")
    assert code == 0 and json.loads(out)["details"]["max_change"] <= 1e-12


def test_conjugate_commands(capsys, files):
    code, out, _ = run(capsys, "conjugate", "--tuple", files["t51"], "--index", "1", "--kind", "fenchel")
    assert code == 0 and json.loads(out)["details"]["conjugate"]["kind"] == "quadratic"
    code, out, _ = run(capsys, "conjugate", "--tuple", files["tcor"], "--index", "2", "--grid-steps", "7")
    vals = json.loads(out)["details"]["conjugate"]["values"]
    assert np.allclose(vals, np.linspace(-3, 3, 7) ** 2)


def test_env_tolerance_override(capsys, files, monkeypatch):
    monkeypatch.setenv("MM_DEFAULT_TOL", "0.25")
    code, out, _ = run(capsys, "monotone", "--input", files["g56"])
    assert json.loads(out)["details"]["tol"] == 0.25
    monkeypatch.setenv("MM_DEFAULT_TOL", "abc")
    assert run(capsys, "monotone", "--input", files["g56"])[0] == 3


def test_csv_format(capsys, files):
    code, out, _ = run(capsys, "monotone", "--input", files["g56"], "--format", "csv")
    assert code == 0 and out.startswith("key,value\n") and "verdict,pass" in out


def test_output_deterministic(capsys, files):
    args = ("cyclic", "--input", files["g56"], "--order", "3", "--budget", "20000", "--seed", "7")
    a = run(capsys, *args)
    b = run(capsys, *args)
    assert a == b
