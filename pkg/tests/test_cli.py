import csv
import io
import json

import numpy as np
import pytest

from conftest import E_STAR, P_REF, Q_REF
from zerorate.cli import main, parse_grid, InputError
from zerorate.distributions import JointDistribution, dump_distribution


@pytest.fixture
def files(tmp_path):
    p = tmp_path / "p.json"
    q = tmp_path / "q.json"
    p.write_text(dump_distribution(JointDistribution(P_REF)))
    q.write_text(dump_distribution(JointDistribution(Q_REF)))
    return str(p), str(q)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_parse_grid():
    assert np.allclose(parse_grid("0:1:3", "g"), [0, 0.5, 1])
    assert np.allclose(parse_grid("0.2:9:1", "g"), [0.2])
    with pytest.raises(InputError):
        parse_grid("0:1", "g")


def test_project(files, capsys):
    code, out, _ = run(capsys, "project", "--p", files[0], "--q", files[1])
    assert code == 0
    values = {r["quantity"]: float(r["value"]) for r in rows(out) if r["x"] == ""}
    assert values["e_pq"] == pytest.approx(E_STAR, abs=1e-10)
    assert values["e"] == pytest.approx(E_STAR, abs=1e-10)


def test_project_identical(files, capsys):
    code, out, _ = run(capsys, "project", "--p", files[0], "--q", files[0])
    assert code == 0
    assert float(rows(out)[0]["value"]) == 0.0


def test_malformed_input(tmp_path, files, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"x_size": 2, "y_size": 2,\n  "p": [[0.5, 0.5], [0.1]]}')
    code, _, err = run(capsys, "project", "--p", str(bad), "--q", files[1])
    assert code == 2
    assert "bad.json:2:" in err


def test_missing_file(files, capsys):
    code, _, _ = run(capsys, "project", "--p", "/nonexistent.json", "--q", files[1])
    assert code == 2


def test_tradeoff_with_oracle(files, capsys):
    code, out, _ = run(capsys, "tradeoff", "--p", files[0], "--q", files[1], "--n", "8", "--oracle")
    assert code == 0
    kinds = {r["scheme"] for r in rows(out)}
    assert kinds == {"np_like", "hk", "oracle"}


def test_tradeoff_default_grids_dominate(files, capsys):
    code, out, _ = run(capsys, "tradeoff", "--p", files[0], "--q", files[1], "--n", "30")
    assert code == 0
    data = rows(out)
    np_pts = [(float(r["alpha"]), float(r["beta"])) for r in data if r["scheme"] == "np_like"]
    hk_pts = [(float(r["alpha"]), float(r["beta"])) for r in data if r["scheme"] == "hk"]
    assert len(np_pts) == 21 and len(hk_pts) == 20
    for a, b in hk_pts:
        assert any(x <= a and y <= b for x, y in np_pts)


def test_tradeoff_monte_carlo_deterministic(files, tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"mc{k}.csv"
        code = main(
            ["tradeoff", "--p", files[0], "--q", files[1], "--n", "20", "--monte-carlo", "--trials", "5000",
             "--seed", "7", "--lambda-grid", "0:0.1:2", "--r-grid", "0.05:0.1:2", "--out", str(path)]
        )
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert all(r["half_width_alpha"] for r in rows(outs[0].decode()))


def test_tradeoff_resource_cap(files, capsys):
    code, _, err = run(capsys, "tradeoff", "--p", files[0], "--q", files[1], "--n", "100", "--max-types", "1000")
    assert code == 4
    assert "--monte-carlo" in err


def test_tradeoff_requires_n(files, capsys):
    code, _, _ = run(capsys, "tradeoff", "--p", files[0], "--q", files[1])
    assert code == 2


def test_exponents(files, capsys):
    code, out, _ = run(capsys, "exponents", "--p", files[0], "--q", files[1], "--lambda-grid=-0.16181925728385:0.16181925728385:7")
    assert code == 0
    data = rows(out)
    opt = [r for r in data if r["curve"] == "optimal"]
    assert len(opt) == 7
    traj = [r for r in data if r["curve"] == "trajectory"]
    assert all(float(r["parallel_residual"]) < 1e-6 for r in traj)
    code, out, _ = run(capsys, "exponents", "--p", files[0], "--q", files[1])
    pts = {(round(float(r["exponent1"]), 9), round(float(r["exponent2"]), 9)) for r in rows(out) if r["curve"] == "optimal"}
    assert (0.0, round(E_STAR, 9)) in pts and (round(E_STAR, 9), 0.0) in pts


def test_exponents_single_point(files, capsys):
    code, out, _ = run(capsys, "exponents", "--p", files[0], "--q", files[1], "--lambda-grid", "0:0:1")
    assert code == 0
    assert len([r for r in rows(out) if r["curve"] == "optimal"]) == 1


def test_solve_lambda_json(files, capsys):
    code, out, _ = run(capsys, "solve-lambda", "--p", files[0], "--q", files[1], "--lambda-grid", "0:0.1:3", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["metadata"]["command"] == "solve-lambda"
    assert doc["metadata"]["config"]["lambda_grid"] == "0:0.1:3"
    assert len(doc["rows"]) == 3
    assert all(r["alignment_residual"] < 1e-7 for r in doc["rows"])


def test_solve_lambda_out_of_range(files, capsys):
    code, _, _ = run(capsys, "solve-lambda", "--p", files[0], "--q", files[1], "--lambda-grid", "1:2:2")
    assert code == 2


def test_second_order(files, capsys):
    code, out, _ = run(capsys, "second-order", "--p", files[0], "--q", files[1], "--n", "10000", "--eps", "0.25")
    assert code == 0
    r = rows(out)[0]
    assert float(r["e"]) == pytest.approx(E_STAR, abs=1e-10)
    code, _, err = run(capsys, "second-order", "--p", files[0], "--q", files[1], "--n", "100")
    assert code == 2 and "too small" in err


def test_every_field_finite(files, capsys):
    code, out, _ = run(capsys, "tradeoff", "--p", files[0], "--q", files[1], "--n", "6", "--oracle", "--format", "json")
    doc = json.loads(out)
    for r in doc["rows"]:
        for v in r.values():
            assert v is None or isinstance(v, str) or np.isfinite(v)
