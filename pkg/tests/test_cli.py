import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from iorank import constructions as cons
from iorank.cli import main
from iorank.io_graph import load_matrix, save_matrix


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def fig1(tmp_path):
    path = tmp_path / "fig1.json"
    save_matrix(cons.figure1().w, path)
    return path


@pytest.fixture
def lower_bound(tmp_path):
    w, u = cons.lower_bound_pair(10, 0.1)
    save_matrix(w.w, tmp_path / "w.json")
    save_matrix(u.w, tmp_path / "u.json")
    return tmp_path / "w.json", tmp_path / "u.json"


def test_influence_figure1(capsys, fig1):
    code, out, _ = run(capsys, "influence", "--matrix", fig1, "--alpha", 0.5)
    assert code == 0
    doc = json.loads(out)
    np.testing.assert_allclose(doc["v"][:3], [1 / 3, 1 / 3, 1 / 12], atol=1e-12)
    assert doc["method"] == "direct"


def test_influence_power_agrees(capsys, fig1):
    _, direct, _ = run(capsys, "influence", "--matrix", fig1)
    code, power, _ = run(capsys, "influence", "--matrix", fig1, "--method", "power", "--tol", "1e-12")
    assert code == 0
    diff = np.array(json.loads(power)["v"]) - np.array(json.loads(direct)["v"])
    assert np.abs(diff).sum() <= 1e-11


def test_missing_file_is_input_error(capsys, tmp_path):
    code, out, err = run(capsys, "influence", "--matrix", tmp_path / "nope.json")
    assert code == 2
    assert out == ""
    assert "nope.json" in err


def test_invalid_matrix_is_input_error(capsys, tmp_path):
    (tmp_path / "m.csv").write_text("0,0.5\n0.5,0\n")
    assert run(capsys, "influence", "--matrix", tmp_path / "m.csv")[0] == 2


def test_lenient_mode_flag(capsys, tmp_path):
    (tmp_path / "m.csv").write_text("0,2\n3,0\n")
    code, out, _ = run(capsys, "influence", "--matrix", tmp_path / "m.csv", "--mode", "lenient")
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["v"], [0.5, 0.5])


def test_bad_alpha_rejected_before_dispatch(capsys, fig1):
    with pytest.raises(SystemExit) as exc:
        main(["influence", "--matrix", str(fig1), "--alpha", "1.5"])
    assert exc.value.code == 2


def test_solver_failure_is_numeric_error(capsys, tmp_path):
    path = tmp_path / "r.csv"
    save_matrix(cons.random_io_matrix(6, np.random.default_rng(0)), path)
    code, _, err = run(capsys, "influence", "--matrix", path, "--method", "power", "--cap", 2, "--alpha", 0.1)
    assert code == 3
    assert "power iteration" in err


def test_certify_lower_bound_pair(capsys, lower_bound):
    w, u = lower_bound
    code, out, _ = run(capsys, "certify", "--true", w, "--observed", u, "--alpha", 0.5, "--delta", 0.1, "--strict")
    assert code == 0
    certs = [json.loads(line) for line in out.splitlines()]
    assert {c["theorem"] for c in certs} == {"ipsen-wills", "delta-share"}
    assert all(c["holds"] for c in certs)


def test_certify_strict_failure(capsys, lower_bound):
    w, u = lower_bound
    code, out, _ = run(capsys, "certify", "--true", w, "--observed", u, "--delta", 0.01, "--strict")
    assert code == 4
    assert any(not json.loads(line)["holds"] for line in out.splitlines())
    # without --strict the same failure is only reported
    assert run(capsys, "certify", "--true", w, "--observed", u, "--delta", 0.01)[0] == 0


def test_certify_chain_certificates(capsys, tmp_path):
    from iorank import chains

    sizes = [2, 3, 3, 2]
    rng = np.random.default_rng(8)
    w = chains.random_chain(sizes, rng)
    part = chains.ChainPartition.contiguous(sizes)
    u = chains.perturb_tail(w, part, 3, rng)
    save_matrix(w, tmp_path / "w.json")
    save_matrix(u, tmp_path / "u.json")
    (tmp_path / "p.json").write_text(json.dumps(part.to_dict()))
    code, out, _ = run(capsys, "certify", "--true", tmp_path / "w.json", "--observed", tmp_path / "u.json",
                       "--partition", tmp_path / "p.json", "--q", 1, "--k-cut", 3, "--k", 1, "--strict")
    assert code == 0
    names = [json.loads(line)["theorem"] for line in out.splitlines()]
    assert "truncation" in names and "combined" in names


def test_observe_writes_observed_matrix(capsys, tmp_path):
    n, delta = 6, 0.2
    w, u = cons.lower_bound_pair(n, delta)
    save_matrix(w.w, tmp_path / "w.csv")
    (tmp_path / "spec.json").write_text(json.dumps(cons.lower_bound_missing_spec(n, delta).to_dict()))
    code, _, _ = run(capsys, "observe", "--matrix", tmp_path / "w.csv", "--spec", tmp_path / "spec.json",
                     "--out", tmp_path / "u.csv")
    assert code == 0
    np.testing.assert_allclose(load_matrix(tmp_path / "u.csv").w, u.w.w, atol=1e-15)


def test_observe_bad_spec(capsys, tmp_path, fig1):
    (tmp_path / "spec.json").write_text(json.dumps({"d": [0.5] + [0] * 5, "c": []}))
    assert run(capsys, "observe", "--matrix", fig1, "--spec", tmp_path / "spec.json")[0] == 2


def test_simulate_is_bit_identical(tmp_path):
    y = np.full((10, 10), 1000)
    np.fill_diagonal(y, 0)
    (tmp_path / "flows.json").write_text(json.dumps({"y": y.tolist()}))
    cmd = [sys.executable, "-m", "iorank.cli", "simulate", "--flows", str(tmp_path / "flows.json"),
           "--zeta", "0.1", "--epsilon", "0.2", "--trials", "10000", "--seed", "7"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b
    doc = json.loads(a)
    assert doc["trials"] == 10000
    assert doc["empirical_success"] >= doc["bound_probability"] - 3 * (0.0012 / 10000) ** 0.5


def test_simulate_several_norms(capsys, tmp_path):
    (tmp_path / "f.json").write_text(json.dumps({"n": 3, "edges": [
        {"i": 0, "j": 1, "y": 500}, {"i": 1, "j": 2, "y": 500}, {"i": 2, "j": 0, "y": 300}, {"i": 2, "j": 1, "y": 200}]}))
    code, out, _ = run(capsys, "simulate", "--flows", tmp_path / "f.json", "--zeta", 0.1, "--trials", 50,
                       "--q", 1, "--q", 2, "--q", "inf")
    assert code == 0
    assert [json.loads(line)["q"] for line in out.splitlines()] == [1.0, 2.0, "inf"]


def test_simulate_rejects_small_q(capsys, tmp_path):
    with pytest.raises(SystemExit):
        main(["simulate", "--flows", str(tmp_path / "f.json"), "--zeta", "0.1", "--q", "0.5"])


def test_chain_report(capsys, tmp_path):
    n = 5
    w = np.zeros((n, n))
    w[np.arange(1, n), np.arange(n - 1)] = 1.0
    np.savetxt(tmp_path / "c.csv", w, delimiter=",")
    (tmp_path / "p.json").write_text(json.dumps({"blocks": [[i] for i in range(n)]}))
    code, out, _ = run(capsys, "chain", "--matrix", tmp_path / "c.csv", "--partition", tmp_path / "p.json",
                       "--alpha", 0.5)
    assert code == 0
    doc = json.loads(out)
    assert doc["gamma"] == pytest.approx(0.5)
    assert doc["weakly_coupled"] is True
    assert doc["influence"]["method"] == "chain"


def test_chain_back_edge(capsys, tmp_path):
    np.savetxt(tmp_path / "c.csv", np.array([[0, 1.0], [0, 0]]), delimiter=",")
    (tmp_path / "p.json").write_text(json.dumps({"blocks": [[0], [1]]}))
    code, _, err = run(capsys, "chain", "--matrix", tmp_path / "c.csv", "--partition", tmp_path / "p.json")
    assert code == 2
    assert "earlier block" in err


@pytest.mark.parametrize("name, files", [
    ("figure1", ["figure1.json"]),
    ("lower-bound", ["lower-bound-W.json", "lower-bound-U.json", "lower-bound-spec.json"]),
    ("star", ["star.json"]),
    ("two-hub", ["two-hub.json"]),
    ("firm-share", ["firm-share-G.json", "firm-share-H.json"]),
    ("locality", ["locality-G.json", "locality-H.json"]),
])
def test_construct(capsys, tmp_path, name, files):
    code, out, _ = run(capsys, "construct", name, "--out-dir", tmp_path, "--alpha", 0.5)
    assert code == 0
    listed = json.loads(out)["files"]
    for f in files:
        assert str(tmp_path / f) in listed
    closed = json.loads((tmp_path / f"{name}.closed.json").read_text())
    assert closed["name"] == name
    assert "closed_form" in closed or "limit_form" in closed


def test_construct_closed_form_matches_solve(capsys, tmp_path):
    run(capsys, "construct", "two-hub", "--n", 7, "--alpha", 0.3, "--out-dir", tmp_path)
    closed = json.loads((tmp_path / "two-hub.closed.json").read_text())["closed_form"]["two-hub"]
    _, out, _ = run(capsys, "influence", "--matrix", tmp_path / "two-hub.json", "--alpha", 0.3)
    np.testing.assert_allclose(json.loads(out)["v"], closed, atol=1e-12)


def test_sweep_lower_bound(capsys, tmp_path):
    png = tmp_path / "sweep.png"
    code, out, _ = run(capsys, "sweep", "--construction", "lower-bound", "--param", "delta",
                       "--grid", "0.01:0.2:0.01", "--n", 10, "--alpha", 0.5, "--plot", png)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 20
    assert float(rows[0]["delta"]) == 0.01 and float(rows[-1]["delta"]) == 0.2
    ratios = np.array([float(r["measured"]) / float(r["delta"]) for r in rows])
    assert (ratios.max() - ratios.min()) / ratios.mean() <= 0.05
    assert all(float(r["measured"]) <= float(r["bound"]) for r in rows)
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_sweep_locality_over_k(capsys):
    code, out, _ = run(capsys, "sweep", "--construction", "locality", "--param", "k", "--grid", "2:6:2",
                       "--n", 40, "--alpha", 0.5)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["k"] for r in rows] == ["2", "4", "6"]


def test_sweep_rejects_unknown_pairing(capsys):
    code, _, _ = run(capsys, "sweep", "--construction", "locality", "--param", "delta", "--grid", "0.1:0.2:0.1")
    assert code == 2


def test_sweep_bad_grid():
    with pytest.raises(SystemExit):
        main(["sweep", "--construction", "lower-bound", "--param", "delta", "--grid", "0.2:0.1:0.1"])


def test_console_script_entry_point(tmp_path, fig1):
    out = subprocess.run([sys.executable, "-m", "iorank.cli", "influence", "--matrix", str(fig1)],
                         capture_output=True, text=True, check=True).stdout
    assert json.loads(out)["v"][0] == pytest.approx(1 / 3)
