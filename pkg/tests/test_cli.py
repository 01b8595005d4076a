import json
import math
import subprocess
import sys

import pytest

from nodalcount.cli import HIST_HEADER, run


def out_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_moments_prints_exact_rationals(capsys):
    assert run(["moments", "--s", "2", "--m-max", "2"]) == 0
    lines = capsys.readouterr().out.split("\n")
    assert lines[0].split()[1] == "1/3"
    assert lines[1].split()[1] == "2/15"


def test_geometry_json(capsys):
    assert run(["geometry", "--kind", "oscillator", "--params", "1,2,3"]) == 0
    d = out_json(capsys)
    assert set(d) == {"v_gamma", "j_crit", "xi_crit", "hessian", "det_hessian"}
    assert d["xi_crit"] == pytest.approx(2 / 9, abs=1e-12)


def test_model_shorthand_and_config(tmp_path, capsys):
    cfg = tmp_path / "box.cfg"
    cfg.write_text("# unit square\nkind = cuboid\nparams = 1, 1\n")
    assert run(["geometry", "--config", str(cfg)]) == 0
    a = out_json(capsys)
    assert run(["geometry", "--model", "cuboid:1,1"]) == 0
    assert out_json(capsys) == a
    assert a["xi_crit"] == pytest.approx(2 / math.pi, abs=1e-12)
    # explicit flags override the file
    assert run(["geometry", "--config", str(cfg), "--kind", "oscillator"]) == 0
    assert out_json(capsys)["xi_crit"] == pytest.approx(0.5, abs=1e-12)


def test_unknown_flag_exits_2(capsys):
    assert run(["geometry", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_model_exits_2(capsys):
    assert run(["geometry", "--kind", "oscillator", "--params", "1,-2"]) == 2
    assert run(["geometry", "--kind", "custom", "--params", "1,10,1", "--exponents", "2,0;1,1;0,2"]) == 2


def test_bad_config_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run(["geometry", "--config", str(cfg)]) == 2


def test_overflow_exits_3(tmp_path, monkeypatch):
    from nodalcount import cli
    from nodalcount.errors import NodalCountOverflow

    def boom(*a, **k):
        raise NodalCountOverflow("too many domains")

    monkeypatch.setattr(cli, "window_histogram", boom)
    assert run(["enumerate", "--e0", "10", "--out", str(tmp_path)]) == 3


def test_tails_and_analytic(capsys):
    assert run(["tails", "--model", "oscillator:1,1"]) == 0
    assert out_json(capsys)["prefactor"] == pytest.approx(2**-0.5, abs=1e-8)
    assert run(["analytic", "--model", "oscillator:1,1", "--xi", "0.4"]) == 0
    assert out_json(capsys)[0]["p"] == pytest.approx(5**0.5)
    assert run(["analytic", "--kind", "oscillator", "--s", "3", "--xi", "0.1"]) == 0
    assert out_json(capsys)[0]["method"] == "quadrature"


def test_weyl(capsys):
    assert run(["weyl", "--model", "oscillator:1,1", "--energies", "3.5,10"]) == 0
    rows = out_json(capsys)
    assert rows[0]["exact"] == 6
    assert rows[1]["weyl"] == pytest.approx(50.0)


def test_enumerate_outputs(tmp_path, capsys):
    args = ["enumerate", "--model", "oscillator:1,1.4142135623730951", "--e0", "200", "--bins", "0.02"]
    assert run(args + ["--out", str(tmp_path / "a"), "--svg"]) == 0
    manifest = capsys.readouterr().out.strip()
    assert manifest.endswith("manifest.json")
    m = json.loads(open(manifest).read())
    assert m["subcommand"] == "enumerate" and m["version"]
    csv = (tmp_path / "a" / "histogram.csv").read_text().splitlines()
    side = json.loads((tmp_path / "a" / "histogram.json").read_text())
    assert csv[0] == HIST_HEADER
    assert set(side) >= {"states_total", "e0", "g", "mode", "runtime"}
    assert side["manifest"] == "manifest.json"
    assert (tmp_path / "a" / "histogram.svg").read_text().startswith("<svg")
    # byte-identical reruns, also with more threads and in exact mode
    assert run(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    assert (tmp_path / "b" / "histogram.csv").read_bytes() == (tmp_path / "a" / "histogram.csv").read_bytes()
    assert run(args + ["--out", str(tmp_path / "c"), "--mode", "exact"]) == 0
    assert len((tmp_path / "c" / "histogram.csv").read_text().splitlines()) > 1


def test_limit_outputs_are_reproducible(tmp_path):
    args = ["limit", "--model", "oscillator:1,1", "--samples", "100000", "--seed", "4", "--bins", "0.01"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a = (tmp_path / "a" / "limit.csv").read_bytes()
    assert a == (tmp_path / "b" / "limit.csv").read_bytes()
    rows = a.decode().splitlines()
    assert rows[0] == HIST_HEADER and len(rows) == 1 + 50
    rep = json.loads((tmp_path / "a" / "limit.json").read_text())
    assert rep["tail"]["exponent"] == -0.5


def test_compare_reports_distances(tmp_path, capsys):
    assert run(["compare", "--e0", "300", "--samples", "200000", "--out", str(tmp_path), "--svg"]) == 0
    report = json.loads((tmp_path / "compare.json").read_text())
    for key in ("enumerate_vs_limit", "enumerate_vs_closed_form", "limit_vs_closed_form"):
        assert set(report[key]) == {"sup_norm", "l1", "bins"}
    assert report["limit_vs_closed_form"]["l1"] < 0.02
    for name in ("enumerate.csv", "limit.csv", "closed_form.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert lines[0] == HIST_HEADER


def test_randomwave_outputs(tmp_path):
    args = ["randomwave", "--sides", "4,6,8", "--realizations", "5", "--seed", "2"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a = (tmp_path / "a" / "randomwave.csv").read_bytes()
    assert a == (tmp_path / "b" / "randomwave.csv").read_bytes()
    assert a.decode().splitlines()[0] == "side,realization,total,boundary,interior,largest_fraction"
    fits = json.loads((tmp_path / "a" / "randomwave.json").read_text())["fits"]
    assert "boundary_domains_slope" in fits
    assert run(["randomwave", "--sides", "4,6", "--out", str(tmp_path / "c")]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nodalcount", "moments", "--s", "3", "--m-max", "1"], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.split()[1] == "1/10"
    r = subprocess.run([sys.executable, "-m", "nodalcount", "nonsense"], capture_output=True, text=True)
    assert r.returncode == 2
