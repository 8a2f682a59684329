import csv
import io
import json
import math

import pytest

from hypercover import __version__
from hypercover.cli import main
from hypercover.surface_group import read_catalog

import oracles

SYSTOLE = float(oracles.BOLZA_SYSTOLE_MP)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    lines = text.splitlines()
    assert lines[0].startswith(f"# hypercover {__version__} ")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_catalog_file(tmp_path, capsys):
    path = tmp_path / "bolza.cat"
    code, _, _ = run(capsys, "catalog", "--cutoff", "3.2", "--out", str(path))
    assert code == 0
    first = path.read_text().splitlines()[0]
    assert first.startswith(f"# hypercover {__version__} command=catalog seed=")
    cat = read_catalog(path)
    assert len(cat.entries) == 24
    assert all(abs(e.length - SYSTOLE) < 1e-9 for e in cat.entries)


def test_catalog_below_systole(capsys):
    code, out, _ = run(capsys, "catalog", "--cutoff", "1.0")
    assert code == 0
    assert out.splitlines()[1:] == []


def test_catalog_instability_exit_code(capsys):
    code, _, err = run(capsys, "catalog", "--cutoff", "5.4", "--wordbound", "3")
    assert code == 2 and "unstable" in err


def test_malformed_flag(capsys):
    code, _, err = run(capsys, "catalog", "--cutof", "3.2")
    assert code == 64 and "usage:" in err
    code, _, err = run(capsys, "nonsense")
    assert code == 64 and "usage:" in err


def test_budget_exit_code(capsys):
    code, _, err = run(capsys, "sample", "--n", "6", "--samples", "5", "--trial-cap", "1")
    assert code == 3 and "budget" in err


def test_config_file_and_seed_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sampler settings\nn = 4\nsamples = 3\nseed = 5\n")
    code, out, _ = run(capsys, "sample", "--config", str(cfg))
    assert code == 0
    lines = out.splitlines()
    assert "seed=5" in lines[0] and len(lines) == 4 and lines[1].startswith("n=4 ")
    code, out2, _ = run(capsys, "--seed", "6", "sample", "--config", str(cfg))
    assert "seed=6" in out2.splitlines()[0] and out2 != out


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("cutoff = 3.2\nbogus = 1\n")
    code, _, err = run(capsys, "catalog", "--config", str(cfg))
    assert code == 64 and "bogus" in err


def test_variance_reproducible_and_thread_independent(tmp_path, capsys):
    outs = []
    for threads in ("1", "1", "4"):
        path = tmp_path / f"v{len(outs)}.csv"
        code, _, _ = run(capsys, "variance", "--degrees", "2,3", "--samples", "300", "--bump-center", "3.2",
                         "--bump-width", "0.6", "--threads", threads, "--out", str(path))
        assert code == 0
        outs.append((path.read_bytes(), (tmp_path / f"v{len(outs)}.csv.json").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_variance_degree_one_row(capsys):
    code, out, err = run(capsys, "variance", "--degrees", "1", "--samples", "50")
    assert code == 0
    rows = table(out)
    assert len(rows) == 1 and rows[0]["n"] == "1" and float(rows[0]["std_err"]) == 0.0
    assert "slope" in json.loads(err)


def test_predict_table(capsys):
    code, out, _ = run(capsys, "predict", "--jmax", "100", "--n", "10")
    assert code == 0
    rows = table(out)
    assert float(rows[0]["lambda_j"]) == 0.25
    assert all(abs(float(r["roundtrip"])) <= 1e-8 for r in rows)
    lam = float(rows[100]["lambda_j"])
    assert oracles.tanh_antiderivative_series(math.sqrt(lam - 0.25)) == pytest.approx(100 / 20, abs=1e-12)


def test_jsonl_format(capsys):
    code, out, _ = run(capsys, "--format", "jsonl", "weyl", "--Lambda", "10", "--n", "10")
    assert code == 0
    head, row = [json.loads(x) for x in out.splitlines()]
    assert head["hypercover"] == __version__ and head["config"]["Lambda"] == 10.0
    assert row["count"] == pytest.approx(20 * oracles.tanh_antiderivative_series(math.sqrt(9.75)), abs=1e-9)


def test_moments_markov_kernel(capsys):
    code, out, _ = run(capsys, "moments", "--n", "3", "--words", "1;1")
    assert code == 0 and float(table(out)[0]["value"]) == pytest.approx(22 / 9, rel=1e-15)
    code, out, _ = run(capsys, "markov", "--coeffs", "0,1", "--q", "1", "--k", "1")
    r = table(out)[0]
    assert code == 0 and r["satisfied"] == "1" and float(r["right"]) == pytest.approx(8.0)
    code, _, _ = run(capsys, "markov", "--coeffs", "1,2,3,4", "--q", "2")
    assert code == 64
    code, out, _ = run(capsys, "kernel", "--points", "3", "--tol", "1e-9")
    rows = table(out)
    assert code == 0 and len(rows) == 3
    for r in rows:
        assert float(r["abel_inverse"]) == pytest.approx(float(r["phi"]), abs=1e-6)


def test_reals_use_seventeen_digits(capsys):
    code, out, _ = run(capsys, "predict", "--jmax", "1", "--n", "3")
    lam = table(out)[1]["lambda_j"]
    assert float(lam) == float(format(float(lam), ".17g"))
    assert len(lam.replace(".", "").lstrip("0")) >= 15
