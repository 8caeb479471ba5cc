import json

import numpy as np
import pytest

from hullopt import cli, geometry, pca, parents


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_parents_command(workdir, capsys):
    assert cli.main(["parents", "--out", "parents", "--manifest", "m.json"]) == 0
    files = sorted(p.name for p in (workdir / "parents").glob("*.txt"))
    assert files == sorted(f"{n}.txt" for n in parents.PARENT_NAMES)
    for f in (workdir / "parents").glob("*.txt"):
        assert geometry.read_offset_table(f).shape == (40, 20)
    summary = (workdir / "parents" / "summary.csv").read_text().splitlines()
    wig = next(r for r in summary if r.startswith("wigley")).split(",")
    assert float(wig[3]) == pytest.approx(0.444, abs=1e-3)
    first = {f.name: f.read_bytes() for f in (workdir / "parents").iterdir()}
    assert cli.main(["parents", "--out", "parents"]) == 0
    assert first == {f.name: f.read_bytes() for f in (workdir / "parents").iterdir()}


def test_fit_pca_matches_library(workdir):
    cli.main(["parents", "--out", "parents", "--manifest", "m.json"])
    assert cli.main(["fit-pca", "--manifest", "m.json"]) == 0
    assert pca.digest(pca.load("pca.json")) == pca.digest(pca.fit(parents.bundled_parents(), 3))
    manifest = json.loads((workdir / "m.json").read_text())
    assert set(manifest["stages"]) == {"parents", "fit-pca"}


def test_tampered_input_is_refused(workdir, capsys):
    cli.main(["parents", "--out", "parents", "--manifest", "m.json"])
    path = workdir / "parents" / "wigley.txt"
    path.write_text(path.read_text().replace("# name=wigley", "# name=wigley2"))
    assert cli.main(["fit-pca", "--manifest", "m.json"]) == cli.EXIT_VALIDATION
    assert "changed since stage 'parents'" in capsys.readouterr().err


def test_small_pipeline(workdir, capsys):
    cli.main(["parents", "--out", "parents", "--manifest", "m.json"])
    cli.main(["fit-pca", "--manifest", "m.json"])
    assert cli.main(["gen-dataset", "--n-hulls", "6", "--n-fn", "5", "--workers", "1", "--manifest", "m.json"]) == 0
    assert "30 rows" in capsys.readouterr().out
    assert cli.main(["train", "--epochs", "2", "--batch-size", "16", "--progress", "0", "--manifest", "m.json"]) == 0
    assert "best test MAPE" in capsys.readouterr().out
    assert (workdir / "history.csv").read_text().count("\n") == 3
    args = ["optimize", "--case", "2", "--n1", "50", "--n2", "20", "--k", "2", "--manifest", "m.json"]
    assert cli.main(args) == 0
    out = capsys.readouterr().out
    assert "s175_container" in out and "diff %" in out
    report = json.loads((workdir / "report.json").read_text())
    assert report["space"]["length"] == 170.0
    assert [r["name"] for r in report["comparison"]][0] == "optimum"
    assert geometry.read_offset_table(workdir / "report_hull.txt").shape == (40, 20)
    assert (workdir / "report_hull.obj").stat().st_size > 0
    first = (workdir / "report.json").read_bytes()
    assert cli.main(args) == 0
    assert (workdir / "report.json").read_bytes() == first
    assert set(json.loads((workdir / "m.json").read_text())["stages"]) == {
        "parents", "fit-pca", "gen-dataset", "train", "optimize",
    }


def test_optimize_refuses_foreign_pca(workdir, capsys):
    cli.main(["parents", "--out", "parents"])
    cli.main(["fit-pca"])
    cli.main(["gen-dataset", "--n-hulls", "4", "--n-fn", "3", "--workers", "1"])
    cli.main(["train", "--epochs", "1", "--progress", "0"])
    cli.main(["fit-pca", "--d", "2", "--out", "other.json"])
    assert cli.main(["optimize", "--case", "1", "--pca", "other.json", "--n1", "5", "--k", "1"]) == cli.EXIT_VALIDATION
    assert "PCA model" in capsys.readouterr().err


def test_export_curves(workdir):
    cli.main(["parents", "--out", "parents"])
    code = cli.main([
        "export-curves", "--offsets", "parents/wigley.txt", "--params", "10", "1.6", "--length", "100",
        "--n-fn", "5", "--out", "w.csv",
    ])
    assert code == 0
    rows = (workdir / "w.csv").read_text().splitlines()
    assert rows[0] == "Fn,U,Re,R_F,R_W,R_T,C_T" and len(rows) == 6
    cts = np.array([float(r.split(",")[-1]) for r in rows[1:]])
    assert np.all(cts > 0)


def test_exit_codes(workdir):
    assert cli.main(["fit-pca", "--parents", "missing"]) == cli.EXIT_VALIDATION
    assert cli.main(["train", "--dataset", "missing.csv"]) == cli.EXIT_IO
    (workdir / "bad.json").write_text('{"format": "hullopt-pca", "version": 99}')
    assert cli.main(["gen-dataset", "--pca", "bad.json", "--n-hulls", "1"]) == cli.EXIT_VALIDATION
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-verb"])
    assert exc.value.code == 2
