import csv
import io
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from trajcluster import ClusterModel, estimate, internal_metric, load_long_csv, run_batch, spec_new, spec_permute
from trajcluster.cli import main, parse_clusters, read_config

COLS = ["--id", "Patient", "--time", "Week", "--response", "UsageHours"]
SVG_NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def pap_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "pap.csv"
    assert main(["simulate", "--n", "301", "--weeks", "13", "--seed", "1", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.csv"
    assert main(["simulate", "--n", "60", "--weeks", "8", "--seed", "3", "--out", str(path)]) == 0
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def polylines(svg_text):
    root = ET.fromstring(svg_text)
    return [p for p in root.iter(f"{SVG_NS}polyline") if p.get("class") == "series"]


def test_simulate_row_count(pap_csv):
    rows = read_rows(pap_csv)
    assert rows[0] == ["Patient", "Week", "UsageHours", "Group"]
    assert len(rows) == 3914


def test_simulate_to_stdout(capsys):
    assert main(["simulate", "--n", "5", "--weeks", "3"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 16


def test_fit_summary_and_determinism(tmp_path, pap_csv, capsys):
    args = ["fit", "--data", str(pap_csv), *COLS, "--method", "lmkm", "--clusters", "2", "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    assert "Cluster sizes (K=2):" in out and "Scaled residuals:" in out
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "model.json").read_bytes()
    assert a == (tmp_path / "b" / "model.json").read_bytes()
    assert (tmp_path / "a" / "summary.txt").read_text() == out


def test_fit_matches_library(tmp_path, small_csv):
    assert main(["fit", "--data", str(small_csv), *COLS, "--method", "gmm", "--clusters", "2", "--seed", "5",
                 "--out", str(tmp_path)]) == 0
    ds = load_long_csv(small_csv, "Patient", "Week", "UsageHours")
    spec = spec_new("gmm", {"id": "Patient", "time": "Week", "response": "UsageHours", "nClusters": 2})
    assert (tmp_path / "model.json").read_text() == estimate(spec, ds, seed=5).to_json() + "\n"


def test_exit_codes(tmp_path, small_csv, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["fit", "--data", str(empty), *COLS]) == 1
    assert "empty dataset" in capsys.readouterr().err
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), *COLS]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("Patient,Week,UsageHours\n1,1,x\n")
    assert main(["fit", "--data", str(bad), *COLS]) == 2
    assert "row 1" in capsys.readouterr().err
    assert main(["fit", "--data", str(small_csv), *COLS, "--method", "nosuch"]) == 1
    assert main(["fit", "--bogus-flag"]) == 1
    assert main([]) == 1
    assert main(["fit", "--data", str(small_csv), *COLS, "--clusters", "0"]) == 1


def test_config_file_and_env(tmp_path, small_csv, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# a run\ndata = {small_csv}\nresponse = UsageHours\nmethod = kml\nclusters = 3\nnstart = 5\n")
    monkeypatch.setenv("TRAJCLUSTER_ID", "Patient")
    monkeypatch.setenv("TRAJCLUSTER_TIME", "Week")
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    model = json.loads((tmp_path / "o" / "model.json").read_text())
    assert model["args"]["nstart"] == 5 and model["args"]["nClusters"] == 3
    assert read_config(cfg)["clusters"] == "3"


def test_parse_clusters():
    assert parse_clusters("3") == [3]
    assert parse_clusters("1-6") == [1, 2, 3, 4, 5, 6]
    assert parse_clusters("2,3,5") == [2, 3, 5]


def test_sweep_table(tmp_path, pap_csv):
    out = tmp_path / "sweep"
    assert main(["sweep", "--data", str(pap_csv), *COLS, "--method", "kml", "--clusters", "1-6",
                 "--metrics", "Dunn,WMAE,estimationTime", "--out", str(out)]) == 0
    rows = read_rows(out / "metrics.csv")
    assert rows[0] == ["method", "nClusters", "seed", "status", "Dunn", "WMAE", "estimationTime"]
    assert len(rows) == 7
    assert rows[1][4] == "NA" and rows[2][4] != "NA"
    for name in ("Dunn", "WMAE", "estimationTime"):
        ET.fromstring((out / f"metric_{name}.svg").read_text())
    manifest = json.loads((out / "models" / "manifest.json").read_text())
    assert len(manifest) == 6


def test_sweep_matches_library(tmp_path, small_csv):
    out = tmp_path / "s"
    assert main(["sweep", "--data", str(small_csv), *COLS, "--method", "lmkm", "--method", "gbtm",
                 "--clusters", "2,3", "--metrics", "WMAE,BIC,Dunn", "--seed", "9", "--out", str(out)]) == 0
    rows = read_rows(out / "metrics.csv")[1:]
    ds = load_long_csv(small_csv, "Patient", "Week", "UsageHours")
    base = {"id": "Patient", "time": "Week", "response": "UsageHours"}
    specs = [spec_new(m, base, nClusters=k) for m in ("lmkm", "gbtm") for k in (2, 3)]
    models = run_batch(specs, ds, seed=9)
    for row, m in zip(rows, models):
        vals = internal_metric(m, ["WMAE", "BIC", "Dunn"])
        expected = ["NA" if np.isnan(v) else repr(v) for v in vals.values()]
        assert row[:3] == [m.method_name, str(m.K), str(m.seed)]
        assert row[4:] == expected


def test_single_fit_sweep(tmp_path, small_csv):
    out = tmp_path / "one"
    assert main(["sweep", "--data", str(small_csv), *COLS, "--clusters", "2", "--out", str(out)]) == 0
    assert len(read_rows(out / "metrics.csv")) == 2


@pytest.fixture(scope="module")
def fitted(tmp_path_factory, pap_csv):
    root = tmp_path_factory.mktemp("models")
    paths = {}
    for name, method, k, extra in [
        ("kml", "kml", 5, []),
        ("dtw", "kmedoids", 5, ["--arg", "distance=dtw"]),
        ("lmkm", "lmkm", 3, []),
        ("gbtm", "gbtm", 3, []),
        ("gmm", "gmm", 3, []),
    ]:
        d = root / name
        assert main(["fit", "--data", str(pap_csv), *COLS, "--method", method, "--clusters", str(k),
                     "--out", str(d), *extra]) == 0
        paths[name] = d / "model.json"
    return paths


def test_compare_pairwise_and_truth(tmp_path, fitted, pap_csv):
    out = tmp_path / "cmp"
    paths = [str(fitted[n]) for n in ("kml", "dtw", "lmkm", "gbtm", "gmm")]
    assert main(["compare", *paths, "--metrics", "adjustedRand,splitJoin.ref", "--truth", str(pap_csv),
                 *COLS, "--out", str(out)]) == 0
    ari = read_rows(out / "pairwise_adjustedRand.csv")
    assert ari[0] == ["", "kml", "dtw", "lmkm", "gbtm"]
    assert [r[0] for r in ari[1:]] == ["dtw", "lmkm", "gbtm", "gmm"]
    # lower triangle: row i has i filled cells
    for i, r in enumerate(ari[1:], start=1):
        assert all(c != "" for c in r[1 : i + 1]) and all(c == "" for c in r[i + 1 :])
    ref = {r[0]: float(r[2]) for r in read_rows(out / "reference.csv")[1:]}
    for good in ("lmkm", "gbtm", "gmm"):
        assert ref[good] <= 15
        assert ref[good] < ref["kml"] and ref[good] < ref["dtw"]


def test_compare_self(tmp_path, fitted):
    out = tmp_path / "self"
    assert main(["compare", str(fitted["gmm"]), "--reference", str(fitted["gmm"]),
                 "--metrics", "adjustedRand,splitJoin", "--out", str(out)]) == 0
    assert read_rows(out / "reference.csv")[1] == ["gmm", "1.0", "0.0"]


def test_compare_incompatible_gives_na(tmp_path, fitted, small_csv, capsys):
    other = tmp_path / "other"
    assert main(["fit", "--data", str(small_csv), *COLS, "--clusters", "2", "--out", str(other)]) == 0
    out = tmp_path / "inc"
    assert main(["compare", str(fitted["kml"]), str(other / "model.json"), "--names", "a,b",
                 "--out", str(out)]) == 0
    assert read_rows(out / "pairwise_adjustedRand.csv")[1] == ["b", "NA"]
    assert "warning" in capsys.readouterr().err


def test_plot_groups(tmp_path, pap_csv):
    out = tmp_path / "traj.svg"
    assert main(["plot", "--data", str(pap_csv), *COLS, "--group", "Group", "--out", str(out)]) == 0
    lines = polylines(out.read_text())
    assert len(lines) == 301
    assert {p.get("data-label") for p in lines} == {"Adherent", "Non-adherent", "Improvers"}
    assert len({p.get("stroke") for p in lines}) == 3


def test_plot_cluster_trajectories_match_model(tmp_path, fitted):
    out = tmp_path / "ct.svg"
    assert main(["plot", "--model", str(fitted["gbtm"]), "--mode", "cluster-trajectories", "--out", str(out)]) == 0
    lines = polylines(out.read_text())
    model = ClusterModel.from_dict(json.loads(fitted["gbtm"].read_text()))
    expected = model.cluster_trajectories()
    assert len(lines) == model.K
    for k, p in enumerate(lines):
        x = np.array(p.get("data-x").split(), dtype=float)
        y = np.array(p.get("data-y").split(), dtype=float)
        np.testing.assert_array_equal(x, model.grid)
        np.testing.assert_array_equal(y, expected[k])
    again = tmp_path / "again.svg"
    assert main(["plot", "--model", str(fitted["gbtm"]), "--mode", "cluster-trajectories", "--out", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_plot_single_cluster(tmp_path, small_csv):
    d = tmp_path / "k1"
    assert main(["fit", "--data", str(small_csv), *COLS, "--clusters", "1", "--out", str(d)]) == 0
    out = tmp_path / "k1.svg"
    assert main(["plot", "--model", str(d / "model.json"), "--mode", "cluster-trajectories", "--out", str(out)]) == 0
    assert len(polylines(out.read_text())) == 1


def test_boot_and_rep(tmp_path, small_csv, capsys):
    out = tmp_path / "boot"
    assert main(["boot", "--data", str(small_csv), *COLS, "--method", "stratify", "--arg", "stratify=mean > 4",
                 "--samples", "10", "--metrics", "WMAE,converged", "--out", str(out)]) == 0
    assert "converged: 1.0" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest) == 10 and all(m["status"] == "ok" and "recipe" in m for m in manifest)
    out = tmp_path / "rep"
    assert main(["rep", "--data", str(small_csv), *COLS, "--clusters", "3", "--reps", "5",
                 "--metrics", "WMAE,Dunn,ASW", "--out", str(out)]) == 0
    for row in read_rows(out / "summary.csv")[1:]:
        lo, med, mean, hi = map(float, row[1:5])
        assert lo <= med <= hi and lo <= mean <= hi


def test_validate(small_csv, capsys):
    assert main(["validate", "--data", str(small_csv), *COLS, "--method", "gmm", "--clusters", "1-3"]) == 0
    assert "ok: 60 trajectories" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "trajcluster", "simulate", "--n", "4", "--weeks", "2"],
                         capture_output=True, text=True, check=True)
    assert len(res.stdout.splitlines()) == 9
    res = subprocess.run([sys.executable, "-m", "trajcluster", "fit", "--data", str(tmp_path / "nope.csv")],
                         capture_output=True, text=True)
    assert res.returncode == 2
