import json

import numpy as np
import pytest

from voxelseg.cli import main
from voxelseg.volume import VoxelVolume, load_volume, save_volume


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("ph")
    assert main(["phantom", "gen", "--seed", "7", "--teeth", "3", "--with-offsets", "--out", str(d)]) == 0
    return d


def test_phantom_gen_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert _run(capsys, "phantom", "gen", "--seed", "7", "--teeth", "3", "--out", str(tmp_path / name))[0] == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    assert {"image.vjson", "image.raw", "labels.vjson", "labels.raw", "centroids.json", "adjacency.json"} <= set(a)


def test_sdt_then_eval(phantom_dir, tmp_path, capsys):
    lab = load_volume(phantom_dir / "labels")
    mask = lab.with_data((lab.data == 1).astype(np.uint16))
    save_volume(mask, tmp_path / "mask")
    assert _run(capsys, "sdt", "--in", str(tmp_path / "mask"), "--out", str(tmp_path / "sdm"))[0] == 0
    sdm = load_volume(tmp_path / "sdm")
    assert sdm.kind == "distance" and np.all((sdm.data <= 0) == (mask.data == 1))
    code, out, _ = _run(capsys, "eval", "--pred", str(tmp_path / "mask"), "--gt", str(tmp_path / "mask"),
                        "--json", str(tmp_path / "r.json"), "--csv", str(tmp_path / "r.csv"))
    assert code == 0 and "1.0000 / 1.0000 / 0.0000 / 0.0000" in out
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["instances"][0]["dice"] == 1.0 and rep["instances"][0]["hd_mm"] == 0.0
    assert (tmp_path / "r.csv").read_text().startswith("gt_id,pred_id")


def test_sdt_does_not_touch_input(phantom_dir, tmp_path, capsys):
    before = _files(phantom_dir)
    _run(capsys, "sdt", "--in", str(phantom_dir / "labels"), "--label", "2", "--out", str(tmp_path / "s"))
    assert _files(phantom_dir) == before


def test_cluster_and_assign(phantom_dir, tmp_path, capsys):
    code, out, _ = _run(capsys, "cluster", "--offsets", str(phantom_dir / "offsets"), "--mask",
                        str(phantom_dir / "labels"), "--out", str(tmp_path / "c.json"))
    assert code == 0 and out.startswith("3 centroids")
    cents = json.loads((tmp_path / "c.json").read_text())
    assert len(cents) == 3 and set(cents[0]) == {"pos_mm", "rho", "delta_mm"}
    assert _run(capsys, "assign", "--mask", str(phantom_dir / "labels"), "--centroids", str(tmp_path / "c.json"),
                "--out", str(tmp_path / "inst"))[0] == 0
    code, out, _ = _run(capsys, "eval", "--pred", str(tmp_path / "inst"), "--gt", str(phantom_dir / "labels"))
    assert "1.0000 / 1.0000 / 0.0000 / 0.0000" in out


def test_losscheck(tmp_path, capsys):
    code, out, _ = _run(capsys, "losscheck", "--trials", "4", "--seed", "1", "--out", str(tmp_path / "l.json"))
    assert code == 0
    rep = json.loads((tmp_path / "l.json").read_text())
    assert json.loads(out) == rep
    assert all(v["max_rel_err"] < 1e-4 for v in rep["losses"].values())


def test_pipeline_run_threads(phantom_dir, tmp_path, capsys):
    for t in ("1", "4"):
        code, out, _ = _run(capsys, "--threads", t, "pipeline", "run", "--case", str(phantom_dir),
                            "--mode", "noisy(0.3)", "--seed", "2", "--out", str(tmp_path / t))
        assert code == 0
    assert _files(tmp_path / "1") == _files(tmp_path / "4")
    rep = json.loads((tmp_path / "1" / "report.json").read_text())
    assert rep["variant"] == "CMS" and rep["conflicts"] == 0


def test_pipeline_toggle_flags(phantom_dir, tmp_path, capsys):
    code, out, _ = _run(capsys, "pipeline", "run", "--case", str(phantom_dir), "--variant", "CMS", "--no-shape",
                        "--out", str(tmp_path / "p"))
    assert code == 0 and out.startswith("CM:")


def test_ablate_small(tmp_path, capsys):
    code, out, _ = _run(capsys, "ablate", "--cases", "1", "--teeth", "4", "--out", str(tmp_path / "a.json"))
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("Model") and [ln.split()[0] for ln in lines[1:]] == ["B", "C", "CM", "CMS"]
    rows = json.loads((tmp_path / "a.json").read_text())["rows"]
    assert rows[-1]["conflicts"] == 0


def test_exit_codes(tmp_path, capsys):
    code, _, err = _run(capsys, "nope")
    assert code == 2 and json.loads(err)["error"] == "UsageError"
    code, _, err = _run(capsys, "eval", "--pred", str(tmp_path / "x"), "--gt", str(tmp_path / "y"))
    assert code == 3 and json.loads(err)["error"] == "IoError"
    code, _, err = _run(capsys, "phantom", "gen", "--teeth", "14", "--gap", "3", "--out", str(tmp_path / "o"))
    assert code == 4 and json.loads(err)["error"] == "ConfigOverlap"
    save_volume(VoxelVolume(np.zeros((3, 3, 3), np.uint16), kind="label"), tmp_path / "z")
    code, _, err = _run(capsys, "sdt", "--in", str(tmp_path / "z"), "--out", str(tmp_path / "s"))
    assert code == 4 and json.loads(err)["error"] == "EmptyMask"


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("VOXELSEG_THREADS", "zero")
    code, _, err = _run(capsys, "losscheck", "--trials", "1")
    assert code == 2
    monkeypatch.setenv("VOXELSEG_THREADS", "2")
    assert _run(capsys, "losscheck", "--trials", "1")[0] == 0
