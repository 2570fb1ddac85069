import json

import numpy as np
import pytest

from isochr import load_raw
from isochr.cli import main
from reference_mc import read_obj


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    raw = root / "sphere.raw"
    assert (
        main(
            [
                "gen", "--kind", "sphere", "--dims", "24,24,24", "--radius", "8",
                "--dtype", "f64", "--out", str(raw),
            ]
        )
        == 0
    )
    chrf = root / "sphere.chr"
    assert (
        main(
            [
                "compress", "--in", str(raw), "--dims", "24,24,24", "--dtype", "f64",
                "--isovalues", "0", "--accuracy", "1.0", "--block-size", "8",
                "--out", str(chrf),
            ]
        )
        == 0
    )
    return root, raw, chrf


def test_gen_writes_loadable_volume(workspace):
    root, raw, _ = workspace
    vol = load_raw(raw, (24, 24, 24), dtype="f64")
    assert vol.value_range[0] < 0 < vol.value_range[1]


def test_gen_random_deterministic(tmp_path):
    a, b = tmp_path / "a.raw", tmp_path / "b.raw"
    for out in (a, b):
        main(["gen", "--kind", "random", "--dims", "8,8,8", "--seed", "3", "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()


def test_plan_prints_stats(workspace, capsys):
    _, raw, _ = workspace
    assert (
        main(
            [
                "plan", "--in", str(raw), "--dims", "24,24,24", "--dtype", "f64",
                "--block-size", "8", "--isovalues", "0",
            ]
        )
        == 0
    )
    out = capsys.readouterr().out
    assert "blocks: 27" in out
    assert "regions after merge" in out


def test_inspect_shows_header(workspace, capsys):
    _, _, chrf = workspace
    assert main(["inspect", str(chrf)]) == 0
    out = capsys.readouterr().out
    assert "dims (24, 24, 24)" in out
    assert "candidates: 0" in out


def test_extract_writes_obj_and_report(workspace, capsys):
    root, _, chrf = workspace
    obj = root / "mesh.obj"
    rep = root / "report.json"
    assert (
        main(
            [
                "extract", "--chr", str(chrf), "--isovalue", "0",
                "--out", str(obj), "--report", str(rep),
            ]
        )
        == 0
    )
    verts, faces = read_obj(obj)
    assert verts.shape[0] > 0 and faces.shape[0] > 0
    report = json.loads(rep.read_text())
    assert report["isovalue"] == 0.0
    assert report["bytes_touched"] <= report["bytes_total"]
    assert report["triangles"] == faces.shape[0]


def test_extract_snap(workspace, capsys):
    root, _, chrf = workspace
    obj = root / "snap.obj"
    assert (
        main(["extract", "--chr", str(chrf), "--isovalue", "0.01", "--snap", "--out", str(obj)])
        == 0
    )
    assert "isovalue 0" in capsys.readouterr().out


def test_verify_reports_full_preservation(workspace, capsys):
    _, raw, chrf = workspace
    rc = main(
        ["verify", "--orig", str(raw), "--dtype", "f64", "--chr", str(chrf), "--isovalue", "0"]
    )
    out = capsys.readouterr().out
    assert rc == 0
    assert "preserved_fraction: 1.000000000" in out


def test_bench_flags_imperfect_rows(workspace, capsys, tmp_path):
    _, raw, _ = workspace
    out_json = tmp_path / "bench.json"
    rc = main(
        [
            "bench", "--in", str(raw), "--dims", "24,24,24", "--dtype", "f64",
            "--isovalues", "0", "--accuracies", "1.0,0.8", "--block-sizes", "8",
            "--repeats", "1", "--format", "json", "--out", str(out_json),
        ]
    )
    assert rc == 0
    printed = capsys.readouterr().out
    rows = json.loads(out_json.read_text())
    assert len(rows) == 2
    imperfect = [r for r in rows if r["preserved_fraction"] < 1.0]
    for r in imperfect:
        assert f"accuracy {r['accuracy']}" in printed
    assert all(r["preserved_fraction"] == 1.0 for r in rows if r["accuracy"] == 1.0)


def test_bench_kernels_smoke(capsys):
    assert main(["bench-kernels", "--size", "12", "--repeats", "1"]) == 0
    out = capsys.readouterr().out
    assert "marching_cubes" in out
    assert "meshes identical across paths: True" in out


def test_compress_rejects_out_of_range(workspace, tmp_path):
    _, raw, _ = workspace
    with pytest.raises(Exception):
        main(
            [
                "compress", "--in", str(raw), "--dims", "24,24,24", "--dtype", "f64",
                "--isovalues", "1000", "--out", str(tmp_path / "x.chr"),
            ]
        )
