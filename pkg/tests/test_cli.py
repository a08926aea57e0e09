from __future__ import annotations

import csv

import numpy as np
import pytest

from viewshed.cli import EXIT_CONFIG, EXIT_DIFFERENT, EXIT_IO, EXIT_OK, main
from viewshed.grid import (
    Grid,
    TerrainSpec,
    Visibility,
    generate,
    load_visibility,
    store_grid,
)


def _summary(out: str) -> dict[str, str]:
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line)


@pytest.fixture
def flat(tmp_path):
    p = tmp_path / "flat.asc"
    store_grid(generate(TerrainSpec("flat", 17, 17)), p)
    return p


@pytest.fixture
def rough(tmp_path):
    p = tmp_path / "g.asc"
    store_grid(generate(TerrainSpec("random_iid", 11, 13, seed=5, height=20)), p)
    return p


def test_flat_all_visible(flat, tmp_path, capsys):
    out = tmp_path / "v.asc"
    code = main(["--algorithm", "vis-iter", "--model", "gridlines", "--viewpoint", "8,8",
                 "--input", str(flat), "--output", str(out)])
    assert code == EXIT_OK
    s = _summary(capsys.readouterr().out)
    assert s["visible_count"] == "289"
    assert "runtime_ms" in s and "final_horizon_vertices" in s
    assert load_visibility(out).count(Visibility.VISIBLE) == 289


def test_model_rejected_for_cell_blocking(flat):
    assert main(["--algorithm", "radial-banded", "--model", "gridlines", "--viewpoint", "8,8",
                 "--input", str(flat)]) == EXIT_CONFIG


def test_compare_identical(rough, capsys):
    code = main(["--compare", "vis-iter,vis-dac,r3", "--model", "layers", "--input", str(rough),
                 "--viewpoint", "5,5"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert out.strip().splitlines()[-1] == "IDENTICAL"
    assert _summary(out)["disagreements"] == "0"


def test_compare_models_one_sided(rough, capsys):
    code = main(["--compare", "r3:gridlines,r3:layers", "--input", str(rough),
                 "--viewpoint", "4,7"])
    lines = capsys.readouterr().out.splitlines()
    assert code == EXIT_OK
    s = _summary("\n".join(lines))
    assert s["only_first"] == "0"
    assert lines[-1] in ("IDENTICAL", "WITHIN_TOLERANCE")


def test_compare_centrifugal_tolerance(rough, capsys):
    args = ["--compare", "centrifugal,vk-oracle", "--input", str(rough), "--viewpoint", "5,6"]
    base = main(args + ["--tolerance", "1.0"])
    assert base == EXIT_OK
    s = _summary(capsys.readouterr().out)
    if int(s["disagreements"]) > 0:
        assert main(args + ["--tolerance", "0"]) == EXIT_DIFFERENT


def test_compare_across_families_rejected(rough):
    assert main(["--compare", "r3,vk-oracle", "--input", str(rough),
                 "--viewpoint", "1,1"]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["--algorithm", "r3", "--viewpoint", "99,0"],
    ["--algorithm", "r3", "--viewpoint", "a,b"],
    ["--algorithm", "r3"],
    ["--algorithm", "nope", "--viewpoint", "1,1"],
    ["--viewpoint", "1,1"],
    ["--algorithm", "r3", "--viewpoint", "1,1", "--memory-budget", "0"],
    ["--algorithm", "r3", "--viewpoint", "1,1", "--simulate-io", "0,4"],
])
def test_config_errors(rough, argv):
    assert main(argv + ["--input", str(rough)]) == EXIT_CONFIG


def test_io_errors(tmp_path):
    assert main(["--algorithm", "r3", "--viewpoint", "1,1",
                 "--input", str(tmp_path / "missing.asc")]) == EXIT_IO
    bad = tmp_path / "bad.asc"
    bad.write_text("ncols 3\nnrows 2\n1 2\n")
    assert main(["--algorithm", "r3", "--viewpoint", "0,0", "--input", str(bad)]) == EXIT_IO


def test_stats_outputs(rough, tmp_path, capsys):
    hs, io, pgm = tmp_path / "h.csv", tmp_path / "io.csv", tmp_path / "v.pgm"
    code = main(["--algorithm", "vis-dac", "--viewpoint", "5,5", "--input", str(rough),
                 "--simulate-io", "16,4", "--horizon-stats", str(hs), "--io-stats", str(io),
                 "--pgm", str(pgm), "--height-offset", "2"])
    assert code == EXIT_OK
    assert int(_summary(capsys.readouterr().out)["block_loads"]) > 0
    assert next(csv.reader(hs.open()))[0] == "layer"
    assert len(list(csv.reader(io.open()))) >= 2
    assert pgm.read_bytes().startswith(b"P5")


def test_centrifugal_outputs(rough, tmp_path):
    order, slots = tmp_path / "order.csv", tmp_path / "slots.csv"
    assert main(["--algorithm", "centrifugal", "--viewpoint", "3,4", "--input", str(rough),
                 "--record-visit-order", str(order), "--slots-csv", str(slots)]) == EXIT_OK
    rows = list(csv.reader(order.open()))
    assert rows[0] == ["row", "col"] and rows[1] == ["3", "4"]
    assert len(rows) == 1 + 11 * 13
    assert next(csv.reader(slots.open())) == ["slot", "key"]


def test_deterministic_outputs(rough, tmp_path):
    paths = [tmp_path / "a.asc", tmp_path / "b.asc"]
    for p in paths:
        assert main(["--algorithm", "radial-sectored", "--viewpoint", "2,9",
                     "--input", str(rough), "--output", str(p)]) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_non_strict_occlusion_only_for_r3(rough):
    base = ["--viewpoint", "2,2", "--input", str(rough), "--no-strict-occlusion"]
    assert main(["--algorithm", "r3"] + base) == EXIT_OK
    assert main(["--algorithm", "vis-iter"] + base) == EXIT_CONFIG
