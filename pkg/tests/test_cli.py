"""Command-line interface: exit codes, outputs, config precedence."""

import json

import numpy as np
import pytest

from platevem.cli import build_parser, main
from platevem.mesh import read_mesh


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.strip()


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["example1", "--banana"])
    assert info.value.code == 2


def test_mesh_generate_validate_convert_round_trip(tmp_path):
    mesh_path = tmp_path / "grid.json"
    assert main(["mesh", "generate", "--family", "square", "--n", "4",
                 "-o", str(mesh_path)]) == 0
    assert main(["mesh", "validate", str(mesh_path)]) == 0

    vtk_path = tmp_path / "grid.vtk"
    assert main(["mesh", "convert", str(mesh_path), str(vtk_path)]) == 0
    assert vtk_path.read_text().splitlines()[0].startswith("# vtk")

    back_path = tmp_path / "back.json"
    assert main(["mesh", "convert", str(mesh_path), str(back_path)]) == 0
    a, b = read_mesh(mesh_path), read_mesh(back_path)
    assert np.allclose(a.vertices, b.vertices)


def test_mesh_generate_bridge_tagger(tmp_path):
    mesh_path = tmp_path / "bridge.json"
    assert main(["mesh", "generate", "--family", "square", "--n", "4",
                 "--bounds", "0,-0.1,3.14159,0.1", "--tagger", "bridge",
                 "-o", str(mesh_path)]) == 0
    mesh = read_mesh(mesh_path)
    tags = {tag for _, _, tag in mesh.boundary_edges()}
    assert tags == {"simply_supported", "free"}


def test_mesh_validate_gamma_enforcement(tmp_path):
    mesh_path = tmp_path / "grid.json"
    main(["mesh", "generate", "--family", "square", "--n", "4",
          "-o", str(mesh_path)])
    assert main(["mesh", "validate", str(mesh_path), "--gamma", "0.3"]) == 0
    assert main(["mesh", "validate", str(mesh_path), "--gamma", "0.99"]) == 1


def test_mesh_validate_rejects_malformed_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": [[0, 0]], "cells": []}')
    assert main(["mesh", "validate", str(bad)]) == 1


def test_mesh_convert_rejects_unknown_extension(tmp_path):
    mesh_path = tmp_path / "grid.json"
    main(["mesh", "generate", "--family", "square", "--n", "2",
          "-o", str(mesh_path)])
    assert main(["mesh", "convert", str(mesh_path),
                 str(tmp_path / "grid.stl")]) == 2


def test_example1_writes_table_figure_manifest(tmp_path):
    out = tmp_path / "run"
    assert main(["example1", "--levels", "2", "--base", "3",
                 "--no-conditioning", "--out-dir", str(out)]) == 0
    csv_path = out / "convergence.csv"
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "h,ndof,err_h2,err_rel,eoc,newton_max,cond_estimate"
    assert len(lines) == 3  # two doubling levels from base 3
    assert (out / "convergence.png").stat().st_size > 0

    manifest = json.loads((out / "run-manifest.json").read_text())
    assert manifest["command"] == "example1"
    assert manifest["parameters"]["levels"] == [3, 6]
    assert manifest["wall_time_seconds"] >= 0
    assert len(manifest["outputs"]) == 2


def test_example2_writes_energy_trace(tmp_path):
    out = tmp_path / "run"
    assert main(["example2", "--n", "6", "--dt", "0.01", "--T", "0.05",
                 "--out-dir", str(out)]) == 0
    lines = (out / "energy.csv").read_text().strip().splitlines()
    assert lines[0] == "step,time,energy,xi,newton_iters"
    assert len(lines) == 6  # exactly T/dt recorded steps
    traj_lines = (out / "trajectory.csv").read_text().strip().splitlines()
    assert traj_lines[0].startswith("step,time,newton_iters")
    assert (out / "energy.png").stat().st_size > 0
    manifest = json.loads((out / "run-manifest.json").read_text())
    assert manifest["parameters"]["damping"] == "strip"


def test_convergence_temporal_mode(tmp_path):
    out = tmp_path / "run"
    assert main(["convergence", "--mode", "temporal", "--n", "4",
                 "--dts", "0.1,0.05", "--dt-ref", "0.0125",
                 "--out-dir", str(out)]) == 0
    lines = (out / "temporal.csv").read_text().strip().splitlines()
    assert lines[0] == "dt,err_m,eoc"
    assert len(lines) == 3
    assert (out / "temporal.png").stat().st_size > 0


def test_convergence_spatial_mode_matches_example1(tmp_path):
    out = tmp_path / "run"
    assert main(["convergence", "--mode", "spatial", "--levels", "2",
                 "--base", "3", "--no-conditioning",
                 "--out-dir", str(out)]) == 0
    assert (out / "convergence.csv").exists()
    manifest = json.loads((out / "run-manifest.json").read_text())
    assert manifest["command"] == "convergence"


def test_report_jacobian_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["report-jacobian", "--levels", "2", "--base", "4",
                 "--out-dir", str(out)]) == 0
    lines = (out / "jacobian.csv").read_text().strip().splitlines()
    assert lines[0] == "h,ndof,nnz_bordered,nnz_full,ratio,cond_estimate"
    assert len(lines) == 3
    ratios = [float(ln.split(",")[4]) for ln in lines[1:]]
    assert all(r < 1.0 for r in ratios)  # border stays sparser than fill-in
    assert (out / "jacobian-sparsity.png").stat().st_size > 0
    assert (out / "condition-growth.png").stat().st_size > 0


def test_config_file_supplies_defaults_and_flags_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[physics]\nsigma = 0.4\nP = 2e-3\n\n[time]\nT = 0.25\n\n"
        "[output]\ndirectory = {out}\n".format(out=tmp_path / "from-config"))
    assert main(["example1", "--config", str(cfg), "--levels", "2",
                 "--base", "3", "--no-conditioning",
                 "--sigma", "0.25"]) == 0
    manifest = json.loads(
        (tmp_path / "from-config" / "run-manifest.json").read_text())
    assert manifest["parameters"]["sigma"] == 0.25  # flag wins
    assert manifest["parameters"]["P"] == 2e-3  # config beats default
    assert manifest["parameters"]["T"] == 0.25


def test_bad_config_is_a_configuration_error(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[physics]\nviscosity = 1\n")
    assert main(["example1", "--config", str(cfg)]) == 2
    missing = tmp_path / "nope.ini"
    assert main(["example1", "--config", str(missing)]) == 2


def test_invalid_physics_value_fails_at_runtime(tmp_path):
    out = tmp_path / "run"
    assert main(["example1", "--levels", "2", "--base", "3",
                 "--sigma", "1.5", "--out-dir", str(out)]) == 1


def test_parser_exposes_documented_subcommands():
    parser = build_parser()
    text = parser.format_help()
    for name in ("mesh", "example1", "example2", "convergence",
                 "report-jacobian"):
        assert name in text
