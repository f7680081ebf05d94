import csv

import numpy as np
import pytest
import scipy.sparse as sp

from fcmschwarz.config import load_config, parse_config
from fcmschwarz.geometry import ConfigurationError
from fcmschwarz.io import (
    CONVERGENCE_HEADER, read_matrix, write_blocks, write_convergence, write_matrix, write_outputs,
    write_vector, write_vtk,
)
from fcmschwarz.studies import StudyResult, run_study
from fcmschwarz.blocks import truncated_blocks
from fcmschwarz.voxels import read_raster, read_raster_data, synthetic_pores, write_raster


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_empty_results_header_only(tmp_path):
    p = tmp_path / "c.csv"
    write_convergence(p, "single_solve", [])
    assert _rows(p) == [list(CONVERGENCE_HEADER)]


def test_three_iteration_solve_rows(tmp_path):
    from fcmschwarz.krylov import pcg

    A = np.diag([1.0, 2.0, 3.0])
    _, rep = pcg(A, np.ones(3), np.eye(3), tol=1e-14)
    assert rep.iterations == 3
    p = tmp_path / "c.csv"
    write_convergence(p, "s", [StudyResult("x", rep)])
    rows = _rows(p)[1:]
    # one row per recorded residual: the initial one plus three iterations
    assert [int(r[2]) for r in rows] == [0, 1, 2, 3] and len([r for r in rows if r[2] != "0"]) == 3


def test_matrix_market_round_trip(tmp_path):
    cfg = load_config("configs/sliver_2d.cfg")
    from fcmschwarz.studies import prepare

    sc = prepare(cfg, eta=1e-3)
    A = sc.system.A
    write_matrix(tmp_path / "A.mtx", A)
    write_vector(tmp_path / "b.mtx", sc.system.b)
    B = read_matrix(tmp_path / "A.mtx")
    assert (B != A).nnz == 0
    assert np.array_equal(read_matrix(tmp_path / "b.mtx").ravel(), sc.system.b)
    head = open(tmp_path / "A.mtx").readline()
    assert head.startswith("%%MatrixMarket matrix coordinate real symmetric")


def test_general_matrix_written_general(tmp_path):
    M = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 3.0]]))
    write_matrix(tmp_path / "M.mtx", M)
    assert "general" in open(tmp_path / "M.mtx").readline()
    assert (read_matrix(tmp_path / "M.mtx") != M).nnz == 0


def test_block_sidecar(tmp_path):
    from fcmschwarz.studies import prepare

    sc = prepare(load_config("configs/poisson_1d.cfg"))
    bs = truncated_blocks(sc.dofmap)
    write_blocks(tmp_path / "blocks.csv", bs)
    rows = _rows(tmp_path / "blocks.csv")[1:]
    assert len(rows) == len(bs)
    assert [list(map(int, r[4].split())) for r in rows] == [b.indices.tolist() for b in bs]


def test_outputs_byte_identical(tmp_path):
    cfg = load_config("configs/poisson_1d.cfg")
    cfg.outputs.formats = ("csv", "mtx", "vtk")
    blobs = []
    for run in ("a", "b"):
        paths = write_outputs(run_study(cfg, "single_solve"), cfg, "single_solve", tmp_path / run)
        blobs.append({k: open(p, "rb").read() for k, p in paths.items()})
    assert blobs[0] == blobs[1]
    assert set(blobs[0]) >= {"convergence", "stats", "mesh", "A", "b", "S", "vtk"}


def test_vtk_fields_finite(tmp_path):
    cfg = parse_config(open("configs/disc_elasticity.cfg").read().replace("counts = 8, 8", "counts = 4, 4"))
    res = run_study(cfg, "single_solve")[-1]
    write_vtk(tmp_path / "s.vtk", res.scenario, res.x)
    text = open(tmp_path / "s.vtk").read()
    assert text.startswith("# vtk DataFile Version 3.0")
    n_cells = len(res.scenario.dofmap.supports)
    assert f"CELLS {n_cells} {n_cells * 5}" in text
    vm = text.split("SCALARS von_mises double 1\nLOOKUP_TABLE default\n")[1].split()
    assert len(vm) == n_cells and np.all(np.isfinite(np.array(vm, dtype=float)))


def test_voxel_round_trip(tmp_path):
    occ = synthetic_pores((8, 6, 4), 2, (1.0, 2.0), seed=3)
    write_raster(tmp_path / "v.raw", occ, (2, 2, 2))
    back, grouping = read_raster_data(tmp_path / "v.raw")
    assert np.array_equal(back, occ) and grouping == (2, 2, 2)
    shape = read_raster(tmp_path / "v.raw")
    centers = np.argwhere(np.ones_like(occ)) + 0.5
    assert np.array_equal(shape.contains(centers), occ.ravel())
    (tmp_path / "bad.raw").write_bytes(b"2 2 2 1 1 1\n\x01")
    with pytest.raises(ConfigurationError):
        read_raster_data(tmp_path / "bad.raw")
