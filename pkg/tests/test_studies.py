import numpy as np
import pytest

from fcmschwarz.config import ConfigError, load_config, parse_config
from fcmschwarz.studies import StudyError, run_study

def test_single_solve_1d_manufactured():
    res = run_study(load_config("configs/poisson_1d.cfg"), "single_solve")
    assert len(res) == 1
    rep = res[0].report
    assert rep.converged and rep.energy_errors[-1] < 1e-8
    sc = res[0].scenario
    xs = np.linspace(0, 1, 21)[:, None]
    assert np.abs(sc.dofmap.evaluate(res[0].x, xs)[:, 0] - 0.5 * xs[:, 0] * (1 - xs[:, 0])).max() < 1e-6

def test_threshold_sweep_nnz_monotone():
    cfg = parse_config(open("configs/disc_elasticity.cfg").read().replace("counts = 8, 8", "counts = 4, 4"))
    res = run_study(cfg, "threshold_sweep")
    assert [r.extra["eta_bar"] for r in res] == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    nnz = [r.stats.nnz for r in res]
    assert all(a <= b for a, b in zip(nnz, nnz[1:]))
    assert len({r.label for r in res}) == len(res)

def test_partition_check_identical_iterations():
    text = open("configs/cube_cavity.cfg").read()
    text = text.replace("counts = 4, 4, 4", "counts = 2, 2, 2").replace("depth = 2", "depth = 1")
    text = text.replace("ball((0.5, 0.5, 0.5), 0.05)", "ball((0.5, 0.5, 0.5), 0.3)")
    cfg = parse_config(text)
    res = run_study(cfg, "partition_check")
    assert len({r.report.iterations for r in res}) == 1
    assert all(r.extra["max_diff_S"] == 0.0 for r in res)

def test_eta_and_conditioning_sweeps():
    cfg = load_config("configs/sliver_2d.cfg")
    cfg.study.eta_values = (1e-2, 1e-3)
    res = run_study(cfg, "conditioning_sweep")
    assert [r.extra["eta"] for r in res] == [1e-2, 1e-3]
    assert res[1].extra["kappa"] > res[0].extra["kappa"]
    assert res[1].extra["kappa_preconditioned"] < 1e3
    res = run_study(cfg, "eta_sweep")
    assert all(r.report.converged for r in res)

def test_refinement_sweep_reports_overlap():
    text = open("configs/cube_cavity.cfg").read()
    text = text.replace("counts = 4, 4, 4", "counts = 2, 2, 2").replace("depth_values = 0, 1, 2, 3", "depth_values = 0, 1")
    text = text.replace("p = 2", "p = 1").replace("0.05)", "0.3)")
    res = run_study(parse_config(text), "refinement_sweep")
    assert [r.label for r in res] == ["k=0/full_blocks", "k=0/truncated_blocks", "k=1/full_blocks", "k=1/truncated_blocks"]
    assert all(r.extra["max_overlap"] <= 8 for r in res if r.extra["kind"] == "truncated_blocks")

def test_errors_carry_study_label():
    cfg = load_config("configs/poisson_1d.cfg")
    with pytest.raises(ConfigError):
        run_study(cfg, "nonsense")
    cfg.mesh.counts = (50, 50)  # mismatched with lower/upper
    with pytest.raises(StudyError, match="single_solve"):
        run_study(cfg, "single_solve")
