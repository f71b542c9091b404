import json
import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lbgraph.errors import AmbiguousClusterError, InvalidInputError, StageError
from lbgraph.harness import (CSV_COLUMNS, RunConfig, compare_spectrum, eigenspace_alignment, match_cluster,
                             ratio_limit, run_convergence_sweep, run_pipeline)
from lbgraph.manifold import Circle, exact_spectrum


def quiet(cfg, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_pipeline(cfg, **kw)


@pytest.fixture(scope="module")
def small_circle():
    cfg = RunConfig(model="circle", n_points=300, rho=0.3, samples=60_000, k=5, seed=4)
    return quiet(cfg)


def test_ratio_limit():
    assert ratio_limit(1) == 1 / 3
    assert ratio_limit(2) == 1 / 3 and ratio_limit(4) == 0.25


def test_config_validation():
    for bad in (dict(n_points=None), dict(n_points=10, epsilon=0.1), dict(rho=0.0), dict(k=0),
                dict(n_points=0), dict(model="klein")):
        with pytest.raises(InvalidInputError):
            RunConfig(**bad).validate()


def test_stage_seeds_distinct_and_stable():
    a = RunConfig(seed=3).stage_seeds()
    assert a == RunConfig(seed=3).stage_seeds()
    assert len(set(a.values())) == 4
    assert a != RunConfig(seed=4).stage_seeds()


def test_report_columns(small_circle):
    lines = small_circle.to_csv().splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS
    assert len(lines) == 1 + 5
    assert [r.k for r in small_circle.rows] == [1, 2, 3, 4, 5]
    assert small_circle.rows[0].lambda_exact == 0.0
    # k = 1 reports the absolute error against the zero eigenvalue
    assert small_circle.rows[0].rel_err == small_circle.rows[0].abs_err < 1e-8
    env = json.loads(small_circle.to_json())
    assert set(env) == {"params", "measure", "solver", "alignment", "warnings", "rows"}
    assert env["measure"]["feasible"]


def test_small_circle_accuracy(small_circle):
    exact = np.array([0, 1, 1, 4, 4])
    got = np.array([r.lambda_graph for r in small_circle.rows])
    assert_allclose(got[1:], exact[1:], rtol=0.1)


def test_constant_eigenvector_alignment(small_circle):
    a = small_circle.alignment[0]
    assert a.k == 1 and a.level == 0
    assert_allclose(a.score, 1.0, atol=1e-6)


def test_alignment_control_is_low(small_circle):
    art = small_circle.artifacts
    # deliberately wrong cluster for the k=2 eigenvector (true level 1, paired with level 3)
    wrong = eigenspace_alignment(art["model"], art["wnet"], art["spectrum"], [2], 0.3, art["epsilon"],
                                 2000, seed=1, levels={2: 3})
    right = eigenspace_alignment(art["model"], art["wnet"], art["spectrum"], [2], 0.3, art["epsilon"],
                                 2000, seed=1)
    assert wrong[0].score <= 0.3
    assert right[0].score >= 0.99


def test_alignment_validation(small_circle):
    art = small_circle.artifacts
    with pytest.raises(InvalidInputError):
        eigenspace_alignment(art["model"], art["wnet"], art["spectrum"], [6], 0.3, art["epsilon"])
    assert eigenspace_alignment(art["model"], art["wnet"], art["spectrum"], [], 0.3, art["epsilon"]) == []


def test_match_cluster():
    levels = exact_spectrum(Circle(), 6)
    assert match_cluster(levels, 0.9).eigenvalue == 1.0
    assert match_cluster(levels, 3.2).eigenvalue == 4.0
    with pytest.raises(AmbiguousClusterError) as info:
        match_cluster(levels, 0.5)
    assert set(info.value.candidates) == {0.0, 1.0}


def test_compare_pads_missing():
    rows = compare_spectrum(Circle(), [0.0, 1.1], 4)
    assert len(rows) == 4
    assert_allclose(rows[1].rel_err, 0.1)
    assert math.isnan(rows[2].lambda_graph) and math.isnan(rows[3].rel_err)


def test_single_vertex_run():
    with pytest.warns(RuntimeWarning):
        rep = run_pipeline(RunConfig(model="circle", n_points=1, rho=0.5, samples=2000, k=3))
    assert rep.params["N"] == 1
    assert rep.rows[0].lambda_graph == 0.0
    lines = rep.to_csv().splitlines()
    assert len(lines) == 4
    # rows beyond N keep their exact value and leave the graph fields blank
    assert lines[2].split(",")[2] == "" and lines[2].split(",")[1] == "1.0"


def test_reports_byte_identical(tmp_path):
    cfg = dict(model="torus", n_points=200, rho=0.3, samples=40_000, k=4, seed=11)
    a = quiet(RunConfig(out=str(tmp_path / "a"), **cfg))
    b = quiet(RunConfig(out=str(tmp_path / "b"), **cfg))
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "report.csv" in names and "spectrum.eigenvectors.bin" in names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_different_seeds_differ():
    a = quiet(RunConfig(model="circle", n_points=100, rho=0.4, samples=10_000, k=3, seed=1, align=False))
    b = quiet(RunConfig(model="circle", n_points=100, rho=0.4, samples=10_000, k=3, seed=2, align=False))
    assert a.rows[1].lambda_graph != b.rows[1].lambda_graph


def test_large_rho_is_noted():
    with pytest.warns(RuntimeWarning, match="injectivity"):
        run_pipeline(RunConfig(model="circle", n_points=60, rho=2.0, samples=6000, k=2, verify=False,
                               align=False))


def test_stage_error_label():
    # far too few samples for the net: some cell stays empty
    with pytest.raises(StageError) as info:
        quiet(RunConfig(model="sphere", n_points=500, rho=0.3, samples=600, k=2))
    assert info.value.stage == "weights"
    assert str(info.value).startswith("[weights]")


def test_sweep_single_rho():
    res = run_convergence_sweep(RunConfig(model="circle", samples=20_000), [0.4], 0.1, seeds=(0,), k_max=3)
    assert len(res.rows) == 1 and res.slopes is None
    assert res.ks == [2, 3]
    assert res.to_csv().splitlines()[0].startswith("rho,epsilon_target")


def test_sweep_rejects_bad_lists():
    base = RunConfig()
    for rhos in ([0.1, 0.2], [0.2, 0.2], []):
        with pytest.raises(InvalidInputError):
            run_convergence_sweep(base, rhos, 0.05)
    with pytest.raises(InvalidInputError):
        run_convergence_sweep(base, [0.2], 1.5)


def test_sweep_partial_on_failure():
    base = RunConfig(model="sphere", samples=800)
    with pytest.raises(StageError) as info:
        run_convergence_sweep(base, [1.0, 0.2], 0.3, seeds=(0,), k_max=2)
    assert info.value.partial is not None
    assert len(info.value.partial.rows) <= 1


@pytest.mark.slow
def test_sweep_torus_trend():
    base = RunConfig(model="torus", samples=300_000)
    res = run_convergence_sweep(base, [0.3, 0.15], 0.1, seeds=(0, 1), k_max=5)
    assert res.rows[1].max_rel_err < res.rows[0].max_rel_err
    assert res.slopes["max"] > 0
    json.loads(res.to_json())
