import dataclasses
import json
import math

import numpy as np
import pytest

from conic_mp.atoms import FiniteDictionary, radius
from conic_mp.errors import InvalidLabels, MissingReferenceOptimum
from conic_mp.geometry import theoretical_beta
from conic_mp.harness import (
    ExperimentConfig,
    certificate_gap,
    cmd_bound_check,
    cmd_conewidth,
    cmd_garrote,
    cmd_nmf,
    cmd_synthetic,
    cmd_tightness,
    reference_optimum,
    run_solver,
    synthetic_instance,
    theta_family,
    trace_rho,
)
from conic_mp.objectives import least_squares
from conic_mp.solvers import SolverConfig, StepRecord, StepType, Trace, read_trace_csv


def _small_synthetic(seed=0):
    return synthetic_instance(seed, d=6, n_atoms=12)


def test_config_from_dict_and_json(tmp_path):
    cfg = ExperimentConfig.from_dict({"seeds": [1, 2], "note": "x", "params": {"a": 1}})
    assert cfg.seeds == [1, 2] and cfg.params == {"note": "x", "a": 1}
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "nmf", "max_iters": 7, "out_dir": str(tmp_path / "o")}))
    cfg = ExperimentConfig.from_json(p)
    assert cfg.max_iters == 7 and (tmp_path / "o").is_dir()
    assert cfg.solver_config(seed=3).seed == 3
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=[])
    with pytest.raises(ValueError):
        ExperimentConfig(solvers=["omp"])
    with pytest.raises(ValueError):
        run_solver("fw", least_squares([1.0]), FiniteDictionary([[1.0]]), SolverConfig())


def test_synthetic_instance_shape():
    aset, obj, meta = synthetic_instance(0)
    assert len(aset) == 101 and aset.dim == 50 and aset.contains_origin
    np.testing.assert_allclose(np.linalg.norm(aset.matrix[:100], axis=1), 1.0)
    assert np.all(aset.matrix >= 0)
    np.testing.assert_allclose(np.linalg.norm(obj.target), 5.0)
    assert meta["target_rule"]


def test_bound_check_sublinear_passes_and_rejects_sabotage():
    aset, obj, _ = _small_synthetic(1)
    f_star, x_star, prov = reference_optimum(obj, aset)
    tr = run_solver("nnmp", obj, aset, SolverConfig(max_iters=100, keep_history=True))
    rho = trace_rho(tr, aset, prov["weight_sum"], mode="weights")
    res = cmd_bound_check(tr, aset, obj, "Sublinear", f_star=f_star, rho=rho, reference=prov)
    assert res.passed and res.min_margin > 0 and res.checked_steps == len(tr.records)
    # blow up one late objective value above the bound
    t = len(tr.records) - 2
    bad = list(tr.records)
    bound = 4 * (2 * obj.L * rho ** 2 * radius(aset) ** 2 + tr.f_values[0] - f_star) / (t + 4)
    bad[t] = dataclasses.replace(bad[t], f_value=f_star + 2 * bound)
    res = cmd_bound_check(Trace(bad, tr.active, tr.metadata), aset, obj, "Sublinear", f_star=f_star, rho=rho)
    assert not res.passed and res.min_margin < 0
    d = res.to_dict()
    assert isinstance(d["margins"], list)


def test_bound_check_linear_and_sabotage():
    aset = theta_family(math.pi / 2)
    obj = least_squares([-1.0, 1.0])
    beta = theoretical_beta(aset, obj.L, obj.mu)
    tr = run_solver("pwmp", obj, aset, SolverConfig(max_iters=50))
    res = cmd_bound_check(tr, aset, obj, "Linear", f_star=0.0, beta=beta)
    assert res.passed
    recs = [StepRecord(0, 1.0, StepType.REGULAR, good_step=True), StepRecord(1, 0.99, StepType.TERMINATED)]
    res = cmd_bound_check(Trace(recs, tr.active, {"solver": "pwmp"}), aset, obj, "Linear", f_star=0.0, beta=0.5)
    assert not res.passed
    res = cmd_bound_check(Trace(recs, tr.active, {"solver": "amp"}), aset, obj, "Linear", f_star=0.0, beta=0.5)
    assert res.beta == 0.25


def test_bound_check_vacuous_and_errors():
    aset = theta_family(math.pi / 2)
    obj = least_squares([-1.0, 1.0])
    tr = run_solver("pwmp", obj, aset, SolverConfig(max_iters=0))
    assert len(tr.records) == 1
    assert cmd_bound_check(tr, aset, obj, "Linear", f_star=0.0, beta=0.1).passed
    assert cmd_bound_check(tr, aset, obj, "Sublinear", f_star=0.0, rho=1.0).passed
    with pytest.raises(MissingReferenceOptimum):
        cmd_bound_check(tr, aset, obj, "Sublinear", rho=1.0)
    with pytest.raises(ValueError):
        cmd_bound_check(tr, aset, obj, "Sublinear", f_star=0.0)
    with pytest.raises(ValueError):
        cmd_bound_check(tr, aset, obj, "Quadratic", f_star=0.0)


def test_trace_rho_modes_are_ordered():
    rng = np.random.default_rng(2)
    aset = FiniteDictionary(np.abs(rng.normal(size=(8, 4))) / 2)
    obj = least_squares(np.abs(rng.normal(size=4)))
    tr = run_solver("pwmp", obj, aset, SolverConfig(max_iters=30, keep_history=True))
    lo = trace_rho(tr, aset, mode="euclidean")
    mid = trace_rho(tr, aset, mode="gauge")
    hi = trace_rho(tr, aset, mode="weights")
    assert lo <= mid + 1e-12 and mid <= hi + 1e-12
    with pytest.raises(ValueError):
        trace_rho(run_solver("pwmp", obj, aset, SolverConfig(max_iters=3)), aset, mode="gauge")


def test_certificate_gap_small_after_termination():
    aset, obj, _ = _small_synthetic(3)
    tr = run_solver("fcmp1", obj, aset, SolverConfig(max_iters=500))
    assert tr.metadata["termination"] == "certificate"
    assert 0 <= certificate_gap(tr, obj, aset) < tr.metadata["tol"] * radius(aset)


def test_single_aligned_atom_converges_in_one_step():
    y = np.array([1.0, 2.0, 2.0])
    aset = FiniteDictionary([y / 3.0])
    obj = least_squares(y)
    for name in ("nnmp", "amp", "pwmp", "fcmp0", "fcmp1", "fw"):
        tr = run_solver(name, obj, aset, SolverConfig(max_iters=50), tau=30.0)
        assert tr.n_steps == 1, name
        assert tr.final_f <= 1e-20, name


def test_synthetic_outputs_reproducible(tmp_path):
    def run(out):
        cfg = ExperimentConfig(sizes={"d": 5, "n_atoms": 8}, seeds=[0, 1], max_iters=15,
                               out_dir=str(out), params={"reference_iters": 2000})
        return cmd_synthetic(cfg)

    res = run(tmp_path / "a")
    run(tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "synthetic_median_eps.csv" in files and len(files) == 13
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    r = res["runs"][0]
    back = read_trace_csv(tmp_path / "a" / f"synthetic_seed0_{r['solver']}.csv")
    assert back == r["trace"].records
    assert len(res["summary"]["median_eps"]["fcmp1"]) == 16


def test_tightness_examples(tmp_path):
    aset = theta_family(math.pi / 2)
    first = run_solver("pwmp", least_squares([-1.0, 1.0]), aset, SolverConfig(max_iters=1))
    np.testing.assert_allclose(first.active.atoms[0].vector, [-1.0, 0.0])
    cfg = ExperimentConfig(params={"thetas": [math.pi / 2], "targets": [[-1.0, 0.0]]}, out_dir=str(tmp_path))
    res = cmd_tightness(cfg)
    assert all(row["n_good"] == 0 for row in res["rows"])
    assert (tmp_path / "tightness.csv").is_file()
    cfg = ExperimentConfig(params={"thetas": [math.pi / 3, math.pi / 2], "n_targets": 4})
    res = cmd_tightness(cfg)
    assert all(row["ratio_max"] <= 1 + 1e-9 for row in res["rows"] if row["n_good"])
    assert all(c["result"].passed for c in res["checks"])


def _write_csv(path, X, y):
    path.write_text("".join(",".join(map(str, list(x) + [int(t)])) + "\n" for x, t in zip(X, y)))


def test_garrote_separable_toy(tmp_path):
    rng = np.random.default_rng(4)
    y = np.array([0, 1] * 10)
    X = np.column_stack([(2 * y - 1) * rng.uniform(1.0, 2.0, size=20), rng.normal(size=20)])
    p = tmp_path / "toy.csv"
    _write_csv(p, X, y)
    cfg = ExperimentConfig(params={"n_splits": 3}, out_dir=str(tmp_path))
    res = cmd_garrote(cfg, p)
    for name in ("nnmp", "pwmp", "fcmp1"):
        assert res["summary"][name]["train_median"] == 1.0
    assert (tmp_path / "garrote_summary.json").is_file()


def test_garrote_single_class(tmp_path):
    p = tmp_path / "one.csv"
    _write_csv(p, np.ones((6, 2)), np.ones(6))
    with pytest.raises(InvalidLabels):
        cmd_garrote(ExperimentConfig(params={"n_splits": 1}), p)


def test_nmf_rank_one_and_monotone(tmp_path):
    res = cmd_nmf(ExperimentConfig(sizes={"rank": 1}, params={"budget": 1}, solvers=["fcmp1"]))
    assert res["results"][0]["relative_residual"][-1] < 1e-6
    res = cmd_nmf(ExperimentConfig(params={"budget": 5}, out_dir=str(tmp_path)))
    for r in res["results"]:
        assert r["monotone"] and r["nonnegative"]
        assert np.all(np.diff(r["objective"]) <= 1e-12 * r["objective"][0])
    assert "CBCL_K10_FCMP" in res["reference_values"]
    assert (tmp_path / "nmf.csv").is_file()


def test_conewidth_command(tmp_path):
    out = cmd_conewidth(ExperimentConfig(params={"theta": math.pi / 3}, out_dir=str(tmp_path)))
    np.testing.assert_allclose(out["cone_width"]["value"], 0.5, atol=1e-9)
    assert json.loads((tmp_path / "conewidth.json").read_text())["cone_width"]["method"] == "Exact2D"
    out = cmd_conewidth(ExperimentConfig(params={"atoms": [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]]}))
    np.testing.assert_allclose(out["cone_width"]["value"], out["mdw"]["value"], atol=1e-9)
    with pytest.raises(ValueError):
        cmd_conewidth(ExperimentConfig())
