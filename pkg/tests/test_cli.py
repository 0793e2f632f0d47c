"""End-to-end tests of the command-line front end: problem-file
dispatch, config precedence, artifact layout, exit codes, and the
environment thread cap."""
from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bottleneck_lab.annealing import log_grid, trace_from_csv
from bottleneck_lab.cli import (
    ValidationError,
    build_parser,
    load_problem,
    main,
    parse_beta_grid,
    resolve_config,
)
from bottleneck_lab.datasets import BINARY_OVERLAP5_PY0, make_class_mixture
from bottleneck_lab.expfamily import ExpFamilyModel
from bottleneck_lab.prediction import ClassificationProblem
from bottleneck_lab.probability import JointDistribution
from bottleneck_lab.solvers import DEFAULT_TOL

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"
RULE_FIXTURE = PROBLEMS / "binary_overlap5.json"
CLASSES_FIXTURE = PROBLEMS / "class_mixture8.json"

# frozen first-transition locations of the shipped demo problem (oracle:
# bisection residuals ~1e-10 in the stability suite)
FIRST_CRITICAL = {"ib": 4.443238126, "dual": 3.336990631}


def write_json(path: Path, payload) -> str:
    path.write_text(json.dumps(payload))
    return str(path)


def resolve(argv):
    return resolve_config(build_parser().parse_args(argv))


class TestBetaGrid:
    def test_log_spec(self):
        assert_array_equal(parse_beta_grid("log:0.5:8:40"),
                           log_grid(0.5, 8.0, 40))

    def test_linear_spec(self):
        assert_array_equal(parse_beta_grid("linear:1:3:5"),
                           np.linspace(1.0, 3.0, 5))

    @pytest.mark.parametrize("spec", [
        "geom:1:2:5", "log:1:2", "log:a:2:5", "log:0:2:5", "log:2:1:5",
        "log:1:2:1", "linear:-1:2:5",
    ])
    def test_rejects_malformed_specs(self, spec):
        with pytest.raises(ValidationError, match="beta-grid"):
            parse_beta_grid(spec)


class TestLoadProblem:
    def test_shipped_rule_fixture(self):
        problem = load_problem(RULE_FIXTURE)
        assert isinstance(problem, JointDistribution)
        assert_array_equal(problem.p_x, np.full(5, 0.2))
        # smoothing_epsilon is 0 in the file, so the rows are exact
        assert_array_equal(problem.rule[:, 0], BINARY_OVERLAP5_PY0)

    def test_shipped_classes_fixture(self):
        problem = load_problem(CLASSES_FIXTURE)
        assert isinstance(problem, ClassificationProblem)
        assert problem.n_classes == 8
        assert problem.n_x == 16
        assert_allclose(problem.class_conditionals, make_class_mixture(),
                        rtol=0, atol=1e-15)

    def test_optional_marginal_and_renormalization(self, tmp_path):
        rule = [[0.4, 0.6], [0.7, 0.3], [0.5, 0.5]]
        plain = load_problem(write_json(tmp_path / "a.json",
                                        {"p_y_given_x": rule}))
        assert_allclose(plain.p_x, np.full(3, 1 / 3))
        # a 5e-7 normalization slip is within the 1e-6 gate and repaired
        skew = load_problem(write_json(
            tmp_path / "b.json",
            {"p_y_given_x": rule, "p_x": [0.2 + 5e-7, 0.3, 0.5]}))
        assert_allclose(skew.p_x.sum(), 1.0, atol=1e-15)

    def test_smoothing_is_honored(self, tmp_path):
        rule = [[1.0, 0.0], [0.4, 0.6]]
        smoothed = load_problem(write_json(
            tmp_path / "s.json",
            {"p_y_given_x": rule, "smoothing_epsilon": 1e-6}))
        assert 0.0 < smoothed.rule.min() < 1e-6
        with pytest.raises(ValidationError, match="zero cells"):
            load_problem(write_json(
                tmp_path / "z.json",
                {"p_y_given_x": rule, "smoothing_epsilon": 0.0}))

    def test_exp_family_schema(self, tmp_path):
        base = load_problem(RULE_FIXTURE)
        fitted = ExpFamilyModel.from_conditional(base)
        path = write_json(tmp_path / "m.json", {"exp_family": {
            "features": fitted.features.tolist(),
            "params": fitted.params.tolist(),
        }})
        model = load_problem(path)
        assert isinstance(model, ExpFamilyModel)
        assert model.features.shape == fitted.features.shape
        assert_allclose(model.p_x, np.full(5, 0.2))

    def test_exp_family_rejections(self, tmp_path):
        with pytest.raises(ValidationError, match="params is required"):
            load_problem(write_json(tmp_path / "a.json",
                                    {"exp_family": {"features": [[1.0]]}}))
        with pytest.raises(ValidationError, match="not finite"):
            load_problem(write_json(tmp_path / "b.json", {"exp_family": {
                "features": [[float("nan")]], "params": [[1.0]]}}))
        with pytest.raises(ValidationError, match="dimension"):
            load_problem(write_json(tmp_path / "c.json", {"exp_family": {
                "features": [[1.0, 2.0]], "params": [[1.0]]}}))

    def test_field_path_rejections(self, tmp_path):
        with pytest.raises(ValidationError, match=r"p_y_given_x\[1\]\[0\]"):
            load_problem(write_json(tmp_path / "neg.json", {
                "p_y_given_x": [[0.5, 0.5], [-0.1, 1.1]]}))
        with pytest.raises(ValidationError, match=r"p_y_given_x\[0\] sums"):
            load_problem(write_json(tmp_path / "sum.json", {
                "p_y_given_x": [[0.5, 0.501], [0.5, 0.5]]}))
        with pytest.raises(ValidationError, match="rectangular"):
            load_problem(write_json(tmp_path / "rag.json", {
                "p_y_given_x": [[0.5, 0.5], [1.0]]}))
        with pytest.raises(ValidationError, match=r"prior\[1\]"):
            load_problem(write_json(tmp_path / "pri.json", {
                "class_conditionals": [[0.5, 0.5], [0.4, 0.6]],
                "prior": [1.2, -0.2]}))

    def test_schema_dispatch_rejections(self, tmp_path):
        with pytest.raises(ValidationError, match="ambiguous"):
            load_problem(write_json(tmp_path / "both.json", {
                "p_y_given_x": [[0.5, 0.5], [0.4, 0.6]],
                "exp_family": {"features": [[1.0]], "params": [[0.0]]}}))
        with pytest.raises(ValidationError, match="needs exactly one"):
            load_problem(write_json(tmp_path / "none.json", {"p_x": [1.0]}))
        with pytest.raises(ValidationError, match="unknown field 'typo'"):
            load_problem(write_json(tmp_path / "typo.json", {
                "p_y_given_x": [[0.5, 0.5], [0.4, 0.6]], "typo": 1}))

    def test_file_level_rejections(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            load_problem(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ValidationError, match="not valid JSON"):
            load_problem(bad)
        with pytest.raises(ValidationError, match="JSON object"):
            load_problem(write_json(tmp_path / "list.json", [1, 2]))


class TestResolveConfig:
    def test_defaults(self):
        config = resolve(["solve", "--problem", "p.json", "--beta", "2"])
        assert config.command == "solve"
        assert config.framework == "both"
        assert config.tol == DEFAULT_TOL
        assert config.units == "nats"
        assert config.output_dir == "."
        assert config.beta == 2.0

    def test_flags_beat_config_file_beat_defaults(self, tmp_path):
        config_path = write_json(tmp_path / "cfg.json",
                                 {"beta": 2.0, "units": "bits", "seed": 9})
        config = resolve(["solve", "--problem", "p.json", "--beta", "4",
                          "--config", config_path])
        assert config.beta == 4.0       # flag wins
        assert config.units == "bits"   # config file beats default
        assert config.seed == 9

    def test_config_file_rejections(self, tmp_path):
        unknown = write_json(tmp_path / "u.json", {"trials": 5})
        with pytest.raises(ValidationError, match="not valid for 'solve'"):
            resolve(["solve", "--problem", "p.json", "--beta", "1",
                     "--config", unknown])
        mistyped = write_json(tmp_path / "t.json", {"beta": "four"})
        with pytest.raises(ValidationError, match="--beta expects float"):
            resolve(["solve", "--problem", "p.json", "--config", mistyped])

    def test_error_exp_defaults_are_materialized(self):
        config = resolve(["error-exp", "--classes", "c.json"])
        assert config.beta_list == [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
        assert config.n_values == [1, 2, 4, 8, 16, 32, 64, 128, 256]
        assert config.trials == 10_000

    def test_required_and_consistency_errors(self):
        with pytest.raises(ValidationError, match="requires --problem"):
            resolve(["solve", "--beta", "1"])
        with pytest.raises(ValidationError, match="requires --beta-grid"):
            resolve(["sweep", "--problem", "p.json"])
        with pytest.raises(ValidationError, match="requires --classes"):
            resolve(["error-exp"])
        with pytest.raises(ValidationError, match="exactly one"):
            resolve(["expfam", "--problem", "p.json"])
        with pytest.raises(ValidationError, match="exactly one"):
            resolve(["expfam", "--problem", "p.json", "--beta", "1",
                     "--beta-grid", "log:1:2:4"])

    def test_range_checks(self):
        with pytest.raises(ValidationError, match="--beta must be >= 0"):
            resolve(["solve", "--problem", "p.json", "--beta", "-1"])
        with pytest.raises(ValidationError, match="--tol must be positive"):
            resolve(["solve", "--problem", "p.json", "--beta", "1",
                     "--tol", "0"])
        with pytest.raises(ValidationError, match="--trials must be >= 1"):
            resolve(["error-exp", "--classes", "c.json", "--trials", "0"])
        with pytest.raises(ValidationError, match="--n-values"):
            resolve(["error-exp", "--classes", "c.json",
                     "--n-values", "4", "2"])
        with pytest.raises(ValidationError, match="--betas"):
            resolve(["error-exp", "--classes", "c.json", "--betas", "0"])


class TestSolveCommand:
    def test_beta_zero_summary(self, tmp_path, capsys):
        rc = main(["solve", "--problem", str(RULE_FIXTURE), "--beta", "0",
                   "--output-dir", str(tmp_path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "I_x = 0.000" in out
        for framework in ("ib", "dual"):
            payload = json.loads(
                (tmp_path / f"binary_overlap5_{framework}_solve.json")
                .read_text())
            assert payload["converged"] is True
            assert payload["units"] == "nats"
            assert abs(payload["i_x"]) < 1e-9
        echoed = json.loads((tmp_path / "run_config.json").read_text())
        assert echoed["command"] == "solve"
        assert echoed["beta"] == 0.0
        assert echoed["problem_path"] == str(RULE_FIXTURE)

    def test_artifacts_and_determinism(self, tmp_path, capsys):
        argv = ["solve", "--problem", str(RULE_FIXTURE), "--beta", "8",
                "--framework", "ib"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--output-dir", str(a)]) == 0
        assert main(argv + ["--output-dir", str(b)]) == 0
        capsys.readouterr()
        name = "binary_overlap5_ib_solve.json"
        assert (a / name).read_bytes() == (b / name).read_bytes()
        payload = json.loads((a / name).read_text())
        assert_allclose(np.sum(payload["marginal"]), 1.0, atol=1e-12)
        assert np.asarray(payload["decoder"]).shape[1] == 2

    def test_units_flag_rescales_stdout_only(self, tmp_path, capsys):
        argv = ["solve", "--problem", str(RULE_FIXTURE), "--beta", "8",
                "--framework", "ib", "--output-dir", str(tmp_path)]
        assert main(argv) == 0
        nats_line = capsys.readouterr().out
        assert main(argv + ["--units", "bits"]) == 0
        bits_line = capsys.readouterr().out
        nats = float(nats_line.split("I_x = ")[1].split()[0])
        bits = float(bits_line.split("I_x = ")[1].split()[0])
        assert "bits" in bits_line
        assert nats > 0.1
        assert_allclose(bits, nats / np.log(2.0), atol=2e-3)
        # the stored artifact ignores the presentation flag
        payload = json.loads(
            (tmp_path / "binary_overlap5_ib_solve.json").read_text())
        assert payload["units"] == "nats"
        assert_allclose(payload["i_x"], nats, atol=5e-4)


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep_artifacts")
    rc = main(["sweep", "--problem", str(RULE_FIXTURE), "--framework",
               "both", "--beta-grid", "log:2:6:10", "--tol", "1e-9",
               "--output-dir", str(out)])
    assert rc == 0
    return out


class TestSweepCommand:
    def test_writes_both_traces_and_one_critical_json(self, sweep_dir):
        names = {path.name for path in sweep_dir.iterdir()}
        assert names == {
            "binary_overlap5_ib_trace.csv",
            "binary_overlap5_dual_trace.csv",
            "binary_overlap5_critical_points.json",
            "run_config.json",
        }

    def test_traces_round_trip(self, sweep_dir):
        trace = trace_from_csv(sweep_dir / "binary_overlap5_ib_trace.csv")
        assert trace.framework == "ib"
        assert len(trace.records) == 10
        assert_array_equal(trace.betas, log_grid(2.0, 6.0, 10))
        counts = trace.column("effective_clusters")
        assert counts[0] == 1
        assert counts[-1] == 2

    def test_refined_critical_points(self, sweep_dir):
        payload = json.loads(
            (sweep_dir / "binary_overlap5_critical_points.json").read_text())
        assert payload["grid"] == {"min": 2.0, "max": 6.0, "points": 10}
        for framework, expected in FIRST_CRITICAL.items():
            points = payload["frameworks"][framework]
            assert len(points) == 1
            assert_allclose(points[0]["beta"], expected, atol=1e-4)
            assert points[0]["residual"] < 1e-6
            lo, hi = points[0]["bracket"]
            assert lo < points[0]["beta"] < hi

    def test_run_config_echo(self, sweep_dir):
        echoed = json.loads((sweep_dir / "run_config.json").read_text())
        assert echoed["command"] == "sweep"
        assert echoed["beta_grid"] == "log:2:6:10"
        assert echoed["tol"] == 1e-9
        assert echoed["split_eps"] == 1e-3
        assert "beta" not in echoed  # unset fields are not echoed


class TestCriticalCommand:
    def test_detects_without_traces(self, tmp_path, capsys):
        rc = main(["critical", "--problem", str(RULE_FIXTURE),
                   "--framework", "ib", "--beta-grid", "log:3:5:6",
                   "--tol", "1e-9", "--output-dir", str(tmp_path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "1 critical points" in out
        assert "beta_c = 4.443" in out
        names = {path.name for path in tmp_path.iterdir()}
        assert names == {"binary_overlap5_critical_points.json",
                         "run_config.json"}
        payload = json.loads(
            (tmp_path / "binary_overlap5_critical_points.json").read_text())
        assert list(payload["frameworks"]) == ["ib"]


class TestExpfamCommand:
    def test_single_beta_matches_full_table_dual(self, tmp_path, capsys):
        assert main(["expfam", "--problem", str(RULE_FIXTURE), "--beta",
                     "6", "--output-dir", str(tmp_path)]) == 0
        assert main(["solve", "--problem", str(RULE_FIXTURE), "--beta",
                     "6", "--framework", "dual",
                     "--output-dir", str(tmp_path)]) == 0
        capsys.readouterr()
        reduced = json.loads(
            (tmp_path / "binary_overlap5_expfam_solve.json").read_text())
        table = json.loads(
            (tmp_path / "binary_overlap5_dual_solve.json").read_text())
        assert reduced["solver"] == "expfam"
        assert_allclose(reduced["i_x"], table["i_x"], atol=1e-6)
        assert_allclose(reduced["i_y"], table["i_y"], atol=1e-6)
        assert_allclose(reduced["functional"], table["functional"],
                        atol=1e-6)

    def test_grid_writes_trace(self, tmp_path, capsys):
        rc = main(["expfam", "--problem", str(RULE_FIXTURE), "--beta-grid",
                   "log:2:6:8", "--output-dir", str(tmp_path)])
        capsys.readouterr()
        assert rc == 0
        trace = trace_from_csv(
            tmp_path / "binary_overlap5_expfam_trace.csv")
        assert len(trace.records) == 8
        assert trace.framework == "dual"

    def test_accepts_exp_family_files(self, tmp_path, capsys):
        fitted = ExpFamilyModel.from_conditional(load_problem(RULE_FIXTURE))
        path = write_json(tmp_path / "model.json", {"exp_family": {
            "features": fitted.features.tolist(),
            "params": fitted.params.tolist(),
        }})
        rc = main(["expfam", "--problem", path, "--beta", "4",
                   "--output-dir", str(tmp_path)])
        capsys.readouterr()
        assert rc == 0
        assert (tmp_path / "model_expfam_solve.json").exists()

    def test_rejections(self, tmp_path, capsys):
        rc = main(["expfam", "--problem", str(CLASSES_FIXTURE), "--beta",
                   "4", "--output-dir", str(tmp_path)])
        err = capsys.readouterr().err
        assert rc == 2
        assert "class_conditionals" in err
        three_labels = write_json(tmp_path / "tri.json", {
            "p_y_given_x": [[0.2, 0.3, 0.5], [0.5, 0.25, 0.25]]})
        rc = main(["expfam", "--problem", three_labels, "--beta", "4",
                   "--output-dir", str(tmp_path)])
        err = capsys.readouterr().err
        assert rc == 2
        assert "cannot fit" in err


class TestErrorExpCommand:
    ARGS = ["error-exp", "--classes", str(CLASSES_FIXTURE),
            "--betas", "4", "64", "--n-values", "1", "4", "16",
            "--trials", "300", "--seed", "5"]

    def test_reruns_are_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(self.ARGS + ["--output-dir", str(a)]) == 0
        assert main(self.ARGS + ["--output-dir", str(b)]) == 0
        capsys.readouterr()
        name = "class_mixture8_error_curves.csv"
        assert (a / name).read_bytes() == (b / name).read_bytes()
        config_a = json.loads((a / "run_config.json").read_text())
        config_b = json.loads((b / "run_config.json").read_text())
        config_a.pop("output_dir")
        config_b.pop("output_dir")
        assert config_a == config_b

    def test_csv_covers_both_frameworks(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(self.ARGS + ["--output-dir", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "ib: 2 betas x 3 sample sizes" in stdout
        assert "dual: 2 betas x 3 sample sizes" in stdout
        lines = (out / "class_mixture8_error_curves.csv") \
            .read_text().splitlines()
        assert len(lines) == 1 + 2 * 2 * 3
        assert lines[0] == "framework,beta,n,p_err,ci_halfwidth,trials,seed"

    def test_rejects_wrong_schema(self, tmp_path, capsys):
        rc = main(["error-exp", "--classes", str(RULE_FIXTURE),
                   "--output-dir", str(tmp_path)])
        err = capsys.readouterr().err
        assert rc == 2
        assert "class_conditionals" in err


class TestExitCodes:
    def test_internal_errors_exit_one(self, tmp_path, capsys, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("solver exploded")

        monkeypatch.setattr("bottleneck_lab.cli.solve", boom)
        rc = main(["solve", "--problem", str(RULE_FIXTURE), "--beta", "2",
                   "--output-dir", str(tmp_path)])
        err = capsys.readouterr().err
        assert rc == 1
        assert "internal error" in err
        assert "solver exploded" in err

    def test_validation_problems_exit_two(self, tmp_path, capsys):
        rc = main(["solve", "--problem", str(tmp_path / "nope.json"),
                   "--beta", "2", "--output-dir", str(tmp_path)])
        err = capsys.readouterr().err
        assert rc == 2
        assert "not found" in err

    def test_unwritable_output_dir_names_the_flag(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        rc = main(["solve", "--problem", str(RULE_FIXTURE), "--beta", "2",
                   "--output-dir", str(blocker)])
        err = capsys.readouterr().err
        assert rc == 2
        assert "--output-dir" in err

    def test_unknown_flags_exit_two(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["solve", "--bogus", "1"])
        capsys.readouterr()
        assert excinfo.value.code == 2


class TestThreadCapAndEntryPoint:
    def run_python(self, code: str, extra_env: dict) -> str:
        env = {k: v for k, v in os.environ.items()
               if not k.endswith("_NUM_THREADS")
               and k != "BOTTLENECK_LAB_THREADS"}
        env.update(extra_env)
        return subprocess.run([sys.executable, "-c", code], env=env,
                              capture_output=True, text=True,
                              check=True).stdout.strip()

    PROBE = ("import bottleneck_lab, os; "
             "print(os.environ.get('OMP_NUM_THREADS'), "
             "os.environ.get('MKL_NUM_THREADS'))")

    def test_env_var_caps_blas_pools(self):
        assert self.run_python(
            self.PROBE, {"BOTTLENECK_LAB_THREADS": "3"}) == "3 3"

    def test_explicit_pool_settings_win(self):
        assert self.run_python(
            self.PROBE, {"BOTTLENECK_LAB_THREADS": "3",
                         "OMP_NUM_THREADS": "7"}) == "7 3"

    def test_unset_leaves_environment_alone(self):
        assert self.run_python(self.PROBE, {}) == "None None"

    def test_module_entry_point(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "bottleneck_lab.cli", "solve",
             "--problem", str(RULE_FIXTURE), "--beta", "0",
             "--output-dir", str(tmp_path)],
            capture_output=True, text=True)
        assert result.returncode == 0
        assert "I_x = 0.000" in result.stdout
        assert (tmp_path / "run_config.json").exists()
