"""Config loading, the experiment runner, and the CLI.

Heavy numerics live in the solver and effective-curve tests; here the
configs are kept small so each command runs in well under a second,
except where a shipped fixture is exercised end to end.
"""

import copy
import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from minmax_hj import __version__
from minmax_hj.cli import main
from minmax_hj.config import ExperimentConfig, U0_CATALOGUE
from minmax_hj.errors import (ConfigError, MonotonicityError, RunLockError,
                              StabilityError)
from minmax_hj.harness import (RunLock, analyze_hypotheses, gate_passed,
                               run_check, run_effective, run_plotdata,
                               run_sweep_eps)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

BASE_PAIR = {
    "checks": [{"profile": {"kind": "abs_shift", "center": 0.0,
                            "slope": 1.0, "offset": -1.0},
                "coupling": "additive", "channel": 0}],
    "hats": [{"profile": {"kind": "negated_abs", "center": 0.0,
                          "slope": 1.0, "offset": 1.0},
              "coupling": "additive", "channel": 0}],
}


def small_config(**over):
    """Fast-running config dict: level-1 base pair on sin^2, n=256."""
    data = {
        "family": copy.deepcopy(BASE_PAIR),
        "medium": {"kind": "periodic", "period": 1.0, "dim": 1,
                   "channels": [{"formula": "sin_sq"}]},
        "solver": {"n": 256, "length": 1.0},
        "p_axis": {"min": -3.0, "max": 3.0, "count": 25},
        "lambda_schedule": [0.16, 0.08, 0.04],
        "eps_schedule": [0.25, 0.125],
        "evolution": {"T": 0.25, "u0": "clipped_abs",
                      "t_samples": [0.125, 0.25]},
        "seeds": [0],
        "pairs": {"x_nodes": 16, "p_box": [-4.0, 4.0], "n_p": 513},
        "output": "runs/test",
    }
    data.update(over)
    return data


def load_fixture(name, **over):
    with open(CONFIG_DIR / name) as fh:
        data = yaml.safe_load(fh)
    data.update(over)
    return ExperimentConfig(data, source=name)


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestConfigValidation:
    def test_good_config_loads(self):
        cfg = ExperimentConfig(small_config())
        assert cfg.p_axis[0] == -3.0 and cfg.p_axis[-1] == 3.0
        assert len(cfg.p_axis) == 25
        assert cfg.lambda_schedule == [0.16, 0.08, 0.04]
        assert cfg.theta is None
        assert cfg.threads == 1
        assert cfg.family.ell == 1

    def test_missing_family(self):
        data = small_config()
        del data["family"]
        with pytest.raises(ConfigError, match="family"):
            ExperimentConfig(data)

    def test_missing_solver_n(self):
        data = small_config(solver={"length": 1.0})
        with pytest.raises(ConfigError, match="solver"):
            ExperimentConfig(data)

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            ExperimentConfig([1, 2, 3])

    def test_increasing_lambda_schedule_rejected(self):
        data = small_config(lambda_schedule=[0.04, 0.08, 0.16])
        with pytest.raises(ConfigError, match="strictly decreasing"):
            ExperimentConfig(data)

    def test_short_lambda_schedule_rejected(self):
        data = small_config(lambda_schedule=[0.16, 0.08])
        with pytest.raises(ConfigError, match=">= 3"):
            ExperimentConfig(data)

    def test_under_resolved_eps_rejected(self):
        data = small_config(eps_schedule=[0.25, 1.0 / 512])
        with pytest.raises(ConfigError, match="under-resolved"):
            ExperimentConfig(data)

    def test_unknown_u0_rejected(self):
        data = small_config()
        data["evolution"]["u0"] = "sawtooth"
        with pytest.raises(ConfigError, match="catalogue"):
            ExperimentConfig(data)

    def test_t_samples_beyond_horizon_rejected(self):
        data = small_config()
        data["evolution"]["t_samples"] = [0.125, 0.5]
        with pytest.raises(ConfigError, match=r"\(0, T\]"):
            ExperimentConfig(data)

    def test_channel_out_of_range(self):
        data = small_config()
        data["family"]["checks"][0]["channel"] = 1
        with pytest.raises(ConfigError, match="channel 1"):
            ExperimentConfig(data)

    def test_bad_p_axis(self):
        data = small_config(p_axis={"min": 3.0, "max": -3.0, "count": 25})
        with pytest.raises(ConfigError, match="p_axis"):
            ExperimentConfig(data)

    def test_empty_seed_list_rejected(self):
        data = small_config(seeds=[])
        with pytest.raises(ConfigError, match="seeds"):
            ExperimentConfig(data)

    def test_pairs_bounds(self):
        data = small_config(pairs={"x_nodes": 2, "n_p": 513})
        with pytest.raises(ConfigError, match="pairs"):
            ExperimentConfig(data)

    def test_broken_piece_reported_under_family(self):
        data = small_config()
        data["family"]["hats"][0]["profile"]["kind"] = "mystery"
        with pytest.raises(ConfigError, match="family"):
            ExperimentConfig(data)

    def test_yaml_error_carries_line(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("family:\n  checks: [\n")
        with pytest.raises(ConfigError, match="line"):
            ExperimentConfig.from_yaml(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_yaml(str(tmp_path / "nope.yaml"))

    def test_u0_catalogue_values(self):
        cfg = ExperimentConfig(small_config(solver={"n": 256, "length": 4.0}))
        x = np.array([0.0, 0.5, 2.5, 3.75])
        # distance to 0 on the circle of circumference 4, clipped at 1
        np.testing.assert_allclose(cfg.u0_values(x), [0.0, 0.5, 1.0, 0.25])
        assert set(U0_CATALOGUE) == {"clipped_abs", "cosine", "constant",
                                     "plateau_bump"}

    def test_x_nodes_cover_one_period(self):
        cfg = ExperimentConfig(small_config())
        nodes = cfg.x_nodes()
        assert nodes.shape == (16,)
        assert nodes[0] == 0.0 and nodes[-1] < cfg.medium_spec.period

    def test_shipped_fixtures_load(self):
        for name in ("base_case.yaml", "ell2_strict.yaml",
                     "unstable_pair.yaml", "monotonicity_violation.yaml",
                     "xindep.yaml"):
            cfg = ExperimentConfig.from_yaml(str(CONFIG_DIR / name))
            assert cfg.family.ell in (1, 2)


class TestHypothesisStage:
    def test_base_pair_all_verdicts_pass(self):
        cfg = ExperimentConfig(small_config())
        analysis = analyze_hypotheses(cfg)
        assert all(analysis["verdicts"].values())
        assert gate_passed(analysis["verdicts"])
        np.testing.assert_allclose(analysis["constants"]["m_bar"], [1.0])
        np.testing.assert_allclose(analysis["constants"]["M_lower"], [1.0])

    def test_unstable_fixture_fails_stability_only(self):
        cfg = load_fixture("unstable_pair.yaml")
        analysis = analyze_hypotheses(cfg)
        v = analysis["verdicts"]
        assert not v["stable_pairs"]
        assert v["ordering"] and v["contact_monotonicity"]
        assert not gate_passed(v)
        w = analysis["witnesses"]["stable_pairs"][0]
        assert w["level"] == 1 and w["variation"] > w["tau_b"]

    def test_monotonicity_fixture_fails_upper_chain(self):
        cfg = load_fixture("monotonicity_violation.yaml")
        analysis = analyze_hypotheses(cfg)
        v = analysis["verdicts"]
        assert v["stable_pairs"] and v["ordering"]
        assert not v["contact_monotonicity"]
        fail = analysis["witnesses"]["contact_monotonicity"][0]
        assert fail["chain"] == "upper" and fail["index"] == 1
        assert fail["values"] == [1.0, 2.5]

    def test_two_level_fixture_strictly_monotone(self):
        cfg = load_fixture("ell2_strict.yaml")
        analysis = analyze_hypotheses(cfg)
        assert all(analysis["verdicts"].values())
        np.testing.assert_allclose(analysis["constants"]["m_bar"],
                                   [1.0, 0.5])
        np.testing.assert_allclose(analysis["constants"]["M_lower"],
                                   [1.0, 1.25])


class TestRunCheck:
    def test_writes_manifest_only(self, tmp_path):
        cfg = ExperimentConfig(small_config(output=str(tmp_path / "run")))
        manifest = run_check(cfg)
        assert manifest["command"] == "check"
        assert sorted(os.listdir(tmp_path / "run")) == ["manifest.json"]
        on_disk = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert on_disk["verdicts"] == manifest["verdicts"]
        assert on_disk["tool_version"] == __version__
        assert on_disk["files"] == {}

    def test_lock_released_after_run(self, tmp_path):
        cfg = ExperimentConfig(small_config(output=str(tmp_path / "run")))
        run_check(cfg)
        run_check(cfg)  # would raise RunLockError if the lock leaked

    def test_lock_contention(self, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        with RunLock(str(out)):
            cfg = ExperimentConfig(small_config(output=str(out)))
            with pytest.raises(RunLockError):
                run_check(cfg)
        run_check(cfg)


class TestRunEffective:
    def test_field_free_family_is_exact(self, tmp_path):
        cfg = load_fixture("xindep.yaml", output=str(tmp_path / "run"))
        manifest = run_effective(cfg)
        assert manifest["max_abs_err"] == 0.0
        assert manifest["unreliable_p"] == []
        header = (tmp_path / "run" / "compare.csv").read_text().splitlines()[0]
        assert header == "p,numeric,formula,abs_err"
        for name in ("numeric.csv", "formula.csv", "compare.csv"):
            assert manifest["files"][name] == sha256(tmp_path / "run" / name)

    def test_result_files_deterministic(self, tmp_path):
        first = load_fixture("xindep.yaml", output=str(tmp_path / "a"))
        second = load_fixture("xindep.yaml", output=str(tmp_path / "b"))
        m1, m2 = run_effective(first), run_effective(second)
        assert m1["files"] == m2["files"]

    def test_threads_do_not_change_results(self, tmp_path):
        serial = load_fixture("xindep.yaml", output=str(tmp_path / "s"))
        pooled = load_fixture("xindep.yaml", output=str(tmp_path / "p"))
        m1 = run_effective(serial, threads=1)
        m2 = run_effective(pooled, threads=4)
        assert m1["files"] == m2["files"]

    def test_two_level_compare_has_half_step_columns(self, tmp_path):
        data = small_config(output=str(tmp_path / "run"))
        fam = yaml.safe_load((CONFIG_DIR / "ell2_strict.yaml").read_text())
        data["family"] = fam["family"]
        data["medium"] = fam["medium"]
        # window wide enough to reach the coercive rise past the outer dip
        data["p_axis"] = {"min": -4.0, "max": 4.0, "count": 17}
        cfg = ExperimentConfig(data)
        manifest = run_effective(cfg)
        header = (tmp_path / "run" / "compare.csv").read_text().splitlines()[0]
        assert header == "p,numeric,formula,abs_err,level_1,level_1_5"
        assert manifest["max_abs_err"] < 0.1

    def test_gate_blocks_unstable_family(self, tmp_path):
        cfg = load_fixture("unstable_pair.yaml", output=str(tmp_path / "run"))
        with pytest.raises(StabilityError):
            run_effective(cfg)
        assert not (tmp_path / "run" / ".lock").exists()

    def test_force_overrides_gate(self, tmp_path):
        cfg = load_fixture("unstable_pair.yaml", output=str(tmp_path / "run"))
        manifest = run_effective(cfg, force=True)
        assert not manifest["verdicts"]["stable_pairs"]
        assert (tmp_path / "run" / "compare.csv").exists()

    def test_gate_blocks_broken_chain(self, tmp_path):
        cfg = load_fixture("monotonicity_violation.yaml",
                           output=str(tmp_path / "run"))
        with pytest.raises(MonotonicityError) as err:
            run_effective(cfg)
        assert err.value.chain == "upper" and err.value.index == 1


class TestRunSweep:
    def test_field_free_family_sweep_is_exact(self, tmp_path):
        cfg = load_fixture("xindep.yaml", output=str(tmp_path / "run"))
        manifest = run_sweep_eps(cfg)
        assert all(err <= 1e-10 for err in manifest["errors"])
        assert manifest["nonincreasing"]
        header, first = (tmp_path / "run"
                         / "err_vs_eps.csv").read_text().splitlines()[:2]
        assert header == "eps,err,ratio_to_prev"
        assert first.split(",")[2] == "nan"

    def test_base_pair_errors_shrink(self, tmp_path):
        cfg = ExperimentConfig(small_config(output=str(tmp_path / "run")))
        manifest = run_sweep_eps(cfg)
        assert manifest["strictly_decreasing"]
        assert len(manifest["errors"]) == 2
        assert manifest["ratios"][0] < 0.8

    def test_gate_applies_to_sweep(self, tmp_path):
        cfg = load_fixture("unstable_pair.yaml", output=str(tmp_path / "run"))
        with pytest.raises(StabilityError):
            run_sweep_eps(cfg)


class TestPlotdata:
    def test_effective_run_yields_curves_and_plateau(self, tmp_path):
        cfg = ExperimentConfig(small_config(output=str(tmp_path / "run")))
        run_effective(cfg)
        written = run_plotdata(str(tmp_path / "run"))
        names = [os.path.basename(p) for p in written]
        assert names == ["hbar_curves.dat", "plateau.dat"]
        plateau = (tmp_path / "run" / "plateau.dat").read_text().splitlines()
        assert plateau[0] == "# region p value"
        body = [line.split() for line in plateau[1:]]
        # the base pair plateaus at height 1 on |p| <= 3/2
        assert {row[0] for row in body} == {"1"}
        ps = [float(row[1]) for row in body]
        assert ps[0] == -1.5 and ps[-1] == 1.5
        assert all(float(row[2]) == 1.0 for row in body)

    def test_sweep_run_yields_loglog(self, tmp_path):
        cfg = ExperimentConfig(small_config(output=str(tmp_path / "run")))
        run_sweep_eps(cfg)
        written = run_plotdata(str(tmp_path / "run"))
        assert [os.path.basename(p) for p in written] == ["eps_loglog.dat"]
        lines = (tmp_path / "run" / "eps_loglog.dat").read_text().splitlines()
        assert lines[0] == "# eps err log10_eps log10_err"
        assert len(lines) == 3

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = ExperimentConfig(small_config(output=str(tmp_path / "run")))
        run_effective(cfg)
        first = run_plotdata(str(tmp_path / "run"))
        before = {p: Path(p).read_bytes() for p in first}
        second = run_plotdata(str(tmp_path / "run"))
        assert first == second
        assert all(Path(p).read_bytes() == before[p] for p in second)

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="no compare.csv"):
            run_plotdata(str(tmp_path))


class TestCLI:
    def setup_method(self):
        self.runner = CliRunner()

    def invoke(self, *args):
        return self.runner.invoke(main, list(args))

    def test_check_passes_on_clean_fixture(self, tmp_path):
        res = self.invoke("check", "--config",
                          str(CONFIG_DIR / "xindep.yaml"),
                          "--out", str(tmp_path / "run"))
        assert res.exit_code == 0
        assert "ordering: pass" in res.output
        assert "stable_pairs: pass" in res.output

    def test_check_exits_2_on_unstable_pair(self, tmp_path):
        res = self.invoke("check", "--config",
                          str(CONFIG_DIR / "unstable_pair.yaml"),
                          "--out", str(tmp_path / "run"))
        assert res.exit_code == 2
        assert "stable_pairs: FAIL" in res.output
        assert "variation" in res.stderr

    def test_check_exits_2_on_broken_chain(self, tmp_path):
        res = self.invoke("check", "--config",
                          str(CONFIG_DIR / "monotonicity_violation.yaml"),
                          "--out", str(tmp_path / "run"))
        assert res.exit_code == 2
        assert "contact_monotonicity: FAIL" in res.output
        assert '"upper"' in res.stderr and '"index": 1' in res.stderr

    def test_effective_reports_error(self, tmp_path):
        res = self.invoke("effective", "--config",
                          str(CONFIG_DIR / "xindep.yaml"),
                          "--out", str(tmp_path / "run"))
        assert res.exit_code == 0
        assert "max_abs_err: 0" in res.output

    def test_effective_exits_2_without_force(self, tmp_path):
        res = self.invoke("effective", "--config",
                          str(CONFIG_DIR / "unstable_pair.yaml"),
                          "--out", str(tmp_path / "run"))
        assert res.exit_code == 2
        assert "hypothesis failure" in res.stderr

    def test_effective_force_runs(self, tmp_path):
        res = self.invoke("effective", "--config",
                          str(CONFIG_DIR / "unstable_pair.yaml"),
                          "--out", str(tmp_path / "run"), "--force")
        assert res.exit_code == 0

    def test_sweep_reports_each_eps(self, tmp_path):
        res = self.invoke("sweep-eps", "--config",
                          str(CONFIG_DIR / "xindep.yaml"),
                          "--out", str(tmp_path / "run"))
        assert res.exit_code == 0
        assert res.output.count("eps=") == 3
        assert "nonincreasing: True" in res.output

    def test_plotdata_round_trip(self, tmp_path):
        out = str(tmp_path / "run")
        assert self.invoke("effective", "--config",
                           str(CONFIG_DIR / "xindep.yaml"),
                           "--out", out).exit_code == 0
        res = self.invoke("plotdata", out)
        assert res.exit_code == 0
        assert "hbar_curves.dat" in res.output

    def test_plotdata_exits_4_on_empty_dir(self, tmp_path):
        res = self.invoke("plotdata", str(tmp_path))
        assert res.exit_code == 4
        assert "config error" in res.stderr

    def test_missing_config_exits_4(self, tmp_path):
        res = self.invoke("check", "--config",
                          str(tmp_path / "nope.yaml"),
                          "--out", str(tmp_path / "run"))
        assert res.exit_code == 4

    def test_bad_schedule_exits_4(self, tmp_path):
        path = tmp_path / "bad.yaml"
        data = small_config(lambda_schedule=[0.04, 0.08, 0.16],
                            output=str(tmp_path / "run"))
        path.write_text(yaml.safe_dump(data))
        res = self.invoke("check", "--config", str(path))
        assert res.exit_code == 4
        assert "strictly decreasing" in res.stderr

    def test_locked_directory_exits_4(self, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / ".lock").write_text("held")
        res = self.invoke("check", "--config",
                          str(CONFIG_DIR / "xindep.yaml"),
                          "--out", str(out))
        assert res.exit_code == 4
        assert "locked" in res.stderr

    def test_seed_override_lands_in_manifest(self, tmp_path):
        out = tmp_path / "run"
        res = self.invoke("check", "--config",
                          str(CONFIG_DIR / "xindep.yaml"),
                          "--out", str(out), "--seed", "7")
        assert res.exit_code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["contact_constants"]["seeds"] == [7]

    def test_version_flag(self):
        res = self.invoke("--version")
        assert res.exit_code == 0 and __version__ in res.output
