import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gfsvgd import __version__
from gfsvgd.cli import main
from gfsvgd.errors import ConfigError
from gfsvgd.harness import (OUTPUT_ROOT_ENV, ExperimentConfig, build_densities, expand_config,
                            load_config, load_config_dir, read_csv, read_summary, report,
                            run_experiment, summarize, sweep)
from gfsvgd.records import CSV_COLUMNS

CONFIG_ROOT = Path(__file__).resolve().parents[1] / "src" / "gfsvgd" / "configs"

SMALL = {
    "name": "small",
    "algorithm": "gf-svgd",
    "target": {"family": "gaussian", "dim": 2, "mean": 0.0, "sigma": 2.0},
    "surrogate": {"family": "gaussian", "like": "target", "log10_scale": 0.5},
    "init": {"family": "gaussian", "dim": 2, "mean": 0.0, "sigma": 1.0},
    "n": 20,
    "iterations": 20,
    "record_every": 10,
    "n_exact": 200,
}

DIVERGING = {
    "name": "diverging",
    "algorithm": "svgd",
    "target": {"family": "gaussian", "dim": 1, "mean": 0.0, "sigma": 1e-10},
    "init": {"family": "gaussian", "dim": 1, "mean": 1.0, "sigma": 1.0},
    "optimizer": {"name": "plain", "step_size": 1e10},
    "iterations": 50,
    "n": 5,
}


def write_json(path, data):
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


class TestExperimentConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig.from_dict(SMALL)
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert again.canonical() == cfg.canonical()

    def test_hash_ignores_bookkeeping_fields(self):
        cfg = ExperimentConfig.from_dict(SMALL)
        for key, value in (("name", "other"), ("output", "elsewhere"), ("timing", True),
                           ("label", "x")):
            assert ExperimentConfig.from_dict({**SMALL, key: value}).config_hash == cfg.config_hash

    def test_hash_tracks_semantic_fields(self):
        cfg = ExperimentConfig.from_dict(SMALL)
        variants = [{"n": 21}, {"seed": 1}, {"iterations": 21}, {"bandwidth_scale": 2.0},
                    {"optimizer": {"step_size": 0.1}},
                    {"target": {**SMALL["target"], "sigma": 2.5}},
                    {"surrogate": {**SMALL["surrogate"], "log10_scale": 0.25}}]
        hashes = {ExperimentConfig.from_dict({**SMALL, **v}).config_hash for v in variants}
        assert cfg.config_hash not in hashes and len(hashes) == len(variants)

    def test_explicit_defaults_hash_like_omitted_ones(self):
        explicit = {**SMALL, "optimizer": {"name": "adam", "step_size": 0.05}, "seed": 0}
        assert (ExperimentConfig.from_dict(explicit).config_hash
                == ExperimentConfig.from_dict(SMALL).config_hash)

    def test_group_hash_ignores_seed(self):
        a = ExperimentConfig.from_dict({**SMALL, "seed": 1})
        b = ExperimentConfig.from_dict({**SMALL, "seed": 2})
        assert a.group_hash == b.group_hash and a.config_hash != b.config_hash

    def test_sweep_expansion(self):
        configs = expand_config({**SMALL, "sweep": {"seed": [0, 1, 2], "n": [10, 20]}})
        assert [(c.n, c.seed) for c in configs] == [(10, 0), (10, 1), (10, 2),
                                                     (20, 0), (20, 1), (20, 2)]
        assert configs[0].label == "n=10"

    def test_model_parameters_follow_the_seed(self):
        spec = {"algorithm": "exact-mc",
                "target": {"family": "gmm", "dim": 3, "components": 4,
                           "means": {"uniform": [-1, 1]}}}
        means = []
        for seed in (0, 0, 1):
            ss = np.random.SeedSequence(seed).spawn(4)[0]
            means.append(build_densities(ExperimentConfig.from_dict({**spec, "seed": seed}), ss)[0].means)
        np.testing.assert_array_equal(means[0], means[1])
        assert not np.allclose(means[0], means[2])

    def test_bundled_configs_load(self):
        for scale in ("desk", "paper"):
            configs = load_config_dir(CONFIG_ROOT / scale)
            assert {c.algorithm for c in configs} == {"svgd", "gf-svgd", "a-svgd", "agf-svgd",
                                                      "is", "gf-ais", "exact-mc"}
            assert len({(c.name, c.stem) for c in configs}) == len(configs)


class TestConfigErrors:
    def test_unknown_algorithm_points_at_its_line(self, tmp_path):
        path = write_json(tmp_path / "bad.json", {**SMALL, "algorithm": "mcmc"})
        with pytest.raises(ConfigError) as info:
            load_config(path)
        line = path.read_text().splitlines().index('  "algorithm": "mcmc",') + 1
        assert info.value.line == line
        assert f"bad.json:{line}:" in str(info.value)

    def test_json_syntax_error_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "algorithm": "svgd",\n  "n": ,\n}\n')
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert info.value.line == 3

    @pytest.mark.parametrize("patch, key", [
        ({"n": -1}, "n"), ({"bogus": 1}, "bogus"), ({"bandwidth_scale": 0}, "bandwidth_scale"),
        ({"optimizer": {"name": "sgd"}}, "name"), ({"schedule": {"T": 0}}, "T"),
    ])
    def test_field_errors_are_line_addressed(self, tmp_path, patch, key):
        path = write_json(tmp_path / "bad.json", {**SMALL, **patch})
        with pytest.raises(ConfigError) as info:
            load_config(path)
        lines = path.read_text().splitlines()
        assert f'"{key}"' in lines[info.value.line - 1]

    def test_missing_requirements(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"algorithm": "svgd"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**SMALL, "surrogate": None})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**SMALL, "algorithm": "agf-svgd"})

    def test_cli_exit_code_two(self, tmp_path, capsys):
        path = write_json(tmp_path / "bad.json", {**SMALL, "n": "many"})
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
        assert "bad.json:" in capsys.readouterr().err


class TestRuns:
    def test_csv_layout_and_sidecar(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL)
        rec = run_experiment(cfg, tmp_path)
        csv_path = tmp_path / f"{cfg.stem}.csv"
        assert csv_path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
        rows = read_csv(csv_path)
        assert [r["iteration"] for r in rows] == [0, 10, 20]
        assert all(np.isfinite(list(r.values())).all() for r in rows)
        assert all(r["wall_ms"] == 0.0 for r in rows)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        assert meta["config_hash"] == cfg.config_hash == rec.config_hash
        assert meta["version"] == __version__
        assert meta["info"]["mmd_statistic"] == "U"
        assert ExperimentConfig.from_dict(meta["config"]) == cfg
        assert meta["final"] == rows[-1]

    def test_same_seed_gives_byte_identical_csv(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL)
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        name = f"{cfg.stem}.csv"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_timing_fills_wall_clock(self):
        rec = run_experiment(ExperimentConfig.from_dict({**SMALL, "timing": True}))
        assert rec.rows[-1]["wall_ms"] > 0

    def test_exact_monte_carlo_is_near_zero(self):
        rec = run_experiment(ExperimentConfig.from_dict({**SMALL, "algorithm": "exact-mc",
                                                         "n": 200}))
        assert abs(rec.final["mmd2"]) < 0.01
        assert rec.final["bandwidth"] == rec.info["mmd_bandwidth"]

    def test_weighted_runs_report_v_statistic(self):
        for algo in ("is", "gf-ais"):
            spec = {**SMALL, "algorithm": algo, "p0": {"family": "gaussian", "dim": 2, "sigma": 4.0},
                    "schedule": {"T": 5}}
            rec = run_experiment(ExperimentConfig.from_dict(spec))
            assert rec.info["mmd_statistic"] == "V"
            assert rec.final["mmd2"] >= 0

    def test_every_algorithm_dispatches(self):
        base = {**SMALL, "p0": {"family": "gaussian", "dim": 2, "sigma": 4.0},
                "schedule": {"T": 10}, "iterations": 10}
        for algo in ("svgd", "gf-svgd", "a-svgd", "agf-svgd", "is", "gf-ais", "exact-mc"):
            rec = run_experiment(ExperimentConfig.from_dict({**base, "algorithm": algo}))
            assert rec.info["algorithm"] == algo

    def test_auto_kernel_curve_surrogate(self):
        rec = run_experiment(ExperimentConfig.from_dict({**SMALL, "surrogate": "auto-kernel-curve"}))
        assert np.isfinite(rec.final["mmd2"])

    def test_numeric_abort_gives_exit_three(self, tmp_path, capsys):
        path = write_json(tmp_path / "diverge.json", DIVERGING)
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == 3
        assert "diverged" in capsys.readouterr().err


class TestSweeps:
    def test_empty_sweep(self, tmp_path):
        (tmp_path / "configs").mkdir()
        assert main(["sweep", "--config-dir", str(tmp_path / "configs"),
                     "--out", str(tmp_path / "out")]) == 0
        assert read_summary(tmp_path / "out" / "summary.csv") == []
        assert sweep([], out_root=tmp_path / "out2") == []

    def test_three_seeds_mean_and_std(self, tmp_path):
        configs = expand_config({**SMALL, "sweep": {"seed": [0, 1, 2]}})
        results = sweep(configs, out_root=tmp_path)
        assert len(results) == 3 and all(r.ok for r in results)
        finals = np.array([r.record.final["mmd2"] for r in results])
        (row,) = read_summary(tmp_path / "summary.csv")
        assert row["runs"] == 3
        np.testing.assert_allclose(row["mmd2_mean"], finals.mean(), rtol=1e-12)
        np.testing.assert_allclose(row["mmd2_std"], finals.std(ddof=1), rtol=1e-12)

    def test_report_reproduces_summary(self, tmp_path):
        configs = expand_config({**SMALL, "sweep": {"seed": [0, 1, 2], "n": [10, 20]}})
        rows = summarize(sweep(configs, out_root=tmp_path))
        rebuilt = {r["group"]: r for r in report(tmp_path)}
        assert len(rebuilt) == len(rows) == 2
        for row in rows:
            other = rebuilt[row["group"]]
            assert other["runs"] == row["runs"] and other["label"] == row["label"]
            for key in ("mmd2_mean", "mmd2_std", "mse_mean_mean", "mse_var_mean"):
                np.testing.assert_allclose(other[key], row[key], rtol=1e-12, atol=1e-15)

    def test_failures_are_recorded_and_sweep_continues(self, tmp_path):
        configs = [ExperimentConfig.from_dict(DIVERGING), ExperimentConfig.from_dict(SMALL)]
        results = sweep(configs, out_root=tmp_path)
        assert [r.ok for r in results] == [False, True]
        assert results[0].error_kind == "numeric"
        rows = {r["name"]: r for r in read_summary(tmp_path / "summary.csv")}
        assert rows["diverging"]["failed"] == 1 and rows["small"]["runs"] == 1

    def test_parallel_matches_serial(self, tmp_path):
        configs = expand_config({**SMALL, "sweep": {"seed": [0, 1]}})
        serial = sweep(configs, 1, tmp_path / "serial")
        sweep(configs, 2, tmp_path / "parallel")
        for res in serial:
            name = Path(res.csv_path).name
            assert ((tmp_path / "parallel" / "small" / name).read_bytes()
                    == Path(res.csv_path).read_bytes())

    def test_duplicate_outputs_rejected(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL)
        with pytest.raises(ConfigError):
            sweep([cfg, cfg], out_root=tmp_path)


class TestCLI:
    def test_env_var_sets_default_root(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "envroot"))
        path = write_json(tmp_path / "small.json", SMALL)
        assert main(["run", "--config", str(path)]) == 0
        written = Path(capsys.readouterr().out.strip())
        assert written.parent == tmp_path / "envroot" / "small"

    def test_seed_override_dedupes(self, tmp_path, capsys):
        path = write_json(tmp_path / "small.json", {**SMALL, "sweep": {"seed": [0, 1, 2]}})
        assert main(["run", "--config", str(path), "--seed", "7", "--out", str(tmp_path)]) == 0
        printed = capsys.readouterr().out.split()
        assert len(printed) == 1 and "-s7-" in printed[0]

    def test_sweep_then_report(self, tmp_path, capsys):
        cdir = tmp_path / "configs"
        cdir.mkdir()
        write_json(cdir / "a.json", {**SMALL, "sweep": {"seed": [0, 1]}})
        write_json(cdir / "b.json", {**SMALL, "name": "exact", "algorithm": "exact-mc"})
        assert main(["sweep", "--config-dir", str(cdir), "--jobs", "1",
                     "--out", str(tmp_path / "out")]) == 0
        assert main(["report", "--in", str(tmp_path / "out")]) == 0
        with open(tmp_path / "out" / "report.csv", newline="") as fh:
            assert len(list(csv.DictReader(fh))) == 2
        assert "exact/exact-mc" in capsys.readouterr().out

    def test_bad_jobs(self, tmp_path):
        (tmp_path / "c").mkdir()
        assert main(["sweep", "--config-dir", str(tmp_path / "c"), "--jobs", "0"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
