"""Unit tests for experiment orchestration, CSV emission, and the CLI."""

import json

import numpy as np
import pytest

from asysca import cli, experiment
from asysca.experiment import (
    ExperimentConfig,
    ExperimentResult,
    _assert_shared_channels,
    _hash_sequence,
    aggregate_header,
    fit_loglog_slope,
    run_experiment,
    run_single,
    run_sweep,
)
from asysca.problem import NumericError

TINY = dict(
    T=12,
    monte_carlo_runs=2,
    seed=99,
    variants=("instantaneous", "static_hindsight", "hybrid_envelope"),
    modes=("async",),
)


def write_ini(path, extra_run="", extra_sections=""):
    path.write_text(
        "[model]\n"
        "p = 2\nk = 2\nn_fc = 2\nn_i = 2\nl_i = 2\n"
        "power = 10\nnoise_db = 30\n"
        "[channel]\nsigma_c = 0.05\n"
        "[run]\n"
        "t = 12\nmonte_carlo_runs = 2\nseed = 99\n"
        "variants = instantaneous, static_hindsight, hybrid_envelope\n"
        "modes = async\n"
        + extra_run
        + extra_sections
    )
    return str(path)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.T == 500
        assert cfg.monte_carlo_runs == 50
        assert cfg.correction_mode == "exact"

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(variants=("bogus",)),
            dict(modes=("bogus",)),
            dict(T=0),
            dict(sigma_c=-0.1),
            dict(delay_lo=3, delay_hi=2),
            dict(correction_mode="other"),
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_series_names(self):
        cfg = ExperimentConfig(
            variants=("instantaneous", "hybrid_envelope", "hybrid_convex"),
            modes=("async", "genie"),
        )
        assert cfg.series_names() == [
            "instantaneous",
            "hybrid_envelope_async",
            "hybrid_envelope_genie",
            "hybrid_convex_async",
            "hybrid_convex_genie",
        ]

    def test_from_ini(self, tmp_path):
        path = write_ini(
            tmp_path / "cfg.ini",
            extra_run="cores = 2\ndelay_hi = 3\ncorrection_mode = linearized\n",
            extra_sections="[hybrid_envelope]\neps = 0.03\nmu = 0.5\n",
        )
        cfg = ExperimentConfig.from_ini(path)
        assert cfg.T == 12
        assert cfg.monte_carlo_runs == 2
        assert cfg.seed == 99
        assert cfg.cores == 2
        assert cfg.delay_hi == 3
        assert cfg.correction_mode == "linearized"
        assert cfg.variants == ("instantaneous", "static_hindsight", "hybrid_envelope")
        assert cfg.hybrid["hybrid_envelope"].eps == 0.03
        assert cfg.hybrid["hybrid_envelope"].mu == 0.5
        # untouched fields keep their defaults
        assert cfg.hybrid["hybrid_envelope"].rho == 0.1
        assert cfg.hybrid["hybrid_convex"].eps == 0.02

    def test_from_ini_sweep_scale_eps(self, tmp_path):
        path = write_ini(
            tmp_path / "cfg.ini", extra_run="sweep_scale_eps = false\n"
        )
        cfg = ExperimentConfig.from_ini(path)
        assert cfg.sweep_scale_eps is False
        assert ExperimentConfig.from_ini(
            write_ini(tmp_path / "cfg2.ini")
        ).sweep_scale_eps is True

    def test_from_ini_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ExperimentConfig.from_ini(str(tmp_path / "absent.ini"))

    def test_fingerprint_sensitivity(self):
        a = ExperimentConfig()
        b = ExperimentConfig(seed=ExperimentConfig().seed + 1)
        assert a.fingerprint() == ExperimentConfig().fingerprint()
        assert a.fingerprint() != b.fingerprint()


class TestChannelSharing:
    def test_hash_detects_tampering(self):
        rng = np.random.default_rng(0)
        slots = [rng.standard_normal((2, 4)) for _ in range(3)]
        h = _hash_sequence(slots)
        _assert_shared_channels(slots, h)
        slots[1] = slots[1] + 1e-12
        with pytest.raises(NumericError):
            _assert_shared_channels(slots, h)


class TestRunSingle:
    def test_series_shapes_and_repeatability(self):
        cfg = ExperimentConfig(**TINY)
        model = experiment.build_model(cfg)
        out1 = run_single(cfg, 0, model=model)
        out2 = run_single(cfg, 0, model=model)
        assert set(out1) == {
            "instantaneous", "static_hindsight", "hybrid_envelope_async"
        }
        for name in out1:
            assert out1[name].shape == (cfg.T,)
            assert np.array_equal(out1[name], out2[name])

    def test_instantaneous_lower_bounds_static(self):
        cfg = ExperimentConfig(**TINY)
        out = run_single(cfg, 0, model=experiment.build_model(cfg))
        # per-slot optimal is at least as good as any fixed precoder, slotwise
        assert np.all(out["instantaneous"] <= out["static_hindsight"] + 1e-10)

    def test_all_modes_run(self):
        cfg = ExperimentConfig(**dict(TINY, modes=("async", "genie", "practical")))
        out = run_single(cfg, 0, model=experiment.build_model(cfg))
        for mode in ("async", "genie", "practical"):
            assert f"hybrid_envelope_{mode}" in out

    def test_infeasible_eps_raises(self):
        cfg = ExperimentConfig(**TINY)
        cfg.hybrid["hybrid_envelope"] = experiment.VariantParams(
            eps=50.0, mu=0.2, rho=0.1, gamma=0.001
        )
        with pytest.warns(UserWarning):
            with pytest.raises(ValueError):
                run_single(cfg, 0, model=experiment.build_model(cfg))


class TestAggregation:
    def make_result(self):
        cfg = ExperimentConfig(**dict(TINY, T=4))
        series = {"a": np.array([[1.0, 2.0, 3.0, 4.0], [3.0, 4.0, 5.0, 6.0]])}
        return ExperimentResult(config=cfg, series=series, kept_runs=[0, 1],
                                excluded=[])

    def test_aggregate_values(self):
        res = self.make_result()
        mean, se = res.aggregate()["a"]
        assert np.allclose(mean, [2.0, 3.0, 4.0, 5.0])
        assert np.allclose(se, np.sqrt(2.0) / np.sqrt(2.0))

    def test_final_window(self):
        res = self.make_result()
        mean, se = res.final_window(window=2)["a"]
        assert mean == pytest.approx(4.5)
        per_run = np.array([3.5, 5.5])
        assert se == pytest.approx(per_run.std(ddof=1) / np.sqrt(2))


@pytest.fixture(scope="module")
def result():
    cfg = ExperimentConfig(**TINY)
    return run_experiment(cfg)


class TestEmission:
    def test_series_csv(self, result, tmp_path):
        experiment.emit_run_outputs(result, str(tmp_path))
        text = (tmp_path / "instantaneous.csv").read_text().splitlines()
        assert text[0] == "run,t,mse"
        assert len(text) == 1 + 2 * result.config.T
        first = text[1].split(",")
        assert first[0] == "0" and first[1] == "1"
        float(first[2])

    def test_aggregate_csv(self, result, tmp_path):
        experiment.emit_run_outputs(result, str(tmp_path))
        text = (tmp_path / "aggregate.csv").read_text().splitlines()
        assert text[0] == ",".join(aggregate_header(result.config.series_names()))
        assert len(text) == 1 + result.config.T

    def test_manifest(self, result, tmp_path):
        experiment.emit_run_outputs(result, str(tmp_path))
        payload = json.loads((tmp_path / "manifest.json").read_text())
        assert payload["config_sha256"] == result.config.fingerprint()
        assert payload["seed"] == result.config.seed
        assert payload["runs_kept"] == 2
        assert payload["runs_excluded"] == 0


class TestSweep:
    def test_single_point_matches_run(self):
        cfg = ExperimentConfig(**TINY)
        rows, excluded, total = run_sweep(cfg, [cfg.sigma_c])
        assert excluded == 0 and total == cfg.monte_carlo_runs
        ref = run_experiment(cfg).final_window()
        got = {r["variant"]: (r["mse_mean"], r["mse_se"]) for r in rows}
        for name, (mean, se) in ref.items():
            assert got[name][0] == pytest.approx(mean)
            assert got[name][1] == pytest.approx(se)

    def test_negative_std_rejected(self):
        cfg = ExperimentConfig(**TINY)
        with pytest.raises(ValueError):
            run_sweep(cfg, [-0.1])

    def test_sweep_csv(self, tmp_path):
        rows = [{"sigma_c": 0.05, "variant": "a", "mse_mean": 1.0, "mse_se": 0.5}]
        path = tmp_path / "sweep.csv"
        experiment.write_sweep_csv(str(path), rows)
        lines = path.read_text().splitlines()
        assert lines[0] == "sigma_c,variant,mse_mean,mse_se"
        fields = lines[1].split(",")
        assert fields[1] == "a"
        assert float(fields[0]) == 0.05
        assert fields[2] == "1" and fields[3] == "0.5"


class TestLogLogSlope:
    def test_exact_power_law(self):
        xs = [100, 1000, 10000]
        ys = [5.0 * x ** -0.5 for x in xs]
        assert fit_loglog_slope(xs, ys) == pytest.approx(-0.5, abs=1e-12)


class TestCli:
    def test_run_deterministic_outputs(self, tmp_path):
        ini = write_ini(tmp_path / "cfg.ini")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["run", "--config", ini, "--out", str(out_a)]) == 0
        assert cli.main(["run", "--config", ini, "--out", str(out_b)]) == 0
        for name in ("instantaneous.csv", "static_hindsight.csv",
                     "hybrid_envelope_async.csv", "aggregate.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_run_infeasible_exit_code(self, tmp_path):
        ini = write_ini(tmp_path / "cfg.ini",
                        extra_sections="[hybrid_envelope]\neps = 50\n")
        with pytest.warns(UserWarning):
            code = cli.main(["run", "--config", ini, "--out",
                             str(tmp_path / "out")])
        assert code == 2

    def test_sweep_outputs(self, tmp_path):
        ini = write_ini(tmp_path / "cfg.ini")
        out = tmp_path / "sweep"
        assert cli.main(["sweep", "--config", ini, "--std", "0.05",
                         "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "sigma_c,variant,mse_mean,mse_se"
        assert len(lines) == 4
        assert (out / "manifest.json").exists()

    def test_sweep_empty_std(self, tmp_path):
        ini = write_ini(tmp_path / "cfg.ini")
        assert cli.main(["sweep", "--config", ini, "--std", ",",
                         "--out", str(tmp_path / "o")]) == 2

    def test_exclusion_exit(self):
        assert cli._exclusion_exit(0, 50) == 0
        assert cli._exclusion_exit(1, 50) == 0
        assert cli._exclusion_exit(3, 50) == 3
