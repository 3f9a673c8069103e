import json
import warnings

import numpy as np
import pytest
import yaml

from rlforecast.errors import ConfigurationError
from rlforecast.harness import (BENCHMARK_METHODS, ExperimentConfig, StubCommittee, SyntheticSpec,
                                config_from_dict, export_results, gen_synthetic, load_config, load_result,
                                parse_seeds, prepare, run_experiment)
from rlforecast.harness import experiment as experiment_mod
from rlforecast.harness.cli import main
from rlforecast.harness.export import AGGREGATE_HEADER, PER_SEED_HEADER

TINY = {
    "synthetic": {"n_series": 4, "length": 120},
    "committee": {"mode": "stub"},
    "stacking": {"epochs": 5},
    "selector": {"max_episodes": 6, "batch_size": 8, "arirbes_n": 2, "arirbes_patience": 2},
    "seeds": [0],
}


def tiny(**over) -> ExperimentConfig:
    data = json.loads(json.dumps(TINY))
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(data.get(k), dict):
            data[k].update(v)
        else:
            data[k] = v
    return config_from_dict(data)


class TestSynthetic:
    def test_shape_and_sidecar(self, tmp_path):
        ds = gen_synthetic(SyntheticSpec(n_series=10, length=300), seed=3)
        assert len(ds.series) == 10 and ds.signal.shape == ds.regime.shape == (10, 300)
        values = np.stack([s.values for s in ds.series])
        assert (values >= 0).all() and np.array_equal(values, np.round(values))
        assert set(np.unique(ds.regime)) == {0, 1}
        demand, sidecar = ds.write(tmp_path)
        assert demand.read_text().count("\n") == 1 + 3000
        assert sidecar.read_text().splitlines()[0] == "series_id,date,regime,signal"

    def test_pure_sine_range(self):
        spec = SyntheticSpec(n_series=3, length=70, regimes=["sinusoidal"], segment_length=70, noise=0.0,
                             level=[5.0, 5.0], amplitude=5.0, period=7)
        ds = gen_synthetic(spec, 1)
        values = np.stack([s.values for s in ds.series])
        assert values.min() >= 0 and values.max() <= 10
        assert np.allclose(ds.signal.mean(axis=1), 5.0, atol=1e-9)

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        gen_synthetic(SyntheticSpec(), 7).write(a)
        gen_synthetic(SyntheticSpec(), 7).write(b)
        for name in ("demand.csv", "regimes.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        assert (a / "demand.csv").read_bytes() != gen_synthetic(SyntheticSpec(), 8).write(tmp_path / "c")[0].read_bytes()

    def test_segments_alternate(self):
        ds = gen_synthetic(SyntheticSpec(n_series=2, length=56, segment_length=14), 0)
        for labels in ds.regime:
            blocks = labels.reshape(4, 14)
            assert (blocks == blocks[:, :1]).all()
            assert (np.diff(blocks[:, 0]) != 0).all()

    @pytest.mark.parametrize("bad", [{"regimes": ["seasonal"]}, {"segment_length": 0}, {"noise": -1},
                                     {"level": [5, 1]}, {"n_series": 0}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigurationError):
            SyntheticSpec(**bad)


class TestStubCommittee:
    @pytest.fixture
    def stub(self):
        cfg = tiny()
        data = prepare(cfg)
        return StubCommittee(data.synthetic, {s.series_id: s for s in data.series}, 0.5, (1, 4), seed=0), data

    def test_specialists_and_noise(self, stub):
        committee, data = stub
        sid, origin = data.ids[0], 40
        cf = committee.forecast(None, 28, context=[(sid, origin)])[0]
        truth = committee.truth(sid, np.arange(origin, origin + 28))
        labels = data.synthetic.regime[0, origin:origin + 28]
        for r, slot in enumerate((1, 4)):
            np.testing.assert_array_equal(cf[labels == r, slot], truth[labels == r])
            np.testing.assert_allclose(cf[labels != r, slot], truth[labels != r] + 0.5)
        noise = np.abs(cf[:, [0, 2, 3, 5]] - truth[:, None])
        assert (noise >= 0.5 - 1e-12).all() and (noise <= 1.0 + 1e-12).all()
        np.testing.assert_array_equal(cf, committee.forecast(None, 28, context=[(sid, origin)])[0])

    def test_needs_context(self, stub):
        with pytest.raises(ConfigurationError):
            stub[0].forecast(np.zeros((1, 35)), 5)

    def test_bad_slots(self, stub):
        committee, data = stub
        with pytest.raises(ConfigurationError):
            StubCommittee(data.synthetic, committee.metadata, specialists=(1, 1))


class TestConfig:
    def test_defaults_are_desk_benchmark(self):
        cfg = ExperimentConfig()
        assert cfg.window == 35 and cfg.horizon == 28 and cfg.seeds == list(range(10))
        assert cfg.ordered_methods == list(BENCHMARK_METHODS) and len(cfg.methods) == 11
        assert cfg.dataset.path is None

    def test_yaml_round_trip(self, tmp_path):
        cfg = tiny()
        assert load_config(cfg.dump(tmp_path / "c.yaml")) == cfg

    def test_partial_nested_override_keeps_other_defaults(self):
        cfg = config_from_dict({"selector": {"gamma": 0.7}})
        assert cfg.selector.gamma == 0.7
        assert cfg.selector.update_every == ExperimentConfig().selector.update_every

    @pytest.mark.parametrize("data", [{"nope": 1}, {"selector": {"gama": 0.9}}, {"window": 0}, {"seeds": []},
                                      {"methods": ["FFNN", "Magic"]}, {"window": 20},
                                      {"committee": {"architectures": {"RNN": {}}}},
                                      {"committee": {"mode": "oracle"}}, {"metrics": {"rounding": "down"}}])
    def test_invalid(self, data):
        with pytest.raises(ConfigurationError):
            config_from_dict(data)

    def test_window_free_without_selectors(self):
        assert config_from_dict({"window": 20, "methods": ["FFNN", "Mean"]}).window == 20

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seeds: [1, 2\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_parse_seeds(self):
        assert parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
        with pytest.raises(ConfigurationError):
            parse_seeds("a-b")

    def test_favorita_protocol_config(self, project_root):
        cfg = load_config(project_root / "configs" / "favorita.yaml")
        assert cfg.dataset.max_series == 200
        assert (cfg.dataset.start, cfg.dataset.end) == ("2013-01-01", "2014-03-31")
        assert cfg.horizon == 28 and cfg.validation == 28 and len(cfg.methods) == 11


class TestExperiment:
    def test_single_seed_stub_has_eleven_rows(self):
        result = run_experiment(tiny(), out=None)
        assert result.ok
        assert [a.method for a in result.aggregates()] == list(BENCHMARK_METHODS)
        assert all(len(result.records_for(m)) == 1 for m in BENCHMARK_METHODS)

    def test_ten_seeds_ten_records(self):
        cfg = tiny(seeds=list(range(10)), methods=["FFNN", "Mean", "Median"])
        result = run_experiment(cfg, out=None)
        assert all(len(result.records_for(m)) == 10 for m in cfg.methods)

    def test_arirbes_on_and_off_rows(self):
        cfg = tiny(methods=list(BENCHMARK_METHODS) + ["CRFFNN"])
        result = run_experiment(cfg, out=None)
        names = [a.method for a in result.aggregates()]
        assert "CRFFNN" in names and "CRFFNN-ARIRBES" in names
        assert result.train_seconds("CRFFNN") > 0 and result.train_seconds("CRFFNN-ARIRBES") > 0
        assert result.stop_episodes["CRFFNN-ARIRBES"][0] <= result.stop_episodes["CRFFNN"][0] == 6

    def test_oracle_row_is_lower_bound_on_members(self):
        cfg = tiny(methods=["FFNN", "LSTM", "GRU", "BiLSTM", "CNN", "CNN-LSTM", "Oracle"])
        result = run_experiment(cfg, out=None)
        oracle = result.records_for("Oracle")[0]
        # per-step argmin of absolute error bounds every member's MAE, hence MASE
        assert all(oracle.mase <= r.mase + 1e-12 for r in result.records if r.method != "Oracle")

    def test_test_actuals_read_only_by_metrics(self, monkeypatch):
        cfg = tiny(methods=list(BENCHMARK_METHODS) + ["CRFFNN", "Oracle"])
        data = prepare(cfg)
        seen = []
        original = experiment_mod.run_seed

        def traced(config, d, seed, out, stop_after="evaluate"):
            outcome = original(config, d, seed, out, stop_after)
            seen.append(list(outcome.trace))
            return outcome

        monkeypatch.setattr(experiment_mod, "run_seed", traced)
        reveal = data.vault.reveal
        calls = []

        def spy(stage):
            calls.append(stage)
            return reveal(stage)

        data.vault.reveal = spy
        result = run_experiment(cfg, data, out=None)
        assert result.ok and calls == ["metrics"] and data.vault.access_log == ["metrics"]
        assert seen[0][-1] == "metrics"
        # every visible series ends at the validation boundary
        for s in data.series:
            assert len(s.transformed) == data.splits[s.series_id].val_end

    def test_failure_manifest(self, tmp_path, monkeypatch):
        real = experiment_mod.stacking_train

        def flaky(config, cf, actual, seed):
            if seed == 1:
                raise FloatingPointError("boom")
            return real(config, cf, actual, seed)

        monkeypatch.setattr(experiment_mod, "stacking_train", flaky)
        result = run_experiment(tiny(seeds=[0, 1]), out=tmp_path)
        assert not result.ok
        manifest = json.loads((tmp_path / "failures.json").read_text())
        assert manifest[0]["seed"] == 1 and manifest[0]["stage"] == "ensembles" and "boom" in manifest[0]["error"]
        assert {r.seed for r in result.records} == {0}
        assert (tmp_path / "aggregate.csv").exists()

    def test_trained_committee_is_cached(self, tmp_path, monkeypatch):
        cfg = tiny(committee={"mode": "trained", "train": {"epochs": 1, "batch_size": 256}},
                   methods=["FFNN", "CNN", "Mean"])
        first = run_experiment(cfg, out=tmp_path)
        assert (tmp_path / "seed-0" / "committee" / "final" / "committee.json").exists()

        def refuse(*args, **kwargs):
            raise AssertionError("committee retrained despite cache")

        monkeypatch.setattr(experiment_mod, "train_committee_stages", refuse)
        second = run_experiment(cfg, out=tmp_path)
        assert second.ok and second.records == first.records

    def test_persisted_artefacts(self, tmp_path):
        run_experiment(tiny(), out=tmp_path)
        seed_dir = tmp_path / "seed-0"
        assert (seed_dir / "forecasts" / "crffnn-arirbes.csv").exists()
        assert (seed_dir / "selectors" / "ffnn-ddql-rewards.csv").exists()
        assert load_config(tmp_path / "config.yaml") == tiny()

    def test_worker_pool_matches_serial(self, monkeypatch):
        cfg = tiny(seeds=[0, 1], methods=["FFNN", "Mean", "Stacking"])
        serial = run_experiment(cfg, out=None, workers=1)
        pooled = run_experiment(cfg, out=None, workers=2)
        assert serial.records == pooled.records

    def test_worker_env(self, monkeypatch):
        monkeypatch.setenv(experiment_mod.WORKERS_ENV, "3")
        assert experiment_mod.worker_count() == 3
        monkeypatch.setenv(experiment_mod.WORKERS_ENV, "zero")
        with pytest.raises(ConfigurationError):
            experiment_mod.worker_count()

    def test_csv_dataset_window_and_series_cap(self, tmp_path):
        gen_synthetic(SyntheticSpec(n_series=5, length=200), 0).write(tmp_path)
        cfg = tiny(dataset={"path": str(tmp_path / "demand.csv"), "max_series": 3,
                            "start": "2013-01-11", "end": "2013-06-09"},
                   committee={"mode": "trained", "train": {"epochs": 1, "batch_size": 256}},
                   methods=["FFNN", "Mean"])
        data = prepare(cfg)
        assert data.ids == ["S000", "S001", "S002"]
        assert all(data.splits[i].end == 150 for i in data.ids)
        assert run_experiment(cfg, data, out=None).ok

    def test_short_series_skipped(self):
        cfg = tiny(synthetic={"n_series": 2, "length": 60})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(Exception, match="no series long enough"):
                prepare(cfg)


@pytest.fixture(scope="module")
def result():
    return run_experiment(tiny(seeds=[0, 1]), out=None)


class TestExport:
    def test_tables(self, result, tmp_path):
        export_results(result, tmp_path)
        agg = (tmp_path / "aggregate.csv").read_text().splitlines()
        assert agg[0] == ",".join(AGGREGATE_HEADER)
        assert len(agg) == 1 + 11
        per_seed = (tmp_path / "per_seed.csv").read_text().splitlines()
        assert per_seed[0] == ",".join(PER_SEED_HEADER) and len(per_seed) == 1 + 11 * 2

    def test_json_round_trip(self, result, tmp_path):
        export_results(result, tmp_path, formats=("json",))
        back = load_result(tmp_path / "result.json")
        assert back.aggregates() == result.aggregates()
        export_results(back, tmp_path / "again")
        export_results(result, tmp_path / "orig")
        assert (tmp_path / "again" / "aggregate.csv").read_bytes() == (tmp_path / "orig" / "aggregate.csv").read_bytes()

    def test_timing_column_blank_when_disabled(self, tmp_path):
        result = run_experiment(tiny(record_timing=False, methods=["FFNN", "Mean"]), out=None)
        export_results(result, tmp_path)
        rows = (tmp_path / "aggregate.csv").read_text().splitlines()[1:]
        assert all(r.endswith(",") for r in rows)

    def test_unwritable(self, result, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            export_results(result, blocker / "sub")

    def test_deterministic_export(self, tmp_path):
        cfg = tiny(record_timing=False)
        run_experiment(cfg, out=tmp_path / "a")
        run_experiment(cfg, out=tmp_path / "b")
        for name in ("aggregate.csv", "per_seed.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestCli:
    def test_synth_and_preprocess(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path), "--seed", "2"]) == 0
        assert main(["preprocess", "--dataset", str(tmp_path / "demand.csv"), "--out", str(tmp_path / "pp")]) == 0
        meta = json.loads((tmp_path / "pp" / "metadata.json").read_text())
        assert len(meta) == 8 and all(v["mean_scale"] > 0 for v in meta.values())

    def test_staged_commands_and_export(self, tmp_path):
        cfg_path = tmp_path / "c.yaml"
        data = json.loads(json.dumps(TINY))
        data["committee"] = {"mode": "trained", "train": {"epochs": 1, "batch_size": 256}}
        cfg_path.write_text(yaml.safe_dump(data))
        out = tmp_path / "run"
        common = ["--config", str(cfg_path), "--out", str(out), "--seeds", "0"]
        assert main(["train-committee", *common]) == 0
        assert (out / "seed-0" / "committee" / "final" / "committee.json").exists()
        assert not (out / "aggregate.csv").exists()
        assert main(["train-selector", *common]) == 0
        assert (out / "seed-0" / "selectors" / "crffnn-arirbes-rewards.csv").exists()
        assert main(["evaluate", *common, "--methods", "FFNN,Mean,CRFFNN-ARIRBES", "--no-timing"]) == 0
        rows = (out / "aggregate.csv").read_text().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["FFNN", "Mean", "CRFFNN-ARIRBES"]
        assert main(["export", "--result", str(out / "result.json"), "--out", str(tmp_path / "x"),
                     "--format", "csv"]) == 0
        assert (tmp_path / "x" / "aggregate.csv").read_bytes() == (out / "aggregate.csv").read_bytes()

    def test_partial_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(experiment_mod, "stacking_train", lambda *a: (_ for _ in ()).throw(ValueError("x")))
        cfg_path = tmp_path / "c.yaml"
        cfg_path.write_text(yaml.safe_dump(TINY))
        assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "r"), "--synthetic"]) == 1
        assert (tmp_path / "r" / "failures.json").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        assert main(["run", "--out", str(tmp_path), "--methods", "Nope"]) == 2
        assert "unknown methods" in capsys.readouterr().err
