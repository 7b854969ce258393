import json
import math
from pathlib import Path

import pytest

from slsync.cli import (
    ConfigError,
    RunConfig,
    execute,
    main,
    parse_config,
    resolve_spec,
    serialize_config,
)

TINY_CUSTOM = {
    "seed": 42,
    "custom": {
        "name": "tiny",
        "base": {"drive": 0.3, "gamma2": 1.0, "gamma3": 0.1, "dim": 10},
        "axes": [["gamma2", [0.8, 1.2]]],
        "n_traj": 4,
        "cfg": {"dt": 2e-3, "t_burn": 0.5, "t_end": 0.5},
        "derive_dim": False,
    },
    "workers": 1,
}


class TestParseConfig:
    def test_minimal_preset_defaults(self):
        config = parse_config('{"preset": "fig1", "seed": 42}')
        assert config.preset == "fig1"
        assert config.seed == 42
        assert config.out_dir == "./out"
        assert config.emit_plots is True
        assert config.workers is None  # machine parallelism at run time

    def test_both_preset_and_custom_rejected(self):
        doc = dict(TINY_CUSTOM)
        doc["preset"] = "fig1"
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(json.dumps(doc))

    def test_neither_rejected(self):
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config('{"seed": 1}')

    def test_unknown_key_paths(self):
        with pytest.raises(ConfigError, match="unknown key 'frobnicate'"):
            parse_config('{"preset": "fig1", "frobnicate": 1}')
        doc = json.loads(json.dumps(TINY_CUSTOM))
        doc["custom"]["base"]["gamma9"] = 1.0
        with pytest.raises(ConfigError, match="custom.base.gamma9"):
            parse_config(json.dumps(doc))

    def test_type_mismatch_reported_with_path(self):
        doc = json.loads(json.dumps(TINY_CUSTOM))
        doc["custom"]["n_traj"] = "many"
        with pytest.raises(ConfigError, match="custom.n_traj"):
            parse_config(json.dumps(doc))

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="custom.axes"):
            parse_config('{"custom": {"base": {"gamma2": 1.0}}}')

    def test_malformed_json(self):
        with pytest.raises(ConfigError, match="malformed JSON"):
            parse_config("{nope")

    def test_unknown_preset_listed(self):
        with pytest.raises(ConfigError, match="fig1"):
            parse_config('{"preset": "fig99"}')

    def test_round_trip(self):
        config = parse_config(json.dumps(TINY_CUSTOM))
        doc = serialize_config(config)
        again = parse_config(json.dumps(doc))
        assert again.custom == config.custom
        assert again.seed == config.seed
        assert dict(again.custom.axes)["gamma2"] == (0.8, 1.2)


class TestResolveSpec:
    def test_preset_seed_threading(self):
        spec = resolve_spec(RunConfig(preset="fig1", seed=9))
        assert spec.cfg.seed == 9

    def test_trajectory_override(self):
        config = parse_config(json.dumps({**TINY_CUSTOM, "trajectories": 7}))
        assert resolve_spec(config).n_traj == 7


class TestExecute:
    @pytest.fixture
    def tiny_config(self, tmp_path):
        doc = json.loads(json.dumps(TINY_CUSTOM))
        doc["out_dir"] = str(tmp_path / "out")
        return parse_config(json.dumps(doc))

    def test_writes_expected_files(self, tiny_config, capsys):
        status = execute(tiny_config)
        assert status == 0
        out = Path(tiny_config.out_dir)
        assert (out / "tiny.csv").exists()
        assert (out / "tiny_provenance.json").exists()
        assert (out / "tiny_F.svg").exists()
        assert (out / "tiny_S.svg").exists()
        err = capsys.readouterr().err
        assert "[1/2]" in err and "[2/2]" in err

    def test_csv_schema_and_determinism(self, tiny_config):
        execute(tiny_config)
        out = Path(tiny_config.out_dir)
        first = (out / "tiny.csv").read_bytes()
        header = first.decode().splitlines()[0]
        assert header == (
            "gamma2,F,F_mc_stderr,S0_abs,S_HD_abs,S_HD_phase,P0,P_HD,F_purity,status"
        )
        body = first.decode().splitlines()[1]
        assert body.split(",")[-1] == "ok"
        # locale-independent float formatting: decimal points only
        for cell in body.split(",")[:-1]:
            float(cell)
        execute(tiny_config)
        assert (out / "tiny.csv").read_bytes() == first

    def test_provenance_contents(self, tiny_config):
        execute(tiny_config)
        doc = json.loads(
            (Path(tiny_config.out_dir) / "tiny_provenance.json").read_text()
        )
        assert doc["seed"] == 42
        assert doc["n_points"] == 2
        assert doc["n_failed"] == 0
        assert len(doc["parameter_hash"]) == 64

    def test_no_plots_flag(self, tmp_path):
        doc = json.loads(json.dumps(TINY_CUSTOM))
        doc["out_dir"] = str(tmp_path)
        doc["emit_plots"] = False
        assert execute(parse_config(json.dumps(doc))) == 0
        assert not list(tmp_path.glob("*.svg"))

    def test_stats_sidecar_for_repeated_runs(self, tmp_path):
        doc = json.loads(json.dumps(TINY_CUSTOM))
        doc["custom"]["n_runs"] = 3
        doc["custom"]["axes"] = [["gamma2", [1.0]]]
        doc["out_dir"] = str(tmp_path)
        assert execute(parse_config(json.dumps(doc))) == 0
        stats = (tmp_path / "tiny_stats.csv").read_text().splitlines()
        assert stats[0] == "gamma2,mean_F,std_F,n_runs"
        cells = stats[1].split(",")
        assert float(cells[1]) > 0
        assert float(cells[2]) >= 0

    def test_difference_sidecar_for_squeezing_pair(self, tmp_path):
        doc = json.loads(json.dumps(TINY_CUSTOM))
        doc["custom"]["axes"] = [
            ["gamma2", [1.0]],
            ["squeezing", [0.0, 0.05]],
        ]
        doc["out_dir"] = str(tmp_path)
        assert execute(parse_config(json.dumps(doc))) == 0
        diff = (tmp_path / "tiny_difference.csv").read_text().splitlines()
        assert diff[0] == "gamma2,delta_F,delta_F_stderr"
        assert len(diff) == 2

    def test_failing_sweep_nonzero_exit(self, tmp_path, capsys):
        doc = json.loads(json.dumps(TINY_CUSTOM))
        doc["custom"]["base"]["drive"] = 0.0
        doc["out_dir"] = str(tmp_path)
        assert execute(parse_config(json.dumps(doc))) == 1
        assert "error" in capsys.readouterr().err


class TestMain:
    def test_list_presets(self, capsys):
        assert main(["--list-presets"]) == 0
        out = capsys.readouterr().out
        assert "fig1" in out and "fig8" in out

    def test_requires_config_or_preset(self, capsys):
        assert main([]) == 2
        assert "provide --config or --preset" in capsys.readouterr().err

    def test_config_file_with_overrides(self, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        doc = json.loads(json.dumps(TINY_CUSTOM))
        cfg_path.write_text(json.dumps(doc))
        out_dir = tmp_path / "results"
        status = main([
            "--config", str(cfg_path),
            "--out", str(out_dir),
            "--no-plots",
            "--seed", "7",
            "--trajectories", "5",
        ])
        assert status == 0
        assert (out_dir / "tiny.csv").exists()
        doc = json.loads((out_dir / "tiny_provenance.json").read_text())
        assert doc["seed"] == 7

    def test_missing_config_file(self, capsys):
        assert main(["--config", "/nonexistent/run.json"]) == 2
        assert "error" in capsys.readouterr().err

    def test_bad_preset_flag(self, capsys):
        assert main(["--preset", "fig99", "--out", "/tmp/x"]) == 2
