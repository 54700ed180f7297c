import json

import pytest

from epfq.config import ConfigError, parse_config


def write_config(tmp_path, **overrides):
    cfg = {
        "data_dir": "data",
        "output_dir": "out",
        "oos_start": "2017-12-28",
        "oos_end": "2018-01-31",
        "specs": ["Expert", "HLM-QR^ResLoad_T201"],
    }
    cfg.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


class TestParseConfig:
    def test_defaults_are_reference_values(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        assert cfg.postproc_window == 364
        assert cfg.price_window == 728
        assert cfg.default_grid == "T201"
        assert cfg.seed == 0
        assert cfg.threads == 1

    def test_paths_resolve_relative_to_config(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        assert cfg.data_dir == (tmp_path / "data").resolve()
        assert cfg.output_dir == (tmp_path / "out").resolve()

    def test_small_window_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="postproc_window"):
            parse_config(write_config(tmp_path, postproc_window=10))

    def test_price_window_must_cover_postproc(self, tmp_path):
        with pytest.raises(ConfigError, match="price_window"):
            parse_config(write_config(tmp_path, postproc_window=364, price_window=100))

    def test_unknown_spec_lists_grammar(self, tmp_path):
        with pytest.raises(ConfigError, match="Expert"):
            parse_config(write_config(tmp_path, specs=["Nonsense-Model"]))

    def test_spec_without_grid_gets_default(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, specs=["HLM-QR^ResLoad"],
                                        default_grid="T21"))
        assert cfg.specs[0].grid_label == "T21"

    def test_bad_date(self, tmp_path):
        with pytest.raises(ConfigError, match="oos_start"):
            parse_config(write_config(tmp_path, oos_start="28.12.2017"))

    def test_reversed_range(self, tmp_path):
        with pytest.raises(ConfigError, match="oos_end"):
            parse_config(write_config(tmp_path, oos_end="2016-01-01"))

    def test_unknown_field(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown config field"):
            parse_config(write_config(tmp_path, typo_field=1))

    def test_missing_required_field(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"data_dir": "d"}))
        with pytest.raises(ConfigError, match="required"):
            parse_config(path)

    def test_duplicate_specs_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(write_config(tmp_path, specs=["Expert", "Expert"]))

    def test_cli_overrides_win(self, tmp_path):
        cfg = parse_config(write_config(tmp_path), overrides={"seed": 9, "specs": ["HLM"]})
        assert cfg.seed == 9
        assert [s.label for s in cfg.specs] == ["HLM"]

    def test_env_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EPFQ_SEED", "5")
        monkeypatch.setenv("EPFQ_SPECS", '["Expert"]')
        cfg = parse_config(write_config(tmp_path))
        assert cfg.seed == 5
        assert [s.label for s in cfg.specs] == ["Expert"]

    def test_threads_validated(self, tmp_path):
        with pytest.raises(ConfigError, match="threads"):
            parse_config(write_config(tmp_path, threads=0))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config(tmp_path / "nope.json")
