import pytest

from cilearn.config import (
    config_to_text,
    load_config,
    parse_config_text,
    save_config,
)
from cilearn.harness import StreamConfig


GOOD = """
# stream shape
classes_per_task = 2
samples_per_class = 40
epsilon = 0.3
temperature = 2.0
epochs = 5
finetune_epochs = 2
seed = 11
curriculum_enabled = true
iss_enabled = false
dataset = synthetic
synthetic_classes = 4
synthetic_dim = 4
synthetic_separation = 6.0
"""


class TestParse:
    def test_good_config(self):
        cfg = parse_config_text(GOOD)
        assert cfg.classes_per_task == 2
        assert cfg.samples_per_class == 40
        assert cfg.seed == 11
        assert cfg.curriculum_enabled is True
        assert cfg.iss_enabled is False
        assert cfg.epsilon == pytest.approx(0.3)

    def test_unspecified_keys_take_defaults(self):
        cfg = parse_config_text("seed = 5")
        assert cfg.epsilon == StreamConfig().epsilon
        assert cfg.temperature == StreamConfig().temperature

    def test_unknown_key_is_an_error(self):
        with pytest.raises(ValueError, match="unknown key 'momentum'"):
            parse_config_text("momentum = 0.9")

    def test_duplicate_key_is_an_error(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_config_text("seed = 1\nseed = 2")

    def test_bad_boolean(self):
        with pytest.raises(ValueError, match="boolean"):
            parse_config_text("iss_enabled = maybe")

    def test_bad_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config_text("this is not a config line")

    def test_inline_comments_stripped(self):
        cfg = parse_config_text("seed = 3  # reproducibility\n")
        assert cfg.seed == 3

    def test_invalid_values_rejected_at_parse(self):
        with pytest.raises(ValueError, match="epsilon"):
            parse_config_text("epsilon = 1.7")


class TestRoundTrip:
    def test_text_round_trip(self):
        cfg = StreamConfig(seed=77, epsilon=0.25, iss_enabled=False)
        assert parse_config_text(config_to_text(cfg)) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = StreamConfig(seed=3, dataset="synthetic", epochs=7)
        path = tmp_path / "run.cfg"
        save_config(path, cfg)
        assert load_config(path) == cfg

    def test_missing_file_reports_path(self, tmp_path):
        with pytest.raises(ValueError, match="nope.cfg"):
            load_config(tmp_path / "nope.cfg")
