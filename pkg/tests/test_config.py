"""
Tests for run configuration files and flag overrides
"""
import pytest

from src.utils.config import Config, RunConfig
from src.utils.errors import ConfigError, InvalidConfig


def test_defaults():
    config = RunConfig()
    assert config.checkpoint_path == 'data/model.sksm'
    assert config.batch_size == 32
    assert config.scale == 20.0
    assert config.mode == 'title'
    assert config.corpus_path is None


def test_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# toy run\n"
        "corpus_path = data/train.jsonl\n"
        "batch_size = 8\n"
        "scale = 10\n"
        "bidirectional = yes\n"
        "learning-rate = 0.01\n",
        encoding="utf-8",
    )
    config = RunConfig.from_file(path)
    assert config.corpus_path == 'data/train.jsonl'
    assert config.batch_size == 8
    assert config.scale == 10.0 and isinstance(config.scale, float)
    assert config.bidirectional is True
    assert config.learning_rate == 0.01
    assert config.epochs == 1


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.from_file(tmp_path / "absent.cfg")


@pytest.mark.parametrize("values", [
    {"batchsize": "8"},
    {"batch_size": "eight"},
    {"bidirectional": "maybe"},
])
def test_bad_values(values):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping(values)


def test_overrides_skip_unset_flags():
    base = RunConfig.from_mapping({"epochs": "3", "k": "20"})
    config = base.with_overrides(epochs=None, k=5, checkpoint_path="out/m.sksm")
    assert (config.epochs, config.k, config.checkpoint_path) == (3, 5, "out/m.sksm")
    with pytest.raises(ConfigError):
        base.with_overrides(colour="red")


def test_require_path(tmp_path):
    corpus = tmp_path / "train.jsonl"
    config = RunConfig(corpus_path=str(corpus))
    with pytest.raises(ConfigError, match="corpus_path not found"):
        config.require_path("corpus_path")
    corpus.write_text("", encoding="utf-8")
    assert config.require_path("corpus_path") == corpus
    with pytest.raises(ConfigError, match="benchmark_path is not set"):
        config.require_path("benchmark_path")


def test_sub_configs():
    config = RunConfig(hidden_dim=32, num_heads=4, data_seed=5, model_seed=9)
    encoder = config.encoder_config(vocab_size=40)
    assert encoder.ffn_dim == 128
    assert encoder.init_seed == 9
    assert config.train_config().shuffle_seed == 5
    with pytest.raises(InvalidConfig):
        RunConfig(hidden_dim=30, num_heads=4).encoder_config(vocab_size=40)
    with pytest.raises(InvalidConfig):
        RunConfig(batch_size=0).train_config()


def test_environment(monkeypatch, tmp_path):
    monkeypatch.setenv('TITLESKILLS_DATA_PATH', str(tmp_path / 'd'))
    monkeypatch.setenv('TITLESKILLS_LOG_FILE', 'true')
    config = Config()
    assert config.DATA_PATH == tmp_path / 'd'
    assert config.LOG_TO_FILE is True


def test_artifacts_follow_the_data_dir(tmp_path):
    config = RunConfig(checkpoint_path='models/m.sksm').under(tmp_path)
    assert config.vocab_path == str(tmp_path / 'vocab.txt')
    assert config.report_dir == str(tmp_path / 'reports')
    assert config.checkpoint_path == 'models/m.sksm'
    assert config.corpus_path is None
