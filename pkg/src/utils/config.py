"""
Configuration management for titleskills
"""
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values, load_dotenv

from src.utils.errors import ConfigError

# Load environment variables
load_dotenv()


class Config:
    def __init__(self):
        # Core paths
        self.DATA_PATH = Path(os.getenv('TITLESKILLS_DATA_PATH', Path.cwd() / 'data'))
        self.LOGS_PATH = Path(os.getenv('TITLESKILLS_LOGS_PATH', Path.cwd() / 'logs'))

        # Logging
        self.LOG_LEVEL = os.getenv('TITLESKILLS_LOG_LEVEL', 'INFO')
        self.LOG_TO_FILE = os.getenv('TITLESKILLS_LOG_FILE', 'false').lower() in ['1', 'true', 'yes']


ARTIFACT_FIELDS = ('vocab_path', 'checkpoint_path', 'index_path', 'report_dir', 'log_path')

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


def _coerce(key, raw, default):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            lowered = str(raw).lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if raw in (None, ''):
            return None
        return str(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key {key!r}: cannot read value {raw!r}") from e


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration: file values, then explicit flags"""
    # paths
    corpus_path: Optional[str] = None
    benchmark_path: Optional[str] = None
    gazetteer_path: Optional[str] = None
    vocab_path: str = 'data/vocab.txt'
    checkpoint_path: str = 'data/model.sksm'
    index_path: str = 'data/index.skix'
    report_dir: str = 'data/reports'
    log_path: str = 'data/train_log.jsonl'
    # seeds
    data_seed: int = 0
    model_seed: int = 0
    # encoder
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 0
    max_positions: int = 128
    pooled_dim: int = 32
    dropout_rate: float = 0.0
    init_std: float = 0.02
    # training
    min_frequency: int = 1
    batch_size: int = 32
    epochs: int = 1
    learning_rate: float = 1e-3
    scale: float = 20.0
    weight_decay: float = 0.01
    validation_fraction: float = 0.05
    checkpoint_every: int = 100
    bidirectional: bool = False
    # inference
    mode: str = 'title'
    k: int = 10

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values):
        defaults = cls()
        known = set(cls.field_names())
        parsed = {}
        for key, raw in values.items():
            name = key.strip().lower().replace('-', '_')
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[name] = _coerce(name, raw, getattr(defaults, name))
        return cls(**parsed)

    @classmethod
    def from_file(cls, path):
        """Read a flat ``key = value`` file (``#`` comments allowed)"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_mapping(dotenv_values(path))

    def with_overrides(self, **overrides):
        """Apply flags that were given explicitly (None means not given)"""
        given = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(given) - set(self.field_names())
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        coerced = {k: _coerce(k, v, getattr(RunConfig(), k)) for k, v in given.items()}
        return replace(self, **coerced)

    def under(self, data_dir):
        """Move artifact paths still at their defaults into data_dir"""
        defaults = RunConfig()
        moved = {
            name: str(Path(data_dir) / Path(getattr(self, name)).name)
            for name in ARTIFACT_FIELDS
            if getattr(self, name) == getattr(defaults, name)
        }
        return replace(self, **moved)

    def require_path(self, key):
        """Return an input path that must exist"""
        value = getattr(self, key)
        if not value:
            raise ConfigError(f"{key} is not set")
        path = Path(value)
        if not path.exists():
            raise ConfigError(f"{key} not found: {path}")
        return path

    def encoder_config(self, vocab_size):
        from src.models.encoder import EncoderConfig
        config = EncoderConfig(
            vocab_size=vocab_size,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim or 4 * self.hidden_dim,
            max_positions=self.max_positions,
            pooled_dim=self.pooled_dim,
            dropout_rate=self.dropout_rate,
            init_std=self.init_std,
            init_seed=self.model_seed,
        )
        config.validate()
        return config

    def train_config(self):
        from src.services.training_service import TrainConfig
        config = TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            scale=self.scale,
            weight_decay=self.weight_decay,
            shuffle_seed=self.data_seed,
            validation_fraction=self.validation_fraction,
            checkpoint_every=self.checkpoint_every,
            bidirectional=self.bidirectional,
        )
        config.validate()
        return config

    def to_dict(self):
        return {name: getattr(self, name) for name in self.field_names()}
