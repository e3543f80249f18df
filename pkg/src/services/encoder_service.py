"""
Encoder Service - initialization, pooling heads, embedding and checkpoints

Both branches run through the same SkillEncoder: titles are mean-pooled over
their content tokens, skill lists over their [SKILL] markers, and the shared
pooler maps either mean to a unit vector.
"""
import hashlib
import json
import struct
from pathlib import Path
from typing import List, Sequence

import numpy as np
import torch
from torch import nn

from src.models.embedding import Embedding, Mode, combine
from src.models.encoder import EncoderConfig, SkillEncoder, parameter_count
from src.models.records import JobRecord
from src.services.text_service import clean_text
from src.services.tokenizer_service import (
    NON_CONTENT_IDS, UNK_ID, EncodedInput, Vocabulary, encode_skills, encode_title, pad_batch,
)
from src.utils.errors import (
    EmptyMask, FingerprintMismatch, FormatVersionMismatch, IoFailure, NoSkillFits, NoSkillPositions,
)
from src.utils.files import atomic_write_bytes, atomic_write_text, read_bytes
from src.utils.logging import get_logger

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b'SKSM'
CHECKPOINT_VERSION = 1
# magic, version, then config integers (rates in millionths)
CHECKPOINT_HEADER = struct.Struct('<4sI10q')
EMBED_BATCH_SIZE = 64


def init_params(config: EncoderConfig) -> SkillEncoder:
    """Seeded truncated-normal weights, zero biases, unit layer norms"""
    config.validate()
    params = SkillEncoder(config)
    generator = torch.Generator().manual_seed(config.init_seed)
    std = config.init_std
    with torch.no_grad():
        for module in params.modules():
            if isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
            elif isinstance(module, (nn.Linear, nn.Embedding)):
                nn.init.trunc_normal_(module.weight, 0.0, std, -2 * std, 2 * std, generator=generator)
                if getattr(module, 'bias', None) is not None:
                    nn.init.zeros_(module.bias)
    params.eval()
    return params


def forward(params: SkillEncoder, encoded: EncodedInput) -> torch.Tensor:
    """Hidden states (len(encoded), hidden_dim) for one input"""
    ids = torch.tensor([encoded.ids], dtype=torch.long)
    mask = torch.tensor([encoded.mask], dtype=torch.bool)
    return params(ids, mask)[0]


def title_weights(ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Uniform weights over content tokens; CLS alone when a row has none"""
    if (mask.sum(dim=1) == 0).any():
        raise EmptyMask("input has no masked-in positions")
    content = mask & ~torch.isin(ids, torch.tensor(NON_CONTENT_IDS, dtype=ids.dtype))
    content[content.sum(dim=1) == 0, 0] = True
    content = content.to(torch.float64)
    return content / content.sum(dim=1, keepdim=True)


def skill_weights(positions_per_row: Sequence[Sequence[int]], length: int, mask=None) -> torch.Tensor:
    """Uniform weights over each row's [SKILL] positions"""
    weights = torch.zeros(len(positions_per_row), length, dtype=torch.float64)
    for row, positions in enumerate(positions_per_row):
        if not positions:
            raise NoSkillPositions("skills input has no [SKILL] positions")
        for position in positions:
            if not 0 <= position < length or (mask is not None and not bool(mask[row, position])):
                raise NoSkillPositions(f"[SKILL] position {position} is outside the real tokens")
        weights[row, list(positions)] = 1.0 / len(positions)
    return weights


def pooling_weights(inputs: Sequence[EncodedInput], ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    weights = title_weights(ids, mask)
    skill_rows = [row for row, item in enumerate(inputs) if item.mode is Mode.SKILLS]
    if skill_rows:
        weights[skill_rows] = skill_weights(
            [inputs[row].skill_positions for row in skill_rows], ids.shape[1], mask[skill_rows],
        )
    return weights


def encode_batch(params: SkillEncoder, inputs: Sequence[EncodedInput]) -> torch.Tensor:
    """Differentiable (batch, pooled_dim) unit vectors for mixed title/skills inputs"""
    ids, mask = pad_batch(inputs)
    hidden = params(ids, mask)
    return params.pool(hidden, pooling_weights(inputs, ids, mask))


def _as_embedding(vector: torch.Tensor, mode: Mode) -> Embedding:
    return Embedding.unit(vector.detach().cpu().double().numpy(), mode)


def pool_title(params: SkillEncoder, hidden: torch.Tensor, mask, ids) -> Embedding:
    mask = torch.as_tensor(mask, dtype=torch.bool).reshape(1, -1)
    ids = torch.as_tensor(ids, dtype=torch.long).reshape(1, -1)
    weights = title_weights(ids, mask)
    return _as_embedding(params.pool(hidden[None], weights)[0], Mode.TITLE)


def pool_skills(params: SkillEncoder, hidden: torch.Tensor, skill_positions, mask=None) -> Embedding:
    if mask is not None:
        mask = torch.as_tensor(mask, dtype=torch.bool).reshape(1, -1)
    weights = skill_weights([tuple(skill_positions)], hidden.shape[0], mask)
    return _as_embedding(params.pool(hidden[None], weights)[0], Mode.SKILLS)


def _encode_records(params, inputs, batch_size):
    vectors = []
    for start in range(0, len(inputs), batch_size):
        vectors.append(encode_batch(params, inputs[start:start + batch_size]))
    return torch.cat(vectors) if vectors else torch.empty(0, params.config.pooled_dim)


def embed_many(params: SkillEncoder, vocab: Vocabulary, records: Sequence[JobRecord], mode,
               batch_size: int = EMBED_BATCH_SIZE) -> List[Embedding]:
    mode = Mode(mode)
    was_training = params.training
    params.eval()
    try:
        with torch.no_grad():
            if mode is Mode.SKILLS:
                inputs = [encode_skills(r.skills, vocab) for r in records]
                return [_as_embedding(v, mode) for v in _encode_records(params, inputs, batch_size)]

            titles = [encode_title(clean_text(r.title), vocab) for r in records]
            title_vectors = [_as_embedding(v, Mode.TITLE) for v in _encode_records(params, titles, batch_size)]
            if mode is Mode.TITLE:
                return title_vectors

            with_skills = [i for i, r in enumerate(records) if r.skills]
            skills = [encode_skills(records[i].skills, vocab) for i in with_skills]
            skill_vectors = dict(zip(
                with_skills,
                (_as_embedding(v, Mode.SKILLS) for v in _encode_records(params, skills, batch_size)),
            ))
            combined = []
            for i, title_vector in enumerate(title_vectors):
                if i in skill_vectors:
                    combined.append(combine(title_vector, skill_vectors[i]))
                else:
                    combined.append(Embedding(title_vector.values, Mode.COMBINED))
            return combined
    finally:
        params.train(was_training)


def embed(params: SkillEncoder, vocab: Vocabulary, record: JobRecord, mode) -> Embedding:
    return embed_many(params, vocab, [record], mode)[0]


def baseline_static_embed(record: JobRecord, mode, table: np.ndarray, vocab: Vocabulary) -> Embedding:
    """Mean of static word vectors, order-free"""
    mode = Mode(mode)
    title_words = clean_text(record.title).split()
    skill_words = [w for skill in record.skills for w in skill.lower().split()]
    if mode is Mode.TITLE:
        words = title_words
    elif mode is Mode.SKILLS:
        if not skill_words:
            raise NoSkillFits("no skills to embed")
        words = skill_words
    else:
        words = title_words + skill_words
    # sorted ids make the floating-point sum independent of word order
    ids = sorted(vocab.id_of(w) for w in words) or [UNK_ID]
    return Embedding.unit(np.asarray(table, dtype=np.float64)[ids].mean(axis=0), mode)


class DualEncoder:
    """The trained title/skills encoder behind the comparison protocol"""

    def __init__(self, params: SkillEncoder, vocab: Vocabulary, name: str = 'dual-encoder'):
        self.params = params
        self.vocab = vocab
        self.name = name

    @property
    def dim(self) -> int:
        return self.params.config.pooled_dim

    @property
    def fingerprint(self) -> bytes:
        return hashlib.sha256(serialize_checkpoint(self.params)).digest()

    def embed(self, record, mode) -> Embedding:
        return embed(self.params, self.vocab, record, mode)

    def embed_many(self, records, mode) -> List[Embedding]:
        return embed_many(self.params, self.vocab, records, mode)


class StaticBaseline:
    """Seeded random word table averaged per record"""

    def __init__(self, vocab: Vocabulary, dim: int, seed: int = 0, name: str = 'static-baseline'):
        self.vocab = vocab
        self.name = name
        self.table = np.random.default_rng(seed).standard_normal((len(vocab), dim))

    @property
    def dim(self) -> int:
        return int(self.table.shape[1])

    @property
    def fingerprint(self) -> bytes:
        digest = hashlib.sha256(self.table.astype('<f8').tobytes())
        digest.update(self.vocab.sha256().encode('ascii'))
        return digest.digest()

    def embed(self, record, mode) -> Embedding:
        return baseline_static_embed(record, mode, self.table, self.vocab)

    def embed_many(self, records, mode) -> List[Embedding]:
        return [self.embed(record, mode) for record in records]


# --- checkpoints ---

def _header_values(config: EncoderConfig):
    return (
        config.vocab_size, config.hidden_dim, config.num_layers, config.num_heads, config.ffn_dim,
        config.max_positions, config.pooled_dim, config.init_seed,
        round(config.dropout_rate * 1_000_000), round(config.init_std * 1_000_000),
    )


def serialize_checkpoint(params: SkillEncoder) -> bytes:
    parts = [CHECKPOINT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, *_header_values(params.config))]
    for tensor in params.state_dict().values():
        parts.append(tensor.detach().cpu().to(torch.float32).numpy().astype('<f4').tobytes())
    return b''.join(parts)


def deserialize_checkpoint(data: bytes) -> SkillEncoder:
    if len(data) < CHECKPOINT_HEADER.size:
        raise IoFailure("truncated checkpoint file")
    magic, version, *values = CHECKPOINT_HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise FormatVersionMismatch(f"not a checkpoint file (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise FormatVersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    (vocab_size, hidden_dim, num_layers, num_heads, ffn_dim,
     max_positions, pooled_dim, init_seed, dropout_ppm, init_std_ppm) = values
    config = EncoderConfig(
        vocab_size=vocab_size, hidden_dim=hidden_dim, num_layers=num_layers, num_heads=num_heads,
        ffn_dim=ffn_dim, max_positions=max_positions, pooled_dim=pooled_dim,
        dropout_rate=dropout_ppm / 1_000_000, init_std=init_std_ppm / 1_000_000, init_seed=init_seed,
    )
    params = SkillEncoder(config)
    offset = CHECKPOINT_HEADER.size
    state = {}
    for name, tensor in params.state_dict().items():
        size = tensor.numel() * 4
        if offset + size > len(data):
            raise IoFailure("truncated checkpoint file")
        values = np.frombuffer(data, dtype='<f4', count=tensor.numel(), offset=offset)
        state[name] = torch.from_numpy(values.astype(np.float32).reshape(tensor.shape))
        offset += size
    if offset != len(data):
        raise FormatVersionMismatch(f"checkpoint has {len(data) - offset} unexpected trailing bytes")
    params.load_state_dict(state)
    params.eval()
    return params


def manifest_path(path) -> Path:
    return Path(f"{path}.json")


def save_checkpoint(params: SkillEncoder, path, vocab: Vocabulary = None) -> bytes:
    """Write the binary checkpoint and its JSON manifest; returns the fingerprint"""
    data = serialize_checkpoint(params)
    atomic_write_bytes(path, data)
    fingerprint = hashlib.sha256(data).digest()
    manifest = {
        'format_version': CHECKPOINT_VERSION,
        'config': params.config.to_dict(),
        'parameter_count': parameter_count(params.config),
        'tensors': [{'name': name, 'shape': list(t.shape)} for name, t in params.state_dict().items()],
        'vocab_sha256': vocab.sha256() if vocab is not None else None,
        'sha256': fingerprint.hex(),
    }
    atomic_write_text(manifest_path(path), json.dumps(manifest, indent=2, ensure_ascii=False))
    logger.info("checkpoint saved", path=str(path), sha256=fingerprint.hex()[:12])
    return fingerprint


def load_checkpoint(path, vocab: Vocabulary = None) -> SkillEncoder:
    params = deserialize_checkpoint(read_bytes(path))
    if vocab is not None and params.config.vocab_size != len(vocab):
        raise FingerprintMismatch(
            f"checkpoint expects {params.config.vocab_size} tokens, vocabulary has {len(vocab)}"
        )
    manifest_file = manifest_path(path)
    if vocab is not None and manifest_file.exists():
        try:
            recorded = json.loads(manifest_file.read_text(encoding='utf-8')).get('vocab_sha256')
        except (OSError, ValueError) as e:
            raise IoFailure(f"cannot read manifest {manifest_file}: {e}") from e
        if recorded and recorded != vocab.sha256():
            raise FingerprintMismatch(f"vocabulary does not match the one recorded for {path}")
    return params


def checkpoint_fingerprint(path) -> bytes:
    return hashlib.sha256(read_bytes(path)).digest()
