"""
The Siamese title/skills encoder: one transformer stack and one linear
pooling layer shared by both branches.

Blocks are pre-norm (x + Attn(LN(x)), then x + FFN(LN(x))) with no final
norm, so zeroing the attention output projection and the FFN output
layer reduces the stack to token + position embeddings.
"""
import math
from dataclasses import dataclass, fields
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from src.utils.errors import IdOutOfRange, InvalidConfig, LengthOverflow

# longest encoded input the tokenizer can produce
SKILLS_MAX_LEN = 128


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: Optional[int] = None
    max_positions: int = 128
    pooled_dim: int = 32
    dropout_rate: float = 0.0
    init_std: float = 0.02
    init_seed: int = 0

    def __post_init__(self):
        if self.ffn_dim is None:
            object.__setattr__(self, 'ffn_dim', 4 * self.hidden_dim)

    def validate(self):
        if self.vocab_size < 5:
            raise InvalidConfig(f"vocab_size must cover the 5 special tokens, got {self.vocab_size}")
        for name in ('hidden_dim', 'num_layers', 'num_heads', 'ffn_dim', 'pooled_dim'):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be positive, got {getattr(self, name)}")
        if self.hidden_dim % self.num_heads != 0:
            raise InvalidConfig(
                f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            )
        if self.pooled_dim > self.hidden_dim:
            raise InvalidConfig(f"pooled_dim {self.pooled_dim} exceeds hidden_dim {self.hidden_dim}")
        if self.max_positions < SKILLS_MAX_LEN:
            raise InvalidConfig(
                f"max_positions {self.max_positions} is below the skills budget {SKILLS_MAX_LEN}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.init_std > 0.0:
            raise InvalidConfig(f"init_std must be positive, got {self.init_std}")
        if self.init_seed < 0:
            raise InvalidConfig(f"init_seed must be non-negative, got {self.init_seed}")
        return self

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data):
        return cls(**{f.name: data[f.name] for f in fields(cls)})


def parameter_count(config: EncoderConfig) -> int:
    """Analytic size of one encoder plus one pooling layer"""
    d, f, p = config.hidden_dim, config.ffn_dim, config.pooled_dim
    embeddings = config.vocab_size * d + config.max_positions * d
    attention = 4 * (d * d + d)
    norms = 2 * (2 * d)
    ffn = (d * f + f) + (f * d + d)
    pooler = p * d + p
    return embeddings + config.num_layers * (attention + norms + ffn) + pooler


class SelfAttention(nn.Module):
    def __init__(self, hidden_dim, num_heads, dropout_rate):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = hidden_dim // num_heads
        self.query = nn.Linear(hidden_dim, hidden_dim)
        self.key = nn.Linear(hidden_dim, hidden_dim)
        self.value = nn.Linear(hidden_dim, hidden_dim)
        self.output = nn.Linear(hidden_dim, hidden_dim)
        self.dropout = nn.Dropout(dropout_rate)

    def forward(self, x, mask):
        batch, length, hidden = x.shape

        def heads(t):
            return t.view(batch, length, self.num_heads, self.head_dim).transpose(1, 2)

        q, k, v = heads(self.query(x)), heads(self.key(x)), heads(self.value(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        # padding keys get -inf; position 0 (CLS) is always real
        scores = scores.masked_fill(~mask[:, None, None, :], float('-inf'))
        weights = self.dropout(torch.softmax(scores, dim=-1))
        context = (weights @ v).transpose(1, 2).reshape(batch, length, hidden)
        return self.output(context)


class EncoderBlock(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        d = config.hidden_dim
        self.attention_norm = nn.LayerNorm(d)
        self.attention = SelfAttention(d, config.num_heads, config.dropout_rate)
        self.ffn_norm = nn.LayerNorm(d)
        self.ffn = nn.Sequential(
            nn.Linear(d, config.ffn_dim),
            nn.GELU(),
            nn.Linear(config.ffn_dim, d),
        )
        self.dropout = nn.Dropout(config.dropout_rate)

    def forward(self, x, mask):
        x = x + self.dropout(self.attention(self.attention_norm(x), mask))
        return x + self.dropout(self.ffn(self.ffn_norm(x)))


class SkillEncoder(nn.Module):
    """All trainable tensors of the encoder (the EncoderParams of the pipeline)"""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.token_embeddings = nn.Embedding(config.vocab_size, config.hidden_dim)
        self.position_embeddings = nn.Embedding(config.max_positions, config.hidden_dim)
        self.blocks = nn.ModuleList([EncoderBlock(config) for _ in range(config.num_layers)])
        self.pooler = nn.Linear(config.hidden_dim, config.pooled_dim)
        self.dropout = nn.Dropout(config.dropout_rate)

    def forward(self, ids, mask):
        """Hidden states (batch, length, hidden_dim) for right-padded ids"""
        length = ids.shape[1]
        if length > self.config.max_positions:
            raise LengthOverflow(f"sequence of {length} exceeds max_positions {self.config.max_positions}")
        if ids.numel() and (int(ids.max()) >= self.config.vocab_size or int(ids.min()) < 0):
            raise IdOutOfRange(f"token id outside vocabulary of {self.config.vocab_size}")
        positions = torch.arange(length, device=ids.device)
        x = self.token_embeddings(ids) + self.position_embeddings(positions)[None, :, :]
        x = self.dropout(x)
        for block in self.blocks:
            x = block(x, mask)
        return x

    def pool(self, hidden, weights):
        """normalize(W . (weights @ hidden) + b) per row; weights rows sum to 1"""
        pooled = torch.einsum('bt,btd->bd', weights.to(hidden.dtype), hidden)
        return F.normalize(self.pooler(pooled), p=2.0, dim=-1)

    def fingerprint_shapes(self):
        return [(name, tuple(t.shape)) for name, t in self.state_dict().items()]
