"""
Tokenizer Service - word-level vocabulary and [SKILL]-marked encodings
"""
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Tuple

import torch

from src.models.embedding import Mode
from src.models.encoder import SKILLS_MAX_LEN
from src.utils.errors import EmptyCorpus, FormatVersionMismatch, IdOutOfRange, IoFailure, NoSkillFits
from src.utils.files import atomic_write_text
from src.utils.logging import get_logger

logger = get_logger(__name__)

PAD, UNK, CLS, SEP, SKILL = '[PAD]', '[UNK]', '[CLS]', '[SEP]', '[SKILL]'
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, SKILL)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, SKILL_ID = range(5)
NUM_SPECIAL = len(SPECIAL_TOKENS)
# never pooled as title content; UNK stands for a real word and is kept
NON_CONTENT_IDS = (PAD_ID, CLS_ID, SEP_ID, SKILL_ID)

TITLE_MAX_LEN = 32


@dataclass(frozen=True)
class Vocabulary:
    tokens: Tuple[str, ...]
    min_frequency: int = 1
    token_to_id: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:NUM_SPECIAL]) != SPECIAL_TOKENS:
            raise FormatVersionMismatch("vocabulary must start with the five special tokens")
        mapping = {}
        for index, token in enumerate(self.tokens):
            if not token or any(ch.isspace() for ch in token):
                raise FormatVersionMismatch(f"invalid vocabulary token at id {index}: {token!r}")
            if token in mapping:
                raise FormatVersionMismatch(f"duplicate vocabulary token {token!r}")
            mapping[token] = index
        object.__setattr__(self, 'tokens', tuple(self.tokens))
        object.__setattr__(self, 'token_to_id', mapping)

    def __len__(self):
        return len(self.tokens)

    @property
    def id_to_token(self):
        return self.tokens

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def to_text(self) -> str:
        return ''.join(f"{token}\n" for token in self.tokens)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode('utf-8')).hexdigest()


def build_vocab(corpus: Sequence[str], min_frequency: int = 1) -> Vocabulary:
    """Specials, then every token seen at least min_frequency times, most frequent first"""
    if min_frequency < 1:
        raise ValueError(f"min_frequency must be at least 1, got {min_frequency}")
    counts = Counter()
    for text in corpus:
        counts.update(text.split())
    if not counts:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    kept = sorted(
        (token for token, count in counts.items() if count >= min_frequency),
        key=lambda token: (-counts[token], token),
    )
    vocab = Vocabulary(SPECIAL_TOKENS + tuple(kept), min_frequency=min_frequency)
    logger.info("vocabulary built", size=len(vocab), min_frequency=min_frequency)
    return vocab


def save_vocab(vocab: Vocabulary, path):
    atomic_write_text(path, vocab.to_text())


def load_vocab(path) -> Vocabulary:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"cannot read vocabulary {path}: {e}") from e
    tokens = text.split('\n')
    if tokens and tokens[-1] == '':
        tokens.pop()
    return Vocabulary(tuple(tokens))


@dataclass(frozen=True)
class EncodedInput:
    ids: Tuple[int, ...]
    mask: Tuple[int, ...]
    skill_positions: Tuple[int, ...]
    mode: Mode

    def __len__(self):
        return len(self.ids)

    @property
    def length(self) -> int:
        """Number of real (unpadded) tokens"""
        return sum(self.mask)

    def padded(self, length: int) -> "EncodedInput":
        extra = length - len(self.ids)
        if extra < 0:
            raise ValueError(f"cannot pad {len(self.ids)} tokens down to {length}")
        return EncodedInput(
            self.ids + (PAD_ID,) * extra,
            self.mask + (0,) * extra,
            self.skill_positions,
            self.mode,
        )


def encode_title(title: str, vocab: Vocabulary, max_len: int = TITLE_MAX_LEN) -> EncodedInput:
    words = [vocab.id_of(w) for w in title.split()][:max_len - 2]
    ids = (CLS_ID, *words, SEP_ID)
    return EncodedInput(ids, (1,) * len(ids), (), Mode.TITLE)


def encode_skills(skills: Sequence[str], vocab: Vocabulary, max_len: int = SKILLS_MAX_LEN) -> EncodedInput:
    """[CLS] ([SKILL] words)... [SEP], keeping only skills that fit whole"""
    ids = [CLS_ID]
    positions = []
    for skill in skills:
        piece = [SKILL_ID] + [vocab.id_of(w) for w in skill.lower().split()]
        if len(ids) + len(piece) + 1 > max_len:
            break
        positions.append(len(ids))
        ids.extend(piece)
    if not positions:
        raise NoSkillFits("no skill fits in the skills budget" if skills else "no skills to encode")
    ids.append(SEP_ID)
    return EncodedInput(tuple(ids), (1,) * len(ids), tuple(positions), Mode.SKILLS)


def decode(ids: Sequence[int], vocab: Vocabulary) -> str:
    words = []
    for token_id in ids:
        token_id = int(token_id)
        if not 0 <= token_id < len(vocab):
            raise IdOutOfRange(f"id {token_id} outside vocabulary of {len(vocab)}")
        if token_id in NON_CONTENT_IDS:
            continue
        words.append(vocab.tokens[token_id])
    return ' '.join(words)


def pad_batch(inputs: Sequence[EncodedInput]):
    """Right-pad to the longest input; returns (ids long tensor, mask bool tensor)"""
    length = max(len(item) for item in inputs)
    padded = [item.padded(length) for item in inputs]
    ids = torch.tensor([item.ids for item in padded], dtype=torch.long)
    mask = torch.tensor([item.mask for item in padded], dtype=torch.bool)
    return ids, mask
