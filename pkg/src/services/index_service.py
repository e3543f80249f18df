"""
Index Service - exact cosine search over the normalized-title taxonomy
"""
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from src.models.embedding import Embedding, Mode, UNIT_NORM_TOLERANCE
from src.models.records import JobRecord
from src.services.encoder_service import DualEncoder
from src.services.text_service import clean_text
from src.utils.errors import (
    DimensionMismatch, DuplicateLabel, EmptyLabelSet, FingerprintMismatch, FormatVersionMismatch,
    IoFailure, NotNormalized,
)
from src.utils.files import atomic_write_bytes, read_bytes
from src.utils.logging import get_logger

logger = get_logger(__name__)

INDEX_MAGIC = b'SKIX'
INDEX_VERSION = 1
INDEX_HEADER = struct.Struct('<4sIII32s')
RECORD_PREFIX = struct.Struct('<II')


@dataclass(frozen=True, eq=False)
class TitleIndex:
    """Immutable (label_id, label, vector) table; label_id is the row position"""
    labels: Tuple[str, ...]
    vectors: np.ndarray
    fingerprint: bytes

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.labels):
            raise DimensionMismatch(f"expected {len(self.labels)} vectors, got shape {vectors.shape}")
        seen = set()
        for label in self.labels:
            if label in seen:
                raise DuplicateLabel(label)
            seen.add(label)
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) >= UNIT_NORM_TOLERANCE):
            raise NotNormalized("index vectors must be unit-norm")
        if len(self.fingerprint) != 32:
            raise ValueError("fingerprint must be a 32-byte digest")
        vectors.setflags(write=False)
        object.__setattr__(self, 'labels', tuple(self.labels))
        object.__setattr__(self, 'vectors', vectors)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def entries(self):
        return [(label_id, label, self.vectors[label_id]) for label_id, label in enumerate(self.labels)]

    def label_id(self, label: str) -> Optional[int]:
        return self._ids.get(label)

    @cached_property
    def _ids(self):
        return {label: i for i, label in enumerate(self.labels)}

    def same_as(self, other: "TitleIndex") -> bool:
        return (
            self.labels == other.labels
            and self.fingerprint == other.fingerprint
            and self.vectors.shape == other.vectors.shape
            and bool(np.array_equal(self.vectors, other.vectors))
        )


@dataclass(frozen=True)
class Hit:
    label_id: int
    label: str
    score: float


@dataclass(frozen=True)
class SearchResult:
    ranked: Tuple[Hit, ...]

    def __len__(self):
        return len(self.ranked)

    def __iter__(self):
        return iter(self.ranked)

    @property
    def label_ids(self):
        return [hit.label_id for hit in self.ranked]


def build_index_for(encoder, labels: Sequence[str]) -> TitleIndex:
    """Embed each label in title mode with any encoder of the comparison protocol"""
    if not labels:
        raise EmptyLabelSet("no labels to index")
    cleaned = []
    seen = set()
    for label in labels:
        label = clean_text(label)
        if not label:
            raise EmptyLabelSet("label is empty after cleaning")
        if label in seen:
            raise DuplicateLabel(label)
        seen.add(label)
        cleaned.append(label)
    embeddings = encoder.embed_many([JobRecord(title=label) for label in cleaned], Mode.TITLE)
    vectors = np.stack([e.values for e in embeddings]).astype(np.float32)
    index = TitleIndex(tuple(cleaned), vectors, encoder.fingerprint)
    logger.info("index built", encoder=encoder.name, labels=len(index), dim=index.dim)
    return index


def build_index(labels: Sequence[str], params, vocab) -> TitleIndex:
    return build_index_for(DualEncoder(params, vocab), labels)


def query(index: TitleIndex, q: Embedding, k: int) -> SearchResult:
    """Exact top-k by cosine; ties go to the lower label_id"""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if q.dim != index.dim:
        raise DimensionMismatch(f"query has dimension {q.dim}, index has {index.dim}")
    if not q.normalized or not q.is_unit():
        raise NotNormalized("query embedding is not unit-norm")
    scores = index.vectors.astype(np.float64) @ q.values
    ids = np.arange(len(index))
    order = np.lexsort((ids, -scores))[:k]
    return SearchResult(tuple(
        Hit(int(i), index.labels[i], float(np.clip(scores[i], -1.0, 1.0))) for i in order
    ))


def serialize_index(index: TitleIndex) -> bytes:
    parts = [INDEX_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, index.dim, len(index), index.fingerprint)]
    for label_id, label in enumerate(index.labels):
        encoded = label.encode('utf-8')
        parts.append(RECORD_PREFIX.pack(label_id, len(encoded)))
        parts.append(encoded)
        parts.append(index.vectors[label_id].astype('<f4').tobytes())
    return b''.join(parts)


def deserialize_index(data: bytes) -> TitleIndex:
    if len(data) < INDEX_HEADER.size:
        raise IoFailure("truncated index file")
    magic, version, dim, count, fingerprint = INDEX_HEADER.unpack_from(data)
    if magic != INDEX_MAGIC:
        raise FormatVersionMismatch(f"not an index file (magic {magic!r})")
    if version != INDEX_VERSION:
        raise FormatVersionMismatch(f"index version {version}, expected {INDEX_VERSION}")
    offset = INDEX_HEADER.size
    labels = []
    vectors = np.empty((count, dim), dtype=np.float32)
    for position in range(count):
        if offset + RECORD_PREFIX.size > len(data):
            raise IoFailure("truncated index file")
        label_id, length = RECORD_PREFIX.unpack_from(data, offset)
        offset += RECORD_PREFIX.size
        if label_id != position:
            raise FormatVersionMismatch(f"index record {position} carries label_id {label_id}")
        if offset + length + 4 * dim > len(data):
            raise IoFailure("truncated index file")
        try:
            labels.append(data[offset:offset + length].decode('utf-8'))
        except UnicodeDecodeError as e:
            raise FormatVersionMismatch(f"index label {position} is not UTF-8") from e
        offset += length
        vectors[position] = np.frombuffer(data, dtype='<f4', count=dim, offset=offset)
        offset += 4 * dim
    if offset != len(data):
        raise FormatVersionMismatch(f"index has {len(data) - offset} unexpected trailing bytes")
    return TitleIndex(tuple(labels), vectors, fingerprint)


def save_index(index: TitleIndex, path):
    atomic_write_bytes(path, serialize_index(index))
    logger.info("index saved", path=str(path), labels=len(index))


def load_index(path, expected_dim=None, expected_fingerprint=None, override=False) -> TitleIndex:
    """Load an index, refusing one built for another encoder unless overridden"""
    index = deserialize_index(read_bytes(path))
    if expected_dim is not None and index.dim != expected_dim:
        if not override:
            raise DimensionMismatch(f"index dimension {index.dim}, encoder produces {expected_dim}")
        logger.warning("index dimension mismatch overridden", path=str(path))
    if expected_fingerprint is not None and index.fingerprint != expected_fingerprint:
        if not override:
            raise FingerprintMismatch(f"index {path} was built with a different checkpoint")
        logger.warning("index fingerprint mismatch overridden", path=str(path))
    return index

