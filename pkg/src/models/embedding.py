"""
Embedding vectors and inference modes
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

UNIT_NORM_TOLERANCE = 1e-6


class Mode(Enum):
    TITLE = "title"
    SKILLS = "skills"
    COMBINED = "combined"


def l2_normalize(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    norm = np.linalg.norm(values)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return values / norm


@dataclass(frozen=True, eq=False)
class Embedding:
    """Fixed-dimension vector tagged with the mode that produced it"""
    values: np.ndarray
    mode: Mode
    normalized: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(f"embedding must be a vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding has non-finite values")
        if self.normalized and abs(np.linalg.norm(values) - 1.0) >= UNIT_NORM_TOLERANCE:
            raise ValueError("embedding flagged normalized is not unit-norm")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, 'mode', Mode(self.mode))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def unit(cls, values, mode) -> "Embedding":
        return cls(l2_normalize(values), mode, normalized=True)

    def is_unit(self, tolerance=UNIT_NORM_TOLERANCE) -> bool:
        return abs(float(np.linalg.norm(self.values)) - 1.0) < tolerance


def combine(title: Embedding, skills: Embedding) -> Embedding:
    """Average two unit vectors and renormalize"""
    if title.dim != skills.dim:
        raise ValueError("cannot combine embeddings of different dimensions")
    return Embedding.unit(0.5 * (title.values + skills.values), Mode.COMBINED)
