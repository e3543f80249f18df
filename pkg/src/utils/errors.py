"""
Error hierarchy for titleskills

Library code raises these; only the CLI turns them into exit codes.
"""
from dataclasses import dataclass


class TitleSkillsError(Exception):
    """Base class for every error raised by the pipeline"""
    exit_code = 2


class ConfigError(TitleSkillsError):
    pass


class InvalidConfig(ConfigError, ValueError):
    pass


class IoFailure(TitleSkillsError):
    pass


class TargetLocked(IoFailure):
    pass


class FormatVersionMismatch(TitleSkillsError):
    pass


class FingerprintMismatch(TitleSkillsError):
    pass


# corpus
class EmptyGazetteer(TitleSkillsError, ValueError):
    pass


class MalformedBenchmark(TitleSkillsError):
    def __init__(self, path, malformed, total):
        self.path = path
        self.malformed = malformed
        self.total = total
        super().__init__(f"{path}: {len(malformed)} of {total} lines are malformed")


@dataclass(frozen=True)
class MalformedLine:
    """One unreadable JSONL line, collected rather than raised"""
    line_number: int
    reason: str


# tokenizer
class EmptyCorpus(TitleSkillsError, ValueError):
    pass


class NoSkillFits(TitleSkillsError, ValueError):
    pass


class IdOutOfRange(TitleSkillsError, ValueError):
    pass


# encoder
class LengthOverflow(TitleSkillsError, ValueError):
    pass


class EmptyMask(TitleSkillsError, ValueError):
    pass


class NoSkillPositions(TitleSkillsError, ValueError):
    pass


# training / index
class DimensionMismatch(TitleSkillsError, ValueError):
    pass


class NotNormalized(TitleSkillsError, ValueError):
    pass


class NonPositiveScale(TitleSkillsError, ValueError):
    pass


class ShapeMismatch(TitleSkillsError, ValueError):
    pass


class DatasetTooSmall(TitleSkillsError, ValueError):
    pass


class NonFiniteGradient(TitleSkillsError, ArithmeticError):
    exit_code = 3

    def __init__(self, step, tensor_name=None):
        self.step = step
        self.tensor_name = tensor_name
        where = f" in {tensor_name}" if tensor_name else ""
        super().__init__(f"non-finite gradient at step {step}{where}")


class DuplicateLabel(TitleSkillsError, ValueError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"duplicate label after cleaning: {label!r}")


class EmptyLabelSet(TitleSkillsError, ValueError):
    pass


# eval
class EmptyQuerySet(TitleSkillsError, ValueError):
    pass


class NoResolvableRecords(TitleSkillsError, ValueError):
    pass


class ZeroReference(TitleSkillsError, ValueError):
    pass
