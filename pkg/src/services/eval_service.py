"""
Eval Service - Recall@N, relative improvement and encoder comparison reports
"""
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from src.models.embedding import Mode
from src.services.corpus_service import compute_stats
from src.services.index_service import SearchResult, TitleIndex, build_index_for, query
from src.services.text_service import clean_text
from src.utils.errors import (
    EmptyQuerySet, FingerprintMismatch, InvalidConfig, NoResolvableRecords, ZeroReference,
)
from src.utils.logging import get_logger

logger = get_logger(__name__)

RECALL_CUTOFFS = (1, 5, 10)


@dataclass(frozen=True)
class RecallTriple:
    r1: float
    r5: float
    r10: float

    def __post_init__(self):
        for name in ('r1', 'r5', 'r10'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not self.r1 <= self.r5 <= self.r10:
            raise ValueError(f"recall must be non-decreasing in N, got {self.as_tuple()}")

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.r1, self.r5, self.r10

    def to_dict(self):
        return {'r1': self.r1, 'r5': self.r5, 'r10': self.r10}

    @classmethod
    def parse(cls, text: str) -> "RecallTriple":
        """'0.225,0.386,0.46' → RecallTriple"""
        parts = [p.strip() for p in text.split(',')]
        if len(parts) != 3:
            raise InvalidConfig(f"expected three comma-separated recall values, got {text!r}")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError as e:
            raise InvalidConfig(f"invalid recall values {text!r}: {e}") from e


def recall_at_n(queries: Sequence[Tuple[int, SearchResult]], n: int) -> float:
    """Fraction of queries whose gold label is among the first n hits"""
    if not queries:
        raise EmptyQuerySet("no queries to score")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    hits = sum(1 for gold, result in queries if gold in result.label_ids[:n])
    return hits / len(queries)


def delta_improvement(candidate: RecallTriple, reference: RecallTriple) -> float:
    """Mean relative gain over Recall@1/5/10, in percent"""
    if any(value <= 0.0 for value in reference.as_tuple()):
        raise ZeroReference("reference recall must be positive in every component")
    gains = [(c - r) / r for c, r in zip(candidate.as_tuple(), reference.as_tuple())]
    return sum(gains) / len(gains) * 100.0


@dataclass
class EvaluationResult:
    encoder: str
    mode: Optional[str]
    recall: RecallTriple
    resolvable: int = 0
    excluded: int = 0
    total: int = 0
    external: bool = False
    per_family: Optional[Dict[str, float]] = None

    @property
    def row_name(self) -> str:
        return self.encoder if self.mode is None else f"{self.encoder} [{self.mode}]"

    def to_dict(self):
        data = {
            'encoder': self.encoder,
            'mode': self.mode,
            'recall': self.recall.to_dict(),
            'resolvable': self.resolvable,
            'excluded': self.excluded,
            'total': self.total,
            'external': self.external,
        }
        if self.per_family is not None:
            data['per_family'] = dict(sorted(self.per_family.items()))
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(
            encoder=data['encoder'],
            mode=data['mode'],
            recall=RecallTriple(**data['recall']),
            resolvable=data['resolvable'],
            excluded=data['excluded'],
            total=data['total'],
            external=data.get('external', False),
            per_family=data.get('per_family'),
        )


@dataclass(frozen=True)
class Delta:
    candidate: str
    reference: str
    percent: float

    def to_dict(self):
        return {'candidate': self.candidate, 'reference': self.reference, 'percent': self.percent}


@dataclass
class EvalReport:
    dataset: dict
    results: List[EvaluationResult] = field(default_factory=list)
    deltas: List[Delta] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def result(self, row_name: str) -> EvaluationResult:
        for result in self.results:
            if result.row_name == row_name:
                return result
        raise KeyError(row_name)

    def to_dict(self):
        return {
            'dataset': self.dataset,
            'results': [r.to_dict() for r in self.results],
            'deltas': [d.to_dict() for d in self.deltas],
            'config': self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        return cls(
            dataset=data['dataset'],
            results=[EvaluationResult.from_dict(r) for r in data['results']],
            deltas=[Delta(**d) for d in data['deltas']],
            config=data.get('config', {}),
        )


def gold_label(record) -> str:
    return clean_text(record.normalized_title or '')


def evaluate(records, encoder, mode, index: TitleIndex, k: int = 10, per_family: bool = False) -> EvaluationResult:
    """Recall@1/5/10 of one encoder and mode over the records whose gold label is indexed"""
    mode = Mode(mode)
    if k < max(RECALL_CUTOFFS):
        raise InvalidConfig(f"k must be at least {max(RECALL_CUTOFFS)}, got {k}")
    if encoder.fingerprint != index.fingerprint:
        raise FingerprintMismatch(f"index was not built by encoder {encoder.name!r}")

    resolvable = []
    golds = []
    for record in records:
        label_id = index.label_id(gold_label(record))
        if label_id is not None:
            resolvable.append(record)
            golds.append(label_id)
    excluded = len(records) - len(resolvable)
    if not resolvable:
        raise NoResolvableRecords(f"none of {len(records)} records has its gold label in the index")
    if excluded:
        logger.warning("records excluded from scoring", excluded=excluded, total=len(records))

    embeddings = encoder.embed_many(resolvable, mode)
    queries = [(gold, query(index, embedding, k)) for gold, embedding in zip(golds, embeddings)]
    recall = RecallTriple(*(recall_at_n(queries, n) for n in RECALL_CUTOFFS))

    family_recall = None
    if per_family:
        grouped = defaultdict(list)
        for record, item in zip(resolvable, queries):
            grouped[record.esco_family or '?'].append(item)
        family_recall = {family: recall_at_n(items, 1) for family, items in grouped.items()}

    logger.info(
        "evaluation finished",
        encoder=encoder.name, mode=mode.value, r1=recall.r1, r5=recall.r5, r10=recall.r10,
    )
    return EvaluationResult(
        encoder=encoder.name,
        mode=mode.value,
        recall=recall,
        resolvable=len(resolvable),
        excluded=excluded,
        total=len(records),
        per_family=family_recall,
    )


def default_labels(records) -> List[str]:
    """Distinct cleaned normalized titles in order of first appearance"""
    return list(dict.fromkeys(label for label in (gold_label(r) for r in records) if label))


def compare_encoders(benchmark, encoders, modes, labels=None, references=None, delta_pairs=None,
                     k: int = 10, per_family: bool = False, dataset_name: str = 'benchmark',
                     config: Optional[dict] = None) -> EvalReport:
    """One result per (encoder, mode); every encoder indexes the shared labels itself"""
    if not encoders:
        raise InvalidConfig("at least one encoder is required")
    modes = [Mode(m) for m in modes]
    labels = list(labels) if labels is not None else default_labels(benchmark)

    report = EvalReport(
        dataset={
            'name': dataset_name,
            'records': len(benchmark),
            'labels': len(labels),
            'stats': compute_stats(benchmark).to_dict(),
        },
        config=dict(config or {}),
    )
    for encoder in encoders:
        index = build_index_for(encoder, labels)
        for mode in modes:
            report.results.append(evaluate(benchmark, encoder, mode, index, k=k, per_family=per_family))

    for name, triple in (references or {}).items():
        report.results.append(EvaluationResult(encoder=name, mode=None, recall=triple, external=True))

    if delta_pairs is None:
        delta_pairs = [
            (candidate.row_name, reference.row_name)
            for candidate in report.results if not candidate.external
            for reference in report.results if reference.external
        ]
    for candidate_name, reference_name in delta_pairs:
        candidate = report.result(candidate_name)
        reference = report.result(reference_name)
        report.deltas.append(Delta(
            candidate=candidate_name,
            reference=reference_name,
            percent=delta_improvement(candidate.recall, reference.recall),
        ))
    return report


def render_table(report: EvalReport) -> str:
    """Aligned plain-text table, one row per (encoder, mode)"""
    header = ['Model', 'Recall@1', 'Recall@5', 'Recall@10']
    deltas = {}
    for delta in report.deltas:
        deltas.setdefault(delta.candidate, delta)
    if deltas:
        header.append('Δ %')

    rows = []
    for result in report.results:
        row = [result.row_name] + [f"{value:.3f}" for value in result.recall.as_tuple()]
        if deltas:
            delta = deltas.get(result.row_name)
            row.append(f"{delta.percent:+.2f}" if delta else '')
        rows.append(row)

    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [cell.rjust(width) for cell, width in zip(cells[1:], widths[1:])]
        return '  '.join([first] + rest).rstrip()

    out = [line(header), line(['-' * w for w in widths])]
    out.extend(line(row) for row in rows)
    if len(deltas) < len(report.deltas):
        out.append('')
        out.extend(f"Δ {d.candidate} vs {d.reference}: {d.percent:+.2f}%" for d in report.deltas)
    return '\n'.join(out) + '\n'
