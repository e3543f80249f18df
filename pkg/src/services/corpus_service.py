"""
Corpus Service - JSONL ingestion, cleaning pipeline, synthetic corpora and statistics
"""
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from src.models.records import CorpusStats, JobRecord, RecordRejected, Source, skill_bucket
from src.services.skill_service import Gazetteer, extract_skills
from src.services.text_service import (
    DATA_DIR, clean_text, filter_relevant_sentences, is_target_language,
)
from src.utils.errors import InvalidConfig, IoFailure, MalformedBenchmark, MalformedLine
from src.utils.files import atomic_write_text
from src.utils.logging import get_logger

logger = get_logger(__name__)

MAX_MALFORMED_FRACTION = 0.5


@dataclass
class LoadResult:
    records: List[JobRecord]
    malformed: List[MalformedLine] = field(default_factory=list)
    total_lines: int = 0
    # parsed JSON that failed JobRecord invariants; also listed in malformed
    rejected: int = 0


def load_records(path, require_normalized=False) -> LoadResult:
    """Read a JSONL posting file, collecting unreadable lines instead of failing"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"cannot read {path}: {e}") from e

    result = LoadResult(records=[])
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        result.total_lines += 1
        try:
            record = JobRecord.from_dict(json.loads(line))
        except json.JSONDecodeError as e:
            result.malformed.append(MalformedLine(line_number, f"invalid JSON: {e.msg}"))
            continue
        except (RecordRejected, ValueError, TypeError) as e:
            result.malformed.append(MalformedLine(line_number, str(e)))
            result.rejected += 1
            continue
        if require_normalized and not record.normalized_title:
            result.malformed.append(MalformedLine(line_number, "normalized_title is missing"))
            result.rejected += 1
            continue
        result.records.append(record)

    if result.malformed:
        logger.warning(
            "skipped malformed lines",
            path=str(path),
            malformed=len(result.malformed),
            rejected=result.rejected,
            total=result.total_lines,
        )
    if result.total_lines and len(result.malformed) > MAX_MALFORMED_FRACTION * result.total_lines:
        raise MalformedBenchmark(str(path), result.malformed, result.total_lines)
    return result


def load_benchmark(path) -> List[JobRecord]:
    return load_records(path, require_normalized=True).records


def write_benchmark(records, path):
    lines = [json.dumps(record.to_dict(), ensure_ascii=False) for record in records]
    atomic_write_text(path, ''.join(f"{line}\n" for line in lines))


# --- synthetic corpora ---

@dataclass(frozen=True)
class Family:
    label: str
    esco_code: str
    variants: Tuple[str, ...]
    skills: Tuple[str, ...]


@dataclass(frozen=True)
class Catalog:
    families: Tuple[Family, ...]
    modifiers: Tuple[str, ...]
    ambiguous_variants: Tuple[str, ...]


@lru_cache(maxsize=None)
def load_catalog(path=None) -> Catalog:
    path = Path(path or DATA_DIR / 'occupations.json')
    data = json.loads(path.read_text(encoding='utf-8'))
    families = tuple(
        Family(f['label'], f['esco_code'], tuple(f['variants']), tuple(f['skills']))
        for f in data['families']
    )
    return Catalog(families, tuple(data['modifiers']), tuple(data['ambiguous_variants']))


@dataclass(frozen=True)
class SynthConfig:
    families: int = 10
    skills_per_family: int = 8
    records_per_family: int = 20
    skills_per_record: Optional[int] = None
    noise: float = 0.0
    ambiguous_pairs: int = 0
    modifier_rate: float = 0.5

    @property
    def record_skill_count(self) -> int:
        return self.skills_per_record or self.skills_per_family

    def validate(self, catalog: Catalog):
        if not 2 <= self.families <= len(catalog.families):
            raise InvalidConfig(f"families must be in [2, {len(catalog.families)}], got {self.families}")
        smallest_pool = min(len(f.skills) for f in catalog.families[:self.families])
        if not 4 <= self.skills_per_family <= smallest_pool:
            raise InvalidConfig(
                f"skills_per_family must be in [4, {smallest_pool}], got {self.skills_per_family}"
            )
        if self.records_per_family < 1:
            raise InvalidConfig(f"records_per_family must be positive, got {self.records_per_family}")
        if not 1 <= self.record_skill_count <= self.skills_per_family:
            raise InvalidConfig(
                f"skills_per_record must be in [1, {self.skills_per_family}], got {self.skills_per_record}"
            )
        if not 0.0 <= self.noise < 1.0:
            raise InvalidConfig(f"noise must be in [0, 1), got {self.noise}")
        if not 0.0 <= self.modifier_rate <= 1.0:
            raise InvalidConfig(f"modifier_rate must be in [0, 1], got {self.modifier_rate}")
        limit = min(self.families // 2, len(catalog.ambiguous_variants))
        if not 0 <= self.ambiguous_pairs <= limit:
            raise InvalidConfig(f"ambiguous_pairs must be in [0, {limit}], got {self.ambiguous_pairs}")
        return self


SKILL_SENTENCES = (
    "experience with {skill} is required.",
    "you will need solid {skill} skills.",
    "knowledge of {skill} is a must.",
    "hands-on {skill} is expected.",
    "the role involves daily {skill}.",
)

BENEFIT_SENTENCES = (
    "we offer a competitive salary and a yearly bonus.",
    "free lunch and a gym membership are included.",
    "we are an equal opportunity employer.",
    "paid time off and health insurance are part of the package.",
    "our company was founded in 1999 and keeps growing.",
)


def _sentence_case(sentence: str) -> str:
    return sentence[:1].upper() + sentence[1:]


def plant_description(skills, rng, title=None) -> str:
    """A posting body mentioning each skill once, in order, among benefit sentences"""
    sentences = []
    if title:
        sentences.append(f"we are looking for a {title} to join our team.")
    for skill in skills:
        template = SKILL_SENTENCES[int(rng.integers(len(SKILL_SENTENCES)))]
        sentences.append(template.format(skill=skill))
        if rng.random() < 0.3:
            sentences.append(BENEFIT_SENTENCES[int(rng.integers(len(BENEFIT_SENTENCES)))])
    sentences.append(BENEFIT_SENTENCES[int(rng.integers(len(BENEFIT_SENTENCES)))])
    return ' '.join(_sentence_case(s) for s in sentences)


def _draw_skills(pool, foreign_pool, count, noise, rng):
    picks = [pool[i] for i in rng.choice(len(pool), size=count, replace=False)]
    drawn = []
    for skill in picks:
        if rng.random() < noise:
            candidates = [s for s in foreign_pool if s not in drawn and s not in picks]
            if candidates:
                skill = candidates[int(rng.integers(len(candidates)))]
        drawn.append(skill)
    return drawn


def generate_synthetic(config: SynthConfig, seed: int, catalog: Optional[Catalog] = None) -> List[JobRecord]:
    """Deterministic labelled corpus: titles are variants of a family, skills come from its pool"""
    catalog = catalog or load_catalog()
    config.validate(catalog)
    rng = np.random.default_rng(seed)
    families = catalog.families[:config.families]
    pools = [f.skills[:config.skills_per_family] for f in families]

    variants = [list(f.variants) for f in families]
    for pair in range(config.ambiguous_pairs):
        shared = catalog.ambiguous_variants[pair]
        variants[2 * pair].append(shared)
        variants[2 * pair + 1].append(shared)

    records = []
    for index, family in enumerate(families):
        foreign = [s for other, pool in enumerate(pools) if other != index for s in pool]
        for _ in range(config.records_per_family):
            title = variants[index][int(rng.integers(len(variants[index])))]
            if rng.random() < config.modifier_rate:
                modifier = catalog.modifiers[int(rng.integers(len(catalog.modifiers)))]
                title = f"{modifier} {title}"
            if rng.random() < 0.5:
                title = title.title()
            skills = _draw_skills(pools[index], foreign, config.record_skill_count, config.noise, rng)
            records.append(JobRecord(
                title=title,
                description=plant_description(skills, rng, title=title),
                skills=tuple(skills),
                normalized_title=family.label,
                esco_code=family.esco_code,
                source=Source.SYNTHETIC,
            ))

    order = rng.permutation(len(records))
    return [records[i] for i in order]


UKRAINIAN_WORDS = (
    "ми", "шукаємо", "досвідченого", "розробника", "досвід", "роботи", "з",
    "обов'язковий", "знання", "вміння", "команда", "компанія", "пропонуємо",
    "гнучкий", "графік", "офіс", "старший", "програмного", "забезпечення",
    "вимоги", "відповідальність", "навички", "проєкт", "клієнтами",
)


def language_probe(n: int, seed: int, catalog: Optional[Catalog] = None) -> List[Tuple[str, bool]]:
    """Labelled mix of English postings and Ukrainian ones with embedded Latin skill names"""
    catalog = catalog or load_catalog()
    rng = np.random.default_rng(seed)
    all_skills = [s for f in catalog.families for s in f.skills]
    probe = []
    for _ in range(n):
        skill = all_skills[int(rng.integers(len(all_skills)))]
        if rng.random() < 0.5:
            family = catalog.families[int(rng.integers(len(catalog.families)))]
            variant = family.variants[int(rng.integers(len(family.variants)))]
            other = all_skills[int(rng.integers(len(all_skills)))]
            probe.append((f"We are looking for a {variant} with experience in {skill} and {other}.", True))
        else:
            words = [UKRAINIAN_WORDS[int(i)] for i in rng.integers(len(UKRAINIAN_WORDS), size=8)]
            words.insert(int(rng.integers(len(words))), skill)
            probe.append((' '.join(words).capitalize() + '.', False))
    return probe


# --- statistics ---

def compute_stats(records) -> CorpusStats:
    stats = CorpusStats()
    titles = set()
    for record in records:
        stats.total_records += 1
        stats.skill_count_buckets[skill_bucket(len(record.skills))] += 1
        if record.esco_family is not None:
            family = record.esco_family
            stats.records_per_esco_family[family] = stats.records_per_esco_family.get(family, 0) + 1
        titles.add(clean_text(record.title))
    stats.unique_titles = len(titles)
    return stats


# --- cleaning pipeline ---

@dataclass
class PreprocessSummary:
    read: int = 0
    kept: int = 0
    dropped_language: int = 0
    dropped_empty: int = 0
    dropped_duplicate: int = 0

    def to_dict(self):
        return asdict(self)


def dedup_key(record: JobRecord):
    return clean_text(record.title), tuple(sorted(record.skills))


def preprocess(records, gazetteer: Gazetteer):
    """clean → language gate → relevance filter → skill extraction → dedup"""
    summary = PreprocessSummary()
    kept = []
    seen = set()
    for record in records:
        summary.read += 1
        title = clean_text(record.title)
        description = clean_text(record.description)
        if not title or not description:
            summary.dropped_empty += 1
            continue
        if not is_target_language(description):
            summary.dropped_language += 1
            continue

        skills = [clean_text(s) for s in record.skills]
        skills.extend(extract_skills(filter_relevant_sentences(description), gazetteer))
        cleaned = JobRecord(
            title=title,
            description=description,
            skills=tuple(s for s in skills if s),
            normalized_title=record.normalized_title,
            esco_code=record.esco_code,
            source=record.source,
        )
        if not cleaned.skills:
            summary.dropped_empty += 1
            continue
        key = dedup_key(cleaned)
        if key in seen:
            summary.dropped_duplicate += 1
            continue
        seen.add(key)
        kept.append(cleaned)
        summary.kept += 1

    logger.info("preprocess finished", **summary.to_dict())
    return kept, summary


@dataclass(frozen=True)
class TrainingPair:
    """One (title, skills) positive pair; label is the in-batch dedup key"""
    title: str
    skills: Tuple[str, ...]
    label: str


def to_training_pairs(records) -> List[TrainingPair]:
    pairs = []
    for record in records:
        skills = tuple(dict.fromkeys(s for s in (clean_text(skill) for skill in record.skills) if s))
        if not skills:
            continue
        title = clean_text(record.title)
        label = clean_text(record.normalized_title) if record.normalized_title else title
        pairs.append(TrainingPair(title=title, skills=skills, label=label))
    return pairs
