"""
Job posting records and corpus statistics
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple


class Source(Enum):
    """Where a posting came from"""
    VACANCY = "vacancy"
    RESUME = "resume"
    BENCHMARK = "benchmark"
    SYNTHETIC = "synthetic"


class RecordRejected(ValueError):
    """A JSON object that cannot become a JobRecord"""


def _dedupe_skills(skills):
    seen = set()
    kept = []
    for skill in skills:
        if not isinstance(skill, str):
            raise RecordRejected(f"skill is not a string: {skill!r}")
        skill = skill.strip()
        if skill and skill not in seen:
            seen.add(skill)
            kept.append(skill)
    return tuple(kept)


@dataclass(frozen=True)
class JobRecord:
    """One raw, benchmark or synthetic posting"""
    title: str
    description: str = ""
    skills: Tuple[str, ...] = ()
    normalized_title: Optional[str] = None
    esco_code: Optional[str] = None
    source: Source = Source.VACANCY

    def __post_init__(self):
        from src.services.text_service import clean_text

        if not isinstance(self.title, str) or not clean_text(self.title):
            raise RecordRejected("title is empty after cleaning")
        if not isinstance(self.description, str):
            raise RecordRejected("description is not a string")
        object.__setattr__(self, 'skills', _dedupe_skills(self.skills))
        if self.esco_code is not None and not self.normalized_title:
            raise RecordRejected("esco_code given without normalized_title")
        if self.esco_code is not None and not (self.esco_code[:1].isdigit()):
            raise RecordRejected(f"esco_code must start with a digit: {self.esco_code!r}")
        if not isinstance(self.source, Source):
            object.__setattr__(self, 'source', Source(self.source))

    @property
    def esco_family(self) -> Optional[str]:
        return self.esco_code[0] if self.esco_code else None

    @classmethod
    def from_dict(cls, data: dict) -> "JobRecord":
        if not isinstance(data, dict):
            raise RecordRejected("line is not a JSON object")
        try:
            source = Source(data.get('source', Source.VACANCY.value))
        except ValueError as e:
            raise RecordRejected(f"unknown source {data.get('source')!r}") from e
        skills = data.get('skills') or []
        if not isinstance(skills, list):
            raise RecordRejected("skills is not an array")
        title = data.get('title')
        if not isinstance(title, str):
            raise RecordRejected("title is missing")
        description = data.get('description', '')
        if description is None:
            description = ''
        for key in ('normalized_title', 'esco_code'):
            if data.get(key) is not None and not isinstance(data.get(key), str):
                raise RecordRejected(f"{key} is not a string")
        return cls(
            title=title,
            description=description,
            skills=tuple(skills),
            normalized_title=data.get('normalized_title'),
            esco_code=data.get('esco_code'),
            source=source,
        )

    def to_dict(self) -> dict:
        return {
            'title': self.title,
            'description': self.description,
            'skills': list(self.skills),
            'normalized_title': self.normalized_title,
            'esco_code': self.esco_code,
            'source': self.source.value,
        }


SKILL_BUCKETS = ("<10", "10-100", ">100")


def skill_bucket(count: int) -> str:
    if count < 10:
        return "<10"
    if count <= 100:
        return "10-100"
    return ">100"


@dataclass
class CorpusStats:
    """Dataset statistics: ESCO family histogram and skills-per-record buckets"""
    total_records: int = 0
    records_per_esco_family: Dict[str, int] = field(default_factory=dict)
    skill_count_buckets: Dict[str, int] = field(
        default_factory=lambda: {name: 0 for name in SKILL_BUCKETS}
    )
    unique_titles: int = 0

    def to_dict(self) -> dict:
        return {
            'total_records': self.total_records,
            'records_per_esco_family': dict(sorted(self.records_per_esco_family.items())),
            'skill_count_buckets': {name: self.skill_count_buckets.get(name, 0) for name in SKILL_BUCKETS},
            'unique_titles': self.unique_titles,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusStats":
        return cls(
            total_records=int(data['total_records']),
            records_per_esco_family={str(k): int(v) for k, v in data['records_per_esco_family'].items()},
            skill_count_buckets={str(k): int(v) for k, v in data['skill_count_buckets'].items()},
            unique_titles=int(data['unique_titles']),
        )
