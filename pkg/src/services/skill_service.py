"""
Skill Service - gazetteer lookup of skill mentions in posting text
"""
import re
from functools import cached_property
from pathlib import Path
from typing import Iterable, List

from src.utils.errors import EmptyGazetteer, IoFailure
from src.utils.logging import get_logger

logger = get_logger(__name__)

DEFAULT_GAZETTEER = Path(__file__).parent.parent / 'data' / 'gazetteer.txt'


class Gazetteer:
    """Immutable skill lexicon matched longest-first on word boundaries"""

    def __init__(self, entries: Iterable[str]):
        normalized = {' '.join(entry.lower().split()) for entry in entries}
        normalized.discard('')
        # longest first so that "machine learning" wins over "learning"
        self.entries = tuple(sorted(normalized, key=lambda e: (-len(e), e)))

    @classmethod
    def from_file(cls, path) -> "Gazetteer":
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise IoFailure(f"cannot read gazetteer {path}: {e}") from e
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith('#'):
                entries.append(line)
        gazetteer = cls(entries)
        logger.debug("gazetteer loaded", path=str(path), entries=len(gazetteer))
        return gazetteer

    @classmethod
    def default(cls) -> "Gazetteer":
        return cls.from_file(DEFAULT_GAZETTEER)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, skill):
        return skill in self._entry_set

    def __iter__(self):
        return iter(self.entries)

    @cached_property
    def _entry_set(self):
        return frozenset(self.entries)

    @cached_property
    def pattern(self):
        if not self.entries:
            return None
        alternation = '|'.join(re.escape(entry) for entry in self.entries)
        return re.compile(rf'(?<!\w)(?:{alternation})(?!\w)')


def extract_skills(description: str, gazetteer: Gazetteer) -> List[str]:
    """Gazetteer entries found in the text, in order of first appearance"""
    if len(gazetteer) == 0:
        raise EmptyGazetteer("gazetteer has no entries")
    found = []
    seen = set()
    for match in gazetteer.pattern.finditer(description):
        skill = match.group(0)
        if skill not in seen:
            seen.add(skill)
            found.append(skill)
    return found
