"""
Text Service - cleaning, relevance filtering and language gating of postings
"""
import re
from functools import lru_cache
from pathlib import Path

DATA_DIR = Path(__file__).parent.parent / 'data'

URL_RE = re.compile(r'(?:https?://|ftp://|www\.)\S+', re.IGNORECASE)
EMAIL_RE = re.compile(r'\S+@\S+\.\S+')
PHONE_CANDIDATE_RE = re.compile(r'\+?[\d(][\d\s().+\-]{5,}[\d)]', re.ASCII)
PHONE_MIN_DIGITS = 7

SENTENCE_SPLIT_RE = re.compile(r'(?<=[.?!;])\s+')
WORD_RE = re.compile(r"[a-z']+")

LATIN_RATIO_THRESHOLD = 0.9
MIN_STOPWORDS = 3


def _load_lines(path: Path):
    """Non-blank, non-comment lines of a shipped word list"""
    lines = []
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        line = line.strip()
        if line and not line.startswith('#'):
            lines.append(line.lower())
    return lines


def _drop_phone(match):
    digits = sum(ch.isdigit() for ch in match.group(0))
    return ' ' if digits >= PHONE_MIN_DIGITS else match.group(0)


def clean_text(raw: str) -> str:
    """Strip URLs, emails and phone numbers, lowercase, collapse whitespace"""
    if not raw:
        return ''
    # patterns only ever see lowercase text with single ascii spaces
    text = ' '.join(raw.lower().split())
    text = URL_RE.sub(' ', text)
    text = EMAIL_RE.sub(' ', text)
    text = PHONE_CANDIDATE_RE.sub(_drop_phone, text)
    return ' '.join(text.split())


def split_sentences(text: str):
    return [s for s in SENTENCE_SPLIT_RE.split(text) if s]


@lru_cache(maxsize=None)
def _cue_pattern(path: str):
    cues = sorted(set(_load_lines(Path(path))), key=lambda c: (-len(c), c))
    if not cues:
        return None
    alternation = '|'.join(re.escape(c) for c in cues)
    return re.compile(rf'(?<!\w)(?:{alternation})(?!\w)')


def filter_relevant_sentences(description: str, cues_path=None) -> str:
    """Drop benefits, perks and boilerplate sentences from cleaned text"""
    pattern = _cue_pattern(str(cues_path or DATA_DIR / 'relevance_cues.txt'))
    sentences = split_sentences(description)
    if pattern is None:
        return ' '.join(sentences)
    return ' '.join(s for s in sentences if not pattern.search(s))


@lru_cache(maxsize=None)
def stopwords():
    return frozenset(_load_lines(DATA_DIR / 'stopwords.txt'))


def latin_ratio(text: str) -> float:
    letters = [ch for ch in text if ch.isalpha()]
    if not letters:
        return 0.0
    latin = sum(1 for ch in letters if ('a' <= ch <= 'z') or ('A' <= ch <= 'Z'))
    return latin / len(letters)


def is_target_language(text: str) -> bool:
    """Coarse English gate: mostly basic Latin letters and a few stopwords"""
    if latin_ratio(text) < LATIN_RATIO_THRESHOLD:
        return False
    words = stopwords()
    hits = sum(1 for token in WORD_RE.findall(text.lower()) if token in words)
    return hits >= MIN_STOPWORDS
