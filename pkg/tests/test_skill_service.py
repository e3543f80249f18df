"""
Tests for gazetteer skill extraction
"""
import pytest

from src.services.corpus_service import SynthConfig, generate_synthetic, load_catalog
from src.services.skill_service import Gazetteer, extract_skills
from src.services.text_service import clean_text, filter_relevant_sentences
from src.utils.errors import EmptyGazetteer, IoFailure


def test_longest_match_wins():
    gazetteer = Gazetteer(["machine learning", "learning", "python"])
    text = "we need machine learning and python and learning"
    assert extract_skills(text, gazetteer) == ["machine learning", "python", "learning"]


def test_matches_respect_word_boundaries():
    gazetteer = Gazetteer(["java", "git"])
    assert extract_skills("javascript and github experience", gazetteer) == []
    assert extract_skills("java, git.", gazetteer) == ["java", "git"]


def test_first_appearance_order_without_duplicates():
    gazetteer = Gazetteer(["sql", "python"])
    assert extract_skills("python then sql then python again", gazetteer) == ["python", "sql"]


def test_entries_are_normalized():
    gazetteer = Gazetteer(["  Machine   Learning ", "SQL", ""])
    assert "machine learning" in gazetteer
    assert "sql" in gazetteer
    assert len(gazetteer) == 2


def test_empty_gazetteer_raises():
    with pytest.raises(EmptyGazetteer):
        extract_skills("python", Gazetteer([]))


def test_from_file_skips_comments(tmp_path):
    path = tmp_path / "skills.txt"
    path.write_text("# lexicon\npython\n\nsql\n", encoding="utf-8")
    assert sorted(Gazetteer.from_file(path)) == ["python", "sql"]


def test_from_missing_file():
    with pytest.raises(IoFailure):
        Gazetteer.from_file("/nonexistent/skills.txt")


def test_default_gazetteer_covers_catalog():
    gazetteer = Gazetteer.default()
    for family in load_catalog().families:
        for skill in family.skills:
            assert skill in gazetteer


def test_planted_skills_are_recovered_in_order():
    gazetteer = Gazetteer.default()
    records = generate_synthetic(SynthConfig(families=16, records_per_family=3, skills_per_family=12), seed=5)
    for record in records:
        relevant = filter_relevant_sentences(clean_text(record.description))
        assert extract_skills(relevant, gazetteer) == list(record.skills)
