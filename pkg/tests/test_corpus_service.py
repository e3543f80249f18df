"""
Tests for JSONL loading, synthetic corpora, statistics and the cleaning pipeline
"""
import json

import pytest

from src.models.records import JobRecord, Source
from src.services.corpus_service import (
    PreprocessSummary, SynthConfig, compute_stats, dedup_key, generate_synthetic, language_probe,
    load_benchmark, load_catalog, load_records, preprocess, to_training_pairs, write_benchmark,
)
from src.services.skill_service import Gazetteer
from src.utils.errors import InvalidConfig, IoFailure, MalformedBenchmark


def _write_lines(path, lines):
    path.write_text(''.join(f"{line}\n" for line in lines), encoding='utf-8')
    return path


def test_benchmark_round_trip(tmp_path, synthetic_records):
    path = tmp_path / "bench.jsonl"
    write_benchmark(synthetic_records, path)
    assert load_benchmark(path) == synthetic_records


def test_load_collects_malformed_lines(tmp_path):
    good = json.dumps({"title": "Nurse", "normalized_title": "nurse", "esco_code": "2221.1"})
    path = _write_lines(tmp_path / "bench.jsonl", [good, "", good, "{not json", good])
    result = load_records(path)
    assert len(result.records) == 3
    assert result.total_lines == 4
    assert [m.line_number for m in result.malformed] == [4]


def test_load_counts_rejected_records_apart_from_bad_json(tmp_path):
    good = json.dumps({"title": "Nurse", "normalized_title": "nurse"})
    path = _write_lines(tmp_path / "bench.jsonl", [good, "{not json", '{"title": ""}', good, good])
    result = load_records(path)
    assert len(result.records) == 3
    assert len(result.malformed) == 2
    assert result.rejected == 1


def test_missing_normalized_title_counts_as_rejected(tmp_path):
    lines = [
        json.dumps({"title": "Nurse", "normalized_title": "nurse"}),
        json.dumps({"title": "Chef", "normalized_title": "chef"}),
        json.dumps({"title": "Cook"}),
    ]
    path = _write_lines(tmp_path / "bench.jsonl", lines)
    result = load_records(path, require_normalized=True)
    assert result.rejected == 1
    assert load_records(path).rejected == 0


def test_load_rejects_mostly_malformed_file(tmp_path):
    good = json.dumps({"title": "Nurse"})
    path = _write_lines(tmp_path / "bench.jsonl", [good, "[]", '{"title": ""}'])
    with pytest.raises(MalformedBenchmark) as excinfo:
        load_records(path)
    assert len(excinfo.value.malformed) == 2
    assert excinfo.value.total == 3


def test_benchmark_requires_normalized_title(tmp_path):
    lines = [
        json.dumps({"title": "Nurse", "normalized_title": "nurse"}),
        json.dumps({"title": "Chef", "normalized_title": "chef"}),
        json.dumps({"title": "Cook"}),
    ]
    path = _write_lines(tmp_path / "bench.jsonl", lines)
    assert [r.title for r in load_benchmark(path)] == ["Nurse", "Chef"]
    assert len(load_records(path).records) == 3


def test_load_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        load_records(tmp_path / "missing.jsonl")


def test_record_validation():
    with pytest.raises(ValueError):
        JobRecord(title="   ")
    with pytest.raises(ValueError):
        JobRecord(title="nurse", esco_code="2221")
    record = JobRecord(title="nurse", skills=("triage", " triage ", "cpr"))
    assert record.skills == ("triage", "cpr")


def test_synthetic_is_deterministic():
    config = SynthConfig(families=5, records_per_family=6, noise=0.2)
    first = [r.to_dict() for r in generate_synthetic(config, seed=3)]
    again = [r.to_dict() for r in generate_synthetic(config, seed=3)]
    other = [r.to_dict() for r in generate_synthetic(config, seed=4)]
    assert first == again
    assert first != other


def test_synthetic_records_follow_their_family():
    catalog = load_catalog()
    config = SynthConfig(families=6, skills_per_family=8, records_per_family=10, modifier_rate=0.0)
    records = generate_synthetic(config, seed=1)
    assert len(records) == 60
    families = {f.label: f for f in catalog.families}
    for record in records:
        family = families[record.normalized_title]
        assert record.esco_code == family.esco_code
        assert record.source is Source.SYNTHETIC
        assert record.title.lower() in family.variants
        assert len(record.skills) == 8
        assert set(record.skills) <= set(family.skills[:8])


def test_ambiguous_pairs_share_a_variant():
    catalog = load_catalog()
    config = SynthConfig(families=4, records_per_family=200, ambiguous_pairs=1, modifier_rate=0.0)
    records = generate_synthetic(config, seed=2)
    shared = catalog.ambiguous_variants[0]
    owners = {r.normalized_title for r in records if r.title.lower() == shared}
    assert owners == {catalog.families[0].label, catalog.families[1].label}


def test_noise_draws_foreign_skills():
    config = SynthConfig(families=4, records_per_family=50, noise=0.5)
    records = generate_synthetic(config, seed=9)
    pools = {f.label: set(f.skills[:8]) for f in load_catalog().families[:4]}
    foreign = sum(1 for r in records for s in r.skills if s not in pools[r.normalized_title])
    assert foreign > 0
    for record in records:
        assert len(set(record.skills)) == len(record.skills)


def test_noise_rate_matches_contamination():
    config = SynthConfig(families=10, noise=0.1)
    records = generate_synthetic(config, seed=0)
    pools = {f.label: set(f.skills[:8]) for f in load_catalog().families[:10]}
    drawn = [s in pools[r.normalized_title] for r in records for s in r.skills]
    contamination = drawn.count(False) / len(drawn)
    assert 0.05 <= contamination <= 0.15


def test_distinct_seeds_give_distinct_corpora():
    config = SynthConfig(families=4, records_per_family=6, noise=0.1)
    seeds = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11), (12, 13), (14, 15), (16, 17), (18, 19)]
    for first, second in seeds:
        left = [r.to_dict() for r in generate_synthetic(config, seed=first)]
        right = [r.to_dict() for r in generate_synthetic(config, seed=second)]
        assert left != right, (first, second)


@pytest.mark.parametrize("overrides", [
    {"families": 1},
    {"families": 17},
    {"skills_per_family": 3},
    {"skills_per_family": 13},
    {"records_per_family": 0},
    {"skills_per_record": 9},
    {"noise": 1.0},
    {"modifier_rate": 1.5},
    {"ambiguous_pairs": 6},
])
def test_synth_config_validation(overrides):
    with pytest.raises(InvalidConfig):
        generate_synthetic(SynthConfig(**overrides), seed=0)


def test_compute_stats():
    records = [
        JobRecord(title="Nurse", skills=("triage",), normalized_title="nurse", esco_code="2221.1"),
        JobRecord(title="nurse ", skills=tuple(f"s{i}" for i in range(12)), normalized_title="nurse",
                  esco_code="2221.1"),
        JobRecord(title="Chef", skills=tuple(f"s{i}" for i in range(101))),
    ]
    stats = compute_stats(records).to_dict()
    assert stats == {
        "total_records": 3,
        "records_per_esco_family": {"2": 2},
        "skill_count_buckets": {"<10": 1, "10-100": 1, ">100": 1},
        "unique_titles": 2,
    }


def _mixed_records():
    english = generate_synthetic(SynthConfig(families=8, records_per_family=1), seed=21)
    ukrainian = [text for text, is_english in language_probe(40, seed=3) if not is_english][:2]
    return english + [JobRecord(title="розробник", description=text) for text in ukrainian]


def test_preprocess_drops_other_languages():
    records = _mixed_records()
    kept, summary = preprocess(records, Gazetteer.default())
    assert len(records) == 10
    assert summary == PreprocessSummary(read=10, kept=8, dropped_language=2)
    for record in kept:
        assert record.title == record.title.lower()
        assert "we offer" not in " ".join(record.skills)


def test_preprocess_is_idempotent():
    gazetteer = Gazetteer.default()
    once, _ = preprocess(_mixed_records(), gazetteer)
    twice, summary = preprocess(once, gazetteer)
    assert twice == once
    assert summary.kept == len(once)


def test_preprocess_extracts_and_deduplicates():
    description = "Experience with Python is required. Contact hr@acme.com. We offer docker training."
    records = [
        JobRecord(title="Backend Developer", description=description),
        JobRecord(title="backend developer", description=description),
        JobRecord(title="Backend Developer", description="We are an equal opportunity employer."),
        JobRecord(title="Chef"),
    ]
    kept, summary = preprocess(records, Gazetteer.default())
    assert [r.skills for r in kept] == [("python",)]
    assert kept[0].description == "experience with python is required. contact we offer docker training."
    assert summary.dropped_duplicate == 1
    assert summary.dropped_empty == 2


def test_dedup_key_ignores_skill_order():
    a = JobRecord(title="Nurse", skills=("triage", "cpr"))
    b = JobRecord(title="nurse", skills=("cpr", "triage"))
    assert dedup_key(a) == dedup_key(b)


def test_training_pairs():
    records = [
        JobRecord(title="Senior Nurse", skills=("Triage", "triage", "CPR"), normalized_title="Nurse"),
        JobRecord(title="Chef", skills=("knife skills",)),
        JobRecord(title="Cook"),
    ]
    pairs = to_training_pairs(records)
    assert len(pairs) == 2
    assert pairs[0].title == "senior nurse"
    assert pairs[0].skills == ("triage", "cpr")
    assert pairs[0].label == "nurse"
    assert pairs[1].label == "chef"
