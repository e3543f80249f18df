"""
Tests for Recall@N, the relative improvement and encoder comparison reports
"""
import pytest

from src.models.records import JobRecord
from src.services.encoder_service import DualEncoder, StaticBaseline
from src.services.eval_service import (
    Delta, EvalReport, EvaluationResult, RecallTriple, compare_encoders, default_labels, delta_improvement,
    evaluate, recall_at_n, render_table,
)
from src.services.index_service import Hit, SearchResult, build_index_for
from src.utils.errors import (
    EmptyQuerySet, FingerprintMismatch, InvalidConfig, NoResolvableRecords, ZeroReference,
)

REFERENCE = RecallTriple(0.225, 0.386, 0.46)


def _result(*label_ids):
    return SearchResult(tuple(Hit(i, f"label {i}", 1.0 - 0.1 * rank) for rank, i in enumerate(label_ids)))


def _benchmark():
    return [
        JobRecord(title="Senior Software Developer", skills=("python", "sql"),
                  normalized_title="software developer", esco_code="2512.4"),
        JobRecord(title="Registered Nurse", skills=("triage",), normalized_title="nurse", esco_code="2221.1"),
        JobRecord(title="Chef", skills=("knife skills",), normalized_title="chef", esco_code="3434.1"),
        JobRecord(title="Data Scientist", skills=("pandas",), normalized_title="data scientist",
                  esco_code="2511.4"),
    ]


def test_recall_at_n():
    queries = [(0, _result(0, 1, 2)), (1, _result(0, 2, 1)), (2, _result(0, 1, 3))]
    assert recall_at_n(queries, 1) == pytest.approx(1 / 3)
    assert recall_at_n(queries, 3) == pytest.approx(2 / 3)
    with pytest.raises(EmptyQuerySet):
        recall_at_n([], 1)


def test_recall_is_monotone(rng):
    for _ in range(50):
        queries = []
        for _ in range(int(rng.integers(1, 20))):
            ranked = [int(i) for i in rng.permutation(12)[:10]]
            queries.append((int(rng.integers(12)), _result(*ranked)))
        r1, r5, r10 = (recall_at_n(queries, n) for n in (1, 5, 10))
        assert r1 <= r5 <= r10


def test_delta_reproduces_published_improvements():
    without_skills = RecallTriple(0.271, 0.402, 0.489)
    with_skills = RecallTriple(0.301, 0.425, 0.556)
    assert delta_improvement(without_skills, REFERENCE) == pytest.approx(10.30, abs=0.05)
    assert delta_improvement(with_skills, REFERENCE) == pytest.approx(21.58, abs=0.05)
    assert delta_improvement(REFERENCE, REFERENCE) == 0.0


def test_delta_needs_positive_reference():
    with pytest.raises(ZeroReference):
        delta_improvement(REFERENCE, RecallTriple(0.0, 0.1, 0.2))


def test_recall_triple_validation():
    with pytest.raises(ValueError):
        RecallTriple(0.5, 0.4, 0.6)
    with pytest.raises(ValueError):
        RecallTriple(0.5, 0.6, 1.2)
    assert RecallTriple.parse("0.225, 0.386,0.46") == REFERENCE
    with pytest.raises(InvalidConfig):
        RecallTriple.parse("0.2,0.3")
    with pytest.raises(InvalidConfig):
        RecallTriple.parse("a,b,c")


def test_evaluate_counts_unresolvable_records(small_params, small_vocab):
    encoder = DualEncoder(small_params, small_vocab)
    index = build_index_for(encoder, ["software developer", "nurse", "chef"])
    result = evaluate(_benchmark(), encoder, "title", index)
    assert (result.resolvable, result.excluded, result.total) == (3, 1, 4)
    assert result.recall.r10 == 1.0
    assert result.row_name == "dual-encoder [title]"


def test_evaluate_checks_its_inputs(small_params, small_vocab):
    encoder = DualEncoder(small_params, small_vocab)
    index = build_index_for(encoder, ["accountant"])
    with pytest.raises(NoResolvableRecords):
        evaluate(_benchmark(), encoder, "title", index)
    with pytest.raises(InvalidConfig):
        evaluate(_benchmark(), encoder, "title", index, k=5)
    other = build_index_for(StaticBaseline(small_vocab, dim=small_params.config.pooled_dim), ["chef"])
    with pytest.raises(FingerprintMismatch):
        evaluate(_benchmark(), encoder, "title", other)


def test_compare_encoders_report(small_params, small_vocab):
    encoders = [DualEncoder(small_params, small_vocab), StaticBaseline(small_vocab, dim=8, seed=1)]
    report = compare_encoders(
        _benchmark(), encoders, ["title", "combined"], references={"published": REFERENCE}, per_family=True,
    )
    names = [r.row_name for r in report.results]
    assert names == [
        "dual-encoder [title]", "dual-encoder [combined]",
        "static-baseline [title]", "static-baseline [combined]", "published",
    ]
    assert report.result("published").external
    assert [d.candidate for d in report.deltas] == names[:4]
    assert report.dataset["labels"] == 4
    assert set(report.result("dual-encoder [title]").per_family) == {"2", "3"}
    assert EvalReport.from_json(report.to_json()).to_dict() == report.to_dict()


def test_compare_encoders_is_deterministic(small_params, small_vocab):
    encoders = [DualEncoder(small_params, small_vocab)]
    first = compare_encoders(_benchmark(), encoders, ["title", "combined"]).to_json()
    again = compare_encoders(_benchmark(), encoders, ["title", "combined"]).to_json()
    assert first == again


def test_default_labels_keep_first_appearance():
    records = _benchmark() + [JobRecord(title="Cook", normalized_title="Chef")]
    assert default_labels(records) == ["software developer", "nurse", "chef", "data scientist"]


def test_render_table():
    report = EvalReport(dataset={})
    report.results = [
        EvaluationResult("vacancy", "combined", RecallTriple(0.301, 0.425, 0.556)),
        EvaluationResult("published", None, REFERENCE, external=True),
    ]
    report.deltas = [Delta("vacancy [combined]", "published", 21.58)]
    lines = render_table(report).splitlines()
    assert lines[0].split() == ["Model", "Recall@1", "Recall@5", "Recall@10", "Δ", "%"]
    assert lines[2].split() == ["vacancy", "[combined]", "0.301", "0.425", "0.556", "+21.58"]
    assert lines[3].split() == ["published", "0.225", "0.386", "0.460"]


def test_render_table_without_deltas():
    report = EvalReport(dataset={}, results=[EvaluationResult("enc", "title", RecallTriple(0.5, 0.75, 1.0))])
    assert "Δ" not in render_table(report)
