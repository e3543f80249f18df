"""
Tests for the vocabulary and the title / skills encodings
"""
import pytest
import torch

from src.models.embedding import Mode
from src.services.tokenizer_service import (
    CLS_ID, PAD_ID, SEP_ID, SKILL_ID, SPECIAL_TOKENS, UNK_ID, Vocabulary, build_vocab, decode,
    encode_skills, encode_title, load_vocab, pad_batch, save_vocab,
)
from src.utils.errors import EmptyCorpus, FormatVersionMismatch, IdOutOfRange, NoSkillFits


def test_build_vocab_orders_by_frequency():
    vocab = build_vocab(["b a", "a c", "a b"])
    assert vocab.tokens[:5] == SPECIAL_TOKENS
    assert vocab.tokens[5:] == ("a", "b", "c")


def test_build_vocab_min_frequency():
    vocab = build_vocab(["b a", "a c", "a b"], min_frequency=2)
    assert vocab.tokens[5:] == ("a", "b")
    assert vocab.id_of("c") == UNK_ID


def test_build_vocab_ignores_special_literals():
    vocab = build_vocab(["[SKILL] python [PAD]"])
    assert vocab.tokens == SPECIAL_TOKENS + ("python",)


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_vocab(["", "   "])


def test_vocab_file_round_trip(tmp_path, small_vocab):
    path = tmp_path / "vocab.txt"
    save_vocab(small_vocab, path)
    loaded = load_vocab(path)
    assert loaded.tokens == small_vocab.tokens
    assert loaded.sha256() == small_vocab.sha256()


@pytest.mark.parametrize("content", [
    "[UNK]\n[PAD]\n[CLS]\n[SEP]\n[SKILL]\nnurse\n",
    "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[SKILL]\nnurse\nnurse\n",
    "[PAD]\n[UNK]\n[CLS]\n[SEP]\n",
])
def test_load_rejects_bad_vocab(tmp_path, content):
    path = tmp_path / "vocab.txt"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(FormatVersionMismatch):
        load_vocab(path)


def test_encode_title(small_vocab):
    encoded = encode_title("senior unknownword developer", small_vocab)
    assert encoded.ids[0] == CLS_ID
    assert encoded.ids[-1] == SEP_ID
    assert encoded.ids[2] == UNK_ID
    assert encoded.mask == (1,) * 5
    assert encoded.mode is Mode.TITLE


def test_encode_title_truncates(small_vocab):
    encoded = encode_title(" ".join(["nurse"] * 50), small_vocab)
    assert len(encoded) == 32
    assert encoded.ids[-1] == SEP_ID


def test_title_round_trip(small_vocab):
    title = "senior software developer"
    assert decode(encode_title(title, small_vocab).ids, small_vocab) == title


def test_encode_skills_marks_each_skill(small_vocab):
    encoded = encode_skills(["python", "wound care", "machine learning"], small_vocab)
    assert encoded.skill_positions == (1, 3, 6)
    assert [encoded.ids[p] for p in encoded.skill_positions] == [SKILL_ID] * 3
    assert decode(encoded.ids, small_vocab) == "python wound care machine learning"
    assert encoded.mode is Mode.SKILLS


def test_encode_skills_truncates_whole_skills(small_vocab):
    skills = [f"python sql git {i}" for i in range(100)]
    encoded = encode_skills(skills, small_vocab)
    # [CLS] + 25 * ([SKILL] + 4 words) + [SEP]
    assert len(encoded) == 127
    assert len(encoded.skill_positions) == 25
    assert encoded.ids.count(SKILL_ID) == 25
    assert encoded.ids[-1] == SEP_ID


def test_encode_skills_never_exceeds_budget(rng, small_vocab):
    words = list(small_vocab.tokens[5:])
    for _ in range(50):
        skills = [
            " ".join(words[int(i)] for i in rng.integers(len(words), size=int(rng.integers(1, 6))))
            for _ in range(int(rng.integers(1, 60)))
        ]
        encoded = encode_skills(skills, small_vocab)
        assert len(encoded) <= 128
        assert encoded.ids.count(SKILL_ID) == len(encoded.skill_positions)


def test_no_skill_fits(small_vocab):
    with pytest.raises(NoSkillFits):
        encode_skills([], small_vocab)
    with pytest.raises(NoSkillFits):
        encode_skills([" ".join(["python"] * 200)], small_vocab)


def test_decode_rejects_unknown_ids(small_vocab):
    with pytest.raises(IdOutOfRange):
        decode([CLS_ID, len(small_vocab)], small_vocab)


def test_pad_batch(small_vocab):
    short = encode_title("chef", small_vocab)
    long = encode_skills(["python sql", "triage"], small_vocab)
    ids, mask = pad_batch([short, long])
    assert ids.shape == (2, len(long))
    assert ids.dtype == torch.long
    assert mask.dtype == torch.bool
    assert ids[0, len(short):].tolist() == [PAD_ID] * (len(long) - len(short))
    assert mask[0].sum().item() == len(short)


def test_vocabulary_requires_specials():
    with pytest.raises(FormatVersionMismatch):
        Vocabulary(("a", "b"))
