import random
import string

import pytest

from conftest import all_ir_fixtures, read_ir
from errors import InvalidInputError
from tokenizer_ops import BpeModel, corpus_token_count, draw_training_sample, tokenize_count, train_bpe

LANGUAGES = ("C", "C++", "Rust")


def corpus_texts(copies=100):
    """About 1 MB of IR built from the fixtures with varied symbol spellings"""
    joined = "\n".join(read_ir(name) for name in all_ir_fixtures())
    return [
        joined.replace("@", f"@m{k % 10}_").replace("%", f"%r{k % 10}.")
        for k in range(copies)
    ]


@pytest.fixture
def ir_corpus(make_corpus):
    texts = corpus_texts()
    modules = [(f"p{k % 5}", LANGUAGES[k % 3], text) for k, text in enumerate(texts)]
    return make_corpus(modules)


def test_first_merge_is_most_frequent_pair():
    model = train_bpe(["aaab aaab"], vocab_size=3)
    assert model.merges == [("a", "a")]
    assert set(model.vocab) == {"a", "b", "aa"}


def test_ties_break_lexicographically():
    model = train_bpe(["aaab aaab"], vocab_size=4)
    assert model.merges == [("a", "a"), ("a", "b")]


def test_single_occurrence_does_not_merge():
    model = train_bpe(["ab"], vocab_size=1000)
    assert model.merges == []
    assert set(model.vocab) == {"a", "b"}


def test_empty_texts():
    model = train_bpe([], vocab_size=10)
    assert model.merges == []
    assert model.vocab == {}


def test_vocab_smaller_than_alphabet():
    with pytest.raises(InvalidInputError):
        train_bpe(["abc"], vocab_size=2)


def test_tokenize_count_examples():
    model = BpeModel([("a", "a")], base_symbols=["a", "b"])
    assert model.tokenize("aaab") == ["aa", "a", "b"]
    assert tokenize_count(model, "aaab") == 3
    assert tokenize_count(model, "") == 0
    assert tokenize_count(model, "z") == 1
    assert tokenize_count(model, "aa  aa\nb") == 3


def test_vocab_is_reproduced_by_merges():
    model = train_bpe(corpus_texts(3), vocab_size=400)
    known = {symbol for symbol in model.vocab if len(symbol) == 1}
    for left, right in model.merges:
        assert left in known and right in known
        known.add(left + right)
    assert known == set(model.vocab)
    assert len(model.vocab) <= 400


def test_training_is_deterministic():
    texts = corpus_texts(5)
    assert train_bpe(texts, 500).merges == train_bpe(texts, 500).merges


def test_tokenization_is_lossless():
    model = train_bpe(corpus_texts(5), vocab_size=600)
    rng = random.Random(3)
    alphabet = string.ascii_letters + string.digits + "%@.,_()[]{}*!#<>=-\"'é"
    for _ in range(10000):
        word = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 24)))
        assert "".join(model.tokenize_word(word)) == word


def test_truncated_matches_direct_training():
    texts = corpus_texts(5)
    large = train_bpe(texts, 800)
    assert large.truncated(300).merges == train_bpe(texts, 300).merges
    with pytest.raises(InvalidInputError):
        large.truncated(2)


def test_save_and_load(tmp_path):
    model = train_bpe(corpus_texts(3), vocab_size=350)
    path = tmp_path / "merges.txt"
    model.save(str(path))
    loaded = BpeModel.load(str(path))
    assert loaded.merges == model.merges
    text = corpus_texts(1)[0]
    assert loaded.tokenize(text) == model.tokenize(text)


def test_load_rejects_malformed_lines(tmp_path):
    path = tmp_path / "merges.txt"
    path.write_text("a b\nonly-one\n")
    with pytest.raises(InvalidInputError):
        BpeModel.load(str(path))


def test_training_sample(ir_corpus):
    db, manifest = ir_corpus
    texts, description = draw_training_sample(manifest, db, per_language=2, seed=0)
    assert len(texts) == 6
    assert description.modules_per_language == {"C": 2, "C++": 2, "Rust": 2}
    assert description.capped_languages == []
    again, _ = draw_training_sample(manifest, db, per_language=2, seed=0)
    assert again == texts
    _, capped = draw_training_sample(manifest, db, per_language=1000, seed=0)
    assert capped.capped_languages == ["C", "C++", "Rust"]
    assert sum(capped.modules_per_language.values()) == len(manifest.records)


def test_counts_do_not_increase_with_vocab_size(ir_corpus):
    db, manifest = ir_corpus
    report = corpus_token_count(manifest, db, [3000, 300, 1000], per_language=4, seed=0)
    assert [entry.vocab_size for entry in report.entries] == [300, 1000, 3000]
    counts = [entry.token_count for entry in report.entries]
    assert counts[0] >= counts[1] >= counts[2] > 0
    for entry in report.entries:
        assert entry.vocab_len <= entry.vocab_size
    assert report.counted_modules == len(manifest.records)
    assert report.skipped_modules == 0


def test_corpus_count_is_the_sum_over_modules(ir_corpus):
    db, manifest = ir_corpus
    report = corpus_token_count(manifest, db, [500], per_language=2, seed=1)
    texts, _ = draw_training_sample(manifest, db, per_language=2, seed=1)
    model = train_bpe(texts, 500)
    expected = sum(tokenize_count(model, db.read_text(record)) for record in manifest.records)
    assert report.count_for(500) == expected
    assert corpus_token_count(manifest, db, [500], per_language=2, seed=1) == report


def test_single_module_corpus(make_corpus):
    text = read_ir("loops.ll")
    db, manifest = make_corpus([("solo", "C", text)])
    report = corpus_token_count(manifest, db, [200], per_language=5, seed=0)
    assert report.count_for(200) == tokenize_count(train_bpe([text], 200), text)
    assert report.sample.capped_languages == ["C"]


def test_vocab_sizes_required(make_corpus):
    db, manifest = make_corpus([("solo", "C", read_ir("sum.ll"))])
    with pytest.raises(InvalidInputError):
        corpus_token_count(manifest, db, [], per_language=1, seed=0)
