from collections import Counter

import pytest
from pydantic import ValidationError

from conftest import read_ir
from errors import InvalidInputError
from ir.parser import parse_module
from models import DedupStatus, OpcodeCounts
from stats_ops import count_opcodes, distribution_from_counts, duplication_heatmap, opcode_distribution, top_k_table


def test_sum_opcodes():
    counts = count_opcodes(parse_module(read_ir("sum.ll")), "C")
    assert counts.counts == {"add": 1, "ret": 1}
    assert counts.total == 2


def test_debug_only_module_is_empty():
    text = (
        "define void @f(i32 %x) {\n"
        "entry:\n"
        "  call void @llvm.dbg.value(metadata i32 %x, metadata !1, metadata !DIExpression())\n"
        "}\n"
    )
    counts = count_opcodes(parse_module(text))
    assert counts.counts == {}
    assert counts.total == 0


def test_debug_records_do_not_count():
    text = read_ir("debug_records.ll")
    plain = "\n".join(line for line in text.splitlines() if not line.strip().startswith("#dbg_"))
    assert count_opcodes(parse_module(text)) == count_opcodes(parse_module(plain))
    record_only = "define void @f(i32 %x) {\nentry:\n  #dbg_value(i32 %x, !1, !DIExpression(), !2)\n}\n"
    assert count_opcodes(parse_module(record_only)).total == 0


def test_lifetime_intrinsics_count_as_calls():
    text = (
        "define void @f(ptr %p) {\n"
        "  call void @llvm.lifetime.start.p0(i64 4, ptr %p)\n"
        "  ret void\n"
        "}\n"
    )
    assert count_opcodes(parse_module(text)).counts == {"call": 1, "ret": 1}


def test_other_opcodes_use_raw_token():
    counts = count_opcodes(parse_module(read_ir("atomics.ll")))
    assert counts.counts["atomicrmw"] == 1
    assert counts.counts["fence"] == 1
    assert counts.total == 7


def test_counts_total_is_validated():
    with pytest.raises(ValidationError):
        OpcodeCounts(language_tag="C", counts={"add": 1}, total=2)


def test_top_k_merges_modules():
    table = distribution_from_counts([
        OpcodeCounts(language_tag="C", counts={"add": 1, "ret": 1}, total=2),
        OpcodeCounts(language_tag="C", counts={"ret": 2}, total=2),
    ], k=1)
    assert table.per_language["C"].top == [["ret", 3]]
    assert table.per_language["C"].other == 1
    assert table.per_language["C"].total == 4


def test_top_k_larger_than_distinct():
    table = top_k_table({"add": 2, "ret": 1}, k=10)
    assert table.top == [["add", 2], ["ret", 1]]
    assert table.other == 0


def test_top_k_ties_are_alphabetical():
    assert top_k_table({"sub": 2, "add": 2, "ret": 5}, k=3).top == [["ret", 5], ["add", 2], ["sub", 2]]


def test_k_must_be_positive():
    with pytest.raises(InvalidInputError):
        distribution_from_counts([], k=0)


def test_mixed_language_corpus_matches_tally(make_corpus):
    modules = [
        ("a", "C", read_ir("sum.ll")),
        ("a", "C", read_ir("loops.ll")),
        ("b", "Rust", read_ir("rust_like.ll")),
        ("c", "Swift", read_ir("swift_like.ll")),
        ("c", "Swift", read_ir("memory.ll")),
    ]
    db, manifest = make_corpus(modules)
    distribution = opcode_distribution(manifest, db, k=100)
    expected = {}
    for _, language, text in modules:
        module = parse_module(text)
        tally = expected.setdefault(language, Counter())
        tally.update(inst.name for fn in module.defined_functions() for inst in fn.counted_instructions())
    assert sorted(distribution.per_language) == ["C", "Rust", "Swift"]
    for language, tally in expected.items():
        assert dict(distribution.per_language[language].top) == dict(tally)
    aggregate = sum(expected.values(), Counter())
    assert distribution.aggregate.total == sum(aggregate.values())


def test_removed_duplicates_are_not_counted(make_corpus):
    db, manifest = make_corpus([("a", "C", read_ir("sum.ll")), ("b", "C", read_ir("sum.ll"))])
    removed = manifest.records[1].model_copy(update={"dedup_status": DedupStatus.REMOVED_DUPLICATE, "module_hash": 1})
    manifest = manifest.model_copy(update={"records": [manifest.records[0], removed]})
    distribution = opcode_distribution(manifest, db, k=5)
    assert distribution.per_language["C"].total == 2


def test_heatmap_definitions():
    matrix = duplication_heatmap({"A": Counter({1: 1, 2: 1}), "B": Counter({2: 1, 3: 1})})
    assert matrix.languages == ["A", "B"]
    assert matrix.cell("A", "B") == 0.5
    assert matrix.cell("B", "A") == 0.5
    assert matrix.cell("A", "A") == 0.0


def test_heatmap_diagonal_counts_within_language_copies():
    matrix = duplication_heatmap({"A": Counter({1: 2, 2: 1})})
    assert matrix.cell("A", "A") == pytest.approx(1 / 3)


def test_heatmap_disjoint_and_empty_languages():
    matrix = duplication_heatmap({"A": Counter({1: 1}), "B": Counter({2: 1}), "C": Counter()})
    assert matrix.cell("A", "B") == 0.0
    assert matrix.cell("B", "A") == 0.0
    assert matrix.cell("C", "A") is None
    assert matrix.cell("A", "C") is None
    assert matrix.cell("C", "C") is None


def test_heatmap_is_row_normalized_not_symmetric():
    matrix = duplication_heatmap({"A": Counter({1: 1}), "B": Counter({1: 1, 2: 1, 3: 1, 4: 1})})
    assert matrix.cell("A", "B") == 1.0
    assert matrix.cell("B", "A") == 0.25
