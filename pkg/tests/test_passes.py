import random

import pytest

from conftest import FIXTURES, LIVE_OPT, read_ir
from errors import InvalidInputError, ToolError, ToolUnavailableError
from pass_ops import (
    PassEvent, PassStatus, collect_targets, log_file_name, mutation_frequency, parse_print_changed,
    run_opt_trace, trace_corpus,
)

LOGS = FIXTURES / "logs"
CHANGED, UNCHANGED, IGNORED = PassStatus.CHANGED, PassStatus.UNCHANGED, PassStatus.IGNORED

EXPECTED_SUM_EVENTS = [
    PassEvent("Annotation2MetadataPass", "[module]", UNCHANGED),
    PassEvent("ForceFunctionAttrsPass", "[module]", UNCHANGED),
    PassEvent("InferFunctionAttrsPass", "[module]", CHANGED),
    PassEvent("SROAPass", "sum", CHANGED),
    PassEvent("EarlyCSEPass", "sum", UNCHANGED),
    PassEvent("InstCombinePass", "sum", CHANGED),
    PassEvent("VerifierPass", "sum", IGNORED),
    PassEvent("GVNPass", "sum", UNCHANGED),
    PassEvent("InstCombinePass", "sum", UNCHANGED),
    PassEvent("SimplifyCFGPass", "sum", UNCHANGED),
]

NOISE = [
    "",
    "warning: something odd",
    "*** IR Dump After",
    "*** IR Dump Before GVNPass on sum ***",
    "  *** IR Dump After GVNPass on sum ***",
    "*** IR Dump After GVNPass on sum",
    "IR Dump After GVNPass on sum omitted because no change ***",
    "define i32 @f() {",
    "}",
]


def test_single_banners():
    assert parse_print_changed("*** IR Dump After InstCombinePass on sum ***") == [
        PassEvent("InstCombinePass", "sum", CHANGED)]
    assert parse_print_changed("*** IR Dump After GVNPass on sum omitted because no change ***") == [
        PassEvent("GVNPass", "sum", UNCHANGED)]
    assert parse_print_changed("*** IR Dump After VerifierPass on sum filtered out ***") == [
        PassEvent("VerifierPass", "sum", IGNORED)]
    assert parse_print_changed("") == []


def test_recorded_log():
    assert parse_print_changed((LOGS / "sum_O3.log").read_text()) == EXPECTED_SUM_EVENTS


def test_noisy_log_matches_clean_log():
    clean = parse_print_changed((LOGS / "sum_O3.log").read_text())
    noisy = parse_print_changed((LOGS / "sum_O3_noisy.log").read_text())
    assert noisy == clean


def test_random_noise_injection():
    lines = (LOGS / "sum_O3.log").read_text().splitlines()
    rng = random.Random(5)
    for _ in range(200):
        mixed = []
        for line in lines:
            while rng.random() < 0.3:
                mixed.append(rng.choice(NOISE))
            mixed.append(line)
        assert parse_print_changed("\n".join(mixed)) == EXPECTED_SUM_EVENTS


def test_event_conservation():
    log = (LOGS / "sum_O3.log").read_text()
    events = parse_print_changed(log)
    for name in {event.pass_name for event in events}:
        banners = sum(1 for line in log.splitlines() if line.startswith(f"*** IR Dump After {name} on "))
        assert sum(1 for event in events if event.pass_name == name) == banners


def two_language_runs():
    c_first = [
        PassEvent("InstCombinePass", "f", CHANGED),
        PassEvent("GVNPass", "f", UNCHANGED),
        PassEvent("OpenMPOptCGSCCPass", "f", CHANGED),
    ]
    c_second = [
        PassEvent("InstCombinePass", "g", UNCHANGED),
        PassEvent("GVNPass", "g", UNCHANGED),
    ]
    rust = [
        PassEvent("InstCombinePass", "h", CHANGED),
        PassEvent("GVNPass", "h", UNCHANGED),
        PassEvent("VerifierPass", "h", IGNORED),
    ]
    return {"C": [c_first, c_second], "Rust": [rust]}


def test_mutation_frequency_by_hand():
    table = mutation_frequency(two_language_runs())
    assert table.languages == ["C", "Rust"]
    assert [row.pass_name for row in table.rows] == ["InstCombinePass", "OpenMPOptCGSCCPass", "GVNPass"]
    rows = {row.pass_name: row for row in table.rows}
    instcombine = rows["InstCombinePass"].per_language
    assert (instcombine["C"].targets_seen, instcombine["C"].targets_changed) == (2, 1)
    assert instcombine["C"].frequency == 0.5
    assert instcombine["Rust"].frequency == 1.0
    openmp = rows["OpenMPOptCGSCCPass"].per_language
    assert openmp["Rust"].targets_seen == 0
    assert openmp["Rust"].frequency is None
    assert rows["GVNPass"].max_frequency == 0.0
    assert "VerifierPass" not in rows


def test_mutation_frequency_bounds_and_permutation():
    rng = random.Random(9)
    passes = [f"Pass{k}" for k in range(8)]
    runs = {
        language: [
            [PassEvent(rng.choice(passes), "t", rng.choice(list(PassStatus))) for _ in range(rng.randint(0, 10))]
            for _ in range(rng.randint(0, 6))
        ]
        for language in ("C", "C++", "Rust")
    }
    table = mutation_frequency(runs)
    names = [row.pass_name for row in table.rows]
    assert len(names) == len(set(names))
    for row in table.rows:
        for stats in row.per_language.values():
            assert 0 <= stats.targets_changed <= stats.targets_seen
            if stats.frequency is not None:
                assert 0.0 <= stats.frequency <= 1.0
    order = [(-row.max_frequency, row.pass_name) for row in table.rows]
    assert order == sorted(order)


def test_per_occurrence_keys():
    events = [
        PassEvent("InstCombinePass", "f", CHANGED),
        PassEvent("InstCombinePass", "f", UNCHANGED),
    ]
    merged = mutation_frequency({"C": [events]})
    assert [(row.pass_name, row.per_language["C"].targets_changed) for row in merged.rows] == [
        ("InstCombinePass", 1)]
    split = mutation_frequency({"C": [events]}, per_occurrence=True)
    assert [(row.pass_name, row.per_language["C"].targets_changed) for row in split.rows] == [
        ("InstCombinePass#1", 1), ("InstCombinePass#2", 0)]


def test_empty_runs():
    table = mutation_frequency({})
    assert table.rows == []
    assert table.languages == []


def test_log_file_name():
    assert log_file_name("pkg/0.ll::demo::entry") == "pkg_0.ll__demo__entry.log"


def test_run_opt_trace_validation(tmp_path):
    module = tmp_path / "m.ll"
    module.write_text(read_ir("sum_O0.ll"))
    with pytest.raises(InvalidInputError):
        run_opt_trace(str(module), "  ", "opt")
    with pytest.raises(ToolUnavailableError):
        run_opt_trace(str(module), "default<O3>", None)
    with pytest.raises(ToolUnavailableError):
        run_opt_trace(str(module), "default<O3>", str(tmp_path / "no-such-opt"))


def test_run_opt_trace_with_stub(tmp_path, stub_toolchain):
    module = tmp_path / "m.ll"
    module.write_text(read_ir("sum_O0.ll"))
    trace = run_opt_trace(str(module), "default<O3>", stub_toolchain["opt"])
    assert trace.returncode == 0
    assert parse_print_changed(trace.log) == [
        PassEvent("InstCombinePass", "sum", CHANGED),
        PassEvent("SimplifyCFGPass", "sum", UNCHANGED),
        PassEvent("GVNPass", "sum", CHANGED),
    ]


def test_crash_without_log_is_tool_error(tmp_path, stub_toolchain):
    module = tmp_path / "m.ll"
    module.write_text(read_ir("sum_O0.ll"))
    with pytest.raises(ToolError) as info:
        run_opt_trace(str(module), "crash", stub_toolchain["opt"])
    assert info.value.returncode == 139


def pass_corpus(make_corpus):
    return make_corpus([
        ("cpkg", "C", read_ir("sum_O0.ll")),
        ("jpkg", "Julia", read_ir("julia_like.ll")),
        ("rpkg", "Rust", read_ir("rust_like.ll")),
    ])


def test_collect_targets(make_corpus):
    db, manifest = pass_corpus(make_corpus)
    targets = collect_targets(manifest, db, "function", exclude_languages=["Julia"])
    assert [t.target_id for t in targets] == [
        "cpkg/0.ll::sum", "rpkg/0.ll::_ZN4demo3sum17h0123456789abcdefE", "rpkg/0.ll::demo::entry"]
    modules = collect_targets(manifest, db, "module")
    assert [t.function for t in modules] == [None, None, None]
    with pytest.raises(InvalidInputError):
        collect_targets(manifest, db, "basic-block")


def test_trace_corpus_with_stub(make_corpus, stub_toolchain, tmp_path):
    db, manifest = pass_corpus(make_corpus)
    record_dir = tmp_path / "logs"
    table = trace_corpus(manifest, db, "default<O3>", optimizer=stub_toolchain["opt"],
                         exclude_languages=["Julia"], record_dir=str(record_dir))
    assert table.languages == ["C", "Rust"]
    assert [row.pass_name for row in table.rows] == ["GVNPass", "InstCombinePass", "SimplifyCFGPass"]
    gvn = table.rows[0].per_language
    assert (gvn["C"].targets_seen, gvn["C"].targets_changed) == (1, 1)
    assert (gvn["Rust"].targets_seen, gvn["Rust"].targets_changed) == (2, 0)
    assert table.failed_targets == 0
    assert len(list(record_dir.glob("*.log"))) == 3

    replayed = trace_corpus(manifest, db, "default<O3>", optimizer=None, exclude_languages=["Julia"],
                            replay_dir=str(record_dir))
    assert replayed == table


def test_trace_corpus_module_granularity(make_corpus, stub_toolchain):
    db, manifest = pass_corpus(make_corpus)
    table = trace_corpus(manifest, db, "default<O3>", granularity="module", optimizer=stub_toolchain["opt"])
    assert table.languages == ["C", "Julia", "Rust"]
    for row in table.rows:
        assert row.per_language["Rust"].targets_seen == 1


def test_failed_targets_are_excluded(make_corpus, stub_toolchain):
    db, manifest = pass_corpus(make_corpus)
    table = trace_corpus(manifest, db, "crash", optimizer=stub_toolchain["opt"], exclude_languages=["Julia"])
    assert table.rows == []
    assert table.failed_targets == 3


def test_missing_optimizer_is_fatal(make_corpus):
    db, manifest = pass_corpus(make_corpus)
    with pytest.raises(ToolUnavailableError):
        trace_corpus(manifest, db, "default<O3>", optimizer=None)


def test_empty_corpus(make_corpus, stub_toolchain):
    db, manifest = make_corpus([])
    table = trace_corpus(manifest, db, "default<O3>", optimizer=stub_toolchain["opt"])
    assert table.rows == []


@pytest.mark.skipif(not LIVE_OPT, reason="IRFORGE_OPT not set")
def test_live_optimizer(tmp_path):
    module = tmp_path / "sum.ll"
    module.write_text(read_ir("sum_O0.ll"))
    trace = run_opt_trace(str(module), "default<O3>", LIVE_OPT)
    assert "IR Dump" in trace.log
    events = parse_print_changed(trace.log)
    assert any(event.status is CHANGED for event in events)
    garbage = tmp_path / "garbage.ll"
    garbage.write_text("this is not IR\n")
    with pytest.raises(ToolError):
        run_opt_trace(str(garbage), "default<O3>", LIVE_OPT)
