import asyncio
import json
import tarfile

import pytest

from build_ops import (
    build_package, cargo_target_commands, injected_flags, render_command, required_tools, run_corpus_build,
)
from conftest import FIXTURES, read_ir
from db.database import CorpusDatabase
from errors import IrForgeError
from models import BuildStatus, Encoding, ExtractionStrategy, LanguageTag
from package_ops import load_package_list, parse_package_list
from toolchain_ops import load_config

PACKAGES = FIXTURES / "packages.json"


def with_commands(**commands):
    """The fixture package list with some build commands replaced"""
    entries = json.loads(PACKAGES.read_text())
    for entry in entries:
        if entry["name"] in commands:
            entry["build_commands"] = commands[entry["name"]]
    return parse_package_list(json.dumps(entries), base_dir=str(FIXTURES))


def notes_by_package(manifest):
    return {note.package: note for note in manifest.build_notes}


def test_flag_injection():
    alpha, _, _ = load_package_list(str(PACKAGES))
    assert injected_flags(alpha) == ["-Xclang", "-fembed-bitcode=all"]
    assert required_tools(alpha) == ["cc"]
    cargo = parse_package_list(json.dumps([{
        "name": "c", "ecosystem": "cargo", "source": {"kind": "local", "path": "/x"}, "extra_flags": ["-g"],
    }]))[0]
    assert injected_flags(cargo) == ["-g"]
    assert required_tools(cargo) == ["cargo"]


def test_render_command_leaves_unknown_braces():
    values = {"cc": "clang", "cflags": "-O0", "src": "/s"}
    assert render_command("{cc} {cflags} -c {src}/a.c ${HOME} {other}", values) == "clang -O0 -c /s/a.c ${HOME} {other}"


def test_build_and_harvest(tmp_path, stub_toolchain):
    config = load_config(compiler_path=stub_toolchain["cc"], jobs=1)
    manifest = run_corpus_build(load_package_list(str(PACKAGES)), 2, str(tmp_path / "corpus"), config=config)
    assert [r.artifact.path for r in manifest.records] == ["alpha/0.bc", "alpha/1.bc", "beta/0.bc", "gamma/0.bc"]
    assert [r.language_tag for r in manifest.records] == [LanguageTag.C, LanguageTag.C, LanguageTag.CXX,
                                                          LanguageTag.RUST]
    assert all(r.artifact.encoding is Encoding.BITCODE for r in manifest.records)
    notes = notes_by_package(manifest)
    assert {name: note.status for name, note in notes.items()} == {
        "alpha": BuildStatus.SUCCESS, "beta": BuildStatus.SUCCESS, "gamma": BuildStatus.SUCCESS}
    assert notes["alpha"].artifact_count == 2
    assert notes["alpha"].log_path == ".build/alpha/build.log"

    db = CorpusDatabase(str(tmp_path / "corpus"))
    assert db.load_manifest() == manifest
    stored = (tmp_path / "corpus" / "alpha" / "1.bc").read_bytes()
    assert stored[4:].decode() == read_ir("while_loop.ll")


def test_missing_compiler_skips_everything(tmp_path):
    manifest = run_corpus_build(load_package_list(str(PACKAGES)), 1, str(tmp_path / "corpus"),
                                config=load_config(jobs=1))
    notes = notes_by_package(manifest)
    assert manifest.records == []
    assert all(note.status is BuildStatus.SKIPPED for note in notes.values())
    assert "toolchain unavailable" in notes["alpha"].reason
    assert notes["beta"].reason == "dependency alpha did not build"


def test_failed_dependency_skips_dependents(tmp_path, stub_toolchain):
    packages = with_commands(alpha=["{cc} {cflags} -c {src}/missing.c -o missing.o"])
    config = load_config(compiler_path=stub_toolchain["cc"], jobs=1)
    manifest = run_corpus_build(packages, 2, str(tmp_path / "corpus"), config=config)
    notes = notes_by_package(manifest)
    assert notes["alpha"].status is BuildStatus.FAILED
    assert "exited with 1" in notes["alpha"].reason
    assert notes["beta"].status is BuildStatus.SKIPPED
    assert notes["gamma"].status is BuildStatus.SKIPPED
    log = (tmp_path / "corpus" / notes["alpha"].log_path).read_text()
    assert "missing.ll: no such file" in log


def test_partial_build_keeps_harvested_modules(tmp_path, stub_toolchain):
    packages = with_commands(alpha=["{cc} {cflags} -c {src}/alpha.c -o alpha.o", "false"])
    config = load_config(compiler_path=stub_toolchain["cc"], jobs=1)
    manifest = run_corpus_build(packages, 1, str(tmp_path / "corpus"), config=config)
    notes = notes_by_package(manifest)
    assert notes["alpha"].status is BuildStatus.PARTIAL
    assert notes["alpha"].artifact_count == 1
    assert [r.artifact.path for r in manifest.records] == ["alpha/0.bc"]


def test_missing_local_source_fails(tmp_path, stub_toolchain):
    packages = parse_package_list(json.dumps([{
        "name": "ghost", "ecosystem": "raw-shell", "source": {"kind": "local", "path": str(tmp_path / "nope")},
    }]))
    config = load_config(compiler_path=stub_toolchain["cc"], jobs=1)
    result = asyncio.run(build_package(packages[0], str(tmp_path / "work"), config))
    assert result.status is BuildStatus.FAILED
    assert result.reason.startswith("fetch failed")


def test_prebuilt_packages_are_unpacked(tmp_path):
    payload_dir = tmp_path / "payload"
    payload_dir.mkdir()
    (payload_dir / "lib.bc").write_bytes(b"BC\xc0\xde" + b"x")
    archive = tmp_path / "release" / "lib.tar.gz"
    archive.parent.mkdir()
    with tarfile.open(archive, "w:gz") as tar:
        tar.add(payload_dir / "lib.bc", arcname="lib.bc")
    packages = parse_package_list(json.dumps([{
        "name": "pre", "ecosystem": "prebuilt", "language_tag": "Swift",
        "source": {"kind": "local", "path": str(archive.parent)},
    }]))
    manifest = run_corpus_build(packages, 1, str(tmp_path / "corpus"), config=load_config(jobs=1))
    assert notes_by_package(manifest)["pre"].status is BuildStatus.SUCCESS
    assert [r.artifact.path for r in manifest.records] == ["pre/0.bc"]
    assert manifest.records[0].language_tag is LanguageTag.SWIFT


def test_parallelism_must_be_positive(tmp_path):
    with pytest.raises(IrForgeError):
        run_corpus_build([], 0, str(tmp_path / "corpus"), config=load_config(jobs=1))


def write_crate(root):
    """A crate with a library, a binary and a build script"""
    (root / "src").mkdir(parents=True)
    (root / "Cargo.toml").write_text('[package]\nname = "twin"\nversion = "0.1.0"\n')
    for stem, fixture in (("lib", "sum.ll"), ("main", "main_calls_sum.ll")):
        (root / "src" / f"{stem}.rs").write_text("// compiled by the stub from the sibling .ll\n")
        (root / "src" / f"{stem}.ll").write_text(read_ir(fixture))
    (root / "build.rs").write_text("fn main() {}\n")
    return root


def cargo_packages(path, **fields):
    return parse_package_list(json.dumps([{
        "name": "twin", "ecosystem": "cargo", "language_tag": "Rust",
        "source": {"kind": "local", "path": str(path)}, **fields,
    }]))


def test_cargo_target_commands():
    metadata = {"packages": [
        {"name": "a", "manifest_path": "/w/a/Cargo.toml", "targets": [
            {"kind": ["lib", "cdylib"], "name": "a"},
            {"kind": ["custom-build"], "name": "build-script-build"},
            {"kind": ["test"], "name": "it"},
        ]},
        {"name": "b", "manifest_path": "/w/b dir/Cargo.toml", "targets": [
            {"kind": ["bin"], "name": "b"},
            {"kind": ["example"], "name": "demo"},
            {"kind": ["bench"], "name": "speed"},
        ]},
    ]}
    templates = cargo_target_commands(metadata)
    assert [t.split(" -- ")[0] for t in templates] == [
        "{cargo} rustc --manifest-path /w/a/Cargo.toml --target-dir {build} --lib",
        "{cargo} rustc --manifest-path /w/a/Cargo.toml --target-dir {build} --test it",
        "{cargo} rustc --manifest-path '/w/b dir/Cargo.toml' --target-dir {build} --bin b",
        "{cargo} rustc --manifest-path '/w/b dir/Cargo.toml' --target-dir {build} --example demo",
        "{cargo} rustc --manifest-path '/w/b dir/Cargo.toml' --target-dir {build} --bench speed",
    ]
    assert all(t.endswith("-- --emit=llvm-bc -C opt-level=0 {cflags}") for t in templates)
    assert cargo_target_commands({"packages": []}) == []


def test_cargo_builds_every_target(tmp_path, stub_toolchain):
    crate = write_crate(tmp_path / "twin")
    config = load_config(cargo_path=stub_toolchain["cargo"], jobs=1)
    manifest = run_corpus_build(cargo_packages(crate), 1, str(tmp_path / "corpus"), config=config)
    note = notes_by_package(manifest)["twin"]
    assert note.status is BuildStatus.SUCCESS
    assert note.artifact_count == 2
    assert all(r.language_tag is LanguageTag.RUST for r in manifest.records)
    stored = sorted((tmp_path / "corpus" / r.artifact.path).read_bytes()[4:].decode() for r in manifest.records)
    assert stored == sorted([read_ir("sum.ll"), read_ir("main_calls_sum.ll")])
    log = (tmp_path / "corpus" / note.log_path).read_text()
    assert "--lib" in log
    assert "--bin twin" in log
    assert "build-script-build" not in log


def test_single_cargo_rustc_fails_on_multi_target_crate(tmp_path, stub_toolchain):
    crate = write_crate(tmp_path / "twin")
    packages = cargo_packages(crate, build_commands=[
        "{cargo} rustc --manifest-path {src}/Cargo.toml --target-dir {build} -- --emit=llvm-bc"])
    config = load_config(cargo_path=stub_toolchain["cargo"], jobs=1)
    manifest = run_corpus_build(packages, 1, str(tmp_path / "corpus"), config=config)
    note = notes_by_package(manifest)["twin"]
    assert note.status is BuildStatus.FAILED
    assert "exited with 101" in note.reason
    assert manifest.records == []


def test_cmake_packages_harvest_through_the_compilation_database(tmp_path, stub_toolchain):
    src = tmp_path / "cm"
    src.mkdir()
    for stem, fixture in (("listed", "sum.ll"), ("stray", "loops.ll")):
        (src / f"{stem}.c").write_text("/* compiled by the stub from the sibling .ll */\n")
        (src / f"{stem}.ll").write_text(read_ir(fixture))
    (src / "database.sh").write_text(
        "cat > compile_commands.json <<EOF\n"
        '[{"directory": "$PWD", "file": "listed.c", "arguments": ["cc", "-c", "listed.c", "-o", "listed.o"]}]\n'
        "EOF\n"
    )
    packages = parse_package_list(json.dumps([{
        "name": "cm", "ecosystem": "cmake", "language_tag": "C", "source": {"kind": "local", "path": str(src)},
        "build_commands": [
            "{cc} {cflags} -c {src}/listed.c -o listed.o",
            "{cc} {cflags} -c {src}/stray.c -o stray.o",
            "sh {src}/database.sh",
        ],
    }]))
    assert packages[0].strategy is ExtractionStrategy.COMPILE_COMMANDS
    config = load_config(compiler_path=stub_toolchain["cc"], jobs=1)
    manifest = run_corpus_build(packages, 1, str(tmp_path / "corpus"), config=config)
    assert [r.artifact.path for r in manifest.records] == ["cm/0.bc"]
    assert manifest.records[0].artifact.extraction_strategy is ExtractionStrategy.COMPILE_COMMANDS
    assert (tmp_path / "corpus" / "cm" / "0.bc").read_bytes()[4:].decode() == read_ir("sum.ll")
