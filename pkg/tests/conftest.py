import os
import stat
import sys
from collections import Counter
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(Path(__file__).resolve().parent))

from db.database import CorpusDatabase  # noqa: E402
from models import (  # noqa: E402
    BitcodeArtifact, CorpusManifest, Encoding, ExtractionStrategy, LanguageTag, ModuleRecord,
)

FIXTURES = Path(__file__).resolve().parent / "fixtures"
IR_DIR = FIXTURES / "ir"
STUB_TOOLS = Path(__file__).resolve().parent / "stub_tools.py"

# Captured before the autouse fixture clears the environment.
LIVE_OPT = os.getenv("IRFORGE_OPT")


def read_ir(name: str) -> str:
    return (IR_DIR / name).read_text(encoding="utf-8")


def all_ir_fixtures():
    return sorted(p.name for p in IR_DIR.glob("*.ll"))


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    for key in ("IRFORGE_CC", "IRFORGE_CXX", "IRFORGE_DIS", "IRFORGE_OPT", "IRFORGE_CARGO",
                "IRFORGE_SWIFT", "IRFORGE_JOBS", "IRFORGE_OUT", "IRFORGE_BUILD_TIMEOUT"):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


@pytest.fixture
def stub_toolchain(tmp_path):
    """Executable stand-ins named like the real tools"""
    bin_dir = tmp_path / "bin"
    bin_dir.mkdir()
    tools = {}
    for tool, filename in (("cc", "clang"), ("dis", "llvm-dis"), ("opt", "opt"), ("cargo", "cargo")):
        path = bin_dir / filename
        path.write_text(f'#!/bin/sh\nexec "{sys.executable}" "{STUB_TOOLS}" {tool} "$@"\n')
        path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
        tools[tool] = str(path)
    return tools


@pytest.fixture
def make_corpus(tmp_path):
    """Build a textual corpus from (package, language, text) triples"""

    def factory(modules, out_dir=None):
        db = CorpusDatabase(str(out_dir or tmp_path / "corpus"))
        db.ensure_writable()
        counters = Counter()
        records = []
        for package, language, text in modules:
            data = text.encode("utf-8")
            relative = db.store_artifact(package, counters[package], data, suffix=".ll")
            counters[package] += 1
            records.append(ModuleRecord(
                artifact=BitcodeArtifact(
                    origin_package=package,
                    path=relative,
                    encoding=Encoding.TEXTUAL,
                    byte_size=len(data),
                    extraction_strategy=ExtractionStrategy.RAW_FILE,
                ),
                language_tag=LanguageTag(language),
                text_path=relative,
                text_size=len(data),
            ))
        db.save_manifest(CorpusManifest(records=records, created_at="2023-11-14T22:13:20+00:00"))
        return db, db.load_manifest()

    return factory
