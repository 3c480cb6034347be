"""
Structural hashing and deduplication operations module
"""

import logging
from collections import Counter
from functools import partial
from typing import Dict, List, NamedTuple, Optional, Tuple

from db.database import CorpusDatabase
from errors import IrForgeError
from ir.model import OPCODE_IDS, IrFunction, IrGlobal, IrModule, Opcode, OperandKind
from ir.parser import parse_module
from models import (
    CorpusManifest, DedupReport, DedupStatus, FunctionDupReport, HashMode, LanguageDedup, ModuleRecord,
)
from worker_ops import parallel_map

logger = logging.getLogger(__name__)

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1

# A module with no globals and no defined functions folds nothing.
EMPTY_MODULE_HASH = FNV_OFFSET_BASIS

_GLOBAL_TAG = 0
_FUNCTION_TAG = 1


class StructuralHash(NamedTuple):
    value: int
    mode: HashMode


class Fnv1a64:
    """64-bit FNV-1a over a tagged token stream"""

    def __init__(self):
        self.value = FNV_OFFSET_BASIS

    def update(self, data: bytes) -> None:
        value = self.value
        for byte in data:
            value ^= byte
            value = (value * FNV_PRIME) & _MASK
        self.value = value

    def add_int(self, number: int) -> None:
        self.update(b"i" + str(number).encode("ascii") + b"\0")

    def add_str(self, text: str) -> None:
        self.update(b"s" + text.encode("utf-8") + b"\0")


def hash_function(fn: IrFunction, mode: HashMode = HashMode.COARSE) -> StructuralHash:
    fold = Fnv1a64()
    fold.add_int(len(fn.blocks))
    detailed = mode is HashMode.DETAILED
    for inst in fn.counted_instructions():
        fold.add_int(OPCODE_IDS[inst.opcode])
        if inst.opcode is Opcode.OTHER:
            fold.add_str(inst.raw_opcode)
        if not detailed:
            continue
        fold.add_str(inst.type_token)
        if inst.predicate is not None:
            fold.add_str(inst.predicate)
        for op in inst.operands:
            if op.kind is OperandKind.METADATA:
                continue
            fold.add_str(op.kind.value)
            if op.kind is OperandKind.CONSTANT_INT:
                fold.add_int(op.int_value)
            elif op.kind is OperandKind.CONSTANT_FP:
                fold.add_str(op.text)
        if inst.callee is not None:
            fold.add_str(inst.callee)
    return StructuralHash(fold.value, mode)


def hash_global(g: IrGlobal, mode: HashMode = HashMode.COARSE) -> StructuralHash:
    fold = Fnv1a64()
    fold.add_str(g.type_token)
    for token in g.initializer_tokens:
        fold.add_str(token)
    fold.add_int(1 if g.is_constant else 0)
    return StructuralHash(fold.value, mode)


def hash_module(module: IrModule, mode: HashMode = HashMode.COARSE) -> StructuralHash:
    """Order-independent combination of all global and defined-function hashes"""
    items: List[Tuple[int, int]] = [(_GLOBAL_TAG, hash_global(g, mode).value) for g in module.globals]
    items += [(_FUNCTION_TAG, hash_function(fn, mode).value) for fn in module.defined_functions()]
    fold = Fnv1a64()
    for tag, value in sorted(items):
        fold.add_int(tag)
        fold.add_int(value)
    return StructuralHash(fold.value, mode)


class _HashOutcome(NamedTuple):
    value: Optional[int]
    error: Optional[str]


def _hash_record(record: ModuleRecord, out_dir: str, mode: HashMode) -> _HashOutcome:
    try:
        text = CorpusDatabase(out_dir).read_text(record)
        return _HashOutcome(hash_module(parse_module(text), mode).value, None)
    except (IrForgeError, OSError) as e:
        return _HashOutcome(None, str(e))


def dedup_corpus(manifest: CorpusManifest, db: CorpusDatabase, mode: HashMode = HashMode.COARSE,
                 jobs: int = 1) -> Tuple[CorpusManifest, DedupReport]:
    """Keep the first record of every module-hash class in manifest order"""
    outcomes = parallel_map(partial(_hash_record, out_dir=db.out_dir, mode=mode), manifest.records,
                            jobs=jobs, desc="Hashing modules")

    report = DedupReport(mode=mode)
    first_seen: Dict[int, str] = {}
    records: List[ModuleRecord] = []
    for record, outcome in zip(manifest.records, outcomes):
        language = report.per_language.setdefault(record.language_tag.value, LanguageDedup())
        language.total += 1
        report.total_modules += 1
        report.bytes_before += record.artifact.byte_size
        report.text_bytes_before += record.text_size or 0

        if outcome.value is None:
            logger.warning(f"Keeping unparseable module {record.artifact.path}: {outcome.error}")
            report.parse_failures += 1
            status = DedupStatus.KEPT
        elif outcome.value in first_seen:
            logger.debug(f"{record.artifact.path} duplicates {first_seen[outcome.value]}")
            status = DedupStatus.REMOVED_DUPLICATE
        else:
            first_seen[outcome.value] = record.artifact.path
            status = DedupStatus.KEPT

        if status is DedupStatus.REMOVED_DUPLICATE:
            report.removed += 1
            language.removed += 1
        else:
            report.kept += 1
            report.bytes_after += record.artifact.byte_size
            report.text_bytes_after += record.text_size or 0
        records.append(record.model_copy(update={
            "module_hash": outcome.value,
            "dedup_status": status,
            "parse_error": outcome.error,
        }))

    for language in report.per_language.values():
        language.duplication_rate = language.removed / language.total if language.total else 0.0
    logger.info(f"Dedup ({mode.value}): kept {report.kept}, removed {report.removed} of {report.total_modules}")
    return manifest.model_copy(update={"records": records}), report


def _function_hashes(record: ModuleRecord, out_dir: str, mode: HashMode) -> Optional[List[int]]:
    try:
        module = parse_module(CorpusDatabase(out_dir).read_text(record))
    except (IrForgeError, OSError) as e:
        logger.warning(f"Skipping {record.artifact.path} in function index: {e}")
        return None
    return [hash_function(fn, mode).value for fn in module.defined_functions()]


def function_hash_index(manifest: CorpusManifest, db: CorpusDatabase, mode: HashMode = HashMode.DETAILED,
                        jobs: int = 1) -> Dict[str, Counter]:
    """Per-language multiset of defined-function hashes over the deduplicated corpus"""
    live = [r for r in manifest.records if r.dedup_status is not DedupStatus.REMOVED_DUPLICATE]
    per_record = parallel_map(partial(_function_hashes, out_dir=db.out_dir, mode=mode), live,
                              jobs=jobs, desc="Hashing functions")
    index: Dict[str, Counter] = {}
    for record, hashes in zip(live, per_record):
        bucket = index.setdefault(record.language_tag.value, Counter())
        if hashes:
            bucket.update(hashes)
    return index


def function_dup_report(index: Dict[str, Counter], mode: HashMode = HashMode.DETAILED) -> FunctionDupReport:
    report = FunctionDupReport(mode=mode)
    for language in sorted(index):
        total = sum(index[language].values())
        removed = total - len(index[language])
        report.per_language[language] = LanguageDedup(
            total=total, removed=removed, duplication_rate=removed / total if total else 0.0)
    return report

