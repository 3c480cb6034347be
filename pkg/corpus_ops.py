"""
Corpus harvesting operations module
"""

import io
import json
import logging
import os
import shlex
import tempfile
from functools import partial
from typing import List, Optional, Sequence, Tuple

from elftools.common.exceptions import ELFError
from elftools.elf.elffile import ELFFile

from db.database import CorpusDatabase
from errors import (
    CorruptSectionError, ExtractionError, IrForgeError, SectionNotFoundError, ToolError,
)
from models import (
    BitcodeArtifact, CorpusManifest, DedupStatus, Encoding, ExtractionStrategy, LanguageSize,
    LanguageTag, ModuleRecord, SizeReport,
)
from toolchain_ops import run_tool_sync
from worker_ops import parallel_map

logger = logging.getLogger(__name__)

BITCODE_MAGIC = b"BC\xc0\xde"
ELF_MAGIC = b"\x7fELF"
DEFAULT_SECTION_NAMES: Tuple[str, ...] = (".llvmbc", "__LLVM,__bitcode", "__bitcode")
COMPILE_COMMANDS_FILE = "compile_commands.json"


def extract_embedded_bitcode(object_bytes: bytes,
                             section_names: Sequence[str] = DEFAULT_SECTION_NAMES) -> bytes:
    """Return the bitcode held in the first matching section of a relocatable ELF object"""
    try:
        elf = ELFFile(io.BytesIO(object_bytes))
        if elf["e_type"] != "ET_REL":
            raise ExtractionError(f"not a relocatable object (e_type {elf['e_type']})")
        for name in section_names:
            section = elf.get_section_by_name(name)
            if section is None:
                continue
            data = section.data()
            if not data.startswith(BITCODE_MAGIC):
                raise CorruptSectionError(f"section {name} does not start with the bitcode magic")
            return data
    except ExtractionError:
        raise
    except ELFError as e:
        raise ExtractionError(f"unreadable ELF object: {e}") from e
    except Exception as e:
        # truncated headers surface as construct/struct errors
        raise ExtractionError(f"unreadable ELF object: {e}") from e
    raise SectionNotFoundError(f"no bitcode section among {', '.join(section_names)}")


def _walk_files(root: str) -> List[str]:
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for filename in sorted(filenames):
            files.append(os.path.join(dirpath, filename))
    return sorted(files, key=lambda p: os.path.relpath(p, root))


def _read_payload(path: str, strategy: ExtractionStrategy, section_names: Sequence[str]) -> Optional[bytes]:
    with open(path, "rb") as f:
        head = f.read(4)
        if strategy is ExtractionStrategy.RAW_FILE:
            return head + f.read() if head == BITCODE_MAGIC else None
        if head != ELF_MAGIC:
            return None
        data = head + f.read()
    try:
        return extract_embedded_bitcode(data, section_names)
    except SectionNotFoundError:
        return None
    except CorruptSectionError as e:
        logger.warning(f"Skipping {path}: {e}")
        return None
    except ExtractionError as e:
        logger.debug(f"Skipping {path}: {e}")
        return None


def database_objects(root: str) -> List[str]:
    """Object files named by the compilation database `root/compile_commands.json`"""
    path = os.path.join(root, COMPILE_COMMANDS_FILE)
    if not os.path.isfile(path):
        logger.warning(f"No {COMPILE_COMMANDS_FILE} under {root}")
        return []
    try:
        with open(path, "r", encoding="utf-8") as f:
            entries = json.load(f)
    except (OSError, ValueError) as e:
        logger.warning(f"Ignoring unreadable {path}: {e}")
        return []
    if not isinstance(entries, list):
        logger.warning(f"Ignoring {path}: expected a JSON array")
        return []

    objects = set()
    for entry in entries:
        if not isinstance(entry, dict):
            continue
        output = entry.get("output")
        if output is None:
            argv = entry.get("arguments") or shlex.split(entry.get("command", ""))
            output = next((argv[k + 1] for k in range(len(argv) - 1) if argv[k] == "-o"), None)
        if output:
            objects.add(os.path.normpath(os.path.join(entry.get("directory", root), output)))
    return sorted(objects, key=lambda p: os.path.relpath(p, root))


def collect_payloads(root: str, strategy: ExtractionStrategy,
                     section_names: Sequence[str] = DEFAULT_SECTION_NAMES) -> List[Tuple[str, bytes]]:
    """(relative path, bitcode) for every file under `root` carrying bitcode, sorted by path"""
    found = []
    if strategy is ExtractionStrategy.COMPILE_COMMANDS:
        paths, strategy = database_objects(root), ExtractionStrategy.EMBEDDED_SECTION
    else:
        paths = _walk_files(root)
    for path in paths:
        try:
            payload = _read_payload(path, strategy, section_names)
        except OSError as e:
            logger.warning(f"Skipping unreadable file {path}: {e}")
            continue
        if payload is not None:
            found.append((os.path.relpath(path, root), payload))
    return found


def scan_build_tree(root: str, strategy: ExtractionStrategy, package: Optional[str] = None,
                    section_names: Sequence[str] = DEFAULT_SECTION_NAMES) -> List[BitcodeArtifact]:
    """List build-tree files holding bitcode with their on-disk sizes; paths are relative to `root`"""
    if not os.path.isdir(root):
        raise IrForgeError(f"build tree {root} does not exist")
    origin = package or os.path.basename(os.path.normpath(root))
    artifacts = [
        BitcodeArtifact(
            origin_package=origin,
            path=relative,
            encoding=Encoding.BITCODE,
            byte_size=os.path.getsize(os.path.join(root, relative)),
            extraction_strategy=strategy,
        )
        for relative, _ in collect_payloads(root, strategy, section_names)
    ]
    logger.info(f"Found {len(artifacts)} bitcode artifact(s) under {root} ({strategy.value})")
    return artifacts


def harvest_build_tree(db: CorpusDatabase, root: str, package: str, language: LanguageTag,
                       strategy: ExtractionStrategy,
                       section_names: Sequence[str] = DEFAULT_SECTION_NAMES) -> List[ModuleRecord]:
    """Copy every bitcode payload of a build tree into the corpus as `<package>/<n>.bc`"""
    records = []
    for index, (relative, payload) in enumerate(collect_payloads(root, strategy, section_names)):
        stored = db.store_artifact(package, index, payload)
        logger.debug(f"{package}: {relative} -> {stored}")
        records.append(ModuleRecord(
            artifact=BitcodeArtifact(
                origin_package=package,
                path=stored,
                encoding=Encoding.BITCODE,
                byte_size=len(payload),
                extraction_strategy=strategy,
            ),
            language_tag=language,
        ))
    return records


def disassemble(artifact: BitcodeArtifact, corpus_root: str, disassembler: Optional[str] = None) -> str:
    """Textual IR of an artifact; textual artifacts pass through unchanged"""
    path = os.path.join(corpus_root, artifact.path)
    if artifact.encoding is Encoding.TEXTUAL:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    if disassembler is None:
        raise ToolError("llvm-dis", "no disassembler configured")
    with tempfile.TemporaryDirectory(prefix="irforge-dis-") as tmp:
        out_path = os.path.join(tmp, "module.ll")
        run = run_tool_sync([disassembler, path, "-o", out_path])
        if run.returncode != 0 or not os.path.isfile(out_path):
            raise ToolError(os.path.basename(disassembler), run.stderr.decode("utf-8", errors="replace"),
                            run.returncode)
        with open(out_path, "r", encoding="utf-8", errors="replace") as f:
            return f.read()


def _disassemble_record(record: ModuleRecord, out_dir: str, disassembler: str) -> ModuleRecord:
    db = CorpusDatabase(out_dir)
    try:
        text = disassemble(record.artifact, db.out_dir, disassembler)
    except (IrForgeError, OSError) as e:
        logger.warning(f"Disassembly of {record.artifact.path} failed: {e}")
        return record
    relative = db.text_path_for(record)
    if record.artifact.encoding is Encoding.TEXTUAL:
        size = len(text.encode("utf-8"))
    else:
        size = db.write_text(relative, text)
    return record.model_copy(update={"text_path": relative, "text_size": size})


def disassemble_corpus(manifest: CorpusManifest, db: CorpusDatabase, disassembler: Optional[str],
                       jobs: int = 1) -> CorpusManifest:
    """Disassemble every record, writing `<n>.ll` next to `<n>.bc`"""
    needs_tool = any(r.artifact.encoding is Encoding.BITCODE for r in manifest.records)
    if needs_tool and disassembler is None:
        raise ToolError("llvm-dis", "no disassembler configured")
    work = partial(_disassemble_record, out_dir=db.out_dir, disassembler=disassembler)
    records = parallel_map(work, manifest.records, jobs=jobs, desc="Disassembling", threads=True)
    done = sum(1 for r in records if r.text_size is not None)
    logger.info(f"Disassembled {done}/{len(records)} module(s)")
    return manifest.model_copy(update={"records": records})


def corpus_size_report(manifest: CorpusManifest) -> SizeReport:
    """Per-language and total bitcode/text byte sums, before and after dedup"""
    report = SizeReport()
    for record in manifest.records:
        bitcode = record.artifact.byte_size if record.artifact.encoding is Encoding.BITCODE else 0
        for bucket in (report.per_language.setdefault(record.language_tag.value, LanguageSize()), report.total):
            bucket.modules += 1
            bucket.bitcode_bytes += bitcode
            bucket.text_bytes += record.text_size or 0
            if record.dedup_status is not DedupStatus.REMOVED_DUPLICATE:
                bucket.kept_modules += 1
                bucket.kept_bitcode_bytes += bitcode
                bucket.kept_text_bytes += record.text_size or 0

    # Ratio only over records carrying both sizes.
    pairs = {}
    for record in manifest.records:
        if record.text_size is None or record.artifact.encoding is not Encoding.BITCODE or record.artifact.byte_size == 0:
            continue
        for key in (record.language_tag.value, None):
            bc, text = pairs.get(key, (0, 0))
            pairs[key] = (bc + record.artifact.byte_size, text + record.text_size)
    for key, (bc, text) in pairs.items():
        bucket = report.total if key is None else report.per_language[key]
        bucket.text_to_bitcode_ratio = text / bc
    return report


def ingest_textual_tree(db: CorpusDatabase, root: str, package: str, language: LanguageTag) -> List[ModuleRecord]:
    """Copy every `.ll` file under `root` into the corpus as `<package>/<n>.ll`"""
    if not os.path.isdir(root):
        raise IrForgeError(f"source tree {root} does not exist")
    records = []
    paths = [p for p in _walk_files(root) if p.endswith(".ll")]
    for index, path in enumerate(paths):
        with open(path, "rb") as f:
            data = f.read()
        stored = db.store_artifact(package, index, data, suffix=".ll")
        records.append(ModuleRecord(
            artifact=BitcodeArtifact(
                origin_package=package,
                path=stored,
                encoding=Encoding.TEXTUAL,
                byte_size=len(data),
                extraction_strategy=ExtractionStrategy.RAW_FILE,
            ),
            language_tag=language,
            text_path=stored,
            text_size=len(data),
        ))
    logger.info(f"Ingested {len(records)} textual module(s) from {root} as {package}")
    return records


def merge_package_records(manifest: CorpusManifest, package: str, records: List[ModuleRecord]) -> CorpusManifest:
    """Replace every record of `package` with `records`"""
    kept = [r for r in manifest.records if r.artifact.origin_package != package]
    return manifest.model_copy(update={"records": kept + records})
