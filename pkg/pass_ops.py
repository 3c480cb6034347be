"""
Optimizer pass tracing operations module
"""

import logging
import os
import re
import tempfile
from collections import defaultdict
from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

from db.database import CorpusDatabase
from errors import InvalidInputError, IrForgeError, ToolError, ToolUnavailableError
from ir.extract import extract_function
from ir.parser import parse_module
from models import CorpusManifest, MutationTable, PassLanguageStats, PassRow
from toolchain_ops import resolve_executable, run_tool_sync
from worker_ops import parallel_map

logger = logging.getLogger(__name__)

_UNCHANGED_RE = re.compile(r"^\*\*\* IR Dump After (?P<pass>.+?) on (?P<target>.+) omitted because no change \*\*\*$")
_IGNORED_RE = re.compile(r"^\*\*\* IR Dump After (?P<pass>.+?) on (?P<target>.+) filtered out \*\*\*$")
_CHANGED_RE = re.compile(r"^\*\*\* IR Dump After (?P<pass>.+?) on (?P<target>.+) \*\*\*$")


class PassStatus(str, Enum):
    CHANGED = "changed"
    UNCHANGED = "unchanged"
    IGNORED = "ignored"


class PassEvent(NamedTuple):
    pass_name: str
    target: str
    status: PassStatus


class OptTrace(NamedTuple):
    log: str
    returncode: int


class TraceTarget(NamedTuple):
    language: str
    target_id: str
    record_path: str
    function: Optional[str]


_BANNERS = ((_UNCHANGED_RE, PassStatus.UNCHANGED), (_IGNORED_RE, PassStatus.IGNORED),
            (_CHANGED_RE, PassStatus.CHANGED))


def parse_print_changed(log: str) -> List[PassEvent]:
    """Events for every change-report banner in log order; other lines are skipped"""
    events = []
    for line in log.splitlines():
        line = line.rstrip()
        if not line.startswith("*** IR Dump After "):
            continue
        for pattern, status in _BANNERS:
            match = pattern.match(line)
            if match:
                events.append(PassEvent(match.group("pass"), match.group("target"), status))
                break
    return events


def run_opt_trace(module_path: str, pipeline_spec: str, optimizer: Optional[str]) -> OptTrace:
    if not pipeline_spec or not pipeline_spec.strip():
        raise InvalidInputError("pipeline spec must not be empty")
    resolved = resolve_executable(optimizer)
    if resolved is None:
        raise ToolUnavailableError(f"optimizer not available: {optimizer or 'not configured'}")

    run = run_tool_sync([resolved, f"-passes={pipeline_spec}", "-print-changed", "-disable-output", module_path])
    log = run.stderr.decode("utf-8", errors="replace")
    if run.returncode != 0:
        if not parse_print_changed(log):
            raise ToolError(os.path.basename(resolved), log or run.stdout.decode("utf-8", errors="replace"),
                            run.returncode)
        logger.warning(f"{os.path.basename(resolved)} exited with {run.returncode} on {module_path}")
    return OptTrace(log, run.returncode)


def _pass_keys(events: Sequence[PassEvent], per_occurrence: bool) -> Dict[str, bool]:
    """Pass key -> changed flag for one optimizer invocation; ignored events do not count"""
    seen: Dict[str, bool] = {}
    occurrences: Dict[tuple, int] = defaultdict(int)
    for event in events:
        key = event.pass_name
        if per_occurrence:
            occurrences[(event.pass_name, event.target)] += 1
            key = f"{event.pass_name}#{occurrences[(event.pass_name, event.target)]}"
        if event.status is PassStatus.IGNORED:
            continue
        seen[key] = seen.get(key, False) or event.status is PassStatus.CHANGED
    return seen


def mutation_frequency(runs: Dict[str, Iterable[Sequence[PassEvent]]], per_occurrence: bool = False,
                       failed_targets: int = 0) -> MutationTable:
    """Per-pass, per-language fraction of targets a pass changed; one event list per target"""
    languages = sorted(runs)
    tallies: Dict[str, Dict[str, List[int]]] = defaultdict(lambda: {lang: [0, 0] for lang in languages})
    for language in languages:
        for events in runs[language]:
            for key, changed in _pass_keys(events, per_occurrence).items():
                tally = tallies[key][language]
                tally[0] += 1
                tally[1] += int(changed)

    rows = []
    for key, per_language in tallies.items():
        stats = {
            lang: PassLanguageStats(targets_seen=seen, targets_changed=changed,
                                    frequency=changed / seen if seen else None)
            for lang, (seen, changed) in per_language.items()
        }
        rows.append(PassRow(pass_name=key, per_language=stats))
    rows.sort(key=lambda row: (-row.max_frequency, row.pass_name))
    return MutationTable(languages=languages, rows=rows, failed_targets=failed_targets)


def log_file_name(target_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", target_id) + ".log"


def collect_targets(manifest: CorpusManifest, db: CorpusDatabase, granularity: str,
                    exclude_languages: Sequence[str] = ()) -> List[TraceTarget]:
    if granularity not in ("function", "module"):
        raise InvalidInputError(f"unknown granularity '{granularity}'")
    targets = []
    for record, text in db.iter_texts(manifest):
        language = record.language_tag.value
        if language in exclude_languages:
            continue
        if granularity == "module":
            targets.append(TraceTarget(language, record.artifact.path, record.artifact.path, None))
            continue
        try:
            module = parse_module(text)
        except IrForgeError as e:
            logger.warning(f"Skipping {record.artifact.path}: {e}")
            continue
        for fn in module.defined_functions():
            targets.append(TraceTarget(language, f"{record.artifact.path}::{fn.name}", record.artifact.path, fn.name))
    return targets


def trace_corpus(manifest: CorpusManifest, db: CorpusDatabase, pipeline_spec: str, granularity: str = "function",
                 optimizer: Optional[str] = None, exclude_languages: Sequence[str] = (),
                 record_dir: Optional[str] = None, replay_dir: Optional[str] = None,
                 per_occurrence: bool = False, jobs: int = 1) -> MutationTable:
    """Run (or replay) the optimizer over every target and tabulate pass mutation frequencies"""
    if not pipeline_spec or not pipeline_spec.strip():
        raise InvalidInputError("pipeline spec must not be empty")
    targets = collect_targets(manifest, db, granularity, exclude_languages)
    records = {r.artifact.path: r for r in manifest.records}
    if record_dir:
        os.makedirs(record_dir, exist_ok=True)

    def trace(target: TraceTarget, workdir: str) -> Optional[List[PassEvent]]:
        name = log_file_name(target.target_id)
        if replay_dir:
            try:
                with open(os.path.join(replay_dir, name), "r", encoding="utf-8") as f:
                    return parse_print_changed(f.read())
            except OSError as e:
                logger.warning(f"No recorded log for {target.target_id}: {e}")
                return None
        try:
            text = db.read_text(records[target.record_path])
            if target.function is not None:
                text = extract_function(text, target.function)
            path = os.path.join(workdir, name[:-len(".log")] + ".ll")
            with open(path, "w", encoding="utf-8") as f:
                f.write(text)
            result = run_opt_trace(path, pipeline_spec, optimizer)
        except ToolUnavailableError:
            raise
        except (IrForgeError, OSError) as e:
            logger.warning(f"Tracing {target.target_id} failed: {e}")
            return None
        if result.returncode != 0:
            return None
        if record_dir:
            with open(os.path.join(record_dir, name), "w", encoding="utf-8") as f:
                f.write(result.log)
        return parse_print_changed(result.log)

    with tempfile.TemporaryDirectory(prefix="irforge-opt-") as workdir:
        traced = parallel_map(lambda t: trace(t, workdir), targets, jobs=jobs, desc="Tracing passes",
                              threads=True)

    runs: Dict[str, List[List[PassEvent]]] = {}
    failed = 0
    for target, events in zip(targets, traced):
        bucket = runs.setdefault(target.language, [])
        if events is None:
            failed += 1
            continue
        bucket.append(events)
    if failed:
        logger.warning(f"{failed} target(s) excluded after optimizer failures")
    return mutation_frequency(runs, per_occurrence=per_occurrence, failed_targets=failed)
