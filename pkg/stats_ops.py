"""
Opcode distribution and duplication statistics operations module
"""

import logging
from collections import Counter
from functools import partial
from typing import Dict, Iterable, List, Optional

from db.database import CorpusDatabase
from errors import InvalidInputError, IrForgeError
from ir.model import IrModule
from ir.parser import parse_module
from models import CorpusManifest, DedupStatus, DuplicationMatrix, ModuleRecord, OpcodeCounts, OpcodeDistribution, OpcodeTable
from worker_ops import parallel_map

logger = logging.getLogger(__name__)


def count_opcodes(module: IrModule, language_tag: str = "other") -> OpcodeCounts:
    """Instruction counts by opcode; debug intrinsics excluded, `other` opcodes by raw token"""
    counts = Counter(inst.name for fn in module.defined_functions() for inst in fn.counted_instructions())
    return OpcodeCounts(language_tag=language_tag, counts=dict(sorted(counts.items())),
                        total=sum(counts.values()))


def top_k_table(counts: Dict[str, int], k: int) -> OpcodeTable:
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    top = [[name, count] for name, count in ranked[:k]]
    total = sum(counts.values())
    return OpcodeTable(top=top, other=total - sum(count for _, count in top), total=total)


def distribution_from_counts(module_counts: Iterable[OpcodeCounts], k: int) -> OpcodeDistribution:
    if k < 1:
        raise InvalidInputError("k must be positive")
    per_language: Dict[str, Counter] = {}
    aggregate: Counter = Counter()
    for counts in module_counts:
        per_language.setdefault(counts.language_tag, Counter()).update(counts.counts)
        aggregate.update(counts.counts)
    return OpcodeDistribution(
        k=k,
        per_language={language: top_k_table(per_language[language], k) for language in sorted(per_language)},
        aggregate=top_k_table(aggregate, k),
    )


def _count_record(record: ModuleRecord, out_dir: str) -> Optional[OpcodeCounts]:
    try:
        module = parse_module(CorpusDatabase(out_dir).read_text(record))
    except (IrForgeError, OSError) as e:
        logger.warning(f"Skipping {record.artifact.path}: {e}")
        return None
    return count_opcodes(module, record.language_tag.value)


def opcode_distribution(manifest: CorpusManifest, db: CorpusDatabase, k: int = 10,
                        jobs: int = 1) -> OpcodeDistribution:
    """Per-language top-k opcode tables over the deduplicated corpus"""
    live = [r for r in manifest.records if r.dedup_status is not DedupStatus.REMOVED_DUPLICATE]
    counted = parallel_map(partial(_count_record, out_dir=db.out_dir), live, jobs=jobs, desc="Counting opcodes")
    return distribution_from_counts((c for c in counted if c is not None), k)


def duplication_heatmap(index: Dict[str, Counter]) -> DuplicationMatrix:
    """Row-normalized cross-language function overlap; the diagonal holds within-language duplication"""
    languages = sorted(index)
    distinct = {language: set(index[language]) for language in languages}
    cells: List[List[Optional[float]]] = []
    for a in languages:
        row: List[Optional[float]] = []
        for b in languages:
            if not distinct[a] or not distinct[b]:
                row.append(None)
            elif a == b:
                row.append(1.0 - len(distinct[a]) / sum(index[a].values()))
            else:
                row.append(len(distinct[a] & distinct[b]) / len(distinct[a]))
        cells.append(row)
    return DuplicationMatrix(languages=languages, cells=cells)
