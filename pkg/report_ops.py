"""
Report rendering operations module
"""

import logging
import os
from typing import List, Optional, Sequence

from pydantic import BaseModel, ValidationError

from corpus_ops import corpus_size_report
from db.database import CorpusDatabase
from errors import CorpusError
from feature_ops import property_histograms, sample_functions
from generate_chart import BarChart, HeatmapChart, HistogramChart, opcode_chart
from hash_ops import function_hash_index
from models import (
    CorpusManifest, DedupReport, DuplicationMatrix, Histogram, MutationTable, OpcodeDistribution, SizeReport,
    TokenCountReport,
)
from stats_ops import duplication_heatmap, opcode_distribution

logger = logging.getLogger(__name__)

DEFAULT_HISTOGRAM_PROPERTIES = ("total_instructions", "basic_block_count", "max_loop_depth")
MAX_PASS_ROWS = 40


def _write(db: CorpusDatabase, written: List[str], name: str, payload: BaseModel, directory: Optional[str]) -> None:
    written.append(db.write_report(f"{name}.json", payload, directory))


def _chart(db: CorpusDatabase, written: List[str], name: str, chart, directory: Optional[str]) -> None:
    written.append(db.write_file(f"{name}.svg", chart.compile(), directory))


def render_report(db: CorpusDatabase, opcodes: Optional[OpcodeDistribution] = None,
                  heatmap: Optional[DuplicationMatrix] = None, mutation: Optional[MutationTable] = None,
                  histograms: Sequence[Histogram] = (), size: Optional[SizeReport] = None,
                  dedup: Optional[DedupReport] = None, tokens: Optional[TokenCountReport] = None,
                  out_dir: Optional[str] = None) -> List[str]:
    """Write every given table as JSON plus an SVG where it has a chart; returns the written paths"""
    written: List[str] = []

    if opcodes is not None:
        _write(db, written, "opcodes", opcodes, out_dir)
        if opcodes.aggregate.top:
            _chart(db, written, "opcodes", opcode_chart(opcodes), out_dir)

    if heatmap is not None:
        _write(db, written, "dup_heatmap", heatmap, out_dir)
        if heatmap.languages and any(v is not None for row in heatmap.cells for v in row):
            _chart(db, written, "dup_heatmap",
                   HeatmapChart("Cross-language function duplication", heatmap.languages, heatmap.languages,
                                heatmap.cells), out_dir)
        else:
            logger.info("Duplication matrix is empty; skipping its chart")

    if mutation is not None:
        _write(db, written, "mutation", mutation, out_dir)
        rows = mutation.rows[:MAX_PASS_ROWS]
        if rows and mutation.languages:
            cells = [[row.per_language[lang].frequency if lang in row.per_language else None
                      for lang in mutation.languages] for row in rows]
            _chart(db, written, "mutation",
                   HeatmapChart("Pass mutation frequency", [row.pass_name for row in rows], mutation.languages,
                                cells, cell_size=36), out_dir)

    for hist in histograms:
        name = f"hist_{hist.property}"
        _write(db, written, name, hist, out_dir)
        if hist.counts:
            _chart(db, written, name, HistogramChart(hist.property, hist.edges, hist.counts), out_dir)

    if size is not None:
        _write(db, written, "size", size, out_dir)
        languages = sorted(size.per_language)
        if languages:
            chart = BarChart("Corpus size (bytes)", languages, {
                "bitcode": [size.per_language[lang].bitcode_bytes for lang in languages],
                "text": [size.per_language[lang].text_bytes for lang in languages],
            }, value_format="{:,}", log_scale=True)
            _chart(db, written, "size", chart, out_dir)

    if dedup is not None:
        _write(db, written, "dedup", dedup, out_dir)
        languages = sorted(dedup.per_language)
        if languages:
            chart = BarChart("Module duplication rate", languages,
                             {dedup.mode.value: [dedup.per_language[lang].duplication_rate for lang in languages]})
            _chart(db, written, "dedup", chart, out_dir)

    if tokens is not None:
        _write(db, written, "tokens", tokens, out_dir)
        if tokens.entries:
            chart = BarChart("Token count by vocabulary size", [str(e.vocab_size) for e in tokens.entries],
                             {"tokens": [e.token_count for e in tokens.entries]}, value_format="{:,}")
            _chart(db, written, "tokens", chart, out_dir)

    logger.info(f"Wrote {len(written)} report file(s)")
    return written


def _load_existing(db: CorpusDatabase, name: str, model):
    path = os.path.join(db.reports_dir, name)
    if not os.path.isfile(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as f:
            return model.model_validate_json(f.read())
    except (OSError, ValidationError) as e:
        logger.warning(f"Ignoring unreadable {path}: {e}")
        return None


def build_report(db: CorpusDatabase, manifest: Optional[CorpusManifest] = None, k: int = 10,
                 sample_size: int = 1000, seed: int = 0, properties: Sequence[str] = DEFAULT_HISTOGRAM_PROPERTIES,
                 jobs: int = 1) -> List[str]:
    """Recompute the offline analyses over the corpus and render them with any earlier dedup/pass/token tables"""
    if manifest is None:
        manifest = db.load_manifest()
    if not manifest.records:
        raise CorpusError("manifest has no records")

    samples = sample_functions(manifest, db, sample_size, seed, jobs) if properties else []
    return render_report(
        db,
        opcodes=opcode_distribution(manifest, db, k, jobs),
        heatmap=duplication_heatmap(function_hash_index(manifest, db, jobs=jobs)),
        mutation=_load_existing(db, "mutation.json", MutationTable),
        histograms=property_histograms(samples, properties) if samples else [],
        size=corpus_size_report(manifest),
        dedup=_load_existing(db, "dedup.json", DedupReport),
        tokens=_load_existing(db, "tokens.json", TokenCountReport),
    )
