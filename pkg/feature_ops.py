"""
Function property operations module
"""

import csv
import logging
import zlib
from collections import Counter, defaultdict
from functools import partial
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from db.database import CorpusDatabase
from errors import InvalidInputError, IrForgeError
from ir.cfg import analyze_loops
from ir.model import CASTS, CALLS, COMPARES, FLOAT_ARITH, INTEGER_ARITH, IrFunction, Opcode
from ir.parser import parse_module
from models import CorpusManifest, DedupStatus, Histogram, ModuleRecord
from worker_ops import parallel_map

logger = logging.getLogger(__name__)


class FeatureVector(BaseModel):
    total_instructions: int = 0
    basic_block_count: int = 0
    blocks_reached_from_cond_branch: int = 0
    direct_call_count: int = 0
    indirect_call_count: int = 0
    intrinsic_call_count: int = 0
    load_count: int = 0
    store_count: int = 0
    alloca_count: int = 0
    integer_arith_count: int = 0
    float_arith_count: int = 0
    cast_count: int = 0
    cmp_count: int = 0
    phi_count: int = 0
    select_count: int = 0
    gep_count: int = 0
    cond_branch_count: int = 0
    uncond_branch_count: int = 0
    switch_count: int = 0
    return_count: int = 0
    unreachable_count: int = 0
    argument_count: int = 0
    top_level_loop_count: int = 0
    max_loop_depth: int = 0
    critical_edge_count: int = 0
    mean_block_size: float = 0.0

    def values(self) -> List[float]:
        return [getattr(self, name) for name in FEATURE_NAMES]


FEATURE_NAMES = tuple(FeatureVector.model_fields)

# Disjoint opcode categories; together with other_instruction_count they partition total_instructions.
CATEGORY_FIELDS = (
    "direct_call_count", "indirect_call_count", "intrinsic_call_count", "load_count", "store_count",
    "alloca_count", "integer_arith_count", "float_arith_count", "cast_count", "cmp_count", "phi_count",
    "select_count", "gep_count", "cond_branch_count", "uncond_branch_count", "switch_count",
    "return_count", "unreachable_count",
)

_SINGLE_OPCODE_FIELDS = {
    Opcode.LOAD: "load_count",
    Opcode.STORE: "store_count",
    Opcode.ALLOCA: "alloca_count",
    Opcode.PHI: "phi_count",
    Opcode.SELECT: "select_count",
    Opcode.GETELEMENTPTR: "gep_count",
    Opcode.SWITCH: "switch_count",
    Opcode.RET: "return_count",
    Opcode.UNREACHABLE: "unreachable_count",
}


def extract_features(fn: IrFunction) -> FeatureVector:
    cfg, _, loops = analyze_loops(fn)
    counts: Dict[str, float] = Counter()
    total = 0
    for inst in fn.counted_instructions():
        total += 1
        op = inst.opcode
        if op in _SINGLE_OPCODE_FIELDS:
            counts[_SINGLE_OPCODE_FIELDS[op]] += 1
        elif op in INTEGER_ARITH:
            counts["integer_arith_count"] += 1
        elif op in FLOAT_ARITH:
            counts["float_arith_count"] += 1
        elif op in CASTS:
            counts["cast_count"] += 1
        elif op in COMPARES:
            counts["cmp_count"] += 1
        elif op in CALLS:
            if inst.is_intrinsic_call:
                counts["intrinsic_call_count"] += 1
            elif inst.callee is not None:
                counts["direct_call_count"] += 1
            else:
                counts["indirect_call_count"] += 1
        elif op is Opcode.BR:
            counts["cond_branch_count" if inst.is_conditional_branch else "uncond_branch_count"] += 1

    reached = set()
    for block in fn.blocks:
        terminator = block.terminator
        if terminator is not None and terminator.is_conditional_branch:
            reached.update(terminator.successor_labels())

    critical = sum(1 for u, v in cfg.edges()
                   if len(cfg.successors[u]) > 1 and len(cfg.predecessors[v]) > 1)
    blocks = len(fn.blocks)
    return FeatureVector(
        total_instructions=total,
        basic_block_count=blocks,
        blocks_reached_from_cond_branch=len(reached),
        argument_count=len(fn.params),
        top_level_loop_count=loops.top_level_loop_count,
        max_loop_depth=loops.max_loop_depth,
        critical_edge_count=critical,
        mean_block_size=total / blocks if blocks else 0.0,
        **counts,
    )


def other_instruction_count(vector: FeatureVector) -> int:
    return vector.total_instructions - sum(getattr(vector, name) for name in CATEGORY_FIELDS)


class FunctionRef(NamedTuple):
    language: str
    module: str
    function: str


class FunctionSample(NamedTuple):
    ref: FunctionRef
    sample_index: int
    features: FeatureVector


def language_rng(seed: int, language: str) -> np.random.Generator:
    """Per-language generator so adding a language leaves other samples unchanged"""
    if seed < 0:
        raise InvalidInputError("seed must be non-negative")
    return np.random.default_rng([seed, zlib.crc32(language.encode("utf-8"))])


def sample_indices(population: int, n: int, rng: np.random.Generator) -> List[int]:
    """Uniform draw without replacement, capped at the population size"""
    if n < 1:
        raise InvalidInputError("sample size must be positive")
    if population == 0:
        return []
    return [int(i) for i in rng.choice(population, size=min(n, population), replace=False)]


def _defined_names(record: ModuleRecord, out_dir: str) -> Optional[List[str]]:
    try:
        module = parse_module(CorpusDatabase(out_dir).read_text(record))
    except (IrForgeError, OSError) as e:
        logger.warning(f"Skipping {record.artifact.path}: {e}")
        return None
    return [fn.name for fn in module.defined_functions()]


def _features_for(job, out_dir: str) -> Dict[str, FeatureVector]:
    record, names = job
    module = parse_module(CorpusDatabase(out_dir).read_text(record))
    return {name: extract_features(module.function(name)) for name in names}


def function_population(manifest: CorpusManifest, db: CorpusDatabase, jobs: int = 1) -> Dict[str, List[FunctionRef]]:
    live = [r for r in manifest.records if r.dedup_status is not DedupStatus.REMOVED_DUPLICATE]
    names = parallel_map(partial(_defined_names, out_dir=db.out_dir), live, jobs=jobs,
                         desc="Enumerating functions")
    population: Dict[str, List[FunctionRef]] = defaultdict(list)
    for record, fn_names in zip(live, names):
        for name in fn_names or ():
            population[record.language_tag.value].append(FunctionRef(record.language_tag.value,
                                                                     record.artifact.path, name))
    return dict(population)


def sample_functions(manifest: CorpusManifest, db: CorpusDatabase, n: int, seed: int,
                     jobs: int = 1) -> List[FunctionSample]:
    """Uniform per-language function sample with feature vectors attached"""
    population = function_population(manifest, db, jobs)
    chosen: List[tuple] = []
    for language in sorted(population):
        refs = population[language]
        picks = sample_indices(len(refs), n, language_rng(seed, language))
        chosen.extend((refs[i], k) for k, i in enumerate(picks))
        logger.info(f"{language}: sampled {len(picks)} of {len(refs)} function(s)")

    records = {r.artifact.path: r for r in manifest.records}
    by_module: Dict[str, List[str]] = defaultdict(list)
    for ref, _ in chosen:
        by_module[ref.module].append(ref.function)
    modules = sorted(by_module)
    vectors = parallel_map(partial(_features_for, out_dir=db.out_dir),
                           [(records[m], by_module[m]) for m in modules], jobs=jobs, desc="Extracting features")
    features = dict(zip(modules, vectors))
    return [FunctionSample(ref, k, features[ref.module][ref.function]) for ref, k in chosen]


def log_bin_edges(max_value: float) -> List[float]:
    """[0, 1, 2, 4, ...] up to the first edge above max_value"""
    edges = [0.0, 1.0]
    while edges[-1] <= max_value:
        edges.append(edges[-1] * 2)
    return edges


def histogram(values: Dict[str, Sequence[float]], edges: Sequence[float], log_scale: bool = False,
              property_name: str = "") -> Histogram:
    """Half-open [lo, hi) binning per language; values at or past the top edge overflow"""
    edges_arr = np.asarray(edges, dtype=float)
    if edges_arr.ndim != 1 or len(edges_arr) < 2:
        raise InvalidInputError("histogram needs at least one bin (two edges)")
    if np.any(np.diff(edges_arr) <= 0):
        raise InvalidInputError("bin edges must be strictly increasing")
    bins = len(edges_arr) - 1

    result = Histogram(property=property_name, edges=[float(e) for e in edges_arr], log_scale=log_scale)
    for language in sorted(values):
        data = np.asarray(values[language], dtype=float)
        index = np.searchsorted(edges_arr, data, side="right") - 1
        inside = (index >= 0) & (index < bins)
        result.counts[language] = [int(c) for c in np.bincount(index[inside], minlength=bins)]
        result.sample_size[language] = int(len(data))
        result.overflow[language] = int(np.count_nonzero(index >= bins))
        result.underflow[language] = int(np.count_nonzero(index < 0))
    return result


def property_histograms(samples: Sequence[FunctionSample], properties: Sequence[str]) -> List[Histogram]:
    result = []
    for name in properties:
        if name not in FEATURE_NAMES:
            raise InvalidInputError(f"unknown function property '{name}'")
        per_language: Dict[str, List[float]] = defaultdict(list)
        for sample in samples:
            per_language[sample.ref.language].append(getattr(sample.features, name))
        top = max((v for vals in per_language.values() for v in vals), default=0)
        result.append(histogram(dict(per_language), log_bin_edges(top), log_scale=True, property_name=name))
    return result


def export_feature_table(samples: Sequence[FunctionSample], out_path: str) -> int:
    """CSV with a language/module/function prefix and one column per feature"""
    rows = sorted(samples, key=lambda s: (s.ref.language, s.sample_index))
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["language", "module", "function", *FEATURE_NAMES])
        for sample in rows:
            writer.writerow([sample.ref.language, sample.ref.module, sample.ref.function,
                             *(repr(v) if isinstance(v, float) else v for v in sample.features.values())])
    logger.info(f"Wrote {len(rows)} feature row(s) to {out_path}")
    return len(rows)


def read_feature_table(path: str) -> List[tuple]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        return [
            (FunctionRef(row["language"], row["module"], row["function"]),
             FeatureVector(**{name: row[name] for name in FEATURE_NAMES}))
            for row in reader
        ]
