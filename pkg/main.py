"""
ir-forge command line: build, harvest, deduplicate and analyze an LLVM-IR corpus
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from build_ops import run_corpus_build
from corpus_ops import (
    DEFAULT_SECTION_NAMES, corpus_size_report, disassemble_corpus, harvest_build_tree, ingest_textual_tree,
    merge_package_records, scan_build_tree,
)
from db.database import CorpusDatabase, created_at
from errors import IrForgeError, ToolUnavailableError
from feature_ops import FEATURE_NAMES, export_feature_table, property_histograms, sample_functions
from hash_ops import dedup_corpus, function_dup_report, function_hash_index
from ir.extract import extract_function
from models import CorpusManifest, ExtractionStrategy, HashMode, LanguageTag
from package_ops import load_package_list
from pass_ops import trace_corpus
from report_ops import DEFAULT_HISTOGRAM_PROPERTIES, build_report, render_report
from stats_ops import duplication_heatmap, opcode_distribution
from tokenizer_ops import corpus_token_count
from toolchain_ops import ToolchainConfig, load_config, probe_toolchain, resolve_executable

logger = logging.getLogger(__name__)

DEFAULT_VOCAB_SIZES = (300, 1000, 3000)


def _print_json(text: str) -> None:
    sys.stdout.write(text.rstrip("\n") + "\n")


def _load_or_empty(db: CorpusDatabase) -> CorpusManifest:
    if os.path.isfile(db.manifest_path):
        return db.load_manifest()
    return CorpusManifest(created_at=created_at())


def cmd_build(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    packages = load_package_list(args.packages)
    manifest = run_corpus_build(packages, config.jobs, db.out_dir, config=config, workdir=args.workdir,
                                section_names=args.section or DEFAULT_SECTION_NAMES)
    failed = [note.package for note in manifest.build_notes if note.status.value in ("failed", "skipped")]
    if failed:
        logger.warning(f"Packages without a complete build: {', '.join(failed)}")
    return 0


def cmd_scan(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    sections = args.section or DEFAULT_SECTION_NAMES
    package = args.package or os.path.basename(os.path.normpath(args.root))
    if not args.ingest:
        artifacts = scan_build_tree(args.root, ExtractionStrategy(args.strategy), package, sections)
        _print_json(json.dumps([a.model_dump(mode="json") for a in artifacts], indent=2))
        return 0

    db.ensure_writable()
    language = LanguageTag(args.language)
    if args.textual:
        records = ingest_textual_tree(db, args.root, package, language)
    else:
        records = harvest_build_tree(db, args.root, package, language, ExtractionStrategy(args.strategy), sections)
    manifest = merge_package_records(_load_or_empty(db), package, records)
    db.save_manifest(manifest.model_copy(update={"created_at": created_at()}))
    return 0


def cmd_disassemble(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    manifest = db.load_manifest()
    disassembler = resolve_executable(config.tool_path("dis"))
    db.save_manifest(disassemble_corpus(manifest, db, disassembler, config.jobs))
    return 0


def cmd_extract_fn(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    with open(args.module, "r", encoding="utf-8") as f:
        text = extract_function(f.read(), args.function)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_dedup(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    manifest = db.load_manifest()
    mode = HashMode(args.mode)
    if args.level == "function":
        report = function_dup_report(function_hash_index(manifest, db, mode, config.jobs), mode)
        _print_json(report.model_dump_json(indent=2))
        db.write_report("function_dups.json", report)
        return 0
    manifest, report = dedup_corpus(manifest, db, mode, config.jobs)
    db.save_manifest(manifest)
    db.write_report("dedup.json", report)
    _print_json(report.model_dump_json(indent=2))
    return 0


def cmd_analyze(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    manifest = db.load_manifest()
    if args.analysis == "opcodes":
        render_report(db, opcodes=opcode_distribution(manifest, db, args.top, config.jobs))
    elif args.analysis == "dup-heatmap":
        index = function_hash_index(manifest, db, HashMode(args.mode), config.jobs)
        render_report(db, heatmap=duplication_heatmap(index))
    elif args.analysis == "features":
        samples = sample_functions(manifest, db, args.sample, args.seed, config.jobs)
        csv_path = args.csv or os.path.join(db.reports_dir, "features.csv")
        os.makedirs(os.path.dirname(os.path.abspath(csv_path)), exist_ok=True)
        export_feature_table(samples, csv_path)
        properties = args.histogram or list(DEFAULT_HISTOGRAM_PROPERTIES)
        render_report(db, histograms=property_histograms(samples, properties))
    elif args.analysis == "passes":
        if not args.replay_dir and resolve_executable(config.tool_path("opt")) is None:
            raise ToolUnavailableError("pass tracing needs an optimizer (set IRFORGE_OPT) or --replay-dir")
        table = trace_corpus(manifest, db, args.pipeline, granularity=args.granularity,
                             optimizer=config.tool_path("opt"), exclude_languages=args.exclude_lang or (),
                             record_dir=args.record_dir, replay_dir=args.replay_dir,
                             per_occurrence=args.per_occurrence, jobs=config.jobs)
        render_report(db, mutation=table)
    return 0


def cmd_tokenize(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    manifest = db.load_manifest()
    report = corpus_token_count(manifest, db, args.vocab or list(DEFAULT_VOCAB_SIZES), args.sample_per_lang,
                                args.seed, config.jobs)
    render_report(db, tokens=report)
    _print_json(report.model_dump_json(indent=2))
    return 0


def cmd_size_report(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    report = corpus_size_report(db.load_manifest())
    render_report(db, size=report)
    _print_json(report.model_dump_json(indent=2))
    return 0


def cmd_report(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    written = build_report(db, k=args.top, sample_size=args.sample, seed=args.seed, jobs=config.jobs)
    for path in written:
        sys.stdout.write(os.path.relpath(path, db.out_dir) + "\n")
    return 0


def cmd_probe(args, config: ToolchainConfig, db: CorpusDatabase) -> int:
    _print_json(probe_toolchain(config).model_dump_json(indent=2))
    return 0


command_map = {
    "build": cmd_build,
    "scan": cmd_scan,
    "disassemble": cmd_disassemble,
    "extract-fn": cmd_extract_fn,
    "dedup": cmd_dedup,
    "analyze": cmd_analyze,
    "tokenize": cmd_tokenize,
    "size-report": cmd_size_report,
    "report": cmd_report,
    "probe": cmd_probe,
}


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _seed(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"seed must be non-negative, got {value}")
    return number


def _vocab_sizes(value: str) -> List[int]:
    sizes = [_positive_int(part) for part in value.split(",") if part.strip()]
    if not sizes:
        raise argparse.ArgumentTypeError(f"expected comma-separated vocabulary sizes, got '{value}'")
    return sizes


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool = False) -> None:
    # repeated on every subcommand with SUPPRESS so a value given after the subcommand wins
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--out", default=default(None), help="corpus directory (default: IRFORGE_OUT or ./corpus)")
    parser.add_argument("--jobs", type=_positive_int, default=default(None),
                        help="worker count (default: IRFORGE_JOBS or CPU count)")
    parser.add_argument("--config", default=default(None), help="key-value configuration file")
    parser.add_argument("--seed", type=_seed, default=default(0), help="seed for every sampling step")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ir-forge", description="Build and analyze a multi-language LLVM-IR corpus")
    _add_global_flags(parser)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build", parents=[common], help="build packages and harvest their bitcode")
    p.add_argument("packages", help="JSON package list")
    p.add_argument("--workdir", help="build directory (default: <out>/.build)")
    p.add_argument("--section", action="append", help="bitcode section name (repeatable)")

    p = sub.add_parser("scan", parents=[common], help="list or ingest bitcode found under a build tree")
    p.add_argument("root")
    p.add_argument("--strategy", choices=[s.value for s in ExtractionStrategy],
                   default=ExtractionStrategy.EMBEDDED_SECTION.value)
    p.add_argument("--section", action="append", help="bitcode section name (repeatable)")
    p.add_argument("--package", help="package name (default: directory name)")
    p.add_argument("--ingest", action="store_true", help="copy the modules into the corpus manifest")
    p.add_argument("--textual", action="store_true", help="ingest .ll files instead of bitcode")
    p.add_argument("--language", choices=[t.value for t in LanguageTag], default=LanguageTag.OTHER.value)

    sub.add_parser("disassemble", parents=[common], help="disassemble every bitcode record to textual IR")

    p = sub.add_parser("extract-fn", parents=[common], help="slice one function into a standalone module")
    p.add_argument("module")
    p.add_argument("function")
    p.add_argument("-o", "--output")

    p = sub.add_parser("dedup", parents=[common], help="structural-hash deduplication")
    p.add_argument("--mode", choices=[m.value for m in HashMode], default=HashMode.COARSE.value)
    p.add_argument("--level", choices=["module", "function"], default="module")

    p = sub.add_parser("analyze", parents=[common], help="corpus analyses")
    analyses = p.add_subparsers(dest="analysis", required=True, metavar="ANALYSIS")
    a = analyses.add_parser("features", parents=[common], help="sample functions and export property vectors")
    a.add_argument("--sample", type=_positive_int, default=1000, help="functions per language")
    a.add_argument("--csv", help="feature table path (default: <out>/reports/features.csv)")
    a.add_argument("--histogram", action="append", choices=FEATURE_NAMES, help="property to histogram")
    a = analyses.add_parser("opcodes", parents=[common], help="per-language opcode distribution")
    a.add_argument("--top", type=_positive_int, default=10)
    a = analyses.add_parser("passes", parents=[common], help="optimizer pass mutation frequencies")
    a.add_argument("--pipeline", default="default<O3>")
    a.add_argument("--granularity", choices=["function", "module"], default="function")
    a.add_argument("--exclude-lang", dest="exclude_lang", action="append", help="language to skip (repeatable)")
    a.add_argument("--record-dir")
    a.add_argument("--replay-dir")
    a.add_argument("--per-occurrence", action="store_true")
    a = analyses.add_parser("dup-heatmap", parents=[common], help="cross-language function duplication")
    a.add_argument("--mode", choices=[m.value for m in HashMode], default=HashMode.DETAILED.value)

    p = sub.add_parser("tokenize", parents=[common], help="train BPE vocabularies and count corpus tokens")
    p.add_argument("--vocab", type=_vocab_sizes, action="extend", help="comma-separated vocabulary sizes")
    p.add_argument("--sample-per-lang", type=_positive_int, default=100, help="modules sampled per language")

    sub.add_parser("size-report", parents=[common], help="bitcode and text sizes per language")

    p = sub.add_parser("report", parents=[common], help="render all reports under <out>/reports")
    p.add_argument("--top", type=_positive_int, default=10)
    p.add_argument("--sample", type=_positive_int, default=1000)

    sub.add_parser("probe", parents=[common], help="show toolchain availability")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = load_config(args.config, jobs=args.jobs, out_dir=args.out)
        return command_map[args.command](args, config, CorpusDatabase(config.out_dir))
    except (IrForgeError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
