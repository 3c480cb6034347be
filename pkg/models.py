"""
Pydantic models shared by the corpus pipeline and the analyses
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

TOOL_VERSION = "ir-forge 1.0.0"


class Ecosystem(str, Enum):
    CARGO = "cargo"
    SWIFTPM = "swiftpm"
    SPACK_LIKE = "spack-like"
    CMAKE = "cmake"
    AUTOTOOLS = "autotools"
    RAW_SHELL = "raw-shell"
    PREBUILT = "prebuilt"


class LanguageTag(str, Enum):
    C = "C"
    CXX = "C++"
    JULIA = "Julia"
    RUST = "Rust"
    SWIFT = "Swift"
    OTHER = "other"


class SourceKind(str, Enum):
    GIT = "git"
    TARBALL = "tarball"
    LOCAL = "local"


class ExtractionStrategy(str, Enum):
    EMBEDDED_SECTION = "embedded-section"
    RAW_FILE = "raw-file"
    COMPILE_COMMANDS = "compile-commands"


class Encoding(str, Enum):
    BITCODE = "bitcode"
    TEXTUAL = "textual"


class DedupStatus(str, Enum):
    KEPT = "kept"
    REMOVED_DUPLICATE = "removed-duplicate"
    UNPROCESSED = "unprocessed"


class BuildStatus(str, Enum):
    SUCCESS = "success"
    PARTIAL = "partial"
    FAILED = "failed"
    SKIPPED = "skipped"


class HashMode(str, Enum):
    COARSE = "coarse"
    DETAILED = "detailed"


class PackageSource(BaseModel):
    kind: SourceKind
    url: Optional[str] = Field(None, description="Repository or archive URL")
    path: Optional[str] = Field(None, description="Filesystem path for local and tarball sources")
    ref: Optional[str] = Field(None, description="Git branch, tag or commit")
    fallback: Optional["PackageSource"] = Field(None, description="Tarball used when the primary fetch fails")

    @model_validator(mode="after")
    def check_location(self):
        if self.kind is SourceKind.GIT and not self.url:
            raise ValueError("git source requires 'url'")
        if self.kind is SourceKind.LOCAL and not self.path:
            raise ValueError("local source requires 'path'")
        if self.kind is SourceKind.TARBALL and not (self.url or self.path):
            raise ValueError("tarball source requires 'url' or 'path'")
        return self


PackageSource.model_rebuild()

# Entries of the corpus directory that a package directory would shadow.
RESERVED_PACKAGE_NAMES = frozenset({".build", "reports", "manifest.json"})


class PackageDescriptor(BaseModel):
    name: str
    ecosystem: Ecosystem
    source: PackageSource
    build_commands: List[str] = Field(default_factory=list)
    dependencies: List[str] = Field(default_factory=list)
    extra_flags: List[str] = Field(default_factory=list)
    language_tag: LanguageTag = LanguageTag.OTHER
    extraction_strategy: Optional[ExtractionStrategy] = None

    @field_validator("name")
    @classmethod
    def validate_name(cls, v):
        if not v or not v.strip():
            raise ValueError("name must be nonempty")
        if "/" in v or v in (".", ".."):
            raise ValueError("name must be usable as a directory name")
        if v in RESERVED_PACKAGE_NAMES:
            raise ValueError(f"name '{v}' is reserved by the corpus layout")
        return v

    @property
    def strategy(self) -> ExtractionStrategy:
        if self.extraction_strategy is not None:
            return self.extraction_strategy
        if self.ecosystem in (Ecosystem.CARGO, Ecosystem.PREBUILT):
            return ExtractionStrategy.RAW_FILE
        if self.ecosystem is Ecosystem.CMAKE:
            return ExtractionStrategy.COMPILE_COMMANDS
        return ExtractionStrategy.EMBEDDED_SECTION


class BuildResult(BaseModel):
    package: str
    status: BuildStatus
    build_tree_path: Optional[str] = None
    log: str = ""
    reason: Optional[str] = None
    log_path: Optional[str] = None


class BuildNote(BaseModel):
    package: str
    status: BuildStatus
    reason: Optional[str] = None
    log_path: Optional[str] = None
    artifact_count: int = 0


class BitcodeArtifact(BaseModel):
    origin_package: str
    path: str = Field(..., description="Corpus-relative path")
    encoding: Encoding = Encoding.BITCODE
    byte_size: int = Field(..., ge=0)
    extraction_strategy: ExtractionStrategy


class ModuleRecord(BaseModel):
    artifact: BitcodeArtifact
    language_tag: LanguageTag
    module_hash: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    dedup_status: DedupStatus = DedupStatus.UNPROCESSED
    text_size: Optional[int] = Field(None, ge=0)
    text_path: Optional[str] = None
    parse_error: Optional[str] = None

    @model_validator(mode="after")
    def check_hash(self):
        if self.dedup_status is DedupStatus.REMOVED_DUPLICATE and self.module_hash is None:
            raise ValueError("removed-duplicate record requires module_hash")
        return self


class CorpusManifest(BaseModel):
    records: List[ModuleRecord] = Field(default_factory=list)
    created_at: str
    tool_version: str = TOOL_VERSION
    build_notes: List[BuildNote] = Field(default_factory=list)

    @field_validator("records")
    @classmethod
    def validate_unique_paths(cls, v):
        seen = set()
        for record in v:
            if record.artifact.path in seen:
                raise ValueError(f"duplicate record path {record.artifact.path}")
            seen.add(record.artifact.path)
        return v

    def language_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for record in self.records:
            counts[record.language_tag.value] = counts.get(record.language_tag.value, 0) + 1
        return counts


class LanguageSize(BaseModel):
    modules: int = 0
    bitcode_bytes: int = 0
    text_bytes: int = 0
    text_to_bitcode_ratio: Optional[float] = None
    kept_modules: int = 0
    kept_bitcode_bytes: int = 0
    kept_text_bytes: int = 0


class SizeReport(BaseModel):
    per_language: Dict[str, LanguageSize] = Field(default_factory=dict)
    total: LanguageSize = Field(default_factory=LanguageSize)


class LanguageDedup(BaseModel):
    total: int = 0
    removed: int = 0
    duplication_rate: float = Field(0.0, ge=0.0, le=1.0)


class DedupReport(BaseModel):
    mode: HashMode
    total_modules: int = 0
    kept: int = 0
    removed: int = 0
    parse_failures: int = 0
    per_language: Dict[str, LanguageDedup] = Field(default_factory=dict)
    bytes_before: int = 0
    bytes_after: int = 0
    text_bytes_before: int = 0
    text_bytes_after: int = 0


class FunctionDupReport(BaseModel):
    """Function-level duplicate counts; analysis only, nothing is removed"""
    mode: HashMode
    per_language: Dict[str, LanguageDedup] = Field(default_factory=dict)


class ToolStatus(BaseModel):
    path: Optional[str] = None
    found: bool = False
    version: Optional[str] = None
    diagnostic: Optional[str] = None


class ToolchainReport(BaseModel):
    tools: Dict[str, ToolStatus] = Field(default_factory=dict)
    capabilities: Dict[str, bool] = Field(default_factory=dict)


class Histogram(BaseModel):
    property: str
    edges: List[float]
    counts: Dict[str, List[int]] = Field(default_factory=dict)
    sample_size: Dict[str, int] = Field(default_factory=dict)
    overflow: Dict[str, int] = Field(default_factory=dict)
    underflow: Dict[str, int] = Field(default_factory=dict)
    log_scale: bool = False


class PassLanguageStats(BaseModel):
    targets_seen: int = 0
    targets_changed: int = 0
    frequency: Optional[float] = Field(None, ge=0.0, le=1.0)


class PassRow(BaseModel):
    pass_name: str
    per_language: Dict[str, PassLanguageStats] = Field(default_factory=dict)

    @property
    def max_frequency(self) -> float:
        return max((s.frequency for s in self.per_language.values() if s.frequency is not None), default=0.0)


class MutationTable(BaseModel):
    languages: List[str] = Field(default_factory=list)
    rows: List[PassRow] = Field(default_factory=list)
    failed_targets: int = 0


class OpcodeCounts(BaseModel):
    language_tag: str
    counts: Dict[str, int] = Field(default_factory=dict)
    total: int = 0

    @model_validator(mode="after")
    def check_total(self):
        if self.total != sum(self.counts.values()):
            raise ValueError("total must equal the sum of opcode counts")
        return self


class OpcodeTable(BaseModel):
    top: List[List] = Field(default_factory=list, description="[opcode, count] pairs, most frequent first")
    other: int = 0
    total: int = 0


class OpcodeDistribution(BaseModel):
    k: int
    per_language: Dict[str, OpcodeTable] = Field(default_factory=dict)
    aggregate: OpcodeTable = Field(default_factory=OpcodeTable)


class DuplicationMatrix(BaseModel):
    languages: List[str] = Field(default_factory=list)
    cells: List[List[Optional[float]]] = Field(default_factory=list)
    definition: str = (
        "row-normalized: cell(a,b) = |distinct(H_a) & distinct(H_b)| / |distinct(H_a)|; "
        "cell(a,a) = 1 - |distinct(H_a)| / |H_a|"
    )

    def cell(self, a: str, b: str) -> Optional[float]:
        return self.cells[self.languages.index(a)][self.languages.index(b)]


class SampleDescription(BaseModel):
    per_language: int
    seed: int
    modules_per_language: Dict[str, int] = Field(default_factory=dict)
    capped_languages: List[str] = Field(default_factory=list)


class TokenCountEntry(BaseModel):
    vocab_size: int
    merges: int
    vocab_len: int
    token_count: int


class TokenCountReport(BaseModel):
    sample: SampleDescription
    entries: List[TokenCountEntry] = Field(default_factory=list)
    counted_modules: int = 0
    skipped_modules: int = 0

    def count_for(self, vocab_size: int) -> Optional[int]:
        for entry in self.entries:
            if entry.vocab_size == vocab_size:
                return entry.token_count
        return None
