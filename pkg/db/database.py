"""
Corpus database: on-disk layout, manifest persistence and report files
"""

import json
import logging
import os
import re
from datetime import datetime, timezone
from typing import Iterator, List, Optional

from pydantic import BaseModel, ValidationError

from errors import CorpusError
from models import RESERVED_PACKAGE_NAMES, CorpusManifest, DedupStatus, Encoding, ModuleRecord

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
REPORTS_DIR = "reports"
_STEM_RE = re.compile(r"(\d+)")


def created_at() -> str:
    """Manifest timestamp; SOURCE_DATE_EPOCH pins it for reproducible output"""
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    if epoch:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        moment = datetime.now(tz=timezone.utc).replace(microsecond=0)
    return moment.isoformat()


def record_sort_key(record: ModuleRecord):
    path = record.artifact.path
    stem = os.path.splitext(os.path.basename(path))[0]
    match = _STEM_RE.fullmatch(stem)
    return (record.artifact.origin_package, int(match.group(1)) if match else -1, path)


class CorpusDatabase:
    def __init__(self, out_dir: str):
        self.out_dir = os.path.abspath(out_dir)
        self.manifest_path = os.path.join(self.out_dir, MANIFEST_NAME)
        self.reports_dir = os.path.join(self.out_dir, REPORTS_DIR)

    def ensure_writable(self) -> None:
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as e:
            raise CorpusError(f"cannot create output directory {self.out_dir}: {e}") from e
        if not os.access(self.out_dir, os.W_OK):
            raise CorpusError(f"output directory {self.out_dir} is not writable")

    def path_of(self, relative: str) -> str:
        return os.path.join(self.out_dir, relative)

    def package_dir(self, package: str) -> str:
        if package in RESERVED_PACKAGE_NAMES:
            raise CorpusError(f"package name '{package}' is reserved by the corpus layout")
        return os.path.join(self.out_dir, package)

    def store_artifact(self, package: str, index: int, data: bytes, suffix: str = ".bc") -> str:
        """Write one harvested module; returns its corpus-relative path"""
        relative = f"{package}/{index}{suffix}"
        absolute = os.path.join(self.package_dir(package), f"{index}{suffix}")
        os.makedirs(os.path.dirname(absolute), exist_ok=True)
        with open(absolute, "wb") as f:
            f.write(data)
        return relative

    def text_path_for(self, record: ModuleRecord) -> str:
        if record.artifact.encoding is Encoding.TEXTUAL:
            return record.artifact.path
        return os.path.splitext(record.artifact.path)[0] + ".ll"

    def write_text(self, relative: str, text: str) -> int:
        data = text.encode("utf-8")
        with open(self.path_of(relative), "wb") as f:
            f.write(data)
        return len(data)

    def read_text(self, record: ModuleRecord) -> str:
        relative = record.text_path
        if relative is None:
            if record.artifact.encoding is not Encoding.TEXTUAL:
                raise CorpusError(f"{record.artifact.path} has not been disassembled")
            relative = record.artifact.path
        with open(self.path_of(relative), "r", encoding="utf-8", errors="replace") as f:
            return f.read()

    def iter_texts(self, manifest: CorpusManifest, include_removed: bool = False) -> Iterator[tuple]:
        """Yield (record, text) for every readable module, logging the rest"""
        for record in manifest.records:
            if not include_removed and record.dedup_status is DedupStatus.REMOVED_DUPLICATE:
                continue
            try:
                yield record, self.read_text(record)
            except (OSError, CorpusError) as e:
                logger.warning(f"Skipping {record.artifact.path}: {e}")

    def load_manifest(self) -> CorpusManifest:
        if not os.path.isfile(self.manifest_path):
            raise CorpusError(f"no manifest at {self.manifest_path}")
        try:
            with open(self.manifest_path, "r", encoding="utf-8") as f:
                return CorpusManifest.model_validate_json(f.read())
        except ValidationError as e:
            raise CorpusError(f"invalid manifest {self.manifest_path}: {e}") from e

    def save_manifest(self, manifest: CorpusManifest) -> str:
        manifest = manifest.model_copy(update={
            "records": sorted(manifest.records, key=record_sort_key),
            "build_notes": sorted(manifest.build_notes, key=lambda n: n.package),
        })
        self.ensure_writable()
        self._write_atomic(self.manifest_path, manifest.model_dump_json(indent=2) + "\n")
        logger.info(f"Manifest written to {self.manifest_path} ({len(manifest.records)} records)")
        return self.manifest_path

    def write_report(self, name: str, payload, directory: Optional[str] = None) -> str:
        """Write a JSON report; `payload` is a pydantic model or plain JSON data"""
        directory = directory or self.reports_dir
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        if isinstance(payload, BaseModel):
            text = payload.model_dump_json(indent=2)
        else:
            text = json.dumps(payload, indent=2, sort_keys=True)
        self._write_atomic(path, text + "\n")
        return path

    def write_file(self, name: str, text: str, directory: Optional[str] = None) -> str:
        directory = directory or self.reports_dir
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        self._write_atomic(path, text)
        return path

    @staticmethod
    def _write_atomic(path: str, text: str) -> None:
        tmp = path + ".tmp"
        try:
            with open(tmp, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
            os.replace(tmp, path)
        except OSError as e:
            raise CorpusError(f"cannot write {path}: {e}") from e


def sorted_records(records: List[ModuleRecord]) -> List[ModuleRecord]:
    return sorted(records, key=record_sort_key)
