"""
Package list operations module
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional, Set

import networkx as nx
from pydantic import ValidationError

from errors import CycleError, PackageListError
from models import Ecosystem, PackageDescriptor, SourceKind

logger = logging.getLogger(__name__)

_ECOSYSTEMS = {e.value for e in Ecosystem}


def _resolve_paths(source: Dict[str, Any], base_dir: Optional[str]) -> None:
    if base_dir is None or not isinstance(source, dict):
        return
    path = source.get("path")
    if isinstance(path, str) and path and not os.path.isabs(path):
        source["path"] = os.path.normpath(os.path.join(base_dir, path))
    _resolve_paths(source.get("fallback"), base_dir)


def _drop_duplicate_sources(packages: List[PackageDescriptor]) -> List[PackageDescriptor]:
    """Drop later entries fetching the same repository at the same ref"""
    needed: Set[str] = {dep for pkg in packages for dep in pkg.dependencies}
    seen: Dict[tuple, str] = {}
    kept = []
    for pkg in packages:
        if pkg.source.kind is SourceKind.GIT:
            key = (pkg.ecosystem, pkg.source.url.rstrip("/").removesuffix(".git"), pkg.source.ref)
            if key in seen and pkg.name not in needed:
                logger.warning(f"Dropping {pkg.name}: same source as {seen[key]} ({pkg.source.url})")
                continue
            seen.setdefault(key, pkg.name)
        kept.append(pkg)
    return kept


def parse_package_list(document: str, base_dir: Optional[str] = None) -> List[PackageDescriptor]:
    """Parse a JSON package list into validated descriptors"""
    try:
        entries = json.loads(document)
    except json.JSONDecodeError as e:
        raise PackageListError(e.msg, line=e.lineno, column=e.colno) from e
    if not isinstance(entries, list):
        raise PackageListError("package list must be a JSON array", line=1, column=1)

    packages: List[PackageDescriptor] = []
    names: Set[str] = set()
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise PackageListError("entry must be an object", entry=f"#{index}")
        label = str(entry.get("name") or f"#{index}")
        ecosystem = entry.get("ecosystem")
        if ecosystem not in _ECOSYSTEMS:
            raise PackageListError(f"unknown ecosystem '{ecosystem}'", entry=label)
        _resolve_paths(entry.get("source"), base_dir)
        try:
            descriptor = PackageDescriptor.model_validate(entry)
        except ValidationError as e:
            details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
            raise PackageListError(details, entry=label) from e
        if descriptor.name in names:
            raise PackageListError("duplicate package name", entry=descriptor.name)
        names.add(descriptor.name)
        packages.append(descriptor)

    for pkg in packages:
        for dep in pkg.dependencies:
            if dep not in names:
                raise PackageListError(f"unknown dependency '{dep}'", entry=pkg.name)

    packages = _drop_duplicate_sources(packages)
    logger.info(f"Parsed {len(packages)} package(s)")
    return packages


def load_package_list(path: str) -> List[PackageDescriptor]:
    with open(path, "r", encoding="utf-8") as f:
        document = f.read()
    return parse_package_list(document, base_dir=os.path.dirname(os.path.abspath(path)))


def dependency_graph(packages: List[PackageDescriptor]) -> nx.DiGraph:
    """Edges point from a dependency to the package needing it"""
    graph = nx.DiGraph()
    graph.add_nodes_from(pkg.name for pkg in packages)
    for pkg in packages:
        for dep in pkg.dependencies:
            if dep not in graph:
                raise PackageListError(f"unknown dependency '{dep}'", entry=pkg.name)
            graph.add_edge(dep, pkg.name)
    return graph


def topo_schedule(packages: List[PackageDescriptor]) -> List[Set[str]]:
    """Group packages into build waves, leaf dependencies first"""
    graph = dependency_graph(packages)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = [u for u, _ in nx.find_cycle(graph)]
        raise CycleError(cycle)
    return [set(wave) for wave in nx.topological_generations(graph)]
