"""
Control-flow graph, dominator tree and natural loop analyses
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx

from errors import AnalysisError
from ir.model import IrFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cfg:
    """Block-index adjacency; node 0 is the entry block"""
    labels: Tuple[str, ...]
    successors: Tuple[Tuple[int, ...], ...]
    predecessors: Tuple[Tuple[int, ...], ...]

    @classmethod
    def from_successors(cls, labels: Sequence[str], successors: Sequence[Sequence[int]]) -> "Cfg":
        preds: List[List[int]] = [[] for _ in labels]
        for source, targets in enumerate(successors):
            for target in targets:
                if source not in preds[target]:
                    preds[target].append(source)
        return cls(
            labels=tuple(labels),
            successors=tuple(tuple(dict.fromkeys(t)) for t in successors),
            predecessors=tuple(tuple(sorted(p)) for p in preds),
        )

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Tuple[int, int]]) -> "Cfg":
        successors: List[List[int]] = [[] for _ in range(node_count)]
        for source, target in edges:
            if target not in successors[source]:
                successors[source].append(target)
        return cls.from_successors([str(k) for k in range(node_count)], successors)

    def __len__(self) -> int:
        return len(self.labels)

    def edges(self) -> List[Tuple[int, int]]:
        return [(u, v) for u, targets in enumerate(self.successors) for v in targets]

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.labels)))
        graph.add_edges_from(self.edges())
        return graph


@dataclass(frozen=True)
class DomTree:
    """Immediate dominator per block; None marks blocks unreachable from the entry"""
    idom: Tuple[Optional[int], ...]
    unreachable: FrozenSet[int]

    def dominates(self, a: int, b: int) -> bool:
        if b in self.unreachable or a in self.unreachable:
            return False
        node = b
        while True:
            if node == a:
                return True
            parent = self.idom[node]
            if parent == node:
                return False
            node = parent

    def children(self) -> Dict[int, List[int]]:
        tree: Dict[int, List[int]] = defaultdict(list)
        for node, parent in enumerate(self.idom):
            if parent is not None and parent != node:
                tree[parent].append(node)
        return dict(tree)


@dataclass(frozen=True)
class Loop:
    header: int
    latches: Tuple[int, ...]
    body: FrozenSet[int]
    parent: Optional[int]
    depth: int


@dataclass(frozen=True)
class LoopForest:
    loops: Tuple[Loop, ...]

    @property
    def top_level_loop_count(self) -> int:
        return sum(1 for loop in self.loops if loop.parent is None)

    @property
    def max_loop_depth(self) -> int:
        return max((loop.depth for loop in self.loops), default=0)

    def loop_depth_of(self, block: int) -> int:
        return max((loop.depth for loop in self.loops if block in loop.body), default=0)


def build_cfg(fn: IrFunction) -> Cfg:
    if not fn.is_definition or not fn.blocks:
        raise AnalysisError(f"@{fn.name} is a declaration")
    index = {block.label: k for k, block in enumerate(fn.blocks)}
    successors: List[List[int]] = []
    for block in fn.blocks:
        targets: List[int] = []
        terminator = block.terminator
        if terminator is not None:
            for label in terminator.successor_labels():
                if label not in index:
                    raise AnalysisError(
                        f"@{fn.name}: branch to undefined label %{label} (line {terminator.line})")
                targets.append(index[label])
        successors.append(targets)
    return Cfg.from_successors([block.label for block in fn.blocks], successors)


def compute_dominators(cfg: Cfg) -> DomTree:
    if not len(cfg):
        return DomTree(idom=(), unreachable=frozenset())
    idoms = nx.immediate_dominators(cfg.to_networkx(), 0)
    # Older networkx omits the start node, newer maps it to itself.
    idoms[0] = 0
    idom = tuple(idoms.get(node) for node in range(len(cfg)))
    unreachable = frozenset(node for node in range(len(cfg)) if node not in idoms)
    if unreachable:
        logger.debug(f"{len(unreachable)} unreachable block(s) excluded from dominator tree")
    return DomTree(idom=idom, unreachable=unreachable)


def find_natural_loops(cfg: Cfg, domtree: DomTree) -> LoopForest:
    latches: Dict[int, List[int]] = defaultdict(list)
    for source, targets in enumerate(cfg.successors):
        if source in domtree.unreachable:
            continue
        for header in targets:
            if domtree.dominates(header, source):
                latches[header].append(source)

    found: List[Tuple[int, Tuple[int, ...], FrozenSet[int]]] = []
    for header in sorted(latches):
        body = {header}
        stack = [latch for latch in latches[header] if latch != header]
        while stack:
            node = stack.pop()
            if node in body:
                continue
            body.add(node)
            stack.extend(p for p in cfg.predecessors[node]
                         if p not in body and p not in domtree.unreachable)
        found.append((header, tuple(sorted(latches[header])), frozenset(body)))

    parents: List[Optional[int]] = []
    for k, (header, _, body) in enumerate(found):
        enclosing = [m for m, (_, _, other) in enumerate(found)
                     if m != k and header in other and body < other]
        parents.append(min(enclosing, key=lambda m: (len(found[m][2]), found[m][0])) if enclosing else None)

    def depth(k: int) -> int:
        level = 1
        while parents[k] is not None:
            k = parents[k]
            level += 1
        return level

    return LoopForest(loops=tuple(
        Loop(header=header, latches=latch_list, body=body, parent=parents[k], depth=depth(k))
        for k, (header, latch_list, body) in enumerate(found)
    ))


def analyze_loops(fn: IrFunction) -> Tuple[Cfg, DomTree, LoopForest]:
    cfg = build_cfg(fn)
    domtree = compute_dominators(cfg)
    return cfg, domtree, find_natural_loops(cfg, domtree)
