"""
Textual LLVM-IR model, parser and graph analyses
"""

from ir.cfg import Cfg, DomTree, Loop, LoopForest, analyze_loops, build_cfg, compute_dominators, find_natural_loops
from ir.extract import extract_function
from ir.model import IrBlock, IrFunction, IrGlobal, IrInstruction, IrModule, Opcode, OperandKind, OperandRef
from ir.parser import parse_module

__all__ = [
    "Cfg", "DomTree", "Loop", "LoopForest", "analyze_loops", "build_cfg", "compute_dominators",
    "find_natural_loops", "extract_function", "IrBlock", "IrFunction", "IrGlobal", "IrInstruction",
    "IrModule", "Opcode", "OperandKind", "OperandRef", "parse_module",
]
