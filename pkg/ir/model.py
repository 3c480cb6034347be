"""
Immutable model of the supported textual LLVM-IR subset
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, Optional, Tuple


class Opcode(str, Enum):
    ADD = "add"
    FADD = "fadd"
    SUB = "sub"
    FSUB = "fsub"
    MUL = "mul"
    FMUL = "fmul"
    UDIV = "udiv"
    SDIV = "sdiv"
    FDIV = "fdiv"
    UREM = "urem"
    SREM = "srem"
    FREM = "frem"
    SHL = "shl"
    LSHR = "lshr"
    ASHR = "ashr"
    AND = "and"
    OR = "or"
    XOR = "xor"
    ICMP = "icmp"
    FCMP = "fcmp"
    LOAD = "load"
    STORE = "store"
    ALLOCA = "alloca"
    GETELEMENTPTR = "getelementptr"
    PHI = "phi"
    SELECT = "select"
    CALL = "call"
    BR = "br"
    SWITCH = "switch"
    RET = "ret"
    UNREACHABLE = "unreachable"
    INVOKE = "invoke"
    BITCAST = "bitcast"
    TRUNC = "trunc"
    ZEXT = "zext"
    SEXT = "sext"
    FPTRUNC = "fptrunc"
    FPEXT = "fpext"
    FPTOUI = "fptoui"
    FPTOSI = "fptosi"
    UITOFP = "uitofp"
    SITOFP = "sitofp"
    PTRTOINT = "ptrtoint"
    INTTOPTR = "inttoptr"
    ADDRSPACECAST = "addrspacecast"
    EXTRACTVALUE = "extractvalue"
    INSERTVALUE = "insertvalue"
    EXTRACTELEMENT = "extractelement"
    INSERTELEMENT = "insertelement"
    SHUFFLEVECTOR = "shufflevector"
    FREEZE = "freeze"
    ATOMICRMW = "atomicrmw"
    CMPXCHG = "cmpxchg"
    FENCE = "fence"
    LANDINGPAD = "landingpad"
    RESUME = "resume"
    OTHER = "other"

    @classmethod
    def from_token(cls, token: str) -> "Opcode":
        return _OPCODE_BY_TOKEN.get(token, cls.OTHER)


_OPCODE_BY_TOKEN = {op.value: op for op in Opcode if op is not Opcode.OTHER}

# Stable numeric ids used by the structural hash; declaration order is frozen.
OPCODE_IDS: Dict[Opcode, int] = {op: index for index, op in enumerate(Opcode)}

INTEGER_ARITH = frozenset({
    Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.UDIV, Opcode.SDIV, Opcode.UREM, Opcode.SREM,
    Opcode.SHL, Opcode.LSHR, Opcode.ASHR, Opcode.AND, Opcode.OR, Opcode.XOR,
})
FLOAT_ARITH = frozenset({Opcode.FADD, Opcode.FSUB, Opcode.FMUL, Opcode.FDIV, Opcode.FREM})
CASTS = frozenset({
    Opcode.BITCAST, Opcode.TRUNC, Opcode.ZEXT, Opcode.SEXT, Opcode.FPTRUNC, Opcode.FPEXT,
    Opcode.FPTOUI, Opcode.FPTOSI, Opcode.UITOFP, Opcode.SITOFP, Opcode.PTRTOINT,
    Opcode.INTTOPTR, Opcode.ADDRSPACECAST,
})
COMPARES = frozenset({Opcode.ICMP, Opcode.FCMP})
CALLS = frozenset({Opcode.CALL, Opcode.INVOKE})

TERMINATORS = frozenset({Opcode.BR, Opcode.SWITCH, Opcode.RET, Opcode.UNREACHABLE,
                         Opcode.INVOKE, Opcode.RESUME})
# Terminators outside the supported enum; they parse as OTHER.
RAW_TERMINATORS = frozenset({"indirectbr", "callbr", "catchswitch", "catchret", "cleanupret"})


class OperandKind(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"
    CONSTANT_INT = "constant-int"
    CONSTANT_FP = "constant-fp"
    BLOCK_LABEL = "block-label"
    OTHER_CONSTANT = "other-constant"
    METADATA = "metadata"


@dataclass(frozen=True)
class OperandRef:
    kind: OperandKind
    text: str
    int_value: Optional[int] = None


@dataclass(frozen=True)
class IrInstruction:
    opcode: Opcode
    raw_opcode: str
    result_name: Optional[str]
    type_token: str
    operands: Tuple[OperandRef, ...]
    callee: Optional[str] = None
    is_intrinsic_call: bool = False
    is_debug_call: bool = False
    predicate: Optional[str] = None
    attributes: Tuple[str, ...] = ()
    metadata: Tuple[str, ...] = ()
    line: int = 0

    @property
    def name(self) -> str:
        """Opcode name, using the raw token for opcodes outside the supported set"""
        return self.raw_opcode if self.opcode is Opcode.OTHER else self.opcode.value

    @property
    def is_terminator(self) -> bool:
        if self.opcode is Opcode.OTHER:
            return self.raw_opcode in RAW_TERMINATORS
        return self.opcode in TERMINATORS

    @property
    def is_conditional_branch(self) -> bool:
        return self.opcode is Opcode.BR and len(self.label_operands) == 2

    @property
    def label_operands(self) -> Tuple[str, ...]:
        return tuple(op.text for op in self.operands if op.kind is OperandKind.BLOCK_LABEL)

    def successor_labels(self) -> Tuple[str, ...]:
        """Distinct branch targets in first-appearance order"""
        if not self.is_terminator:
            return ()
        seen = []
        for label in self.label_operands:
            if label not in seen:
                seen.append(label)
        return tuple(seen)


@dataclass(frozen=True)
class IrBlock:
    label: str
    instructions: Tuple[IrInstruction, ...]

    @property
    def terminator(self) -> Optional[IrInstruction]:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None


@dataclass(frozen=True)
class IrFunction:
    name: str
    params: Tuple[Tuple[str, Optional[str]], ...]
    return_type_token: str
    blocks: Tuple[IrBlock, ...]
    is_definition: bool
    is_vararg: bool = False
    header_refs: Tuple[str, ...] = ()
    attributes: Tuple[str, ...] = ()
    line: int = 0
    source: str = field(default="", repr=False, compare=False)

    def instructions(self) -> Iterator[IrInstruction]:
        for block in self.blocks:
            yield from block.instructions

    def counted_instructions(self) -> Iterator[IrInstruction]:
        """Instructions excluding debug intrinsic calls"""
        return (inst for inst in self.instructions() if not inst.is_debug_call)


@dataclass(frozen=True)
class IrGlobal:
    name: str
    type_token: str
    initializer_tokens: Tuple[str, ...]
    is_constant: bool
    line: int = 0
    source: str = field(default="", repr=False, compare=False)


@dataclass(frozen=True)
class IrModule:
    target_triple: Optional[str] = None
    datalayout: Optional[str] = None
    globals: Tuple[IrGlobal, ...] = ()
    functions: Tuple[IrFunction, ...] = ()
    declarations: Tuple[str, ...] = ()
    source_filename: Optional[str] = None
    type_defs: Dict[str, str] = field(default_factory=dict, repr=False, compare=False)
    attribute_groups: Dict[str, str] = field(default_factory=dict, repr=False, compare=False)
    metadata: Dict[str, str] = field(default_factory=dict, repr=False, compare=False)
    comdats: Dict[str, str] = field(default_factory=dict, repr=False, compare=False)
    aliases: Dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    def function(self, name: str) -> Optional[IrFunction]:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def global_var(self, name: str) -> Optional[IrGlobal]:
        for g in self.globals:
            if g.name == name:
                return g
        return None

    def defined_functions(self) -> Tuple[IrFunction, ...]:
        return tuple(fn for fn in self.functions if fn.is_definition)

    def instruction_count(self) -> int:
        return sum(1 for fn in self.defined_functions() for _ in fn.counted_instructions())
