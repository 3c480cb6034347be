"""
Parser for a pragmatic subset of textual LLVM-IR

Types are kept as opaque canonical token strings; metadata attachments,
attribute groups and comdats are captured by name but stay out of the
instruction operand lists.
"""

import logging
import re
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple

from errors import IrParseError
from ir.model import (
    CALLS, COMPARES, IrBlock, IrFunction, IrGlobal, IrInstruction, IrModule, Opcode,
    OperandKind, OperandRef,
)

logger = logging.getLogger(__name__)


class Token(NamedTuple):
    kind: str
    text: str


_TOKEN_RE = re.compile(r"""
    (?P<string>c?"[^"]*")
  | (?P<local>%(?:"[^"]*"|[-a-zA-Z$._0-9]+))
  | (?P<global>@(?:"[^"]*"|[-a-zA-Z$._0-9]+))
  | (?P<comdat>\$(?:"[^"]*"|[-a-zA-Z$._0-9]+))
  | (?P<metadata>!(?:"[^"]*"|[-a-zA-Z$._0-9]+)?)
  | (?P<attribute>\#[0-9]+)
  | (?P<float>[-+]?0x[KLMHR]?[0-9A-Fa-f]+|[-+]?[0-9]+\.[0-9]*(?:[eE][-+]?[0-9]+)?)
  | (?P<integer>[-+]?[0-9]+)
  | (?P<word>[A-Za-z_][-A-Za-z0-9_.]*)
  | (?P<punct>\.\.\.|[,()\[\]{}<>=*:|])
  | (?P<space>\s+)
  | (?P<junk>.)
""", re.VERBOSE)

_PRIMITIVE_TYPE_RE = re.compile(
    r"i\d+|ptr|void|half|bfloat|float|double|fp128|x86_fp80|ppc_fp128|label|metadata|token"
    r"|x86_amx|x86_mmx|opaque"
)
_TYPE_GROUP_WORDS = frozenset({"x", "addrspace", "vscale"})
_INT_ATTRIBUTE_WORDS = frozenset({
    "align", "alignstack", "dereferenceable", "dereferenceable_or_null", "addrspace",
    "vscale_range", "allocsize", "range", "allockind", "memory", "nofpclass",
})
_SKIP_GROUP_WORDS = frozenset({"blockaddress", "dso_local_equivalent", "no_cfi", "syncscope"})
_OTHER_CONSTANT_WORDS = frozenset({"null", "none", "undef", "poison", "zeroinitializer"})
_FAST_MATH_FLAGS = frozenset({"nnan", "ninf", "nsz", "arcp", "contract", "afn", "reassoc", "fast", "samesign"})
_TAIL_MARKERS = frozenset({"tail", "musttail", "notail"})
_CONTINUATIONS = ("to label", "unwind ", "catch ", "filter ", "cleanup")
_OPENERS = "([{<"
_CLOSERS = ")]}>"

_LABEL_RE = re.compile(r'("[^"]*"|[-a-zA-Z$._0-9]+):')
_OLD_LABEL_RE = re.compile(r"^;\s*<label>:(\d+)")
# Debug records (#dbg_value, #dbg_declare, ...) replace llvm.dbg.* calls in newer IR.
_DEBUG_RECORD = "#dbg_"
_TYPE_DEF_RE = re.compile(r'^\s*(%(?:"[^"]*"|[-a-zA-Z$._0-9]+))\s*=\s*type\b')
_TRIPLE_RE = re.compile(r'^target\s+triple\s*=\s*"([^"]*)"')
_DATALAYOUT_RE = re.compile(r'^target\s+datalayout\s*=\s*"([^"]*)"')
_SOURCE_FILENAME_RE = re.compile(r'^source_filename\s*=\s*"([^"]*)"')


def tokenize(text: str) -> List[Token]:
    return [
        Token(m.lastgroup, m.group())
        for m in _TOKEN_RE.finditer(text)
        if m.lastgroup not in ("space", "junk")
    ]


def unsigil(text: str) -> str:
    """Strip the leading sigil and surrounding quotes from a symbol token"""
    name = text[1:]
    if len(name) >= 2 and name[0] == '"' and name[-1] == '"':
        name = name[1:-1]
    return name


def strip_comment(line: str) -> str:
    in_string = False
    for index, ch in enumerate(line):
        if ch == '"':
            in_string = not in_string
        elif ch == ";" and not in_string:
            return line[:index]
    return line


def _bracket_balance(text: str) -> int:
    depth = 0
    in_string = False
    for ch in text:
        if ch == '"':
            in_string = not in_string
        elif not in_string:
            if ch in "([{":
                depth += 1
            elif ch in ")]}":
                depth -= 1
    return depth


def _match_close(tokens: Sequence[Token], index: int) -> Optional[int]:
    """Index just past the bracket closing the one at `index`"""
    depth = 0
    for k in range(index, len(tokens)):
        text = tokens[k].text
        if tokens[k].kind != "punct":
            continue
        if text in _OPENERS:
            depth += 1
        elif text in _CLOSERS:
            depth -= 1
            if depth == 0:
                return k + 1
    return None


def _is_type_group(tokens: Sequence[Token], lo: int, hi: int, type_names: Set[str]) -> bool:
    k = lo
    while k < hi:
        tok = tokens[k]
        if tok.kind == "integer":
            if k + 1 < hi and tokens[k + 1].text == "x":
                k += 2
                continue
            if k >= 2 and tokens[k - 1].text == "(" and tokens[k - 2].text == "addrspace":
                k += 1
                continue
            return False
        if tok.kind == "word":
            if not (_PRIMITIVE_TYPE_RE.fullmatch(tok.text) or tok.text in _TYPE_GROUP_WORDS):
                return False
        elif tok.kind == "local":
            if tok.text not in type_names:
                return False
        elif tok.kind != "punct":
            return False
        k += 1
    return True


def read_type(tokens: Sequence[Token], index: int, type_names: Set[str]) -> Optional[Tuple[str, int]]:
    """Read one type starting at `index`; return its canonical text and the next index"""
    n = len(tokens)
    if index >= n:
        return None
    tok = tokens[index]
    if tok.kind == "word" and _PRIMITIVE_TYPE_RE.fullmatch(tok.text):
        j = index + 1
    elif tok.kind == "local" and tok.text in type_names:
        j = index + 1
    elif tok.kind == "punct" and tok.text in "[{<":
        j = _match_close(tokens, index)
        if j is None or not _is_type_group(tokens, index + 1, j - 1, type_names):
            return None
    else:
        return None

    while j < n:
        nxt = tokens[j]
        if nxt.kind == "word" and nxt.text == "addrspace" and j + 1 < n and tokens[j + 1].text == "(":
            j = _match_close(tokens, j + 1) or n
        elif nxt.text == "*" and nxt.kind == "punct":
            j += 1
        elif nxt.text == "(" and nxt.kind == "punct":
            close = _match_close(tokens, j)
            if (close is not None and close < n and tokens[close].text == "*"
                    and _is_type_group(tokens, j + 1, close - 1, type_names)):
                j = close
            else:
                break
        else:
            break
    return " ".join(t.text for t in tokens[index:j]), j


def _split_attachments(tokens: List[Token]) -> Tuple[List[Token], Tuple[str, ...]]:
    depth = 0
    for k, tok in enumerate(tokens):
        if tok.kind == "punct":
            if tok.text in _OPENERS:
                depth += 1
            elif tok.text in _CLOSERS:
                depth -= 1
            elif (tok.text == "," and depth == 0 and k + 1 < len(tokens)
                  and tokens[k + 1].kind == "metadata" and tokens[k + 1].text[1:2].isalpha()):
                attached = tuple(t.text for t in tokens[k + 1:] if t.kind == "metadata")
                return tokens[:k], attached
    return tokens, ()


def _find_callee(tokens: Sequence[Token]) -> Tuple[bool, Optional[str]]:
    """Locate the called value; returns (found, direct callee name)"""
    depth = 0
    for k, tok in enumerate(tokens):
        if tok.kind == "punct":
            if tok.text in _OPENERS:
                depth += 1
            elif tok.text in _CLOSERS:
                depth -= 1
            continue
        if depth == 0 and tok.kind in ("global", "local") and k + 1 < len(tokens) and tokens[k + 1].text == "(":
            if tok.kind == "global":
                return True, unsigil(tok.text)
            return True, None
    return False, None


def _scan_operands(tokens: Sequence[Token], type_names: Set[str],
                   opcode: Opcode) -> Tuple[List[OperandRef], str, List[str]]:
    operands: List[OperandRef] = []
    attributes: List[str] = []
    type_token: Optional[str] = None
    depth = 0
    i, n = 0, len(tokens)
    while i < n:
        tok = tokens[i]
        if tok.kind == "word" and tok.text == "label" and i + 1 < n and tokens[i + 1].kind == "local":
            operands.append(OperandRef(OperandKind.BLOCK_LABEL, unsigil(tokens[i + 1].text)))
            i += 2
            continue
        typed = read_type(tokens, i, type_names)
        if typed is not None:
            if type_token is None:
                type_token = typed[0]
            i = typed[1]
            continue

        kind, text = tok
        if kind == "word":
            if text in _INT_ATTRIBUTE_WORDS or text in _SKIP_GROUP_WORDS:
                if i + 1 < n and tokens[i + 1].text == "(":
                    i = _match_close(tokens, i + 1) or n
                    continue
                if i + 1 < n and tokens[i + 1].kind == "integer":
                    i += 2
                    continue
            elif text in ("true", "false"):
                operands.append(OperandRef(OperandKind.CONSTANT_INT, text, 1 if text == "true" else 0))
            elif text in _OTHER_CONSTANT_WORDS:
                operands.append(OperandRef(OperandKind.OTHER_CONSTANT, text))
        elif kind == "local":
            name = unsigil(text)
            if opcode is Opcode.PHI and depth == 1 and i + 1 < n and tokens[i + 1].text == "]":
                operands.append(OperandRef(OperandKind.BLOCK_LABEL, name))
            else:
                operands.append(OperandRef(OperandKind.LOCAL, name))
        elif kind == "global":
            operands.append(OperandRef(OperandKind.GLOBAL, unsigil(text)))
        elif kind == "integer":
            operands.append(OperandRef(OperandKind.CONSTANT_INT, text, int(text)))
        elif kind == "float":
            operands.append(OperandRef(OperandKind.CONSTANT_FP, text))
        elif kind == "metadata":
            operands.append(OperandRef(OperandKind.METADATA, text))
        elif kind == "attribute":
            attributes.append(text)
        elif kind == "string":
            if text.startswith('c"'):
                operands.append(OperandRef(OperandKind.OTHER_CONSTANT, text))
        elif kind == "punct":
            if text in _OPENERS:
                depth += 1
            elif text in _CLOSERS:
                depth -= 1
        i += 1
    return operands, type_token or "", attributes


def parse_instruction(text: str, line: int, type_names: Set[str]) -> IrInstruction:
    if text.startswith(_DEBUG_RECORD):
        record = text.split("(", 1)[0]
        return IrInstruction(opcode=Opcode.OTHER, raw_opcode=record, result_name=None, type_token="", operands=(),
                             is_debug_call=True, line=line)
    tokens, attachments = _split_attachments(tokenize(text))
    result_name = None
    if len(tokens) >= 2 and tokens[0].kind == "local" and tokens[1].text == "=":
        result_name = unsigil(tokens[0].text)
        tokens = tokens[2:]
    while tokens and tokens[0].kind == "word" and tokens[0].text in _TAIL_MARKERS:
        tokens = tokens[1:]
    if not tokens or tokens[0].kind != "word":
        raise IrParseError(f"cannot parse instruction '{text.strip()}'", line)

    raw_opcode = tokens[0].text
    opcode = Opcode.from_token(raw_opcode)
    rest = list(tokens[1:])

    predicate = None
    if opcode in COMPARES:
        k = 0
        while k < len(rest) and rest[k].kind == "word" and rest[k].text in _FAST_MATH_FLAGS:
            k += 1
        if k < len(rest) and rest[k].kind == "word":
            predicate = rest[k].text
            del rest[k]

    callee = None
    if opcode in CALLS or raw_opcode == "callbr":
        _, callee = _find_callee(rest)

    operands, type_token, attributes = _scan_operands(rest, type_names, opcode)
    is_intrinsic = callee is not None and callee.startswith("llvm.")
    return IrInstruction(
        opcode=opcode,
        raw_opcode=raw_opcode,
        result_name=result_name,
        type_token=type_token,
        operands=tuple(operands),
        callee=callee,
        is_intrinsic_call=is_intrinsic,
        is_debug_call=is_intrinsic and callee.startswith("llvm.dbg."),
        predicate=predicate,
        attributes=tuple(attributes),
        metadata=attachments,
        line=line,
    )


def _split_top_level(tokens: Sequence[Token]) -> List[List[Token]]:
    parts: List[List[Token]] = [[]]
    depth = 0
    for tok in tokens:
        if tok.kind == "punct":
            if tok.text in _OPENERS:
                depth += 1
            elif tok.text in _CLOSERS:
                depth -= 1
            elif tok.text == "," and depth == 0:
                parts.append([])
                continue
        parts[-1].append(tok)
    return [p for p in parts if p]


class _Header(NamedTuple):
    name: str
    return_type: str
    params: Tuple[Tuple[str, Optional[str]], ...]
    is_vararg: bool
    refs: Tuple[str, ...]
    attributes: Tuple[str, ...]


def _parse_header(text: str, line: int, type_names: Set[str]) -> _Header:
    tokens = tokenize(text)
    name_index = None
    for k in range(1, len(tokens) - 1):
        if tokens[k].kind == "global" and tokens[k + 1].text == "(":
            name_index = k
            break
    if name_index is None:
        raise IrParseError("function header without a name", line)
    close = _match_close(tokens, name_index + 1)
    if close is None:
        raise IrParseError("unbalanced parameter list", line)

    return_type = ""
    k = 1
    while k < name_index:
        typed = read_type(tokens[:name_index], k, type_names)
        if typed is None:
            k += 1
            continue
        return_type, k = typed

    params: List[Tuple[str, Optional[str]]] = []
    is_vararg = False
    for part in _split_top_level(tokens[name_index + 2:close - 1]):
        if len(part) == 1 and part[0].text == "...":
            is_vararg = True
            continue
        typed = read_type(part, 0, type_names)
        param_type = typed[0] if typed else part[0].text
        last = part[-1]
        param_name = unsigil(last.text) if last.kind == "local" and last.text not in type_names else None
        params.append((param_type, param_name))

    trailing = tokens[close:]
    return _Header(
        name=unsigil(tokens[name_index].text),
        return_type=return_type,
        params=tuple(params),
        is_vararg=is_vararg,
        refs=tuple(unsigil(t.text) for t in trailing if t.kind == "global"),
        attributes=tuple(t.text for t in trailing if t.kind == "attribute"),
    )


def _parse_global(text: str, line: int, type_names: Set[str]) -> Optional[IrGlobal]:
    tokens = tokenize(text)
    if len(tokens) < 3 or tokens[1].text != "=":
        raise IrParseError(f"malformed global '{text.strip()}'", line)
    rest = tokens[2:]
    keyword_index = None
    for k, tok in enumerate(rest):
        if tok.kind == "word" and tok.text in ("alias", "ifunc"):
            return None
        if tok.kind == "word" and tok.text in ("global", "constant"):
            keyword_index = k
            break
    if keyword_index is None:
        raise IrParseError(f"global without 'global' or 'constant': '{text.strip()}'", line)

    after = rest[keyword_index + 1:]
    typed = read_type(after, 0, type_names)
    if typed is None:
        raise IrParseError(f"cannot read type of global {tokens[0].text}", line)
    type_token, j = typed

    initializer: List[str] = []
    depth = 0
    for tok in after[j:]:
        if tok.kind == "punct":
            if tok.text == "," and depth == 0:
                break
            if tok.text in _OPENERS:
                depth += 1
            elif tok.text in _CLOSERS:
                depth -= 1
        initializer.append(tok.text)
    return IrGlobal(
        name=unsigil(tokens[0].text),
        type_token=type_token,
        initializer_tokens=tuple(initializer),
        is_constant=rest[keyword_index].text == "constant",
        line=line,
        source=text.strip(),
    )


def _body_entries(lines: Sequence[str], start: int, end: int) -> List[Tuple[str, str, int]]:
    """Split a function body into ('label'|'inst', text, line) entries"""
    entries: List[Tuple[str, str, int]] = []
    pending: Optional[List] = None
    for index in range(start, end):
        raw = lines[index]
        line_no = index + 1
        old_label = _OLD_LABEL_RE.match(raw.strip())
        if old_label and pending is None:
            entries.append(("label", old_label.group(1), line_no))
            continue
        stripped = strip_comment(raw).strip()
        if pending is not None:
            pending[0] += " " + stripped
            if _bracket_balance(pending[0]) <= 0:
                entries.append(("inst", pending[0], pending[1]))
                pending = None
            continue
        if not stripped:
            continue
        label = _LABEL_RE.fullmatch(stripped)
        if label:
            name = label.group(1)
            entries.append(("label", name[1:-1] if name.startswith('"') else name, line_no))
            continue
        if stripped.startswith(_CONTINUATIONS) and entries and entries[-1][0] == "inst":
            kind, text, first_line = entries[-1]
            entries[-1] = (kind, text + " " + stripped, first_line)
            continue
        if _bracket_balance(stripped) > 0:
            pending = [stripped, line_no]
            continue
        entries.append(("inst", stripped, line_no))
    if pending is not None:
        raise IrParseError("unterminated instruction", pending[1])
    return entries


def _build_function(header: _Header, entries: List[Tuple[str, str, int]], type_names: Set[str],
                    line: int, source: str) -> IrFunction:
    # Unnamed parameters take the next slot numbers; the entry block follows them.
    param_values: List[str] = []
    slot = 0
    for _, name in header.params:
        if name is None:
            name = str(slot)
        if name.isdigit():
            slot = int(name) + 1
        param_values.append(name)
    implicit_entry = str(slot)
    blocks: List[IrBlock] = []
    label: Optional[str] = None
    current: List[IrInstruction] = []
    labels_seen: Set[str] = set()

    def close_block() -> None:
        block_label = label if label is not None else implicit_entry
        if not current:
            raise IrParseError(f"empty block %{block_label} in @{header.name}", line)
        blocks.append(IrBlock(block_label, tuple(current)))

    for kind, text, line_no in entries:
        if kind == "label":
            if text in labels_seen:
                raise IrParseError(f"duplicate label %{text} in @{header.name}", line_no)
            labels_seen.add(text)
            if current or label is not None:
                close_block()
            label = text
            current = []
            continue
        inst = parse_instruction(text, line_no, type_names)
        if current and current[-1].is_terminator:
            raise IrParseError(f"instruction after terminator in @{header.name}", line_no)
        current.append(inst)
    if current or label is not None:
        close_block()
    if not blocks:
        raise IrParseError(f"function @{header.name} has no body", line)

    defined: Set[str] = set(param_values)
    defined.update(block.label for block in blocks)
    values: Set[str] = set(param_values)
    for block in blocks:
        for inst in block.instructions:
            if inst.result_name is None:
                continue
            if inst.result_name in values:
                raise IrParseError(f"redefinition of %{inst.result_name} in @{header.name}", inst.line)
            values.add(inst.result_name)
    defined |= values
    for block in blocks:
        for inst in block.instructions:
            for op in inst.operands:
                if op.kind is OperandKind.LOCAL and op.text not in defined:
                    raise IrParseError(f"use of undefined value %{op.text} in @{header.name}", inst.line)

    return IrFunction(
        name=header.name,
        params=header.params,
        return_type_token=header.return_type,
        blocks=tuple(blocks),
        is_definition=True,
        is_vararg=header.is_vararg,
        header_refs=header.refs,
        attributes=header.attributes,
        line=line,
        source=source,
    )


def _collect_type_names(lines: Sequence[str]) -> Set[str]:
    names = set()
    for raw in lines:
        m = _TYPE_DEF_RE.match(raw)
        if m:
            names.add(m.group(1))
    return names


def _join_while(lines: Sequence[str], index: int, needs_more) -> Tuple[str, int]:
    """Join stripped lines from `index` while `needs_more(text)` holds; returns text and last index"""
    text = strip_comment(lines[index]).strip()
    while needs_more(text) and index + 1 < len(lines):
        index += 1
        text += " " + strip_comment(lines[index]).strip()
    return text, index


def parse_module(text: str) -> IrModule:
    """Parse module text into an IrModule"""
    lines = text.splitlines()
    type_names = _collect_type_names(lines)

    triple = datalayout = source_filename = None
    globals_: List[IrGlobal] = []
    functions: List[IrFunction] = []
    declarations: List[str] = []
    type_defs: Dict[str, str] = {}
    attribute_groups: Dict[str, str] = {}
    metadata: Dict[str, str] = {}
    comdats: Dict[str, str] = {}
    aliases: Dict[str, str] = {}
    function_names: Set[str] = set()

    def add_function(fn: IrFunction) -> None:
        if fn.name in function_names:
            raise IrParseError(f"duplicate function @{fn.name}", fn.line)
        function_names.add(fn.name)
        functions.append(fn)

    index = 0
    while index < len(lines):
        line_no = index + 1
        stripped = strip_comment(lines[index]).strip()
        if not stripped:
            index += 1
            continue

        if stripped.startswith("define"):
            header_text, index = _join_while(lines, index, lambda s: not s.endswith("{"))
            if not header_text.endswith("{"):
                raise IrParseError("function header without body", line_no)
            header = _parse_header(header_text[:-1], line_no, type_names)
            body_start = index + 1
            end = body_start
            while end < len(lines) and strip_comment(lines[end]).strip() != "}":
                if strip_comment(lines[end]).strip().startswith("define"):
                    end = len(lines)
                    break
                end += 1
            if end >= len(lines):
                raise IrParseError(f"unterminated function body of @{header.name}", line_no)
            entries = _body_entries(lines, body_start, end)
            source = "\n".join(lines[line_no - 1:end + 1])
            add_function(_build_function(header, entries, type_names, line_no, source))
            index = end + 1
            continue

        if stripped.startswith("declare"):
            header_text, index = _join_while(lines, index, lambda s: _bracket_balance(s) > 0)
            header = _parse_header(header_text, line_no, type_names)
            add_function(IrFunction(
                name=header.name,
                params=header.params,
                return_type_token=header.return_type,
                blocks=(),
                is_definition=False,
                is_vararg=header.is_vararg,
                attributes=header.attributes,
                line=line_no,
                source=header_text,
            ))
            declarations.append(header.name)
            index += 1
            continue

        joined, index = _join_while(lines, index, lambda s: _bracket_balance(s) > 0)
        if _TRIPLE_RE.match(joined):
            triple = _TRIPLE_RE.match(joined).group(1)
        elif _DATALAYOUT_RE.match(joined):
            datalayout = _DATALAYOUT_RE.match(joined).group(1)
        elif _SOURCE_FILENAME_RE.match(joined):
            source_filename = _SOURCE_FILENAME_RE.match(joined).group(1)
        elif _TYPE_DEF_RE.match(joined):
            type_defs[_TYPE_DEF_RE.match(joined).group(1)] = joined
        elif joined.startswith("@"):
            parsed = _parse_global(joined, line_no, type_names)
            if parsed is None:
                aliases[tokenize(joined)[0].text] = joined
            else:
                globals_.append(parsed)
        elif joined.startswith("$"):
            comdats[joined.split("=", 1)[0].strip()] = joined
        elif joined.startswith("!"):
            metadata[joined.split("=", 1)[0].strip()] = joined
        elif joined.startswith("attributes"):
            key = joined.split("=", 1)[0].split()[-1]
            attribute_groups[key] = joined
        else:
            logger.debug(f"Skipping unsupported top-level construct at line {line_no}: {joined[:60]}")
        index += 1

    return IrModule(
        target_triple=triple,
        datalayout=datalayout,
        globals=tuple(globals_),
        functions=tuple(functions),
        declarations=tuple(declarations),
        source_filename=source_filename,
        type_defs=type_defs,
        attribute_groups=attribute_groups,
        metadata=metadata,
        comdats=comdats,
        aliases=aliases,
    )
