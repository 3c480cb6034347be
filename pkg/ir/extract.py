"""
Function slicing: cut one definition out of a module into a standalone module
"""

import logging
import re
from typing import List, Set

from errors import SymbolNotFoundError
from ir.model import IrFunction, IrGlobal, IrModule
from ir.parser import parse_module, strip_comment, tokenize, unsigil

logger = logging.getLogger(__name__)

_BARE_SYMBOL_RE = re.compile(r"[-a-zA-Z$._][-a-zA-Z$._0-9]*|[0-9]+")
# Named metadata a loadable module keeps regardless of what the function references.
_MODULE_METADATA = ("!llvm.module.flags", "!llvm.dbg.cu", "!llvm.ident")


def symbol(name: str, sigil: str = "@") -> str:
    if _BARE_SYMBOL_RE.fullmatch(name):
        return f"{sigil}{name}"
    return f'{sigil}"{name}"'


def declaration_text(fn: IrFunction) -> str:
    params = [param_type for param_type, _ in fn.params]
    if fn.is_vararg:
        params.append("...")
    return f"declare {fn.return_type_token} {symbol(fn.name)}({', '.join(params)})"


def external_global_text(g: IrGlobal) -> str:
    kind = "constant" if g.is_constant else "global"
    return f"{symbol(g.name)} = external {kind} {g.type_token}"


class _Slice:
    """Transitive closure of everything one function refers to"""

    def __init__(self, module: IrModule, root: IrFunction):
        self.module = module
        self.root = root
        self.symbols: Set[str] = set()
        self.types: Set[str] = set()
        self.nodes: Set[str] = set()
        self.groups: Set[str] = set()
        self.comdats: Set[str] = set()
        self._pending: List[str] = []

    def collect(self) -> None:
        self._pending.append(self.root.source)
        for key in _MODULE_METADATA:
            if key in self.module.metadata:
                self.nodes.add(key)
                self._pending.append(self.module.metadata[key])
        while self._pending:
            for line in self._pending.pop().splitlines():
                self._visit(tokenize(strip_comment(line)))

    def _visit(self, tokens) -> None:
        module = self.module
        for k, tok in enumerate(tokens):
            if tok.kind == "global":
                name = unsigil(tok.text)
                if name != self.root.name and name not in self.symbols:
                    self.symbols.add(name)
                    self._declare(name)
            elif tok.kind == "local":
                if tok.text in module.type_defs and tok.text not in self.types:
                    self.types.add(tok.text)
                    self._pending.append(module.type_defs[tok.text])
            elif tok.kind == "metadata":
                if tok.text in module.metadata and tok.text not in self.nodes:
                    self.nodes.add(tok.text)
                    self._pending.append(module.metadata[tok.text])
            elif tok.kind == "attribute":
                self.groups.add(tok.text)
            elif tok.kind == "comdat":
                self.comdats.add(tok.text)
            elif tok.kind == "word" and tok.text == "comdat":
                if k + 1 >= len(tokens) or tokens[k + 1].text != "(":
                    self.comdats.add(symbol(self.root.name, "$"))

    def _declare(self, name: str) -> None:
        g = self.module.global_var(name)
        if g is not None:
            self._pending.append(external_global_text(g))
            return
        fn = self.module.function(name)
        if fn is not None:
            self._pending.append(declaration_text(fn))
            return
        if not any(unsigil(key) == name for key in self.module.aliases):
            logger.warning(f"Symbol @{name} referenced by @{self.root.name} is not defined in the module")


def extract_function(module_text: str, function_name: str) -> str:
    """Return a standalone module holding only `function_name` and what it needs"""
    module = parse_module(module_text)
    root = module.function(function_name)
    if root is None or not root.is_definition:
        raise SymbolNotFoundError(f"function @{function_name} is not defined in the module")

    refs = _Slice(module, root)
    refs.collect()

    sections: List[List[str]] = []
    header = []
    if module.source_filename is not None:
        header.append(f'source_filename = "{module.source_filename}"')
    if module.datalayout is not None:
        header.append(f'target datalayout = "{module.datalayout}"')
    if module.target_triple is not None:
        header.append(f'target triple = "{module.target_triple}"')
    sections.append(header)
    sections.append([text for key, text in module.type_defs.items() if key in refs.types])
    sections.append([text for key, text in module.comdats.items() if key in refs.comdats])
    globals_ = [external_global_text(g) for g in module.globals if g.name in refs.symbols]
    # Aliases are not sliced through; callers only need an addressable symbol.
    globals_ += [f"{key} = external global i8" for key in module.aliases if unsigil(key) in refs.symbols]
    sections.append(globals_)
    sections.append([root.source])
    sections.append([declaration_text(fn) for fn in module.functions
                     if fn.name in refs.symbols and fn.name != root.name])
    sections.append([text for key, text in module.attribute_groups.items() if key in refs.groups])
    sections.append([text for key, text in module.metadata.items() if key in refs.nodes])

    logger.debug(f"Extracted @{function_name} with {len(refs.symbols)} referenced symbol(s)")
    return "\n\n".join("\n".join(lines) for lines in sections if lines) + "\n"
