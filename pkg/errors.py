"""
Exception hierarchy shared by every ir-forge module
"""

from typing import List, Optional, Sequence


class IrForgeError(Exception):
    """Base class for all errors raised by ir-forge operations"""


class InvalidInputError(IrForgeError):
    """An argument or document failed validation"""


class PackageListError(InvalidInputError):
    """Malformed or inconsistent package list"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 entry: Optional[str] = None):
        self.line = line
        self.column = column
        self.entry = entry
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        elif entry is not None:
            message = f"entry '{entry}': {message}"
        super().__init__(message)


class CycleError(IrForgeError):
    """Dependency graph contains a cycle"""

    def __init__(self, cycle: Sequence[str]):
        self.cycle: List[str] = list(cycle)
        super().__init__(f"dependency cycle: {' -> '.join(self.cycle + self.cycle[:1])}")


class ToolUnavailableError(IrForgeError):
    """An external tool is not configured or not executable"""


class ToolError(IrForgeError):
    """An external tool ran and failed"""

    def __init__(self, tool: str, diagnostic: str, returncode: Optional[int] = None):
        self.tool = tool
        self.diagnostic = diagnostic
        self.returncode = returncode
        super().__init__(f"{tool} failed (exit {returncode}): {diagnostic.strip()[:2000]}")


class ExtractionError(IrForgeError):
    """Bitcode could not be extracted from an object file"""


class SectionNotFoundError(ExtractionError):
    pass


class CorruptSectionError(ExtractionError):
    pass


class IrParseError(IrForgeError):
    """Textual IR outside the supported subset or structurally invalid"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AnalysisError(IrForgeError):
    """CFG-level analysis failed (e.g. branch to an undefined label)"""


class SymbolNotFoundError(IrForgeError):
    """Requested function or symbol is not defined"""


class CorpusError(IrForgeError):
    """Corpus directory or manifest problem"""
