"""
Toolchain configuration and external tool operations module
"""

import asyncio
import logging
import os
import shutil
import subprocess
from typing import Dict, List, NamedTuple, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError

from errors import InvalidInputError, ToolError, ToolUnavailableError
from models import TOOL_VERSION, ToolchainReport, ToolStatus

logger = logging.getLogger(__name__)

# Config field -> environment variable; config files accept either spelling.
ENV_KEYS: Dict[str, str] = {
    "compiler_path": "IRFORGE_CC",
    "cxx_compiler_path": "IRFORGE_CXX",
    "disassembler_path": "IRFORGE_DIS",
    "optimizer_path": "IRFORGE_OPT",
    "cargo_path": "IRFORGE_CARGO",
    "swift_path": "IRFORGE_SWIFT",
    "jobs": "IRFORGE_JOBS",
    "out_dir": "IRFORGE_OUT",
    "build_timeout": "IRFORGE_BUILD_TIMEOUT",
}

TOOL_FIELDS: Dict[str, str] = {
    "cc": "compiler_path",
    "cxx": "cxx_compiler_path",
    "dis": "disassembler_path",
    "opt": "optimizer_path",
    "cargo": "cargo_path",
    "swift": "swift_path",
}


class ToolchainConfig(BaseModel):
    compiler_path: Optional[str] = Field(None, description="LLVM-based C compiler driver")
    cxx_compiler_path: Optional[str] = Field(None, description="C++ driver; derived from the C driver when unset")
    disassembler_path: Optional[str] = Field(None, description="llvm-dis compatible disassembler")
    optimizer_path: Optional[str] = Field(None, description="opt compatible optimizer")
    cargo_path: Optional[str] = None
    swift_path: Optional[str] = None
    jobs: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    out_dir: str = "corpus"
    build_timeout: float = Field(3600.0, gt=0)
    tool_version: str = TOOL_VERSION

    def tool_path(self, tool: str) -> Optional[str]:
        path = getattr(self, TOOL_FIELDS[tool])
        if tool == "cxx" and path is None and self.compiler_path:
            path = _derive_cxx(self.compiler_path)
        return path


def _derive_cxx(cc: str) -> str:
    head, tail = os.path.split(cc)
    if tail.startswith("clang") and not tail.startswith("clang++"):
        return os.path.join(head, "clang++" + tail[len("clang"):])
    return cc


def load_config(config_file: Optional[str] = None, **overrides) -> ToolchainConfig:
    """Resolve configuration: defaults < config file < environment < explicit overrides"""
    values: Dict[str, object] = {}
    if config_file:
        if not os.path.isfile(config_file):
            raise InvalidInputError(f"config file not found: {config_file}")
        file_values = dotenv_values(config_file)
        for field, env_key in ENV_KEYS.items():
            value = file_values.get(field) or file_values.get(env_key)
            if value:
                values[field] = value
    for field, env_key in ENV_KEYS.items():
        value = os.getenv(env_key)
        if value:
            values[field] = value
    for field, value in overrides.items():
        if value is not None:
            values[field] = value
    try:
        return ToolchainConfig(**values)
    except ValidationError as e:
        raise InvalidInputError(f"invalid configuration: {e}") from e


def resolve_executable(path: Optional[str]) -> Optional[str]:
    if not path:
        return None
    return shutil.which(path)


def require_tool(config: ToolchainConfig, tool: str) -> str:
    path = config.tool_path(tool)
    resolved = resolve_executable(path)
    if resolved is None:
        if path:
            raise ToolUnavailableError(f"{tool}: '{path}' is not an executable file")
        raise ToolUnavailableError(f"{tool}: not configured (set {ENV_KEYS[TOOL_FIELDS[tool]]})")
    return resolved


def _probe_one(path: Optional[str]) -> ToolStatus:
    if not path:
        return ToolStatus(diagnostic="not configured")
    resolved = resolve_executable(path)
    if resolved is None:
        return ToolStatus(path=path, diagnostic=f"'{path}' is not an executable file")
    try:
        proc = subprocess.run([resolved, "--version"], capture_output=True, text=True, timeout=30)
    except (OSError, subprocess.TimeoutExpired) as e:
        return ToolStatus(path=resolved, diagnostic=f"version query failed: {e}")
    output = (proc.stdout or proc.stderr or "").strip()
    version = next((line.strip() for line in output.splitlines() if line.strip()), None)
    if proc.returncode != 0:
        return ToolStatus(path=resolved, found=True, version=version,
                          diagnostic=f"--version exited with {proc.returncode}")
    return ToolStatus(path=resolved, found=True, version=version)


def probe_toolchain(config: ToolchainConfig) -> ToolchainReport:
    """Report per-tool availability and which pipeline stages can run"""
    tools = {tool: _probe_one(config.tool_path(tool)) for tool in TOOL_FIELDS}
    for tool, status in tools.items():
        if status.found:
            logger.info(f"{tool}: {status.path} ({status.version})")
        else:
            logger.info(f"{tool}: unavailable - {status.diagnostic}")
    capabilities = {
        "build": tools["cc"].found,
        "build_cargo": tools["cargo"].found,
        "build_swiftpm": tools["swift"].found,
        "disassemble": tools["dis"].found,
        "passes": tools["opt"].found,
        "offline_analysis": True,
    }
    return ToolchainReport(tools=tools, capabilities=capabilities)


class ToolRun(NamedTuple):
    returncode: int
    stdout: bytes
    stderr: bytes

    @property
    def output(self) -> str:
        return (self.stdout + self.stderr).decode("utf-8", errors="replace")


async def run_tool(argv: List[str], cwd: Optional[str] = None, env: Optional[Dict[str, str]] = None,
                   timeout: Optional[float] = None) -> ToolRun:
    """Run an external tool, capturing both streams and enforcing a timeout"""
    tool = os.path.basename(argv[0])
    try:
        process = await asyncio.create_subprocess_exec(
            *argv,
            cwd=cwd,
            env=env,
            stdout=asyncio.subprocess.PIPE,
            stderr=asyncio.subprocess.PIPE,
        )
    except (FileNotFoundError, PermissionError) as e:
        raise ToolUnavailableError(f"{tool}: {e}") from e

    try:
        stdout, stderr = await asyncio.wait_for(process.communicate(), timeout=timeout)
    except asyncio.TimeoutError:
        logger.warning(f"{tool} timed out after {timeout}s, killing PID {process.pid}")
        process.kill()
        await process.wait()
        raise ToolError(tool, f"timed out after {timeout}s")
    return ToolRun(process.returncode, stdout or b"", stderr or b"")


def run_tool_sync(argv: List[str], **kwargs) -> ToolRun:
    return asyncio.run(run_tool(argv, **kwargs))
