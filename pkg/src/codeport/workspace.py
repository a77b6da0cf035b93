"""Sandboxed file and process tools for the coder and judge agents.

Every agent touch of disk or build/test execution goes through this module.
Paths are confined to the workspace root; an optional allow-list of path
prefixes restricts reads further (used for blind audits). Tool errors are
returned as results, never raised: the calling agent loop feeds them back to
the model as observations.
"""

from __future__ import annotations

import os
import re
import signal
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import PathEscape, PathInvalid
from .fsio import atomic_write_text

TOOL_NAMES = (
    "list_files",
    "read_file",
    "write_file",
    "grep",
    "search_replace",
    "run_build",
    "run_test",
)

_REQUIRED_ARGS = {
    "list_files": (),
    "read_file": ("path",),
    "write_file": ("path", "content"),
    "grep": ("pattern",),
    "search_replace": ("path", "pattern", "replacement"),
    "run_build": (),
    "run_test": (),
}

READ_ONLY_TOOLS = frozenset({"list_files", "read_file", "grep"})


@dataclass(frozen=True)
class Workspace:
    """A migration workspace: root directory plus build/test commands.

    `autofix_imports` maps a symbol prefix to the import line that must be
    present whenever the symbol appears in a written file; missing declared
    imports are appended to the file's import block on write.
    """

    root: Path
    build_cmd: str | None = None
    test_cmd: str | None = None
    timeout_secs: int = 120
    autofix_imports: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        root = Path(self.root).resolve()
        if not root.is_dir():
            raise PathInvalid(f"workspace root {self.root} is not a directory")
        if self.timeout_secs < 1:
            raise PathInvalid("timeout_secs must be positive")
        object.__setattr__(self, "root", root)


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    output: str
    error_code: str | None = None

    def __post_init__(self):
        if self.ok == (self.error_code is not None):
            raise ValueError("exactly one of ok / error_code must hold")


def _err(code: str, message: str) -> ToolResult:
    return ToolResult(ok=False, output=message, error_code=code)


def format_tool_result(result: ToolResult) -> str:
    """Render a tool result as the observation text agents receive."""
    error = result.error_code if result.error_code else "none"
    text = f"tool result ok={str(result.ok).lower()} error={error}"
    if result.output:
        text += "\n" + result.output
    return text


def confine_path(workspace: Workspace, candidate: str) -> str:
    """Normalize `candidate` and require it to stay inside the workspace root.

    Returns the workspace-relative POSIX path (empty string for the root).
    """
    if not isinstance(candidate, str) or candidate == "":
        raise PathInvalid("path must be a non-empty string")
    try:
        candidate.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise PathInvalid("path is not valid UTF-8") from exc

    text = candidate
    if text.startswith("/"):
        # Absolute paths are allowed only when they already point inside root.
        normalized = os.path.normpath(text)
        root = str(workspace.root)
        if normalized == root:
            return ""
        if normalized.startswith(root + "/"):
            text = normalized[len(root) + 1 :]
        else:
            raise PathEscape(f"absolute path {candidate!r} is outside the workspace")

    parts: list[str] = []
    for segment in text.split("/"):
        if segment in ("", "."):
            continue
        if segment == "..":
            if not parts:
                raise PathEscape(f"path {candidate!r} escapes the workspace root")
            parts.pop()
        else:
            parts.append(segment)
    return "/".join(parts)


def _under(rel: str, prefix: str) -> bool:
    prefix = prefix.rstrip("/")
    return prefix == "" or rel == prefix or rel.startswith(prefix + "/")


def _access_allowed(rel: str, allowed_roots) -> bool:
    if allowed_roots is None:
        return True
    return any(_under(rel, prefix) for prefix in allowed_roots)


def _listing_allowed(prefix: str, allowed_roots) -> bool:
    # Listing/search may start at an ancestor of an allowed root; results are
    # filtered down to the allowed prefixes afterwards.
    if allowed_roots is None:
        return True
    if _access_allowed(prefix, allowed_roots):
        return True
    return any(_under(root.rstrip("/"), prefix) for root in allowed_roots)


def _iter_files(workspace: Workspace, prefix: str, allowed_roots) -> list[str]:
    results = []
    for path in sorted(workspace.root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(workspace.root).as_posix()
        if not _under(rel, prefix):
            continue
        if not _access_allowed(rel, allowed_roots):
            continue
        results.append(rel)
    return results


def dispatch_tool(
    workspace: Workspace,
    call: ToolCall,
    allowed_roots=None,
    allowed_tools=None,
) -> ToolResult:
    """Execute one tool call inside the workspace sandbox.

    With `allowed_roots` set, every path-touching call outside the prefixes
    yields ToolDenied without side effects. With `allowed_tools` set, other
    tools are denied outright (the judge gets a read-only subset).
    """
    if call.tool not in TOOL_NAMES:
        return _err("NoSuchTool", f"unknown tool {call.tool!r}")
    if allowed_tools is not None and call.tool not in allowed_tools:
        return _err("ToolDenied", f"tool {call.tool!r} is not available in this context")
    missing = [name for name in _REQUIRED_ARGS[call.tool] if name not in call.args]
    if missing:
        return _err("MissingArg", f"{call.tool} requires argument(s): {', '.join(missing)}")

    handler = {
        "list_files": _tool_list_files,
        "read_file": _tool_read_file,
        "write_file": _tool_write_file,
        "grep": _tool_grep,
        "search_replace": _tool_search_replace,
        "run_build": _tool_run_build,
        "run_test": _tool_run_test,
    }[call.tool]
    result = handler(workspace, dict(call.args), allowed_roots)
    if allowed_roots is not None and result.error_code == "PathEscape":
        # Under a restricted dispatch every out-of-bounds access reads the
        # same: denied, with no hint about the workspace layout.
        return _err("ToolDenied", result.output)
    return result


def _confined(workspace, raw_path):
    try:
        return confine_path(workspace, raw_path), None
    except PathEscape as exc:
        return None, _err("PathEscape", str(exc))
    except PathInvalid as exc:
        return None, _err("PathInvalid", str(exc))


def _tool_list_files(workspace, args, allowed_roots):
    prefix = args.get("prefix", "")
    if prefix:
        rel, failure = _confined(workspace, prefix)
        if failure:
            return failure
    else:
        rel = ""
    if not _listing_allowed(rel, allowed_roots):
        return _err("ToolDenied", f"listing {rel!r} is outside the allowed roots")
    return ToolResult(ok=True, output="\n".join(_iter_files(workspace, rel, allowed_roots)))


def _tool_read_file(workspace, args, allowed_roots):
    rel, failure = _confined(workspace, args["path"])
    if failure:
        return failure
    if not _access_allowed(rel, allowed_roots):
        return _err("ToolDenied", f"reading {rel!r} is outside the allowed roots")
    target = workspace.root / rel
    if not target.is_file():
        return _err("FileNotFound", f"no such file: {rel}")
    return ToolResult(ok=True, output=target.read_text(encoding="utf-8", errors="replace"))


def _tool_write_file(workspace, args, allowed_roots):
    rel, failure = _confined(workspace, args["path"])
    if failure:
        return failure
    if rel == "":
        return _err("PathInvalid", "cannot write to the workspace root itself")
    if not _access_allowed(rel, allowed_roots):
        return _err("ToolDenied", f"writing {rel!r} is outside the allowed roots")
    content = args["content"]
    content, added = _autofix_imports(content, workspace.autofix_imports)
    atomic_write_text(workspace.root / rel, content)
    note = f"wrote {rel}"
    if added:
        note += "; auto-added imports: " + ", ".join(added)
    return ToolResult(ok=True, output=note)


def _autofix_imports(content: str, rules: Mapping[str, str]):
    """Append declared-but-missing import lines for symbols used in `content`.

    Deliberately simple, rules-driven behavior: no symbol analysis beyond
    substring presence.
    """
    if not rules:
        return content, []
    additions = [
        import_line
        for symbol_prefix, import_line in sorted(rules.items())
        if symbol_prefix in content and import_line not in content
    ]
    if not additions:
        return content, []
    lines = content.splitlines()
    start = _skip_module_docstring(lines)
    insert_at = start
    for index in range(start, len(lines)):
        stripped = lines[index].strip()
        if stripped.startswith("import ") or stripped.startswith("from "):
            insert_at = index + 1
        elif stripped == "" or stripped.startswith("#"):
            continue
        else:
            break
    lines[insert_at:insert_at] = additions
    trailer = "\n" if content.endswith("\n") else ""
    return "\n".join(lines) + trailer, additions


def _skip_module_docstring(lines) -> int:
    if not lines:
        return 0
    head = lines[0].lstrip()
    quote = head[:3]
    if quote not in ('"""', "'''"):
        return 0
    if head.count(quote) >= 2 and len(head) > 3:
        return 1
    for index in range(1, len(lines)):
        if quote in lines[index]:
            return index + 1
    return len(lines)


def _tool_grep(workspace, args, allowed_roots):
    prefix = args.get("prefix", "")
    if prefix:
        rel, failure = _confined(workspace, prefix)
        if failure:
            return failure
    else:
        rel = ""
    if not _listing_allowed(rel, allowed_roots):
        return _err("ToolDenied", f"searching {rel!r} is outside the allowed roots")

    pattern = args["pattern"]
    use_regex = args.get("regex", "false").lower() == "true"
    if use_regex:
        try:
            compiled = re.compile(pattern)
        except re.error as exc:
            return _err("PatternInvalid", f"bad regex: {exc}")

    matches = []
    for path in _iter_files(workspace, rel, allowed_roots):
        try:
            text = (workspace.root / path).read_text(encoding="utf-8")
        except UnicodeDecodeError:
            continue
        for line_no, line in enumerate(text.splitlines(), start=1):
            hit = compiled.search(line) if use_regex else pattern in line
            if hit:
                matches.append(f"{path}:{line_no}:{line}")
    return ToolResult(ok=True, output="\n".join(matches))


def _tool_search_replace(workspace, args, allowed_roots):
    rel, failure = _confined(workspace, args["path"])
    if failure:
        return failure
    if not _access_allowed(rel, allowed_roots):
        return _err("ToolDenied", f"editing {rel!r} is outside the allowed roots")
    target = workspace.root / rel
    if not target.is_file():
        return _err("FileNotFound", f"no such file: {rel}")
    text = target.read_text(encoding="utf-8")
    count = text.count(args["pattern"])
    if count:
        atomic_write_text(target, text.replace(args["pattern"], args["replacement"]))
    return ToolResult(ok=True, output=f"replaced {count} occurrence(s) in {rel}")


def _tool_run_build(workspace, args, allowed_roots):
    del args, allowed_roots
    if workspace.build_cmd is None:
        return _err("CommandUnavailable", "no build command configured")
    return run_checked_command(workspace, workspace.build_cmd)


def _tool_run_test(workspace, args, allowed_roots):
    del args, allowed_roots
    if workspace.test_cmd is None:
        return _err("CommandUnavailable", "no test command configured")
    return run_checked_command(workspace, workspace.test_cmd)


def _merge_output(stdout: bytes, stderr: bytes) -> str:
    parts = []
    out_text = stdout.decode("utf-8", errors="replace")
    if out_text:
        parts.append(out_text if out_text.endswith("\n") else out_text + "\n")
    for line in stderr.decode("utf-8", errors="replace").splitlines():
        parts.append(f"[stderr] {line}\n")
    return "".join(parts).rstrip("\n")


def run_checked_command(
    workspace: Workspace, command: str, timeout_secs: int | None = None
) -> ToolResult:
    """Run `command` through the shell with cwd = workspace root.

    Captures stdout plus stderr (stderr lines tagged), ok iff exit status 0.
    On timeout the whole process group is killed.
    """
    timeout = timeout_secs if timeout_secs is not None else workspace.timeout_secs
    try:
        proc = subprocess.Popen(
            command,
            shell=True,
            cwd=str(workspace.root),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
        )
    except OSError as exc:
        return _err("SpawnFailure", f"could not spawn command: {exc}")

    try:
        stdout, stderr = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()
        stdout, stderr = proc.communicate()
        output = _merge_output(stdout or b"", stderr or b"")
        return _err("Timeout", f"command exceeded {timeout}s\n{output}".rstrip("\n"))

    output = _merge_output(stdout, stderr)
    if proc.returncode == 0:
        return ToolResult(ok=True, output=output)
    failure = output + (("\n" if output else "") + f"[exit status {proc.returncode}]")
    return _err("CommandFailed", failure)
