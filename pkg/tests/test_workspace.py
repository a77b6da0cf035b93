import os
import time

import pytest

from codeport import fsio
from codeport.errors import PathEscape, PathInvalid
from codeport.workspace import (
    READ_ONLY_TOOLS,
    ToolCall,
    ToolResult,
    confine_path,
    dispatch_tool,
    run_checked_command,
)


def call(ws, tool, allowed_roots=None, allowed_tools=None, **args):
    return dispatch_tool(ws, ToolCall(tool, args), allowed_roots, allowed_tools)


def test_tool_result_invariant():
    with pytest.raises(ValueError):
        ToolResult(ok=True, output="", error_code="Boom")
    with pytest.raises(ValueError):
        ToolResult(ok=False, output="")


def test_confine_normalizes_dot_segments(make_workspace):
    ws = make_workspace({})
    assert confine_path(ws, "a/./b.py") == "a/b.py"
    assert confine_path(ws, "a/b/../c.py") == "a/c.py"
    assert confine_path(ws, "a//b.py") == "a/b.py"


def test_confine_rejects_escape_and_invalid(make_workspace):
    ws = make_workspace({})
    with pytest.raises(PathEscape):
        confine_path(ws, "../outside.py")
    with pytest.raises(PathEscape):
        confine_path(ws, "a/../../outside.py")
    with pytest.raises(PathInvalid):
        confine_path(ws, "")


def test_confine_absolute_paths(make_workspace):
    ws = make_workspace({"a.py": "x\n"})
    assert confine_path(ws, str(ws.root / "a.py")) == "a.py"
    assert confine_path(ws, str(ws.root)) == ""
    with pytest.raises(PathEscape):
        confine_path(ws, "/etc/passwd")


def test_write_file_to_root_itself_is_invalid(make_workspace):
    ws = make_workspace({})
    result = call(ws, "write_file", path=".", content="x")
    assert result.error_code == "PathInvalid"


def test_confine_fuzzed_paths_never_escape(make_workspace):
    ws = make_workspace({})
    hostile = [
        "..",
        "../..",
        "a/../../b",
        "..//..//etc",
        "/ab/solute.py",
        "a/b/c/../../../..",
        "./../x",
        "a/....//../b",  # "...." is a regular segment name
    ]
    for candidate in hostile:
        try:
            rel = confine_path(ws, candidate)
        except (PathEscape, PathInvalid):
            continue
        resolved = (ws.root / rel).resolve()
        assert str(resolved).startswith(str(ws.root))


def test_list_files_sorted_under_prefix(make_workspace):
    ws = make_workspace({"b/two.py": "", "b/one.py": "", "a.py": ""})
    result = call(ws, "list_files")
    assert result.output.splitlines() == ["a.py", "b/one.py", "b/two.py"]
    result = call(ws, "list_files", prefix="b")
    assert result.output.splitlines() == ["b/one.py", "b/two.py"]


def test_read_file(make_workspace):
    ws = make_workspace({"f.py": "content\n"})
    assert call(ws, "read_file", path="f.py").output == "content\n"
    result = call(ws, "read_file", path="gone.py")
    assert result.error_code == "FileNotFound"


def test_write_file_creates_parents(make_workspace):
    ws = make_workspace({})
    result = call(ws, "write_file", path="new/dir/f.py", content="x = 1\n")
    assert result.ok
    assert (ws.root / "new/dir/f.py").read_text() == "x = 1\n"


def test_write_file_is_atomic_under_replace_failure(make_workspace, monkeypatch):
    ws = make_workspace({"f.py": "old\n"})
    real_replace = os.replace

    def broken_replace(src, dst):
        raise OSError("simulated crash at rename")

    monkeypatch.setattr(fsio.os, "replace", broken_replace)
    with pytest.raises(OSError):
        fsio.atomic_write_text(ws.root / "f.py", "new\n")
    monkeypatch.setattr(fsio.os, "replace", real_replace)
    # Old content intact, no temp litter visible as the target.
    assert (ws.root / "f.py").read_text() == "old\n"


def test_grep_literal_match_with_location(make_workspace):
    ws = make_workspace({"f.py": "a\nb\nneedle here\n"})
    result = call(ws, "grep", pattern="needle")
    assert result.output == "f.py:3:needle here"


def test_grep_regex_flag_and_bad_pattern(make_workspace):
    ws = make_workspace({"f.py": "value = 42\n"})
    result = call(ws, "grep", pattern=r"value\s*=\s*\d+", regex="true")
    assert result.output == "f.py:1:value = 42"
    result = call(ws, "grep", pattern="(", regex="true")
    assert result.error_code == "PatternInvalid"


def test_grep_results_sorted(make_workspace):
    ws = make_workspace({"b.py": "hit\n", "a.py": "hit\nhit\n"})
    result = call(ws, "grep", pattern="hit")
    assert result.output.splitlines() == ["a.py:1:hit", "a.py:2:hit", "b.py:1:hit"]


def test_search_replace_counts_and_noop(make_workspace):
    ws = make_workspace({"f.py": "aaa bbb aaa\n"})
    result = call(ws, "search_replace", path="f.py", pattern="aaa", replacement="ccc")
    assert result.ok and "replaced 2 occurrence(s)" in result.output
    assert (ws.root / "f.py").read_text() == "ccc bbb ccc\n"
    result = call(ws, "search_replace", path="f.py", pattern="zzz", replacement="y")
    assert result.ok and "replaced 0 occurrence(s)" in result.output


def test_dispatch_rejects_unknown_tool_and_missing_args(make_workspace):
    ws = make_workspace({})
    assert call(ws, "rm_rf").error_code == "NoSuchTool"
    assert call(ws, "read_file").error_code == "MissingArg"
    assert call(ws, "search_replace", path="f").error_code == "MissingArg"


def test_allowed_tools_denies_outside_subset(make_workspace):
    ws = make_workspace({"f.py": "x\n"})
    result = call(ws, "write_file", allowed_tools=READ_ONLY_TOOLS, path="f.py", content="y")
    assert result.error_code == "ToolDenied"
    assert (ws.root / "f.py").read_text() == "x\n"


def test_allowed_roots_restricts_reads_exactly(make_workspace):
    ws = make_workspace(
        {
            "allowed/x.py": "x\n",
            "allowed/sub/y.py": "y\n",
            "hidden/z.py": "z\n",
            "top.py": "t\n",
        }
    )
    roots = ("allowed",)
    readable = []
    for rel in ["allowed/x.py", "allowed/sub/y.py", "hidden/z.py", "top.py"]:
        result = call(ws, "read_file", allowed_roots=roots, path=rel)
        if result.ok:
            readable.append(rel)
        else:
            assert result.error_code == "ToolDenied"
    assert readable == ["allowed/x.py", "allowed/sub/y.py"]

    # Listing from the top filters down to the allowed prefixes.
    listing = call(ws, "list_files", allowed_roots=roots)
    assert listing.output.splitlines() == ["allowed/sub/y.py", "allowed/x.py"]
    # Listing a disjoint prefix is denied outright.
    assert call(ws, "list_files", allowed_roots=roots, prefix="hidden").error_code == "ToolDenied"

    # Grep never surfaces content outside the roots.
    hits = call(ws, "grep", allowed_roots=roots, pattern="")
    assert all(line.startswith("allowed/") for line in hits.output.splitlines())


def test_allowed_roots_masks_escapes_as_denials(make_workspace):
    ws = make_workspace({"allowed/x.py": "x\n"})
    result = call(ws, "read_file", allowed_roots=("allowed",), path="../outside.py")
    assert result.error_code == "ToolDenied"
    # Without a restriction the precise failure is reported.
    assert call(ws, "read_file", path="../outside.py").error_code == "PathEscape"


def test_allowed_roots_denies_writes_without_side_effects(make_workspace):
    ws = make_workspace({"allowed/x.py": "x\n"})
    result = call(
        ws, "write_file", allowed_roots=("allowed",), path="hidden/new.py", content="n"
    )
    assert result.error_code == "ToolDenied"
    assert not (ws.root / "hidden").exists()


def test_autofix_appends_declared_imports(make_workspace):
    ws = make_workspace(
        {}, autofix_imports={"modern.ops.": "import modern.ops"}
    )
    content = '"""Doc."""\n\nimport sys\n\n\ndef f(x):\n    return modern.ops.relu(x)\n'
    result = call(ws, "write_file", path="f.py", content=content)
    assert result.ok and "auto-added imports: import modern.ops" in result.output
    lines = (ws.root / "f.py").read_text().splitlines()
    assert lines[lines.index("import sys") + 1] == "import modern.ops"


def test_autofix_skips_when_import_present_or_symbol_absent(make_workspace):
    ws = make_workspace({}, autofix_imports={"modern.ops.": "import modern.ops"})
    has_import = "import modern.ops\nmodern.ops.relu\n"
    result = call(ws, "write_file", path="a.py", content=has_import)
    assert "auto-added" not in result.output
    no_symbol = "x = 1\n"
    call(ws, "write_file", path="b.py", content=no_symbol)
    assert (ws.root / "b.py").read_text() == no_symbol


def test_run_build_without_command(make_workspace):
    ws = make_workspace({})
    assert call(ws, "run_build").error_code == "CommandUnavailable"


def test_run_checked_command_success_empty_output(make_workspace):
    ws = make_workspace({})
    result = run_checked_command(ws, "true", 10)
    assert result.ok and result.output == ""


def test_run_checked_command_captures_tagged_stderr(make_workspace):
    ws = make_workspace({"fail.py": "import sys\nsys.stderr.write('boom\\n')\nsys.exit(1)\n"})
    result = run_checked_command(ws, "python3 fail.py", 30)
    assert not result.ok
    assert result.error_code == "CommandFailed"
    assert "[stderr] boom" in result.output
    assert "[exit status 1]" in result.output


def test_run_checked_command_times_out_quickly(make_workspace):
    ws = make_workspace({})
    started = time.monotonic()
    result = run_checked_command(ws, "sleep 5", 1)
    elapsed = time.monotonic() - started
    assert result.error_code == "Timeout"
    assert elapsed < 3.0


def test_run_checked_command_runs_in_workspace_root(make_workspace):
    ws = make_workspace({"here.txt": "\n"})
    result = run_checked_command(ws, "ls", 10)
    assert "here.txt" in result.output


def test_run_build_uses_configured_command(make_workspace):
    ws = make_workspace({"ok.py": "x = 1\n"}, build_cmd="python3 -c 'print(7)'")
    result = call(ws, "run_build")
    assert result.ok and result.output.strip() == "7"
