"""The coder agent: a tool-using loop that executes one migration sub-step.

One fenced block per assistant reply drives the loop: `tool` calls a
workspace tool, `done` requests completion, `abort` gives up. Completion is
gated twice: a passing build is required after the last edit before `done`
is accepted, and every accepted `done` triggers exactly one self-review
prompt that the model must answer with a `confirmed` block. A structured
summary closes the sub-step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .blocks import blocks_named, first_block, parse_tool_call
from .plan import PlanStep
from .providers import (
    ChatMessage,
    CompletionRequest,
    ROLE_ASSISTANT,
    ROLE_SYSTEM,
    ROLE_USER,
)
from .workspace import Workspace, confine_path, dispatch_tool, format_tool_result
from .errors import PathEscape, PathInvalid

logger = logging.getLogger(__name__)

STATUS_SUCCESS = "success"
STATUS_FAILURE = "failure"

REQUIRED_SUMMARY_SECTIONS = ("Changes Made", "Key Fixes & Learnings")

_EDIT_TOOLS = ("write_file", "search_replace")

TOOL_CONTRACT = """Interact using exactly one fenced block per reply:
- A `tool` block containing one JSON object {"tool": "<name>", "args": {...}}.
  Available tools: list_files(prefix), read_file(path), write_file(path, content),
  grep(pattern[, prefix][, regex]), search_replace(path, pattern, replacement),
  run_build(), run_test(). All argument values must be strings.
- A `done` block when the sub-step is complete. A passing build after your last
  edit is required before `done` is accepted.
- An `abort` block with a reason if the sub-step cannot be completed."""

BUILD_REMINDER = (
    "Reminder: build before declaring completion. Run `run_build` successfully "
    "after your last edit, then emit the `done` block again."
)
FORMAT_REMINDER = "Format reminder: reply with exactly one fenced `tool`, `done`, or `abort` block."
MULTI_TOOL_NOTE = "Note: multiple `tool` blocks found; only the first was executed."
REVIEW_MARKER = "Self-review:"
REVIEW_REMINDER = (
    "Review format reminder: reply with a fenced `confirmed` block if every "
    "validation condition holds, or continue working with a fenced `tool` block."
)
SUMMARY_PROMPT = (
    "The sub-step is accepted. Provide a markdown summary in a fenced `summary` "
    "block with the sections 'Changes Made' and 'Key Fixes & Learnings'."
)
SUMMARY_REMINDER = (
    "Summary format reminder: reply with a fenced `summary` block containing the "
    "sections 'Changes Made' and 'Key Fixes & Learnings'."
)


@dataclass(frozen=True)
class CoderContext:
    """Everything one coder invocation sees: playbooks, steps, full history."""

    system_prompt: str
    chunk_index: int
    steps: tuple[PlanStep, ...]
    prior_summaries: tuple[str, ...]
    build_cmd: str | None = None
    test_cmd: str | None = None
    failure_note: str | None = None
    tag_prefix: str = "coder"


@dataclass(frozen=True)
class StepSummary:
    chunk_index: int
    step_ids: tuple[int, ...]
    body: str

    def __post_init__(self):
        missing = [s for s in REQUIRED_SUMMARY_SECTIONS if s not in self.body]
        if missing:
            raise ValueError(f"summary lacks required section(s): {', '.join(missing)}")


def summary_sections_ok(body: str) -> bool:
    return all(section in body for section in REQUIRED_SUMMARY_SECTIONS)


@dataclass(frozen=True)
class CoderOutcome:
    status: str
    summary: str | None
    failure_reason: str | None
    files_changed: tuple[str, ...]
    build_ok: bool
    test_ok: bool | None
    iterations_used: int

    def __post_init__(self):
        if self.status == STATUS_SUCCESS and (self.summary is None or not self.build_ok):
            raise ValueError("success requires a summary and a passing build")
        if self.status == STATUS_FAILURE and self.failure_reason is None:
            raise ValueError("failure requires a failure_reason")


def _render_step(step: PlanStep) -> str:
    sources = ", ".join(step.source_files) if step.source_files else "(none)"
    return (
        f"### Step {step.step_id}: {step.title}\n"
        f"source files: {sources}\n"
        f"target files: {', '.join(step.target_files)}\n"
        f"instructions: {step.instructions}\n"
        f"validation: {step.validation}"
    )


def _task_prompt(ctx: CoderContext) -> str:
    parts = [f"Execute migration sub-step {ctx.chunk_index}.", ""]
    parts.append("Plan steps in this sub-step:")
    for step in ctx.steps:
        parts.append(_render_step(step))
    parts.append("")
    if ctx.prior_summaries:
        parts.append("Summaries of previously completed sub-steps (full history):")
        for index, summary in enumerate(ctx.prior_summaries):
            parts.append(f"--- summary {index}\n{summary}\n--- end summary")
        parts.append("")
    build = ctx.build_cmd if ctx.build_cmd else "(none configured)"
    test = ctx.test_cmd if ctx.test_cmd else "(none configured)"
    parts.append(f"Workspace commands: build = {build}; test = {test}.")
    if ctx.failure_note:
        parts.append("")
        parts.append(f"Previous attempt failed: {ctx.failure_note}")
        parts.append("Fix the problem and complete the sub-step.")
    parts.append("")
    parts.append(TOOL_CONTRACT)
    return "\n".join(parts)


def _review_prompt(steps: tuple[PlanStep, ...]) -> str:
    lines = [
        f"{REVIEW_MARKER} before completion is accepted, verify the work against "
        "each validation condition below."
    ]
    for step in steps:
        lines.append(f"- step {step.step_id}: {step.validation}")
    lines.append(
        "Reply with a fenced `confirmed` block if every condition is satisfied, "
        "or continue working with a fenced `tool` block."
    )
    return "\n".join(lines)


def execute_substep(
    ctx: CoderContext,
    workspace: Workspace,
    provider,
    max_iterations: int = 40,
) -> CoderOutcome:
    """Run the coder loop for one sub-step. Never raises on model misbehavior:
    malformed replies cost iterations, and an exhausted budget is a failure
    outcome, not an exception. Provider errors propagate."""
    messages = [
        ChatMessage(ROLE_SYSTEM, ctx.system_prompt),
        ChatMessage(ROLE_USER, _task_prompt(ctx)),
    ]

    iterations = 0
    phase = "work"
    files_changed: list[str] = []
    last_edit_turn = -1
    last_build_turn = -1
    last_build_ok = False
    test_ok: bool | None = None
    summary_retry_used = False

    def build_satisfied() -> bool:
        if workspace.build_cmd is None:
            return True  # nothing to build; the gate is vacuous
        return last_build_turn > last_edit_turn and last_build_ok

    def run_tool(body: str) -> str | None:
        nonlocal last_edit_turn, last_build_turn, last_build_ok, test_ok
        call = parse_tool_call(body)
        if call is None:
            return None
        result = dispatch_tool(workspace, call)
        if call.tool in _EDIT_TOOLS and result.ok:
            changed = not (
                call.tool == "search_replace" and result.output.startswith("replaced 0 ")
            )
            if changed:
                last_edit_turn = iterations
                try:
                    rel = confine_path(workspace, call.args["path"])
                except (PathEscape, PathInvalid):
                    rel = call.args["path"]
                if rel not in files_changed:
                    files_changed.append(rel)
        elif call.tool == "run_build":
            last_build_turn = iterations
            last_build_ok = result.ok
        elif call.tool == "run_test":
            test_ok = result.ok
        return format_tool_result(result)

    def failure(reason: str) -> CoderOutcome:
        return CoderOutcome(
            status=STATUS_FAILURE,
            summary=None,
            failure_reason=reason,
            files_changed=tuple(files_changed),
            build_ok=build_satisfied(),
            test_ok=test_ok,
            iterations_used=iterations,
        )

    while iterations < max_iterations:
        iterations += 1
        request = CompletionRequest(
            messages=tuple(messages), tag=f"{ctx.tag_prefix}.t{iterations}"
        )
        reply = provider.complete(request).content
        messages.append(ChatMessage(ROLE_ASSISTANT, reply))

        abort_body = first_block(reply, "abort")
        if abort_body is not None:
            return failure(f"coder aborted: {abort_body.strip()}")

        tool_bodies = blocks_named(reply, "tool")

        if phase == "work":
            if tool_bodies:
                result_text = run_tool(tool_bodies[0])
                if result_text is None:
                    messages.append(ChatMessage(ROLE_USER, FORMAT_REMINDER))
                    continue
                if len(tool_bodies) > 1:
                    result_text += "\n" + MULTI_TOOL_NOTE
                messages.append(ChatMessage(ROLE_USER, result_text))
                continue
            if first_block(reply, "done") is not None:
                if build_satisfied():
                    phase = "review"
                    messages.append(ChatMessage(ROLE_USER, _review_prompt(ctx.steps)))
                else:
                    messages.append(ChatMessage(ROLE_USER, BUILD_REMINDER))
                continue
            messages.append(ChatMessage(ROLE_USER, FORMAT_REMINDER))
            continue

        if phase == "review":
            if first_block(reply, "confirmed") is not None:
                phase = "summary"
                messages.append(ChatMessage(ROLE_USER, SUMMARY_PROMPT))
                continue
            if tool_bodies:
                result_text = run_tool(tool_bodies[0])
                if result_text is None:
                    messages.append(ChatMessage(ROLE_USER, REVIEW_REMINDER))
                    continue
                if len(tool_bodies) > 1:
                    result_text += "\n" + MULTI_TOOL_NOTE
                phase = "work"  # review rejected; the next `done` is reviewed again
                messages.append(ChatMessage(ROLE_USER, result_text))
                continue
            messages.append(ChatMessage(ROLE_USER, REVIEW_REMINDER))
            continue

        # phase == "summary"
        summary_body = first_block(reply, "summary")
        if summary_body is not None and summary_sections_ok(summary_body):
            return CoderOutcome(
                status=STATUS_SUCCESS,
                summary=summary_body,
                failure_reason=None,
                files_changed=tuple(files_changed),
                build_ok=build_satisfied(),
                test_ok=test_ok,
                iterations_used=iterations,
            )
        if summary_retry_used:
            return failure("summary block malformed after retry")
        summary_retry_used = True
        messages.append(ChatMessage(ROLE_USER, SUMMARY_REMINDER))

    logger.warning(
        "coder iteration budget exhausted for chunk %s after %s calls",
        ctx.chunk_index,
        iterations,
    )
    return failure(f"iteration budget exhausted after {iterations} provider calls")
