"""The recursive planning loop.

Round one prompts with the root file and its direct imports plus the
leaf-first migration order; the model replies with a fenced `plan` block and
optionally a fenced `requests` block naming files it still needs. Requested
contents are added to the context and the loop repeats until the model stops
requesting files or the round budget runs out. The final plan is parsed,
validated, and persisted to the memory bank together with its dot rendering.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .bank import MemoryBank, save_plan
from .blocks import first_block
from .depgraph import MigrationOrder, build_graph, extract_imports, leaf_first_order
from .errors import EngineError, MissingPlanBlock, PathEscape, PathInvalid, RepeatRequest
from .plan import MigrationPlan, parse_plan
from .playbooks import PlaybookSet, assemble_system_prompt
from .providers import ChatMessage, CompletionRequest, ROLE_SYSTEM, ROLE_USER
from .workspace import Workspace, confine_path

logger = logging.getLogger(__name__)

_RESPONSE_CONTRACT = """Respond with a fenced `plan` block containing the migration plan as JSON:
{"steps": [{"step_id": <int>, "title": <str>, "source_files": [<str>], "target_files": [<str>], "instructions": <str>, "validation": <str>, "dependencies": [<int>]}]}
Steps must be fine-grained, disjoint, and listed so every dependency precedes its dependents.
If you need the contents of more workspace files to close gaps in the plan, also reply with a
fenced `requests` block containing one workspace-relative path per line. Omit the `requests`
block once the plan is complete."""


@dataclass(frozen=True)
class PlannerRoundResult:
    plan_text: str
    requested_files: tuple[str, ...]
    round_index: int


def _render_order(order: MigrationOrder) -> str:
    lines = []
    for index, cluster in enumerate(order.clusters, start=1):
        lines.append(f"  {index}. {' + '.join(cluster)}")
    return "\n".join(lines)


def _round_prompt(
    context_files, root_file, order, excluded_prefixes, refused
) -> str:
    parts = [f"Migration root: {root_file}", ""]
    parts.append("Leaf-first migration order (dependencies before dependents):")
    parts.append(_render_order(order))
    parts.append("")
    if excluded_prefixes:
        parts.append(
            "Excluded library prefixes (already available for use; never create "
            "migration steps for them):"
        )
        for prefix in excluded_prefixes:
            parts.append(f"  - {prefix}")
        parts.append("")
    parts.append("Context files:")
    for path, content in context_files.items():
        parts.append(f"--- file: {path}\n{content}\n--- end file")
    if refused:
        parts.append("")
        parts.append(
            "The following requested files were refused (outside the workspace "
            "or excluded) and will not be supplied:"
        )
        for path, reason in refused:
            parts.append(f"  - {path}: {reason}")
    parts.append("")
    parts.append(_RESPONSE_CONTRACT)
    return "\n".join(parts)


def plan_round(
    context_files,
    root_file: str,
    order: MigrationOrder,
    playbook_set: PlaybookSet,
    provider,
    round_index: int,
    excluded_prefixes=(),
    refused=(),
) -> PlannerRoundResult:
    """One planning round: one provider call, parsed plan + gap requests."""
    request = CompletionRequest(
        messages=(
            ChatMessage(ROLE_SYSTEM, assemble_system_prompt(playbook_set)),
            ChatMessage(
                ROLE_USER,
                _round_prompt(context_files, root_file, order, excluded_prefixes, refused),
            ),
        ),
        tag=f"planner.round.{round_index}",
    )
    reply = provider.complete(request).content

    plan_text = first_block(reply, "plan")
    if plan_text is None:
        raise MissingPlanBlock(f"planner round {round_index} reply lacks a `plan` block")

    requests_text = first_block(reply, "requests")
    requested: list[str] = []
    if requests_text is not None:
        for line in requests_text.splitlines():
            path = line.strip()
            if not path:
                continue
            if path in context_files:
                raise RepeatRequest(
                    f"planner round {round_index} re-requested already supplied "
                    f"file {path!r}"
                )
            if path not in requested:
                requested.append(path)

    return PlannerRoundResult(
        plan_text=plan_text, requested_files=tuple(requested), round_index=round_index
    )


def _excluded(path: str, prefixes) -> bool:
    for prefix in prefixes:
        prefix = prefix.rstrip("/")
        if prefix and (path == prefix or path.startswith(prefix + "/")):
            return True
    return False


def plan_migration(
    root_file: str,
    workspace: Workspace,
    playbook_set: PlaybookSet,
    provider,
    max_rounds: int = 5,
    bank: MemoryBank | None = None,
    excluded_prefixes=(),
    source_ext: str = "py",
) -> MigrationPlan:
    """Run the recursive planning loop and return the validated plan.

    Context is monotone: every round's prompt contains all previously
    supplied file contents. Files requested from outside the workspace or
    under an excluded prefix are refused and reported back to the model in
    the next round instead of failing the run.
    """
    graph = build_graph(root_file, workspace, ext=source_ext)
    order = leaf_first_order(graph)

    root_text = (workspace.root / root_file).read_text(encoding="utf-8")
    context_files: dict[str, str] = {root_file: root_text}
    for ref in extract_imports(root_text, root_file, workspace, ext=source_ext):
        if ref.resolved_path is None or ref.resolved_path == root_file:
            continue
        if _excluded(ref.resolved_path, excluded_prefixes):
            continue
        if ref.resolved_path not in context_files:
            context_files[ref.resolved_path] = (
                workspace.root / ref.resolved_path
            ).read_text(encoding="utf-8")

    plan_text = None
    refused: list[tuple[str, str]] = []
    pending_requests: tuple[str, ...] = ()
    for round_index in range(1, max_rounds + 1):
        result = plan_round(
            context_files,
            root_file,
            order,
            playbook_set,
            provider,
            round_index,
            excluded_prefixes=excluded_prefixes,
            refused=tuple(refused),
        )
        plan_text = result.plan_text
        pending_requests = result.requested_files
        if not pending_requests:
            break

        refused = []
        for requested in pending_requests:
            try:
                rel = confine_path(workspace, requested)
            except (PathEscape, PathInvalid) as exc:
                refused.append((requested, str(exc)))
                continue
            if _excluded(rel, excluded_prefixes):
                refused.append((requested, "file is under an excluded library prefix"))
                continue
            if not (workspace.root / rel).is_file():
                refused.append((requested, "file does not exist in the workspace"))
                continue
            context_files[rel] = (workspace.root / rel).read_text(encoding="utf-8")
    else:
        if pending_requests:
            logger.warning(
                "planner hit the round budget (%s) with unresolved requests: %s",
                max_rounds,
                ", ".join(pending_requests),
            )

    try:
        plan = parse_plan(plan_text)
    except EngineError as exc:
        raise type(exc)(f"planner round {round_index}: {exc}") from exc

    if bank is not None:
        save_plan(bank, plan)
    return plan
