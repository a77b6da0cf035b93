"""The orchestrator: chunks the plan, selects playbooks per sub-step, drives
the coder strictly sequentially, applies the retry/skip/abort policy, and
checkpoints run state for resume.

The orchestrator is deterministic logic: it never calls the completion
provider itself. Run state is written ahead of every coder invocation so a
crash mid-coder is detectable and the chunk is retried on resume.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

from .bank import (
    MemoryBank,
    RunState,
    STATUS_DONE,
    STATUS_FAILED,
    STATUS_IN_PROGRESS,
    STATUS_PENDING,
    STATUS_SKIPPED,
    append_summary,
    load_plan,
    load_state,
    load_summaries,
    save_state,
    snapshot_playbooks,
)
from .coder import STATUS_SUCCESS, CoderContext, execute_substep
from .errors import (
    BankPlanMismatch,
    EngineError,
    HashMismatch,
    InvalidStrategyParam,
    StrategyMismatch,
    UnknownPlaybookInRule,
)
from .plan import MigrationPlan, PlanStep
from .playbooks import KIND_CLIENT, KIND_GENERAL, KIND_STYLE, KIND_TASK, PlaybookSet, assemble_system_prompt
from .workspace import Workspace

logger = logging.getLogger(__name__)

STRATEGY_PER_STEP = "per_step"
STRATEGY_FIXED = "fixed"
STRATEGY_FILE_CLUSTER = "file_cluster"

POLICY_ABORT = "abort"
POLICY_SKIP = "skip"

RULE_TARGET_PREFIX = "target_prefix"
RULE_INSTRUCTION_KEYWORD = "instruction_keyword"


@dataclass(frozen=True)
class ChunkStrategy:
    """How plan steps are grouped into coder sub-steps. All strategies
    preserve plan order and are deterministic."""

    kind: str = STRATEGY_PER_STEP
    size: int = 2       # fixed: steps per chunk
    max_merge: int = 4  # file_cluster: cap on merged steps


@dataclass(frozen=True)
class SubStep:
    chunk_index: int
    step_ids: tuple[int, ...]
    playbook_selection: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class FailurePolicy:
    max_retries: int = 2
    on_exhaustion: str = POLICY_ABORT
    skip_cascade: bool = True

    def __post_init__(self):
        if self.on_exhaustion not in (POLICY_ABORT, POLICY_SKIP):
            raise ValueError(f"unknown on_exhaustion policy {self.on_exhaustion!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class SelectionRule:
    """Maps a step predicate to a task- or client-tier playbook."""

    trigger: str  # target_prefix | instruction_keyword
    value: str
    playbook_kind: str
    playbook_name: str


@dataclass
class RunReport:
    step_status: dict[int, str]
    attempts: dict[int, int]
    chunk_seconds: dict[int, float] = field(default_factory=dict)
    completed: bool = True
    aborted_chunk: int | None = None


def chunk_plan(plan: MigrationPlan, strategy: ChunkStrategy) -> list[SubStep]:
    """Group plan steps into consecutive sub-steps according to the strategy."""
    steps = plan.steps
    if strategy.kind == STRATEGY_PER_STEP:
        groups = [[s] for s in steps]
    elif strategy.kind == STRATEGY_FIXED:
        if strategy.size < 1:
            raise InvalidStrategyParam(f"fixed chunk size must be >= 1, got {strategy.size}")
        groups = [
            list(steps[i : i + strategy.size]) for i in range(0, len(steps), strategy.size)
        ]
    elif strategy.kind == STRATEGY_FILE_CLUSTER:
        if strategy.max_merge < 1:
            raise InvalidStrategyParam(
                f"file_cluster max_merge must be >= 1, got {strategy.max_merge}"
            )
        groups = _file_cluster_groups(steps, strategy.max_merge)
    else:
        raise InvalidStrategyParam(f"unknown chunking strategy {strategy.kind!r}")

    return [
        SubStep(chunk_index=i, step_ids=tuple(s.step_id for s in group))
        for i, group in enumerate(groups)
    ]


def _file_cluster_groups(steps, max_merge):
    groups: list[list[PlanStep]] = []
    current: list[PlanStep] = []
    for step in steps:
        if current and len(current) < max_merge and _shares_target(step, current):
            current.append(step)
        else:
            if current:
                groups.append(current)
            current = [step]
    if current:
        groups.append(current)
    return groups


def _shares_target(step: PlanStep, group) -> bool:
    targets = {t for member in group for t in member.target_files}
    return any(t in targets for t in step.target_files)


def select_playbooks(steps, playbook_set: PlaybookSet, rules=()) -> tuple[tuple[str, str], ...]:
    """Pick the playbooks for a sub-step.

    General and style tiers are always included. Task and client tiers are
    included when a rule fires for the sub-step, or in full when no rules are
    configured (the safe default).
    """
    known = set(playbook_set.names())
    for rule in rules:
        if (rule.playbook_kind, rule.playbook_name) not in known:
            raise UnknownPlaybookInRule(
                f"rule references unknown playbook {rule.playbook_kind}/{rule.playbook_name}"
            )

    fired: set[tuple[str, str]] = set()
    for rule in rules:
        if _rule_fires(rule, steps):
            fired.add((rule.playbook_kind, rule.playbook_name))

    selection = []
    for pb in playbook_set:
        if pb.kind in (KIND_GENERAL, KIND_STYLE):
            selection.append((pb.kind, pb.name))
        elif pb.kind in (KIND_TASK, KIND_CLIENT):
            if not rules or (pb.kind, pb.name) in fired:
                selection.append((pb.kind, pb.name))
    return tuple(selection)


def _rule_fires(rule: SelectionRule, steps) -> bool:
    if rule.trigger == RULE_TARGET_PREFIX:
        prefix = rule.value.rstrip("/")
        return any(
            target == prefix or target.startswith(prefix + "/")
            for step in steps
            for target in step.target_files
        )
    if rule.trigger == RULE_INSTRUCTION_KEYWORD:
        return any(rule.value in step.instructions for step in steps)
    raise UnknownPlaybookInRule(f"unknown rule trigger {rule.trigger!r}")


def run_migration(
    plan: MigrationPlan,
    workspace: Workspace,
    playbook_set: PlaybookSet,
    provider,
    policy: FailurePolicy,
    strategy: ChunkStrategy,
    bank: MemoryBank,
    rules=(),
    max_iterations: int = 40,
) -> RunReport:
    """Execute the whole plan from a fresh run state.

    The bank must already hold this exact plan (hash-checked). State is
    persisted before and after every coder invocation.
    """
    stored = load_plan(bank)
    if stored.plan_hash != plan.plan_hash:
        raise BankPlanMismatch("bank holds a plan with a different hash")
    chunks = chunk_plan(plan, strategy)
    state = RunState.fresh(plan, [c.step_ids for c in chunks])
    save_state(bank, state)
    snapshot_playbooks(bank, playbook_set)
    return _execute_chunks(
        plan, chunks, state, workspace, playbook_set, provider, policy, bank,
        rules, max_iterations,
    )


def resume_migration(
    bank: MemoryBank,
    workspace: Workspace,
    playbook_set: PlaybookSet,
    provider,
    policy: FailurePolicy,
    strategy: ChunkStrategy,
    rules=(),
    max_iterations: int = 40,
) -> RunReport:
    """Continue an interrupted run from the persisted state.

    Chunks are recomputed with the same strategy and must reproduce the
    recorded boundaries; previously-done chunks are never re-executed."""
    plan = load_plan(bank)
    try:
        state = load_state(bank)
    except HashMismatch as exc:
        raise BankPlanMismatch(str(exc)) from exc
    chunks = chunk_plan(plan, strategy)
    if [list(c.step_ids) for c in chunks] != [list(c) for c in state.chunks]:
        raise StrategyMismatch(
            "recomputed chunk boundaries disagree with the recorded run state"
        )
    snapshot_playbooks(bank, playbook_set)
    return _execute_chunks(
        plan, chunks, state, workspace, playbook_set, provider, policy, bank,
        rules, max_iterations,
    )


def _skip_note(chunk_index: int, step_ids, reason: str) -> str:
    ids = ", ".join(str(sid) for sid in step_ids)
    return f"Sub-step {chunk_index} (steps {ids}) was skipped: {reason}\n"


def _cascade_skip(plan: MigrationPlan, state: RunState, seeds) -> None:
    skipped = set(seeds)
    changed = True
    while changed:
        changed = False
        for step in plan.steps:
            if state.status[step.step_id] != STATUS_PENDING:
                continue
            if any(dep in skipped for dep in step.dependencies):
                state.status[step.step_id] = STATUS_SKIPPED
                skipped.add(step.step_id)
                changed = True


def _execute_chunks(
    plan, chunks, state, workspace, playbook_set, provider, policy, bank,
    rules, max_iterations,
) -> RunReport:
    steps_by_id = {s.step_id: s for s in plan.steps}
    timings: dict[int, float] = {}

    for chunk_index in range(state.next_chunk, len(chunks)):
        substep = chunks[chunk_index]
        step_objs = tuple(steps_by_id[sid] for sid in substep.step_ids)

        # A chunk containing a skipped step cannot be delegated as a whole;
        # its remaining steps are skipped too. A skip note keeps the summary
        # history aligned with chunk indices and tells later coder
        # invocations what never happened.
        if any(state.status[sid] == STATUS_SKIPPED for sid in substep.step_ids):
            for sid in substep.step_ids:
                state.status[sid] = STATUS_SKIPPED
            append_summary(
                bank,
                chunk_index,
                _skip_note(chunk_index, substep.step_ids, "depends on skipped steps"),
            )
            state.next_chunk = chunk_index + 1
            save_state(bank, state)
            continue

        # Runtime ordering guard: every out-of-chunk dependency must be
        # terminal by now. Skipped/failed dependencies are a policy choice
        # (skip_cascade=false), not an ordering bug.
        for step in step_objs:
            for dep in step.dependencies:
                if dep in substep.step_ids:
                    continue
                if state.status[dep] in (STATUS_PENDING, STATUS_IN_PROGRESS):
                    raise EngineError(
                        f"ordering violation: step {step.step_id} runs before "
                        f"its dependency {dep} is settled"
                    )

        selection = select_playbooks(step_objs, playbook_set, rules)
        substep = replace(substep, playbook_selection=selection)
        system_prompt = assemble_system_prompt(playbook_set, selection)

        started = time.monotonic()
        failure_note = None
        outcome = None
        for attempt in range(1, policy.max_retries + 2):
            for sid in substep.step_ids:
                state.status[sid] = STATUS_IN_PROGRESS
                state.attempts[sid] = attempt
            save_state(bank, state)  # write-ahead: crash here retries the chunk

            ctx = CoderContext(
                system_prompt=system_prompt,
                chunk_index=chunk_index,
                steps=step_objs,
                prior_summaries=tuple(load_summaries(bank)),
                build_cmd=workspace.build_cmd,
                test_cmd=workspace.test_cmd,
                failure_note=failure_note,
                tag_prefix=f"coder.chunk{chunk_index}.a{attempt}",
            )
            outcome = execute_substep(ctx, workspace, provider, max_iterations)
            if outcome.status == STATUS_SUCCESS:
                break
            failure_note = outcome.failure_reason
            logger.warning(
                "chunk %s attempt %s failed: %s", chunk_index, attempt, failure_note
            )
        timings[chunk_index] = time.monotonic() - started

        if outcome is not None and outcome.status == STATUS_SUCCESS:
            append_summary(bank, chunk_index, outcome.summary)
            for sid in substep.step_ids:
                state.status[sid] = STATUS_DONE
            state.next_chunk = chunk_index + 1
            save_state(bank, state)
            continue

        if policy.on_exhaustion == POLICY_ABORT:
            for sid in substep.step_ids:
                state.status[sid] = STATUS_FAILED
            # next_chunk stays at this chunk so a later resume retries it
            state.next_chunk = chunk_index
            save_state(bank, state)
            return RunReport(
                step_status=dict(state.status),
                attempts=dict(state.attempts),
                chunk_seconds=timings,
                completed=False,
                aborted_chunk=chunk_index,
            )

        for sid in substep.step_ids:
            state.status[sid] = STATUS_SKIPPED
        if policy.skip_cascade:
            _cascade_skip(plan, state, substep.step_ids)
        reason = failure_note or "retries exhausted"
        append_summary(
            bank, chunk_index, _skip_note(chunk_index, substep.step_ids, reason)
        )
        state.next_chunk = chunk_index + 1
        save_state(bank, state)

    return RunReport(
        step_status=dict(state.status),
        attempts=dict(state.attempts),
        chunk_seconds=timings,
        completed=True,
    )


def single_agent_step(plan: MigrationPlan, root_file: str) -> PlanStep:
    """Flatten a plan into the one synthetic step used by the single-agent
    baseline: no step structure, the entire plan's instructions concatenated."""
    sources: list[str] = []
    targets: list[str] = []
    for step in plan.steps:
        for path in step.source_files:
            if path not in sources:
                sources.append(path)
        for path in step.target_files:
            if path not in targets:
                targets.append(path)
    instructions = "\n\n".join(step.instructions for step in plan.steps)
    return PlanStep(
        step_id=1,
        title=f"migrate {root_file} and all dependencies",
        source_files=tuple(sources),
        target_files=tuple(targets),
        instructions=instructions,
        validation="all target files exist and the workspace builds",
        dependencies=(),
    )


def run_single_agent(
    plan: MigrationPlan,
    root_file: str,
    workspace: Workspace,
    playbook_set: PlaybookSet,
    provider,
    bank: MemoryBank,
    max_iterations: int = 40,
):
    """One coder invocation over the flattened plan; no orchestration, no
    run state. Returns the CoderOutcome."""
    snapshot_playbooks(bank, playbook_set)
    step = single_agent_step(plan, root_file)
    ctx = CoderContext(
        system_prompt=assemble_system_prompt(playbook_set),
        chunk_index=0,
        steps=(step,),
        prior_summaries=(),
        build_cmd=workspace.build_cmd,
        test_cmd=workspace.test_cmd,
        tag_prefix="coder.chunk0.a1",
    )
    outcome = execute_substep(ctx, workspace, provider, max_iterations)
    if outcome.status == STATUS_SUCCESS:
        append_summary(bank, 0, outcome.summary)
    return outcome
