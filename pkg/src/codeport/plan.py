"""Migration plan schema: parsing, validation, canonical JSON, dot rendering.

The plan is the contract shared by the planner (which emits it), the
orchestrator (which executes it) and the CLI (which renders and lints it).
All values here are immutable after construction and safe to share between
concurrent tasks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import (
    CyclicDependency,
    DuplicateStepId,
    EmptyPlan,
    ForwardDependency,
    MalformedDocument,
    UnknownDependency,
)

# Canonical key order for serialized steps.
STEP_KEYS = (
    "step_id",
    "title",
    "source_files",
    "target_files",
    "instructions",
    "validation",
    "dependencies",
)

SEVERITY_WARNING = "warning"
SEVERITY_ERROR = "error"

# Closed lint code enumeration.
MISSING_SOURCE = "MISSING_SOURCE"
OVERSIZED_STEP = "OVERSIZED_STEP"
EMPTY_INSTRUCTIONS = "EMPTY_INSTRUCTIONS"
ORPHAN_STEP = "ORPHAN_STEP"

DEFAULT_STEP_LINE_BUDGET = 400


@dataclass(frozen=True)
class PlanStep:
    """One unit of migration work, expected to leave the workspace buildable."""

    step_id: int
    title: str
    source_files: tuple[str, ...]
    target_files: tuple[str, ...]
    instructions: str
    validation: str
    dependencies: tuple[int, ...] = ()


@dataclass(frozen=True)
class MigrationPlan:
    """Validated, topologically ordered sequence of plan steps."""

    steps: tuple[PlanStep, ...]
    plan_hash: str

    @classmethod
    def from_steps(cls, steps) -> "MigrationPlan":
        steps = tuple(steps)
        _check_plan_invariants(steps)
        digest = hashlib.sha256(_serialize_steps(steps).encode("utf-8")).hexdigest()
        return cls(steps=steps, plan_hash=digest)

    @property
    def step_ids(self) -> tuple[int, ...]:
        return tuple(s.step_id for s in self.steps)

    def step(self, step_id: int) -> PlanStep:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)


@dataclass(frozen=True)
class LintFinding:
    """Non-fatal quality finding about a plan (lint, not failure)."""

    step_id: int | None
    severity: str
    code: str
    message: str


def _fail(message: str):
    raise MalformedDocument(message)


def _as_step(raw: object, position: int) -> PlanStep:
    where = f"steps[{position}]"
    if not isinstance(raw, dict):
        _fail(f"{where}: expected an object")
    unknown = sorted(set(raw) - set(STEP_KEYS))
    if unknown:
        _fail(f"{where}: unknown fields {unknown}")
    for key in ("step_id", "title", "target_files", "instructions", "validation"):
        if key not in raw:
            _fail(f"{where}: missing required field {key!r}")

    step_id = raw["step_id"]
    if isinstance(step_id, bool) or not isinstance(step_id, int):
        _fail(f"{where}: step_id must be an integer")
    if step_id < 1:
        _fail(f"{where}: step_id must be >= 1, got {step_id}")

    def text_field(key):
        value = raw[key]
        if not isinstance(value, str):
            _fail(f"{where}: {key} must be a string")
        return value

    def path_list(key, required_nonempty):
        value = raw.get(key, [])
        if not isinstance(value, list) or any(not isinstance(p, str) for p in value):
            _fail(f"{where}: {key} must be a list of strings")
        if required_nonempty and not value:
            _fail(f"{where}: {key} must not be empty")
        if len(set(value)) != len(value):
            _fail(f"{where}: {key} contains duplicate paths")
        return tuple(value)

    deps = raw.get("dependencies", [])
    if not isinstance(deps, list) or any(
        isinstance(d, bool) or not isinstance(d, int) for d in deps
    ):
        _fail(f"{where}: dependencies must be a list of integers")

    return PlanStep(
        step_id=step_id,
        title=text_field("title"),
        source_files=path_list("source_files", required_nonempty=False),
        target_files=path_list("target_files", required_nonempty=True),
        instructions=text_field("instructions"),
        validation=text_field("validation"),
        dependencies=tuple(deps),
    )


def _check_plan_invariants(steps: tuple[PlanStep, ...]) -> None:
    if not steps:
        raise EmptyPlan("plan has zero steps")

    position = {}
    for index, step in enumerate(steps):
        if step.step_id in position:
            raise DuplicateStepId(f"step_id {step.step_id} appears more than once")
        position[step.step_id] = index

    for step in steps:
        for dep in step.dependencies:
            if dep not in position:
                raise UnknownDependency(
                    f"step {step.step_id} depends on undefined step {dep}"
                )

    # Cycles take precedence over forward references: a cycle always contains
    # at least one forward edge, and the cycle is the more specific diagnosis.
    _check_acyclic(steps)

    for step in steps:
        for dep in step.dependencies:
            if position[dep] >= position[step.step_id]:
                raise ForwardDependency(
                    f"step {step.step_id} depends on step {dep}, "
                    "which does not appear earlier in the sequence"
                )


def _check_acyclic(steps: tuple[PlanStep, ...]) -> None:
    deps_of = {s.step_id: tuple(s.dependencies) for s in steps}
    WHITE, GREY, BLACK = 0, 1, 2
    color = {sid: WHITE for sid in deps_of}

    for start in deps_of:
        if color[start] != WHITE:
            continue
        stack = [(start, iter(deps_of[start]))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GREY:
                    raise CyclicDependency(
                        f"dependency cycle involving steps {nxt} and {node}"
                    )
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(deps_of[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()


def _serialize_steps(steps: tuple[PlanStep, ...]) -> str:
    payload = {
        "steps": [
            {
                "step_id": s.step_id,
                "title": s.title,
                "source_files": list(s.source_files),
                "target_files": list(s.target_files),
                "instructions": s.instructions,
                "validation": s.validation,
                "dependencies": list(s.dependencies),
            }
            for s in steps
        ]
    }
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def canonical_serialize(plan: MigrationPlan) -> str:
    """Canonical plan document: fixed key order, two-space indent, trailing newline."""
    return _serialize_steps(plan.steps)


def parse_plan(text: str) -> MigrationPlan:
    """Parse and validate a plan document.

    The canonical serialization of the result re-parses to an equal plan.
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        _fail("document root must be an object")
    unknown = sorted(set(document) - {"steps"})
    if unknown:
        _fail(f"unknown top-level fields {unknown}")
    if "steps" not in document:
        _fail("missing required field 'steps'")
    raw_steps = document["steps"]
    if not isinstance(raw_steps, list):
        _fail("'steps' must be a list")
    steps = tuple(_as_step(raw, i) for i, raw in enumerate(raw_steps))
    return MigrationPlan.from_steps(steps)


def validate_plan(
    plan: MigrationPlan,
    workspace,
    budget: int = DEFAULT_STEP_LINE_BUDGET,
    excluded_prefixes: tuple[str, ...] = (),
) -> list[LintFinding]:
    """Lint a structurally valid plan against a workspace. Never mutates either.

    MISSING_SOURCE is emitted per absent source file, OVERSIZED_STEP when a
    step's existing source files sum to more than `budget` lines,
    EMPTY_INSTRUCTIONS for blank instructions and ORPHAN_STEP for steps whose
    source files fall under an excluded library prefix.
    """
    findings = []
    for step in plan.steps:
        if not step.instructions.strip():
            findings.append(
                LintFinding(
                    step.step_id,
                    SEVERITY_ERROR,
                    EMPTY_INSTRUCTIONS,
                    f"step {step.step_id} has empty instructions",
                )
            )

        total_lines = 0
        for source in step.source_files:
            content = _read_workspace_file(workspace, source)
            if content is None:
                findings.append(
                    LintFinding(
                        step.step_id,
                        SEVERITY_ERROR,
                        MISSING_SOURCE,
                        f"source file {source!r} not found in workspace",
                    )
                )
            else:
                total_lines += len(content.splitlines())
        if total_lines > budget:
            findings.append(
                LintFinding(
                    step.step_id,
                    SEVERITY_WARNING,
                    OVERSIZED_STEP,
                    f"source files total {total_lines} lines, budget {budget}",
                )
            )

        orphaned = [
            source
            for source in step.source_files
            if _under_prefix(source, excluded_prefixes)
        ]
        if orphaned:
            findings.append(
                LintFinding(
                    step.step_id,
                    SEVERITY_WARNING,
                    ORPHAN_STEP,
                    "step migrates excluded library files: " + ", ".join(orphaned),
                )
            )

    findings.sort(key=lambda f: (f.step_id if f.step_id is not None else 0, f.code, f.message))
    return findings


def _under_prefix(path: str, prefixes: tuple[str, ...]) -> bool:
    for prefix in prefixes:
        prefix = prefix.rstrip("/")
        if prefix and (path == prefix or path.startswith(prefix + "/")):
            return True
    return False


def _read_workspace_file(workspace, rel_path: str) -> str | None:
    from .workspace import confine_path
    from .errors import PathEscape, PathInvalid

    try:
        rel = confine_path(workspace, rel_path)
    except (PathEscape, PathInvalid):
        return None
    candidate = workspace.root / rel
    if not candidate.is_file():
        return None
    return candidate.read_text(encoding="utf-8")


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def render_plan_dot(plan: MigrationPlan) -> str:
    """Render the plan as Graphviz dot text, byte-deterministic for equal plans."""
    lines = ["digraph migration_plan {"]
    for step in plan.steps:
        label = _dot_escape(f"{step.step_id}: {step.title}")
        lines.append(f'  "{step.step_id}" [label="{label}"];')
    for step in plan.steps:
        for dep in step.dependencies:
            lines.append(f'  "{dep}" -> "{step.step_id}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
