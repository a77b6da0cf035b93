"""Checklist-based blind-audit judging and score aggregation.

The judge explores only the migrated target roots with a read-only tool
subset; access to anything else is mechanically denied, forcing it to verify
functional logic rather than compare against the legacy source. Scores are
never fed back into the migration pipeline: judging has no bank access by
construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .blocks import blocks_named, first_block, parse_tool_call
from .errors import (
    EmptyRuns,
    IterationBudgetExhausted,
    MalformedCheckbox,
    MalformedVerdict,
    MisalignedModels,
    MissingItems,
    NoItems,
    PreCheckedItem,
    TooFewPairs,
    ZeroVariance,
)
from .providers import ChatMessage, CompletionRequest, ROLE_ASSISTANT, ROLE_SYSTEM, ROLE_USER
from .workspace import READ_ONLY_TOOLS, Workspace, dispatch_tool, format_tool_result

_CHECKBOX_RE = re.compile(r"^- \[(.)\]\s*(.*)$")
_VERDICT_LINE_RE = re.compile(r"^ITEM\s+(\d+):\s*(PASS|FAIL)\s*--\s*(.+?)\s*$")


@dataclass(frozen=True)
class ChecklistItem:
    index: int  # global, 1-based
    text: str
    section: str


@dataclass(frozen=True)
class Checklist:
    title: str
    sections: tuple[tuple[str, tuple[str, ...]], ...]
    items: tuple[ChecklistItem, ...]

    def __len__(self):
        return len(self.items)


def parse_checklist(markdown: str) -> Checklist:
    """Parse a blank checklist: `#` title, `##` sections, `- [ ]` items.

    Pre-checked items are rejected; the input must be an unfilled checklist.
    """
    title = ""
    section = ""
    sections: list[tuple[str, list[str]]] = []
    items: list[ChecklistItem] = []

    for raw_line in markdown.splitlines():
        line = raw_line.strip()
        if line.startswith("# ") and not title:
            title = line[2:].strip()
            continue
        if line.startswith("## "):
            section = line[3:].strip()
            sections.append((section, []))
            continue
        if line.startswith("- ["):
            match = _CHECKBOX_RE.match(line)
            if not match:
                raise MalformedCheckbox(f"unparseable checkbox line: {raw_line!r}")
            mark, text = match.group(1), match.group(2).strip()
            if mark in ("x", "X"):
                raise PreCheckedItem(f"checklist input must be blank: {raw_line!r}")
            if mark != " " or not text:
                raise MalformedCheckbox(f"unparseable checkbox line: {raw_line!r}")
            items.append(ChecklistItem(index=len(items) + 1, text=text, section=section))
            if not sections:
                sections.append(("", []))
            sections[-1][1].append(text)

    if not items:
        raise NoItems("checklist contains no checkbox items")
    return Checklist(
        title=title,
        sections=tuple((heading, tuple(texts)) for heading, texts in sections),
        items=tuple(items),
    )


def render_checklist(checklist: Checklist) -> str:
    lines = []
    if checklist.title:
        lines.append(f"# {checklist.title}")
    for heading, texts in checklist.sections:
        if heading:
            lines.append(f"## {heading}")
        for text in texts:
            lines.append(f"- [ ] {text}")
    return "\n".join(lines)


@dataclass(frozen=True)
class VerdictItem:
    index: int
    passed: bool
    evidence: str


@dataclass(frozen=True)
class ChecklistVerdict:
    items: tuple[VerdictItem, ...]

    def __post_init__(self):
        indices = [item.index for item in self.items]
        expected = list(range(1, len(self.items) + 1))
        if sorted(indices) != expected:
            raise MissingItems(
                f"verdict indices {sorted(indices)} do not cover 1..{len(self.items)}"
            )
        object.__setattr__(
            self, "items", tuple(sorted(self.items, key=lambda item: item.index))
        )

    @property
    def score(self) -> float:
        return sum(1 for item in self.items if item.passed) / len(self.items)


def score_verdict(verdict: ChecklistVerdict) -> float:
    """Passed items divided by total items."""
    return verdict.score


def _parse_verdict(text: str, n_items: int) -> ChecklistVerdict:
    entries: dict[int, VerdictItem] = {}
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        match = _VERDICT_LINE_RE.match(line)
        if not match:
            raise MalformedVerdict(f"unparseable verdict line: {raw_line!r}")
        index = int(match.group(1))
        if index in entries:
            raise MissingItems(f"verdict lists item {index} more than once")
        if index < 1 or index > n_items:
            raise MissingItems(f"verdict lists unknown item index {index}")
        entries[index] = VerdictItem(
            index=index, passed=match.group(2) == "PASS", evidence=match.group(3)
        )
    missing = sorted(set(range(1, n_items + 1)) - set(entries))
    if missing:
        raise MissingItems(f"verdict omits item indices {missing}")
    return ChecklistVerdict(items=tuple(entries.values()))


_JUDGE_SYSTEM = (
    "You are a blind auditor. Verify each checklist item against the migrated "
    "code only; the legacy implementation is not accessible. Explore the code "
    "with the read-only tools, then deliver a verdict with concrete evidence "
    "per item."
)

_VERDICT_CONTRACT = """Interact using exactly one fenced block per reply:
- A `tool` block containing one JSON object {"tool": "<name>", "args": {...}}.
  Available read-only tools: list_files(prefix), read_file(path),
  grep(pattern[, prefix][, regex]). All argument values must be strings.
- A `verdict` block when the audit is complete, with one line per checklist item:
  ITEM <n>: PASS -- <evidence>
  ITEM <n>: FAIL -- <evidence>"""

_VERDICT_REMINDER = (
    "Verdict format reminder: produce a fenced `verdict` block with exactly one "
    "line per checklist item, `ITEM <n>: PASS|FAIL -- <evidence>`."
)
_FORMAT_REMINDER = "Format reminder: reply with exactly one fenced `tool` or `verdict` block."


def judge_migration(
    checklist: Checklist,
    target_roots,
    workspace: Workspace,
    provider,
    max_iterations: int = 30,
    tag_prefix: str = "judge",
) -> ChecklistVerdict:
    """Blind-audit the migrated code against the checklist.

    Tool access is restricted to {list_files, read_file, grep} under
    `target_roots`; everything else returns ToolDenied and the audit
    continues. A malformed verdict gets one retry."""
    target_roots = tuple(target_roots)
    user_prompt = "\n".join(
        [
            "Audit the migrated code under the following target roots:",
            *[f"  - {root}" for root in target_roots],
            "",
            "Checklist:",
            render_checklist(checklist),
            "",
            _VERDICT_CONTRACT,
        ]
    )
    messages = [
        ChatMessage(ROLE_SYSTEM, _JUDGE_SYSTEM),
        ChatMessage(ROLE_USER, user_prompt),
    ]

    iterations = 0
    verdict_retry_used = False
    while iterations < max_iterations:
        iterations += 1
        request = CompletionRequest(
            messages=tuple(messages), tag=f"{tag_prefix}.t{iterations}"
        )
        reply = provider.complete(request).content
        messages.append(ChatMessage(ROLE_ASSISTANT, reply))

        verdict_text = first_block(reply, "verdict")
        if verdict_text is not None:
            try:
                return _parse_verdict(verdict_text, len(checklist))
            except MalformedVerdict:
                if verdict_retry_used:
                    raise
                verdict_retry_used = True
                messages.append(ChatMessage(ROLE_USER, _VERDICT_REMINDER))
                continue

        tool_bodies = blocks_named(reply, "tool")
        if tool_bodies:
            call = parse_tool_call(tool_bodies[0])
            if call is None:
                messages.append(ChatMessage(ROLE_USER, _FORMAT_REMINDER))
                continue
            result = dispatch_tool(
                workspace, call, allowed_roots=target_roots, allowed_tools=READ_ONLY_TOOLS
            )
            messages.append(ChatMessage(ROLE_USER, format_tool_result(result)))
            continue

        messages.append(ChatMessage(ROLE_USER, _FORMAT_REMINDER))

    raise IterationBudgetExhausted(
        f"judge produced no verdict within {max_iterations} iterations"
    )


# -- aggregation -------------------------------------------------------------

# Ablation flag matrix for the four known configuration names:
# (task_style_playbooks, client_playbook, planner_orchestrator)
_KNOWN_CONFIG_FLAGS = {
    "single_agent_baseline": (False, False, False),
    "single_agent_yt_specific": (True, True, False),
    "multi_agent": (True, False, True),
    "multi_agent_yt_specific": (True, True, True),
}


@dataclass(frozen=True)
class ConfigScores:
    config_name: str
    per_model_mean: dict[str, float]
    run_counts: dict[str, int]
    task_style_playbooks: bool | None = None
    client_playbook: bool | None = None
    planner_orchestrator: bool | None = None

    @property
    def total(self) -> float:
        """Unweighted mean of per-model means; run counts do not weigh in."""
        means = list(self.per_model_mean.values())
        return sum(means) / len(means)


def aggregate_scores(runs) -> dict[str, ConfigScores]:
    """Aggregate (config, model, score) runs into per-config summaries."""
    runs = list(runs)
    if not runs:
        raise EmptyRuns("no runs to aggregate")

    grouped: dict[str, dict[str, list[float]]] = {}
    for config, model, score in runs:
        grouped.setdefault(config, {}).setdefault(model, []).append(float(score))

    result: dict[str, ConfigScores] = {}
    for config in sorted(grouped):
        models = grouped[config]
        per_model_mean = {
            model: sum(scores) / len(scores) for model, scores in sorted(models.items())
        }
        run_counts = {model: len(scores) for model, scores in sorted(models.items())}
        flags = _KNOWN_CONFIG_FLAGS.get(config, (None, None, None))
        result[config] = ConfigScores(
            config_name=config,
            per_model_mean=per_model_mean,
            run_counts=run_counts,
            task_style_playbooks=flags[0],
            client_playbook=flags[1],
            planner_orchestrator=flags[2],
        )
    return result


def paired_t(a, b) -> tuple[float, int]:
    """Paired t statistic over per-model means, with n-1 degrees of freedom.

    t = mean(d) / (sd(d) / sqrt(n)) with the sample (n-1) standard deviation
    of the differences d_i = a_i - b_i. The p-value is left to the caller;
    compare |t| against the t-distribution critical value for the dof.
    """
    if set(a) != set(b):
        raise MisalignedModels(
            f"model label sets differ: {sorted(a)} vs {sorted(b)}"
        )
    n = len(a)
    if n < 2:
        raise TooFewPairs(f"need at least 2 pairs, got {n}")
    diffs = [a[model] - b[model] for model in sorted(a)]
    if all(d == diffs[0] for d in diffs):
        raise ZeroVariance("all paired differences are equal; t is undefined")
    mean_d = sum(diffs) / n
    variance = sum((d - mean_d) ** 2 for d in diffs) / (n - 1)
    t = mean_d / (math.sqrt(variance) / math.sqrt(n))
    return t, n - 1
