"""Shared test utilities: fixture providers and independent oracles.

The oracles here (brute-force SCC, reachability, tree digests, manual
statistics) deliberately do not reuse the engine's implementations.
"""

from __future__ import annotations

import hashlib
import json
import random
from pathlib import Path

from codeport.plan import MigrationPlan, PlanStep
from codeport.providers import CompletionProvider, ScriptedProvider, ScriptEntry


def sequence_provider(*responses) -> ScriptedProvider:
    return ScriptedProvider([ScriptEntry(response=r) for r in responses])


def tag_provider(entries) -> ScriptedProvider:
    return ScriptedProvider(
        [ScriptEntry(response=response, tag=tag) for tag, response in entries],
        mode="tag",
    )


def fence(name: str, body: str) -> str:
    return f"```{name}\n{body}\n```"


def tool_reply(tool: str, **args) -> str:
    payload = json.dumps({"tool": tool, "args": args}, ensure_ascii=False)
    return fence("tool", payload)


def write_reply(path: str, content: str) -> str:
    return tool_reply("write_file", path=path, content=content)


SUMMARY_OK = fence(
    "summary",
    "1. Changes Made\n- did the work\n\n2. Key Fixes & Learnings\n- none",
)


def coder_success_turns(writes, build_first=False) -> list[str]:
    """Canonical scripted happy-path: writes, build, done, confirmed, summary."""
    turns = []
    if build_first:
        turns.append(tool_reply("run_build"))
    for path, content in writes:
        turns.append(write_reply(path, content))
    turns.append(tool_reply("run_build"))
    turns.append(fence("done", "done"))
    turns.append(fence("confirmed", "confirmed"))
    turns.append(SUMMARY_OK)
    return turns


class CapturingProvider(CompletionProvider):
    """Wraps a provider, stashing every request for later inspection."""

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.inner.complete(request)


class CountingProvider(CompletionProvider):
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        return self.inner.complete(request)


class InterruptingProvider(CompletionProvider):
    """Raises InterruptedError when a request tag matches the prefix."""

    def __init__(self, inner, tag_prefix: str):
        self.inner = inner
        self.tag_prefix = tag_prefix

    def complete(self, request):
        if request.tag.startswith(self.tag_prefix):
            raise InterruptedError(f"simulated interruption at {request.tag}")
        return self.inner.complete(request)


# -- filesystem oracle ------------------------------------------------------


def tree_digest(root: Path, ignore_names=()) -> str:
    """Order-stable digest of a directory tree: relative path + content bytes."""
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if any(part in ignore_names for part in path.relative_to(root).parts):
            continue
        if path.is_file():
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(b"\0")
            digest.update(path.read_bytes())
            digest.update(b"\0")
    return digest.hexdigest()


# -- graph oracles ----------------------------------------------------------


def reachable(adjacency: dict, start) -> set:
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in adjacency.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def brute_force_sccs(nodes, edges) -> set[frozenset]:
    adjacency = {node: set() for node in nodes}
    for a, b in edges:
        adjacency[a].add(b)
    reach = {node: reachable(adjacency, node) for node in nodes}
    components = set()
    for node in nodes:
        component = frozenset(
            other for other in nodes if other in reach[node] and node in reach[other]
        )
        components.add(component)
    return components


def has_cycle(nodes, edges) -> bool:
    adjacency = {node: set() for node in nodes}
    for a, b in edges:
        adjacency[a].add(b)
    for node in nodes:
        if any(node in reachable(adjacency, nxt) for nxt in adjacency[node]):
            return True
    return False


def random_graph(rng: random.Random, max_nodes: int = 30):
    from codeport.depgraph import DependencyGraph

    n = rng.randint(1, max_nodes)
    nodes = [f"f{i:02d}.py" for i in range(n)]
    edges = set()
    for _ in range(rng.randint(0, 2 * n)):
        a, b = rng.randrange(n), rng.randrange(n)
        if a != b:
            edges.add((nodes[a], nodes[b]))
    return DependencyGraph(
        nodes=tuple(sorted(nodes)), edges=tuple(sorted(edges)), externals=()
    )


# -- plan generators ---------------------------------------------------------

_TITLE_POOL = [
    "port module",
    'migrate the "core" layer',
    "rework metrics \\ helpers",
    "scaffold päckage",
    "wire entry point",
]


def random_plan(rng: random.Random, max_steps: int = 8) -> MigrationPlan:
    n = rng.randint(1, max_steps)
    ids = rng.sample(range(1, 200), n)
    steps = []
    for position, step_id in enumerate(ids):
        n_deps = rng.randint(0, position)
        deps = rng.sample(ids[:position], n_deps) if n_deps else []
        n_sources = rng.randint(0, 2)
        n_targets = rng.randint(1, 3)
        steps.append(
            PlanStep(
                step_id=step_id,
                title=f"{rng.choice(_TITLE_POOL)} {step_id}",
                source_files=tuple(f"src/m{step_id}_{j}.py" for j in range(n_sources)),
                target_files=tuple(f"out/m{step_id}_{j}.py" for j in range(n_targets)),
                instructions=f"port unit {step_id} faithfully",
                validation=f"unit {step_id} builds",
                dependencies=tuple(deps),
            )
        )
    return MigrationPlan.from_steps(steps)


def mutate_plan_document(rng: random.Random, plan: MigrationPlan):
    """Corrupt a valid plan document; returns (text, expected_error_name)."""
    from codeport.plan import canonical_serialize

    document = json.loads(canonical_serialize(plan))
    steps = document["steps"]
    kind = rng.choice(
        [
            "not_json",
            "empty_steps",
            "duplicate_id",
            "unknown_dep",
            "forward_dep",
            "cycle",
            "bad_step_id",
            "empty_targets",
            "duplicate_paths",
            "missing_field",
            "unknown_field",
        ]
    )
    if kind == "not_json":
        return "{steps: oops", "MalformedDocument"
    if kind == "empty_steps":
        document["steps"] = []
        return json.dumps(document), "EmptyPlan"
    if kind == "duplicate_id":
        steps.append(dict(steps[-1]))
        return json.dumps(document), "DuplicateStepId"
    if kind == "unknown_dep":
        steps[-1]["dependencies"] = list(steps[-1]["dependencies"]) + [9999]
        return json.dumps(document), "UnknownDependency"
    if kind == "forward_dep":
        extra = dict(steps[0])
        extra["step_id"] = 9998
        extra["dependencies"] = []
        steps.append(extra)
        steps[0] = dict(steps[0])
        steps[0]["dependencies"] = list(steps[0]["dependencies"]) + [9998]
        return json.dumps(document), "ForwardDependency"
    if kind == "cycle":
        if len(steps) == 1:
            steps[0]["dependencies"] = [steps[0]["step_id"]]
        else:
            steps[0]["dependencies"] = list(steps[0]["dependencies"]) + [
                steps[-1]["step_id"]
            ]
            steps[-1]["dependencies"] = list(steps[-1]["dependencies"]) + [
                steps[0]["step_id"]
            ]
        return json.dumps(document), "CyclicDependency"
    if kind == "bad_step_id":
        steps[0]["step_id"] = 0
        return json.dumps(document), "MalformedDocument"
    if kind == "empty_targets":
        steps[0]["target_files"] = []
        return json.dumps(document), "MalformedDocument"
    if kind == "duplicate_paths":
        target = steps[0]["target_files"][0]
        steps[0]["target_files"] = [target, target]
        return json.dumps(document), "MalformedDocument"
    if kind == "missing_field":
        del steps[0]["validation"]
        return json.dumps(document), "MalformedDocument"
    # unknown_field
    steps[0]["dependancies"] = []
    return json.dumps(document), "MalformedDocument"


# -- statistics oracle --------------------------------------------------------


def manual_paired_t(a_values, b_values):
    """Textbook paired t computation, independent of the engine's code."""
    import math

    diffs = [x - y for x, y in zip(a_values, b_values)]
    n = len(diffs)
    mean = sum(diffs) / n
    sd = math.sqrt(sum((d - mean) ** 2 for d in diffs) / (n - 1))
    return mean / (sd / math.sqrt(n)), n - 1
