"""Engine configuration: one JSON file drives every CLI command.

Relative paths inside the file resolve against the file's directory, so a
fixture tree (config + corpus + playbooks + transcripts) stays portable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .orchestrator import ChunkStrategy, FailurePolicy, SelectionRule
from .playbooks import KIND_CLIENT, KIND_ORDER, KIND_STYLE, KIND_TASK, PlaybookSet, load_set
from .providers import (
    DEFAULT_CONTEXT_CHAR_BUDGET,
    DEFAULT_TEMPERATURE,
    CompletionProvider,
    HttpProvider,
    ScriptedProvider,
)
from .workspace import Workspace

PROVIDER_SCRIPTED = "scripted"
PROVIDER_HTTP = "http"


@dataclass(frozen=True)
class ProviderConfig:
    kind: str
    script_path: Path | None = None
    endpoint: str | None = None
    model: str | None = None
    token_env: str | None = None
    temperature: float = DEFAULT_TEMPERATURE


@dataclass(frozen=True)
class Limits:
    max_rounds: int = 5
    max_iterations: int = 40
    oversized_step_budget: int = 400
    context_char_budget: int = DEFAULT_CONTEXT_CHAR_BUDGET


@dataclass(frozen=True)
class Flags:
    use_planner_orchestrator: bool = True
    include_client_playbook: bool = True
    include_task_style_playbooks: bool = True


@dataclass(frozen=True)
class EngineConfig:
    config_name: str
    model_label: str
    workspace_root: Path
    bank_dir: Path
    root_file: str | None = None
    build_cmd: str | None = None
    test_cmd: str | None = None
    timeout_secs: int = 120
    provider: ProviderConfig = field(default_factory=lambda: ProviderConfig(PROVIDER_SCRIPTED))
    playbooks: dict = field(default_factory=dict)
    excluded_prefixes: tuple[str, ...] = ()
    strategy: ChunkStrategy = field(default_factory=ChunkStrategy)
    failure_policy: FailurePolicy = field(default_factory=FailurePolicy)
    selection_rules: tuple[SelectionRule, ...] = ()
    limits: Limits = field(default_factory=Limits)
    flags: Flags = field(default_factory=Flags)
    autofix_imports: dict = field(default_factory=dict)
    source_ext: str = "py"
    lock_stale_secs: float = 3600.0


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _resolve(base: Path, raw: str) -> Path:
    path = Path(raw)
    return path if path.is_absolute() else (base / path)


def load_config(path) -> EngineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _expect(isinstance(raw, dict), "config root must be an object")
    base = path.parent

    workspace_root = _resolve(base, raw.get("workspace_root", "."))
    _expect(workspace_root.is_dir(), f"workspace_root {workspace_root} is not a directory")
    bank_dir = _resolve(base, raw.get("bank_dir", "bank"))

    provider_raw = raw.get("provider", {})
    _expect(isinstance(provider_raw, dict), "provider must be an object")
    kind = provider_raw.get("kind", PROVIDER_SCRIPTED)
    _expect(kind in (PROVIDER_SCRIPTED, PROVIDER_HTTP), f"unknown provider kind {kind!r}")
    script_path = None
    if kind == PROVIDER_SCRIPTED:
        _expect("script_path" in provider_raw, "scripted provider requires script_path")
        script_path = _resolve(base, provider_raw["script_path"])
        _expect(script_path.is_file(), f"script file not found: {script_path}")
    else:
        _expect(bool(provider_raw.get("endpoint")), "http provider requires endpoint")
        _expect(bool(provider_raw.get("model")), "http provider requires model")
    provider = ProviderConfig(
        kind=kind,
        script_path=script_path,
        endpoint=provider_raw.get("endpoint"),
        model=provider_raw.get("model"),
        token_env=provider_raw.get("token_env"),
        temperature=float(provider_raw.get("temperature", DEFAULT_TEMPERATURE)),
    )

    playbooks_raw = raw.get("playbooks", {})
    _expect(isinstance(playbooks_raw, dict), "playbooks must be an object")
    playbooks: dict[str, list[Path]] = {}
    for pb_kind, paths in playbooks_raw.items():
        _expect(pb_kind in KIND_ORDER, f"unknown playbook kind {pb_kind!r}")
        _expect(isinstance(paths, list), f"playbooks[{pb_kind}] must be a list")
        resolved = [_resolve(base, p) for p in paths]
        for pb_path in resolved:
            _expect(pb_path.is_file(), f"playbook file not found: {pb_path}")
        playbooks[pb_kind] = resolved

    strategy_raw = raw.get("strategy", {})
    strategy = ChunkStrategy(
        kind=strategy_raw.get("kind", "per_step"),
        size=int(strategy_raw.get("size", 2)),
        max_merge=int(strategy_raw.get("max_merge", 4)),
    )
    _expect(
        strategy.kind in ("per_step", "fixed", "file_cluster"),
        f"unknown strategy kind {strategy.kind!r}",
    )

    policy_raw = raw.get("failure_policy", {})
    try:
        policy = FailurePolicy(
            max_retries=int(policy_raw.get("max_retries", 2)),
            on_exhaustion=policy_raw.get("on_exhaustion", "abort"),
            skip_cascade=bool(policy_raw.get("skip_cascade", True)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    rules = []
    for index, rule_raw in enumerate(raw.get("selection_rules", [])):
        _expect(isinstance(rule_raw, dict), f"selection_rules[{index}] must be an object")
        trigger = rule_raw.get("trigger")
        _expect(
            trigger in ("target_prefix", "instruction_keyword"),
            f"selection_rules[{index}] has unknown trigger {trigger!r}",
        )
        playbook_ref = rule_raw.get("playbook", "")
        _expect(
            isinstance(playbook_ref, str) and "/" in playbook_ref,
            f"selection_rules[{index}].playbook must look like 'kind/name'",
        )
        pb_kind, pb_name = playbook_ref.split("/", 1)
        _expect(pb_kind in (KIND_TASK, KIND_CLIENT), "rules may target task or client playbooks")
        rules.append(
            SelectionRule(
                trigger=trigger,
                value=str(rule_raw.get("value", "")),
                playbook_kind=pb_kind,
                playbook_name=pb_name,
            )
        )

    limits_raw = raw.get("limits", {})
    limits = Limits(
        max_rounds=int(limits_raw.get("max_rounds", 5)),
        max_iterations=int(limits_raw.get("max_iterations", 40)),
        oversized_step_budget=int(limits_raw.get("oversized_step_budget", 400)),
        context_char_budget=int(
            limits_raw.get("context_char_budget", DEFAULT_CONTEXT_CHAR_BUDGET)
        ),
    )

    flags_raw = raw.get("flags", {})
    flags = Flags(
        use_planner_orchestrator=bool(flags_raw.get("use_planner_orchestrator", True)),
        include_client_playbook=bool(flags_raw.get("include_client_playbook", True)),
        include_task_style_playbooks=bool(flags_raw.get("include_task_style_playbooks", True)),
    )

    autofix = raw.get("autofix_imports", {})
    _expect(
        isinstance(autofix, dict)
        and all(isinstance(k, str) and isinstance(v, str) for k, v in autofix.items()),
        "autofix_imports must map symbol prefixes to import lines",
    )

    return EngineConfig(
        config_name=str(raw.get("config_name", "default")),
        model_label=str(raw.get("model_label", "model")),
        workspace_root=workspace_root,
        bank_dir=bank_dir,
        root_file=raw.get("root_file"),
        build_cmd=raw.get("build_cmd"),
        test_cmd=raw.get("test_cmd"),
        timeout_secs=int(raw.get("timeout_secs", 120)),
        provider=provider,
        playbooks=playbooks,
        excluded_prefixes=tuple(raw.get("excluded_prefixes", [])),
        strategy=strategy,
        failure_policy=policy,
        selection_rules=tuple(rules),
        limits=limits,
        flags=flags,
        autofix_imports=dict(autofix),
        source_ext=str(raw.get("source_ext", "py")),
        lock_stale_secs=float(raw.get("lock_stale_secs", 3600.0)),
    )


def build_workspace(cfg: EngineConfig) -> Workspace:
    return Workspace(
        root=cfg.workspace_root,
        build_cmd=cfg.build_cmd,
        test_cmd=cfg.test_cmd,
        timeout_secs=cfg.timeout_secs,
        autofix_imports=cfg.autofix_imports,
    )


def build_provider(cfg: EngineConfig, script_override=None) -> CompletionProvider:
    if script_override is not None:
        return ScriptedProvider.from_file(
            script_override, max_chars=cfg.limits.context_char_budget
        )
    if cfg.provider.kind == PROVIDER_SCRIPTED:
        return ScriptedProvider.from_file(
            cfg.provider.script_path, max_chars=cfg.limits.context_char_budget
        )
    return HttpProvider(
        endpoint=cfg.provider.endpoint,
        model=cfg.provider.model,
        token_env=cfg.provider.token_env,
        max_chars=cfg.limits.context_char_budget,
    )


def build_playbooks(cfg: EngineConfig) -> PlaybookSet:
    """Load the playbook set, honoring the ablation flags: the general tier is
    always included, style+task and client tiers are flag-controlled."""
    selected: dict[str, list] = {}
    for kind, paths in cfg.playbooks.items():
        if kind in (KIND_STYLE, KIND_TASK) and not cfg.flags.include_task_style_playbooks:
            continue
        if kind == KIND_CLIENT and not cfg.flags.include_client_playbook:
            continue
        selected[kind] = paths
    return load_set(selected)
