"""codeport: a framework-agnostic, multi-agent code-migration engine.

The pipeline plans a migration from static import analysis plus a recursive
planning loop, executes it chunk-by-chunk through a tool-using coder agent
with forced self-review, checkpoints everything in a file-based memory bank
for resume, and scores the result with a blind-audit checklist judge. A
pluggable completion provider (scripted replay or generic HTTP chat) keeps
the whole pipeline deterministic and testable offline.
"""

from .plan import (
    LintFinding,
    MigrationPlan,
    PlanStep,
    canonical_serialize,
    parse_plan,
    render_plan_dot,
    validate_plan,
)
from .depgraph import (
    DependencyGraph,
    ImportRef,
    MigrationOrder,
    build_graph,
    extract_imports,
    leaf_first_order,
)
from .workspace import (
    ToolCall,
    ToolResult,
    Workspace,
    confine_path,
    dispatch_tool,
    run_checked_command,
)
from .providers import (
    ChatMessage,
    CompletionProvider,
    CompletionRequest,
    CompletionResponse,
    HttpProvider,
    RecordingProvider,
    ScriptedProvider,
    record_transcript,
)
from .playbooks import (
    GoldenPair,
    Playbook,
    PlaybookSet,
    assemble_system_prompt,
    generate_client_playbook,
    load_set,
)
from .planner import PlannerRoundResult, plan_migration, plan_round
from .orchestrator import (
    ChunkStrategy,
    FailurePolicy,
    RunReport,
    SelectionRule,
    SubStep,
    chunk_plan,
    resume_migration,
    run_migration,
    run_single_agent,
    select_playbooks,
)
from .coder import CoderContext, CoderOutcome, StepSummary, execute_substep
from .bank import (
    BankRecordingProvider,
    MemoryBank,
    RunState,
    append_summary,
    init_bank,
    load_plan,
    load_state,
    load_summaries,
    save_plan,
    save_state,
    snapshot_playbooks,
)
from .judge import (
    Checklist,
    ChecklistVerdict,
    ConfigScores,
    aggregate_scores,
    judge_migration,
    paired_t,
    parse_checklist,
    score_verdict,
)
from .config import EngineConfig, load_config

__version__ = "0.1.0"
