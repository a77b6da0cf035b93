"""Exception types for the migration engine, grouped by subsystem."""


class EngineError(Exception):
    """Base class for every error raised by the engine."""


# --- plan schema ---------------------------------------------------------


class MalformedDocument(EngineError):
    """Plan document is not valid JSON or violates the step schema."""


class EmptyPlan(EngineError):
    """Plan contains zero steps."""


class DuplicateStepId(EngineError):
    """Two steps share the same step_id."""


class UnknownDependency(EngineError):
    """A step depends on a step_id that is not defined anywhere."""


class ForwardDependency(EngineError):
    """A step depends on a step that appears later in the sequence."""


class CyclicDependency(EngineError):
    """The dependency references contain a cycle."""


# --- dependency graph ----------------------------------------------------


class RootNotFound(EngineError):
    """The requested root file does not exist in the workspace."""


# --- workspace tools -----------------------------------------------------


class PathEscape(EngineError):
    """A candidate path normalizes to a location outside the workspace."""


class PathInvalid(EngineError):
    """A candidate path is empty or not decodable."""


# --- completion providers ------------------------------------------------


class ProviderError(EngineError):
    """Base class for completion-provider failures."""


class ScriptExhausted(ProviderError):
    """The scripted backend has no unconsumed entries left."""


class ScriptMismatch(ProviderError):
    """No unconsumed script entry matches the request tag."""


class TransportError(ProviderError):
    """The HTTP backend could not reach the endpoint after retries."""


class RemoteError(ProviderError):
    """The HTTP backend returned a non-success status."""

    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"remote returned status {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt


class ResponseEmpty(ProviderError):
    """The backend produced an empty completion."""


class PromptTooLarge(ProviderError):
    """The request exceeds the configured character budget."""


# --- playbooks -----------------------------------------------------------


class EmptyPlaybook(EngineError):
    """A playbook file is empty or whitespace-only."""


class DuplicateName(EngineError):
    """Two playbooks share the same (kind, name)."""


class UnknownSelection(EngineError):
    """A prompt selection names a playbook not present in the set."""


class MalformedUnitsBlock(EngineError):
    """Decomposition reply lacks a well-formed fenced units block."""


class MalformedPlaybookBlock(EngineError):
    """Summarization reply lacks a well-formed fenced playbook block."""


class EmptyGoldenPair(EngineError):
    """A golden example root is missing or contains no files."""


# --- planner -------------------------------------------------------------


class MissingPlanBlock(EngineError):
    """Planner reply lacks the fenced plan block."""


class RepeatRequest(EngineError):
    """Planner re-requested a file that was already supplied."""


# --- orchestrator --------------------------------------------------------


class InvalidStrategyParam(EngineError):
    """Chunking strategy parameter out of range."""


class UnknownPlaybookInRule(EngineError):
    """A selection rule names a playbook not present in the set."""


class BankPlanMismatch(EngineError):
    """The memory bank holds a plan with a different hash."""


class StrategyMismatch(EngineError):
    """Recomputed chunk boundaries disagree with the persisted run state."""


# --- memory bank ---------------------------------------------------------


class NonEmptyForeignDir(EngineError):
    """Bank directory exists and holds unrecognized content."""


class PlanMissing(EngineError):
    """The bank has no persisted plan."""


class IndexGap(EngineError):
    """Summary indices are not contiguous."""


class HashMismatch(EngineError):
    """Persisted state refers to a different plan hash."""


class StateCorrupt(EngineError):
    """Persisted state file fails validation."""


class BankLocked(EngineError):
    """Another writer holds the bank lock."""


class IoFailure(EngineError):
    """Underlying filesystem operation failed."""


# --- judge / checklist ---------------------------------------------------


class NoItems(EngineError):
    """Checklist has no checkbox items."""


class PreCheckedItem(EngineError):
    """Checklist input contains an already-checked item."""


class MalformedCheckbox(EngineError):
    """A checklist line looks like a checkbox but does not parse."""


class MalformedVerdict(EngineError):
    """Judge verdict block does not parse after retry."""


class MissingItems(EngineError):
    """Verdict item indices do not cover the checklist exactly once."""


class IterationBudgetExhausted(EngineError):
    """Agent loop hit its iteration budget without a terminal reply."""


# --- score aggregation ---------------------------------------------------


class MisalignedModels(EngineError):
    """Paired score vectors cover different model label sets."""


class ZeroVariance(EngineError):
    """All paired differences are equal; t statistic undefined."""


class TooFewPairs(EngineError):
    """Fewer than two pairs supplied to the paired t statistic."""


class EmptyRuns(EngineError):
    """No runs supplied for aggregation."""


# --- configuration -------------------------------------------------------


class ConfigError(EngineError):
    """Engine configuration is invalid or references missing paths."""
