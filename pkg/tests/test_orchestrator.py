import json

import pytest

from codeport.bank import (
    init_bank,
    load_state,
    load_summaries,
    save_plan,
)
from codeport.errors import (
    BankPlanMismatch,
    InvalidStrategyParam,
    StrategyMismatch,
    UnknownPlaybookInRule,
)
from codeport.orchestrator import (
    ChunkStrategy,
    FailurePolicy,
    SelectionRule,
    chunk_plan,
    resume_migration,
    run_migration,
    run_single_agent,
    select_playbooks,
    single_agent_step,
)
from codeport.plan import MigrationPlan, PlanStep
from codeport.playbooks import Playbook, PlaybookSet
from helpers import (
    CapturingProvider,
    InterruptingProvider,
    coder_success_turns,
    fence,
    sequence_provider,
)

BUILD_OK = "python3 -c 'pass'"

PLAYBOOKS = PlaybookSet(
    playbooks=(
        Playbook.from_body("general", "workflow", "general rules\n"),
        Playbook.from_body("style", "conventions", "style rules\n"),
        Playbook.from_body("task", "porting", "task rules\n"),
        Playbook.from_body("client", "acme", "client rules\n"),
    )
)


def make_step(step_id, deps=(), targets=None, instructions=None):
    return PlanStep(
        step_id=step_id,
        title=f"step {step_id}",
        source_files=(),
        target_files=tuple(targets or (f"out/{step_id}.py",)),
        instructions=instructions or f"port {step_id}",
        validation=f"{step_id} builds",
        dependencies=tuple(deps),
    )


def linear_plan(n):
    return MigrationPlan.from_steps(
        [make_step(i, deps=(i - 1,) if i > 1 else ()) for i in range(1, n + 1)]
    )


# -- chunking -------------------------------------------------------------------


def test_chunk_per_step():
    chunks = chunk_plan(linear_plan(5), ChunkStrategy("per_step"))
    assert [c.step_ids for c in chunks] == [(1,), (2,), (3,), (4,), (5,)]
    assert [c.chunk_index for c in chunks] == [0, 1, 2, 3, 4]


def test_chunk_fixed_sizes():
    chunks = chunk_plan(linear_plan(5), ChunkStrategy("fixed", size=2))
    assert [c.step_ids for c in chunks] == [(1, 2), (3, 4), (5,)]


def test_chunk_fixed_invalid_param():
    with pytest.raises(InvalidStrategyParam):
        chunk_plan(linear_plan(2), ChunkStrategy("fixed", size=0))
    with pytest.raises(InvalidStrategyParam):
        chunk_plan(linear_plan(2), ChunkStrategy("file_cluster", max_merge=0))
    with pytest.raises(InvalidStrategyParam):
        chunk_plan(linear_plan(2), ChunkStrategy("zigzag"))


def test_chunk_file_cluster_merges_shared_targets():
    # Steps 2 and 3 share out/shared.py; neighbors stay separate.
    plan = MigrationPlan.from_steps(
        [
            make_step(1),
            make_step(2, deps=(1,), targets=("out/shared.py",)),
            make_step(3, deps=(2,), targets=("out/shared.py", "out/extra.py")),
            make_step(4, deps=(3,)),
        ]
    )
    chunks = chunk_plan(plan, ChunkStrategy("file_cluster"))
    assert [c.step_ids for c in chunks] == [(1,), (2, 3), (4,)]


def test_chunk_file_cluster_respects_cap():
    shared = ("out/one.py",)
    plan = MigrationPlan.from_steps(
        [make_step(i, deps=(i - 1,) if i > 1 else (), targets=shared) for i in range(1, 6)]
    )
    chunks = chunk_plan(plan, ChunkStrategy("file_cluster", max_merge=2))
    assert [c.step_ids for c in chunks] == [(1, 2), (3, 4), (5,)]


# -- playbook selection -----------------------------------------------------------


def test_select_playbooks_safe_default_includes_all():
    selection = select_playbooks([make_step(1)], PLAYBOOKS, rules=())
    assert selection == PLAYBOOKS.names()


def test_select_playbooks_rule_miss_excludes_client():
    rules = (SelectionRule("instruction_keyword", "metric", "client", "acme"),)
    selection = select_playbooks([make_step(1)], PLAYBOOKS, rules)
    assert ("client", "acme") not in selection
    assert ("general", "workflow") in selection
    assert ("style", "conventions") in selection


def test_select_playbooks_rule_hit_includes_client():
    rules = (SelectionRule("instruction_keyword", "metric", "client", "acme"),)
    steps = [make_step(1, instructions="port the metric helpers")]
    assert ("client", "acme") in select_playbooks(steps, PLAYBOOKS, rules)


def test_select_playbooks_target_prefix_rule():
    rules = (SelectionRule("target_prefix", "out/deep", "task", "porting"),)
    miss = select_playbooks([make_step(1)], PLAYBOOKS, rules)
    assert ("task", "porting") not in miss
    hit = select_playbooks(
        [make_step(1, targets=("out/deep/x.py",))], PLAYBOOKS, rules
    )
    assert ("task", "porting") in hit


def test_select_playbooks_unknown_rule_target():
    rules = (SelectionRule("instruction_keyword", "x", "client", "ghost"),)
    with pytest.raises(UnknownPlaybookInRule):
        select_playbooks([make_step(1)], PLAYBOOKS, rules)


# -- run/resume --------------------------------------------------------------------


def fresh_bank(tmp_path, plan, name="bank"):
    bank = init_bank(tmp_path / name)
    save_plan(bank, plan)
    return bank


def run_ok_provider(n_chunks):
    turns = []
    for i in range(n_chunks):
        turns.extend(coder_success_turns([(f"out/{i + 1}.py", f"x{i + 1}\n")]))
    return sequence_provider(*turns)


def test_run_migration_happy_path(make_workspace, tmp_path):
    plan = linear_plan(3)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    provider = CapturingProvider(run_ok_provider(3))
    report = run_migration(
        plan, ws, PLAYBOOKS, provider, FailurePolicy(), ChunkStrategy(), bank
    )
    assert report.completed is True
    assert set(report.step_status.values()) == {"done"}
    assert report.attempts == {1: 1, 2: 1, 3: 1}
    assert len(load_summaries(bank)) == 3
    state = load_state(bank)
    assert state.next_chunk == 3
    assert len(report.chunk_seconds) == 3

    # Full-history property: chunk k's task prompt carries k prior summaries,
    # including the one accepted just before it.
    for k in range(3):
        first = next(r for r in provider.requests if r.tag == f"coder.chunk{k}.a1.t1")
        task = first.messages[1].content
        assert task.count("--- summary ") == k
        if k:
            assert "1. Changes Made" in task


def test_run_migration_rejects_other_plan(make_workspace, tmp_path):
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, linear_plan(2))
    with pytest.raises(BankPlanMismatch):
        run_migration(
            linear_plan(3), ws, PLAYBOOKS, sequence_provider(), FailurePolicy(),
            ChunkStrategy(), bank,
        )


def test_retry_after_failure_counts_attempts(make_workspace, tmp_path):
    plan = linear_plan(2)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    turns = coder_success_turns([("out/1.py", "one\n")])
    turns.append(fence("abort", "flaky first try"))  # chunk 1, attempt 1
    turns.extend(coder_success_turns([("out/2.py", "two\n")]))  # attempt 2
    provider = CapturingProvider(sequence_provider(*turns))
    report = run_migration(
        plan, ws, PLAYBOOKS, provider, FailurePolicy(max_retries=2), ChunkStrategy(), bank
    )
    assert report.step_status == {1: "done", 2: "done"}
    assert report.attempts == {1: 1, 2: 2}
    # The retry prompt carries the failure output.
    retry_tasks = [
        r.messages[1].content
        for r in provider.requests
        if r.tag.startswith("coder.chunk1.a2.")
    ]
    assert retry_tasks and "flaky first try" in retry_tasks[0]


def test_exhaustion_abort_stops_run(make_workspace, tmp_path):
    plan = linear_plan(3)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    turns = coder_success_turns([("out/1.py", "one\n")])
    turns.extend([fence("abort", "no"), fence("abort", "still no")])
    provider = sequence_provider(*turns)
    report = run_migration(
        plan, ws, PLAYBOOKS, provider, FailurePolicy(max_retries=1, on_exhaustion="abort"),
        ChunkStrategy(), bank,
    )
    assert report.completed is False
    assert report.aborted_chunk == 1
    assert report.step_status == {1: "done", 2: "failed", 3: "pending"}
    assert report.attempts[2] == 2
    state = load_state(bank)
    assert state.next_chunk == 1  # a later resume retries the failed chunk


def test_exhaustion_skip_with_cascade(make_workspace, tmp_path):
    # 4 steps: 2 fails persistently, 3 depends on 2, 4 is independent.
    plan = MigrationPlan.from_steps(
        [
            make_step(1),
            make_step(2, deps=(1,)),
            make_step(3, deps=(2,)),
            make_step(4, deps=(1,)),
        ]
    )
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    turns = coder_success_turns([("out/1.py", "one\n")])
    turns.extend([fence("abort", "a"), fence("abort", "b")])  # step 2, two attempts
    turns.extend(coder_success_turns([("out/4.py", "four\n")]))  # step 4 runs
    provider = sequence_provider(*turns)
    policy = FailurePolicy(max_retries=1, on_exhaustion="skip", skip_cascade=True)
    report = run_migration(plan, ws, PLAYBOOKS, provider, policy, ChunkStrategy(), bank)
    assert report.completed is True
    assert report.step_status == {1: "done", 2: "skipped", 3: "skipped", 4: "done"}
    assert load_summaries(bank)[-1]  # summaries recorded for done chunks only


def test_skip_without_cascade_runs_dependents(make_workspace, tmp_path):
    plan = MigrationPlan.from_steps([make_step(1), make_step(2, deps=(1,))])
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    turns = [fence("abort", "a")]  # step 1 fails, single attempt
    turns.extend(coder_success_turns([("out/2.py", "two\n")]))
    policy = FailurePolicy(max_retries=0, on_exhaustion="skip", skip_cascade=False)
    report = run_migration(
        plan, ws, PLAYBOOKS, sequence_provider(*turns), policy, ChunkStrategy(), bank
    )
    assert report.step_status == {1: "skipped", 2: "done"}


def test_state_written_ahead_of_coder_invocation(make_workspace, tmp_path):
    plan = linear_plan(1)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)

    observed = {}

    class PeekingProvider:
        def __init__(self, inner):
            self.inner = inner

        def complete(self, request):
            if not observed:
                payload = json.loads(bank.state_path.read_text())
                observed["status"] = payload["status"]["1"]
                observed["attempts"] = payload["attempts"]["1"]
            return self.inner.complete(request)

    run_migration(
        plan, ws, PLAYBOOKS, PeekingProvider(run_ok_provider(1)), FailurePolicy(),
        ChunkStrategy(), bank,
    )
    assert observed == {"status": "in_progress", "attempts": 1}


def test_interrupt_then_resume_completes_without_rerunning(make_workspace, tmp_path):
    plan = linear_plan(3)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)

    interrupting = InterruptingProvider(run_ok_provider(1), "coder.chunk1.")
    with pytest.raises(InterruptedError):
        run_migration(
            plan, ws, PLAYBOOKS, interrupting, FailurePolicy(), ChunkStrategy(), bank
        )
    state = load_state(bank)
    assert state.status[1] == "done"
    assert state.next_chunk == 1
    assert state.status[2] == "in_progress"  # write-ahead marker

    remaining = []
    for i in (2, 3):
        remaining.extend(coder_success_turns([(f"out/{i}.py", f"x{i}\n")]))
    resume_provider = CapturingProvider(sequence_provider(*remaining))
    report = resume_migration(
        bank, ws, PLAYBOOKS, resume_provider, FailurePolicy(), ChunkStrategy()
    )
    assert report.step_status == {1: "done", 2: "done", 3: "done"}
    assert all(not r.tag.startswith("coder.chunk0.") for r in resume_provider.requests)
    # Prior summaries reach the resumed coder context.
    assert any("1. Changes Made" in r.messages[1].content for r in resume_provider.requests)


def test_resume_detects_strategy_change(make_workspace, tmp_path):
    plan = linear_plan(3)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    interrupting = InterruptingProvider(run_ok_provider(1), "coder.chunk1.")
    with pytest.raises(InterruptedError):
        run_migration(plan, ws, PLAYBOOKS, interrupting, FailurePolicy(), ChunkStrategy(), bank)
    with pytest.raises(StrategyMismatch):
        resume_migration(
            bank, ws, PLAYBOOKS, sequence_provider(), FailurePolicy(),
            ChunkStrategy("fixed", size=2),
        )


def test_resume_detects_edited_plan(make_workspace, tmp_path):
    plan = linear_plan(2)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    interrupting = InterruptingProvider(run_ok_provider(1), "coder.chunk1.")
    with pytest.raises(InterruptedError):
        run_migration(plan, ws, PLAYBOOKS, interrupting, FailurePolicy(), ChunkStrategy(), bank)
    save_plan(bank, linear_plan(2).from_steps([make_step(1, instructions="edited")]))
    with pytest.raises(BankPlanMismatch):
        resume_migration(
            bank, ws, PLAYBOOKS, sequence_provider(), FailurePolicy(), ChunkStrategy()
        )


def test_selected_playbooks_shape_coder_system_prompt(make_workspace, tmp_path):
    plan = MigrationPlan.from_steps([make_step(1, instructions="plain port")])
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    rules = (SelectionRule("instruction_keyword", "metric", "client", "acme"),)
    provider = CapturingProvider(run_ok_provider(1))
    run_migration(
        plan, ws, PLAYBOOKS, provider, FailurePolicy(), ChunkStrategy(), bank, rules=rules
    )
    system = provider.requests[0].messages[0].content
    assert "## PLAYBOOK: general/workflow" in system
    assert "## PLAYBOOK: client/acme" not in system  # rule did not fire


# -- single-agent baseline ----------------------------------------------------------


def test_single_agent_step_flattens_plan():
    plan = MigrationPlan.from_steps(
        [
            make_step(1, targets=("out/a.py",), instructions="first part"),
            make_step(2, deps=(1,), targets=("out/a.py", "out/b.py"), instructions="second part"),
        ]
    )
    step = single_agent_step(plan, "legacy/main.py")
    assert step.step_id == 1
    assert step.title == "migrate legacy/main.py and all dependencies"
    assert step.target_files == ("out/a.py", "out/b.py")
    assert step.instructions == "first part\n\nsecond part"
    assert step.dependencies == ()


def test_run_single_agent_one_invocation(make_workspace, tmp_path):
    plan = linear_plan(3)
    ws = make_workspace({}, build_cmd=BUILD_OK)
    bank = fresh_bank(tmp_path, plan)
    provider = CapturingProvider(
        sequence_provider(
            *coder_success_turns(
                [("out/1.py", "1\n"), ("out/2.py", "2\n"), ("out/3.py", "3\n")]
            )
        )
    )
    outcome = run_single_agent(plan, "legacy/main.py", ws, PLAYBOOKS, provider, bank)
    assert outcome.status == "success"
    assert all(r.tag.startswith("coder.chunk0.a1.") for r in provider.requests)
    assert len(load_summaries(bank)) == 1
    assert not bank.state_path.exists()
