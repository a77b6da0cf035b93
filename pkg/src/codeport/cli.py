"""Operator command line: plan, run, resume, judge, playbook generation,
plan visualization, and score comparison, all driven by one JSON config.

Exit status: 0 on success, 1 on a migration/judging failure outcome, 2 on a
configuration, usage, or precondition error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bank as bank_mod
from .bank import BankRecordingProvider, init_bank, open_bank
from .config import EngineConfig, build_playbooks, build_provider, build_workspace, load_config
from .errors import (
    BankLocked,
    BankPlanMismatch,
    ConfigError,
    EngineError,
    HashMismatch,
    NonEmptyForeignDir,
    PlanMissing,
    StateCorrupt,
    StrategyMismatch,
)
from .judge import aggregate_scores, judge_migration, paired_t, parse_checklist
from .orchestrator import resume_migration, run_migration, run_single_agent
from .plan import render_plan_dot, validate_plan
from .planner import plan_migration
from .playbooks import GoldenPair, generate_client_playbook
from .providers import RecordingProvider

_PRECONDITION_ERRORS = (
    ConfigError,
    PlanMissing,
    NonEmptyForeignDir,
    BankLocked,
    BankPlanMismatch,
    StrategyMismatch,
    HashMismatch,
    StateCorrupt,
)


def _bank_for(cfg: EngineConfig, create: bool):
    if create:
        return init_bank(cfg.bank_dir)
    if not (cfg.bank_dir / "plan.json").is_file():
        raise PlanMissing(f"plan missing from bank {cfg.bank_dir}; run `plan` first")
    return open_bank(cfg.bank_dir)


def _maybe_clear_lock(args, cfg, bank) -> None:
    if getattr(args, "clear_stale_lock", False):
        if bank.clear_stale_lock(cfg.lock_stale_secs):
            print(f"cleared stale lock in {bank.root}")


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    root_file = args.root or cfg.root_file
    if not root_file:
        raise ConfigError("no migration root: pass --root or set root_file in the config")

    bank = _bank_for(cfg, create=True)
    if bank.plan_path.is_file() and not args.force:
        print(f"bank {bank.root} already holds a plan; pass --force to overwrite")
        return 2
    _maybe_clear_lock(args, cfg, bank)

    workspace = build_workspace(cfg)
    playbooks = build_playbooks(cfg)
    provider = BankRecordingProvider(build_provider(cfg, args.script), bank)

    with bank.locked():
        plan = plan_migration(
            root_file,
            workspace,
            playbooks,
            provider,
            max_rounds=cfg.limits.max_rounds,
            bank=bank,
            excluded_prefixes=cfg.excluded_prefixes,
            source_ext=cfg.source_ext,
        )
    print(f"plan: {len(plan.steps)} step(s), hash {plan.plan_hash[:12]}")
    findings = validate_plan(
        plan,
        workspace,
        budget=cfg.limits.oversized_step_budget,
        excluded_prefixes=cfg.excluded_prefixes,
    )
    if findings:
        for finding in findings:
            where = f"step {finding.step_id}" if finding.step_id is not None else "plan"
            print(f"lint: {where} {finding.code} ({finding.severity}): {finding.message}")
    else:
        print("lint: no findings")
    return 0


def _print_report(report) -> int:
    for step_id in sorted(report.step_status):
        status = report.step_status[step_id]
        attempts = report.attempts.get(step_id, 0)
        print(f"step {step_id}: {status} (attempts {attempts})")
    if report.aborted_chunk is not None:
        print(f"aborted at chunk {report.aborted_chunk}")
    all_done = all(status == bank_mod.STATUS_DONE for status in report.step_status.values())
    return 0 if report.completed and all_done else 1


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    bank = _bank_for(cfg, create=False)
    _maybe_clear_lock(args, cfg, bank)
    plan = bank_mod.load_plan(bank)

    workspace = build_workspace(cfg)
    playbooks = build_playbooks(cfg)
    provider = BankRecordingProvider(build_provider(cfg, args.script), bank)

    has_history = bank.state_path.is_file() or any(bank.summaries_dir.glob("*.md"))
    if has_history and not args.force:
        print(
            f"bank {bank.root} already records a run; use `resume` to continue "
            "or pass --force to start over"
        )
        return 2
    if args.force:
        if bank.state_path.is_file():
            bank.state_path.unlink()
        for summary in bank.summaries_dir.glob("*.md"):
            summary.unlink()

    with bank.locked():
        if cfg.flags.use_planner_orchestrator:
            report = run_migration(
                plan,
                workspace,
                playbooks,
                provider,
                cfg.failure_policy,
                cfg.strategy,
                bank,
                rules=cfg.selection_rules,
                max_iterations=cfg.limits.max_iterations,
            )
            return _print_report(report)

        if not cfg.root_file:
            raise ConfigError("single-agent run requires root_file in the config")
        root_file = cfg.root_file
        outcome = run_single_agent(
            plan,
            root_file,
            workspace,
            playbooks,
            provider,
            bank,
            max_iterations=cfg.limits.max_iterations,
        )
        print(f"single-agent outcome: {outcome.status} "
              f"({len(outcome.files_changed)} file(s) changed, "
              f"{outcome.iterations_used} iterations)")
        if outcome.status != "success":
            print(f"failure: {outcome.failure_reason}")
            return 1
        return 0


def cmd_resume(args) -> int:
    cfg = load_config(args.config)
    bank = _bank_for(cfg, create=False)
    _maybe_clear_lock(args, cfg, bank)

    workspace = build_workspace(cfg)
    playbooks = build_playbooks(cfg)
    provider = BankRecordingProvider(build_provider(cfg, args.script), bank)

    with bank.locked():
        report = resume_migration(
            bank,
            workspace,
            playbooks,
            provider,
            cfg.failure_policy,
            cfg.strategy,
            rules=cfg.selection_rules,
            max_iterations=cfg.limits.max_iterations,
        )
    return _print_report(report)


def cmd_judge(args) -> int:
    cfg = load_config(args.config)
    workspace = build_workspace(cfg)
    checklist = parse_checklist(Path(args.checklist).read_text(encoding="utf-8"))
    base_provider = build_provider(cfg, args.script)

    entries = []
    scores = []
    for run_index in range(1, args.runs + 1):
        provider = base_provider
        if args.transcript_dir:
            transcript_dir = Path(args.transcript_dir)
            transcript_dir.mkdir(parents=True, exist_ok=True)
            provider = RecordingProvider(
                base_provider, transcript_dir / f"run{run_index}.json"
            )
        verdict = judge_migration(
            checklist,
            args.targets,
            workspace,
            provider,
            tag_prefix=f"judge.run{run_index}",
        )
        score = verdict.score
        scores.append(score)
        entries.append(
            {
                "config": cfg.config_name,
                "model": cfg.model_label,
                "run_id": f"run{run_index}",
                "score": score,
            }
        )
        print(f"run{run_index}: score {score:.4f} "
              f"({sum(1 for i in verdict.items if i.passed)}/{len(verdict.items)} items)")

    mean = sum(scores) / len(scores)
    print(f"mean score over {len(scores)} run(s): {mean:.4f}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_playbook_gen(args) -> int:
    cfg = load_config(args.config)
    provider = build_provider(cfg, args.script)
    pairs = [
        GoldenPair(
            source_root=Path(src), target_root=Path(dst), label=Path(src).name
        )
        for src, dst in args.golden
    ]
    name = Path(args.out).stem if args.out else "generated"
    playbook = generate_client_playbook(pairs, provider, name=name)
    print(playbook.body)
    if args.review:
        if not args.out:
            raise ConfigError("--review requires --out to install the playbook")
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(playbook.body + ("" if playbook.body.endswith("\n") else "\n"),
                       encoding="utf-8")
        print(f"installed reviewed playbook to {out}")
    else:
        print("(preview only; re-run with --review --out <path> to install)")
    return 0


def cmd_viz(args) -> int:
    cfg = load_config(args.config)
    bank = _bank_for(cfg, create=False)
    plan = bank_mod.load_plan(bank)
    dot = render_plan_dot(plan)
    Path(args.out).write_text(dot, encoding="utf-8")
    print(f"wrote {args.out} ({len(plan.steps)} node(s))")
    return 0


def _load_scores(path) -> list[tuple[str, str, float]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ConfigError(f"scores file {path} must be a JSON array")
    runs = []
    for entry in raw:
        try:
            runs.append((entry["config"], entry["model"], float(entry["score"])))
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"scores file {path} has a malformed entry: {exc}") from exc
    return runs


def cmd_eval_compare(args) -> int:
    side_a = aggregate_scores(_load_scores(args.a))
    side_b = aggregate_scores(_load_scores(args.b))
    if len(side_a) != 1 or len(side_b) != 1:
        raise ConfigError("each scores file must cover exactly one configuration")
    config_a = next(iter(side_a.values()))
    config_b = next(iter(side_b.values()))

    for label, summary in (("A", config_a), ("B", config_b)):
        print(f"[{label}] {summary.config_name}")
        for model, mean in summary.per_model_mean.items():
            print(f"  {model}: {mean:.4f} (n={summary.run_counts[model]})")
        print(f"  total: {summary.total:.4f}")

    t, dof = paired_t(config_a.per_model_mean, config_b.per_model_mean)
    print(f"paired t = {t:.4f}, dof = {dof}")
    print(
        "note: compare |t| against the t-distribution critical value for "
        f"{dof} degrees of freedom at your chosen significance level"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codeport",
        description="Multi-agent source-to-source code migration engine",
    )
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, script_help="override the provider script file"):
        p.add_argument("--config", required=True, help="engine config JSON file")
        p.add_argument("--script", default=None, help=script_help)

    p_plan = sub.add_parser("plan", help="produce and persist a migration plan")
    add_common(p_plan)
    p_plan.add_argument("--root", default=None, help="workspace-relative root file")
    p_plan.add_argument("--force", action="store_true", help="overwrite an existing plan")
    p_plan.add_argument("--clear-stale-lock", action="store_true")
    p_plan.set_defaults(func=cmd_plan)

    p_run = sub.add_parser("run", help="execute the persisted plan")
    add_common(p_run)
    p_run.add_argument("--force", action="store_true", help="discard prior run state")
    p_run.add_argument("--clear-stale-lock", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_resume = sub.add_parser("resume", help="continue an interrupted run")
    add_common(p_resume)
    p_resume.add_argument("--clear-stale-lock", action="store_true")
    p_resume.set_defaults(func=cmd_resume)

    p_judge = sub.add_parser("judge", help="blind-audit the migrated code")
    add_common(p_judge)
    p_judge.add_argument("--checklist", required=True, help="checklist markdown file")
    p_judge.add_argument("--targets", required=True, nargs="+",
                         help="workspace-relative target root prefixes")
    p_judge.add_argument("--runs", type=int, default=1)
    p_judge.add_argument("--out", required=True, help="scores JSON output file")
    p_judge.add_argument("--transcript-dir", default=None,
                         help="record judge transcripts into this directory")
    p_judge.set_defaults(func=cmd_judge)

    p_playbook = sub.add_parser("playbook", help="playbook utilities")
    playbook_sub = p_playbook.add_subparsers(dest="playbook_command", required=True)
    p_gen = playbook_sub.add_parser("gen", help="generate a client playbook from golden pairs")
    add_common(p_gen)
    p_gen.add_argument("--golden", nargs=2, action="append", required=True,
                       metavar=("SRC", "DST"), help="golden pair roots (repeatable)")
    p_gen.add_argument("--out", default=None, help="file to install the playbook into")
    p_gen.add_argument("--review", action="store_true",
                       help="acknowledge human review; required to write --out")
    p_gen.set_defaults(func=cmd_playbook_gen)

    p_viz = sub.add_parser("viz", help="render the stored plan as dot")
    p_viz.add_argument("--config", required=True)
    p_viz.add_argument("--out", required=True)
    p_viz.set_defaults(func=cmd_viz)

    p_eval = sub.add_parser("eval", help="evaluation utilities")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p_compare = eval_sub.add_parser("compare", help="compare two score files")
    p_compare.add_argument("--a", required=True)
    p_compare.add_argument("--b", required=True)
    p_compare.set_defaults(func=cmd_eval_compare)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except _PRECONDITION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
