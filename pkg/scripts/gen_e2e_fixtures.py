#!/usr/bin/env python3
"""Regenerate the bundled end-to-end fixture tree under tests/fixtures/e2e/.

The fixture is a 5-file toy corpus plus scripted provider transcripts that
drive the full pipeline offline: planner (two rounds), coder (multi-agent and
single-agent flavors), judge (one flavor per migrated tree), and client
playbook generation. Run from the repository root:

    python3 scripts/gen_e2e_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "tests" / "fixtures" / "e2e"

# --------------------------------------------------------------------------
# corpus: the legacy toy ranker (5 files) + build checker
# --------------------------------------------------------------------------

CORPUS = {
    "legacy/ops.py": '''"""Low-level numeric helpers shared by the legacy ranker."""


def matmul(matrix, vector):
    return [sum(w * x for w, x in zip(row, vector)) for row in matrix]


def relu(values):
    return [v if v > 0.0 else 0.0 for v in values]


def mean(values):
    return sum(values) / len(values) if values else 0.0
''',
    "legacy/config.py": '''"""Static configuration for the legacy ranker."""


def default_config():
    return {
        "units": 4,
        "loss_weight": 0.25,
        "learning_rate": 0.05,
    }
''',
    "legacy/layers.py": '''"""Layer definitions for the legacy ranker."""

import legacy.ops


class DenseTower:
    """Stack of dense projections with a relu activation."""

    def __init__(self, units):
        self.units = units
        self.weights = [[0.1] * units for _ in range(units)]

    def apply(self, batch):
        hidden = legacy.ops.matmul(self.weights, batch)
        return legacy.ops.relu(hidden)
''',
    "legacy/metrics.py": '''"""Evaluation metrics reported by the legacy ranker."""

import legacy.ops


def accuracy(predictions, labels):
    hits = sum(1 for p, l in zip(predictions, labels) if (p >= 0.5) == (l >= 0.5))
    return hits / len(labels) if labels else 0.0


def weighted_loss(predictions, labels, weight):
    errors = [(p - l) ** 2 for p, l in zip(predictions, labels)]
    return weight * legacy.ops.mean(errors)
''',
    "legacy/main_model.py": '''"""Entry point of the legacy ranker model."""

import legacy.config
from legacy import layers
from legacy import metrics


class RankerModel:
    def __init__(self):
        self.cfg = legacy.config.default_config()
        self.tower = layers.DenseTower(self.cfg["units"])

    def forward(self, batch, labels):
        hidden = self.tower.apply(batch)
        return {
            "prediction": hidden,
            "accuracy": metrics.accuracy(hidden, labels),
            "weighted_loss": metrics.weighted_loss(hidden, labels, self.cfg["loss_weight"]),
        }
''',
    "tools/check_build.py": '''"""Syntax-check every workspace source file; exit non-zero on failure."""

import ast
import pathlib
import sys

bad = []
for path in sorted(pathlib.Path(".").rglob("*.py")):
    if "tools" in path.parts:
        continue
    try:
        ast.parse(path.read_text(encoding="utf-8"), filename=str(path))
    except SyntaxError as exc:
        bad.append(f"{path}: {exc.msg} (line {exc.lineno})")
for line in bad:
    print(line, file=sys.stderr)
sys.exit(1 if bad else 0)
''',
}

# --------------------------------------------------------------------------
# migrated tree as written by the scripted coder
# --------------------------------------------------------------------------

MODERN_INIT = '"""Modern implementation of the toy ranker."""\n'

MODERN_OPS = '''"""Pure numeric helpers for the modern ranker."""


def matmul(matrix, vector):
    return [sum(w * x for w, x in zip(row, vector)) for row in matrix]


def relu(values):
    return [v if v > 0.0 else 0.0 for v in values]


def mean(values):
    return sum(values) / len(values) if values else 0.0
'''

MODERN_CONFIG = '''"""Static configuration for the modern ranker."""


def default_config():
    return {
        "units": 4,
        "loss_weight": 0.25,
        "learning_rate": 0.05,
    }
'''

MODERN_LAYERS = '''"""Layer definitions for the modern ranker."""

import modern.ops


class DenseTower:
    """Stack of dense projections with a relu activation."""

    def __init__(self, units):
        self.units = units
        self.weights = [[0.1] * units for _ in range(units)]

    def apply(self, batch):
        hidden = modern.ops.matmul(self.weights, batch)
        return modern.ops.relu(hidden)
'''

MODERN_METRICS = '''"""Evaluation metrics reported by the modern ranker."""

import modern.ops


def accuracy(predictions, labels):
    hits = sum(1 for p, l in zip(predictions, labels) if (p >= 0.5) == (l >= 0.5))
    return hits / len(labels) if labels else 0.0


def weighted_loss(predictions, labels, weight):
    errors = [(p - l) ** 2 for p, l in zip(predictions, labels)]
    return weight * modern.ops.mean(errors)
'''

MODERN_MAIN = '''"""Entry point of the modern ranker model."""

import modern.config
from modern import layers
from modern import metrics


class RankerModel:
    def __init__(self):
        self.cfg = modern.config.default_config()
        self.tower = layers.DenseTower(self.cfg["units"])

    def forward(self, batch, labels):
        hidden = self.tower.apply(batch)
        return {
            "prediction": hidden,
            "accuracy": metrics.accuracy(hidden, labels),
            "weighted_loss": metrics.weighted_loss(hidden, labels, self.cfg["loss_weight"]),
        }
'''

# Adversarial single-agent result: metrics are silently dropped.
MODERN_MAIN_SINGLE = '''"""Entry point of the modern ranker model."""

import modern.config
from modern import layers


class RankerModel:
    def __init__(self):
        self.cfg = modern.config.default_config()
        self.tower = layers.DenseTower(self.cfg["units"])

    def forward(self, batch, labels):
        del labels
        hidden = self.tower.apply(batch)
        return {"prediction": hidden}
'''

# --------------------------------------------------------------------------
# playbooks
# --------------------------------------------------------------------------

PLAYBOOKS = {
    "workflow.md": """# Workspace workflow

Work inside the migration workspace through the provided tools only.
Read before you write, keep edits minimal, and run the build after every
change. A sub-step is complete only when the build passes.
""",
    "conventions.md": """# Code conventions

- Module docstring on every file.
- snake_case functions, CapWords classes.
- No wildcard imports; import modules, not symbols, for cross-module calls.
""",
    "port_rules.md": """# Legacy-to-modern porting rules

- Mirror the legacy package layout under the `modern/` tree.
- Keep public function and class names identical to the legacy code.
- Preserve default values exactly; numeric defaults must not drift.
- Where practical, write and run a small equivalence check that feeds the
  same inputs to the legacy and ported code and compares outputs.
""",
    "acme.md": """# Acme ranking team rules

- The forward pass must return a dict with keys prediction, accuracy and
  weighted_loss.
- Metrics live in their own module; never inline them in the model file.
- Config access goes through default_config(); no literal hyperparameters.
""",
}

CHECKLIST = """# Toy Ranker Model Checklist

## Model Architecture
- [ ] Dense tower with configurable units
- [ ] ReLU activation in hidden layers

## Metrics
- [ ] Accuracy metric computed on predictions
- [ ] Weighted loss metric is reported

## Correctness & Logic
- [ ] Loss weighting factor read from config
- [ ] Config defaults preserved
- [ ] Prediction output dictionary keys preserved
- [ ] No legacy framework imports in the migrated tree
"""

# --------------------------------------------------------------------------
# golden pair for playbook generation
# --------------------------------------------------------------------------

GOLDEN_SOURCE = '''import oldfx


class TinyModel(oldfx.Module):
    def __init__(self):
        self.dense = oldfx.layers.Dense(8)

    def forward(self, batch):
        return oldfx.ops.relu(self.dense(batch))
'''

GOLDEN_TARGET = '''import newfx


class TinyModel(newfx.Module):
    units: int = 8

    def forward(self, batch):
        return newfx.ops.relu(newfx.layers.dense(batch, self.units))
'''

GENERATED_PLAYBOOK_BODY = """# Acme client playbook (generated)

- Modules subclass newfx.Module and declare hyperparameters as class fields.
- Layer construction becomes a call-site function: oldfx.layers.Dense(n)(x)
  turns into newfx.layers.dense(x, n).
- Activation helpers keep their names under newfx.ops.
"""

# --------------------------------------------------------------------------
# plans emitted by the scripted planner
# --------------------------------------------------------------------------

PLAN_DRAFT = {
    "steps": [
        {
            "step_id": 1,
            "title": "Scaffold the modern package",
            "source_files": [],
            "target_files": ["modern/__init__.py"],
            "instructions": "Create the modern package directory with an empty-ish __init__.py so later steps can add modules.",
            "validation": "modern/__init__.py exists and the workspace builds.",
            "dependencies": [],
        },
        {
            "step_id": 2,
            "title": "Port layers and metrics",
            "source_files": ["legacy/layers.py", "legacy/metrics.py"],
            "target_files": ["modern/layers.py", "modern/metrics.py"],
            "instructions": "Port DenseTower, accuracy and weighted_loss into the modern tree.",
            "validation": "modern/layers.py and modern/metrics.py exist and the workspace builds.",
            "dependencies": [1],
        },
        {
            "step_id": 3,
            "title": "Port the ranker entry point",
            "source_files": ["legacy/main_model.py"],
            "target_files": ["modern/main_model.py"],
            "instructions": "Port RankerModel, wiring the modern modules.",
            "validation": "modern/main_model.py exists and the workspace builds.",
            "dependencies": [2],
        },
    ]
}

PLAN_FINAL = {
    "steps": [
        {
            "step_id": 1,
            "title": "Scaffold the modern package",
            "source_files": [],
            "target_files": ["modern/__init__.py"],
            "instructions": "Create the modern package directory with a docstring-only __init__.py so later steps can add modules.",
            "validation": "modern/__init__.py exists and the workspace builds.",
            "dependencies": [],
        },
        {
            "step_id": 2,
            "title": "Port shared ops and config",
            "source_files": ["legacy/ops.py", "legacy/config.py"],
            "target_files": ["modern/ops.py", "modern/config.py"],
            "instructions": "Port matmul, relu and mean to modern/ops.py and default_config to modern/config.py, keeping every default value identical.",
            "validation": "modern/ops.py and modern/config.py exist with the same public functions and defaults, and the workspace builds.",
            "dependencies": [1],
        },
        {
            "step_id": 3,
            "title": "Port layers and metrics",
            "source_files": ["legacy/layers.py", "legacy/metrics.py"],
            "target_files": ["modern/layers.py", "modern/metrics.py"],
            "instructions": "Port DenseTower to modern/layers.py and accuracy plus weighted_loss to modern/metrics.py, importing modern.ops.",
            "validation": "modern/layers.py and modern/metrics.py exist and the workspace builds.",
            "dependencies": [2],
        },
        {
            "step_id": 4,
            "title": "Port the ranker entry point",
            "source_files": ["legacy/main_model.py"],
            "target_files": ["modern/main_model.py"],
            "instructions": "Port RankerModel to modern/main_model.py wiring modern.config, modern.layers and modern.metrics; keep the forward output keys prediction, accuracy and weighted_loss.",
            "validation": "modern/main_model.py exists, the workspace builds, and forward returns prediction, accuracy and weighted_loss.",
            "dependencies": [3],
        },
    ]
}

# --------------------------------------------------------------------------
# transcript assembly helpers
# --------------------------------------------------------------------------


def fence(name: str, body: str) -> str:
    return f"```{name}\n{body}\n```"


def tool_reply(lead: str, tool: str, args: dict) -> str:
    payload = json.dumps({"tool": tool, "args": args}, indent=2, ensure_ascii=False)
    return f"{lead}\n\n{fence('tool', payload)}"


def write_reply(lead: str, path: str, content: str) -> str:
    return tool_reply(lead, "write_file", {"path": path, "content": content})


def entry(tag: str, response: str) -> dict:
    return {"tag": tag, "messages": [], "temperature": 0.2, "response": response}


def summary_reply(changes: list[str], learnings: list[str]) -> str:
    body = "1. Changes Made\n"
    body += "\n".join(f"- {line}" for line in changes)
    body += "\n\n2. Key Fixes & Learnings\n"
    body += "\n".join(f"- {line}" for line in learnings)
    return fence("summary", body)


def planner_entries() -> list[dict]:
    draft = json.dumps(PLAN_DRAFT, indent=2, ensure_ascii=False)
    final = json.dumps(PLAN_FINAL, indent=2, ensure_ascii=False)
    round1 = (
        "The direct imports are covered, but the layers and metrics modules both "
        "import a shared helper module that I have not seen yet.\n\n"
        + fence("plan", draft)
        + "\n\n"
        + fence("requests", "legacy/ops.py")
    )
    round2 = (
        "With legacy/ops.py supplied the dependency picture is complete; the ops "
        "and config leaves get their own early step.\n\n" + fence("plan", final)
    )
    return [entry("planner.round.1", round1), entry("planner.round.2", round2)]


def coder_chunk_entries(chunk: int, writes: list[tuple[str, str]], summary: str) -> list[dict]:
    entries = []
    turn = 0
    for path, content in writes:
        turn += 1
        entries.append(
            entry(f"coder.chunk{chunk}.a1.t{turn}", write_reply(f"Writing {path}.", path, content))
        )
    turn += 1
    entries.append(
        entry(
            f"coder.chunk{chunk}.a1.t{turn}",
            tool_reply("Verifying the workspace still builds.", "run_build", {}),
        )
    )
    turn += 1
    entries.append(
        entry(f"coder.chunk{chunk}.a1.t{turn}", "All files are in place.\n\n" + fence("done", "done"))
    )
    turn += 1
    entries.append(
        entry(
            f"coder.chunk{chunk}.a1.t{turn}",
            "Each validation condition is satisfied: the files exist and the build passed.\n\n"
            + fence("confirmed", "confirmed"),
        )
    )
    turn += 1
    entries.append(entry(f"coder.chunk{chunk}.a1.t{turn}", summary))
    return entries


def coder_multi_entries() -> list[dict]:
    entries = []
    entries += coder_chunk_entries(
        0,
        [("modern/__init__.py", MODERN_INIT)],
        summary_reply(
            ["Created modern/__init__.py: package scaffold with module docstring."],
            ["The build checker covers the new tree automatically."],
        ),
    )
    entries += coder_chunk_entries(
        1,
        [("modern/ops.py", MODERN_OPS), ("modern/config.py", MODERN_CONFIG)],
        summary_reply(
            [
                "Created modern/ops.py: ported matmul, relu and mean.",
                "Created modern/config.py: ported default_config with identical values.",
            ],
            ["Kept pure-python list math so the leaves stay dependency-free."],
        ),
    )
    entries += coder_chunk_entries(
        2,
        [("modern/layers.py", MODERN_LAYERS), ("modern/metrics.py", MODERN_METRICS)],
        summary_reply(
            [
                "Created modern/layers.py: ported DenseTower over modern.ops.",
                "Created modern/metrics.py: ported accuracy and weighted_loss.",
            ],
            ["Module-level imports (import modern.ops) match the style playbook."],
        ),
    )
    entries += coder_chunk_entries(
        3,
        [("modern/main_model.py", MODERN_MAIN)],
        summary_reply(
            [
                "Created modern/main_model.py: ported RankerModel wiring config, layers and metrics.",
            ],
            ["Forward output keys prediction/accuracy/weighted_loss preserved per client rules."],
        ),
    )
    return entries


def coder_single_entries() -> list[dict]:
    writes = [
        ("modern/__init__.py", MODERN_INIT),
        ("modern/ops.py", MODERN_OPS),
        ("modern/config.py", MODERN_CONFIG),
        ("modern/layers.py", MODERN_LAYERS),
        ("modern/main_model.py", MODERN_MAIN_SINGLE),
    ]
    return coder_chunk_entries(
        0,
        writes,
        summary_reply(
            [
                "Created the modern package: __init__, ops, config, layers and the RankerModel entry point.",
            ],
            ["Ported the model in one pass from the combined instructions."],
        ),
    )


def judge_entries(run_tag: str, adversarial: bool) -> list[dict]:
    entries = []
    turn = 0

    def add(response: str):
        nonlocal turn
        turn += 1
        entries.append(entry(f"{run_tag}.t{turn}", response))

    add(tool_reply("Surveying the migrated tree first.", "list_files", {"prefix": "modern"}))
    add(tool_reply("Reading the entry point.", "read_file", {"path": "modern/main_model.py"}))
    add(
        tool_reply(
            "Checking the legacy entry point for comparison.",
            "read_file",
            {"path": "legacy/main_model.py"},
        )
    )
    if adversarial:
        add(tool_reply("Looking for any metrics module.", "grep", {"pattern": "metrics", "prefix": "modern"}))
        verdict = "\n".join(
            [
                "ITEM 1: PASS -- DenseTower in modern/layers.py takes units from config.",
                "ITEM 2: PASS -- modern.ops.relu applied to the tower output.",
                "ITEM 3: FAIL -- no accuracy computation anywhere under modern/.",
                "ITEM 4: FAIL -- weighted loss is never computed or reported.",
                "ITEM 5: FAIL -- loss_weight from config is never consumed.",
                "ITEM 6: PASS -- default_config values match units=4, loss_weight=0.25, learning_rate=0.05.",
                "ITEM 7: FAIL -- forward returns only the prediction key; accuracy and weighted_loss are missing.",
                "ITEM 8: PASS -- no imports of the legacy package under modern/.",
            ]
        )
    else:
        add(tool_reply("Reading the metrics module.", "read_file", {"path": "modern/metrics.py"}))
        add(tool_reply("Confirming the activation.", "grep", {"pattern": "relu", "prefix": "modern"}))
        verdict = "\n".join(
            [
                "ITEM 1: PASS -- DenseTower in modern/layers.py sizes its weights from config units.",
                "ITEM 2: PASS -- modern.ops.relu applied to the tower output in apply().",
                "ITEM 3: PASS -- modern.metrics.accuracy compares thresholded predictions to labels.",
                "ITEM 4: PASS -- forward returns weighted_loss from modern.metrics.weighted_loss.",
                "ITEM 5: PASS -- forward passes cfg['loss_weight'] into weighted_loss.",
                "ITEM 6: PASS -- default_config preserves units=4, loss_weight=0.25, learning_rate=0.05.",
                "ITEM 7: PASS -- forward returns prediction, accuracy and weighted_loss keys.",
                "ITEM 8: PASS -- grep shows no legacy imports under modern/.",
            ]
        )
    add("The audit is complete.\n\n" + fence("verdict", verdict))
    return entries


def playbook_gen_entries() -> list[dict]:
    units = "\n".join(
        [
            "- unit: module_declaration",
            "  source: model.py:1-5",
            "  target: model.py:1-5",
            "- unit: layer_construction",
            "  source: model.py:6-7",
            "  target: model.py:6-8",
            "- unit: forward_pass",
            "  source: model.py:8-9",
            "  target: model.py:9-10",
        ]
    )
    decompose = "Decomposed the pair into three functional units.\n\n" + fence("units", units)
    summarize = (
        "The units generalize into three porting rules.\n\n"
        + fence("playbook", GENERATED_PLAYBOOK_BODY.rstrip("\n"))
    )
    return [
        entry("playbook.decompose.legacy_example", decompose),
        entry("playbook.summarize", summarize),
    ]


# --------------------------------------------------------------------------
# configs
# --------------------------------------------------------------------------


def config_doc(config_name: str, script: str, flags: dict) -> dict:
    return {
        "config_name": config_name,
        "model_label": "toy_ranker",
        "workspace_root": "corpus",
        "root_file": "legacy/main_model.py",
        "build_cmd": "python3 tools/check_build.py",
        "test_cmd": None,
        "timeout_secs": 60,
        "provider": {"kind": "scripted", "script_path": f"transcripts/{script}", "temperature": 0.2},
        "playbooks": {
            "general": ["playbooks/workflow.md"],
            "style": ["playbooks/conventions.md"],
            "task": ["playbooks/port_rules.md"],
            "client": ["playbooks/acme.md"],
        },
        "excluded_prefixes": ["vendor"],
        "strategy": {"kind": "per_step"},
        "failure_policy": {"max_retries": 2, "on_exhaustion": "abort", "skip_cascade": True},
        "bank_dir": "bank",
        "limits": {
            "max_rounds": 5,
            "max_iterations": 40,
            "oversized_step_budget": 400,
            "context_char_budget": 400000,
        },
        "flags": flags,
        "autofix_imports": {},
    }


def dump_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def main() -> None:
    for rel, content in CORPUS.items():
        write_text(FIXTURE / "corpus" / rel, content)
    for name, content in PLAYBOOKS.items():
        write_text(FIXTURE / "playbooks" / name, content)
    write_text(FIXTURE / "checklist.md", CHECKLIST)
    write_text(FIXTURE / "golden" / "legacy_example" / "model.py", GOLDEN_SOURCE)
    write_text(FIXTURE / "golden" / "modern_example" / "model.py", GOLDEN_TARGET)

    dump_json(
        FIXTURE / "transcripts" / "agent_multi.json",
        {"mode": "tag", "entries": planner_entries() + coder_multi_entries()},
    )
    dump_json(
        FIXTURE / "transcripts" / "agent_single.json",
        {"mode": "tag", "entries": planner_entries() + coder_single_entries()},
    )
    dump_json(
        FIXTURE / "transcripts" / "judge_multi.json",
        {"mode": "tag", "entries": judge_entries("judge.run1", adversarial=False)},
    )
    dump_json(
        FIXTURE / "transcripts" / "judge_single.json",
        {"mode": "tag", "entries": judge_entries("judge.run1", adversarial=True)},
    )
    dump_json(
        FIXTURE / "transcripts" / "playbook_gen.json",
        {"mode": "tag", "entries": playbook_gen_entries()},
    )

    dump_json(
        FIXTURE / "config_multi_yt.json",
        config_doc(
            "multi_agent_yt_specific",
            "agent_multi.json",
            {
                "use_planner_orchestrator": True,
                "include_client_playbook": True,
                "include_task_style_playbooks": True,
            },
        ),
    )
    dump_json(
        FIXTURE / "config_multi.json",
        config_doc(
            "multi_agent",
            "agent_multi.json",
            {
                "use_planner_orchestrator": True,
                "include_client_playbook": False,
                "include_task_style_playbooks": True,
            },
        ),
    )
    dump_json(
        FIXTURE / "config_single_yt.json",
        config_doc(
            "single_agent_yt_specific",
            "agent_single.json",
            {
                "use_planner_orchestrator": False,
                "include_client_playbook": True,
                "include_task_style_playbooks": True,
            },
        ),
    )
    dump_json(
        FIXTURE / "config_single_base.json",
        config_doc(
            "single_agent_baseline",
            "agent_single.json",
            {
                "use_planner_orchestrator": False,
                "include_client_playbook": False,
                "include_task_style_playbooks": False,
            },
        ),
    )
    print(f"fixtures written under {FIXTURE}")


if __name__ == "__main__":
    main()
