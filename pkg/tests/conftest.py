from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from codeport.workspace import Workspace

FIXTURES = Path(__file__).parent / "fixtures"
E2E_FIXTURE = FIXTURES / "e2e"


@pytest.fixture
def e2e_dir(tmp_path) -> Path:
    """A disposable copy of the bundled end-to-end fixture tree."""
    target = tmp_path / "e2e"
    shutil.copytree(E2E_FIXTURE, target)
    return target


@pytest.fixture
def make_workspace(tmp_path):
    """Factory building a Workspace over a fresh tree of {relpath: content}."""
    counter = {"n": 0}

    def build(files: dict, **kwargs) -> Workspace:
        counter["n"] += 1
        root = tmp_path / f"ws{counter['n']}"
        root.mkdir()
        for rel, content in files.items():
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content, encoding="utf-8")
        return Workspace(root=root, **kwargs)

    return build
