import pytest

from codeport.errors import (
    DuplicateName,
    EmptyGoldenPair,
    EmptyPlaybook,
    MalformedPlaybookBlock,
    MalformedUnitsBlock,
    UnknownSelection,
)
from codeport.playbooks import (
    GoldenPair,
    Playbook,
    PlaybookSet,
    assemble_system_prompt,
    generate_client_playbook,
    load_set,
)
from helpers import CountingProvider, fence, tag_provider


def write_playbooks(tmp_path, spec):
    """spec: {kind: {name: body}} -> config mapping for load_set."""
    config = {}
    for kind, files in spec.items():
        for name, body in files.items():
            path = tmp_path / f"{name}.md"
            path.write_text(body, encoding="utf-8")
            config.setdefault(kind, []).append(path)
    return config


def four_tier_set(tmp_path):
    config = write_playbooks(
        tmp_path,
        {
            "general": {"workflow": "# General\nwork carefully\n"},
            "style": {"conventions": "# Style\nbe tidy\n"},
            "task": {"porting": "# Task\nport faithfully\n"},
            "client": {"acme": "# Client\nacme wants metrics\n"},
        },
    )
    return load_set(config)


def test_load_set_orders_by_tier(tmp_path):
    config = write_playbooks(
        tmp_path,
        {"style": {"s": "style body\n"}, "general": {"g": "general body\n"}},
    )
    loaded = load_set(config)
    assert loaded.names() == (("general", "g"), ("style", "s"))


def test_load_set_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_set({"general": [tmp_path / "absent.md"]})


def test_load_set_rejects_empty_body(tmp_path):
    (tmp_path / "empty.md").write_text("   \n")
    with pytest.raises(EmptyPlaybook):
        load_set({"general": [tmp_path / "empty.md"]})


def test_duplicate_name_rejected(tmp_path):
    path = tmp_path / "yt.md"
    path.write_text("body\n")
    with pytest.raises(DuplicateName):
        load_set({"client": [path, path]})


def test_set_digest_tracks_single_byte_change(tmp_path):
    config = write_playbooks(
        tmp_path,
        {
            "general": {"workflow": "# General\nwork carefully\n"},
            "client": {"acme": "# Client\nacme wants metrics\n"},
        },
    )
    first = load_set(config).digest()
    assert first == load_set(config).digest()
    (tmp_path / "acme.md").write_text("# Client\nacme wants metricz\n")
    assert load_set(config).digest() != first


def test_assemble_empty_selection_is_empty_text(tmp_path):
    assert assemble_system_prompt(four_tier_set(tmp_path), selection=[]) == ""


def test_assemble_full_set_in_tier_order(tmp_path):
    text = assemble_system_prompt(four_tier_set(tmp_path))
    headers = [line for line in text.splitlines() if line.startswith("## PLAYBOOK:")]
    assert headers == [
        "## PLAYBOOK: general/workflow",
        "## PLAYBOOK: style/conventions",
        "## PLAYBOOK: task/porting",
        "## PLAYBOOK: client/acme",
    ]
    assert "port faithfully" in text


def test_assemble_all_equals_none(tmp_path):
    loaded = four_tier_set(tmp_path)
    assert assemble_system_prompt(loaded) == assemble_system_prompt(
        loaded, selection=list(loaded.names())
    )


def test_assemble_subset_keeps_set_order(tmp_path):
    loaded = four_tier_set(tmp_path)
    text = assemble_system_prompt(
        loaded, selection=[("client", "acme"), ("general", "workflow")]
    )
    headers = [line for line in text.splitlines() if line.startswith("## PLAYBOOK:")]
    assert headers == ["## PLAYBOOK: general/workflow", "## PLAYBOOK: client/acme"]


def test_assemble_unknown_selection(tmp_path):
    with pytest.raises(UnknownSelection):
        assemble_system_prompt(four_tier_set(tmp_path), selection=[("task", "nope")])


def test_playbook_version_is_content_digest():
    a = Playbook.from_body("general", "g", "same body\n")
    b = Playbook.from_body("general", "g", "same body\n")
    c = Playbook.from_body("general", "g", "same body!\n")
    assert a.version == b.version != c.version


def test_playbook_set_rejects_out_of_order():
    style = Playbook.from_body("style", "s", "x\n")
    general = Playbook.from_body("general", "g", "y\n")
    with pytest.raises(ValueError):
        PlaybookSet(playbooks=(style, general))


# -- golden pair generation -----------------------------------------------------


def golden_pair(tmp_path, label="pair_a"):
    src = tmp_path / f"{label}_src"
    dst = tmp_path / f"{label}_dst"
    for root, body in ((src, "legacy code\n"), (dst, "migrated code\n")):
        root.mkdir(parents=True, exist_ok=True)
        (root / "model.py").write_text(body)
    return GoldenPair(source_root=src, target_root=dst, label=label)


def gen_script(labels, rules="## Rule\n- do the thing"):
    entries = [
        (f"playbook.decompose.{label}", fence("units", f"- unit: all of {label}"))
        for label in labels
    ]
    entries.append(("playbook.summarize", fence("playbook", rules)))
    return tag_provider(entries)


def test_generate_uses_fixture_rules_verbatim(tmp_path):
    provider = gen_script(["pair_a"], rules="## Ported APIs\n- alpha -> beta")
    playbook = generate_client_playbook([golden_pair(tmp_path)], provider, name="acme")
    assert playbook.kind == "client"
    assert playbook.name == "acme"
    assert playbook.body == "## Ported APIs\n- alpha -> beta"


def test_generate_missing_units_fence_fails_fast(tmp_path):
    provider = CountingProvider(tag_provider([("playbook.decompose.pair_a", "no fence here")]))
    with pytest.raises(MalformedUnitsBlock):
        generate_client_playbook([golden_pair(tmp_path)], provider)
    assert provider.calls == 1  # no summarize round after the failure


def test_generate_missing_playbook_fence(tmp_path):
    entries = [
        ("playbook.decompose.pair_a", fence("units", "- unit: u")),
        ("playbook.summarize", "rules but no fence"),
    ]
    with pytest.raises(MalformedPlaybookBlock):
        generate_client_playbook([golden_pair(tmp_path)], tag_provider(entries))


def test_generate_call_count_is_pairs_plus_one(tmp_path):
    pairs = [golden_pair(tmp_path, "pair_a"), golden_pair(tmp_path, "pair_b")]
    provider = CountingProvider(gen_script(["pair_a", "pair_b"]))
    generate_client_playbook(pairs, provider)
    assert provider.calls == len(pairs) + 1


def test_generate_prompt_contains_paired_files(tmp_path):
    from helpers import CapturingProvider

    provider = CapturingProvider(gen_script(["pair_a"]))
    generate_client_playbook([golden_pair(tmp_path)], provider)
    decompose_prompt = provider.requests[0].messages[-1].content
    assert "legacy code" in decompose_prompt
    assert "migrated code" in decompose_prompt
    summarize_prompt = provider.requests[1].messages[-1].content
    assert "all of pair_a" in summarize_prompt


def test_empty_golden_pair_rejected(tmp_path):
    src = tmp_path / "empty_src"
    src.mkdir()
    dst = tmp_path / "dst"
    dst.mkdir()
    (dst / "f.py").write_text("x\n")
    with pytest.raises(EmptyGoldenPair):
        GoldenPair(source_root=src, target_root=dst, label="x")
    with pytest.raises(EmptyGoldenPair):
        generate_client_playbook([], tag_provider([]))
