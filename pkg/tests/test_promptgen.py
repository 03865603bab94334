import pytest
from hypothesis import given
from hypothesis import strategies as st

from bibharvest.promptgen import (
    OPTIONAL_MARKER,
    SECTION_HEADERS,
    Constraint,
    Context,
    InvalidSpec,
    IOExample,
    PromptSpec,
    Role,
    UnboundPlaceholder,
    expand_placeholders,
    load_spec,
    render_prompt,
    section_headers,
    validate_spec,
)

from conftest import GOLDEN

EXAMPLES_HEADER = SECTION_HEADERS[3]


def minimal(**kw):
    base = dict(role=Role(["data engineering"]), context=Context("Parse a page."), steps=["Do it."])
    base.update(kw)
    return PromptSpec(**base)


def test_validation_counts_violations():
    assert validate_spec(minimal()) == []
    one = validate_spec(minimal(steps=[]))
    assert len(one) == 1 and "steps" in one[0]
    two = validate_spec(minimal(steps=[], context=Context("")))
    assert len(two) == 2
    bad_modality = validate_spec(minimal(constraints=[Constraint("x", "maybe")]))
    assert "modality" in bad_modality[0]
    with pytest.raises(InvalidSpec):
        render_prompt(minimal(role=Role([])))


def test_minimal_spec_renders_three_sections():
    text = render_prompt(minimal())
    assert section_headers(text) == [SECTION_HEADERS[0], SECTION_HEADERS[1], SECTION_HEADERS[4]]
    assert text.endswith("\n") and not text.endswith("\n\n")


@pytest.mark.parametrize("name", ["scraper_single", "scraper_loop"])
def test_golden(name):
    expected = (GOLDEN / f"{name}.txt").read_bytes()
    assert render_prompt(load_spec(name)).encode("utf-8") == expected


def test_single_has_all_headers_and_constraints():
    spec = load_spec("scraper_single")
    text = render_prompt(spec)
    assert section_headers(text) == list(SECTION_HEADERS)
    for c in spec.constraints:
        assert c.text in text
        if c.modality == "optional":
            assert f"# {OPTIONAL_MARKER} {c.text}" in text


def test_loop_omits_only_examples():
    spec = load_spec("scraper_loop")
    text = render_prompt(spec)
    assert section_headers(text) == [h for h in SECTION_HEADERS if h != EXAMPLES_HEADER]
    for c in spec.constraints:
        assert c.modality == "mandatory" and f"# {c.text}" in text


def test_dropping_examples_removes_one_span():
    spec = load_spec("scraper_single")
    full = render_prompt(spec)
    spec.io_examples = None
    short = render_prompt(spec)
    cut = full.index(EXAMPLES_HEADER)
    end = full.index(SECTION_HEADERS[4])
    assert short == full[:cut] + full[end:]
    spec.io_examples = []
    assert render_prompt(spec) == short


def test_several_examples_are_numbered():
    text = render_prompt(minimal(io_examples=[IOExample("a", "b"), IOExample("c", "d")]))
    assert "# Input example 1\na" in text and "# Output example 2\nd" in text


texts = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40).filter(str.strip)


@given(texts, texts, st.lists(texts, min_size=1, max_size=4), st.lists(texts, max_size=4))
def test_render_is_deterministic_and_verbatim(domain, problem, steps, constraints):
    spec = minimal(
        role=Role([domain]),
        context=Context(problem),
        steps=steps,
        constraints=[Constraint(c) for c in constraints],
    )
    text = render_prompt(spec)
    assert text == render_prompt(spec)
    for c in constraints:
        assert f"# {c}" in text
    assert render_prompt(PromptSpec.from_dict(spec.to_dict())) == text


def test_expand_placeholders():
    tpl = "<strong>XXXX</strong> or YYYYY but not XXX or XXXXa"
    out = expand_placeholders(tpl, {"XXXX": ["Título"], "YYYYY": ["a", "b"]})
    assert out == "<strong>Título</strong> or (a, b) but not XXX or XXXXa"
    with pytest.raises(UnboundPlaceholder):
        expand_placeholders("ZZZZ", {})
    assert expand_placeholders("plain", {}) == "plain"


def test_load_spec_sources(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("role: {domains: [x]}\ncontext: {problem: p}\nsteps: [s]\n", encoding="utf-8")
    assert validate_spec(load_spec(path)) == []
    assert load_spec(minimal().to_dict()) == minimal()
    with pytest.raises(InvalidSpec):
        load_spec({"role": {}})
