from __future__ import annotations

import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clinsynth.templates import (DEFAULT_FEWSHOT_INSTRUCTION, FewShotPrompt,
                                 MissingPlaceholderError, TemplateParseError,
                                 build_fewshot_prompt, default_fewshot_examples,
                                 default_lexicon, default_template, draw_slot,
                                 fill_template, parse_template, render_template,
                                 scenario_prompts)

PLACEHOLDER_RE = re.compile(r"\[[A-Za-z ]+\]")


class TestParse:
    def test_single_placeholder(self):
        template = parse_template("Age: [Age]")
        assert template.placeholders == ("Age",)

    def test_shipped_clinical_template_placeholders(self):
        template = default_template()
        assert template.placeholders == (
            "Name", "Age", "Sex", "Chief Complaint", "Medical History",
            "Physical Examination Findings", "Assessment", "Treatment Plan",
        )

    def test_unclosed_bracket_reports_position(self):
        with pytest.raises(TemplateParseError) as exc_info:
            parse_template("bad [Age")
        assert exc_info.value.position == 4

    def test_stray_closing_bracket(self):
        with pytest.raises(TemplateParseError):
            parse_template("oops ] here")

    def test_escaped_brackets_are_literal(self):
        template = parse_template("a [[literal]] b")
        assert template.placeholders == ()
        assert render_template(template, {}) == "a [literal] b"

    def test_repeated_placeholder_listed_once(self):
        template = parse_template("[Name] meets [Name]")
        assert template.placeholders == ("Name",)

    def test_invalid_name_rejected(self):
        with pytest.raises(TemplateParseError):
            parse_template("x [123] y")


class TestRenderAndFill:
    def test_render_roundtrip_identity_fillers(self):
        body = "Patient Name: [Name]\nAge: [Age]\nPlan: [Treatment Plan]"
        template = parse_template(body)
        identity = {name: f"[{name}]" for name in template.placeholders}
        assert render_template(template, identity) == body

    def test_fill_age_in_range(self):
        template = parse_template("Age: [Age]")
        lexicon = {"Age": {"kind": "int_range", "lo": 18, "hi": 90}}
        for seed in range(30):
            text = fill_template(template, lexicon, seed)
            age = int(text.removeprefix("Age: "))
            assert 18 <= age <= 90

    def test_same_seed_identical(self):
        template = default_template()
        lexicon = default_lexicon()
        assert fill_template(template, lexicon, 7) == fill_template(template, lexicon, 7)
        assert fill_template(template, lexicon, 7) != fill_template(template, lexicon, 8)

    def test_missing_placeholder_named(self):
        template = parse_template("Type: [Blood Type]")
        with pytest.raises(MissingPlaceholderError) as exc_info:
            fill_template(template, {}, 0)
        assert exc_info.value.placeholder == "Blood Type"

    def test_no_placeholder_survives_filling(self):
        template = default_template()
        text = fill_template(template, default_lexicon(), 123)
        assert not PLACEHOLDER_RE.search(text)
        assert len(text) >= len("".join(
            seg for kind, seg in template.segments if kind == "lit"))

    def test_repeated_placeholder_filled_consistently(self):
        template = parse_template("[Name] spoke. [Name] listened.")
        lexicon = {"Name": {"kind": "choice", "options": ["Ada", "Grace", "Alan"]}}
        text = fill_template(template, lexicon, 5)
        names = re.findall(r"(\w+) (?:spoke|listened)", text)
        assert names[0] == names[1]

    def test_pattern_slot(self):
        import random
        value = draw_slot({"kind": "pattern", "pattern": "MRN-####?"}, random.Random(1))
        assert re.fullmatch(r"MRN-\d{4}[A-Z]", value)

    def test_bad_slot_specs(self):
        import random
        rng = random.Random(0)
        with pytest.raises(ValueError):
            draw_slot({"kind": "choice", "options": []}, rng)
        with pytest.raises(ValueError):
            draw_slot({"kind": "int_range", "lo": 5, "hi": 1}, rng)
        with pytest.raises(ValueError):
            draw_slot({"kind": "wat"}, rng)

    @given(literals=st.lists(
        st.text(alphabet=st.characters(blacklist_characters="[]"), min_size=0, max_size=10),
        min_size=2, max_size=5))
    @settings(max_examples=60, deadline=None)
    def test_parse_render_roundtrip_property(self, literals):
        names = ["Alpha", "Beta Gamma", "Delta"]
        body = literals[0]
        for i, lit in enumerate(literals[1:]):
            body += f"[{names[i % len(names)]}]" + lit
        template = parse_template(body)
        identity = {name: f"[{name}]" for name in template.placeholders}
        assert render_template(template, identity) == body


class TestFewShotPrompt:
    def test_zero_examples_is_instruction_only(self):
        prompt = build_fewshot_prompt(DEFAULT_FEWSHOT_INSTRUCTION, [], "chest pain")
        assert prompt == ("Generate a new clinical transcript for a patient "
                          "presenting with chest pain.")

    def test_condition_substitution_matches_expected_line(self):
        prompt = build_fewshot_prompt(
            DEFAULT_FEWSHOT_INSTRUCTION, list(default_fewshot_examples()),
            "anxiety and panic attacks")
        assert "presenting with anxiety and panic attacks." in prompt

    def test_numbered_examples_in_order(self):
        prompt = build_fewshot_prompt("Do the thing.", ["first example", "second example"])
        assert prompt.count("Do the thing.") == 1
        assert prompt.index("1. first example") < prompt.index("2. second example")
        assert "Example:" in prompt

    def test_swapping_examples_changes_output(self):
        a = build_fewshot_prompt("Instr.", ["one", "two"])
        b = build_fewshot_prompt("Instr.", ["two", "one"])
        assert a != b

    def test_each_example_exactly_once(self):
        examples = ["alpha beta", "gamma delta", "epsilon zeta"]
        prompt = build_fewshot_prompt("Instr.", examples)
        for example in examples:
            assert prompt.count(example) == 1

    def test_empty_instruction_rejected(self):
        with pytest.raises(ValueError):
            build_fewshot_prompt("", ["x"])

    def test_dataclass_render_matches_function(self):
        prompt = FewShotPrompt(instruction="Say [symptoms or condition].",
                               examples=("e1",), condition="hi")
        assert prompt.render() == build_fewshot_prompt(
            "Say [symptoms or condition].", ["e1"], "hi")


class TestScenarioPrompts:
    def test_ten_scenarios_shipped(self):
        prompts = scenario_prompts()
        assert len(prompts) == 10
        assert set(prompts) == {
            "respiratory", "mental_health", "chronic_condition", "pediatric",
            "surgical", "rare_condition", "geriatric", "substance_abuse",
            "prenatal", "chronic_pain",
        }
        assert all(p.strip() for p in prompts.values())
