import pytest

from bita.errors import InvalidArtifact, SchemaParseFailure
from bita.schemas import (
    BiasFinding,
    Charter,
    PlanGap,
    SystemDescription,
    TestCase,
    TestPlan,
    describe_plan,
    describe_system,
    parse_structured_text,
    parse_system_description,
    parse_test_plan,
    render_structured,
)

FINDING = BiasFinding(
    category="neglected-subgroup",
    description="Older users are missing from the data.",
    affected_groups=("older adults",),
    severity="high",
    evidence_ids=("doc#0000",),
)
GAP = PlanGap(
    gap_kind="untested-scenario",
    description="No low-light coverage.",
    related_case_ids=("case-1",),
    suggested_cases=("Add a dim-light case",),
    evidence_ids=("doc#0001",),
)
CHARTER = Charter(
    mission="Explore capture robustness",
    target_areas=("lighting",),
    fairness_risks=("dark scenes fail",),
    resources_setup=("phones",),
    guiding_questions=("who is hurt?",),
    timebox_minutes=45,
    evidence_ids=("doc#0002",),
)


@pytest.mark.parametrize(
    "objects,task_kind",
    [([FINDING], "bias-detect"), ([GAP], "plan-check"), ([CHARTER], "charter-gen")],
)
def test_render_parse_round_trip(objects, task_kind):
    block = render_structured(objects, task_kind)
    assert parse_structured_text(block, task_kind) == objects


def test_parse_finds_block_inside_prose():
    text = "Some prose first.\n\n" + render_structured([FINDING], "bias-detect") + "\ntrailing"
    assert parse_structured_text(text, "bias-detect") == [FINDING]


def test_parse_rejects_unknown_category():
    block = render_structured([FINDING], "bias-detect").replace(
        "neglected-subgroup", "made-up-category"
    )
    with pytest.raises(SchemaParseFailure):
        parse_structured_text(block, "bias-detect")


def test_parse_rejects_missing_evidence_ids():
    block = '```json\n{"findings": [{"category": "fairness-bug", "description": "d", "severity": "low"}]}\n```'
    with pytest.raises(SchemaParseFailure):
        parse_structured_text(block, "bias-detect")


def test_parse_rejects_missing_block_and_bad_json():
    with pytest.raises(SchemaParseFailure):
        parse_structured_text("no block here", "bias-detect")
    with pytest.raises(SchemaParseFailure):
        parse_structured_text("```json\n{not json}\n```", "bias-detect")


def test_severity_defaults_to_medium():
    block = (
        '```json\n{"findings": [{"category": "fairness-bug", "description": "d",'
        ' "affected_groups": [], "evidence_ids": ["x#0000"]}]}\n```'
    )
    [finding] = parse_structured_text(block, "bias-detect")
    assert finding.severity == "medium"


def test_timebox_defaults_to_sixty():
    block = (
        '```json\n{"charters": [{"mission": "m", "guiding_questions": ["q"],'
        ' "evidence_ids": ["x#0000"]}]}\n```'
    )
    [charter] = parse_structured_text(block, "charter-gen")
    assert charter.timebox_minutes == 60


def test_charter_requires_guiding_question():
    with pytest.raises(ValueError):
        Charter(
            mission="m",
            target_areas=(),
            fairness_risks=(),
            resources_setup=(),
            guiding_questions=(),
            evidence_ids=("x#0000",),
        )


# --- artifacts --------------------------------------------------------------------


def test_system_description_validation():
    with pytest.raises(InvalidArtifact):
        SystemDescription(name="X", purpose=" ", inputs=("a",), outputs=("b",))
    with pytest.raises(InvalidArtifact):
        SystemDescription(name="X", purpose="p", inputs=(), outputs=("b",))
    with pytest.raises(InvalidArtifact):
        SystemDescription(name="X", purpose="p", inputs=("a",), outputs=())


def test_test_plan_validation():
    case = TestCase(case_id="c1", title="t")
    with pytest.raises(InvalidArtifact):
        TestPlan(plan_id="p", cases=())
    with pytest.raises(InvalidArtifact):
        TestPlan(plan_id="p", cases=(case, case))


def test_parse_system_description_file():
    text = (
        "---\nname: Widget\npurpose: Do things fairly\n"
        "inputs: a, b\noutputs: c\ntarget_users: u1, u2\n---\nSome extra notes.\n"
    )
    sysdesc = parse_system_description(text)
    assert sysdesc.name == "Widget"
    assert sysdesc.inputs == ("a", "b")
    assert sysdesc.target_users == ("u1", "u2")
    assert sysdesc.context_notes == "Some extra notes."


def test_parse_system_description_missing_key():
    with pytest.raises(InvalidArtifact):
        parse_system_description("---\nname: X\npurpose: p\ninputs: a\n---\n")


def test_parse_test_plan_case_blocks():
    text = (
        "---\nplan_id: demo\n---\n"
        "## case-a: First case\n- step one\n- step two\ncovers: young users, old users\n\n"
        "## case-b: Second case\n- only step\n"
    )
    plan = parse_test_plan(text)
    assert plan.plan_id == "demo"
    assert [c.case_id for c in plan.cases] == ["case-a", "case-b"]
    assert plan.cases[0].steps == ("step one", "step two")
    assert plan.cases[0].attributes_covered == ("young users", "old users")


def test_parse_test_plan_free_text_maps_to_synthetic_case():
    plan = parse_test_plan("---\n---\nJust check everything carefully.\nTwice.\n")
    assert len(plan.cases) == 1
    assert plan.cases[0].case_id == "free-text"
    assert "Just check everything carefully." in plan.cases[0].steps[0]


def test_describe_system_and_plan_are_deterministic():
    sysdesc = SystemDescription(
        name="Widget", purpose="p", inputs=("a", "b"), outputs=("c",), target_users=("u",)
    )
    assert describe_system(sysdesc) == (
        "System under test: Widget\nPurpose: p\nInputs: a; b\nOutputs: c\nTarget users: u"
    )
    plan = TestPlan(
        plan_id="demo",
        cases=(TestCase(case_id="c1", title="T", steps=("s",), attributes_covered=("x",)),),
    )
    assert describe_plan(plan) == (
        "Test plan demo:\n- Case c1: T\n  Steps: s\n  Covers: x"
    )
