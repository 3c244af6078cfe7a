"""Crawl-list and findings-document parsing, validation, and round trips."""

import json

import pytest

from vulnchain import (
    DuplicateState,
    MalformedUri,
    SchemaViolation,
    UnknownAssumptionFlag,
    map_findings_to_uris,
    parse_crawl_list,
    parse_findings,
    parse_findings_tsv,
    serialize_findings,
)

from tests.helpers import FIXTURES, load_finding_set, load_tree


def _doc(findings=(), facts=(), site="test"):
    return json.dumps({
        "site": site,
        "environment_facts": list(facts),
        "findings": list(findings),
    })


def _row(vuln="V", uri="/x", pres=(), posts=(), **extra):
    row = {
        "vulnerability": vuln,
        "uri": uri,
        "preconditions": list(pres),
        "postconditions": list(posts),
    }
    row.update(extra)
    return row


class TestParseCrawlList:
    def test_example_tree(self):
        tree = parse_crawl_list("/login.php\n/index.php\n/Flash/add fla\n")
        assert len(tree) == 5
        assert tree.resources() == ("/Flash/add fla", "/index.php", "/login.php")

    def test_empty_input(self):
        assert len(parse_crawl_list("")) == 1

    def test_duplicates_deduplicated(self):
        tree = parse_crawl_list("/a/b\n/a/b\n")
        assert len(tree) == 3

    def test_comments_and_blank_lines_ignored(self):
        tree = parse_crawl_list("# header\n\n/x\n  \n# trailing\n")
        assert tree.resources() == ("/x",)

    def test_malformed_line_number_reported(self):
        with pytest.raises(MalformedUri, match="line 3"):
            parse_crawl_list("/ok\n# fine\n/bad\x00uri\n")


class TestParseFindings:
    def test_vulnweb_fixture_shape(self):
        fs = load_finding_set("vulnweb")
        assert len(fs.findings) == 10
        goals = sorted(f.label for f in fs.findings if f.is_goal)
        assert goals == ["S10", "S4", "S7"]
        user_action = [
            r for f in fs.findings for r in f.preconditions if r.requires_user_action
        ]
        assert len(user_action) == 3
        assert fs.warnings == ()

    def test_empty_findings_with_one_fact(self):
        fs = parse_findings(_doc(facts=["Server banner exposed"]))
        assert fs.findings == ()
        assert [c.id for c in fs.environment_facts] == ["server banner exposed"]

    def test_false_positive_flag_parsed(self):
        fs = load_finding_set("minimal")
        s1 = next(f for f in fs.findings if f.label == "S1")
        flags = {r.condition.id: r.false_positive for r in s1.postconditions}
        assert flags == {"x1": False, "x2": True}

    def test_unknown_top_level_field(self):
        doc = json.dumps({"site": "x", "environment_facts": [], "findings": [], "extra": 1})
        with pytest.raises(SchemaViolation, match="unknown fields: extra"):
            parse_findings(doc)

    def test_missing_field_with_path(self):
        with pytest.raises(SchemaViolation, match=r"findings\[0\]"):
            parse_findings(_doc([{"uri": "/x"}]))

    def test_wrong_kind(self):
        with pytest.raises(SchemaViolation, match="'is_goal' must be bool"):
            parse_findings(_doc([_row(is_goal="yes")]))

    def test_duplicate_state_rejected(self):
        doc = _doc([_row(vuln="V", uri="/x"), _row(vuln="v", uri="/x/")])
        with pytest.raises(DuplicateState):
            parse_findings(doc)

    def test_user_action_flag_on_postcondition_rejected(self):
        doc = _doc([_row(posts=[{"condition": "c", "requires_user_action": True}])])
        with pytest.raises(UnknownAssumptionFlag):
            parse_findings(doc)

    def test_duplicate_condition_within_preconditions(self):
        doc = _doc([_row(pres=[{"condition": "Same"}, {"condition": "same "}])])
        with pytest.raises(SchemaViolation, match="duplicate precondition"):
            parse_findings(doc)

    def test_invalid_utf8_rejected(self):
        with pytest.raises(SchemaViolation, match="UTF-8"):
            parse_findings(b'{"site": "\xff"}')

    def test_not_json(self):
        with pytest.raises(SchemaViolation, match="not valid JSON"):
            parse_findings("VULN\tURI")

    def test_unsatisfiable_precondition_warning(self):
        fs = load_finding_set("minimal")
        assert fs.warnings == (
            "precondition 'x2' has no producing finding and no matching environment fact",
        )

    def test_user_action_preconditions_do_not_warn(self):
        doc = _doc([_row(pres=[{"condition": "user clicks", "requires_user_action": True}])])
        assert parse_findings(doc).warnings == ()

    def test_near_miss_punctuation_warning(self):
        doc = _doc([
            _row(vuln="A", uri="/a", posts=[{"condition": "weak password."}]),
            _row(vuln="B", uri="/b", pres=[{"condition": "weak password"}]),
        ])
        fs = parse_findings(doc)
        assert any("differ only in punctuation" in w for w in fs.warnings)

    def test_environment_fact_may_coincide_with_postcondition(self):
        doc = _doc(
            [_row(posts=[{"condition": "apache 2.4 detected"}])],
            facts=["Apache 2.4 detected"],
        )
        fs = parse_findings(doc)
        assert fs.environment_facts[0].id == "apache 2.4 detected"


class TestRoundTrip:
    @pytest.mark.parametrize("name", ["minimal", "vulnweb", "teacher"])
    def test_parse_serialize_identity(self, name):
        fs = load_finding_set(name)
        assert parse_findings(serialize_findings(fs)) == fs

    def test_serialize_deterministic(self):
        fs = load_finding_set("vulnweb")
        assert serialize_findings(fs) == serialize_findings(fs)


class TestTabularAdapter:
    def test_tsv_matches_json_fixture(self):
        tsv = (FIXTURES / "minimal" / "findings.tsv").read_bytes()
        from_tsv = parse_findings_tsv(tsv, site="minimal")
        from_json = load_finding_set("minimal")
        # TSV carries no labels; compare everything else per finding.
        assert len(from_tsv.findings) == len(from_json.findings)
        for a, b in zip(from_tsv.findings, from_json.findings):
            assert a.vulnerability_name == b.vulnerability_name
            assert a.uri == b.uri
            assert a.preconditions == b.preconditions
            assert a.postconditions == b.postconditions
            assert a.is_goal == b.is_goal
        assert from_tsv.warnings == from_json.warnings

    def test_flags(self):
        fs = parse_findings_tsv("VULN\tURI\tPRE\tPOST\tGOAL\nV\t/x\t!click;have creds\t?fp;ok\t1\n")
        (f,) = fs.findings
        assert f.is_goal
        assert {r.condition.id: r.requires_user_action for r in f.preconditions} == {
            "click": True, "have creds": False}
        assert {r.condition.id: r.false_positive for r in f.postconditions} == {
            "fp": True, "ok": False}

    def test_header_required(self):
        with pytest.raises(SchemaViolation, match="header"):
            parse_findings_tsv("V\t/x\t\t\t0\n")

    def test_bad_goal_cell(self):
        with pytest.raises(SchemaViolation, match="GOAL"):
            parse_findings_tsv("VULN\tURI\tPRE\tPOST\tGOAL\nV\t/x\t\t\tmaybe\n")


class TestMapFindingsToUris:
    def test_vulnweb_tally(self, vulnweb_findings, vulnweb_tree):
        mapping = map_findings_to_uris(vulnweb_findings, vulnweb_tree)
        counts = {uri: len(fs) for uri, fs in mapping.by_uri.items()}
        assert counts == {
            "/login.php": 4,   # S1, S5, S6, S7
            "/index.php": 1,
            "/auth.php": 2,
            "*": 1,
            "/Flash/add fla": 2,
        }
        assert mapping.warnings == ()

    def test_empty_finding_set(self):
        fs = parse_findings(_doc())
        mapping = map_findings_to_uris(fs, load_tree("minimal"))
        assert mapping.by_uri == {}

    def test_uri_absent_from_tree_warns_but_keeps(self):
        fs = parse_findings(_doc([_row(uri="/ghost.php")]))
        mapping = map_findings_to_uris(fs, load_tree("minimal"))
        assert "/ghost.php" in mapping.by_uri
        assert len(mapping.warnings) == 1
        assert "/ghost.php" in mapping.warnings[0]

    def test_no_findings_lost_or_duplicated(self, vulnweb_findings, vulnweb_tree):
        mapping = map_findings_to_uris(vulnweb_findings, vulnweb_tree)
        assert mapping.total_findings() == len(vulnweb_findings.findings)
        flattened = {f.state_id for fs in mapping.by_uri.values() for f in fs}
        assert flattened == {f.state_id for f in vulnweb_findings.findings}

    def test_warnings_deterministic(self, vulnweb_findings):
        a = map_findings_to_uris(vulnweb_findings, load_tree("minimal"))
        b = map_findings_to_uris(vulnweb_findings, load_tree("minimal"))
        assert a.warnings == b.warnings and a.warnings != ()
