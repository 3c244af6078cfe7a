"""Loading and validating crawl lists and normalized scanner findings.

Two input formats are supported: the canonical findings JSON document and a
minimal tab-separated adapter. Native formats of individual scanners are out
of scope; normalize them into one of these first.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import DuplicateState, EmptyCondition, MalformedUri, SchemaViolation, UnknownAssumptionFlag
from .model import (
    URI_ALL,
    Condition,
    Finding,
    PostconditionRef,
    PreconditionRef,
    UriTree,
    normalize_condition,
    normalize_uri,
)

_TSV_HEADER = ("VULN", "URI", "PRE", "POST", "GOAL")


@dataclass(frozen=True)
class FindingSet:
    """Validated findings for one site plus recon facts known at the outset.

    ``environment_facts`` are conditions true before any state fires (server
    versions and similar discoveries); they may coincide with postconditions.
    ``warnings`` are deterministic validation notes, recomputed from content.
    """

    site: str
    environment_facts: tuple[Condition, ...] = ()
    findings: tuple[Finding, ...] = ()
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class UriVulnerabilityMap:
    """Findings grouped by canonical URI; values preserve finding order."""

    by_uri: Mapping[str, tuple[Finding, ...]]
    warnings: tuple[str, ...] = ()

    def total_findings(self) -> int:
        return sum(len(v) for v in self.by_uri.values())


# ---------------------------------------------------------------------------
# Crawl lists
# ---------------------------------------------------------------------------

def parse_crawl_list(document: str | bytes) -> UriTree:
    """Build a :class:`UriTree` from a newline-separated URI list.

    Blank lines and ``#`` comments are ignored; duplicates are silently
    deduplicated. Raises :class:`MalformedUri` carrying the line number.
    """
    text = _decode(document, what="crawl list")
    tree = UriTree()
    for lineno, line in enumerate(text.splitlines(), start=1):
        entry = line.strip()
        if not entry or entry.startswith("#"):
            continue
        try:
            tree.insert(normalize_uri(entry))
        except MalformedUri as exc:
            raise MalformedUri(f"line {lineno}: {exc}") from exc
    return tree


# ---------------------------------------------------------------------------
# Findings documents
# ---------------------------------------------------------------------------

def parse_findings(document: str | bytes) -> FindingSet:
    """Parse and validate the canonical findings JSON document.

    Unknown fields are rejected. Raises :class:`SchemaViolation` with the
    offending path, :class:`DuplicateState` for a repeated (vulnerability,
    URI) pair, and :class:`UnknownAssumptionFlag` if a postcondition carries
    ``requires_user_action``.
    """
    text = _decode(document, what="findings document")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("top-level value must be an object")
    _reject_unknown(doc, {"site", "environment_facts", "findings"}, path="$")

    site = _expect(doc, "site", str, path="$")
    raw_facts = _expect(doc, "environment_facts", list, path="$")
    raw_findings = _expect(doc, "findings", list, path="$")

    facts: dict[str, Condition] = {}
    for i, item in enumerate(raw_facts):
        path = f"environment_facts[{i}]"
        if not isinstance(item, str):
            raise SchemaViolation("environment fact must be a string", path=path)
        cond = _condition(item, path)
        facts.setdefault(cond.id, cond)

    findings = []
    for i, item in enumerate(raw_findings):
        findings.append(_parse_finding_object(item, path=f"findings[{i}]"))

    return _assemble(site, facts, findings)


def parse_findings_tsv(document: str | bytes, site: str = "") -> FindingSet:
    """Parse the tab-separated adapter format.

    Columns are VULN, URI, PRE, POST, GOAL. PRE and POST cells are
    ";"-joined condition lists; a ``!`` prefix marks a user-action
    precondition and a ``?`` prefix marks a false-positive postcondition.
    GOAL is 0 or 1. The format carries no environment facts or labels.
    """
    text = _decode(document, what="findings table")
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows or tuple(rows[0].rstrip("\n").split("\t")) != _TSV_HEADER:
        raise SchemaViolation(f"first line must be the header {chr(9).join(_TSV_HEADER)!r}")

    findings = []
    for lineno, row in enumerate(rows[1:], start=2):
        path = f"line {lineno}"
        cells = row.split("\t")
        if len(cells) != len(_TSV_HEADER):
            raise SchemaViolation(f"expected {len(_TSV_HEADER)} columns, got {len(cells)}", path=path)
        vuln, uri_text, pre_cell, post_cell, goal_cell = cells
        if goal_cell.strip() not in ("0", "1"):
            raise SchemaViolation(f"GOAL must be 0 or 1, got {goal_cell!r}", path=path)
        pres = []
        for part in _split_cell(pre_cell):
            flagged = part.startswith("!")
            pres.append(PreconditionRef(
                condition=_condition(part[1:] if flagged else part, path),
                requires_user_action=flagged,
            ))
        posts = []
        for part in _split_cell(post_cell):
            flagged = part.startswith("?")
            posts.append(PostconditionRef(
                condition=_condition(part[1:] if flagged else part, path),
                false_positive=flagged,
            ))
        findings.append(_build_finding(
            vuln, uri_text, pres, posts,
            is_goal=goal_cell.strip() == "1", source="", label=None, path=path,
        ))
    return _assemble(site, {}, findings)


def serialize_findings(finding_set: FindingSet) -> str:
    """Canonical JSON form; ``parse_findings`` of the output reproduces the
    input :class:`FindingSet` exactly."""
    doc: dict[str, Any] = {
        "site": finding_set.site,
        "environment_facts": [c.label for c in finding_set.environment_facts],
        "findings": [],
    }
    for f in finding_set.findings:
        item: dict[str, Any] = {
            "vulnerability": f.vulnerability_name,
            "uri": f.uri.raw,
            "preconditions": [
                {"condition": r.condition.label, "requires_user_action": r.requires_user_action}
                for r in f.preconditions
            ],
            "postconditions": [
                {"condition": r.condition.label, "false_positive": r.false_positive}
                for r in f.postconditions
            ],
            "is_goal": f.is_goal,
        }
        if f.source:
            item["source"] = f.source
        if f.label is not None:
            item["label"] = f.label
        doc["findings"].append(item)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def map_findings_to_uris(findings: FindingSet, tree: UriTree | None) -> UriVulnerabilityMap:
    """Group findings by canonical URI.

    Findings on URIs absent from the crawl tree are kept but flagged with a
    warning (scanner and crawler disagree); the ``*`` sentinel maps under
    its reserved key without a warning. With ``tree=None`` no disagreement
    warnings are produced.
    """
    by_uri: dict[str, list[Finding]] = {}
    missing: set[str] = set()
    for f in findings.findings:
        key = f.uri.canonical
        by_uri.setdefault(key, []).append(f)
        if tree is not None and key != URI_ALL and key not in tree:
            missing.add(key)
    warnings = tuple(
        f"no crawled resource matches finding URI {key if key else 'NULL'!r}"
        for key in sorted(missing)
    )
    return UriVulnerabilityMap(
        by_uri={k: tuple(v) for k, v in by_uri.items()},
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Shared assembly and validation
# ---------------------------------------------------------------------------

def _assemble(site: str, facts: dict[str, Condition], findings: list[Finding]) -> FindingSet:
    seen: dict[str, str] = {}
    for f in findings:
        sid = f.state_id
        desc = f"{f.vulnerability_name} @ {f.uri.display()}"
        if sid in seen:
            raise DuplicateState(f"{desc} repeats {seen[sid]}")
        seen[sid] = desc
    ordered = tuple(sorted(
        findings,
        key=lambda f: (" ".join(f.vulnerability_name.split()).lower(), f.uri.canonical),
    ))
    fact_tuple = tuple(facts[c] for c in sorted(facts))
    return FindingSet(
        site=site,
        environment_facts=fact_tuple,
        findings=ordered,
        warnings=_content_warnings(fact_tuple, ordered),
    )


def _content_warnings(facts: tuple[Condition, ...], findings: tuple[Finding, ...]) -> tuple[str, ...]:
    warnings: list[str] = []

    producible = {c.id for c in facts}
    for f in findings:
        for r in f.postconditions:
            if not r.false_positive:
                producible.add(r.condition.id)

    # Preconditions nobody can make true usually mean a condition-string
    # typo. User-action preconditions are exempt: they are satisfied from
    # the assumption set by design.
    unsatisfiable: set[str] = set()
    for f in findings:
        for r in f.preconditions:
            if not r.requires_user_action and r.condition.id not in producible:
                unsatisfiable.add(r.condition.id)
    warnings.extend(
        f"precondition {cid!r} has no producing finding and no matching environment fact"
        for cid in sorted(unsatisfiable)
    )

    # Near-miss pairs: ids that collide once punctuation is stripped point
    # at pre/postcondition strings that were meant to match but do not.
    all_ids: set[str] = {c.id for c in facts}
    for f in findings:
        all_ids.update(r.condition.id for r in f.preconditions)
        all_ids.update(r.condition.id for r in f.postconditions)
    stripped: dict[str, list[str]] = {}
    table = str.maketrans("", "", string.punctuation)
    for cid in sorted(all_ids):
        key = " ".join(cid.translate(table).split())
        stripped.setdefault(key, []).append(cid)
    for key in sorted(stripped):
        group = stripped[key]
        if len(group) > 1:
            joined = " / ".join(repr(c) for c in group)
            warnings.append(f"conditions differ only in punctuation: {joined}")

    return tuple(warnings)


def _parse_finding_object(item: Any, path: str) -> Finding:
    if not isinstance(item, dict):
        raise SchemaViolation("finding must be an object", path=path)
    _reject_unknown(
        item,
        {"vulnerability", "uri", "preconditions", "postconditions", "is_goal", "source", "label"},
        path=path,
    )
    vuln = _expect(item, "vulnerability", str, path=path)
    uri_text = _expect(item, "uri", str, path=path)
    raw_pres = _optional(item, "preconditions", list, [], path=path)
    raw_posts = _optional(item, "postconditions", list, [], path=path)

    pres = []
    for j, ref in enumerate(raw_pres):
        ref_path = f"{path}.preconditions[{j}]"
        if not isinstance(ref, dict):
            raise SchemaViolation("precondition must be an object", path=ref_path)
        _reject_unknown(ref, {"condition", "requires_user_action"}, path=ref_path)
        pres.append(PreconditionRef(
            condition=_condition(_expect(ref, "condition", str, path=ref_path), ref_path),
            requires_user_action=_optional(ref, "requires_user_action", bool, False, path=ref_path),
        ))

    posts = []
    for j, ref in enumerate(raw_posts):
        ref_path = f"{path}.postconditions[{j}]"
        if not isinstance(ref, dict):
            raise SchemaViolation("postcondition must be an object", path=ref_path)
        if "requires_user_action" in ref:
            raise UnknownAssumptionFlag(
                "requires_user_action is only valid on preconditions", path=ref_path)
        _reject_unknown(ref, {"condition", "false_positive"}, path=ref_path)
        posts.append(PostconditionRef(
            condition=_condition(_expect(ref, "condition", str, path=ref_path), ref_path),
            false_positive=_optional(ref, "false_positive", bool, False, path=ref_path),
        ))

    label = item.get("label")
    if label is not None and not isinstance(label, str):
        raise SchemaViolation("label must be a string", path=path)
    return _build_finding(
        vuln, uri_text, pres, posts,
        is_goal=_optional(item, "is_goal", bool, False, path=path),
        source=_optional(item, "source", str, "", path=path),
        label=label,
        path=path,
    )


def _build_finding(vuln, uri_text, pres, posts, *, is_goal, source, label, path) -> Finding:
    try:
        uri = normalize_uri(uri_text)
    except MalformedUri as exc:
        raise SchemaViolation(str(exc), path=path) from exc
    try:
        return Finding(
            vulnerability_name=vuln,
            uri=uri,
            preconditions=tuple(pres),
            postconditions=tuple(posts),
            is_goal=is_goal,
            source=source,
            label=label,
        )
    except SchemaViolation as exc:
        raise SchemaViolation(str(exc), path=path) from exc


def _condition(label: str, path: str) -> Condition:
    try:
        return normalize_condition(label)
    except EmptyCondition as exc:
        raise SchemaViolation(str(exc), path=path) from exc


def _split_cell(cell: str) -> list[str]:
    return [part.strip() for part in cell.split(";") if part.strip()]


def _decode(document: str | bytes, what: str) -> str:
    if isinstance(document, bytes):
        try:
            return document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaViolation(f"{what} is not valid UTF-8: {exc}") from exc
    return document


def _reject_unknown(obj: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaViolation(f"unknown fields: {', '.join(unknown)}", path=path)


def _expect(obj: dict, key: str, kind: type, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"missing required field {key!r}", path=path)
    value = obj[key]
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        raise SchemaViolation(f"field {key!r} must be {kind.__name__}", path=path)
    return value


def _optional(obj: dict, key: str, kind: type, default: Any, path: str) -> Any:
    if key not in obj:
        return default
    value = obj[key]
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        raise SchemaViolation(f"field {key!r} must be {kind.__name__}", path=path)
    return value
