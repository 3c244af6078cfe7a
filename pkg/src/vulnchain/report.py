"""Serialization surfaces: DOT export, machine JSON, and analysis reports.

All emission is byte-deterministic: collections serialize sorted, JSON is
written with sorted keys, and files end with a single newline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import ResultFsmMismatch, SchemaViolation
from .model import (
    START_STATE_ID,
    AssumptionSet,
    AttackPath,
    AttackState,
    Fsm,
    PostconditionRef,
    PreconditionRef,
    ReachResult,
    normalize_condition,
    normalize_uri,
)
from .reach import ReachParams, Semantics, diff_isolated_vs_chained

FSM_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def _esc(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def to_dot(fsm: Fsm, result: ReachResult | None = None) -> str:
    """Render the machine as a deterministic Graphviz digraph.

    Conventions: the start state is a double circle; goal states are filled
    red; edges are labeled with condition ids; false-positive postcondition
    edges are dashed red; user-action precondition edges are dashed. A
    precondition with no drawable source gets a small point node feeding it,
    and a postcondition nobody consumes gets a point sink, so every state
    shows its full in/out degree. When a reach result is given, visited
    states get bold outlines.
    """
    visited = set(result.visited) if result is not None else set()

    # Map (consumer id, condition id) -> user-action flag for edge styling.
    user_action: dict[tuple[str, str], bool] = {}
    for s in fsm.states:
        for ref in s.preconditions:
            user_action[(s.id, ref.condition.id)] = ref.requires_user_action

    edges: set[tuple[str, str, str, str]] = set()  # (src, dst, label, kind)
    for sid in fsm.unconditional_start_targets:
        edges.add((START_STATE_ID, sid, "", "plain"))
    for src, dst, cid in fsm.edges:
        kind = "dashed" if user_action.get((dst, cid)) else "solid"
        edges.add((src, dst, cid, kind))
    for s in fsm.states:
        for ref in s.postconditions:
            cid = ref.condition.id
            consumers = fsm.consumers.get(cid, frozenset())
            if ref.false_positive:
                if consumers:
                    edges.update((s.id, dst, cid, "fp") for dst in consumers)
                else:
                    edges.add((s.id, f"out:{cid}", cid, "fp"))
            elif not consumers:
                edges.add((s.id, f"out:{cid}", cid, "solid"))
    for s in fsm.states:
        for ref in s.preconditions:
            cid = ref.condition.id
            has_source = (
                fsm.producers.get(cid)
                or any(r.condition.id == cid and r.false_positive
                       for st in fsm.states for r in st.postconditions)
            )
            if not has_source:
                kind = "dashed" if ref.requires_user_action else "solid"
                edges.add((f"in:{cid}", s.id, cid, kind))

    point_nodes = sorted(
        {e[0] for e in edges if e[0].startswith("in:")}
        | {e[1] for e in edges if e[1].startswith("out:")}
    )

    lines = ["digraph vulnerability_chains {", "  rankdir=LR;"]
    for state in [fsm.start] + list(fsm.non_start_states):
        attrs = [f'label="{_esc(_node_label(state))}"']
        if state.is_start:
            attrs.append("shape=doublecircle")
        else:
            attrs.append("shape=ellipse")
        styles = []
        if state.is_goal:
            styles.append("filled")
            attrs.append("fillcolor=red")
        if state.id in visited:
            styles.append("bold")
        if styles:
            attrs.append(f'style="{",".join(styles)}"')
        lines.append(f'  "{state.id}" [{", ".join(attrs)}];')
    for node in point_nodes:
        lines.append(f'  "{node}" [shape=point];')

    for src, dst, label, kind in sorted(edges):
        attrs = []
        if label:
            attrs.append(f'label="{_esc(label)}"')
        if kind == "fp":
            attrs.append("style=dashed")
            attrs.append("color=red")
        elif kind == "dashed":
            attrs.append("style=dashed")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f'  "{src}" -> "{dst}"{suffix};')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _node_label(state: AttackState) -> str:
    if state.is_start:
        return START_STATE_ID
    name = state.vulnerability_name
    if state.label:
        name = f"{state.label}: {name}"
    return f"{name}\n{state.uri.display()}"


# ---------------------------------------------------------------------------
# Machine on-disk format
# ---------------------------------------------------------------------------

def fsm_to_json(fsm: Fsm) -> str:
    """Serialize the machine so later commands can skip re-ingestion."""
    start = fsm.start
    states = []
    for state in [start] + list(fsm.non_start_states):
        entry: dict[str, Any] = {
            "id": state.id,
            "vulnerability": state.vulnerability_name,
            "uri": state.uri.raw,
            "is_start": state.is_start,
            "is_goal": state.is_goal,
            "preconditions": [
                {"condition": r.condition.label, "requires_user_action": r.requires_user_action}
                for r in state.preconditions
            ],
            "postconditions": [
                {"condition": r.condition.label, "false_positive": r.false_positive}
                for r in state.postconditions
            ],
        }
        if state.source:
            entry["source"] = state.source
        if state.label is not None:
            entry["label"] = state.label
        states.append(entry)
    doc = {
        "format_version": FSM_FORMAT_VERSION,
        "site": fsm.site,
        "environment_facts": [
            r.condition.label for r in start.postconditions
        ],
        "states": states,
        "producers": {cid: sorted(v) for cid, v in fsm.producers.items()},
        "consumers": {cid: sorted(v) for cid, v in fsm.consumers.items()},
        "initial_conditions": sorted(fsm.initial_conditions),
        "diagnostics": list(fsm.diagnostics),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def fsm_from_json(document: str | bytes) -> Fsm:
    """Load a machine written by :func:`fsm_to_json`.

    The stored indices are verified against ones re-derived from the states;
    a mismatch means the file was edited by hand and is rejected.
    """
    from .builder import derive_edges  # local import avoids a cycle

    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaViolation(f"machine file is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("top-level value must be an object")
    if doc.get("format_version") != FSM_FORMAT_VERSION:
        raise SchemaViolation(
            f"unsupported format_version {doc.get('format_version')!r}; "
            f"expected {FSM_FORMAT_VERSION}")

    states = []
    for i, entry in enumerate(doc.get("states", [])):
        path = f"states[{i}]"
        if not isinstance(entry, dict):
            raise SchemaViolation("state must be an object", path=path)
        pres = tuple(
            PreconditionRef(
                condition=normalize_condition(r["condition"]),
                requires_user_action=bool(r.get("requires_user_action", False)),
            )
            for r in entry.get("preconditions", [])
        )
        posts = tuple(
            PostconditionRef(
                condition=normalize_condition(r["condition"]),
                false_positive=bool(r.get("false_positive", False)),
            )
            for r in entry.get("postconditions", [])
        )
        try:
            states.append(AttackState(
                id=entry["id"],
                vulnerability_name=entry.get("vulnerability", ""),
                uri=normalize_uri(entry["uri"]),
                preconditions=pres,
                postconditions=posts,
                is_goal=bool(entry.get("is_goal", False)),
                is_start=bool(entry.get("is_start", False)),
                source=entry.get("source", ""),
                label=entry.get("label"),
            ))
        except KeyError as exc:
            raise SchemaViolation(f"missing field {exc}", path=path) from exc

    facts = tuple(normalize_condition(lb) for lb in doc.get("environment_facts", []))
    start_states = [s for s in states if s.is_start]
    if len(start_states) == 1:
        granted = set(start_states[0].granted_condition_ids())
        if granted != {c.id for c in facts}:
            raise SchemaViolation(
                "environment_facts do not match the start state's postconditions")
    fsm = Fsm(
        site=doc.get("site", ""),
        states=tuple(states),
        producers={},
        consumers={},
        initial_conditions=frozenset(c.id for c in facts),
        diagnostics=tuple(doc.get("diagnostics", [])),
    )
    fsm = derive_edges(fsm)
    stored_producers = {cid: sorted(v) for cid, v in doc.get("producers", {}).items()}
    derived_producers = {cid: sorted(v) for cid, v in fsm.producers.items()}
    stored_consumers = {cid: sorted(v) for cid, v in doc.get("consumers", {}).items()}
    derived_consumers = {cid: sorted(v) for cid, v in fsm.consumers.items()}
    if stored_producers != derived_producers or stored_consumers != derived_consumers:
        raise SchemaViolation("stored condition indices do not match the states")
    return fsm


# ---------------------------------------------------------------------------
# Analysis reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnreachableGoal:
    state: str
    label: str | None
    missing_conditions: tuple[str, ...]


@dataclass(frozen=True)
class WitnessStep:
    state: str
    label: str | None
    grants: tuple[str, ...]


@dataclass(frozen=True)
class GoalWitness:
    goal: str
    label: str | None
    assumptions_used: tuple[str, ...]
    steps: tuple[WitnessStep, ...]


@dataclass(frozen=True)
class AnalysisReport:
    """Machine-readable outcome of one analysis run.

    ``state_count`` excludes the start state; ``edge_count`` counts labeled
    condition edges plus the plain start edges to precondition-free states.
    """

    site: str
    semantics: str
    assumptions: tuple[str, ...]
    state_count: int
    edge_count: int
    goal_count: int
    reachable_states: tuple[str, ...]
    reachable_goals: tuple[str, ...]
    unreachable_goals: tuple[UnreachableGoal, ...]
    isolated_goals: tuple[str, ...]
    chained_goals: tuple[str, ...]
    chained_only_goals: tuple[str, ...]
    witnesses: tuple[GoalWitness, ...]
    labels: tuple[tuple[str, str], ...]


def to_report(
    fsm: Fsm,
    result: ReachResult,
    witnesses: Mapping[str, AttackPath] | None = None,
) -> AnalysisReport:
    """Assemble the report for one reach result.

    ``witnesses`` maps reachable goal ids to extracted attack paths; pass
    the output of :func:`vulnchain.reach.extract_witness` per goal.
    """
    witnesses = witnesses or {}
    unknown = result.visited - set(fsm.by_id)
    if unknown:
        raise ResultFsmMismatch(
            "result references unknown states: " + ", ".join(sorted(unknown)))

    reachable_goals = tuple(sorted(result.visited & fsm.goal_ids))
    unreachable = []
    for sid in sorted(fsm.goal_ids - result.visited):
        state = fsm.by_id[sid]
        missing = tuple(sorted(
            r.condition.id for r in state.preconditions
            if r.condition.id not in result.true_conditions
        ))
        unreachable.append(UnreachableGoal(state=sid, label=state.label, missing_conditions=missing))

    diff = diff_isolated_vs_chained(fsm, ReachParams(
        semantics=Semantics(result.semantics),
        assumptions=AssumptionSet(result.assumptions),
    ))

    witness_entries = []
    for goal in sorted(witnesses):
        path = witnesses[goal]
        steps = tuple(
            WitnessStep(state=sid, label=fsm.by_id[sid].label, grants=grants)
            for sid, grants in path.steps
        )
        witness_entries.append(GoalWitness(
            goal=goal,
            label=fsm.by_id[goal].label,
            assumptions_used=tuple(sorted(path.assumptions_used)),
            steps=steps,
        ))

    labels = tuple(sorted(
        (s.id, s.label) for s in fsm.states if s.label is not None
    ))
    return AnalysisReport(
        site=fsm.site,
        semantics=result.semantics,
        assumptions=tuple(sorted(result.assumptions)),
        state_count=len(fsm.non_start_states),
        edge_count=len(fsm.edges) + len(fsm.unconditional_start_targets),
        goal_count=len(fsm.goal_ids),
        reachable_states=tuple(sorted(result.visited)),
        reachable_goals=reachable_goals,
        unreachable_goals=tuple(unreachable),
        isolated_goals=tuple(sorted(diff.isolated)),
        chained_goals=tuple(sorted(diff.chained)),
        chained_only_goals=tuple(sorted(diff.chained_only)),
        witnesses=tuple(witness_entries),
        labels=labels,
    )


def report_to_json(report: AnalysisReport) -> str:
    doc = {
        "format_version": REPORT_FORMAT_VERSION,
        "site": report.site,
        "semantics": report.semantics,
        "assumptions": list(report.assumptions),
        "fsm": {
            "states": report.state_count,
            "edges": report.edge_count,
            "goals": report.goal_count,
        },
        "reachable_states": list(report.reachable_states),
        "reachable_goals": list(report.reachable_goals),
        "unreachable_goals": [
            {"state": g.state, "label": g.label, "missing_conditions": list(g.missing_conditions)}
            for g in report.unreachable_goals
        ],
        "isolated_goals": list(report.isolated_goals),
        "chained_goals": list(report.chained_goals),
        "chained_only_goals": list(report.chained_only_goals),
        "witnesses": [
            {
                "goal": w.goal,
                "label": w.label,
                "assumptions_used": list(w.assumptions_used),
                "steps": [
                    {"state": s.state, "label": s.label, "grants": list(s.grants)}
                    for s in w.steps
                ],
            }
            for w in report.witnesses
        ],
        "labels": {sid: label for sid, label in report.labels},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_from_json(document: str | bytes) -> AnalysisReport:
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaViolation(f"report is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != REPORT_FORMAT_VERSION:
        raise SchemaViolation("unsupported or missing report format_version")
    try:
        return AnalysisReport(
            site=doc["site"],
            semantics=doc["semantics"],
            assumptions=tuple(doc["assumptions"]),
            state_count=doc["fsm"]["states"],
            edge_count=doc["fsm"]["edges"],
            goal_count=doc["fsm"]["goals"],
            reachable_states=tuple(doc["reachable_states"]),
            reachable_goals=tuple(doc["reachable_goals"]),
            unreachable_goals=tuple(
                UnreachableGoal(
                    state=g["state"],
                    label=g["label"],
                    missing_conditions=tuple(g["missing_conditions"]),
                )
                for g in doc["unreachable_goals"]
            ),
            isolated_goals=tuple(doc["isolated_goals"]),
            chained_goals=tuple(doc["chained_goals"]),
            chained_only_goals=tuple(doc["chained_only_goals"]),
            witnesses=tuple(
                GoalWitness(
                    goal=w["goal"],
                    label=w["label"],
                    assumptions_used=tuple(w["assumptions_used"]),
                    steps=tuple(
                        WitnessStep(state=s["state"], label=s["label"], grants=tuple(s["grants"]))
                        for s in w["steps"]
                    ),
                )
                for w in doc["witnesses"]
            ),
            labels=tuple(sorted(doc["labels"].items())),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaViolation(f"malformed report: {exc}") from exc
