"""Assembling the machine: states, start wiring and condition indices."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable

from .errors import DuplicateState, SchemaViolation
from .ingest import FindingSet, UriVulnerabilityMap, map_findings_to_uris
from .model import AttackState, Condition, Fsm, UriTree


def build_states(uri_map: UriVulnerabilityMap) -> tuple[AttackState, ...]:
    """One :class:`AttackState` per finding, sorted by id; no start state yet.

    Raises :class:`DuplicateState` defensively; ingestion should already
    have rejected repeated (vulnerability, URI) pairs.
    """
    states: dict[str, AttackState] = {}
    for key in sorted(uri_map.by_uri):
        for finding in uri_map.by_uri[key]:
            state = AttackState.from_finding(finding)
            if state.id in states:
                raise DuplicateState(
                    f"{state.vulnerability_name} @ {state.uri.display()} already present")
            states[state.id] = state
    return tuple(states[sid] for sid in sorted(states))


def attach_start_state(
    states: Iterable[AttackState],
    facts: Iterable[Condition],
    *,
    site: str = "",
    diagnostics: tuple[str, ...] = (),
) -> Fsm:
    """Add the synthetic start state and build the condition indices.

    The start state has no preconditions and grants exactly the environment
    facts; it is implicitly connected to every state whose preconditions are
    all satisfiable from those facts alone.
    """
    state_list = list(states)
    if any(s.is_start for s in state_list):
        raise SchemaViolation("a start state is already present")
    start = AttackState.make_start(facts)
    fsm = Fsm(
        site=site,
        states=tuple([start] + sorted(state_list, key=lambda s: s.id)),
        producers={},
        consumers={},
        initial_conditions=frozenset(c.id for c in facts),
        diagnostics=diagnostics,
    )
    return derive_edges(fsm)


def derive_edges(fsm: Fsm) -> Fsm:
    """Populate the producer/consumer indices from the states.

    Idempotent: re-deriving an already-derived machine changes nothing.
    Consumed conditions with an empty producer set are recorded in the
    diagnostics list; ones required only through user actions are marked as
    such, since those are satisfied from the assumption set by design.
    """
    condition_ids: set[str] = set(fsm.initial_conditions)
    producers: dict[str, set[str]] = {}
    consumers: dict[str, set[str]] = {}
    only_user_action: dict[str, bool] = {}

    for state in fsm.states:
        for ref in state.preconditions:
            cid = ref.condition.id
            condition_ids.add(cid)
            consumers.setdefault(cid, set()).add(state.id)
            only_user_action[cid] = only_user_action.get(cid, True) and ref.requires_user_action
        for ref in state.postconditions:
            cid = ref.condition.id
            condition_ids.add(cid)
            if not ref.false_positive:
                producers.setdefault(cid, set()).add(state.id)

    notes = set(fsm.diagnostics)
    for cid in sorted(condition_ids):
        if consumers.get(cid) and not producers.get(cid) and cid not in fsm.initial_conditions:
            suffix = " (user-action)" if only_user_action.get(cid) else ""
            notes.add(f"no producer for precondition {cid!r}{suffix}")

    return replace(
        fsm,
        producers={cid: frozenset(producers.get(cid, ())) for cid in condition_ids},
        consumers={cid: frozenset(consumers.get(cid, ())) for cid in condition_ids},
        diagnostics=tuple(sorted(notes)),
    )


def build_fsm(findings: FindingSet, tree: UriTree | None = None) -> Fsm:
    """End-to-end construction from validated inputs.

    Pure and deterministic: equal inputs yield machines that serialize
    identically. Crawler/scanner disagreement warnings from the URI mapping
    land in the machine's diagnostics.
    """
    uri_map = map_findings_to_uris(findings, tree)
    states = build_states(uri_map)
    fsm = attach_start_state(
        states,
        findings.environment_facts,
        site=findings.site,
        diagnostics=uri_map.warnings,
    )
    return derive_edges(fsm)
