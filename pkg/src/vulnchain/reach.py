"""Goal reachability over the machine, plus witnesses and the chaining diff.

Two semantics are provided:

* ``fixed-point`` (default, normative): a monotone worklist that fires any
  state whose preconditions are satisfied, until nothing changes. This is
  the least closed set of states under the firing rule.
* ``paper-dfs``: a single recursive descent that scans the states once in
  id order, firing and granting as it goes, and never revisits positions it
  has already passed. Conditions enabled late in the descent cannot unlock
  earlier-scanned states, so this variant may under-approximate; it never
  over-approximates. It is kept for comparison and regression analysis.

A state fires when every ordinary precondition is in the true set and every
user-action precondition is in the true set or the assumption set. Firing
grants the state's non-false-positive postconditions; false positives are
never granted under either semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import GoalNotReached, InvalidAssumption, ResultFsmMismatch, StateBoundExceeded
from .model import (
    START_STATE_ID,
    AssumptionSet,
    AttackPath,
    AttackState,
    Fsm,
    ReachResult,
)


class Semantics(str, Enum):
    FIXED_POINT = "fixed-point"
    PAPER_DFS = "paper-dfs"


@dataclass(frozen=True)
class ReachParams:
    """Knobs for one reachability run."""

    semantics: Semantics = Semantics.FIXED_POINT
    assumptions: AssumptionSet = field(default_factory=AssumptionSet)
    max_states: int = 100_000

    def __post_init__(self) -> None:
        if self.max_states <= 0:
            raise ValueError("max_states must be positive")


@dataclass(frozen=True)
class IsolationDiff:
    """Goals reachable by chaining vs. by firing a single state.

    ``chained_only`` quantifies the chaining amplification: harm that no
    isolated vulnerability can cause on its own.
    """

    isolated: frozenset[str]
    chained: frozenset[str]
    chained_only: frozenset[str]


def _satisfied(state: AttackState, true: set[str] | frozenset[str], assumed: frozenset[str]) -> bool:
    for ref in state.preconditions:
        cid = ref.condition.id
        if cid in true:
            continue
        if ref.requires_user_action and cid in assumed:
            continue
        return False
    return True


def reach(fsm: Fsm, params: ReachParams | None = None) -> ReachResult:
    """Compute the set of visitable states under the chosen semantics.

    Raises :class:`InvalidAssumption` if an assumed condition is not a
    user-action precondition anywhere in the machine, and
    :class:`StateBoundExceeded` when more than ``max_states`` states fire.
    Deterministic: ties are broken by lexicographic state id, so repeated
    runs return identical results including the firing order.
    """
    params = params or ReachParams()
    assumed = params.assumptions.granted_user_actions
    unknown = assumed - fsm.user_action_condition_ids
    if unknown:
        raise InvalidAssumption(
            "not user-action preconditions of any state: "
            + ", ".join(repr(c) for c in sorted(unknown)))

    if params.semantics is Semantics.FIXED_POINT:
        firing_order, true = _closure_fixed_point(fsm, assumed, params.max_states)
    else:
        firing_order, true = _closure_single_descent(fsm, assumed, params.max_states)

    visited = frozenset(firing_order)
    provenance: dict[str, set[str]] = {}
    for cid in fsm.initial_conditions:
        provenance.setdefault(cid, set()).add(START_STATE_ID)
    for sid in visited:
        state = fsm.by_id[sid]
        if state.is_start:
            continue
        for cid in state.granted_condition_ids():
            provenance.setdefault(cid, set()).add(sid)

    return ReachResult(
        visited=visited,
        true_conditions=frozenset(true) | assumed,
        provenance={cid: frozenset(v) for cid, v in provenance.items()},
        firing_order=tuple(firing_order),
        semantics=params.semantics.value,
        assumptions=assumed,
    )


def _closure_fixed_point(fsm: Fsm, assumed: frozenset[str], max_states: int):
    order = fsm.non_start_states
    firing_order = [START_STATE_ID]
    visited = {START_STATE_ID}
    true = set(fsm.initial_conditions)
    fires = 0
    # Restart the scan after every fire so the lowest-id ready state always
    # fires first; O(states^2 x conditions) worst case, cheap in practice.
    progressed = True
    while progressed:
        progressed = False
        for state in order:
            if state.id in visited or not _satisfied(state, true, assumed):
                continue
            fires += 1
            if fires > max_states:
                raise StateBoundExceeded(f"more than {max_states} states fired")
            visited.add(state.id)
            firing_order.append(state.id)
            true.update(state.granted_condition_ids())
            progressed = True
            break
    return firing_order, true


def _closure_single_descent(fsm: Fsm, assumed: frozenset[str], max_states: int):
    firing_order = [START_STATE_ID]
    true = set(fsm.initial_conditions)
    fires = 0
    # One forward pass in id order: each fire grants its postconditions and
    # the descent continues from the next position, never looking back.
    for state in fsm.non_start_states:
        if _satisfied(state, true, assumed):
            fires += 1
            if fires > max_states:
                raise StateBoundExceeded(f"more than {max_states} states fired")
            firing_order.append(state.id)
            true.update(state.granted_condition_ids())
    return firing_order, true


def collect_goals(result: ReachResult, fsm: Fsm) -> frozenset[str]:
    """Visited goal-flagged states.

    Raises :class:`ResultFsmMismatch` if the result mentions state ids the
    machine does not have.
    """
    unknown = result.visited - set(fsm.by_id)
    if unknown:
        raise ResultFsmMismatch(
            "result references unknown states: " + ", ".join(sorted(unknown)))
    return result.visited & fsm.goal_ids


def extract_witness(fsm: Fsm, result: ReachResult, goal: str) -> AttackPath:
    """Build a replayable attack path for one reached goal.

    Walks provenance backward from the goal, picking for each needed
    condition the producer with the earliest firing position (ties by state
    id), then orders the collected states by firing position. The path is
    valid but not guaranteed globally minimal. User-action preconditions are
    preferentially charged to the assumption set when available.
    """
    if goal not in result.visited or goal not in fsm.by_id:
        raise GoalNotReached(f"goal {goal!r} is not in the visited set")

    position = {sid: i for i, sid in enumerate(result.firing_order)}
    collected = {goal}
    assumptions_used: set[str] = set()
    frontier = [goal]
    while frontier:
        state = fsm.by_id[frontier.pop()]
        for ref in state.preconditions:
            cid = ref.condition.id
            if cid in fsm.initial_conditions:
                continue
            if ref.requires_user_action and cid in result.assumptions:
                assumptions_used.add(cid)
                continue
            candidates = [
                sid for sid in result.provenance.get(cid, ())
                if sid != START_STATE_ID and sid in result.visited
            ]
            if not candidates:
                raise ResultFsmMismatch(
                    f"no visited producer for condition {cid!r} needed by {state.id}")
            producer = min(candidates, key=lambda sid: (position[sid], sid))
            if producer not in collected:
                collected.add(producer)
                frontier.append(producer)

    ordered = sorted(collected, key=lambda sid: position[sid])
    steps = tuple(
        (sid, fsm.by_id[sid].granted_condition_ids()) for sid in ordered
    )
    return AttackPath(goal=goal, steps=steps, assumptions_used=frozenset(assumptions_used))


def diff_isolated_vs_chained(fsm: Fsm, params: ReachParams | None = None) -> IsolationDiff:
    """Compare goals reachable by chaining against single-state firings.

    A goal counts as isolated-reachable when it can fire directly from the
    initial conditions (environment facts and assumptions are free; no other
    state may fire first).
    """
    params = params or ReachParams()
    chained = collect_goals(reach(fsm, params), fsm)
    assumed = params.assumptions.granted_user_actions
    isolated = frozenset(
        s.id for s in fsm.non_start_states
        if s.is_goal and _satisfied(s, fsm.initial_conditions, assumed)
    )
    return IsolationDiff(isolated=isolated, chained=chained, chained_only=chained - isolated)
