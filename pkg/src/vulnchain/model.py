"""Core domain types: conditions, URIs, findings, machine states and results.

Everything here is immutable after construction and safe to share between
concurrent analyses. Identity rules live here and nowhere else:

* two conditions are the same condition iff their normalized ids are equal;
* two states are the same state iff they share (vulnerability, canonical URI).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping
from urllib.parse import unquote, urlsplit

from .errors import EmptyCondition, MalformedUri, SchemaViolation

#: Canonical form of the "every crawled resource" sentinel URI ("ALL URI").
URI_ALL = "*"
#: Canonical form of the "no specific resource" sentinel URI ("NULL").
URI_NULL = ""
#: Fixed id of the synthetic start state (never collides with hash ids).
START_STATE_ID = "start"


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    """An atomic fact about the victim environment.

    ``id`` is the normalized token used for all matching; ``label`` keeps the
    original human-readable text for display. Equality is by id only.
    """

    id: str
    label: str = field(compare=False)

    def __post_init__(self) -> None:
        if not self.id:
            raise EmptyCondition("condition id must be non-empty")


def normalize_condition(label: str) -> Condition:
    """Build a :class:`Condition` from free text.

    Normalization lowercases, trims, and collapses internal whitespace runs
    to single spaces. Punctuation is preserved, so "weak password" and
    "weak password." are *different* conditions. Idempotent: normalizing a
    condition's id or label again yields the same id.
    """
    collapsed = " ".join(label.split())
    if not collapsed:
        raise EmptyCondition("condition label is empty or whitespace-only")
    return Condition(id=collapsed.lower(), label=label)


# ---------------------------------------------------------------------------
# URIs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizedUri:
    """A victim resource identifier in canonical form.

    ``canonical`` is the scheme-less, percent-decoded path with any trailing
    slash removed (the root ``/`` is kept) and the query string preserved
    verbatim. ``segments`` is ``path.split("/")``, so joining them with "/"
    reproduces the path part of ``canonical``. Two reserved canonicals exist:
    ``*`` ("ALL URI") and the empty string ("NULL"). Equality is by
    ``canonical`` only; ``raw`` keeps the input for round-tripping.
    """

    raw: str = field(compare=False)
    canonical: str
    segments: tuple[str, ...] = field(compare=False)

    @property
    def path(self) -> str:
        """Path part of ``canonical`` (query stripped)."""
        return self.canonical.split("?", 1)[0]

    def display(self) -> str:
        """Human-readable form; spells out the two sentinels."""
        if self.canonical == URI_ALL:
            return "ALL URI"
        if self.canonical == URI_NULL:
            return "NULL"
        return self.canonical


def _decode_path(path: str) -> str:
    # Decode percent-escapes to a fixed point so re-normalizing a canonical
    # path can never change it again ("%2520" -> "%20" -> " ").
    for _ in range(16):
        decoded = unquote(path)
        if decoded == path:
            return path
        path = decoded
    return path


def normalize_uri(raw: str) -> NormalizedUri:
    """Normalize a URI string; idempotent on its own canonical output.

    "ALL URI" maps to the reserved canonical ``*`` and "NULL" to the empty
    canonical. A scheme and authority, if present, are dropped; relative
    paths gain a leading slash; fragments are discarded.

    Raises :class:`MalformedUri` for whitespace-only input, control
    characters, or paths whose percent-decoded form cannot be re-parsed
    (decoded ``#`` or ``?`` inside the path).
    """
    if raw == "":
        # Re-entrant form of the NULL sentinel's canonical.
        return NormalizedUri(raw="", canonical=URI_NULL, segments=())
    stripped = raw.strip()
    if not stripped:
        raise MalformedUri("URI is whitespace-only")
    if any(ord(ch) < 0x20 or ch == "\x7f" for ch in raw):
        raise MalformedUri(f"URI contains control characters: {raw!r}")

    lowered = stripped.lower()
    if lowered == "all uri" or stripped == URI_ALL:
        return NormalizedUri(raw=raw, canonical=URI_ALL, segments=(URI_ALL,))
    if lowered == "null":
        return NormalizedUri(raw=raw, canonical=URI_NULL, segments=())

    try:
        parts = urlsplit(stripped)
    except ValueError as exc:
        raise MalformedUri(f"cannot split URI {raw!r}: {exc}") from exc
    # Leading/trailing whitespace on the path or query would not survive a
    # second normalization pass, so it is dropped; interior spaces stay.
    path = _decode_path(parts.path).strip()
    query = parts.query.strip()
    if any(ord(ch) < 0x20 or ch == "\x7f" for ch in path):
        raise MalformedUri(f"percent-decoded path contains control characters: {raw!r}")
    if "#" in path or "?" in path:
        raise MalformedUri(f"percent-decoded path cannot be re-split: {raw!r}")
    if not path.startswith("/"):
        path = "/" + path
    while len(path) > 1 and path.endswith("/"):
        path = path[:-1]
    canonical = f"{path}?{query}" if query else path
    return NormalizedUri(raw=raw, canonical=canonical, segments=tuple(path.split("/")))


# ---------------------------------------------------------------------------
# URI tree
# ---------------------------------------------------------------------------

@dataclass
class UriNode:
    """One node of a :class:`UriTree`; directories are implicit parents."""

    path: str
    name: str
    is_resource: bool = False
    children: dict[str, "UriNode"] = field(default_factory=dict)


class UriTree:
    """Hierarchical map of a site's resources, keyed by canonical URI.

    Leaves carry resources; internal nodes are directories. Inserting the
    same URI twice is a no-op (set semantics).
    """

    def __init__(self) -> None:
        self.root = UriNode(path="/", name="")
        self._index: dict[str, UriNode] = {"/": self.root}

    def __contains__(self, canonical: str) -> bool:
        return canonical in self._index

    def __len__(self) -> int:
        return len(self._index)

    def node(self, canonical: str) -> UriNode:
        return self._index[canonical]

    def resources(self) -> tuple[str, ...]:
        return tuple(sorted(p for p, n in self._index.items() if n.is_resource))

    def insert(self, uri: NormalizedUri) -> None:
        """Add one resource, creating intermediate directories implicitly."""
        if uri.canonical in (URI_ALL, URI_NULL):
            raise MalformedUri(f"sentinel URI {uri.display()!r} cannot be a crawled resource")
        if uri.canonical == "/":
            self.root.is_resource = True
            return
        path, _, query = uri.canonical.partition("?")
        names = [seg for seg in path.split("/") if seg]
        if query:
            names[-1] = f"{names[-1]}?{query}"
        node = self.root
        for depth, name in enumerate(names):
            is_last = depth == len(names) - 1
            key = uri.canonical if is_last else "/" + "/".join(names[: depth + 1])
            child = node.children.get(name)
            if child is None:
                child = UriNode(path=key, name=name)
                node.children[name] = child
                self._index[key] = child
            if is_last:
                child.is_resource = True
            node = child


# ---------------------------------------------------------------------------
# Findings and condition references
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreconditionRef:
    """A condition a state requires; dotted-edge flag for user actions."""

    condition: Condition
    requires_user_action: bool = False


@dataclass(frozen=True)
class PostconditionRef:
    """A condition a state grants; false positives are never granted."""

    condition: Condition
    false_positive: bool = False


def _check_no_duplicate_conditions(refs, kind: str, owner: str) -> None:
    seen: set[str] = set()
    for ref in refs:
        cid = ref.condition.id
        if cid in seen:
            raise SchemaViolation(f"duplicate {kind} condition {cid!r}", path=owner)
        seen.add(cid)


@dataclass(frozen=True)
class Finding:
    """One scanner-reported vulnerability on one URI.

    Pre/postcondition lists are stored sorted by condition id (canonical
    ordering); no condition id may repeat within either list.
    """

    vulnerability_name: str
    uri: NormalizedUri
    preconditions: tuple[PreconditionRef, ...] = ()
    postconditions: tuple[PostconditionRef, ...] = ()
    is_goal: bool = False
    source: str = ""
    label: str | None = None

    def __post_init__(self) -> None:
        if not self.vulnerability_name.strip():
            raise SchemaViolation("vulnerability name must be non-empty")
        object.__setattr__(
            self, "preconditions",
            tuple(sorted(self.preconditions, key=lambda r: r.condition.id)))
        object.__setattr__(
            self, "postconditions",
            tuple(sorted(self.postconditions, key=lambda r: r.condition.id)))
        owner = f"{self.vulnerability_name} @ {self.uri.display()}"
        _check_no_duplicate_conditions(self.preconditions, "precondition", owner)
        _check_no_duplicate_conditions(self.postconditions, "postcondition", owner)

    @property
    def state_id(self) -> str:
        return state_id(self.vulnerability_name, self.uri)


def state_id(vulnerability_name: str, uri: NormalizedUri) -> str:
    """Stable opaque id for a (vulnerability, canonical URI) pair.

    Distinct pairs yield distinct ids; identical pairs always hash to the
    same token across runs and platforms.
    """
    name = " ".join(vulnerability_name.split()).lower()
    key = f"{name}@{uri.canonical}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Machine states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackState:
    """A node of the machine: a (vulnerability, URI) pair plus conditions."""

    id: str
    vulnerability_name: str
    uri: NormalizedUri
    preconditions: tuple[PreconditionRef, ...] = ()
    postconditions: tuple[PostconditionRef, ...] = ()
    is_goal: bool = False
    is_start: bool = False
    source: str = ""
    label: str | None = None

    @classmethod
    def from_finding(cls, finding: Finding) -> "AttackState":
        return cls(
            id=finding.state_id,
            vulnerability_name=finding.vulnerability_name,
            uri=finding.uri,
            preconditions=finding.preconditions,
            postconditions=finding.postconditions,
            is_goal=finding.is_goal,
            source=finding.source,
            label=finding.label,
        )

    @classmethod
    def make_start(cls, facts: Iterable[Condition]) -> "AttackState":
        """The null situation before any attack: no preconditions, never a
        goal; its postconditions are exactly the recon facts."""
        unique = {c.id: c for c in facts}
        posts = tuple(
            PostconditionRef(condition=unique[cid]) for cid in sorted(unique)
        )
        return cls(
            id=START_STATE_ID,
            vulnerability_name="",
            uri=normalize_uri("/"),
            postconditions=posts,
            is_start=True,
            label="S0",
        )

    def granted_condition_ids(self) -> tuple[str, ...]:
        """Condition ids this state makes true when it fires (FP excluded)."""
        return tuple(r.condition.id for r in self.postconditions if not r.false_positive)

    def display_name(self) -> str:
        if self.is_start:
            return START_STATE_ID
        return self.label if self.label else self.id


# ---------------------------------------------------------------------------
# The machine itself
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fsm:
    """The assembled machine: states plus condition-derived indices.

    ``producers`` maps every condition id to the states granting it through
    non-false-positive postconditions (the start state counts, for recon
    facts); ``consumers`` maps every condition id to the states requiring
    it. Every condition id mentioned anywhere appears in both maps, possibly
    with an empty set (an unsatisfiable precondition keeps an empty producer
    set). ``diagnostics`` collects deterministic analysis notes.
    """

    site: str
    states: tuple[AttackState, ...]
    producers: Mapping[str, frozenset[str]]
    consumers: Mapping[str, frozenset[str]]
    initial_conditions: frozenset[str]
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        starts = [s for s in self.states if s.is_start]
        if len(starts) != 1:
            raise SchemaViolation(f"expected exactly one start state, found {len(starts)}")
        start = starts[0]
        if start.preconditions:
            raise SchemaViolation("start state must have no preconditions")
        if start.is_goal:
            raise SchemaViolation("start state can never be a goal")
        seen: set[str] = set()
        for s in self.states:
            if s.id in seen:
                raise SchemaViolation(f"duplicate state id {s.id!r}")
            seen.add(s.id)

    @cached_property
    def start(self) -> AttackState:
        return next(s for s in self.states if s.is_start)

    @cached_property
    def by_id(self) -> Mapping[str, AttackState]:
        return {s.id: s for s in self.states}

    @cached_property
    def non_start_states(self) -> tuple[AttackState, ...]:
        return tuple(sorted((s for s in self.states if not s.is_start), key=lambda s: s.id))

    @cached_property
    def goal_ids(self) -> frozenset[str]:
        return frozenset(s.id for s in self.states if s.is_goal)

    @cached_property
    def condition_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.producers) | set(self.consumers)))

    @cached_property
    def user_action_condition_ids(self) -> frozenset[str]:
        return frozenset(
            r.condition.id
            for s in self.states for r in s.preconditions
            if r.requires_user_action
        )

    @cached_property
    def edges(self) -> tuple[tuple[str, str, str], ...]:
        """Structural edges (producer id, consumer id, condition id), sorted.

        An edge exists iff some condition is a non-false-positive
        postcondition of the producer and a precondition of the consumer.
        """
        out: set[tuple[str, str, str]] = set()
        for s in self.states:
            for cid in s.granted_condition_ids():
                for consumer in self.consumers.get(cid, ()):
                    out.add((s.id, consumer, cid))
        return tuple(sorted(out))

    @cached_property
    def start_successors(self) -> tuple[str, ...]:
        """States whose preconditions are all satisfiable from the initial
        conditions alone; precondition-free states always qualify."""
        return tuple(sorted(
            s.id for s in self.non_start_states
            if all(r.condition.id in self.initial_conditions for r in s.preconditions)
        ))

    @cached_property
    def unconditional_start_targets(self) -> tuple[str, ...]:
        """Precondition-free states; these get the plain start edges."""
        return tuple(sorted(s.id for s in self.non_start_states if not s.preconditions))

    def label_of(self, sid: str) -> str:
        return self.by_id[sid].display_name()


# ---------------------------------------------------------------------------
# Assumptions and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionSet:
    """Condition ids the analyst assumes the victim user makes true.

    Only conditions that appear as ``requires_user_action`` preconditions
    somewhere in the machine are valid members; reachability rejects the
    rest at run time.
    """

    granted_user_actions: frozenset[str] = frozenset()

    @classmethod
    def of(cls, *labels: str) -> "AssumptionSet":
        return cls(frozenset(normalize_condition(lb).id for lb in labels))

    def __bool__(self) -> bool:
        return bool(self.granted_user_actions)


@dataclass(frozen=True)
class ReachResult:
    """Closure of a reachability run, with provenance for witnesses.

    ``true_conditions`` is ``initial ∪ assumptions ∪ granted-by-visited``;
    false-positive postconditions never appear. ``provenance`` maps each
    production-or-recon condition to every visited state that granted it
    (the start state stands in for recon facts); assumed conditions have no
    provenance entry. ``firing_order`` records first-visit order, start
    first.
    """

    visited: frozenset[str]
    true_conditions: frozenset[str]
    provenance: Mapping[str, frozenset[str]]
    firing_order: tuple[str, ...]
    semantics: str
    assumptions: frozenset[str]


@dataclass(frozen=True)
class AttackPath:
    """Replayable witness for one goal.

    ``steps`` is an ordered list of (state id, condition ids granted at that
    step); replaying from ``initial ∪ assumptions_used`` satisfies each
    step's preconditions before it fires, and the last step is the goal.
    """

    goal: str
    steps: tuple[tuple[str, tuple[str, ...]], ...]
    assumptions_used: frozenset[str]
