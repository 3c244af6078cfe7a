"""vulnchain: attack-graph analysis of chained web vulnerabilities.

Scanner findings carry preconditions and postconditions; this package links
them into a state machine, computes which harmful goal states become
reachable only through combinations of vulnerabilities, and emits attack-path
witnesses plus graph exports.
"""

from .builder import attach_start_state, build_fsm, build_states, derive_edges
from .errors import (
    DuplicateState,
    EmptyCondition,
    GoalNotReached,
    InvalidAssumption,
    MalformedUri,
    ResultFsmMismatch,
    SchemaViolation,
    StateBoundExceeded,
    UnknownAssumptionFlag,
    VulnchainError,
)
from .ingest import (
    FindingSet,
    UriVulnerabilityMap,
    map_findings_to_uris,
    parse_crawl_list,
    parse_findings,
    parse_findings_tsv,
    serialize_findings,
)
from .model import (
    START_STATE_ID,
    URI_ALL,
    URI_NULL,
    AssumptionSet,
    AttackPath,
    AttackState,
    Condition,
    Finding,
    Fsm,
    NormalizedUri,
    PostconditionRef,
    PreconditionRef,
    ReachResult,
    UriTree,
    normalize_condition,
    normalize_uri,
    state_id,
)
from .reach import (
    IsolationDiff,
    ReachParams,
    Semantics,
    collect_goals,
    diff_isolated_vs_chained,
    extract_witness,
    reach,
)
from .report import (
    AnalysisReport,
    fsm_from_json,
    fsm_to_json,
    report_from_json,
    report_to_json,
    to_dot,
    to_report,
)

__version__ = "0.1.0"
