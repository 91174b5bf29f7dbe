"""Carbon-liability knowledge-graph ledger.

Event-sourced supply-chain graph with exact micro-tonne liability
propagation, incremental recomputation, a hash-chained audit log,
decision queries, what-if scenario overlays, exports, a REST service and
a CLI.
"""

from .allocation import EmptyWeights, Overdraw, allocate_pool, transfer_share
from .attribution import (
    AttributionResult,
    ContributionBreakdown,
    CycleDetected,
    StaleBase,
    UnknownNode,
    breakdown,
    compute_full,
    compute_incremental,
    topological_order,
    unit_liability,
)
from .audit import (
    AuditLog,
    ChainOk,
    ConservationReport,
    FirstBreak,
    append_audit,
    check_conservation,
    cross_verify,
    verify_chain,
)
from .ingestion import (
    EntityRegistry,
    IngestReport,
    RawEventRecord,
    canonical_line,
    event_from_dict,
    event_to_dict,
    export_events,
    ingest,
    ingest_path,
    parse_ledger_line,
    resolve_entity,
)
from .ledger import apply_event, apply_events, causality_check, replay, validate_event
from .model import (
    GraphState,
    LedgerEvent,
    OrgRecord,
    ProcessNode,
    ProductNode,
    RejectedEvent,
    TransferEdge,
    ValidationReport,
    Violation,
)
from .queries import (
    DeltaReport,
    Footprint,
    RemoveTransfer,
    ScaleTransfer,
    Scenario,
    SetAllocationWeights,
    SetProcessEmissions,
    export_graph,
    hotspots,
    product_footprint,
    scenario_evaluate,
)
from .units import EmissionQty, Quantity, SignedEmissionDelta, format_tonnes, normalize_quantity

__version__ = "0.1.0"
