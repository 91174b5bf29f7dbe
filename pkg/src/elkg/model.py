"""Domain types: the typed event ledger and the materialized knowledge graph.

The graph is event-sourced. Applying an event never mutates an existing
snapshot; it produces a new GraphState that shares every untouched
collection with its parent (copy-on-write), so readers can hold old
versions indefinitely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from typing import Optional, Union

from .units import EmissionQty, Quantity, SignedEmissionDelta

_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


class BadTimestamp(ValueError):
    """Timestamp not in strict YYYY-MM-DDTHH:MM:SSZ form."""


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 UTC timestamp (seconds precision) to epoch seconds."""
    if not isinstance(text, str):
        raise BadTimestamp(f"timestamp must be a string, got {text!r}")
    try:
        dt = datetime.strptime(text, _TS_FORMAT)
    except ValueError as exc:
        raise BadTimestamp(f"bad timestamp {text!r} (expected YYYY-MM-DDTHH:MM:SSZ)") from exc
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime(_TS_FORMAT)


# --- graph records -------------------------------------------------------

@dataclass(frozen=True, slots=True)
class OrgRecord:
    org_id: str
    name: str
    location: str = ""
    sector: str = ""
    metadata: tuple[tuple[str, str], ...] = ()  # free-form, unused by computation


@dataclass(frozen=True, slots=True)
class ProcessInput:
    node_id: str
    quantity: Quantity


@dataclass(frozen=True, slots=True)
class ProcessOutput:
    node_id: str
    product_name: str
    quantity: Quantity


@dataclass(frozen=True, slots=True)
class ProcessNode:
    process_id: str
    owner: str
    name: str
    timestamp: int
    direct_emissions: EmissionQty
    inputs: tuple[ProcessInput, ...]
    outputs: tuple[ProcessOutput, ...]
    # output_id -> positive weight; None means weight by output quantity
    allocation_weights: Optional[tuple[tuple[str, Decimal], ...]] = None


@dataclass(frozen=True, slots=True)
class ProductNode:
    node_id: str
    owner: str
    product_name: str
    quantity: Quantity
    timestamp: int
    produced_by: Optional[str] = None   # process_id
    received_via: Optional[str] = None  # transfer_id

    def __post_init__(self) -> None:
        if (self.produced_by is None) == (self.received_via is None):
            raise ValueError(f"product node {self.node_id}: exactly one origin required")


@dataclass(frozen=True, slots=True)
class TransferEdge:
    transfer_id: str
    source_node: str
    buyer: str
    node_id: str  # product node created under the buyer
    quantity: Quantity
    timestamp: int


# --- ledger events -------------------------------------------------------

@dataclass(frozen=True, slots=True)
class DeclareOrg:
    org_id: str
    name: str
    location: str = ""
    sector: str = ""
    metadata: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True, slots=True)
class DeclareProcess:
    process_id: str
    owner: str
    name: str
    direct_emissions: EmissionQty
    inputs: tuple[ProcessInput, ...]
    outputs: tuple[ProcessOutput, ...]
    allocation_weights: Optional[tuple[tuple[str, Decimal], ...]] = None


@dataclass(frozen=True, slots=True)
class DeclareTransfer:
    transfer_id: str
    source_node: str
    buyer: str
    node_id: str
    quantity: Quantity


@dataclass(frozen=True, slots=True)
class EmissionMeasurement:
    process_id: str
    direct_emissions: EmissionQty


@dataclass(frozen=True, slots=True)
class OffsetAdjustment:
    org_id: str
    delta: SignedEmissionDelta


Payload = Union[DeclareOrg, DeclareProcess, DeclareTransfer, EmissionMeasurement, OffsetAdjustment]

EVENT_KINDS = ("DeclareOrg", "DeclareProcess", "DeclareTransfer", "EmissionMeasurement", "OffsetAdjustment")


@dataclass(frozen=True, slots=True)
class LedgerEvent:
    event_id: str
    kind: str
    timestamp: int
    payload: Payload

    def sort_key(self) -> tuple[int, str]:
        return (self.timestamp, self.event_id)


# --- validation ----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Violation:
    code: str
    message: str
    path: str = ""


@dataclass(frozen=True, slots=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def __bool__(self) -> bool:
        return not self.violations

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


class RejectedEvent(Exception):
    """apply_event precondition violated; carries the validation report."""

    def __init__(self, event: LedgerEvent, report: ValidationReport):
        self.event = event
        self.report = report
        codes = ", ".join(report.codes())
        super().__init__(f"event {event.event_id} rejected: {codes}")


# --- outflows ------------------------------------------------------------

CONSUME = 0
TRANSFER = 1


@dataclass(frozen=True, slots=True)
class Outflow:
    """One draw against a product node: a consumption or an outgoing transfer.

    target_id is the consuming process id (CONSUME) or the transfer id
    (TRANSFER). Draw order across a node is (timestamp, event_id).
    """

    timestamp: int
    event_id: str
    kind: int
    target_id: str
    micro: int

    def sort_key(self) -> tuple[int, str]:
        return (self.timestamp, self.event_id)


# --- the materialized graph ----------------------------------------------

@dataclass(frozen=True)
class GraphState:
    """Immutable snapshot of the knowledge graph at one ledger version.

    Collections are plain dicts shared across snapshots; they are never
    mutated after a snapshot is published.
    """

    version: int = 0
    orgs: dict[str, OrgRecord] = field(default_factory=dict)
    processes: dict[str, ProcessNode] = field(default_factory=dict)
    products: dict[str, ProductNode] = field(default_factory=dict)
    transfers: dict[str, TransferEdge] = field(default_factory=dict)
    # product node id -> outflows in (timestamp, event_id) order
    outflows: dict[str, tuple[Outflow, ...]] = field(default_factory=dict)
    # org id -> accumulated signed offset micro-tonnes
    offsets: dict[str, int] = field(default_factory=dict)
    events: tuple[LedgerEvent, ...] = ()
    event_ids: frozenset[str] = frozenset()

    def remaining_micro(self, node_id: str) -> int:
        node = self.products[node_id]
        drawn = sum(f.micro for f in self.outflows.get(node_id, ()))
        return node.quantity.micro - drawn

    def node_count(self) -> int:
        return len(self.processes) + len(self.products)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphState):
            return NotImplemented
        return (
            self.version == other.version
            and self.orgs == other.orgs
            and self.processes == other.processes
            and self.products == other.products
            and self.transfers == other.transfers
            and self.outflows == other.outflows
            and self.offsets == other.offsets
            and self.events == other.events
        )


EMPTY_STATE = GraphState()
