"""Event validation and application over immutable graph snapshots.

Violations are data, not faults: validate_event returns a report and only
apply_event raises (RejectedEvent) when asked to apply an inapplicable
event. Batch application (ingest, big fixtures) goes through _Builder so a
hundred-thousand-event replay does not pay copy-on-write per event.
"""

from __future__ import annotations

from bisect import insort
from typing import Iterable

from .model import (
    CONSUME,
    TRANSFER,
    DeclareOrg,
    DeclareProcess,
    DeclareTransfer,
    EmissionMeasurement,
    GraphState,
    LedgerEvent,
    OffsetAdjustment,
    OrgRecord,
    Outflow,
    ProcessNode,
    ProductNode,
    RejectedEvent,
    TransferEdge,
    ValidationReport,
    Violation,
)

_KIND_TO_PAYLOAD = {
    "DeclareOrg": DeclareOrg,
    "DeclareProcess": DeclareProcess,
    "DeclareTransfer": DeclareTransfer,
    "EmissionMeasurement": EmissionMeasurement,
    "OffsetAdjustment": OffsetAdjustment,
}


def _check_envelope(event: LedgerEvent) -> None:
    expected = _KIND_TO_PAYLOAD.get(event.kind)
    if expected is None or not isinstance(event.payload, expected):
        raise ValueError(f"event {event.event_id}: kind {event.kind!r} does not match payload")


class _Remaining:
    """Remaining (untransferred, unconsumed) micro-quantity per product node.

    Outflows carry no inflows after node creation, so the overdraw check is
    time-independent: total draws <= initial quantity.
    """

    def __init__(self, state: GraphState):
        self._state = state
        self._cache: dict[str, int] = {}

    def get(self, node_id: str) -> int:
        if node_id not in self._cache:
            self._cache[node_id] = self._state.remaining_micro(node_id)
        return self._cache[node_id]

    def draw(self, node_id: str, micro: int) -> None:
        self._cache[node_id] = self.get(node_id) - micro

    def create(self, node_id: str, micro: int) -> None:
        self._cache[node_id] = micro


def validate_event(state, event: LedgerEvent, remaining=None) -> ValidationReport:
    """Check one event against a snapshot; empty report means applicable.

    `state` is a GraphState or a builder view exposing the same collections.
    """
    _check_envelope(event)
    out: list[Violation] = []
    if event.event_id in state.event_ids:
        out.append(Violation("DuplicateId", f"event id {event.event_id} already applied", "event_id"))
    if remaining is None:
        remaining = _Remaining(state)
    p = event.payload

    if isinstance(p, DeclareOrg):
        if p.org_id in state.orgs:
            out.append(Violation("DuplicateId", f"org {p.org_id} already declared", "payload.org_id"))

    elif isinstance(p, DeclareProcess):
        if p.process_id in state.processes or p.process_id in state.products:
            out.append(Violation("DuplicateId", f"process {p.process_id} already declared", "payload.process_id"))
        if p.owner not in state.orgs:
            out.append(Violation("UnknownReference", f"owner org {p.owner} not declared", "payload.owner"))
        seen_inputs: set[str] = set()
        for i, inp in enumerate(p.inputs):
            path = f"payload.inputs[{i}]"
            node = state.products.get(inp.node_id)
            if node is None:
                out.append(Violation("UnknownReference", f"input node {inp.node_id} not declared", path))
                continue
            if inp.node_id in seen_inputs:
                out.append(Violation("DuplicateInput", f"node {inp.node_id} consumed twice by one process", path))
                continue
            seen_inputs.add(inp.node_id)
            if inp.quantity.unit != node.quantity.unit:
                out.append(Violation("UnitMismatch", f"input {inp.node_id} is in {node.quantity.unit}, not {inp.quantity.unit}", path))
                continue
            if inp.quantity.micro <= 0:
                out.append(Violation("NonPositiveQuantity", f"consumption of {inp.node_id} must be > 0", path))
                continue
            if event.timestamp < node.timestamp:
                out.append(Violation("CausalityViolation", f"process at t={event.timestamp} consumes {inp.node_id} created at t={node.timestamp}", path))
            if inp.quantity.micro > remaining.get(inp.node_id):
                out.append(Violation("QuantityOverdraw", f"consumption of {inp.node_id} exceeds remaining quantity", path))
        if not p.outputs:
            out.append(Violation("EmptyOutputs", f"process {p.process_id} declares no outputs", "payload.outputs"))
        weights = dict(p.allocation_weights) if p.allocation_weights is not None else None
        seen_outputs: set[str] = set()
        for i, outp in enumerate(p.outputs):
            path = f"payload.outputs[{i}]"
            if (
                outp.node_id in state.products
                or outp.node_id in state.processes
                or outp.node_id in seen_outputs
                or outp.node_id == p.process_id
            ):
                out.append(Violation("DuplicateId", f"product node {outp.node_id} already exists", path))
            seen_outputs.add(outp.node_id)
            if outp.quantity.micro == 0 and (weights is None or weights.get(outp.node_id, 0) <= 0):
                out.append(Violation("NonPositiveQuantity", f"output {outp.node_id} has zero quantity and no positive weight", path))
        if weights is not None:
            if set(weights) != {o.node_id for o in p.outputs}:
                out.append(Violation("BadWeights", "allocation weights must cover exactly the declared outputs", "payload.allocation_weights"))
            elif any(w <= 0 for w in weights.values()):
                out.append(Violation("BadWeights", "allocation weights must be positive", "payload.allocation_weights"))

    elif isinstance(p, DeclareTransfer):
        if p.transfer_id in state.transfers:
            out.append(Violation("DuplicateId", f"transfer {p.transfer_id} already declared", "payload.transfer_id"))
        if p.node_id in state.products or p.node_id in state.processes:
            out.append(Violation("DuplicateId", f"product node {p.node_id} already exists", "payload.node_id"))
        if p.buyer not in state.orgs:
            out.append(Violation("UnknownReference", f"buyer org {p.buyer} not declared", "payload.buyer"))
        node = state.products.get(p.source_node)
        if node is None:
            out.append(Violation("UnknownReference", f"source node {p.source_node} not declared", "payload.source_node"))
        else:
            if p.quantity.unit != node.quantity.unit:
                out.append(Violation("UnitMismatch", f"source {p.source_node} is in {node.quantity.unit}, not {p.quantity.unit}", "payload.quantity"))
            elif p.quantity.micro <= 0:
                out.append(Violation("NonPositiveQuantity", "transfer quantity must be > 0", "payload.quantity"))
            else:
                if event.timestamp < node.timestamp:
                    out.append(Violation("CausalityViolation", f"transfer at t={event.timestamp} from node created at t={node.timestamp}", "timestamp"))
                if p.quantity.micro > remaining.get(p.source_node):
                    out.append(Violation("QuantityOverdraw", f"transfer of {p.quantity} exceeds remaining quantity of {p.source_node}", "payload.quantity"))

    elif isinstance(p, EmissionMeasurement):
        if p.process_id not in state.processes:
            out.append(Violation("UnknownReference", f"process {p.process_id} not declared", "payload.process_id"))

    elif isinstance(p, OffsetAdjustment):
        if p.org_id not in state.orgs:
            out.append(Violation("UnknownReference", f"org {p.org_id} not declared", "payload.org_id"))

    return ValidationReport(tuple(out))


class _BuilderView:
    """Read view aliasing a _Builder's staged collections (always current)."""

    __slots__ = ("orgs", "processes", "products", "transfers", "event_ids", "_builder")

    def __init__(self, builder: "_Builder"):
        self.orgs = builder.orgs
        self.processes = builder.processes
        self.products = builder.products
        self.transfers = builder.transfers
        self.event_ids = builder.event_ids
        self._builder = builder

    def remaining_micro(self, node_id: str) -> int:
        node = self.products[node_id]
        drawn = sum(f.micro for f in self._builder.outflows.get(node_id, ()))
        return node.quantity.micro - drawn


class _Builder:
    """Mutable staging area for applying a batch of events, frozen once."""

    def __init__(self, state: GraphState):
        self.base = state
        self.orgs = dict(state.orgs)
        self.processes = dict(state.processes)
        self.products = dict(state.products)
        self.transfers = dict(state.transfers)
        self.outflows: dict[str, list[Outflow]] = {k: list(v) for k, v in state.outflows.items()}
        self.offsets = dict(state.offsets)
        self.events = list(state.events)
        self.event_ids = set(state.event_ids)
        self.view = _BuilderView(self)
        self.remaining = _Remaining(self.view)

    def add_outflow(self, node_id: str, flow: Outflow) -> None:
        flows = self.outflows.setdefault(node_id, [])
        if flows and flows[-1].sort_key() > flow.sort_key():
            insort(flows, flow, key=lambda f: f.sort_key())
        else:
            flows.append(flow)

    def apply(self, event: LedgerEvent) -> None:
        p = event.payload
        ts = event.timestamp
        if isinstance(p, DeclareOrg):
            self.orgs[p.org_id] = OrgRecord(p.org_id, p.name, p.location, p.sector, p.metadata)
        elif isinstance(p, DeclareProcess):
            self.processes[p.process_id] = ProcessNode(
                p.process_id, p.owner, p.name, ts, p.direct_emissions, p.inputs, p.outputs, p.allocation_weights
            )
            for inp in p.inputs:
                self.add_outflow(inp.node_id, Outflow(ts, event.event_id, CONSUME, p.process_id, inp.quantity.micro))
                self.remaining.draw(inp.node_id, inp.quantity.micro)
            for outp in p.outputs:
                self.products[outp.node_id] = ProductNode(
                    outp.node_id, p.owner, outp.product_name, outp.quantity, ts, produced_by=p.process_id
                )
                self.remaining.create(outp.node_id, outp.quantity.micro)
        elif isinstance(p, DeclareTransfer):
            source = self.products[p.source_node]
            self.transfers[p.transfer_id] = TransferEdge(p.transfer_id, p.source_node, p.buyer, p.node_id, p.quantity, ts)
            self.products[p.node_id] = ProductNode(
                p.node_id, p.buyer, source.product_name, p.quantity, ts, received_via=p.transfer_id
            )
            self.add_outflow(p.source_node, Outflow(ts, event.event_id, TRANSFER, p.transfer_id, p.quantity.micro))
            self.remaining.draw(p.source_node, p.quantity.micro)
            self.remaining.create(p.node_id, p.quantity.micro)
        elif isinstance(p, EmissionMeasurement):
            old = self.processes[p.process_id]
            self.processes[p.process_id] = ProcessNode(
                old.process_id, old.owner, old.name, old.timestamp, p.direct_emissions,
                old.inputs, old.outputs, old.allocation_weights,
            )
        elif isinstance(p, OffsetAdjustment):
            self.offsets[p.org_id] = self.offsets.get(p.org_id, 0) + p.delta.micro_tonnes
        self.events.append(event)
        self.event_ids.add(event.event_id)

    def freeze(self) -> GraphState:
        return GraphState(
            version=len(self.events),
            orgs=self.orgs,
            processes=self.processes,
            products=self.products,
            transfers=self.transfers,
            outflows={k: tuple(v) for k, v in self.outflows.items()},
            offsets=self.offsets,
            events=tuple(self.events),
            event_ids=frozenset(self.event_ids),
        )


def apply_event(state: GraphState, event: LedgerEvent) -> GraphState:
    """Apply one validated event, returning a new snapshot (version + 1).

    Raises RejectedEvent when validation fails; the prior snapshot is
    untouched either way.
    """
    report = validate_event(state, event)
    if not report.ok:
        raise RejectedEvent(event, report)
    builder = _Builder(state)
    builder.apply(event)
    return builder.freeze()


def apply_events(
    state: GraphState,
    events: Iterable[LedgerEvent],
    on_reject: str = "raise",
) -> tuple[GraphState, list[tuple[LedgerEvent, ValidationReport]]]:
    """Apply many events in the given order with one copy-on-write pass.

    on_reject: "raise" re-raises the first rejection, "skip" collects
    rejections and keeps going (no rejected event alters the state).
    """
    if on_reject not in ("raise", "skip"):
        raise ValueError("on_reject must be 'raise' or 'skip'")
    builder = _Builder(state)
    rejects: list[tuple[LedgerEvent, ValidationReport]] = []
    for event in events:
        report = validate_event(builder.view, event, remaining=builder.remaining)
        if not report.ok:
            if on_reject == "raise":
                raise RejectedEvent(event, report)
            rejects.append((event, report))
            continue
        builder.apply(event)
    return builder.freeze(), rejects


def replay(events: Iterable[LedgerEvent]) -> GraphState:
    """Rebuild a graph from scratch; deterministic for a fixed event order."""
    state, _ = apply_events(GraphState(), events, on_reject="raise")
    return state


def causality_check(state: GraphState) -> list[Violation]:
    """Every consumption and transfer edge must point forward in time."""
    out: list[Violation] = []
    for proc in state.processes.values():
        for inp in proc.inputs:
            node = state.products.get(inp.node_id)
            if node is not None and proc.timestamp < node.timestamp:
                out.append(Violation(
                    "CausalityViolation",
                    f"process {proc.process_id} (t={proc.timestamp}) consumes {inp.node_id} created at t={node.timestamp}",
                ))
    for edge in state.transfers.values():
        node = state.products.get(edge.source_node)
        if node is not None and edge.timestamp < node.timestamp:
            out.append(Violation(
                "CausalityViolation",
                f"transfer {edge.transfer_id} (t={edge.timestamp}) from {edge.source_node} created at t={node.timestamp}",
            ))
    out.sort(key=lambda v: v.message)
    return out
