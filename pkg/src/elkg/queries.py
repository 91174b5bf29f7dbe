"""Decision-support queries, what-if scenario overlays, and graph exports.

Scenario overlays never touch the base snapshot: overrides are applied
copy-on-write to a private overlay state, attribution is recomputed
incrementally over the dirty subgraph, and the report is a pure diff
against the base result.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Optional, Union
from urllib.parse import quote

from .attribution import (
    AttributionResult,
    StaleBase,
    UnknownNode,
    _recompute_dirty,
    unit_liability,
)
from .ingestion import export_events
from .model import (
    CONSUME,
    GraphState,
    Outflow,
    ProcessNode,
    TRANSFER,
    TransferEdge,
    ProductNode,
)
from .units import Quantity, format_tonnes


class UnknownOverrideTarget(KeyError):
    pass


class InvalidOverride(ValueError):
    pass


# --- footprints & hotspots -------------------------------------------------

@dataclass(frozen=True, slots=True)
class Footprint:
    node_id: str
    total_ut: int
    per_unit_ut: Optional[int]  # None when the node quantity is zero
    unit: str


def product_footprint(state: GraphState, result: AttributionResult, node_id: str) -> Footprint:
    """Total liability and per-canonical-unit liability of one product node."""
    if node_id not in result.product_total:
        raise UnknownNode(node_id)
    node = state.products[node_id]
    return Footprint(
        node_id=node_id,
        total_ut=result.product_total[node_id],
        per_unit_ut=unit_liability(state, result, node_id),
        unit=node.quantity.unit,
    )


def hotspots(result: AttributionResult, k: int, dimension: str) -> list[tuple[str, int]]:
    """Top-k entities by liability: org gross, process pool, or product total."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if dimension == "org":
        table = result.org_gross
    elif dimension == "process":
        table = result.process_pool
    elif dimension == "product":
        table = result.product_total
    else:
        raise ValueError(f"dimension must be org|product|process, got {dimension!r}")
    ranked = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


# --- scenarios --------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class SetProcessEmissions:
    process_id: str
    micro_tonnes: int


@dataclass(frozen=True, slots=True)
class SetAllocationWeights:
    process_id: str
    weights: tuple[tuple[str, Decimal], ...]


@dataclass(frozen=True, slots=True)
class ScaleTransfer:
    transfer_id: str
    factor: Decimal


@dataclass(frozen=True, slots=True)
class RemoveTransfer:
    transfer_id: str


Override = Union[SetProcessEmissions, SetAllocationWeights, ScaleTransfer, RemoveTransfer]


@dataclass(frozen=True, slots=True)
class Scenario:
    scenario_id: str
    overrides: tuple[Override, ...]
    base_version: Optional[int] = None


@dataclass(frozen=True, slots=True)
class DeltaEntry:
    kind: str  # "product" | "org"
    entity_id: str
    base_ut: int
    scenario_ut: int

    @property
    def delta_ut(self) -> int:
        return self.scenario_ut - self.base_ut


@dataclass(frozen=True, slots=True)
class DeltaReport:
    scenario_id: str
    base_version: int
    entries: tuple[DeltaEntry, ...]

    def by_id(self, kind: str, entity_id: str) -> Optional[DeltaEntry]:
        for e in self.entries:
            if e.kind == kind and e.entity_id == entity_id:
                return e
        return None


class _Overlay:
    """Copy-on-write staging of scenario overrides on top of a snapshot."""

    def __init__(self, state: GraphState):
        self.state = state
        self.processes = dict(state.processes)
        self.products = dict(state.products)
        self.transfers = dict(state.transfers)
        self.outflows = dict(state.outflows)
        self.seeds: set[str] = set()
        self.removed: dict[str, str] = {}
        self.applied = 0

    def set_process_emissions(self, ov: SetProcessEmissions) -> None:
        proc = self.processes.get(ov.process_id)
        if proc is None:
            raise UnknownOverrideTarget(f"process {ov.process_id} does not exist")
        if ov.micro_tonnes < 0:
            raise InvalidOverride("direct emissions must be >= 0")
        from .units import EmissionQty

        self.processes[ov.process_id] = ProcessNode(
            proc.process_id, proc.owner, proc.name, proc.timestamp,
            EmissionQty(ov.micro_tonnes), proc.inputs, proc.outputs, proc.allocation_weights,
        )
        self.seeds.add(ov.process_id)

    def set_allocation_weights(self, ov: SetAllocationWeights) -> None:
        proc = self.processes.get(ov.process_id)
        if proc is None:
            raise UnknownOverrideTarget(f"process {ov.process_id} does not exist")
        declared = dict(ov.weights)
        if set(declared) != {o.node_id for o in proc.outputs}:
            raise InvalidOverride("weights must cover exactly the process outputs")
        if any(w <= 0 for w in declared.values()):
            raise InvalidOverride("weights must be positive")
        self.processes[ov.process_id] = ProcessNode(
            proc.process_id, proc.owner, proc.name, proc.timestamp,
            proc.direct_emissions, proc.inputs, proc.outputs, tuple(sorted(declared.items())),
        )
        self.seeds.add(ov.process_id)

    def scale_transfer(self, ov: ScaleTransfer) -> None:
        edge = self.transfers.get(ov.transfer_id)
        if edge is None:
            raise UnknownOverrideTarget(f"transfer {ov.transfer_id} does not exist")
        if ov.factor <= 0:
            raise InvalidOverride("scale factor must be > 0")
        exact = Fraction(edge.quantity.micro) * Fraction(ov.factor)
        if exact.denominator != 1:
            raise InvalidOverride(
                f"scaled quantity {exact} is not an integer micro amount"
            )
        new_micro = int(exact)
        source = self.products[edge.source_node]
        other_draws = sum(
            f.micro for f in self.outflows.get(edge.source_node, ())
            if not (f.kind == TRANSFER and f.target_id == edge.transfer_id)
        )
        if other_draws + new_micro > source.quantity.micro:
            raise InvalidOverride("scaled transfer overdraws the source node")
        child = self.products[edge.node_id]
        child_draws = sum(f.micro for f in self.outflows.get(edge.node_id, ()))
        if child_draws > new_micro:
            raise InvalidOverride("scaled transfer leaves the created node overdrawn")
        qty = Quantity(new_micro, edge.quantity.unit)
        self.transfers[ov.transfer_id] = TransferEdge(
            edge.transfer_id, edge.source_node, edge.buyer, edge.node_id, qty, edge.timestamp
        )
        self.products[edge.node_id] = ProductNode(
            child.node_id, child.owner, child.product_name, qty, child.timestamp,
            received_via=child.received_via,
        )
        flows = tuple(
            Outflow(f.timestamp, f.event_id, f.kind, f.target_id, new_micro)
            if f.kind == TRANSFER and f.target_id == edge.transfer_id
            else f
            for f in self.outflows.get(edge.source_node, ())
        )
        self.outflows[edge.source_node] = flows
        self.seeds.add(edge.source_node)

    def remove_transfer(self, ov: RemoveTransfer) -> None:
        edge = self.transfers.get(ov.transfer_id)
        if edge is None:
            raise UnknownOverrideTarget(f"transfer {ov.transfer_id} does not exist")
        self._remove_edge(edge)

    def _remove_edge(self, edge: TransferEdge) -> None:
        # drop the edge and its created node; cascade through the node's own
        # transfers; consuming processes just lose that input row
        del self.transfers[edge.transfer_id]
        source_flows = tuple(
            f for f in self.outflows.get(edge.source_node, ())
            if not (f.kind == TRANSFER and f.target_id == edge.transfer_id)
        )
        if source_flows:
            self.outflows[edge.source_node] = source_flows
        else:
            self.outflows.pop(edge.source_node, None)
        if edge.source_node in self.products:
            self.seeds.add(edge.source_node)
        self._remove_node(edge.node_id)

    def _remove_node(self, node_id: str) -> None:
        node = self.products.pop(node_id, None)
        if node is None:
            return
        self.removed[node_id] = node.owner
        self.seeds.discard(node_id)
        flows = self.outflows.pop(node_id, ())
        for flow in flows:
            if flow.kind == CONSUME:
                self._prune_input(flow.target_id, node_id)
            else:
                child_edge = self.transfers.get(flow.target_id)
                if child_edge is not None:
                    self._remove_edge(child_edge)

    def _prune_input(self, process_id: str, node_id: str) -> None:
        proc = self.processes.get(process_id)
        if proc is None:
            return
        inputs = tuple(i for i in proc.inputs if i.node_id != node_id)
        self.processes[process_id] = ProcessNode(
            proc.process_id, proc.owner, proc.name, proc.timestamp,
            proc.direct_emissions, inputs, proc.outputs, proc.allocation_weights,
        )
        self.seeds.add(process_id)

    def freeze(self) -> GraphState:
        base = self.state
        return GraphState(
            version=base.version + self.applied,
            orgs=base.orgs,
            processes=self.processes,
            products=self.products,
            transfers=self.transfers,
            outflows=self.outflows,
            offsets=base.offsets,
            events=base.events,      # overlays are private: not event-faithful
            event_ids=base.event_ids,
        )


def scenario_state(state: GraphState, scenario: Scenario) -> tuple[GraphState, set[str], dict[str, str]]:
    """Build the overlay snapshot; returns (state', seed nodes, removed->owner)."""
    overlay = _Overlay(state)
    for ov in scenario.overrides:
        if isinstance(ov, SetProcessEmissions):
            overlay.set_process_emissions(ov)
        elif isinstance(ov, SetAllocationWeights):
            overlay.set_allocation_weights(ov)
        elif isinstance(ov, ScaleTransfer):
            overlay.scale_transfer(ov)
        elif isinstance(ov, RemoveTransfer):
            overlay.remove_transfer(ov)
        else:
            raise InvalidOverride(f"unknown override type {type(ov).__name__}")
        overlay.applied += 1
    # seeds may reference nodes a later removal cascaded away
    overlay.seeds -= set(overlay.removed)
    return overlay.freeze(), overlay.seeds, overlay.removed


def scenario_evaluate(state: GraphState, base: AttributionResult, scenario: Scenario) -> DeltaReport:
    """Evaluate overrides against a base snapshot and diff the liabilities.

    The base state and result are never modified; evaluating the same
    scenario twice yields identical reports.
    """
    if base.basis_version != state.version:
        raise StaleBase(f"base version {base.basis_version} != state version {state.version}")
    if scenario.base_version is not None and scenario.base_version != state.version:
        raise StaleBase(f"scenario expects version {scenario.base_version}, state is {state.version}")
    overlay, seeds, removed = scenario_state(state, scenario)
    result = _recompute_dirty(overlay, base, seeds, removed)

    entries: list[DeltaEntry] = []
    product_ids = set(base.product_total) | set(result.product_total)
    for nid in product_ids:
        b = base.product_total.get(nid, 0)
        s = result.product_total.get(nid, 0)
        if b != s:
            entries.append(DeltaEntry("product", nid, b, s))
    for org in set(base.org_net) | set(result.org_net):
        b = base.org_net.get(org, 0)
        s = result.org_net.get(org, 0)
        if b != s:
            entries.append(DeltaEntry("org", org, b, s))
    entries.sort(key=lambda e: (e.kind, e.entity_id))
    return DeltaReport(scenario_id=scenario.scenario_id, base_version=state.version, entries=tuple(entries))


# --- exports ----------------------------------------------------------------

_NS = "urn:elkg:vocab#"
_XSD_INT = "http://www.w3.org/2001/XMLSchema#integer"
_RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"


def _iri(kind: str, entity_id: str) -> str:
    return f"<urn:elkg:{kind}/{quote(entity_id, safe='')}>"


def _triple(subject: str, predicate: str, obj: str) -> str:
    return f"{subject} {predicate} {obj} ."


def _int_literal(value: int) -> str:
    return f'"{value}"^^<{_XSD_INT}>'


def export_graph(state: GraphState, result: AttributionResult, format: str) -> bytes:
    """Serialize the graph: jsonl round-trip, Graphviz dot, or N-Triples.

    Output is deterministic (sorted by id) so identical states produce
    byte-identical exports.
    """
    if format == "jsonl":
        return export_events(state).encode("utf-8")
    if format == "dot":
        return _export_dot(state, result).encode("utf-8")
    if format == "ntriples":
        return _export_ntriples(state, result).encode("utf-8")
    raise ValueError(f"unknown export format {format!r}")


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _export_dot(state: GraphState, result: AttributionResult) -> str:
    lines = ["digraph liabilities {", "  rankdir=LR;"]
    for org_id in sorted(state.orgs):
        org = state.orgs[org_id]
        label = _dot_quote(f"{org.name}\\nnet {format_tonnes(result.org_net.get(org_id, 0))} t")
        lines.append(f"  {_dot_quote('org:' + org_id)} [shape=box,label={label}];")
    for pid in sorted(state.processes):
        proc = state.processes[pid]
        label = _dot_quote(f"{proc.name}\\npool {format_tonnes(result.process_pool.get(pid, 0))} t")
        lines.append(f"  {_dot_quote('process:' + pid)} [shape=ellipse,label={label}];")
    for nid in sorted(state.products):
        node = state.products[nid]
        label = _dot_quote(
            f"{node.product_name}\\n{node.quantity}\\nliability {format_tonnes(result.product_total.get(nid, 0))} t"
        )
        lines.append(f"  {_dot_quote('product:' + nid)} [shape=note,label={label}];")
    for pid in sorted(state.processes):
        proc = state.processes[pid]
        for inp in proc.inputs:
            lines.append(f"  {_dot_quote('product:' + inp.node_id)} -> {_dot_quote('process:' + pid)} [label={_dot_quote(str(inp.quantity))}];")
        for outp in proc.outputs:
            lines.append(f"  {_dot_quote('process:' + pid)} -> {_dot_quote('product:' + outp.node_id)};")
        lines.append(f"  {_dot_quote('org:' + proc.owner)} -> {_dot_quote('process:' + pid)} [style=dotted];")
    for tid in sorted(state.transfers):
        edge = state.transfers[tid]
        label = _dot_quote(f"{tid}: {edge.quantity}")
        lines.append(f"  {_dot_quote('product:' + edge.source_node)} -> {_dot_quote('product:' + edge.node_id)} [style=dashed,label={label}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _export_ntriples(state: GraphState, result: AttributionResult) -> str:
    triples: list[str] = []
    for org_id in sorted(state.orgs):
        subject = _iri("org", org_id)
        triples.append(_triple(subject, f"<{_RDF_TYPE}>", f"<{_NS}Organization>"))
        triples.append(_triple(subject, f"<{_NS}eLiabilityMicroTonnes>", _int_literal(result.org_net.get(org_id, 0))))
    for pid in sorted(state.processes):
        subject = _iri("process", pid)
        triples.append(_triple(subject, f"<{_RDF_TYPE}>", f"<{_NS}Process>"))
        triples.append(_triple(subject, f"<{_NS}eLiabilityMicroTonnes>", _int_literal(result.process_pool.get(pid, 0))))
        for inp in state.processes[pid].inputs:
            triples.append(_triple(subject, f"<{_NS}consumed>", _iri("product", inp.node_id)))
    for nid in sorted(state.products):
        node = state.products[nid]
        subject = _iri("product", nid)
        triples.append(_triple(subject, f"<{_RDF_TYPE}>", f"<{_NS}ProductBatch>"))
        triples.append(_triple(subject, f"<{_NS}eLiabilityMicroTonnes>", _int_literal(result.product_total.get(nid, 0))))
        if node.produced_by is not None:
            triples.append(_triple(subject, f"<{_NS}producedBy>", _iri("process", node.produced_by)))
    for tid in sorted(state.transfers):
        edge = state.transfers[tid]
        triples.append(_triple(_iri("product", edge.source_node), f"<{_NS}transferredTo>", _iri("product", edge.node_id)))
    return "".join(t + "\n" for t in sorted(triples))
