"""Ledger-file parsing, unit normalization, entity resolution, ingest.

Ledger files are UTF-8 JSONL: one event object per line with fields
{event_id, kind, timestamp, payload}. A CSV import is supported for
transfer-only files (header: transfer_id,source_node,buyer,quantity,unit,
timestamp). Files are applied in (timestamp, event_id) order regardless of
line order, rejects are reported per line, and nothing is silently
repaired.

canonical_line() is the one serialization used for export, for the audit
chain, and for round-trips; it is byte-stable for a given event.
"""

from __future__ import annotations

import csv as _csv
import io
import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Optional

from .ledger import apply_events
from .model import (
    BadTimestamp,
    DeclareOrg,
    DeclareProcess,
    DeclareTransfer,
    EmissionMeasurement,
    EVENT_KINDS,
    GraphState,
    LedgerEvent,
    OffsetAdjustment,
    ProcessInput,
    ProcessOutput,
    format_timestamp,
    parse_timestamp,
)
from .units import (
    BadNumber,
    EmissionQty,
    Quantity,
    SignedEmissionDelta,
    format_micro,
    normalize_quantity,
    parse_decimal,
)

CSV_HEADER = ["transfer_id", "source_node", "buyer", "quantity", "unit", "timestamp"]


class MalformedRecord(ValueError):
    """Record is not a well-formed event object."""


class UnknownEventKind(MalformedRecord):
    pass


class UnresolvedEntity(KeyError):
    """Name has no canonical id in the registry."""


class AmbiguousAlias(KeyError):
    """Normalized alias maps to more than one canonical id."""


class IoFailure(OSError):
    pass


@dataclass(frozen=True, slots=True)
class RawEventRecord:
    """One verbatim ledger line plus its source locator (kept for audit)."""

    text: str
    source: str = "<memory>"
    line_no: int = 0


# --- entity registry -------------------------------------------------------

def normalize_alias(name: str) -> str:
    return " ".join(name.casefold().split())


class EntityRegistry:
    """Alias -> canonical id map, exact-match after normalization only."""

    def __init__(self) -> None:
        self._aliases: dict[str, set[str]] = {}
        self._known_ids: set[str] = set()

    def register(self, alias: str, canonical_id: str) -> None:
        self._aliases.setdefault(normalize_alias(alias), set()).add(canonical_id)
        self._known_ids.add(canonical_id)

    def copy(self) -> "EntityRegistry":
        clone = EntityRegistry()
        clone._aliases = {k: set(v) for k, v in self._aliases.items()}
        clone._known_ids = set(self._known_ids)
        return clone

    def resolve(self, name_or_id: str) -> str:
        if name_or_id in self._known_ids:
            return name_or_id
        hits = self._aliases.get(normalize_alias(name_or_id), set())
        if not hits:
            raise UnresolvedEntity(f"no entity registered for {name_or_id!r}")
        if len(hits) > 1:
            raise AmbiguousAlias(f"alias {name_or_id!r} maps to {sorted(hits)}")
        return next(iter(hits))


def resolve_entity(name_or_id: str, registry: EntityRegistry) -> str:
    """Canonical id for an exact (normalized) alias match; never fuzzy."""
    return registry.resolve(name_or_id)


# --- event <-> dict --------------------------------------------------------

def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise MalformedRecord(f"missing field {path}.{key}")
    return obj[key]


def _require_str(obj: dict, key: str, path: str) -> str:
    value = _require(obj, key, path)
    if not isinstance(value, str) or not value:
        raise MalformedRecord(f"field {path}.{key} must be a non-empty string")
    return value


def _opt_str(obj: dict, key: str) -> str:
    value = obj.get(key, "")
    if not isinstance(value, str):
        raise MalformedRecord(f"field payload.{key} must be a string")
    return value


def _require_int(obj: dict, key: str, path: str) -> int:
    value = _require(obj, key, path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise BadNumber(f"field {path}.{key} must be an integer micro-tonne count")
    return value


def _parse_quantity(obj: dict, path: str) -> Quantity:
    if not isinstance(obj, dict):
        raise MalformedRecord(f"{path} must be an object with amount and unit")
    amount = _require(obj, "amount", path)
    unit = _require_str(obj, "unit", path)
    value = parse_decimal(amount)
    if value < 0:
        raise BadNumber(f"{path}.amount must be >= 0, got {value}")
    return normalize_quantity(value, unit)


def _parse_metadata(obj: dict) -> tuple[tuple[str, str], ...]:
    meta = obj.get("metadata", {})
    if not isinstance(meta, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
    ):
        raise MalformedRecord("payload.metadata must map strings to strings")
    return tuple(sorted(meta.items()))


def event_from_dict(obj: dict) -> LedgerEvent:
    """Build a structurally valid LedgerEvent from a parsed JSON object."""
    if not isinstance(obj, dict):
        raise MalformedRecord("event must be a JSON object")
    event_id = _require_str(obj, "event_id", "")
    kind = _require_str(obj, "kind", "")
    if kind not in EVENT_KINDS:
        raise UnknownEventKind(f"unknown event kind {kind!r}")
    timestamp = parse_timestamp(_require(obj, "timestamp", ""))
    payload = _require(obj, "payload", "")
    if not isinstance(payload, dict):
        raise MalformedRecord("field payload must be an object")

    if kind == "DeclareOrg":
        body = DeclareOrg(
            org_id=_require_str(payload, "org_id", "payload"),
            name=_require_str(payload, "name", "payload"),
            location=_opt_str(payload, "location"),
            sector=_opt_str(payload, "sector"),
            metadata=_parse_metadata(payload),
        )
    elif kind == "DeclareProcess":
        inputs = payload.get("inputs", [])
        outputs = _require(payload, "outputs", "payload")
        if not isinstance(inputs, list) or not isinstance(outputs, list):
            raise MalformedRecord("payload.inputs and payload.outputs must be arrays")
        parsed_inputs = tuple(
            ProcessInput(
                node_id=_require_str(i, "node_id", f"payload.inputs[{n}]"),
                quantity=_parse_quantity(i, f"payload.inputs[{n}]"),
            )
            for n, i in enumerate(inputs)
        )
        parsed_outputs = tuple(
            ProcessOutput(
                node_id=_require_str(o, "node_id", f"payload.outputs[{n}]"),
                product_name=_require_str(o, "product_name", f"payload.outputs[{n}]"),
                quantity=_parse_quantity(o, f"payload.outputs[{n}]"),
            )
            for n, o in enumerate(outputs)
        )
        weights = payload.get("allocation_weights")
        parsed_weights: Optional[tuple[tuple[str, Decimal], ...]] = None
        if weights is not None:
            if not isinstance(weights, dict):
                raise MalformedRecord("payload.allocation_weights must be an object")
            parsed_weights = tuple(
                sorted((k, parse_decimal(v)) for k, v in weights.items())
            )
        body = DeclareProcess(
            process_id=_require_str(payload, "process_id", "payload"),
            owner=_require_str(payload, "owner", "payload"),
            name=_require_str(payload, "name", "payload"),
            direct_emissions=EmissionQty(_require_int(payload, "direct_emissions_ut", "payload")),
            inputs=parsed_inputs,
            outputs=parsed_outputs,
            allocation_weights=parsed_weights,
        )
    elif kind == "DeclareTransfer":
        transfer_id = _require_str(payload, "transfer_id", "payload")
        node_id = payload.get("node_id")
        if node_id is None:
            node_id = f"{transfer_id}/node"
        elif not isinstance(node_id, str) or not node_id:
            raise MalformedRecord("payload.node_id must be a non-empty string")
        body = DeclareTransfer(
            transfer_id=transfer_id,
            source_node=_require_str(payload, "source_node", "payload"),
            buyer=_require_str(payload, "buyer", "payload"),
            node_id=node_id,
            quantity=_parse_quantity(payload, "payload"),
        )
    elif kind == "EmissionMeasurement":
        body = EmissionMeasurement(
            process_id=_require_str(payload, "process_id", "payload"),
            direct_emissions=EmissionQty(_require_int(payload, "direct_emissions_ut", "payload")),
        )
    else:  # OffsetAdjustment
        delta = _require(payload, "delta_ut", "payload")
        if isinstance(delta, bool) or not isinstance(delta, int):
            raise BadNumber("field payload.delta_ut must be an integer micro-tonne count")
        body = OffsetAdjustment(
            org_id=_require_str(payload, "org_id", "payload"),
            delta=SignedEmissionDelta(delta),
        )
    return LedgerEvent(event_id=event_id, kind=kind, timestamp=timestamp, payload=body)


def _quantity_dict(q: Quantity) -> dict:
    return {"amount": format_micro(q.micro), "unit": q.unit}


def event_to_dict(event: LedgerEvent) -> dict:
    """Canonical dict form of an event (inverse of event_from_dict)."""
    p = event.payload
    if isinstance(p, DeclareOrg):
        payload = {
            "org_id": p.org_id,
            "name": p.name,
            "location": p.location,
            "sector": p.sector,
            "metadata": dict(p.metadata),
        }
    elif isinstance(p, DeclareProcess):
        payload = {
            "process_id": p.process_id,
            "owner": p.owner,
            "name": p.name,
            "direct_emissions_ut": p.direct_emissions.micro_tonnes,
            "inputs": [
                {"node_id": i.node_id, **_quantity_dict(i.quantity)} for i in p.inputs
            ],
            "outputs": [
                {"node_id": o.node_id, "product_name": o.product_name, **_quantity_dict(o.quantity)}
                for o in p.outputs
            ],
            "allocation_weights": (
                None
                if p.allocation_weights is None
                else {k: format_weight(w) for k, w in p.allocation_weights}
            ),
        }
    elif isinstance(p, DeclareTransfer):
        payload = {
            "transfer_id": p.transfer_id,
            "source_node": p.source_node,
            "buyer": p.buyer,
            "node_id": p.node_id,
            **_quantity_dict(p.quantity),
        }
    elif isinstance(p, EmissionMeasurement):
        payload = {"process_id": p.process_id, "direct_emissions_ut": p.direct_emissions.micro_tonnes}
    else:
        payload = {"org_id": p.org_id, "delta_ut": p.delta.micro_tonnes}
    return {
        "event_id": event.event_id,
        "kind": event.kind,
        "timestamp": format_timestamp(event.timestamp),
        "payload": payload,
    }


def format_weight(w: Decimal) -> str:
    text = format(w.normalize(), "f")
    return text


def canonical_line(event: LedgerEvent) -> str:
    """The one canonical serialization: sorted keys, no whitespace."""
    return json.dumps(event_to_dict(event), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def parse_ledger_line(record: RawEventRecord) -> LedgerEvent:
    """Parse one ledger line; raises MalformedRecord/UnknownEventKind/
    BadTimestamp/BadNumber (all carrying the field path in the message)."""
    text = record.text.strip()
    if not text:
        raise MalformedRecord("empty line")
    try:
        obj = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc.msg}") from exc
    return event_from_dict(obj)


# --- csv transfers ---------------------------------------------------------

def parse_csv_transfers(text: str, source: str = "<csv>") -> list[tuple[int, "LedgerEvent | Exception"]]:
    """Parse a transfer-only CSV; one (line_no, event-or-error) per row."""
    reader = _csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or rows[0] != CSV_HEADER:
        raise MalformedRecord(f"CSV header must be {','.join(CSV_HEADER)}")
    out: list[tuple[int, LedgerEvent | Exception]] = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            out.append((line_no, MalformedRecord("empty line")))
            continue
        try:
            if len(row) != len(CSV_HEADER):
                raise MalformedRecord(f"expected {len(CSV_HEADER)} columns, got {len(row)}")
            transfer_id, source_node, buyer, qty, unit, ts = (cell.strip() for cell in row)
            if not transfer_id or not source_node or not buyer:
                raise MalformedRecord("transfer_id, source_node and buyer are required")
            quantity = normalize_quantity(qty, unit)
            event = LedgerEvent(
                event_id=transfer_id,
                kind="DeclareTransfer",
                timestamp=parse_timestamp(ts),
                payload=DeclareTransfer(
                    transfer_id=transfer_id,
                    source_node=source_node,
                    buyer=buyer,
                    node_id=f"{transfer_id}/node",
                    quantity=quantity,
                ),
            )
            out.append((line_no, event))
        except (MalformedRecord, BadTimestamp, BadNumber, ValueError) as exc:
            out.append((line_no, exc))
    return out


# --- ingest ----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RejectedLine:
    line_no: int
    event_id: Optional[str]
    reason: str


@dataclass(frozen=True, slots=True)
class IngestReport:
    accepted: int
    rejected: tuple[RejectedLine, ...]

    @property
    def ok(self) -> bool:
        return not self.rejected


def _resolve_event(event: LedgerEvent, registry: EntityRegistry) -> LedgerEvent:
    """Rewrite org references (owner/buyer/org_id) to canonical ids."""
    p = event.payload
    if isinstance(p, DeclareProcess):
        owner = registry.resolve(p.owner)
        if owner != p.owner:
            p = DeclareProcess(p.process_id, owner, p.name, p.direct_emissions, p.inputs, p.outputs, p.allocation_weights)
    elif isinstance(p, DeclareTransfer):
        buyer = registry.resolve(p.buyer)
        if buyer != p.buyer:
            p = DeclareTransfer(p.transfer_id, p.source_node, buyer, p.node_id, p.quantity)
    elif isinstance(p, OffsetAdjustment):
        org = registry.resolve(p.org_id)
        if org != p.org_id:
            p = OffsetAdjustment(org, p.delta)
    else:
        return event
    if p is event.payload:
        return event
    return LedgerEvent(event.event_id, event.kind, event.timestamp, p)


def ingest_parsed(
    parsed: list[tuple[int, "LedgerEvent | Exception"]],
    registry: Optional[EntityRegistry] = None,
    base: Optional[GraphState] = None,
) -> tuple[GraphState, IngestReport]:
    """Resolve, sort, validate and apply already-parsed events."""
    registry = registry.copy() if registry is not None else EntityRegistry()
    rejected: list[RejectedLine] = []
    events: list[tuple[LedgerEvent, int]] = []
    for line_no, item in parsed:
        if isinstance(item, Exception):
            rejected.append(RejectedLine(line_no, None, f"{type(item).__name__}: {item}"))
        else:
            events.append((item, line_no))

    # orgs register their own names; resolution is two-pass so file order
    # does not matter
    if base is not None:
        for org in base.orgs.values():
            registry.register(org.org_id, org.org_id)
            registry.register(org.name, org.org_id)
    for event, _ in events:
        if isinstance(event.payload, DeclareOrg):
            registry.register(event.payload.org_id, event.payload.org_id)
            registry.register(event.payload.name, event.payload.org_id)

    resolved: list[tuple[LedgerEvent, int]] = []
    for event, line_no in events:
        try:
            resolved.append((_resolve_event(event, registry), line_no))
        except (UnresolvedEntity, AmbiguousAlias) as exc:
            rejected.append(RejectedLine(line_no, event.event_id, f"{type(exc).__name__}: {exc.args[0]}"))

    resolved.sort(key=lambda pair: (pair[0].timestamp, pair[0].event_id))
    lines_by_identity = {id(event): line_no for event, line_no in resolved}
    state, applied_rejects = apply_events(
        base if base is not None else GraphState(),
        [event for event, _ in resolved],
        on_reject="skip",
    )
    for event, report in applied_rejects:
        line_no = lines_by_identity.get(id(event), 0)
        reason = "; ".join(f"{v.code}: {v.message}" for v in report.violations)
        rejected.append(RejectedLine(line_no, event.event_id, reason))

    rejected.sort(key=lambda r: (r.line_no, r.event_id or ""))
    accepted = len(resolved) - len(applied_rejects)
    return state, IngestReport(accepted=accepted, rejected=tuple(rejected))


def ingest(
    records: Iterable[RawEventRecord],
    registry: Optional[EntityRegistry] = None,
    base: Optional[GraphState] = None,
) -> tuple[GraphState, IngestReport]:
    """Parse and apply a stream of raw ledger records.

    Rejected records never alter the state; the report carries one entry
    per rejected line with the reason.
    """
    parsed: list[tuple[int, LedgerEvent | Exception]] = []
    for record in records:
        try:
            parsed.append((record.line_no, parse_ledger_line(record)))
        except (MalformedRecord, BadTimestamp, BadNumber, ValueError) as exc:
            parsed.append((record.line_no, exc))
    return ingest_parsed(parsed, registry, base)


def records_from_text(text: str, source: str = "<memory>") -> list[RawEventRecord]:
    return [
        RawEventRecord(text=line, source=source, line_no=i)
        for i, line in enumerate(text.splitlines(), start=1)
    ]


def ingest_path(
    path: str | Path,
    registry: Optional[EntityRegistry] = None,
    base: Optional[GraphState] = None,
) -> tuple[GraphState, IngestReport]:
    """Ingest a .jsonl ledger or a transfer-only .csv file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".csv":
        return ingest_parsed(parse_csv_transfers(text, str(path)), registry, base)
    return ingest(records_from_text(text, str(path)), registry, base)


def export_events(state: GraphState) -> str:
    """Ledger round-trip export: canonical lines in (timestamp, id) order."""
    events = sorted(state.events, key=lambda e: e.sort_key())
    return "".join(canonical_line(e) + "\n" for e in events)
