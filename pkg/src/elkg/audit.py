"""Hash-chained append-only audit log plus integrity verifications.

Each accepted ledger event is appended as one JSONL entry
{seq, event_id, event, digest_hex} where digest = SHA-256 over the
previous digest bytes concatenated with the event's canonical line bytes.
The genesis predecessor is SHA-256 of the empty string. Any single-bit
modification, deletion, or reordering below the tail breaks the chain at a
detectable index; truncating the tail is detectable only against an
external head reference, which is inherent to hash chains.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

from .attribution import AttributionResult
from .ingestion import IoFailure, canonical_line, event_from_dict
from .model import GraphState, LedgerEvent

GENESIS_DIGEST = hashlib.sha256(b"").hexdigest()


@dataclass(frozen=True, slots=True)
class AuditEntry:
    seq: int
    event_id: str
    event: LedgerEvent
    digest_hex: str


@dataclass(frozen=True, slots=True)
class FirstBreak:
    """Verification failure at the given sequence index."""

    sequence: int
    reason: str = ""

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True, slots=True)
class ChainOk:
    entries: int

    def __bool__(self) -> bool:
        return True


def _digest(prev_hex: str, event: LedgerEvent) -> str:
    payload = bytes.fromhex(prev_hex) + canonical_line(event).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class AuditLog:
    """Append-only audit log, file-backed when a path is given."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[AuditEntry] = []
        self.last_digest = GENESIS_DIGEST
        self._fh = None
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read audit log {self.path}: {exc}") from exc
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            event = event_from_dict(obj["event"])
            entry = AuditEntry(obj["seq"], obj["event_id"], event, obj["digest_hex"])
            self.entries.append(entry)
            self.last_digest = entry.digest_hex

    def _entry_line(self, entry: AuditEntry) -> str:
        from .ingestion import event_to_dict

        return json.dumps(
            {
                "seq": entry.seq,
                "event_id": entry.event_id,
                "event": event_to_dict(entry.event),
                "digest_hex": entry.digest_hex,
            },
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )

    def append(self, event: LedgerEvent) -> AuditEntry:
        """Chain one accepted event; flushed to disk before returning."""
        entry = AuditEntry(len(self.entries), event.event_id, event, _digest(self.last_digest, event))
        if self.path is not None:
            try:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(self._entry_line(entry) + "\n")
                    fh.flush()
            except OSError as exc:
                raise IoFailure(f"cannot append to audit log {self.path}: {exc}") from exc
        self.entries.append(entry)
        self.last_digest = entry.digest_hex
        return entry

    def __len__(self) -> int:
        return len(self.entries)


def append_audit(log: AuditLog, event: LedgerEvent) -> AuditEntry:
    return log.append(event)


def verify_chain(log: Union[AuditLog, str, Path]) -> Union[ChainOk, FirstBreak]:
    """Recompute the whole chain; Ok iff every stored digest reproduces.

    Accepts an AuditLog or a file path. The first failing sequence index is
    reported; a parse failure at a line counts as a break at that index.
    """
    if isinstance(log, (str, Path)):
        path = Path(log)
        try:
            lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
        except OSError as exc:
            raise IoFailure(f"cannot read audit log {path}: {exc}") from exc
        prev = GENESIS_DIGEST
        for i, line in enumerate(lines):
            try:
                obj = json.loads(line)
                event = event_from_dict(obj["event"])
                seq = obj["seq"]
                event_id = obj["event_id"]
                digest_hex = obj["digest_hex"]
            except Exception:
                return FirstBreak(i, "unparseable entry")
            if seq != i:
                return FirstBreak(i, f"sequence gap: stored seq {seq} at index {i}")
            if event_id != event.event_id:
                return FirstBreak(i, "entry event_id does not match embedded event")
            expected = _digest(prev, event)
            if digest_hex != expected:
                return FirstBreak(i, "digest mismatch")
            prev = digest_hex
        return ChainOk(len(lines))

    prev = GENESIS_DIGEST
    for i, entry in enumerate(log.entries):
        if entry.seq != i:
            return FirstBreak(i, f"sequence gap: stored seq {entry.seq} at index {i}")
        if entry.event_id != entry.event.event_id:
            return FirstBreak(i, "entry event_id does not match embedded event")
        if entry.digest_hex != _digest(prev, entry.event):
            return FirstBreak(i, "digest mismatch")
        prev = entry.digest_hex
    return ChainOk(len(log.entries))


# --- conservation ----------------------------------------------------------

class VersionMismatch(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ConservationReport:
    injected_ut: int
    offsets_ut: int
    net_balance_ut: int
    residue_ut: int

    @property
    def ok(self) -> bool:
        return self.residue_ut == 0


def check_conservation(state: GraphState, result: AttributionResult) -> ConservationReport:
    """Injected direct emissions + signed offsets must equal the sum of
    organization net balances, to the micro-tonne."""
    if result.basis_version != state.version:
        raise VersionMismatch(
            f"result version {result.basis_version} != state version {state.version}"
        )
    injected = sum(p.direct_emissions.micro_tonnes for p in state.processes.values())
    offsets = sum(state.offsets.values())
    net_total = sum(result.org_net.values())
    return ConservationReport(
        injected_ut=injected,
        offsets_ut=offsets,
        net_balance_ut=net_total,
        residue_ut=injected + offsets - net_total,
    )


@dataclass(frozen=True, slots=True)
class Discrepancy:
    org_id: str
    computed_ut: int
    declared_ut: int
    delta_ut: int


def cross_verify(result: AttributionResult, reference: Mapping[str, int]) -> list[Discrepancy]:
    """Compare computed gross_produced against externally declared totals.

    Orgs absent from the reference are skipped; delta = computed - declared.
    """
    out: list[Discrepancy] = []
    for org_id in sorted(reference):
        if org_id not in result.org_gross:
            continue
        computed = result.org_gross[org_id]
        declared = reference[org_id]
        if computed != declared:
            out.append(Discrepancy(org_id, computed, declared, computed - declared))
    return out


def sample_entries(log: AuditLog, k: int, seed: Optional[int] = None) -> list[AuditEntry]:
    """Uniform sample (without replacement) of entries for manual review."""
    if k <= 0:
        return []
    rng = random.Random(seed)
    k = min(k, len(log.entries))
    picks = sorted(rng.sample(range(len(log.entries)), k))
    return [log.entries[i] for i in picks]
