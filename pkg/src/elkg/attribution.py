"""Liability propagation: full, incremental, and per-source breakdowns.

Liabilities flow through the graph in topological order. Each process
collects its direct emissions plus the consumed share of every input
node's liability into a pool, the pool is split across its outputs
(largest-remainder over allocation weights, defaulting to output
quantities), and each outgoing transfer draws a round-half-even
proportional share of the source node's remaining liability. What is
never consumed or transferred stays with the holding organization as its
net balance, so every micro-tonne injected is accounted for exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from heapq import heapify, heappop, heappush
from typing import Iterable, Mapping, Optional

from .allocation import largest_remainder
from .ledger import causality_check
from .model import CONSUME, GraphState, ProcessNode
from .units import MICRO, EmissionQty

__all__ = [
    "AttributionResult",
    "ContributionBreakdown",
    "CycleDetected",
    "StaleBase",
    "UnknownNode",
    "breakdown",
    "compute_full",
    "compute_incremental",
    "topological_order",
    "unit_liability",
]


class CycleDetected(Exception):
    """Defensive: propagation could not cover every node."""


class StaleBase(Exception):
    """Incremental base was not computed on an ancestor of the state."""


class UnknownNode(KeyError):
    """Referenced node id is not part of the result/state."""


@dataclass(frozen=True, slots=True)
class ComputeStats:
    mode: str = "full"
    nodes_visited: int = 0


@dataclass(frozen=True)
class AttributionResult:
    """Per-node liabilities and per-org balances at one graph version.

    All values are integer micro-tonnes. product_total is the liability
    assigned to a node at creation; product_residual is the part not yet
    consumed or transferred onward (what sits on the holder's balance).
    stats is diagnostic only and excluded from equality.
    """

    basis_version: int
    product_total: dict[str, int]
    product_residual: dict[str, int]
    process_pool: dict[str, int]
    org_gross: dict[str, int]
    org_net: dict[str, int]
    org_offsets: dict[str, int]
    stats: ComputeStats = field(default_factory=ComputeStats, compare=False)


@dataclass(frozen=True, slots=True)
class ContributionBreakdown:
    node_id: str
    contributions: tuple[tuple[str, EmissionQty], ...]

    def total(self) -> int:
        return sum(int(q) for _, q in self.contributions)


def topological_order(state: GraphState) -> list[str]:
    """Deterministic topological order over process and product nodes.

    Ready nodes are released in (timestamp, id) order so runs are stable;
    every node appears after all of its predecessors.
    """
    processes = state.processes
    products = state.products
    transfers = state.transfers
    indeg: dict[str, int] = {}
    heap: list[tuple[int, str]] = []
    for pid, proc in processes.items():
        n = len(proc.inputs)
        indeg[pid] = n
        if n == 0:
            heap.append((proc.timestamp, pid))
    heapify(heap)
    order: list[str] = []
    while heap:
        _, nid = heappop(heap)
        order.append(nid)
        proc = processes.get(nid)
        if proc is not None:
            for outp in proc.outputs:
                node = products[outp.node_id]
                heappush(heap, (node.timestamp, outp.node_id))
        else:
            for flow in state.outflows.get(nid, ()):
                if flow.kind == CONSUME:
                    indeg[flow.target_id] -= 1
                    if indeg[flow.target_id] == 0:
                        heappush(heap, (processes[flow.target_id].timestamp, flow.target_id))
                else:
                    child = transfers[flow.target_id].node_id
                    heappush(heap, (products[child].timestamp, child))
    if len(order) != len(processes) + len(products):
        raise CycleDetected(
            f"propagation covered {len(order)} of {len(processes) + len(products)} nodes"
        )
    return order


def _draw_sequence(total: int, initial_micro: int, flows) -> tuple[list[int], int]:
    """Replay a node's outflow draws; returns (moved per flow, residual).

    Full draws take the whole remainder; everything else rounds half to
    even. moved + residual always equals the incoming total exactly.
    """
    rem_l = total
    rem_q = initial_micro
    moved: list[int] = []
    for flow in flows:
        q = flow.micro
        if q == rem_q:
            m = rem_l
        elif q == 0 or rem_l == 0:
            m = 0
        else:
            mq, r = divmod(rem_l * q, rem_q)
            double = 2 * r
            if double > rem_q or (double == rem_q and mq % 2):
                mq += 1
            m = mq
        moved.append(m)
        rem_l -= m
        rem_q -= q
    return moved, rem_l


def _process_weights(proc: ProcessNode) -> list[tuple[str, object]]:
    """Allocation weights in output-declaration order (declared or derived)."""
    if proc.allocation_weights is not None:
        declared = dict(proc.allocation_weights)
        return [(o.node_id, declared[o.node_id]) for o in proc.outputs]
    return [(o.node_id, o.quantity.micro) for o in proc.outputs]


def _allocate(pool: int, proc: ProcessNode) -> list[tuple[str, int]]:
    outputs = proc.outputs
    if len(outputs) == 1:
        return [(outputs[0].node_id, pool)]
    return largest_remainder(pool, _process_weights(proc))


def compute_full(state: GraphState, check: bool = True) -> AttributionResult:
    """Propagate every liability from scratch over one snapshot."""
    if check:
        violations = causality_check(state)
        if violations:
            raise CycleDetected(f"graph fails causality: {violations[0].message}")
    order = topological_order(state)
    processes = state.processes
    products = state.products
    transfers = state.transfers
    outflows = state.outflows

    totals: dict[str, int] = {}
    residuals: dict[str, int] = {}
    pools: dict[str, int] = {}
    pending: dict[str, int] = {}

    for nid in order:
        proc = processes.get(nid)
        if proc is not None:
            pool = proc.direct_emissions.micro_tonnes + pending.pop(nid, 0)
            pools[nid] = pool
            for out_id, share in _allocate(pool, proc):
                totals[out_id] = share
        else:
            node = products[nid]
            total = totals[nid]
            flows = outflows.get(nid, ())
            if flows:
                moved, residual = _draw_sequence(total, node.quantity.micro, flows)
                for flow, m in zip(flows, moved):
                    if flow.kind == CONSUME:
                        pending[flow.target_id] = pending.get(flow.target_id, 0) + m
                    else:
                        totals[transfers[flow.target_id].node_id] = m
                residuals[nid] = residual
            else:
                residuals[nid] = total

    org_gross = {org: 0 for org in state.orgs}
    org_net = {org: 0 for org in state.orgs}
    for nid, node in products.items():
        if node.produced_by is not None:
            org_gross[node.owner] += totals[nid]
        org_net[node.owner] += residuals[nid]
    offsets = dict(state.offsets)
    for org, delta in offsets.items():
        org_net[org] += delta

    return AttributionResult(
        basis_version=state.version,
        product_total=totals,
        product_residual=residuals,
        process_pool=pools,
        org_gross=org_gross,
        org_net=org_net,
        org_offsets=offsets,
        stats=ComputeStats("full", len(order)),
    )


def unit_liability(state: GraphState, result: AttributionResult, node_id: str) -> Optional[int]:
    """Liability per canonical unit (µt/unit), half-even; None for zero quantity."""
    if node_id not in result.product_total:
        raise UnknownNode(node_id)
    micro = state.products[node_id].quantity.micro
    if micro == 0:
        return None
    q, r = divmod(result.product_total[node_id] * MICRO, micro)
    double = 2 * r
    if double > micro or (double == micro and q % 2):
        q += 1
    return q


# --- incremental ----------------------------------------------------------

def _successors(state: GraphState, nid: str) -> Iterable[str]:
    proc = state.processes.get(nid)
    if proc is not None:
        for outp in proc.outputs:
            yield outp.node_id
        return
    for flow in state.outflows.get(nid, ()):
        if flow.kind == CONSUME:
            yield flow.target_id
        else:
            yield state.transfers[flow.target_id].node_id


def _predecessors(state: GraphState, nid: str) -> Iterable[str]:
    proc = state.processes.get(nid)
    if proc is not None:
        for inp in proc.inputs:
            yield inp.node_id
        return
    node = state.products[nid]
    if node.produced_by is not None:
        yield node.produced_by
    else:
        yield state.transfers[node.received_via].source_node


def _dirty_closure(state: GraphState, seeds: Iterable[str]) -> set[str]:
    dirty: set[str] = set()
    frontier = list(seeds)
    while frontier:
        nid = frontier.pop()
        if nid in dirty:
            continue
        dirty.add(nid)
        frontier.extend(_successors(state, nid))
    return dirty


def _subgraph_topo(state: GraphState, nodes: set[str]) -> list[str]:
    """Topological order restricted to `nodes`, (timestamp, id)-deterministic."""

    def node_ts(nid: str) -> int:
        proc = state.processes.get(nid)
        return proc.timestamp if proc is not None else state.products[nid].timestamp

    indeg: dict[str, int] = {}
    for nid in nodes:
        indeg[nid] = sum(1 for p in _predecessors(state, nid) if p in nodes)
    heap = [(node_ts(nid), nid) for nid, d in indeg.items() if d == 0]
    heapify(heap)
    order: list[str] = []
    while heap:
        _, nid = heappop(heap)
        order.append(nid)
        for succ in _successors(state, nid):
            if succ in nodes:
                indeg[succ] -= 1
                if indeg[succ] == 0:
                    heappush(heap, (node_ts(succ), succ))
    if len(order) != len(nodes):
        raise CycleDetected("dirty subgraph is cyclic")
    return order


def _seeds_for_events(state: GraphState, changed: Iterable[str]) -> tuple[set[str], set[str]]:
    """Resolve changed event ids to (seed node ids, orgs with offset changes)."""
    wanted = set(changed)
    unknown = wanted - set(state.event_ids)
    if unknown:
        raise UnknownNode(f"changed event ids not in ledger: {sorted(unknown)}")
    seeds: set[str] = set()
    offset_orgs: set[str] = set()
    for event in state.events:
        if event.event_id not in wanted:
            continue
        p = event.payload
        if event.kind in ("DeclareProcess", "EmissionMeasurement"):
            seeds.add(p.process_id)
        elif event.kind == "DeclareTransfer":
            seeds.add(p.source_node)
        elif event.kind == "OffsetAdjustment":
            offset_orgs.add(p.org_id)
        # DeclareOrg: new orgs are folded into the result at the end
    return seeds, offset_orgs


def compute_incremental(
    state: GraphState,
    base: AttributionResult,
    changed: Iterable[str],
) -> AttributionResult:
    """Recompute only what is downstream of the changed events.

    The output is bit-identical to compute_full(state); only dirty nodes
    (and the organizations holding them) are revisited. Raises StaleBase
    when the base was computed on a newer version than the state.
    """
    if base.basis_version > state.version:
        raise StaleBase(
            f"base version {base.basis_version} is newer than state version {state.version}"
        )
    seeds, offset_orgs = _seeds_for_events(state, changed)
    return _recompute_dirty(state, base, seeds, {}, offset_orgs)


def _recompute_dirty(
    state: GraphState,
    base: AttributionResult,
    seeds: set[str],
    removed: Mapping[str, str],
    offset_orgs: Iterable[str] = (),
) -> AttributionResult:
    """Shared dirty-set recomputation for revisions and scenario overlays.

    seeds: node ids (in the new state) whose records or inputs changed.
    removed: base product node ids absent from the new state -> owner org.
    """
    dirty = _dirty_closure(state, seeds)
    order = _subgraph_topo(state, dirty)

    totals = dict(base.product_total)
    residuals = dict(base.product_residual)
    pools = dict(base.process_pool)
    org_gross = dict(base.org_gross)
    org_net = dict(base.org_net)

    # removed nodes are transfer-created (removal never cascades into
    # produced nodes), so only residual custody needs unwinding
    for nid, owner in removed.items():
        totals.pop(nid, None)
        res = residuals.pop(nid, None)
        if res is not None:
            org_net[owner] = org_net.get(owner, 0) - res

    processes = state.processes
    products = state.products
    transfers = state.transfers
    outflows = state.outflows

    pending_sum: dict[str, int] = {}
    pending_from: dict[str, set[str]] = {}
    replayed: dict[str, list[int]] = {}

    def clean_draws(node_id: str) -> list[int]:
        got = replayed.get(node_id)
        if got is None:
            node = products[node_id]
            got, _ = _draw_sequence(totals[node_id], node.quantity.micro, outflows.get(node_id, ()))
            replayed[node_id] = got
        return got

    for nid in order:
        proc = processes.get(nid)
        if proc is not None:
            pool = proc.direct_emissions.micro_tonnes + pending_sum.pop(nid, 0)
            have = pending_from.pop(nid, ())
            for inp in proc.inputs:
                if inp.node_id in have:
                    continue
                # clean input: replay its draws to find this process's share
                flows = outflows.get(inp.node_id, ())
                for flow, m in zip(flows, clean_draws(inp.node_id)):
                    if flow.kind == CONSUME and flow.target_id == nid:
                        pool += m
            pools[nid] = pool
            for out_id, share in _allocate(pool, proc):
                old = totals.get(out_id, 0)
                totals[out_id] = share
                owner = products[out_id].owner
                org_gross[owner] = org_gross.get(owner, 0) + share - old
        else:
            node = products[nid]
            flows = outflows.get(nid, ())
            moved, residual = _draw_sequence(totals[nid], node.quantity.micro, flows)
            for flow, m in zip(flows, moved):
                if flow.kind == CONSUME:
                    pending_sum[flow.target_id] = pending_sum.get(flow.target_id, 0) + m
                    pending_from.setdefault(flow.target_id, set()).add(nid)
                else:
                    totals[transfers[flow.target_id].node_id] = m
            old_res = residuals.get(nid, 0)
            residuals[nid] = residual
            org_net[node.owner] = org_net.get(node.owner, 0) + residual - old_res

    offsets = dict(state.offsets)
    for org in state.orgs:
        if org not in org_gross:
            org_gross[org] = 0
        if org not in org_net:
            org_net[org] = offsets.get(org, 0)
    for org in offset_orgs:
        org_net[org] += offsets.get(org, 0) - base.org_offsets.get(org, 0)

    return AttributionResult(
        basis_version=state.version,
        product_total=totals,
        product_residual=residuals,
        process_pool=pools,
        org_gross=org_gross,
        org_net=org_net,
        org_offsets=offsets,
        stats=ComputeStats("incremental", len(order)),
    )


# --- per-source contribution vectors --------------------------------------

def _ancestor_closure(state: GraphState, node_id: str) -> set[str]:
    closure: set[str] = set()
    frontier = [node_id]
    while frontier:
        nid = frontier.pop()
        if nid in closure:
            continue
        closure.add(nid)
        frontier.extend(_predecessors(state, nid))
    return closure


def breakdown(state: GraphState, result: AttributionResult, node_id: str) -> ContributionBreakdown:
    """Attribute one product node's liability to the source processes.

    Per-process tags ride through the same draw and allocation arithmetic
    as the liabilities themselves, re-conserved with largest-remainder
    (ties by process id) at each step, so the contributions sum exactly to
    the node's total liability. Only the node's ancestor subgraph is
    walked.
    """
    if node_id not in result.product_total:
        raise UnknownNode(node_id)
    closure = _ancestor_closure(state, node_id)
    order = _subgraph_topo(state, closure)

    processes = state.processes
    products = state.products
    transfers = state.transfers
    outflows = state.outflows

    vectors: dict[str, dict[str, int]] = {}
    pending: dict[str, dict[str, int]] = {}

    def split(amount: int, vec: dict[str, int]) -> dict[str, int]:
        if amount == 0:
            return {}
        weights = [(pid, v) for pid, v in sorted(vec.items()) if v > 0]
        return {pid: share for pid, share in largest_remainder(amount, weights) if share > 0}

    for nid in order:
        proc = processes.get(nid)
        if proc is not None:
            vec: dict[str, int] = {}
            if proc.direct_emissions.micro_tonnes:
                vec[nid] = proc.direct_emissions.micro_tonnes
            for pid, amount in pending.pop(nid, {}).items():
                vec[pid] = vec.get(pid, 0) + amount
            for out_id, share in _allocate(result.process_pool[nid], proc):
                if out_id in closure:
                    vectors[out_id] = split(share, vec)
        else:
            node = products[nid]
            flows = outflows.get(nid, ())
            if not flows:
                continue
            moved, _ = _draw_sequence(result.product_total[nid], node.quantity.micro, flows)
            remaining = dict(vectors.get(nid, {}))
            for flow, m in zip(flows, moved):
                piece = split(m, remaining)
                for pid, amount in piece.items():
                    remaining[pid] -= amount
                if flow.kind == CONSUME:
                    if flow.target_id in closure:
                        slot = pending.setdefault(flow.target_id, {})
                        for pid, amount in piece.items():
                            slot[pid] = slot.get(pid, 0) + amount
                else:
                    child = transfers[flow.target_id].node_id
                    if child in closure:
                        vectors[child] = piece

    vec = vectors.get(node_id, {})
    ranked = sorted(vec.items(), key=lambda kv: (-kv[1], kv[0]))
    return ContributionBreakdown(
        node_id=node_id,
        contributions=tuple((pid, EmissionQty(v)) for pid, v in ranked if v > 0),
    )
