"""Exact-conserving division of emission pools.

Two primitives, both closed over integers so a ledger total never gains or
loses a micro-tonne:

- allocate_pool: largest-remainder split of a pool across weighted outputs.
- transfer_share: round-half-even proportional draw with the residue kept
  on the source, full draws taking the entire remainder.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from math import gcd
from typing import Sequence

from .units import EmissionQty, Quantity


class EmptyWeights(ValueError):
    """allocate_pool called with no weights."""


class Overdraw(ValueError):
    """transfer quantity exceeds the source's remaining quantity."""


def div_half_even(numerator: int, denominator: int) -> int:
    """Integer division rounding half to even (banker's rounding)."""
    if denominator <= 0:
        raise ZeroDivisionError("denominator must be positive")
    q, r = divmod(numerator, denominator)
    double = 2 * r
    if double > denominator or (double == denominator and q % 2):
        q += 1
    return q


def _to_int_weights(weights: Sequence[tuple[str, "Fraction | Decimal | int"]]) -> list[tuple[str, int]]:
    """Scale arbitrary positive rational weights to integers exactly."""
    fracs = [(key, w if isinstance(w, int) else Fraction(w)) for key, w in weights]
    scale = 1
    for _, w in fracs:
        if not isinstance(w, int):
            d = w.denominator
            scale = scale // gcd(scale, d) * d
    return [(key, w * scale if isinstance(w, int) else int(w * scale)) for key, w in fracs]


def largest_remainder(total: int, weights: Sequence[tuple[str, "Fraction | Decimal | int"]]) -> list[tuple[str, int]]:
    """Split `total` into integer shares proportional to positive weights.

    Shares sum to `total` exactly and each differs from the exact real
    proportion by less than 1. The leftover units go to the largest
    fractional parts, ties broken by id (lexicographic, ascending).
    """
    if not weights:
        raise EmptyWeights("at least one weight required")
    if any(w <= 0 for _, w in weights):
        raise ValueError("weights must be positive")
    iweights = _to_int_weights(weights)
    wsum = sum(w for _, w in iweights)
    shares: list[tuple[str, int]] = []
    remainders: list[tuple[int, str, int]] = []  # (numerator of frac part, key, index)
    assigned = 0
    for idx, (key, w) in enumerate(iweights):
        num = total * w
        base, rem = divmod(num, wsum)
        shares.append((key, base))
        remainders.append((rem, key, idx))
        assigned += base
    leftover = total - assigned
    if leftover:
        remainders.sort(key=lambda t: (-t[0], t[1]))
        bump = {idx for _, _, idx in remainders[:leftover]}
        shares = [(key, v + 1) if i in bump else (key, v) for i, (key, v) in enumerate(shares)]
    return shares


def allocate_pool(
    pool: EmissionQty,
    weights: Sequence[tuple[str, Decimal | int | Fraction]],
) -> list[tuple[str, EmissionQty]]:
    """Allocate a process pool across outputs, conserving it exactly."""
    if not weights:
        raise EmptyWeights("allocation requires at least one output weight")
    fracs = [(key, Fraction(w)) for key, w in weights]
    shares = largest_remainder(pool.micro_tonnes, fracs)
    return [(key, EmissionQty(v)) for key, v in shares]


def transfer_share(
    source_remaining_liability: EmissionQty,
    source_remaining_qty: Quantity,
    transfer_qty: Quantity,
) -> tuple[EmissionQty, EmissionQty]:
    """Split a node's remaining liability for one outgoing draw.

    Returns (moved, residual) with moved + residual equal to the input
    liability exactly. A full draw takes the entire remainder so no
    micro-tonne is ever stranded on an empty node.
    """
    if transfer_qty.unit != source_remaining_qty.unit:
        raise ValueError(f"unit mismatch: {transfer_qty.unit} vs {source_remaining_qty.unit}")
    if transfer_qty.micro > source_remaining_qty.micro:
        raise Overdraw(
            f"draw of {transfer_qty} exceeds remaining {source_remaining_qty}"
        )
    liability = source_remaining_liability.micro_tonnes
    if transfer_qty.micro == source_remaining_qty.micro:
        return EmissionQty(liability), EmissionQty(0)
    if transfer_qty.micro == 0:
        return EmissionQty(0), EmissionQty(liability)
    moved = div_half_even(liability * transfer_qty.micro, source_remaining_qty.micro)
    return EmissionQty(moved), EmissionQty(liability - moved)
