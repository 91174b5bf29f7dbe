"""Built-in demo supply chains for tests, docs, and the explorer UI.

Two ledgers: a minimal two-org steel-to-cars chain (10 t of steel smelted
at 2 tCO2e per tonne, one tonne per car, so each car inherits exactly
2 tCO2e), and the full eight-organization automotive chain with electricity
purchases, a rubber/tire branch, stage processes for transport, and a
dealership-to-consumer hand-off. All quantities divide exactly, which keeps
every propagated number a whole micro-tonne.

Run `python -m elkg.fixtures <minimal|full> > ledger.jsonl` to dump one.
"""

from __future__ import annotations

from decimal import Decimal
from typing import Optional

from .model import (
    DeclareOrg,
    DeclareProcess,
    DeclareTransfer,
    LedgerEvent,
    ProcessInput,
    ProcessOutput,
    parse_timestamp,
)
from .units import EmissionQty, Quantity

TONNE = 1_000_000  # micro-tonnes per tonne CO2e

_BASE_TS = parse_timestamp("2023-01-01T00:00:00Z")


def _ts(hours: int) -> int:
    return _BASE_TS + hours * 3600


def kg(amount: int) -> Quantity:
    return Quantity(amount * 10**6, "kg")


def kwh(amount: int) -> Quantity:
    return Quantity(amount * 10**6, "kWh")


def items(amount: int) -> Quantity:
    return Quantity(amount * 10**6, "item")


def _org(event_id: str, hours: int, org_id: str, name: str, location: str = "", sector: str = "") -> LedgerEvent:
    return LedgerEvent(event_id, "DeclareOrg", _ts(hours), DeclareOrg(org_id, name, location, sector))


def _process(
    event_id: str,
    hours: int,
    process_id: str,
    owner: str,
    name: str,
    direct_ut: int,
    inputs: list[tuple[str, Quantity]],
    outputs: list[tuple[str, str, Quantity]],
    weights: Optional[dict[str, Decimal]] = None,
) -> LedgerEvent:
    return LedgerEvent(
        event_id,
        "DeclareProcess",
        _ts(hours),
        DeclareProcess(
            process_id=process_id,
            owner=owner,
            name=name,
            direct_emissions=EmissionQty(direct_ut),
            inputs=tuple(ProcessInput(n, q) for n, q in inputs),
            outputs=tuple(ProcessOutput(n, pname, q) for n, pname, q in outputs),
            allocation_weights=tuple(sorted(weights.items())) if weights else None,
        ),
    )


def _transfer(event_id: str, hours: int, transfer_id: str, source: str, buyer: str, node_id: str, quantity: Quantity) -> LedgerEvent:
    return LedgerEvent(
        event_id,
        "DeclareTransfer",
        _ts(hours),
        DeclareTransfer(transfer_id, source, buyer, node_id, quantity),
    )


def minimal_events() -> list[LedgerEvent]:
    """Two orgs, one smelter, one assembly line, ten cars at 2 tCO2e each."""
    return [
        _org("EV-001", 0, "ORG-STEELCO", "SteelCo", "Pittsburgh, PA", "steel"),
        _org("EV-002", 0, "ORG-AUTOFAB", "AutoFab", "Detroit, MI", "automotive"),
        _process(
            "EV-003", 1, "PROC-SMELT", "ORG-STEELCO", "Steel smelting and delivery",
            20 * TONNE,
            inputs=[],
            outputs=[("STEEL-SC", "Steel", kg(10_000))],
        ),
        _transfer("EV-004", 2, "XFER-STEEL", "STEEL-SC", "ORG-AUTOFAB", "STEEL-AF", kg(10_000)),
        _process(
            "EV-005", 3, "PROC-ASSEMBLY", "ORG-AUTOFAB", "Car assembly",
            0,
            inputs=[("STEEL-AF", kg(10_000))],
            outputs=[(f"CAR-{i}", "AutoFab 2023 Car", items(1)) for i in range(1, 11)],
        ),
    ]


def full_autofab_events() -> list[LedgerEvent]:
    """The eight-organization automotive chain with grid electricity.

    Steel leaves SteelCo at exactly 2 tCO2e per tonne (smelting plus
    delivery); one car ends up with Consumer Doreen carrying 15 tCO2e.
    """
    ev: list[LedgerEvent] = [
        _org("EV-001", 0, "ORG-AUTOFAB", "AutoFab", "Detroit, MI", "automotive"),
        _org("EV-002", 0, "ORG-STEELCO", "SteelCo", "Pittsburgh, PA", "steel"),
        _org("EV-003", 0, "ORG-IRONMINE", "IronMine Corp", "Minnesota", "mining"),
        _org("EV-004", 0, "ORG-RUBBERINC", "RubberInc", "Akron, OH", "tires"),
        _org("EV-005", 0, "ORG-RUBBERPLANT", "RubberPlantations Ltd", "Thailand", "agriculture"),
        _org("EV-006", 0, "ORG-ENERGY", "EnergyCorp", "", "utilities"),
        _org("EV-007", 0, "ORG-AUTODEALER", "AutoDealer LLC", "", "retail"),
        _org("EV-008", 0, "ORG-DOREEN", "Consumer Doreen", "", "consumer"),
        # EnergyCorp: three chained stage processes ending in grid electricity
        _process(
            "EV-010", 1, "PROC-EC-VOLT", "ORG-ENERGY", "Voltage transformation",
            500 * TONNE, [], [("ELEC-EC-HV", "Electricity", kwh(1_000_000))],
        ),
        _process(
            "EV-011", 2, "PROC-EC-DISPATCH", "ORG-ENERGY", "Electricity dispatch",
            300 * TONNE, [("ELEC-EC-HV", kwh(1_000_000))],
            [("ELEC-EC-DISPATCHED", "Electricity", kwh(1_000_000))],
        ),
        _process(
            "EV-012", 3, "PROC-EC-FACILITIES", "ORG-ENERGY", "Facilities management",
            200 * TONNE, [("ELEC-EC-DISPATCHED", kwh(1_000_000))],
            [("ELEC-EC-GRID", "Electricity", kwh(1_000_000))],
        ),
        _transfer("EV-013", 4, "XFER-ELEC-IM", "ELEC-EC-GRID", "ORG-IRONMINE", "ELEC-IM", kwh(100_000)),
        _transfer("EV-014", 4, "XFER-ELEC-SC", "ELEC-EC-GRID", "ORG-STEELCO", "ELEC-SC", kwh(200_000)),
        _transfer("EV-015", 4, "XFER-ELEC-AF", "ELEC-EC-GRID", "ORG-AUTOFAB", "ELEC-AF", kwh(300_000)),
        # IronMine: mining then transport to SteelCo
        _process(
            "EV-020", 5, "PROC-IM-MINING", "ORG-IRONMINE", "Mining",
            400 * TONNE, [("ELEC-IM", kwh(100_000))],
            [("ORE-IM", "Iron Ore", kg(1_000_000))],
        ),
        _process(
            "EV-021", 6, "PROC-IM-SHIP", "ORG-IRONMINE", "Transport to SteelCo",
            100 * TONNE, [("ORE-IM", kg(1_000_000))],
            [("ORE-IM-SHIPPED", "Iron Ore", kg(1_000_000))],
        ),
        _transfer("EV-022", 7, "XFER-ORE", "ORE-IM-SHIPPED", "ORG-STEELCO", "ORE-SC", kg(1_000_000)),
        # RubberPlantations: extraction, processing, transport to RubberInc
        _process(
            "EV-030", 5, "PROC-RP-EXTRACT", "ORG-RUBBERPLANT", "Rubber extraction",
            30 * TONNE, [], [("RUBBER-RAW-RP", "Natural Rubber", kg(100_000))],
        ),
        _process(
            "EV-031", 6, "PROC-RP-PROCESS", "ORG-RUBBERPLANT", "Rubber processing",
            20 * TONNE, [("RUBBER-RAW-RP", kg(100_000))],
            [("RUBBER-PROC-RP", "Processed Rubber", kg(100_000))],
        ),
        _process(
            "EV-032", 7, "PROC-RP-SHIP", "ORG-RUBBERPLANT", "Transport to RubberInc",
            10 * TONNE, [("RUBBER-PROC-RP", kg(100_000))],
            [("RUBBER-PROC-RP-SHIPPED", "Processed Rubber", kg(100_000))],
        ),
        _transfer("EV-033", 8, "XFER-RUBBER", "RUBBER-PROC-RP-SHIPPED", "ORG-RUBBERINC", "RUBBER-RI", kg(40_000)),
        # SteelCo: smelting (ore + grid electricity) then transport to AutoFab
        _process(
            "EV-040", 8, "PROC-SC-SMELT", "ORG-STEELCO", "Smelting and steel production",
            1_100 * TONNE,
            [("ORE-SC", kg(1_000_000)), ("ELEC-SC", kwh(200_000))],
            [("STEEL-SC", "Steel", kg(1_000_000))],
        ),
        _process(
            "EV-041", 9, "PROC-SC-SHIP", "ORG-STEELCO", "Transport to AutoFab",
            100 * TONNE, [("STEEL-SC", kg(1_000_000))],
            [("STEEL-SC-SHIPPED", "Steel", kg(1_000_000))],
        ),
        _transfer("EV-042", 10, "XFER-STEEL", "STEEL-SC-SHIPPED", "ORG-AUTOFAB", "STEEL-AF", kg(10_000)),
        # RubberInc: self-generated electricity, tire production, transport
        _process(
            "EV-050", 9, "PROC-RI-GEN", "ORG-RUBBERINC", "Electricity generation",
            55 * TONNE, [], [("ELEC-RI", "Electricity", kwh(110_000))],
        ),
        _process(
            "EV-051", 10, "PROC-RI-TIRES", "ORG-RUBBERINC", "Tire production",
            16 * TONNE,
            [("RUBBER-RI", kg(40_000)), ("ELEC-RI", kwh(100_000))],
            [("TIRES-RI", "Tires", items(2_000))],
        ),
        _process(
            "EV-052", 11, "PROC-RI-SHIP", "ORG-RUBBERINC", "Transport to AutoFab",
            10 * TONNE, [("TIRES-RI", items(2_000))],
            [("TIRES-RI-SHIPPED", "Tires", items(2_000))],
        ),
        _transfer("EV-053", 12, "XFER-TIRES", "TIRES-RI-SHIPPED", "ORG-AUTOFAB", "TIRES-AF", items(40)),
        # AutoFab: assembly (steel + tires + grid electricity), transport
        _process(
            "EV-060", 13, "PROC-AF-ASSEMBLY", "ORG-AUTOFAB", "Automobile assembly",
            8 * TONNE,
            [("STEEL-AF", kg(10_000)), ("TIRES-AF", items(40)), ("ELEC-AF", kwh(100_000))],
            [("CARS-AF", "Automobile", items(10))],
        ),
        _process(
            "EV-061", 14, "PROC-AF-SHIP", "ORG-AUTOFAB", "Transport to dealerships",
            10 * TONNE, [("CARS-AF", items(10))],
            [("CARS-AF-SHIPPED", "Automobile", items(10))],
        ),
        _transfer("EV-062", 15, "XFER-CARS-DL", "CARS-AF-SHIPPED", "ORG-AUTODEALER", "CARS-DL", items(10)),
        # AutoDealer: facilities, servicing, delivery, then the sale to Doreen
        _process(
            "EV-070", 16, "PROC-DL-FACILITIES", "ORG-AUTODEALER", "Facilities and operations",
            5 * TONNE, [("CARS-DL", items(10))],
            [("CARS-DL-OPS", "Automobile", items(10))],
        ),
        _process(
            "EV-071", 17, "PROC-DL-SERVICE", "ORG-AUTODEALER", "Vehicle servicing",
            3 * TONNE, [("CARS-DL-OPS", items(10))],
            [("CARS-DL-SERVICED", "Automobile", items(10))],
        ),
        _process(
            "EV-072", 18, "PROC-DL-DELIVERY", "ORG-AUTODEALER", "Vehicle transportation",
            2 * TONNE, [("CARS-DL-SERVICED", items(10))],
            [("CARS-DL-READY", "Automobile", items(10))],
        ),
        _transfer("EV-073", 19, "XFER-CAR-DOREEN", "CARS-DL-READY", "ORG-DOREEN", "CAR-DOREEN", items(1)),
    ]
    return ev


# frozen expectation used by tests and docs: Doreen's car is 15 tCO2e with
# every stage process contributing its exact share
DOREEN_CAR_BREAKDOWN_UT = {
    "PROC-EC-VOLT": 5_150_000,
    "PROC-EC-DISPATCH": 3_090_000,
    "PROC-EC-FACILITIES": 2_060_000,
    "PROC-SC-SMELT": 1_100_000,
    "PROC-AF-SHIP": 1_000_000,
    "PROC-AF-ASSEMBLY": 800_000,
    "PROC-DL-FACILITIES": 500_000,
    "PROC-IM-MINING": 400_000,
    "PROC-DL-SERVICE": 300_000,
    "PROC-DL-DELIVERY": 200_000,
    "PROC-IM-SHIP": 100_000,
    "PROC-SC-SHIP": 100_000,
    "PROC-RI-GEN": 100_000,
    "PROC-RI-TIRES": 32_000,
    "PROC-RP-EXTRACT": 24_000,
    "PROC-RI-SHIP": 20_000,
    "PROC-RP-PROCESS": 16_000,
    "PROC-RP-SHIP": 8_000,
}


def main(argv: Optional[list[str]] = None) -> int:
    import sys

    from .ingestion import canonical_line

    args = sys.argv[1:] if argv is None else argv
    which = args[0] if args else "minimal"
    if which == "minimal":
        events = minimal_events()
    elif which == "full":
        events = full_autofab_events()
    else:
        print("usage: python -m elkg.fixtures [minimal|full]", file=sys.stderr)
        return 2
    for event in events:
        print(canonical_line(event))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
