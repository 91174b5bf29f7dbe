"""Exact fixed-point quantities for the liability ledger.

Every CO2e amount is an integer count of micro-tonnes (1 µt = 1 gram CO2e);
every material quantity is an integer count of 10^-6 of its canonical unit
(kg, kWh or item). No float ever touches ledger arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

MICRO = 10**6

CANONICAL_UNITS = ("kg", "kWh", "item")

# declared unit -> (canonical unit, numerator, denominator) applied to micro-units
_UNIT_TABLE: dict[str, tuple[str, int, int]] = {
    "kg": ("kg", 1, 1),
    "kilogram": ("kg", 1, 1),
    "kilograms": ("kg", 1, 1),
    "t": ("kg", 1000, 1),
    "tonne": ("kg", 1000, 1),
    "tonnes": ("kg", 1000, 1),
    "ton": ("kg", 1000, 1),
    "g": ("kg", 1, 1000),
    "gram": ("kg", 1, 1000),
    "grams": ("kg", 1, 1000),
    "kWh": ("kWh", 1, 1),
    "kwh": ("kWh", 1, 1),
    "MWh": ("kWh", 1000, 1),
    "mwh": ("kWh", 1000, 1),
    "Wh": ("kWh", 1, 1000),
    "item": ("item", 1, 1),
    "items": ("item", 1, 1),
    "unit": ("item", 1, 1),
    "units": ("item", 1, 1),
    "piece": ("item", 1, 1),
    "pieces": ("item", 1, 1),
    "count": ("item", 1, 1),
}


class UnitError(ValueError):
    """Raised when a quantity is built with a non-canonical unit."""


class UnknownUnit(UnitError):
    """Declared unit is outside the supported conversion table."""


class BadNumber(ValueError):
    """Raised for unparseable or out-of-range numeric fields."""


@dataclass(frozen=True, slots=True)
class EmissionQty:
    """Non-negative CO2e amount in integer micro-tonnes."""

    micro_tonnes: int

    def __post_init__(self) -> None:
        if not isinstance(self.micro_tonnes, int) or isinstance(self.micro_tonnes, bool):
            raise BadNumber(f"emission quantity must be an integer, got {self.micro_tonnes!r}")
        if self.micro_tonnes < 0:
            raise BadNumber(f"emission quantity must be >= 0, got {self.micro_tonnes}")

    def __add__(self, other: "EmissionQty") -> "EmissionQty":
        return EmissionQty(self.micro_tonnes + other.micro_tonnes)

    def __int__(self) -> int:
        return self.micro_tonnes


@dataclass(frozen=True, slots=True)
class SignedEmissionDelta:
    """Signed CO2e adjustment in micro-tonnes (offsets are negative)."""

    micro_tonnes: int

    def __post_init__(self) -> None:
        if not isinstance(self.micro_tonnes, int) or isinstance(self.micro_tonnes, bool):
            raise BadNumber(f"emission delta must be an integer, got {self.micro_tonnes!r}")

    def __int__(self) -> int:
        return self.micro_tonnes


@dataclass(frozen=True, slots=True)
class Quantity:
    """Material amount: integer micro-units of one canonical unit."""

    micro: int
    unit: str

    def __post_init__(self) -> None:
        if not isinstance(self.micro, int) or isinstance(self.micro, bool):
            raise BadNumber(f"quantity must be an integer micro count, got {self.micro!r}")
        if self.micro < 0:
            raise BadNumber(f"quantity must be >= 0, got {self.micro}")
        if self.unit not in CANONICAL_UNITS:
            raise UnitError(f"unit {self.unit!r} is not canonical (expected one of {CANONICAL_UNITS})")

    def __str__(self) -> str:
        return f"{format_micro(self.micro)} {self.unit}"


def parse_decimal(text: object) -> Decimal:
    """Parse a JSON-sourced number (int or decimal string) exactly; floats rejected."""
    if isinstance(text, bool):
        raise BadNumber(f"not a number: {text!r}")
    if isinstance(text, int):
        return Decimal(text)
    if isinstance(text, Decimal):
        return text
    if isinstance(text, float):
        raise BadNumber("float values are not accepted in ledger records; use strings")
    if isinstance(text, str):
        try:
            value = Decimal(text.strip())
        except InvalidOperation as exc:
            raise BadNumber(f"not a number: {text!r}") from exc
        if not value.is_finite():
            raise BadNumber(f"not a finite number: {text!r}")
        return value
    raise BadNumber(f"not a number: {text!r}")


def to_micro(amount: Decimal) -> int:
    """Scale a decimal amount to integer micro-units, requiring exactness."""
    scaled = amount * MICRO
    micro = int(scaled)
    if scaled != micro:
        raise BadNumber(f"amount {amount} has more than 6 decimal places")
    return micro


def normalize_quantity(amount: object, unit: str) -> Quantity:
    """Convert a declared (amount, unit) pair to a canonical-unit Quantity.

    Conversion is exact in micro-units; sub-micro precision raises BadNumber
    and unknown units raise UnitError.
    """
    if unit not in _UNIT_TABLE:
        raise UnknownUnit(f"unknown unit {unit!r}")
    canonical, num, den = _UNIT_TABLE[unit]
    value = parse_decimal(amount)
    if value < 0:
        raise BadNumber(f"quantity must be >= 0, got {value}")
    micro = to_micro(value) * num
    if micro % den:
        raise BadNumber(f"{value} {unit} is not exact in micro-{canonical}")
    return Quantity(micro // den, canonical)


def format_micro(micro: int) -> str:
    """Render integer micro-units as a decimal string without trailing zeros."""
    sign = "-" if micro < 0 else ""
    whole, frac = divmod(abs(micro), MICRO)
    if frac == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:06d}".rstrip("0")


def format_tonnes(micro_tonnes: int) -> str:
    """Render micro-tonnes as tonnes with exactly six decimals (lossless)."""
    sign = "-" if micro_tonnes < 0 else ""
    whole, frac = divmod(abs(micro_tonnes), MICRO)
    return f"{sign}{whole}.{frac:06d}"


def format_tonnes_signed(micro_tonnes: int) -> str:
    """Like format_tonnes but always carrying an explicit sign (delta display)."""
    if micro_tonnes < 0:
        return format_tonnes(micro_tonnes)
    return "+" + format_tonnes(micro_tonnes)
