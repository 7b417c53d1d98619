"""Shared percentage formatting."""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal


def percent(numerator: int, denominator: int) -> Decimal:
    """numerator/denominator as a percentage, two decimals, half-up.

    An empty denominator gives 0.00.
    """
    if denominator == 0:
        return Decimal("0.00")
    value = Decimal(numerator) * 100 / Decimal(denominator)
    return value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def pct_str(numerator: int, denominator: int) -> str:
    return f"{percent(numerator, denominator)}%"


def count_str(n: int) -> str:
    return f"{n:,}"
