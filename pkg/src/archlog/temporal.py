"""How far back in time requested mementos are, relative to the log date."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Iterable

from .archive import MEMENTO, ArchiveRequest

YEAR_MODES = ("calendar", "elapsed")
_DAYS_PER_YEAR = 365.2425


def years_prior(memento_datetime: datetime, reference: datetime | date, mode: str = "calendar") -> int | None:
    """Years between a memento and the reference date; None if in the future.

    ``calendar`` (default) subtracts calendar years, so with a 2012 reference
    every 2010 memento is 2 years prior.  ``elapsed`` floors the elapsed time
    in mean Gregorian years.
    """
    if mode == "calendar":
        ref_year = reference.year
        n = ref_year - memento_datetime.astimezone(timezone.utc).year
        return n if n >= 0 else None
    if mode == "elapsed":
        if not isinstance(reference, datetime):
            reference = datetime(reference.year, reference.month, reference.day, tzinfo=timezone.utc)
        seconds = (reference - memento_datetime).total_seconds()
        if seconds < 0:
            return None
        return int(seconds // (_DAYS_PER_YEAR * 86400))
    raise ValueError(f"unknown year mode {mode!r}")


@dataclass
class TemporalHistogram:
    reference_date: date | None
    buckets: Counter = field(default_factory=Counter)
    discarded_future: int = 0

    @property
    def total(self) -> int:
        return sum(self.buckets.values()) + self.discarded_future

    def add(self, memento_datetime: datetime, mode: str = "calendar") -> None:
        n = years_prior(memento_datetime, self.reference_date, mode)
        if n is None:
            self.discarded_future += 1
        else:
            self.buckets[n] += 1

    def merge(self, other: TemporalHistogram) -> None:
        self.buckets.update(other.buckets)
        self.discarded_future += other.discarded_future

    def rows(self, subdataset: str) -> list[dict]:
        return [
            {"subdataset": subdataset, "years_prior": k, "count": self.buckets[k]}
            for k in sorted(self.buckets)
        ]


def temporal_histogram(
    requests: Iterable[tuple[ArchiveRequest, bool]],
    reference: date,
    mode: str = "calendar",
) -> dict[str, TemporalHistogram]:
    """Histograms for the ``human`` and ``robot`` subdatasets.

    ``requests`` yields (request, is_robot) pairs; non-memento requests are
    skipped.
    """
    out = {"human": TemporalHistogram(reference), "robot": TemporalHistogram(reference)}
    for req, is_robot in requests:
        if req.kind != MEMENTO:
            continue
        out["robot" if is_robot else "human"].add(req.memento_datetime, mode)
    return out


def modal_date(dates: Iterable[date]) -> date | None:
    """Most frequent date; ties go to the earliest."""
    counts = Counter(dates)
    if not counts:
        return None
    best = max(counts.values())
    return min(d for d, c in counts.items() if c == best)
