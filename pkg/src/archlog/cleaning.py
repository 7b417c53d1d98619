"""Two-stage cleaning filters.

Stage 1 runs before sessionization and keeps only archive content
(mementos, TimeMaps) plus robots.txt hits, which bot detection needs.
Stage 2 runs after bot detection and keeps what a user actually navigated
to: GET requests answered 200/404/503 that are not embedded resources.
"""

from __future__ import annotations

from dataclasses import dataclass

from ._fmt import percent, pct_str
from .archive import MEMENTO, ROBOTS_TXT, TIMEMAP, ArchiveRequest

STAGE1_KINDS = frozenset({MEMENTO, TIMEMAP, ROBOTS_TXT})
STAGE2_STATUSES = frozenset({200, 404, 503})


def stage1_keep(request: ArchiveRequest) -> bool:
    return request.kind in STAGE1_KINDS


def stage2_keep(request: ArchiveRequest) -> bool:
    return (
        request.entry.method == "GET"
        and request.entry.status in STAGE2_STATUSES
        and not request.is_embedded
        and (request.kind == MEMENTO or request.kind == TIMEMAP)
    )


@dataclass
class CleaningStats:
    raw_count: int = 0
    s1_count: int = 0
    s2_count: int = 0

    def __post_init__(self):
        if not (0 <= self.s2_count <= self.s1_count <= self.raw_count):
            raise ValueError(
                f"inconsistent cleaning counts: raw={self.raw_count} "
                f"s1={self.s1_count} s2={self.s2_count}"
            )

    @property
    def s1_pct(self):
        return percent(self.s1_count, self.raw_count)

    @property
    def s2_pct(self):
        return percent(self.s2_count, self.raw_count)

    def row(self) -> dict:
        return {
            "raw": self.raw_count,
            "stage1": self.s1_count,
            "stage1_pct": pct_str(self.s1_count, self.raw_count),
            "stage2": self.s2_count,
            "stage2_pct": pct_str(self.s2_count, self.raw_count),
        }
