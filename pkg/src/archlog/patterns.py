"""Access-pattern labels for cleaned sessions.

Base patterns:

* Dip   -- the session is a single request (one URI-M or URI-T)
* Slide -- one URI-R requested at two or more Memento-Datetimes
* Dive  -- two different URI-Rs whose Memento-Datetimes are within the dive
  window of each other
* Skim  -- TimeMaps of two or more different URI-Rs

Multi-request sessions may show several of Slide/Dive/Skim at once (the
hybrids); those showing none are Unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import timedelta
from typing import Iterable

from ._fmt import pct_str
from .archive import MEMENTO, TIMEMAP
from .bots import BotVerdict
from .sessionize import Session

DIP = "Dip"
SLIDE = "Slide"
DIVE = "Dive"
SKIM = "Skim"
DIVE_SLIDE = "DiveSlide"
DIVE_SKIM = "DiveSkim"
SKIM_SLIDE = "SkimSlide"
DIVE_SLIDE_SKIM = "DiveSlideSkim"
UNKNOWN = "Unknown"
LABELS = (DIP, SLIDE, DIVE, SKIM, DIVE_SLIDE, DIVE_SKIM, SKIM_SLIDE, DIVE_SLIDE_SKIM, UNKNOWN)

DEFAULT_DIVE_WINDOW = timedelta(hours=24)

_HYBRID_NAMES = {
    frozenset({"slide"}): SLIDE,
    frozenset({"dive"}): DIVE,
    frozenset({"skim"}): SKIM,
    frozenset({"dive", "slide"}): DIVE_SLIDE,
    frozenset({"dive", "skim"}): DIVE_SKIM,
    frozenset({"skim", "slide"}): SKIM_SLIDE,
    frozenset({"dive", "slide", "skim"}): DIVE_SLIDE_SKIM,
}


@dataclass(frozen=True)
class PatternLabel:
    base_flags: frozenset[str]
    is_dip: bool
    label: str


def label_name(flags: Iterable[str], is_dip: bool = False) -> str:
    if is_dip:
        return DIP
    return _HYBRID_NAMES.get(frozenset(flags), UNKNOWN)


def detect_slide(session: Session) -> bool:
    seen: dict[str, object] = {}
    for r in session.requests:
        if r.kind != MEMENTO:
            continue
        first = seen.setdefault(r.uri_r, r.memento_datetime)
        if first != r.memento_datetime:
            return True
    return False


def detect_dive(session: Session, dive_window: timedelta = DEFAULT_DIVE_WINDOW) -> bool:
    # If any two distinct URI-Rs lie within the window, some pair adjacent in
    # datetime order does too, so one pass over the sorted list suffices.
    mementos = sorted(
        (r.memento_datetime, r.uri_r) for r in session.requests if r.kind == MEMENTO
    )
    for (t0, u0), (t1, u1) in zip(mementos, mementos[1:]):
        if u0 != u1 and t1 - t0 <= dive_window:
            return True
    return False


def detect_skim(session: Session) -> bool:
    first = None
    for r in session.requests:
        if r.kind == TIMEMAP:
            if first is None:
                first = r.uri_r
            elif r.uri_r != first:
                return True
    return False


def classify_pattern(
    session: Session, dive_window: timedelta = DEFAULT_DIVE_WINDOW
) -> PatternLabel:
    if len(session.requests) == 1:
        return PatternLabel(frozenset(), True, DIP)
    flags = set()
    if detect_slide(session):
        flags.add("slide")
    if detect_dive(session, dive_window):
        flags.add("dive")
    if detect_skim(session):
        flags.add("skim")
    flags = frozenset(flags)
    return PatternLabel(flags, False, label_name(flags))


@dataclass
class LabelTally:
    sessions: int = 0
    requests: int = 0
    mementos: int = 0
    timemaps: int = 0

    def merge(self, other: LabelTally) -> None:
        self.sessions += other.sessions
        self.requests += other.requests
        self.mementos += other.mementos
        self.timemaps += other.timemaps


@dataclass
class PatternDistribution:
    """Per-subdataset (``human``/``robot``) request counts for each label."""

    tallies: dict[str, dict[str, LabelTally]] = field(
        default_factory=lambda: {sub: {lab: LabelTally() for lab in LABELS} for sub in SUBDATASETS}
    )

    def add(self, session: Session, label: PatternLabel, is_robot: bool) -> None:
        t = self.tallies[ROBOT if is_robot else HUMAN][label.label]
        t.sessions += 1
        t.requests += len(session.requests)
        for r in session.requests:
            if r.kind == MEMENTO:
                t.mementos += 1
            elif r.kind == TIMEMAP:
                t.timemaps += 1

    def merge(self, other: PatternDistribution) -> None:
        for sub, labels in other.tallies.items():
            for lab, t in labels.items():
                self.tallies[sub][lab].merge(t)

    def total_requests(self, subdataset: str) -> int:
        return sum(t.requests for t in self.tallies[subdataset].values())

    def total_sessions(self, subdataset: str) -> int:
        return sum(t.sessions for t in self.tallies[subdataset].values())

    def rows(self) -> list[dict]:
        out = []
        for sub in SUBDATASETS:
            total = self.total_requests(sub)
            for lab in LABELS:
                t = self.tallies[sub][lab]
                out.append({
                    "subdataset": sub,
                    "label": lab,
                    "sessions": t.sessions,
                    "requests": t.requests,
                    "mementos": t.mementos,
                    "timemaps": t.timemaps,
                    "subdataset_requests": total,
                    "pct": pct_str(t.requests, total),
                })
        return out

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> PatternDistribution:
        dist = cls()
        for row in rows:
            t = dist.tallies[row["subdataset"]][row["label"]]
            t.sessions = int(row["sessions"])
            t.requests = int(row["requests"])
            t.mementos = int(row["mementos"])
            t.timemaps = int(row["timemaps"])
        return dist


HUMAN = "human"
ROBOT = "robot"
SUBDATASETS = (HUMAN, ROBOT)


def pattern_report(
    items: Iterable[tuple[Session, PatternLabel, BotVerdict]],
) -> PatternDistribution:
    dist = PatternDistribution()
    for session, label, verdict in items:
        dist.add(session, label, verdict.is_robot)
    return dist
