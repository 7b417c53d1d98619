"""Dataset features, the bot table, and the report bundle writers."""

from __future__ import annotations

import csv
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable

from ._fmt import count_str, pct_str
from .archive import ArchiveRequest
from .bots import HEURISTICS, BotVerdict, is_self_identified
from .cleaning import CleaningStats
from .patterns import LABELS, SUBDATASETS, PatternDistribution
from .sessionize import Session
from .temporal import TemporalHistogram

REPORT_METHODS = ("GET", "HEAD", "PROPFIND", "POST", "OPTIONS")
STATUS_CLASSES = ("2xx", "3xx", "4xx", "5xx")
FEATURE_ROWS = (
    "requests", *REPORT_METHODS, *(f"status_{c}" for c in STATUS_CLASSES),
    "embedded_resources", "null_referrer", "si_robots",
)
FEATURE_LABELS = {
    "requests": "No. of Requests",
    **{m: m for m in REPORT_METHODS},
    **{f"status_{c}": f"Status Code {c}" for c in STATUS_CLASSES},
    "embedded_resources": "Embedded Resources",
    "null_referrer": "Null Referrer",
    "si_robots": "SI Robots",
}
HEURISTIC_LABELS = {
    "known_bot": "Known Bots",
    "ua_per_ip": "#UA per IP",
    "robots_txt": "robots.txt",
    "ih_ratio": "IH Ratio",
    "browsing_speed": "Browsing Speed",
    "head_method": "HEAD",
}
BUNDLE_FILES = ("bundle.json", "features.csv", "cleaning.csv", "bots.csv",
                "patterns.csv", "temporal.csv", "metadata.csv", "report.md")


@dataclass
class FeatureStats:
    """Raw-dataset feature counts (one column of the features table)."""

    total_requests: int = 0
    methods: Counter = field(default_factory=Counter)
    status_classes: Counter = field(default_factory=Counter)
    embedded_resources: int = 0
    null_referrer: int = 0
    si_robots: int = 0

    def add(self, request: ArchiveRequest) -> None:
        e = request.entry
        self.total_requests += 1
        self.methods[e.method] += 1
        cls = e.status // 100
        if 2 <= cls <= 5:
            self.status_classes[f"{cls}xx"] += 1
        if request.is_embedded:
            self.embedded_resources += 1
        if e.referrer is None or e.referrer == "-":
            self.null_referrer += 1
        if is_self_identified(e.user_agent):
            self.si_robots += 1

    def count(self, row: str) -> int:
        if row == "requests":
            return self.total_requests
        if row in REPORT_METHODS:
            return self.methods.get(row, 0)
        if row.startswith("status_"):
            return self.status_classes.get(row[7:], 0)
        return getattr(self, row)

    def rows(self) -> list[dict]:
        total = self.total_requests
        return [
            {"feature": r, "count": self.count(r), "total": total, "pct": pct_str(self.count(r), total)}
            for r in FEATURE_ROWS
        ]

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> FeatureStats:
        fs = cls()
        for row in rows:
            name, n = row["feature"], int(row["count"])
            if name == "requests":
                fs.total_requests = n
            elif name in REPORT_METHODS:
                fs.methods[name] = n
            elif name.startswith("status_"):
                fs.status_classes[name[7:]] = n
            else:
                setattr(fs, name, n)
        return fs


def feature_stats(requests: Iterable[ArchiveRequest]) -> FeatureStats:
    fs = FeatureStats()
    for r in requests:
        fs.add(r)
    return fs


@dataclass
class BotTable:
    """Sessions and requests flagged per heuristic, plus totals.

    Request counts are Stage-1 session sizes: a flagged session contributes
    all of its requests to every heuristic that fired on it.
    """

    total_sessions: int = 0
    total_requests: int = 0
    sessions: Counter = field(default_factory=Counter)
    requests: Counter = field(default_factory=Counter)
    robot_sessions: int = 0
    robot_requests: int = 0

    def add(self, session: Session, verdict: BotVerdict) -> None:
        n = len(session.requests)
        self.total_sessions += 1
        self.total_requests += n
        for h in verdict.triggered:
            self.sessions[h] += 1
            self.requests[h] += verdict.request_counts.get(h, n)
        if verdict.is_robot:
            self.robot_sessions += 1
            self.robot_requests += n

    def to_dict(self) -> dict:
        rows = []
        for h in (*HEURISTICS, "total_robots"):
            s = self.robot_sessions if h == "total_robots" else self.sessions.get(h, 0)
            q = self.robot_requests if h == "total_robots" else self.requests.get(h, 0)
            rows.append({
                "heuristic": h,
                "sessions": s,
                "total_sessions": self.total_sessions,
                "sessions_pct": pct_str(s, self.total_sessions),
                "requests": q,
                "total_requests": self.total_requests,
                "requests_pct": pct_str(q, self.total_requests),
            })
        return {"total_sessions": self.total_sessions, "total_requests": self.total_requests, "rows": rows}

    @classmethod
    def from_dict(cls, d: dict) -> BotTable:
        t = cls(total_sessions=int(d["total_sessions"]), total_requests=int(d["total_requests"]))
        for row in d["rows"]:
            h = row["heuristic"]
            if h == "total_robots":
                t.robot_sessions = int(row["sessions"])
                t.robot_requests = int(row["requests"])
            else:
                t.sessions[h] = int(row["sessions"])
                t.requests[h] = int(row["requests"])
        return t


@dataclass
class ReportBundle:
    feature_stats: FeatureStats
    cleaning_stats: CleaningStats
    bot_table: BotTable
    pattern_distribution: PatternDistribution
    temporal_histograms: dict[str, TemporalHistogram]
    run_metadata: dict

    @classmethod
    def empty(cls, reference: date | None = None, run_metadata: dict | None = None) -> ReportBundle:
        return cls(
            FeatureStats(), CleaningStats(), BotTable(), PatternDistribution(),
            {s: TemporalHistogram(reference) for s in SUBDATASETS}, dict(run_metadata or {}),
        )

    def to_dict(self) -> dict:
        temporal = {}
        ref = None
        for sub in SUBDATASETS:
            h = self.temporal_histograms[sub]
            ref = h.reference_date
            temporal[sub] = {
                "buckets": h.rows(sub),
                "discarded_future": h.discarded_future,
                "total": h.total,
            }
        return {
            "run_metadata": self.run_metadata,
            "features": self.feature_stats.rows(),
            "cleaning": self.cleaning_stats.row(),
            "bots": self.bot_table.to_dict(),
            "patterns": self.pattern_distribution.rows(),
            "temporal": {
                "reference_date": ref.isoformat() if ref else None,
                **temporal,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> ReportBundle:
        ref = d["temporal"]["reference_date"]
        ref = None if ref is None else date.fromisoformat(ref)
        hists = {}
        for sub in SUBDATASETS:
            h = TemporalHistogram(ref)
            for row in d["temporal"][sub]["buckets"]:
                h.buckets[int(row["years_prior"])] = int(row["count"])
            h.discarded_future = int(d["temporal"][sub]["discarded_future"])
            hists[sub] = h
        c = d["cleaning"]
        return cls(
            feature_stats=FeatureStats.from_rows(d["features"]),
            cleaning_stats=CleaningStats(int(c["raw"]), int(c["stage1"]), int(c["stage2"])),
            bot_table=BotTable.from_dict(d["bots"]),
            pattern_distribution=PatternDistribution.from_rows(d["patterns"]),
            temporal_histograms=hists,
            run_metadata=d["run_metadata"],
        )


def bundle_json(bundle: ReportBundle) -> str:
    return json.dumps(bundle.to_dict(), indent=2, sort_keys=True, ensure_ascii=True) + "\n"


def _write_csv(path: str, header: list[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in header})


def emit_report(bundle: ReportBundle, out_dir: str, formats: Iterable[str] = ("json", "csv", "markdown")) -> list[str]:
    """Write the bundle; returns the paths written.  Output is byte-stable."""
    os.makedirs(out_dir, exist_ok=True)
    formats = set(formats)
    unknown = formats - {"json", "csv", "markdown"}
    if unknown:
        raise ValueError(f"unknown report formats: {sorted(unknown)}")
    d = bundle.to_dict()
    written = []
    if "json" in formats:
        p = os.path.join(out_dir, "bundle.json")
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(bundle_json(bundle))
        written.append(p)
    if "csv" in formats:
        written += _emit_csv(d, out_dir)
    if "markdown" in formats:
        p = os.path.join(out_dir, "report.md")
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_markdown(bundle))
        written.append(p)
    return written


def _emit_csv(d: dict, out_dir: str) -> list[str]:
    paths = []

    def target(name):
        p = os.path.join(out_dir, name)
        paths.append(p)
        return p

    _write_csv(target("features.csv"), ["feature", "count", "total", "pct"], d["features"])
    c = d["cleaning"]
    _write_csv(target("cleaning.csv"), ["stage", "count", "total", "pct"], [
        {"stage": "raw", "count": c["raw"], "total": c["raw"], "pct": pct_str(c["raw"], c["raw"])},
        {"stage": "stage1", "count": c["stage1"], "total": c["raw"], "pct": c["stage1_pct"]},
        {"stage": "stage2", "count": c["stage2"], "total": c["raw"], "pct": c["stage2_pct"]},
    ])
    _write_csv(
        target("bots.csv"),
        ["heuristic", "sessions", "total_sessions", "sessions_pct", "requests", "total_requests", "requests_pct"],
        d["bots"]["rows"],
    )
    _write_csv(
        target("patterns.csv"),
        ["subdataset", "label", "sessions", "requests", "mementos", "timemaps", "subdataset_requests", "pct"],
        d["patterns"],
    )
    t = d["temporal"]
    trows = []
    for sub in SUBDATASETS:
        trows += [{**r, "reference_date": t["reference_date"]} for r in t[sub]["buckets"]]
        trows.append({"subdataset": sub, "years_prior": "future",
                      "count": t[sub]["discarded_future"], "reference_date": t["reference_date"]})
    _write_csv(target("temporal.csv"), ["subdataset", "years_prior", "count", "reference_date"], trows)
    _write_csv(target("metadata.csv"), ["key", "value"], [
        {"key": k, "value": json.dumps(v, sort_keys=True)} for k, v in sorted(d["run_metadata"].items())
    ])
    return paths


def _read_csv(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def bundle_from_csv(in_dir: str) -> ReportBundle:
    """Rebuild a ReportBundle from the CSV files written by emit_report."""
    features = FeatureStats.from_rows(_read_csv(os.path.join(in_dir, "features.csv")))
    stages = {r["stage"]: int(r["count"]) for r in _read_csv(os.path.join(in_dir, "cleaning.csv"))}
    cleaning = CleaningStats(stages["raw"], stages["stage1"], stages["stage2"])
    bot_rows = _read_csv(os.path.join(in_dir, "bots.csv"))
    bots = BotTable.from_dict({
        "total_sessions": bot_rows[0]["total_sessions"],
        "total_requests": bot_rows[0]["total_requests"],
        "rows": bot_rows,
    })
    patterns = PatternDistribution.from_rows(_read_csv(os.path.join(in_dir, "patterns.csv")))
    trows = _read_csv(os.path.join(in_dir, "temporal.csv"))
    ref = trows[0]["reference_date"]
    ref = date.fromisoformat(ref) if ref else None
    hists = {s: TemporalHistogram(ref) for s in SUBDATASETS}
    for r in trows:
        h = hists[r["subdataset"]]
        if r["years_prior"] == "future":
            h.discarded_future = int(r["count"])
        else:
            h.buckets[int(r["years_prior"])] = int(r["count"])
    meta = {r["key"]: json.loads(r["value"]) for r in _read_csv(os.path.join(in_dir, "metadata.csv"))}
    return ReportBundle(features, cleaning, bots, patterns, hists, meta)


def _md_table(header: list[str], rows: list[list[str]], align: str) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(":---" if a == "l" else "---:" for a in align) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _cell(n: int, total: int) -> str:
    return f"{count_str(n)} ({pct_str(n, total)})"


def render_markdown(bundle: ReportBundle) -> str:
    fs = bundle.feature_stats
    out = ["# Access log report\n"]

    out.append("\n## Dataset features\n\n")
    out.append(_md_table(
        ["Feature", "Count"],
        [[FEATURE_LABELS[r], _cell(fs.count(r), fs.total_requests)] for r in FEATURE_ROWS],
        "lr",
    ))

    c = bundle.cleaning_stats
    out.append("\n## Data cleaning\n\n")
    out.append(_md_table(
        ["Raw Dataset", "Stage 1 Cleaning", "Stage 2 Cleaning"],
        [[count_str(c.raw_count), _cell(c.s1_count, c.raw_count), _cell(c.s2_count, c.raw_count)]],
        "rrr",
    ))

    b = bundle.bot_table
    out.append("\n## Bot identification\n\n")
    rows = []
    for h in ("known_bot", "ua_per_ip", "robots_txt", "ih_ratio", "browsing_speed", "head_method"):
        rows.append([HEURISTIC_LABELS[h], _cell(b.sessions.get(h, 0), b.total_sessions),
                     _cell(b.requests.get(h, 0), b.total_requests)])
    rows.append(["**Total Robots**", _cell(b.robot_sessions, b.total_sessions),
                 _cell(b.robot_requests, b.total_requests)])
    out.append(_md_table(
        ["Heuristics", f"Sessions ({count_str(b.total_sessions)})",
         f"Requests ({count_str(b.total_requests)})"],
        rows, "lrr",
    ))

    pd = bundle.pattern_distribution
    out.append("\n## Access patterns\n\n")
    prow = []
    for lab in LABELS:
        row = [lab]
        for sub in SUBDATASETS:
            t = pd.tallies[sub][lab]
            total = pd.total_requests(sub)
            row += [_cell(t.requests, total), count_str(t.mementos), count_str(t.timemaps)]
        prow.append(row)
    out.append(_md_table(
        ["Pattern", "Human requests", "Human URI-M", "Human URI-T",
         "Robot requests", "Robot URI-M", "Robot URI-T"],
        prow, "lrrrrrr",
    ))

    h = bundle.temporal_histograms
    ref = h["human"].reference_date
    ref = ref.isoformat() if ref else "n/a"
    out.append(f"\n## Temporal preference (reference date {ref})\n\n")
    years = sorted(set(h["human"].buckets) | set(h["robot"].buckets))
    trows = [[str(y), count_str(h["human"].buckets.get(y, 0)), count_str(h["robot"].buckets.get(y, 0))]
             for y in years]
    trows.append(["future", count_str(h["human"].discarded_future), count_str(h["robot"].discarded_future)])
    out.append(_md_table(["Years prior", "Human requests", "Robot requests"], trows, "rrr"))
    return "".join(out)
