"""Stage functions and the end-to-end pipeline.

Every stage reads and writes files (the canonical record stream plus a small
JSON "part" holding the stage's statistics), so ``run_pipeline`` is exactly
the composition of the standalone CLI subcommands::

    parse -> clean 1 -> sessionize -> detect -> clean 2 -> patterns, temporal -> report
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Iterator

from .archive import PROFILE_ALIASES, classify_path, parse_memento_datetime
from .bots import HEURISTICS, KnownBotList, Thresholds, classify_session, flag_ua_per_ip
from .cleaning import CleaningStats, stage1_keep, stage2_keep
from .ingest import FORMATS, ParseCounts, ParseError, _parse_ts, open_text, parse_line
from .patterns import PatternDistribution, classify_pattern
from .records import (
    RecordWriter,
    from_record,
    read_records,
    read_requests,
    read_session_groups,
)
from .report import BotTable, FeatureStats, ReportBundle, emit_report
from .sessionize import DEFAULT_TIMEOUT, Session, SessionizerStats, UserKey, build_sessions
from .temporal import YEAR_MODES, TemporalHistogram, modal_date

logger = logging.getLogger(__name__)

STAGES = ("parse", "clean1", "sessionize", "detect", "clean2", "patterns", "temporal", "report")
RECORD_FILES = {
    "parse": "records.ndjson.gz",
    "clean1": "stage1.ndjson.gz",
    "sessionize": "sessions.ndjson.gz",
    "detect": "detected.ndjson.gz",
    "clean2": "stage2.ndjson.gz",
}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, counts: dict | None = None):
        self.stage = stage
        self.counts = dict(counts or {})
        detail = f" (counts so far: {json.dumps(self.counts, sort_keys=True)})" if self.counts else ""
        super().__init__(f"stage {stage!r} failed: {message}{detail}")


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_part(path: str, part: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(part, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_part(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# -- stages -----------------------------------------------------------------


def stage_parse(
    inputs: list[str],
    out: str,
    profile: str = "auto",
    format_hint: str = "auto",
    errors_out: str | None = None,
) -> dict:
    """Parse and classify raw logs into the record stream."""
    if format_hint not in FORMATS:
        raise ValueError(f"unknown format {format_hint!r}")
    profile = PROFILE_ALIASES[profile]
    counts = ParseCounts()
    features = FeatureStats()
    digests = []
    seq = 0
    err_fh = open(errors_out, "w", encoding="utf-8", errors="surrogateescape") if errors_out else None
    try:
        with RecordWriter(out) as writer:
            for path in inputs:
                try:
                    digests.append({"name": os.path.basename(path), "sha256": _sha256_file(path)})
                    fh = open_text(path)
                except OSError as exc:
                    raise PipelineError("parse", f"cannot read input {path}: {exc}", asdict(counts)) from exc
                with fh:
                    for lineno, line in enumerate(fh, 1):
                        counts.lines_in += 1
                        seq += 1
                        try:
                            entry = parse_line(line, format_hint)
                        except ParseError as exc:
                            counts.errors += 1
                            if err_fh is not None:
                                err_fh.write(
                                    f"{os.path.basename(path)}:{lineno}\t{exc.offset}\t{exc.reason}\t"
                                    f"{line.rstrip(chr(10))}\n"
                                )
                            continue
                        counts.parsed += 1
                        req = classify_path(entry, profile, seq)
                        features.add(req)
                        writer.write(req)
    finally:
        if err_fh is not None:
            err_fh.close()
    if counts.lines_in == 0:
        logger.warning("no input lines")
    return {
        "stage": "parse",
        "profile": profile,
        "format": format_hint,
        "inputs": digests,
        "counts": asdict(counts),
        "features": features.rows(),
    }


def stage_clean(in_path: str, out: str, stage: int) -> dict:
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    keep = stage1_keep if stage == 1 else stage2_keep
    n_in = 0
    with RecordWriter(out) as writer:
        for rec in read_records(in_path):
            n_in += 1
            req = from_record(rec)
            if keep(req):
                extra = {k: rec[k] for k in ("session_id", "robot", "heuristics") if k in rec}
                writer.write(req, **extra)
        n_out = writer.count
    return {"stage": f"clean{stage}", "in": n_in, "out": n_out}


def stage_sessionize(
    in_path: str,
    out: str,
    timeout: int = DEFAULT_TIMEOUT,
    memory_budget: str | int | None = None,
    tmpdir: str | None = None,
) -> dict:
    stats = SessionizerStats()
    with RecordWriter(out) as writer:
        for s in build_sessions(read_requests(in_path), timeout, memory_budget, tmpdir, stats):
            for r in s.requests:
                writer.write(r, session_id=s.session_id)
    return {
        "stage": "sessionize",
        "timeout_seconds": timeout,
        "sessions": stats.sessions,
        "requests": stats.requests,
    }


def _group_sessions(path: str) -> Iterator[tuple[Session, list[dict]]]:
    for sid, recs in read_session_groups(path):
        reqs = [from_record(r) for r in recs]
        yield Session.from_requests(UserKey.of(reqs[0]), reqs, sid), recs


def stage_detect(
    in_path: str,
    out: str,
    known_bots: str | None = None,
    thresholds: Thresholds = Thresholds(),
    memory_budget: str | int | None = None,
    tmpdir: str | None = None,
) -> dict:
    known = KnownBotList.load(known_bots) if known_bots else KnownBotList.default()
    flagged = flag_ua_per_ip(read_requests(in_path), thresholds.ua_per_ip, memory_budget, tmpdir)
    table = BotTable()
    with RecordWriter(out) as writer:
        for session, _ in _group_sessions(in_path):
            verdict = classify_session(session, flagged, known, thresholds)
            table.add(session, verdict)
            for r in session.requests:
                writer.write(
                    r, session_id=session.session_id,
                    robot=verdict.is_robot, heuristics=verdict.triggered,
                )
    known_text = "\n".join(known.patterns)
    return {
        "stage": "detect",
        "thresholds": {"bs": thresholds.bs, "ih": thresholds.ih, "ua_per_ip": thresholds.ua_per_ip},
        "known_bots": {
            "patterns": len(known),
            "sha256": hashlib.sha256(known_text.encode("utf-8")).hexdigest(),
        },
        "ua_per_ip_tokens": len(flagged),
        "bots": table.to_dict(),
    }


def stage_patterns(in_path: str, dive_window_hours: float = 24.0) -> dict:
    window = timedelta(hours=dive_window_hours)
    dist = PatternDistribution()
    for session, recs in _group_sessions(in_path):
        dist.add(session, classify_pattern(session, window), bool(recs[0].get("robot")))
    return {"stage": "patterns", "dive_window_hours": dive_window_hours, "patterns": dist.rows()}


def stage_temporal(
    in_path: str, reference_date: date | None = None, year_mode: str = "calendar"
) -> dict:
    if year_mode not in YEAR_MODES:
        raise ValueError(f"unknown year mode {year_mode!r}")
    if reference_date is None:
        reference_date = modal_date(
            datetime.fromtimestamp(_parse_ts(r["timestamp"])[1], tz=timezone.utc).date()
            for r in read_records(in_path)
        )
    hists = {"human": TemporalHistogram(reference_date), "robot": TemporalHistogram(reference_date)}
    if reference_date is not None:
        for rec in read_records(in_path):
            if rec["kind"] != "memento":
                continue
            mdt = parse_memento_datetime(rec["memento_datetime"])
            hists["robot" if rec.get("robot") else "human"].add(mdt, year_mode)
    return {
        "stage": "temporal",
        "year_mode": year_mode,
        "reference_date": reference_date.isoformat() if reference_date else None,
        "human": {"buckets": hists["human"].rows("human"), "discarded_future": hists["human"].discarded_future},
        "robot": {"buckets": hists["robot"].rows("robot"), "discarded_future": hists["robot"].discarded_future},
    }


PART_FILES = {s: f"{s}.json" for s in STAGES if s != "report"}


def assemble_bundle(parts: dict[str, dict]) -> ReportBundle:
    """Build the ReportBundle from the per-stage parts."""
    missing = [s for s in PART_FILES if s not in parts]
    if missing:
        raise PipelineError("report", f"missing stage outputs: {', '.join(missing)}")
    p = parts
    features = FeatureStats.from_rows(p["parse"]["features"])
    cleaning = CleaningStats(p["clean1"]["in"], p["clean1"]["out"], p["clean2"]["out"])
    bots = BotTable.from_dict(p["detect"]["bots"])
    patterns = PatternDistribution.from_rows(p["patterns"]["patterns"])
    t = p["temporal"]
    ref = date.fromisoformat(t["reference_date"]) if t["reference_date"] else None
    hists = {}
    for sub in ("human", "robot"):
        h = TemporalHistogram(ref)
        for row in t[sub]["buckets"]:
            h.buckets[int(row["years_prior"])] = int(row["count"])
        h.discarded_future = int(t[sub]["discarded_future"])
        hists[sub] = h
    meta = {
        "inputs": p["parse"]["inputs"],
        "profile": p["parse"]["profile"],
        "format": p["parse"]["format"],
        "parse_counts": p["parse"]["counts"],
        "timeout_seconds": p["sessionize"]["timeout_seconds"],
        "sessions": p["sessionize"]["sessions"],
        "thresholds": p["detect"]["thresholds"],
        "known_bots": p["detect"]["known_bots"],
        "dive_window_hours": p["patterns"]["dive_window_hours"],
        "year_mode": t["year_mode"],
        "heuristics": list(HEURISTICS),
    }
    return ReportBundle(features, cleaning, bots, patterns, hists, meta)


def load_parts(parts_dir: str) -> dict[str, dict]:
    parts = {}
    for stage, name in PART_FILES.items():
        path = os.path.join(parts_dir, name)
        if os.path.exists(path):
            parts[stage] = read_part(path)
    return parts


# -- whole pipeline ---------------------------------------------------------


@dataclass
class PipelineConfig:
    inputs: list[str]
    out_dir: str
    archive_profile: str = "auto"
    format_hint: str = "auto"
    timeout: int = DEFAULT_TIMEOUT
    bs_threshold: float = 0.5
    ih_threshold: float = 0.1
    ua_per_ip_threshold: int = 20
    dive_window_hours: float = 24.0
    known_bots: str | None = None
    memory_budget: str | int | None = None
    tmpdir: str | None = None
    reference_date: date | None = None
    year_mode: str = "calendar"
    threads: int = 1
    emit: tuple[str, ...] = ("json", "csv", "markdown")
    resume: bool = False
    errors_out: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout <= 0 or self.dive_window_hours <= 0 or self.threads <= 0:
            raise ValueError("timeout, dive window and thread count must be positive")
        if self.archive_profile not in PROFILE_ALIASES:
            raise ValueError(f"unknown archive profile {self.archive_profile!r}")
        if self.year_mode not in YEAR_MODES:
            raise ValueError(f"unknown year mode {self.year_mode!r}")
        Thresholds(self.bs_threshold, self.ih_threshold, self.ua_per_ip_threshold)

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.bs_threshold, self.ih_threshold, self.ua_per_ip_threshold)

    def fingerprint(self) -> str:
        d = asdict(self)
        for k in ("out_dir", "resume", "threads", "emit", "tmpdir", "errors_out", "memory_budget"):
            d.pop(k)
        d["inputs"] = [_sha256_file(p) if os.path.exists(p) else p for p in self.inputs]
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def run_pipeline(config: PipelineConfig) -> ReportBundle:
    """Run every stage and write the report bundle to ``config.out_dir``.

    Intermediate record files and stage parts go to ``<out_dir>/stages``;
    with ``resume=True`` stages whose outputs already exist for the same
    configuration are skipped.
    """
    for path in config.inputs:
        if not os.access(path, os.R_OK):
            raise PipelineError("parse", f"cannot read input {path}")
    work = os.path.join(config.out_dir, "stages")
    os.makedirs(work, exist_ok=True)
    manifest_path = os.path.join(work, "manifest.json")
    fingerprint = config.fingerprint()
    resumable = config.resume and os.path.exists(manifest_path) and read_part(manifest_path).get(
        "fingerprint") == fingerprint
    if not resumable:
        for name in list(PART_FILES.values()):
            p = os.path.join(work, name)
            if os.path.exists(p):
                os.unlink(p)
    write_part(manifest_path, {"fingerprint": fingerprint})

    rec = {s: os.path.join(work, f) for s, f in RECORD_FILES.items()}
    parts: dict[str, dict] = {}

    def run(stage: str, fn, *args, **kwargs):
        part_path = os.path.join(work, PART_FILES[stage])
        out_file = rec.get(stage)
        if resumable and os.path.exists(part_path) and (out_file is None or os.path.exists(out_file)):
            logger.info("resume: skipping %s", stage)
            parts[stage] = read_part(part_path)
            return
        logger.info("running %s", stage)
        try:
            part = fn(*args, **kwargs)
        except PipelineError:
            raise
        except Exception as exc:
            counts = {s: parts[s].get("counts", parts[s].get("out")) for s in parts}
            raise PipelineError(stage, str(exc), counts) from exc
        write_part(part_path, part)
        parts[stage] = part

    run("parse", stage_parse, config.inputs, rec["parse"], config.archive_profile,
        config.format_hint, config.errors_out)
    if parts["parse"]["counts"]["parsed"] == 0:
        logger.warning("input contains no parseable requests; the report will be empty")
    run("clean1", stage_clean, rec["parse"], rec["clean1"], 1)
    run("sessionize", stage_sessionize, rec["clean1"], rec["sessionize"], config.timeout,
        config.memory_budget, config.tmpdir)
    run("detect", stage_detect, rec["sessionize"], rec["detect"], config.known_bots, config.thresholds,
        config.memory_budget, config.tmpdir)
    run("clean2", stage_clean, rec["detect"], rec["clean2"], 2)
    run("patterns", stage_patterns, rec["clean2"], config.dive_window_hours)
    run("temporal", stage_temporal, rec["clean2"], config.reference_date, config.year_mode)

    bundle = assemble_bundle(parts)
    try:
        emit_report(bundle, config.out_dir, config.emit)
    except OSError as exc:
        raise PipelineError("report", f"cannot write report: {exc}") from exc
    return bundle
