"""Canonical intermediate record stream.

Newline-delimited JSON, one object per ArchiveRequest, keys always in the
order of ``FIELDS`` followed by whichever of ``OPTIONAL_FIELDS`` a stage
has filled in.  Files ending in ``.gz`` are gzip-compressed; readers detect
compression by magic bytes.
"""

from __future__ import annotations

import gzip
import io
import json
from itertools import groupby
from typing import Iterable, Iterator, TextIO

from .archive import ArchiveRequest, format_memento_datetime, parse_memento_datetime
from .ingest import LogEntry, _parse_ts, format_clf_timestamp, open_text

FIELDS = (
    "seq", "client_token", "vhost", "ident", "auth_user", "timestamp", "method",
    "path", "http_version", "status", "bytes", "referrer", "user_agent", "extras",
    "truncated", "kind", "uri_r", "memento_datetime", "resource_class",
    "is_embedded", "prefix", "stamp", "modifier",
)
OPTIONAL_FIELDS = ("session_id", "robot", "heuristics")


def to_record(req: ArchiveRequest, **extra) -> dict:
    e = req.entry
    rec = {
        "seq": req.seq,
        "client_token": e.client_token,
        "vhost": e.vhost,
        "ident": e.ident,
        "auth_user": e.auth_user,
        "timestamp": format_clf_timestamp(e.timestamp),
        "method": e.method,
        "path": e.path,
        "http_version": e.http_version,
        "status": e.status,
        "bytes": e.bytes,
        "referrer": e.referrer,
        "user_agent": e.user_agent,
        "extras": list(e.extras),
        "truncated": e.truncated,
        "kind": req.kind,
        "uri_r": req.uri_r,
        "memento_datetime": (
            None if req.memento_datetime is None else format_memento_datetime(req.memento_datetime)
        ),
        "resource_class": req.resource_class,
        "is_embedded": req.is_embedded,
        "prefix": req.prefix,
        "stamp": req.stamp,
        "modifier": req.modifier,
    }
    for key in OPTIONAL_FIELDS:
        if key in extra and extra[key] is not None:
            rec[key] = extra[key]
    return rec


def from_record(rec: dict) -> ArchiveRequest:
    ts, epoch = _parse_ts(rec["timestamp"])
    entry = LogEntry(
        client_token=rec["client_token"],
        ident=rec["ident"],
        auth_user=rec["auth_user"],
        timestamp=ts,
        epoch=epoch,
        method=rec["method"],
        path=rec["path"],
        http_version=rec["http_version"],
        status=rec["status"],
        bytes=rec["bytes"],
        referrer=rec["referrer"],
        user_agent=rec["user_agent"],
        extras=rec["extras"],
        vhost=rec["vhost"],
        truncated=rec["truncated"],
    )
    mdt = rec["memento_datetime"]
    return ArchiveRequest(
        entry=entry,
        kind=rec["kind"],
        uri_r=rec["uri_r"],
        memento_datetime=None if mdt is None else parse_memento_datetime(mdt),
        resource_class=rec["resource_class"],
        is_embedded=rec["is_embedded"],
        prefix=rec["prefix"],
        stamp=rec["stamp"],
        modifier=rec["modifier"],
        seq=rec["seq"],
    )


def dumps(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=True, separators=(",", ":"))


class _GzipOut(gzip.GzipFile):
    """Gzip writer with no file name and mtime=0 in the header, so equal
    content gives equal bytes wherever it is written."""

    def __init__(self, path: str):
        self._raw = open(path, "wb")
        super().__init__(filename="", mode="wb", fileobj=self._raw, mtime=0)

    def close(self) -> None:
        try:
            super().close()
        finally:
            self._raw.close()


def open_writer(path: str) -> TextIO:
    if path == "-":
        import sys
        return sys.stdout
    if path.endswith(".gz"):
        return io.TextIOWrapper(_GzipOut(path), encoding="ascii", newline="\n")
    return open(path, "w", encoding="ascii", newline="\n")


class RecordWriter:
    def __init__(self, path: str):
        self.path = path
        self.fh = open_writer(path)
        self.count = 0

    def write(self, req: ArchiveRequest, **extra) -> None:
        self.fh.write(dumps(to_record(req, **extra)))
        self.fh.write("\n")
        self.count += 1

    def close(self) -> None:
        if self.fh is not None and self.path != "-":
            self.fh.close()
        self.fh = None

    def __enter__(self) -> RecordWriter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_records(path: str) -> Iterator[dict]:
    if path == "-":
        import sys
        fh = sys.stdin
        for line in fh:
            if line.strip():
                yield json.loads(line)
        return
    with open_text(path) as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def read_requests(path: str) -> Iterator[ArchiveRequest]:
    for rec in read_records(path):
        yield from_record(rec)


def read_session_groups(path: str) -> Iterator[tuple[str, list[dict]]]:
    """Consecutive records sharing a session_id, as written by sessionize."""
    for sid, group in groupby(read_records(path), key=lambda r: r.get("session_id")):
        if sid is None:
            raise ValueError(f"{path}: records are not sessionized (no session_id)")
        yield sid, list(group)


def write_requests(path: str, requests: Iterable[ArchiveRequest]) -> int:
    with RecordWriter(path) as w:
        for r in requests:
            w.write(r)
        return w.count
