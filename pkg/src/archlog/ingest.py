"""Access-log line parsing.

Handles the Common and Combined Log Formats plus the extended variants
written by web-archive front ends: an optional virtual-host token after the
client, and arbitrary trailing fields after the User-Agent (timings, cache
status, content-type, backend host).  Trailing fields are kept verbatim in
``LogEntry.extras``.
"""

from __future__ import annotations

import gzip
import io
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from typing import Iterable, Iterator, TextIO

MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}
MONTH_NAMES = {v: k for k, v in MONTHS.items()}

KNOWN_METHODS = frozenset({"GET", "HEAD", "POST", "PROPFIND", "OPTIONS"})

FORMATS = ("auto", "clf", "clf_extended")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

# Fast path.  Everything before the timestamp is captured as one blob and
# split afterwards; the tail after status/bytes goes through _tokenize_tail.
_LINE_RE = re.compile(
    r'(?P<head>\S+(?: \S+){0,3}) \[(?P<ts>[^\]]*)\] '
    r'"(?P<req>[^"\\]*(?:\\.[^"\\]*)*)" (?P<status>\d{3})'
    r'(?: (?P<bytes>\d+|-))?'
    r'(?: "(?P<ref>[^"\\]*(?:\\.[^"\\]*)*)" "(?P<ua>[^"\\]*(?:\\.[^"\\]*)*)")?'
    r'(?P<tail>(?: .*)?)$',
    re.DOTALL,
)
_TAIL_TOKEN_RE = re.compile(r' +(?:"([^"\\]*(?:\\.[^"\\]*)*)"|(\S+))')
# well-formed tails (every quote closed) are split in one pass
_QUOTED_OR_BARE = r'"[^"\\]*(?:\\.[^"\\]*)*"|[^" ]\S*'
_TAIL_WELLFORMED_RE = re.compile(r'(?: +(?:%s))* *' % _QUOTED_OR_BARE)
_TAIL_SPLIT_RE = re.compile(_QUOTED_OR_BARE)
_HOSTLIKE_RE = re.compile(r"^[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+$")
_TS_RE = re.compile(
    r"^(\d{2})/([A-Z][a-z]{2})/(\d{4}):(\d{2}):(\d{2}):(\d{2}) ([+-])(\d{2})(\d{2})$"
)


class ParseError(ValueError):
    """A log line (or a field of one) could not be parsed.

    ``offset`` is the byte offset into the line where parsing gave up.
    """

    def __init__(self, reason: str, offset: int = 0, line: str | None = None):
        super().__init__(reason)
        self.reason = reason
        self.offset = offset
        self.line = line

    def __str__(self) -> str:
        return f"{self.reason} (at byte {self.offset})"


@dataclass(slots=True)
class LogEntry:
    client_token: str
    ident: str
    auth_user: str
    timestamp: datetime
    epoch: int
    method: str
    path: str
    http_version: str | None
    status: int
    bytes: int | None
    referrer: str | None = None
    user_agent: str | None = None
    extras: list[str] = field(default_factory=list)
    vhost: str | None = None
    # trailing quoted field ran off the end of the line
    truncated: bool = False

    @property
    def method_kind(self) -> str:
        return self.method if self.method in KNOWN_METHODS else "OTHER"

    @property
    def content_type(self) -> str | None:
        """First MIME-looking token among the extended trailing fields."""
        for tok in self.extras:
            if "/" not in tok:
                continue
            if tok.startswith('"') and tok.endswith('"') and len(tok) >= 2:
                tok = tok[1:-1]
            if _MIME_RE.match(tok):
                return tok
        return None


_MIME_RE = re.compile(r"^[A-Za-z]+/[A-Za-z0-9.+\-]+(?:\s*;.*)?$")


@lru_cache(maxsize=4096)
def _parse_day(day_token: str, offset_token: str) -> tuple[datetime, int]:
    """Midnight of ``dd/Mon/yyyy`` in the ``+zzzz`` zone, and its epoch."""
    m = _TS_RE.match(f"{day_token}:00:00:00 {offset_token}")
    if m is None:
        raise ParseError("malformed timestamp")
    day, mon, year, _, _, _, sign, oh, om = m.groups()
    month = MONTHS.get(mon)
    if month is None:
        raise ParseError(f"unknown month {mon!r}")
    minutes = int(oh) * 60 + int(om)
    if int(om) >= 60 or minutes > 24 * 60:
        raise ParseError("utc offset out of range")
    if sign == "-":
        minutes = -minutes
    try:
        tz = timezone(timedelta(minutes=minutes))
        dt = datetime(int(year), month, int(day), tzinfo=tz)
    except ValueError as exc:
        raise ParseError(f"invalid date: {exc}") from None
    return dt, int((dt - _EPOCH).total_seconds())


@lru_cache(maxsize=8192)
def _parse_ts(token: str) -> tuple[datetime, int]:
    # dd/Mon/yyyy:HH:MM:SS +zzzz; the day part is cached, the clock is not
    if len(token) != 26 or token[11] != ":" or token[20] != " ":
        raise ParseError("malformed timestamp")
    midnight, epoch = _parse_day(token[:11], token[21:])
    clock = token[12:20]
    digits = clock[:2] + clock[3:5] + clock[6:]
    if clock[2] != ":" or clock[5] != ":" or not (digits.isascii() and digits.isdigit()):
        raise ParseError("malformed timestamp")
    hh, mm, ss = int(clock[:2]), int(clock[3:5]), int(clock[6:])
    if hh > 23 or mm > 59 or ss > 59:
        raise ParseError("invalid time of day")
    secs = hh * 3600 + mm * 60 + ss
    return midnight.replace(hour=hh, minute=mm, second=ss), epoch + secs


def parse_clf_timestamp(token: str) -> datetime:
    """Parse ``dd/Mon/yyyy:HH:MM:SS +zzzz`` into an aware datetime.

    The returned datetime keeps the logged UTC offset, so
    ``format_clf_timestamp`` reproduces the token; convert with
    ``.astimezone(timezone.utc)`` for the UTC instant.
    """
    return _parse_ts(token)[0]


def format_clf_timestamp(dt: datetime) -> str:
    off = dt.utcoffset() or timedelta(0)
    minutes = int(off.total_seconds()) // 60
    sign = "-" if minutes < 0 else "+"
    minutes = abs(minutes)
    return (
        f"{dt.day:02d}/{MONTH_NAMES[dt.month]}/{dt.year:04d}:"
        f"{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d} "
        f"{sign}{minutes // 60:02d}{minutes % 60:02d}"
    )


def _split_request(req: str, offset: int) -> tuple[str, str, str | None]:
    parts = req.split(" ")
    if len(parts) >= 3 and parts[-1].startswith("HTTP/"):
        return parts[0], " ".join(parts[1:-1]), parts[-1]
    if len(parts) >= 2 and parts[0] and parts[1]:
        if parts[-1].startswith("HTTP/") and len(parts) == 2:
            # "GET/path HTTP/1.1": method glued to the path
            method, path = _split_glued(parts[0], offset)
            return method, path, parts[1]
        return parts[0], " ".join(parts[1:]), None
    if len(parts) == 1 and parts[0]:
        method, path = _split_glued(parts[0], offset)
        return method, path, None
    raise ParseError("malformed request line", offset)


def _split_glued(token: str, offset: int) -> tuple[str, str]:
    i = token.find("/")
    if i > 0 and token[:i].isalpha() and token[:i].isupper():
        return token[:i], token[i:]
    raise ParseError("malformed request line", offset)


def _tokenize_tail(tail: str, offset: int) -> tuple[list[str], bool]:
    """Split the post-bytes tail into raw tokens (quotes kept)."""
    if _TAIL_WELLFORMED_RE.fullmatch(tail):
        return _TAIL_SPLIT_RE.findall(tail), False
    tokens = []
    pos = 0
    n = len(tail)
    while pos < n:
        m = _TAIL_TOKEN_RE.match(tail, pos)
        if m is None:
            rest = tail[pos:].lstrip(" ")
            if not rest:
                break
            if rest.startswith('"'):
                # unterminated quoted field; only tolerated as the final token
                tokens.append(rest)
                return tokens, True
            raise ParseError("malformed trailing fields", offset + pos)
        if m.group(1) is None and m.group(2).startswith('"'):
            tokens.append(tail[m.start(2):])
            return tokens, True
        tokens.append(m.group(0).lstrip(" "))
        pos = m.end()
    return tokens, False


def _unquote(tok: str) -> str | None:
    if tok.startswith('"'):
        tok = tok[1:-1] if len(tok) >= 2 and tok.endswith('"') else tok[1:]
    return None if tok == "-" else tok


def parse_line(line: str, format_hint: str = "auto") -> LogEntry:
    """Parse one physical log line.

    ``format_hint`` is one of ``auto``, ``clf`` or ``clf_extended``.  ``clf``
    is strict Common/Combined format; ``clf_extended`` additionally accepts a
    virtual-host token, missing byte counts and extra trailing fields.
    ``auto`` tries the extended grammar first, then strict CLF.

    Raises ParseError for anything that is not a log line.
    """
    if format_hint not in FORMATS:
        raise ValueError(f"unknown format hint {format_hint!r}")
    if line.endswith("\n"):
        line = line[:-1]
        if line.endswith("\r"):
            line = line[:-1]
    if not line.strip():
        raise ParseError("missing fields", 0, line)
    m = _LINE_RE.match(line)
    try:
        if m is None:
            raise _diagnose(line)
        if format_hint == "clf":
            return _build(m, line, extended=False)
        try:
            return _build(m, line, extended=True)
        except ParseError:
            if format_hint == "auto":
                return _build(m, line, extended=False)
            raise
    except ParseError as exc:
        exc.line = line
        # character offset -> byte offset
        exc.offset = len(line[: exc.offset].encode("utf-8", "surrogateescape"))
        raise
    except Exception as exc:  # pragma: no cover - defensive totality guard
        raise ParseError(f"unparseable line: {exc}", 0, line) from None


def _build(m: re.Match, line: str, extended: bool) -> LogEntry:
    head, ts_token, req, status_token, raw_bytes, ref, ua, tail = m.groups()
    head = head.split(" ")
    client = head[0]
    vhost = None
    if extended:
        if len(head) == 4:
            vhost, ident, auth = head[1], head[2], head[3]
        elif len(head) == 3 and _HOSTLIKE_RE.match(head[1]):
            vhost, ident, auth = head[1], "-", head[2]
        elif len(head) == 3:
            ident, auth = head[1], head[2]
        elif len(head) == 2:
            ident, auth = "-", head[1]
        else:
            raise ParseError("missing fields", len(client))
    else:
        if len(head) != 3:
            raise ParseError("expected client, ident and auth fields", len(client))
        ident, auth = head[1], head[2]

    try:
        ts, epoch = _parse_ts(ts_token)
    except ParseError as exc:
        raise ParseError(exc.reason, m.start("ts")) from None

    method, path, version = _split_request(req, m.start("req"))
    if not extended and version is None:
        raise ParseError("request line lacks HTTP version", m.start("req"))

    status = int(status_token)
    if not 100 <= status <= 599:
        raise ParseError("status out of range", m.start("status"))

    if raw_bytes is None and not extended:
        raise ParseError("missing bytes field", m.end("status"))
    nbytes = None if raw_bytes is None or raw_bytes == "-" else int(raw_bytes)

    referrer = agent = None
    extras: list[str] = []
    truncated = False
    if ua is not None and (raw_bytes is None or (tail and tail[0] != " ")):
        # the quoted pair belongs to a malformed tail; re-tokenize all of it
        tail = line[m.end("bytes") if raw_bytes is not None else m.end("status"):]
        ua = None
    if ua is not None:
        referrer = None if ref == "-" else ref
        agent = None if ua == "-" else ua
        if tail:
            extras, truncated = _tokenize_tail(tail, m.start("tail"))
            if not extended and (extras or truncated):
                raise ParseError("unexpected trailing fields", m.start("tail"))
    elif tail:
        if raw_bytes is None:
            raise ParseError("missing bytes field", m.end("status"))
        tokens, truncated = _tokenize_tail(tail, m.start("tail"))
        if not extended:
            if truncated or len(tokens) != 2 or not all(
                t.startswith('"') for t in tokens
            ):
                raise ParseError("unexpected trailing fields", m.start("tail"))
        if tokens:
            if not tokens[0].startswith('"'):
                raise ParseError("referrer must be quoted", m.start("tail"))
            referrer = _unquote(tokens[0])
        if len(tokens) > 1:
            if not tokens[1].startswith('"'):
                raise ParseError("user-agent must be quoted", m.start("tail"))
            agent = _unquote(tokens[1])
        extras = tokens[2:]

    return LogEntry(
        client_token=client,
        ident=ident,
        auth_user=auth,
        timestamp=ts,
        epoch=epoch,
        method=method,
        path=path,
        http_version=version,
        status=status,
        bytes=nbytes,
        referrer=referrer,
        user_agent=agent,
        extras=extras,
        vhost=vhost,
        truncated=truncated,
    )


def _diagnose(line: str) -> ParseError:
    """Work out why the fast-path regex rejected a line."""
    lb = line.find("[")
    if lb < 0:
        return ParseError("missing fields", len(line), line)
    if lb == 0 or not line[:lb].strip():
        return ParseError("missing client field", 0, line)
    rb = line.find("]", lb)
    if rb < 0:
        return ParseError("unbalanced brackets", lb, line)
    q = line.find('"', rb)
    if q < 0:
        return ParseError("missing request field", rb + 1, line)
    i = q + 1
    while i < len(line):
        c = line[i]
        if c == "\\":
            i += 2
            continue
        if c == '"':
            break
        i += 1
    else:
        return ParseError("unbalanced quotes", q, line)
    rest = line[i + 1:]
    if not re.match(r" \d{3}(?: |$)", rest):
        return ParseError("missing or malformed status", i + 1, line)
    return ParseError("malformed line", i + 1, line)


def _quote(value: str | None) -> str:
    return '"-"' if value is None else f'"{value}"'


def format_line(entry: LogEntry) -> str:
    """Serialize a LogEntry back to log-line form."""
    head = [entry.client_token]
    if entry.vhost is not None:
        head.append(entry.vhost)
    head += [entry.ident, entry.auth_user]
    req = f"{entry.method} {entry.path}"
    if entry.http_version is not None:
        req += f" {entry.http_version}"
    out = f'{" ".join(head)} [{format_clf_timestamp(entry.timestamp)}] "{req}" {entry.status}'
    fields: list[str] = []
    if entry.truncated and not entry.extras:
        if entry.user_agent is not None:
            fields = [_quote(entry.referrer), '"' + entry.user_agent]
        else:
            fields = ['"' + (entry.referrer or "-")]
    elif entry.referrer is not None or entry.user_agent is not None or entry.extras:
        fields = [_quote(entry.referrer), _quote(entry.user_agent), *entry.extras]
    if entry.bytes is not None or fields:
        out += " " + ("-" if entry.bytes is None else str(entry.bytes))
    if fields:
        out += " " + " ".join(fields)
    return out


@dataclass
class ParseCounts:
    lines_in: int = 0
    parsed: int = 0
    errors: int = 0


def open_text(path: str) -> TextIO:
    """Open a plain or gzip-compressed file for reading as text.

    Bytes that are not valid UTF-8 survive as lone surrogates
    (``surrogateescape``) so nothing is lost.
    """
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        raw = gzip.open(path, "rb")
    else:
        raw = open(path, "rb")
    return io.TextIOWrapper(raw, encoding="utf-8", errors="surrogateescape", newline="\n")


def parse_lines(
    lines: Iterable[str],
    format_hint: str = "auto",
    counts: ParseCounts | None = None,
    on_error=None,
) -> Iterator[LogEntry]:
    """Parse an iterable of lines, skipping (and counting) failures.

    ``on_error(lineno, error)`` is called for every rejected line; lineno is
    zero-based within ``lines``.
    """
    if counts is None:
        counts = ParseCounts()
    for lineno, line in enumerate(lines):
        counts.lines_in += 1
        try:
            entry = parse_line(line, format_hint)
        except ParseError as exc:
            counts.errors += 1
            if on_error is not None:
                on_error(lineno, exc)
            continue
        counts.parsed += 1
        yield entry
