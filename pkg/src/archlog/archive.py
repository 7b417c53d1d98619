"""Web-archive semantics for parsed log entries.

Recognizes Wayback-style replay paths::

    <prefix>/<14-digit stamp>[<modifier>_]/<URI-R>   memento (URI-M)
    <prefix>/*/<URI-R>, <prefix>/<stamp>*/<URI-R>    TimeMap (URI-T)
    <prefix>/timemap/<format>/<URI-R>                TimeMap API
    /robots.txt[?query]                              the archive's robots.txt

and classifies the requested resource (html, image, ...) so that later
stages can count HTML pages and embedded resources.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import lru_cache

from .ingest import LogEntry, ParseError

MEMENTO = "memento"
TIMEMAP = "timemap"
ROBOTS_TXT = "robots_txt"
OTHER = "other"
KINDS = (MEMENTO, TIMEMAP, ROBOTS_TXT, OTHER)

HTML = "html"
IMAGE = "image"
STYLESHEET = "stylesheet"
SCRIPT = "script"
FONT = "font"
OTHER_EMBEDDED = "other_embedded"
UNKNOWN = "unknown"
RESOURCE_CLASSES = (HTML, IMAGE, STYLESHEET, SCRIPT, FONT, OTHER_EMBEDDED, UNKNOWN)

PROFILES = {
    "ia_wayback": ("/web",),
    "arquivo": ("/wayback",),
    "auto": ("/web", "/wayback"),
}
PROFILE_ALIASES = {"ia": "ia_wayback", "ia_wayback": "ia_wayback", "arquivo": "arquivo", "auto": "auto"}

HTML_EXTENSIONS = frozenset({"htm", "html", "php", "asp", "aspx", "jsp"})
IMAGE_EXTENSIONS = frozenset({"png", "jpg", "jpeg", "gif", "ico", "svg", "webp", "bmp"})
FONT_EXTENSIONS = frozenset({"woff", "woff2", "ttf", "eot", "otf"})
_EXTENSION_CLASS = {
    **{e: HTML for e in HTML_EXTENSIONS},
    **{e: IMAGE for e in IMAGE_EXTENSIONS},
    **{e: FONT for e in FONT_EXTENSIONS},
    "css": STYLESHEET,
    "js": SCRIPT,
}
_MODIFIER_CLASS = {"im_": IMAGE, "cs_": STYLESHEET, "js_": SCRIPT}

_ABSOLUTE_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*://[^/]*")
_STAMP_RE = re.compile(r"^(\d{4,14})([a-z]{2}_)?$")
_WILDCARD_STAMP_RE = re.compile(r"^\d{0,14}(?:-\d{0,14})?\*$")
_TIMEMAP_API_RE = re.compile(r"^timemap/(?:[a-z]+/)?")
_MEMENTO_REFERRER_RE = re.compile(r"/(?:web|wayback)/\d{4,14}(?:[a-z]{2}_)?/")

# used to zero-extend partial stamps: yyyy -> yyyy0101000000 etc.
_STAMP_FILL = "00000101000000"


@dataclass(slots=True)
class ArchiveRequest:
    entry: LogEntry
    kind: str
    uri_r: str | None = None
    memento_datetime: datetime | None = None
    resource_class: str = UNKNOWN
    is_embedded: bool = False
    # replay prefix as it appeared in the path (scheme/host included for
    # absolute-form requests) and the raw stamp segment, modifier included
    prefix: str | None = None
    stamp: str | None = None
    modifier: str | None = None
    seq: int = 0

    def replay_path(self) -> str | None:
        """Rebuild ``<prefix>/<stamp>/<uri_r>``; equals the logged path."""
        if self.prefix is None or self.uri_r is None:
            return None
        return f"{self.prefix}/{self.stamp}/{self.uri_r}"


@lru_cache(maxsize=8192)
def parse_memento_datetime(stamp: str) -> datetime:
    """Parse a Memento-Datetime stamp (4 to 14 digits) as UTC.

    Partial stamps are zero-extended: ``2019`` -> 2019-01-01T00:00:00Z,
    ``201902`` -> 2019-02-01T00:00:00Z.
    """
    if not (4 <= len(stamp) <= 14) or not stamp.isdigit() or not stamp.isascii():
        raise ParseError(f"bad memento stamp {stamp!r}")
    full = stamp + _STAMP_FILL[len(stamp):]
    try:
        return datetime(
            int(full[0:4]), int(full[4:6]), int(full[6:8]),
            int(full[8:10]), int(full[10:12]), int(full[12:14]),
            tzinfo=timezone.utc,
        )
    except ValueError as exc:
        raise ParseError(f"invalid memento datetime {stamp!r}: {exc}") from None


def format_memento_datetime(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y%m%d%H%M%S")


def _origin_form(path: str) -> tuple[str, str]:
    """Split an absolute-form request target into (scheme://host, path)."""
    m = _ABSOLUTE_RE.match(path)
    if m is None:
        return "", path
    return m.group(0), path[m.end():] or "/"


def classify_path(entry: LogEntry, archive_profile: str = "auto", seq: int = 0) -> ArchiveRequest:
    """Decide what kind of archive request ``entry`` is.

    Total: anything unrecognized comes back as kind ``other``.  The resource
    class is filled in too (see ``classify_resource``).
    """
    prefixes = PROFILES[PROFILE_ALIASES.get(archive_profile, archive_profile)]
    origin, path = _origin_form(entry.path)

    if path == "/robots.txt" or path.startswith("/robots.txt?"):
        req = ArchiveRequest(entry, ROBOTS_TXT, seq=seq)
        req.resource_class = classify_resource(req)
        return req

    req = None
    for prefix in prefixes:
        if path.startswith(prefix) and path[len(prefix):len(prefix) + 1] == "/":
            req = _classify_replay(entry, origin + prefix, path[len(prefix) + 1:], seq)
            if req is not None:
                break
    if req is None:
        req = ArchiveRequest(entry, OTHER, seq=seq)
    req.resource_class = classify_resource(req)
    req.is_embedded = req.resource_class not in (HTML, UNKNOWN)
    return req


def _classify_replay(entry: LogEntry, prefix: str, rest: str, seq: int) -> ArchiveRequest | None:
    api = _TIMEMAP_API_RE.match(rest) if rest.startswith("timemap/") else None
    if api is not None:
        uri_r = rest[api.end():]
        if not uri_r:
            return None
        # prefix absorbs "timemap/<fmt>" so replay_path() still round-trips
        return ArchiveRequest(
            entry, TIMEMAP, uri_r=uri_r, prefix=prefix, stamp=api.group(0)[:-1], seq=seq
        )
    seg, sep, uri_r = rest.partition("/")
    if not sep or not uri_r:
        return None
    if seg.endswith("*") and _WILDCARD_STAMP_RE.match(seg):
        return ArchiveRequest(entry, TIMEMAP, uri_r=uri_r, prefix=prefix, stamp=seg, seq=seq)
    m = _STAMP_RE.match(seg)
    if m is None:
        return None
    if uri_r.endswith("*"):
        # URL-prefix listing, e.g. /web/2013/http://example.com/*
        return ArchiveRequest(entry, TIMEMAP, uri_r=uri_r, prefix=prefix, stamp=seg, seq=seq)
    try:
        when = parse_memento_datetime(m.group(1))
    except ParseError:
        return None
    return ArchiveRequest(
        entry, MEMENTO, uri_r=uri_r, memento_datetime=when,
        prefix=prefix, stamp=seg, modifier=m.group(2), seq=seq,
    )


@lru_cache(maxsize=1024)
def _class_from_content_type(ctype: str) -> str | None:
    mime = ctype.split(";", 1)[0].strip().lower()
    if mime in ("text/html", "application/xhtml+xml"):
        return HTML
    if mime.startswith("image/"):
        return IMAGE
    if mime == "text/css":
        return STYLESHEET
    if "javascript" in mime or mime == "application/ecmascript":
        return SCRIPT
    if mime.startswith("font/") or "font" in mime or mime == "application/vnd.ms-fontobject":
        return FONT
    return None


@lru_cache(maxsize=8192)
def _class_from_url(url: str) -> str | None:
    _, path = _origin_form(url)
    path = path.split("?", 1)[0].split("#", 1)[0]
    last = path.rsplit("/", 1)[-1]
    if not last or "." not in last:
        return HTML
    return _EXTENSION_CLASS.get(last.rsplit(".", 1)[-1].lower())


def classify_resource(request: ArchiveRequest) -> str:
    """Resource class of the requested object.

    Precedence: logged content-type, then replay modifier (``im_``, ``cs_``,
    ``js_``), then the file extension of the URI-R path (or of the request
    path for non-replay requests).  TimeMaps are listing pages and count as
    HTML; robots.txt is ``unknown``.  Unrecognized extensions are
    ``other_embedded`` when the referrer is a memento page, else ``unknown``.
    """
    if request.kind == ROBOTS_TXT:
        return UNKNOWN
    ctype = request.entry.content_type
    if ctype is not None:
        cls = _class_from_content_type(ctype)
        if cls is not None:
            return cls
    elif request.kind == TIMEMAP:
        return HTML
    if request.modifier in _MODIFIER_CLASS:
        return _MODIFIER_CLASS[request.modifier]
    if request.kind == TIMEMAP:
        return HTML
    cls = _class_from_url(request.uri_r if request.uri_r is not None else request.entry.path)
    if cls is not None:
        return cls
    ref = request.entry.referrer
    if ref is not None and _MEMENTO_REFERRER_RE.search(ref):
        return OTHER_EMBEDDED
    return UNKNOWN
