"""Robot detection heuristics.

Six heuristics flag a session as a robot; any one is enough:

* known bot    -- User-Agent contains a substring from the known-bot list
* HEAD         -- the session made a HEAD request
* UA per IP    -- the client token used more than 20 distinct User-Agents
* robots.txt   -- the session fetched the archive's robots.txt
* speed        -- at least 0.5 HTML requests per second
* image/HTML   -- fewer than one image per ten HTML requests
"""

from __future__ import annotations

import os
import pickle
import tempfile
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Iterable, Iterator

from .archive import ROBOTS_TXT, ArchiveRequest
from .sessionize import Session, parse_size

HEURISTICS = ("known_bot", "head_method", "ua_per_ip", "robots_txt", "browsing_speed", "ih_ratio")
BUILTIN_KEYWORDS = ("bot", "crawler", "spider")

DEFAULT_BS_THRESHOLD = 0.5
DEFAULT_IH_THRESHOLD = 0.1
DEFAULT_UA_PER_IP_THRESHOLD = 20


@dataclass(frozen=True)
class Thresholds:
    bs: float = DEFAULT_BS_THRESHOLD
    ih: float = DEFAULT_IH_THRESHOLD
    ua_per_ip: int = DEFAULT_UA_PER_IP_THRESHOLD

    def __post_init__(self):
        if self.bs <= 0 or self.ih <= 0 or self.ua_per_ip <= 0:
            raise ValueError("thresholds must be positive")

    # exact rationals so 0.5 and 0.1 compare without float drift
    @property
    def bs_exact(self) -> Fraction:
        return Fraction(str(self.bs))

    @property
    def ih_exact(self) -> Fraction:
        return Fraction(str(self.ih))


class KnownBotList:
    """Case-insensitive substring patterns for robot User-Agents."""

    def __init__(self, patterns: Iterable[str], include_builtin: bool = True):
        seen: dict[str, None] = {}
        if include_builtin:
            for kw in BUILTIN_KEYWORDS:
                seen[kw] = None
        for p in patterns:
            p = p.strip().lower()
            if p and not p.startswith("#"):
                seen[p] = None
        if not seen:
            raise ValueError("known-bot list is empty")
        self.patterns = list(seen)
        self._cache: dict[str, bool] = {}

    @classmethod
    def load(cls, path: str) -> KnownBotList:
        with open(path, encoding="utf-8") as fh:
            return cls(fh)

    @classmethod
    def default(cls) -> KnownBotList:
        text = resources.files("archlog").joinpath("data/known_bots.txt").read_text("utf-8")
        return cls(text.splitlines())

    def __len__(self) -> int:
        return len(self.patterns)

    def matches(self, user_agent: str | None) -> bool:
        if not user_agent:
            return False
        hit = self._cache.get(user_agent)
        if hit is None:
            ua = user_agent.lower()
            hit = any(p in ua for p in self.patterns)
            if len(self._cache) < 200_000:
                self._cache[user_agent] = hit
        return hit


def is_self_identified(user_agent: str | None) -> bool:
    """UA carries one of the built-in robot keywords (bot/crawler/spider)."""
    if not user_agent:
        return False
    ua = user_agent.lower()
    return "bot" in ua or "crawler" in ua or "spider" in ua


def flag_known_bot(user_agent: str | None, known: KnownBotList) -> bool:
    return known.matches(user_agent)


def flag_head(request: ArchiveRequest) -> bool:
    return request.entry.method == "HEAD"


class UAPerIPCounter:
    """Streaming distinct-User-Agent count per client token.

    Sets stop growing once they pass the threshold, so memory stays bounded
    by threshold+1 UAs per token.
    """

    def __init__(self, threshold: int = DEFAULT_UA_PER_IP_THRESHOLD):
        self.threshold = threshold
        self._uas: dict[str, set[str]] = defaultdict(set)

    def add(self, request: ArchiveRequest) -> None:
        uas = self._uas[request.entry.client_token]
        if len(uas) <= self.threshold:
            uas.add(request.entry.user_agent or "")

    def update(self, requests: Iterable[ArchiveRequest]) -> UAPerIPCounter:
        for r in requests:
            self.add(r)
        return self

    def flagged(self) -> set[str]:
        return {tok for tok, uas in self._uas.items() if len(uas) > self.threshold}


def flag_ua_per_ip(
    corpus: Iterable[ArchiveRequest],
    threshold: int = DEFAULT_UA_PER_IP_THRESHOLD,
    memory_budget: int | str | None = None,
    tmpdir: str | None = None,
) -> set[str]:
    """Client tokens seen with more than ``threshold`` distinct User-Agents.

    With a ``memory_budget`` the distinct (token, UA) pairs are spilled to
    disk, partitioned by token, whenever they outgrow the budget; only the
    flagged tokens are held in memory at the end.
    """
    budget = parse_size(memory_budget)
    if budget is None:
        return UAPerIPCounter(threshold).update(corpus).flagged()
    pairs = ((r.entry.client_token, r.entry.user_agent or "") for r in corpus)
    return _flag_pairs(pairs, threshold, budget, tmpdir or os.environ.get("ARCHLOG_TMPDIR"), 0)


_PAIR_FANOUT = 16
_PAIR_MAX_DEPTH = 6


def _pair_size(token: str, ua: str) -> int:
    return 120 + 2 * (len(token) + len(ua))


def _flag_pairs(pairs: Iterable[tuple[str, str]], threshold: int, budget: int,
                tmpdir: str | None, level: int) -> set[str]:
    uas: dict[str, set[str]] = defaultdict(set)
    used = 0
    spill_dir = None
    files = sizes = None
    for tok, ua in pairs:
        seen = uas[tok]
        if len(seen) > threshold or ua in seen:
            continue
        seen.add(ua)
        used += _pair_size(tok, ua)
        if used >= budget and level < _PAIR_MAX_DEPTH:
            if spill_dir is None:
                spill_dir = tempfile.mkdtemp(prefix=f"archlog-ua{level}-", dir=tmpdir)
                files = [open(os.path.join(spill_dir, f"p{i:02d}.pkl"), "wb") for i in range(_PAIR_FANOUT)]
                sizes = [0] * _PAIR_FANOUT
            _spill_pairs(uas, files, sizes, level)
            uas = defaultdict(set)
            used = 0
    if spill_dir is None:
        return {tok for tok, s in uas.items() if len(s) > threshold}
    _spill_pairs(uas, files, sizes, level)
    flagged: set[str] = set()
    try:
        for f in files:
            f.close()
        for i in range(_PAIR_FANOUT):
            if sizes[i]:
                flagged |= _flag_pairs(_read_pairs(files[i].name), threshold, budget, tmpdir, level + 1)
    finally:
        for f in files:
            os.unlink(f.name)
        os.rmdir(spill_dir)
    return flagged


def _spill_pairs(uas: dict[str, set[str]], files, sizes: list[int], level: int) -> None:
    batches: list[list[tuple[str, str]]] = [[] for _ in files]
    for tok, s in uas.items():
        # one 4-bit slice of the hash per level (see sessionize._shard_of)
        i = (zlib.crc32(tok.encode("utf-8", "surrogateescape")) >> (4 * level)) % len(files)
        for ua in s:
            batches[i].append((tok, ua))
            sizes[i] += _pair_size(tok, ua)
    for f, batch in zip(files, batches):
        if batch:
            pickle.dump(batch, f, protocol=pickle.HIGHEST_PROTOCOL)


def _read_pairs(path: str) -> Iterator[tuple[str, str]]:
    with open(path, "rb") as fh:
        while True:
            try:
                yield from pickle.load(fh)
            except EOFError:
                return


def flag_robots_txt(session: Session) -> bool:
    return any(r.kind == ROBOTS_TXT for r in session.requests)


def session_browsing_speed(session: Session) -> float | None:
    """HTML requests per second; ``inf`` for several HTML hits in one second.

    None when the session spans zero seconds with at most one HTML request.
    """
    if session.duration == 0:
        return float("inf") if session.html_count >= 2 else None
    return session.html_count / session.duration


def flag_browsing_speed(session: Session, threshold: float = DEFAULT_BS_THRESHOLD) -> bool:
    if session.duration == 0:
        return session.html_count >= 2
    return session.html_count >= Fraction(str(threshold)) * session.duration


def session_ih_ratio(session: Session) -> float | None:
    """Images per HTML request, None without HTML requests."""
    if session.html_count == 0:
        return None
    return session.image_count / session.html_count


def flag_ih_ratio(session: Session, threshold: float = DEFAULT_IH_THRESHOLD) -> bool:
    if session.html_count == 0:
        return False
    return session.image_count < Fraction(str(threshold)) * session.html_count


@dataclass
class BotVerdict:
    known_bot: bool = False
    head_method: bool = False
    ua_per_ip: bool = False
    robots_txt: bool = False
    browsing_speed: bool = False
    ih_ratio: bool = False
    # requests in the session, attributed to every heuristic that fired
    request_counts: dict[str, int] = field(default_factory=dict)

    @property
    def is_robot(self) -> bool:
        return (
            self.known_bot or self.head_method or self.ua_per_ip
            or self.robots_txt or self.browsing_speed or self.ih_ratio
        )

    @property
    def triggered(self) -> list[str]:
        return [h for h in HEURISTICS if getattr(self, h)]


def classify_session(
    session: Session,
    ua_per_ip_tokens: set[str] | frozenset[str],
    known: KnownBotList,
    thresholds: Thresholds = Thresholds(),
) -> BotVerdict:
    """Run all six heuristics on a Stage-1 session."""
    v = BotVerdict()
    # UA and client token are constant within a session
    v.known_bot = known.matches(session.key.user_agent)
    v.ua_per_ip = session.key.client_token in ua_per_ip_tokens
    for r in session.requests:
        if r.entry.method == "HEAD":
            v.head_method = True
        if r.kind == ROBOTS_TXT:
            v.robots_txt = True
    v.browsing_speed = flag_browsing_speed(session, thresholds.bs)
    v.ih_ratio = flag_ih_ratio(session, thresholds.ih)
    n = len(session.requests)
    v.request_counts = {h: n for h in v.triggered}
    return v
