"""Session identification.

Requests are grouped by (client token, User-Agent) and split wherever two
consecutive requests are more than ``timeout`` seconds apart.  Grouping is
out-of-core when a memory budget is given: requests are hash-partitioned by
user key into spill shards on disk, and each shard is then sorted and
scanned on its own.  Shards that are still too large are re-partitioned
with a different hash salt.
"""

from __future__ import annotations

import hashlib
import logging
import os
import pickle
import tempfile
import zlib
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Iterable, Iterator

from .archive import IMAGE, TIMEMAP, HTML, ArchiveRequest

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600
SPILL_FANOUT = 16
MAX_SPILL_DEPTH = 6
assert SPILL_FANOUT == 16 and MAX_SPILL_DEPTH * 4 <= 32


class SessionizerError(RuntimeError):
    def __init__(self, message: str, requests_read: int, sessions_emitted: int):
        super().__init__(
            f"{message} (read {requests_read} requests, emitted {sessions_emitted} sessions)"
        )
        self.requests_read = requests_read
        self.sessions_emitted = sessions_emitted


@dataclass(frozen=True, slots=True, order=True)
class UserKey:
    client_token: str
    user_agent: str

    @classmethod
    def of(cls, request: ArchiveRequest) -> UserKey:
        entry = request.entry
        return cls(entry.client_token, entry.user_agent or "")


def session_id_for(key: UserKey, start: int) -> str:
    h = hashlib.sha1()
    h.update(key.client_token.encode("utf-8", "surrogateescape"))
    h.update(b"\0")
    h.update(key.user_agent.encode("utf-8", "surrogateescape"))
    h.update(b"\0")
    h.update(str(start).encode())
    return h.hexdigest()[:16]


@dataclass(slots=True)
class Session:
    key: UserKey
    requests: list[ArchiveRequest]
    start: int
    end: int
    html_count: int
    image_count: int
    timemap_count: int
    session_id: str

    @classmethod
    def from_requests(
        cls, key: UserKey, requests: list[ArchiveRequest], session_id: str | None = None
    ) -> Session:
        """Build a session from requests already in time order."""
        if not requests:
            raise ValueError("a session needs at least one request")
        html = image = timemaps = 0
        for r in requests:
            cls_ = r.resource_class
            if cls_ == HTML:
                html += 1
            elif cls_ == IMAGE:
                image += 1
            if r.kind == TIMEMAP:
                timemaps += 1
        start = requests[0].entry.epoch
        return cls(
            key=key,
            requests=requests,
            start=start,
            end=requests[-1].entry.epoch,
            html_count=html,
            image_count=image,
            timemap_count=timemaps,
            session_id=session_id or session_id_for(key, start),
        )

    @property
    def duration(self) -> int:
        return self.end - self.start

    @property
    def start_datetime(self) -> datetime:
        return datetime.fromtimestamp(self.start, tz=timezone.utc)

    def __len__(self) -> int:
        return len(self.requests)

    def filtered(self, keep: Callable[[ArchiveRequest], bool]) -> Session | None:
        """Same session (same id) restricted to requests passing ``keep``.

        Membership is not re-split; metrics are recomputed on survivors.
        Returns None when nothing survives.
        """
        kept = [r for r in self.requests if keep(r)]
        if not kept:
            return None
        return Session.from_requests(self.key, kept, self.session_id)


def _sort_key(r: ArchiveRequest) -> tuple[int, int]:
    return (r.entry.epoch, r.seq)


def split_user_requests(
    key: UserKey, requests: list[ArchiveRequest], timeout: int = DEFAULT_TIMEOUT
) -> list[Session]:
    """Sort one user's requests and cut them into sessions."""
    requests = sorted(requests, key=_sort_key)
    sessions = []
    current = [requests[0]]
    prev = requests[0].entry.epoch
    for r in requests[1:]:
        t = r.entry.epoch
        if t - prev > timeout:
            sessions.append(Session.from_requests(key, current))
            current = []
        current.append(r)
        prev = t
    sessions.append(Session.from_requests(key, current))
    return sessions


def _sessions_in_memory(requests: Iterable[ArchiveRequest], timeout: int) -> Iterator[Session]:
    groups: dict[UserKey, list[ArchiveRequest]] = defaultdict(list)
    for r in requests:
        groups[UserKey.of(r)].append(r)
    for key in sorted(groups):
        yield from split_user_requests(key, groups.pop(key), timeout)


def estimate_size(r: ArchiveRequest) -> int:
    """Approximate in-memory footprint of one request, in bytes.

    Calibrated against tracemalloc on parsed records: object headers and
    datetimes are about 1.25 kB, plus the text fields.
    """
    e = r.entry
    return (
        1250 + len(e.path) + len(r.uri_r or "") + len(e.user_agent or "")
        + len(e.referrer or "") + len(e.client_token) + sum(57 + len(x) for x in e.extras)
    )


def parse_size(text: str | int | None) -> int | None:
    """``"256M"`` -> 268435456.  Accepts K/M/G/T suffixes (powers of 1024)."""
    if text is None or isinstance(text, int):
        return text
    s = text.strip().upper().rstrip("B")
    mult = 1
    for suffix, m in (("K", 1 << 10), ("M", 1 << 20), ("G", 1 << 30), ("T", 1 << 40)):
        if s.endswith(suffix):
            s, mult = s[:-1], m
            break
    value = int(float(s) * mult)
    if value <= 0:
        raise ValueError(f"memory budget must be positive: {text!r}")
    return value


@dataclass
class SessionizerStats:
    requests: int = 0
    sessions: int = 0
    spilled: bool = False
    shards_written: int = 0
    max_depth: int = 0
    peak_buffered_bytes: int = 0
    oversized_keys: int = 0


def _shard_of(key: UserKey, level: int, fanout: int) -> int:
    # CRC is linear, so salting it would not change which keys collide;
    # each level reads a different 4-bit slice of the same hash instead
    data = f"{key.client_token}\0{key.user_agent}".encode("utf-8", "surrogateescape")
    return (zlib.crc32(data) >> (4 * level)) % fanout


class _ShardSet:
    """Hash-partitioned spill files for one partitioning level."""

    def __init__(self, tmpdir: str, level: int, budget: int, stats: SessionizerStats):
        self.level = level
        self.budget = budget
        self.stats = stats
        self.dir = tempfile.mkdtemp(prefix=f"archlog-l{level}-", dir=tmpdir)
        self.paths = [os.path.join(self.dir, f"shard{i:02d}.pkl") for i in range(SPILL_FANOUT)]
        self.handles = [open(p, "wb") for p in self.paths]
        self.sizes = [0] * SPILL_FANOUT
        self.buffers: list[list[ArchiveRequest]] = [[] for _ in range(SPILL_FANOUT)]
        self.buffered = 0
        stats.shards_written += SPILL_FANOUT

    def add(self, r: ArchiveRequest, size: int) -> None:
        if self.buffered + size > self.budget:
            self.flush()
        i = _shard_of(UserKey.of(r), self.level, SPILL_FANOUT)
        self.buffers[i].append(r)
        self.sizes[i] += size
        self.buffered += size
        if self.buffered > self.stats.peak_buffered_bytes:
            self.stats.peak_buffered_bytes = self.buffered

    def flush(self) -> None:
        for i, buf in enumerate(self.buffers):
            if buf:
                pickle.dump(buf, self.handles[i], protocol=pickle.HIGHEST_PROTOCOL)
                self.buffers[i] = []
        self.buffered = 0

    def close(self) -> None:
        self.flush()
        for h in self.handles:
            h.close()

    def read(self, i: int) -> Iterator[ArchiveRequest]:
        with open(self.paths[i], "rb") as fh:
            while True:
                try:
                    batch = pickle.load(fh)
                except EOFError:
                    return
                yield from batch

    def cleanup(self) -> None:
        for p in self.paths:
            try:
                os.unlink(p)
            except FileNotFoundError:
                pass
        try:
            os.rmdir(self.dir)
        except OSError:
            pass


def build_sessions(
    requests: Iterable[ArchiveRequest],
    timeout: int = DEFAULT_TIMEOUT,
    memory_budget: int | str | None = None,
    tmpdir: str | None = None,
    stats: SessionizerStats | None = None,
) -> Iterator[Session]:
    """Group requests into sessions.

    Input order does not matter; ties on timestamp are broken by
    ``request.seq``.  A new session starts whenever the gap to the user's
    previous request is strictly greater than ``timeout`` seconds.

    With ``memory_budget`` (bytes, or a string like ``"64M"``) the grouping
    spills to ``tmpdir`` (default: $ARCHLOG_TMPDIR or the system temp dir)
    once the buffered requests exceed the budget.  Session contents do not
    depend on the budget; emission order does.
    """
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    budget = parse_size(memory_budget)
    if stats is None:
        stats = SessionizerStats()
    if tmpdir is None:
        tmpdir = os.environ.get("ARCHLOG_TMPDIR") or None

    if budget is None:
        def counted():
            for r in requests:
                stats.requests += 1
                yield r
        for s in _sessions_in_memory(counted(), timeout):
            stats.sessions += 1
            yield s
        return

    buffer: list[ArchiveRequest] = []
    buffered = 0
    shards: _ShardSet | None = None
    try:
        for r in requests:
            stats.requests += 1
            size = estimate_size(r)
            if shards is None and buffered + size > budget:
                stats.spilled = True
                shards = _ShardSet(tmpdir, 0, budget, stats)
                for b in buffer:
                    shards.add(b, estimate_size(b))
                buffer = []
                buffered = 0
            if shards is None:
                buffer.append(r)
                buffered += size
                stats.peak_buffered_bytes = max(stats.peak_buffered_bytes, buffered)
            else:
                shards.add(r, size)
        if shards is None:
            for s in _sessions_in_memory(buffer, timeout):
                stats.sessions += 1
                yield s
            return
        shards.close()
    except OSError as exc:
        raise SessionizerError(f"spill storage failed: {exc}", stats.requests, stats.sessions) from exc

    yield from _drain(shards, timeout, budget, tmpdir, stats)


def _drain(
    shards: _ShardSet, timeout: int, budget: int, tmpdir: str | None, stats: SessionizerStats
) -> Iterator[Session]:
    stats.max_depth = max(stats.max_depth, shards.level)
    try:
        for i in range(SPILL_FANOUT):
            if shards.sizes[i] == 0:
                continue
            if shards.sizes[i] <= budget or shards.level + 1 >= MAX_SPILL_DEPTH:
                if shards.sizes[i] > budget:
                    # one user key larger than the budget; nothing left to split on
                    stats.oversized_keys += 1
                    logger.warning("shard %d at depth %d exceeds memory budget", i, shards.level)
                stats.peak_buffered_bytes = max(stats.peak_buffered_bytes, shards.sizes[i])
                for s in _sessions_in_memory(shards.read(i), timeout):
                    stats.sessions += 1
                    yield s
            else:
                try:
                    sub = _ShardSet(tmpdir, shards.level + 1, budget, stats)
                    for r in shards.read(i):
                        sub.add(r, estimate_size(r))
                    sub.close()
                except OSError as exc:
                    raise SessionizerError(
                        f"spill storage failed: {exc}", stats.requests, stats.sessions
                    ) from exc
                yield from _drain(sub, timeout, budget, tmpdir, stats)
    finally:
        shards.cleanup()
