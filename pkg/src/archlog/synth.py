"""Synthetic web-archive access logs with known answers.

A corpus is described by a list of session blueprints: how many sessions,
human or robot, which detection heuristics each robot session should trip,
which access pattern its cleaned requests should form, and which years its
mementos come from.  Every session gets its own user key, so the planted
sessions are exactly the sessions the pipeline will reconstruct.

Sessions are built in two layers:

* core requests -- GET 200/404/503 HTML mementos and TimeMaps.  They survive
  Stage-2 cleaning and alone determine the access pattern and the temporal
  histogram.
* decoration -- embedded images/CSS/JS, 302 redirects, HEAD requests and
  robots.txt hits.  Stage 2 drops all of them, but bot detection sees them,
  which is how the planted heuristics are switched on and off.
"""

from __future__ import annotations

import gzip
import json
import math
import os
import random
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

from .bots import HEURISTICS
from .ingest import format_clf_timestamp
from .patterns import (
    DIP, DIVE, DIVE_SKIM, DIVE_SLIDE, DIVE_SLIDE_SKIM, LABELS, SKIM, SKIM_SLIDE, SLIDE, UNKNOWN,
)
from .sessionize import UserKey, session_id_for
from .temporal import years_prior

MIN_CORE = {
    DIP: 1, SLIDE: 2, DIVE: 2, SKIM: 2, DIVE_SLIDE: 3, DIVE_SKIM: 4,
    SKIM_SLIDE: 4, DIVE_SLIDE_SKIM: 5, UNKNOWN: 2,
}
UA_GROUP_MIN = 21  # one more than the default distinct-UA threshold

HUMAN_AGENTS = (
    "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:48.0) Gecko/20100101 Firefox/48.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/70.0.3538.102 Safari/537.36 OPR/57.0.3098.116",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_14_2) AppleWebKit/605.1.15 (KHTML, like Gecko) "
    "Version/12.0.2 Safari/605.1.15",
    "Mozilla/5.0 (Windows NT 6.1; WOW64; Trident/7.0; rv:11.0) like Gecko",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 12_1 like Mac OS X) AppleWebKit/605.1.15 "
    "(KHTML, like Gecko) Version/12.0 Mobile/15E148 Safari/604.1",
)
# robots that do not announce themselves
STEALTH_AGENTS = (
    "RSS Scout 0.9.2",
    "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1; SV1)",
    "Mozilla/5.0 (Windows NT 6.1; rv:45.0) Gecko/20100101 Firefox/45.0",
)
BOT_AGENTS = (
    "Twitterbot/1.0",
    "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)",
    "Mozilla/5.0 (compatible; bingbot/2.0; +http://www.bing.com/bingbot.htm)",
    "ExampleCrawler/3.1 (+http://crawler.example.org/)",
    "Wget/1.19.4 (linux-gnu)",
)

_CONTENT_TYPES = {
    "html": '"text/html; charset=utf-8"',
    "image": '"image/png"',
    "stylesheet": '"text/css"',
    "script": '"application/javascript"',
    "robots": '"text/plain"',
}


class BlueprintError(ValueError):
    pass


@dataclass
class Blueprint:
    count: int
    user_kind: str
    pattern: str
    triggers: frozenset[str] = frozenset()
    memento_years: dict[int, float] = field(default_factory=dict)
    size: int | None = None

    def validate(self, log_year: int) -> None:
        if self.count <= 0:
            raise BlueprintError("blueprint count must be positive")
        if self.user_kind not in ("human", "robot"):
            raise BlueprintError(f"user_kind must be human or robot, not {self.user_kind!r}")
        if self.pattern not in LABELS:
            raise BlueprintError(f"unknown pattern {self.pattern!r}")
        bad = set(self.triggers) - set(HEURISTICS)
        if bad:
            raise BlueprintError(f"unknown heuristics: {sorted(bad)}")
        if self.user_kind == "human" and self.triggers:
            raise BlueprintError("human blueprints cannot trigger heuristics")
        if self.user_kind == "robot" and not self.triggers:
            raise BlueprintError("robot blueprints need at least one trigger")
        if "ua_per_ip" in self.triggers and self.count < UA_GROUP_MIN:
            raise BlueprintError(
                f"ua_per_ip needs at least {UA_GROUP_MIN} sessions sharing an IP"
            )
        minimum = MIN_CORE[self.pattern]
        if self.size is not None:
            if self.size < minimum or (self.pattern == DIP and self.size != 1):
                raise BlueprintError(
                    f"{self.pattern} is not realizable with {self.size} requests"
                )
        if not self.memento_years and self.pattern != SKIM:
            raise BlueprintError("memento_years must not be empty")
        if any(w < 0 for w in self.memento_years.values()) or (
            self.memento_years and sum(self.memento_years.values()) <= 0
        ):
            raise BlueprintError("memento_years weights must be positive")


@dataclass
class SynthSpec:
    seed: int
    log_date: date
    blueprints: list[Blueprint]
    archive_profile: str = "ia"
    noise_lines: int = 0
    malformed_lines: int = 0
    dive_window_hours: float = 24.0

    def validate(self) -> None:
        if self.archive_profile not in ("ia", "arquivo"):
            raise BlueprintError("archive_profile must be ia or arquivo")
        if not self.blueprints:
            raise BlueprintError("no blueprints")
        for bp in self.blueprints:
            bp.validate(self.log_date.year)

    @classmethod
    def from_dict(cls, d: dict) -> SynthSpec:
        bps = []
        for b in d["blueprints"]:
            bps.append(Blueprint(
                count=int(b["count"]),
                user_kind=b["user_kind"],
                pattern=b["pattern"],
                triggers=frozenset(b.get("triggers", b.get("trigger_heuristics", ())) or ()),
                memento_years={int(k): float(v) for k, v in (b.get("memento_years") or {}).items()},
                size=b.get("size"),
            ))
        log_date = d["log_date"]
        if not isinstance(log_date, date):
            log_date = date.fromisoformat(str(log_date))
        return cls(
            seed=int(d.get("seed", 0)),
            log_date=log_date,
            blueprints=bps,
            archive_profile=d.get("archive_profile", "ia"),
            noise_lines=int(d.get("noise_lines", 0)),
            malformed_lines=int(d.get("malformed_lines", 0)),
            dive_window_hours=float(d.get("dive_window_hours", 24.0)),
        )

    @classmethod
    def load(cls, path: str) -> SynthSpec:
        import yaml

        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass
class _Req:
    offset: float  # seconds from session start, assigned late
    method: str
    kind: str  # memento | timemap | robots
    cls: str  # html | image | stylesheet | script | robots
    uri: str
    when: datetime | None
    status: int
    core: bool


class _Generator:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.window = timedelta(hours=spec.dive_window_hours)
        self.ip_counter = 0
        self.site_counter = 0
        self.lines: list[tuple[int, int, str]] = []  # (epoch, tiebreak, line)
        self.truth_sessions: dict[str, dict] = {}
        self.temporal = {"human": Counter(), "robot": Counter()}
        self.future = {"human": 0, "robot": 0}
        self.day_start = int(datetime(
            spec.log_date.year, spec.log_date.month, spec.log_date.day, tzinfo=timezone.utc
        ).timestamp())

    # -- identities ----------------------------------------------------------

    def _new_ip(self) -> str:
        self.ip_counter += 1
        n = self.ip_counter
        return f"10.{(n >> 16) & 255}.{(n >> 8) & 255}.{n & 255}_0_0"

    def _site(self) -> str:
        self.site_counter += 1
        return f"http://www.site{self.site_counter}.example.org"

    def _page(self, site: str) -> str:
        r = self.rng.random()
        if r < 0.3:
            return site + "/"
        if r < 0.6:
            return f"{site}/page{self.rng.randrange(1000)}.html"
        if r < 0.8:
            return f"{site}/news/item{self.rng.randrange(1000)}.php?id={self.rng.randrange(99)}"
        return f"{site}/section{self.rng.randrange(50)}/"

    # -- memento datetimes ---------------------------------------------------

    def _year(self, bp: Blueprint) -> int:
        years = sorted(bp.memento_years)
        return self.rng.choices(years, weights=[bp.memento_years[y] for y in years])[0]

    def _anchor(self, bp: Blueprint) -> datetime:
        year = self._year(bp)
        day = self.rng.randrange(355)
        secs = self.rng.randrange(86400)
        return datetime(year, 1, 1, tzinfo=timezone.utc) + timedelta(days=day, seconds=secs)

    def _near(self, anchor: datetime) -> datetime:
        limit = int(self.window.total_seconds() * 0.9)
        return anchor + timedelta(seconds=self.rng.randrange(1, max(2, limit)))

    def _far(self, bp: Blueprint, others: list[datetime]) -> datetime:
        for _ in range(1000):
            d = self._anchor(bp)
            if all(abs(d - o) > self.window * 1.5 for o in others):
                return d
        raise BlueprintError("memento_years too narrow to place far-apart mementos")

    # -- core requests -------------------------------------------------------

    def _memento(self, uri: str, when: datetime) -> _Req:
        status = self.rng.choices((200, 404, 503), weights=(90, 8, 2))[0]
        return _Req(0, "GET", "memento", "html", uri, when, status, True)

    def _timemap(self, uri: str) -> _Req:
        return _Req(0, "GET", "timemap", "html", uri, None, 200, True)

    def _core(self, bp: Blueprint) -> list[_Req]:
        rng = self.rng
        pat = bp.pattern
        n = bp.size if bp.size is not None else MIN_CORE[pat] + (0 if pat == DIP else rng.randrange(4))
        site = self._site()
        out: list[_Req] = []

        def dive_part(k: int) -> list[_Req]:
            anchor = self._anchor(bp)
            uris = []
            while len(uris) < k:
                u = self._page(site)
                if u not in uris:
                    uris.append(u)
            whens = [anchor] + [self._near(anchor) for _ in range(k - 1)]
            return [self._memento(u, w) for u, w in zip(uris, whens)]

        def slide_part(k: int, uri: str | None = None) -> list[_Req]:
            uri = uri or self._page(site)
            whens = [self._anchor(bp)]
            whens.append(self._far(bp, whens))
            while len(whens) < k:
                whens.append(self._anchor(bp) if rng.random() < 0.5 else rng.choice(whens))
            return [self._memento(uri, w) for w in whens]

        def timemaps(k: int) -> list[_Req]:
            return [self._timemap(self._page(self._site())) for _ in range(k)]

        if pat == DIP:
            if bp.memento_years and rng.random() < 0.7:
                out = [self._memento(self._page(site), self._anchor(bp))]
            else:
                out = [self._timemap(self._page(site))]
        elif pat == SLIDE:
            tm = n >= 3 and rng.random() < 0.3
            out = slide_part(n - tm)
            if tm:
                out.append(self._timemap(out[0].uri))
        elif pat == DIVE:
            tm = n >= 3 and rng.random() < 0.3
            out = dive_part(n - tm)
            if tm:
                out += timemaps(1)
        elif pat == SKIM:
            one = n >= 3 and bp.memento_years and rng.random() < 0.3
            out = timemaps(n - one)
            if one:
                out.append(self._memento(self._page(site), self._anchor(bp)))
        elif pat == DIVE_SLIDE:
            out = self._dive_slide(bp, site, n)
        elif pat == DIVE_SKIM:
            k = rng.randrange(2, n - 1)
            out = dive_part(k) + timemaps(n - k)
        elif pat == SKIM_SLIDE:
            k = rng.randrange(2, n - 1)
            out = slide_part(k) + timemaps(n - k)
        elif pat == DIVE_SLIDE_SKIM:
            k = rng.randrange(3, n - 1)
            out = self._dive_slide(bp, site, k) + timemaps(n - k)
        elif pat == UNKNOWN:
            out = self._unknown(bp, site, n)
        rng.shuffle(out)
        return out

    def _dive_slide(self, bp: Blueprint, site: str, n: int) -> list[_Req]:
        d1 = self._anchor(bp)
        r1 = self._page(site)
        r2 = r1
        while r2 == r1:
            r2 = self._page(site)
        d2 = self._far(bp, [d1])
        out = [self._memento(r1, d1), self._memento(r2, self._near(d1)), self._memento(r1, d2)]
        while len(out) < n:
            out.append(self._memento(r1, self._anchor(bp)))
        return out

    def _unknown(self, bp: Blueprint, site: str, n: int) -> list[_Req]:
        rng = self.rng
        variant = rng.randrange(3)
        if variant == 0 or n > 3:
            # distinct URI-Rs, pairwise far apart, at most one TimeMap
            tm = rng.random() < 0.3
            whens: list[datetime] = []
            uris: list[str] = []
            for _ in range(n - tm):
                whens.append(self._far(bp, whens))
                u = self._page(site)
                while u in uris:
                    u = self._page(site)
                uris.append(u)
            out = [self._memento(u, w) for u, w in zip(uris, whens)]
            if tm:
                out.append(self._timemap(self._page(self._site())))
            return out
        if variant == 1:
            # the same URI-M reloaded
            uri, when = self._page(site), self._anchor(bp)
            return [self._memento(uri, when) for _ in range(n)]
        # one memento plus one TimeMap (possibly of the same URI-R), then reloads
        uri = self._page(site)
        when = self._anchor(bp)
        out = [self._memento(uri, when), self._timemap(uri if rng.random() < 0.5 else self._page(site))]
        while len(out) < n:
            out.append(self._memento(uri, when))
        return out

    # -- decoration and timing -----------------------------------------------

    def _decorate(self, bp: Blueprint, core: list[_Req]) -> list[_Req]:
        rng = self.rng
        reqs = list(core)
        html_pages = [r for r in core if r.kind == "memento"] or core
        stamp_year = self.spec.log_date.year - rng.randrange(6)
        deco_when = datetime(stamp_year, 1, 1, tzinfo=timezone.utc) + timedelta(
            days=rng.randrange(360), seconds=rng.randrange(86400))

        if "head_method" in bp.triggers:
            page = rng.choice(html_pages)
            reqs.append(_Req(0, "HEAD", "memento", "html", page.uri, page.when or deco_when, 200, False))
        if "robots_txt" in bp.triggers:
            reqs.append(_Req(0, "GET", "robots", "robots", "", None, 200, False))
        if rng.random() < 0.3:
            # redirect to the nearest memento: counted as HTML, purged at stage 2
            page = rng.choice(html_pages)
            reqs.append(_Req(0, "GET", "memento", "html", page.uri, deco_when, 302, False))
        html = sum(1 for r in reqs if r.cls == "html")
        if "browsing_speed" in bp.triggers and html < 2:
            page = rng.choice(html_pages)
            reqs.append(_Req(0, "GET", "memento", "html", page.uri, deco_when, 302, False))
            html += 1

        if "ih_ratio" not in bp.triggers:
            for i in range(max(1, math.ceil(html / 5)) + rng.randrange(3)):
                site = rng.choice(html_pages).uri.split("/", 3)
                base = "/".join(site[:3])
                reqs.append(_Req(0, "GET", "memento", "image", f"{base}/img/pic{i}.png",
                                 deco_when, 200, False))
        if rng.random() < 0.5:
            base = "/".join(rng.choice(html_pages).uri.split("/", 3)[:3])
            cls, path = rng.choice((("stylesheet", "/css/main.css"), ("script", "/js/app.js")))
            reqs.append(_Req(0, "GET", "memento", cls, base + path, deco_when, 200, False))

        # core requests keep their relative order; decoration is sprinkled in
        deco = reqs[len(core):]
        out = list(core)
        for d in deco:
            out.insert(rng.randrange(len(out) + 1), d)
        html = sum(1 for r in out if r.cls == "html")
        if "browsing_speed" in bp.triggers:
            span = 2 * html - 1  # duration < 2 * html keeps the rate above 0.5/s
            offsets = sorted(rng.randrange(span + 1) if span > 0 else 0 for _ in out)
        else:
            t = 0
            offsets = []
            for _ in out:
                offsets.append(t)
                t += rng.randrange(5, 31)
        for r, off in zip(out, offsets):
            r.offset = off
        return out

    # -- rendering -----------------------------------------------------------

    def _path(self, r: _Req) -> str:
        ia = self.spec.archive_profile == "ia"
        prefix = "/web" if ia else "/wayback"
        if ia and self.rng.random() < 0.1:
            prefix = "http://web.archive.org/web"
        if r.kind == "robots":
            return "/robots.txt" if self.rng.random() < 0.8 else f"/robots.txt?v={self.rng.randrange(9)}"
        if r.kind == "timemap":
            if self.rng.random() < 0.7:
                return f"{prefix}/*/{r.uri}"
            return f"{prefix}/{self.spec.log_date.year}0101000000*/{r.uri}"
        stamp = r.when.strftime("%Y%m%d%H%M%S")
        mod = ""
        if r.cls == "image" and self.rng.random() < 0.5:
            mod = "im_"
        elif r.cls == "stylesheet":
            mod = "cs_"
        elif r.cls == "script":
            mod = "js_"
        return f"{prefix}/{stamp}{mod}/{r.uri}"

    def _line(self, ip: str, ua: str, epoch: int, r: _Req, referrer: str) -> str:
        ia = self.spec.archive_profile == "ia"
        tz = timezone.utc if ia else timezone(timedelta(hours=1))
        ts = format_clf_timestamp(datetime.fromtimestamp(epoch, tz))
        nbytes = "-" if r.method == "HEAD" else str(self.rng.randrange(200, 60000))
        if r.status == 302:
            nbytes = "0"
        head = f"{ip} web.archive.org -" if ia else f"{ip} - -"
        line = (f'{head} [{ts}] "{r.method} {self._path(r)} HTTP/1.1" {r.status} {nbytes} '
                f'"{referrer}" "{ua}"')
        if ia:
            ctype = _CONTENT_TYPES[r.cls]
            line += (f" {self.rng.random():.3f} {self.rng.choice(('HIT', 'MISS'))} - {ctype} - "
                     f'"-" "-" "wwwb-app{self.rng.randrange(10, 120)}" "-"')
        return line

    # -- driver --------------------------------------------------------------

    def _emit_session(self, bp: Blueprint, ip: str, ua: str) -> None:
        reqs = self._decorate(bp, self._core(bp))
        start = self.day_start + self.rng.randrange(2 * 3600, 20 * 3600)
        key = UserKey(ip, ua)
        sid = session_id_for(key, start + int(reqs[0].offset))
        ia = self.spec.archive_profile == "ia"
        host = "https://web.archive.org" if ia else "https://arquivo.pt"
        prev_page = "-"
        for r in reqs:
            epoch = start + int(r.offset)
            referrer = prev_page if r.cls == "html" else (prev_page if prev_page != "-" else "-")
            self.lines.append((epoch, len(self.lines), self._line(ip, ua, epoch, r, referrer)))
            if r.kind == "memento" and r.cls == "html" and r.status == 200:
                stamp = r.when.strftime("%Y%m%d%H%M%S")
                prev_page = f"{host}{'/web' if ia else '/wayback'}/{stamp}/{r.uri}"
        sub = bp.user_kind
        for r in reqs:
            if r.core and r.kind == "memento":
                n = years_prior(r.when, self.spec.log_date)
                if n is None:
                    self.future[sub] += 1
                else:
                    self.temporal[sub][n] += 1
        self.truth_sessions[sid] = {
            "user_kind": bp.user_kind,
            "triggers": sorted(bp.triggers),
            "pattern": bp.pattern,
            "core_requests": sum(1 for r in reqs if r.core),
            "requests": len(reqs),
        }

    def _agents(self, bp: Blueprint, n: int) -> list[str]:
        rng = self.rng
        if "ua_per_ip" in bp.triggers:
            if "known_bot" in bp.triggers:
                return [f"ExampleBot/{i}.{rng.randrange(10)} (+http://bot.example.org)" for i in range(n)]
            return [f"Mozilla/5.0 (Windows NT 6.1; rv:{30 + i}.0) Gecko/20100101 Firefox/{30 + i}.0"
                    for i in range(n)]
        if "known_bot" in bp.triggers:
            pool = BOT_AGENTS
        elif bp.user_kind == "robot":
            pool = STEALTH_AGENTS
        else:
            pool = HUMAN_AGENTS
        return [rng.choice(pool) for _ in range(n)]

    def generate(self) -> None:
        for bp in self.spec.blueprints:
            if "ua_per_ip" in bp.triggers:
                groups = bp.count // UA_GROUP_MIN
                sizes = [bp.count // groups + (1 if i < bp.count % groups else 0) for i in range(groups)]
                for size in sizes:
                    ip = self._new_ip()
                    for ua in self._agents(bp, size):
                        self._emit_session(bp, ip, ua)
            else:
                for ua in self._agents(bp, bp.count):
                    self._emit_session(bp, self._new_ip(), ua)
        self._noise()
        self.lines.sort(key=lambda t: (t[0], t[1]))

    def _noise(self) -> None:
        rng = self.rng
        ia = self.spec.archive_profile == "ia"
        head = "web.archive.org -" if ia else "- -"
        tz = timezone.utc if ia else timezone(timedelta(hours=1))
        paths = ("/", "/static/css/style.css", "/search?q=archive", "/about/", "/favicon.ico",
                 "/web/", "/wayback/", "/save/http://example.org/")
        for _ in range(self.spec.noise_lines):
            epoch = self.day_start + rng.randrange(86400 - 7200) + 3600
            ts = format_clf_timestamp(datetime.fromtimestamp(epoch, tz))
            method = rng.choice(("GET", "GET", "GET", "POST", "OPTIONS", "PROPFIND"))
            status = rng.choice((200, 301, 302, 404, 500))
            self.lines.append((epoch, len(self.lines),
                               f'{self._new_ip()} {head} [{ts}] "{method} {rng.choice(paths)} HTTP/1.1" '
                               f'{status} {rng.randrange(100, 9000)} "-" "{rng.choice(HUMAN_AGENTS)}"'))
        for i in range(self.spec.malformed_lines):
            epoch = self.day_start + 3600 + i
            junk = rng.choice((
                "", "garbage line without structure",
                f'{self._new_ip()} - - [07/Foo/2019:00:00:00 +0000] "GET / HTTP/1.1" 200 1',
                f'{self._new_ip()} - - [07/Feb/2019:00:00:00 +0000] "GET /unterminated 200 1',
            ))
            self.lines.append((epoch, len(self.lines), junk))


def generate_corpus(spec: SynthSpec, out_dir: str, gzip_log: bool = False) -> tuple[str, str]:
    """Write ``access.log`` and ``truth.json`` into ``out_dir``.

    Identical specs (same seed) give byte-identical files.
    """
    spec.validate()
    gen = _Generator(spec)
    gen.generate()
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "access.log" + (".gz" if gzip_log else ""))
    text = "".join(line + "\n" for _, _, line in gen.lines)
    if gzip_log:
        with open(log_path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as fh:
            fh.write(text.encode("utf-8"))
    else:
        with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    truth = {
        "seed": spec.seed,
        "log_date": spec.log_date.isoformat(),
        "archive_profile": spec.archive_profile,
        "lines": len(gen.lines),
        "malformed_lines": spec.malformed_lines,
        "noise_lines": spec.noise_lines,
        "sessions": gen.truth_sessions,
        "temporal": {
            sub: {
                "buckets": {str(k): v for k, v in sorted(gen.temporal[sub].items())},
                "discarded_future": gen.future[sub],
            }
            for sub in ("human", "robot")
        },
    }
    truth_path = os.path.join(out_dir, "truth.json")
    with open(truth_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return log_path, truth_path
