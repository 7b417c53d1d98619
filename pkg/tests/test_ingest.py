import gzip
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from archlog.ingest import (
    LogEntry,
    ParseCounts,
    ParseError,
    format_clf_timestamp,
    format_line,
    open_text,
    parse_clf_timestamp,
    parse_line,
    parse_lines,
)

FIG1 = (
    '128.82.7.3 - - [07/Jul/2019:04:44:14 +0100] "GET /wayback/20091223043049/http://www.cs.odu.edu/ '
    'HTTP/1.1" 200 9593 "-" "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:48.0) Gecko/20100101 Firefox/48.0"'
)
HEAD_LINE = (
    '199.16.157.100_0_0 - - [07/Jul/2019:14:00:02 +0100] "HEAD /wayback/20170625001353/'
    'http://www.fabricadochocolate.com HTTP/1.1" 200 - "-" "Twitterbot/1.0"'
)


def semantic(e: LogEntry) -> tuple:
    return (e.client_token, e.vhost, e.ident, e.auth_user, e.timestamp, e.timestamp.utcoffset(),
            e.method, e.path, e.http_version, e.status, e.bytes, e.referrer, e.user_agent,
            tuple(e.extras), e.truncated)


class TestFigureLine:
    def test_fields(self):
        e = parse_line(FIG1)
        assert e.client_token == "128.82.7.3"
        assert e.method == "GET"
        assert e.path == "/wayback/20091223043049/http://www.cs.odu.edu/"
        assert e.http_version == "HTTP/1.1"
        assert e.status == 200
        assert e.bytes == 9593
        assert e.referrer is None
        assert e.user_agent.startswith("Mozilla/5.0 (X11; Ubuntu")
        assert e.user_agent.endswith("Firefox/48.0")
        assert e.extras == []
        assert e.vhost is None

    def test_strict_clf_accepts_it(self):
        assert semantic(parse_line(FIG1, "clf")) == semantic(parse_line(FIG1))

    def test_timestamp_keeps_offset(self):
        e = parse_line(FIG1)
        assert e.timestamp.utcoffset() == timedelta(hours=1)
        assert e.timestamp.astimezone(timezone.utc) == datetime(2019, 7, 7, 3, 44, 14, tzinfo=timezone.utc)
        assert e.epoch == int(datetime(2019, 7, 7, 3, 44, 14, tzinfo=timezone.utc).timestamp())

    def test_glued_method_from_typesetting(self):
        glued = FIG1.replace('"GET /wayback', '"GET/wayback')
        e = parse_line(glued)
        assert e.method == "GET"
        assert e.path == "/wayback/20091223043049/http://www.cs.odu.edu/"


def test_head_line_missing_bytes():
    e = parse_line(HEAD_LINE)
    assert e.method == "HEAD"
    assert e.bytes is None
    assert e.user_agent == "Twitterbot/1.0"
    assert e.client_token == "199.16.157.100_0_0"


def test_every_golden_line_parses(golden):
    for section, lines in golden.items():
        assert lines, section
        for line in lines:
            parse_line(line)


def test_golden_hand_read_values(golden):
    b = [parse_line(x) for x in golden["head_method"]]
    assert {e.method for e in b} == {"HEAD"}
    assert {e.user_agent for e in b} == {"Twitterbot/1.0"}

    c = [parse_line(x) for x in golden["ua_per_ip"]]
    assert {e.method for e in c} == {"POST"}
    assert c[0].http_version == "HTTP/1.0"
    assert c[0].referrer == "http://www.vbleisure.co.uk/guest_book.html"
    assert c[-1].timestamp.astimezone(timezone.utc) == datetime(2012, 2, 2, 23, 59, 34, tzinfo=timezone.utc)
    assert c[-1].user_agent == "Opera/7.60 (Windows NT 5.2; U)  [en] (IBM EVV/3.0/EAK01AG9/LE)"

    d = [parse_line(x) for x in golden["robots_txt"]]
    assert d[0].path == "http://web.archive.org/robots.txt"
    assert d[0].user_agent == "RSS Scout 0.9.2"
    assert d[0].client_token == "0.139.100.213_2_2"

    e = [parse_line(x) for x in golden["browsing_speed"]]
    assert {x.vhost for x in e} == {"web.archive.org"}
    assert {x.bytes for x in e} == {None}
    assert {format_clf_timestamp(x.timestamp) for x in e} == {"07/Feb/2019:00:46:30 +0000"}
    assert [x.status for x in e].count(302) == 2

    f = [parse_line(x) for x in golden["ih_ratio"]]
    assert f[0].truncated and f[0].referrer == "https://archive.org/search.php?query=http"
    assert f[0].user_agent is None
    assert f[1].http_version == "HTTP/2.0"
    assert f[1].extras[:3] == ["10.859", "MISS", "10.856"]
    assert f[1].content_type == "text/html; charset=utf-8"
    assert f[1].extras[-2] == '"wwwb-app104"'


def test_golden_round_trip(golden):
    for lines in golden.values():
        for line in lines:
            e = parse_line(line)
            again = parse_line(format_line(e))
            assert semantic(again) == semantic(e), line


class TestTimestamps:
    def test_offset_arithmetic(self):
        dt = parse_clf_timestamp("07/Jul/2019:04:44:14 +0100")
        assert dt.astimezone(timezone.utc) == datetime(2019, 7, 7, 3, 44, 14, tzinfo=timezone.utc)

    def test_utc(self):
        dt = parse_clf_timestamp("02/Feb/2012:23:59:34 +0000")
        assert dt == datetime(2012, 2, 2, 23, 59, 34, tzinfo=timezone.utc)

    def test_negative_offset_round_trip(self):
        tok = "31/Dec/2018:23:59:59 -0530"
        assert format_clf_timestamp(parse_clf_timestamp(tok)) == tok
        assert parse_clf_timestamp(tok).astimezone(timezone.utc).year == 2019

    @pytest.mark.parametrize("tok", [
        "31/Feb/2019:00:00:00 +0000",
        "07/Foo/2019:00:00:00 +0000",
        "07/Jul/2019:24:00:00 +0000",
        "07/Jul/2019:00:60:00 +0000",
        "07/Jul/2019:00:00:00 +0075",
        "7/Jul/2019:00:00:00 +0000",
        "07/Jul/2019 00:00:00 +0000",
        "07/Jul/2019:0a:00:00 +0000",
    ])
    def test_rejects(self, tok):
        with pytest.raises(ParseError):
            parse_clf_timestamp(tok)

    @given(st.datetimes(min_value=datetime(1970, 1, 2), max_value=datetime(2100, 1, 1)),
           st.integers(-14 * 60, 14 * 60))
    def test_round_trip(self, naive, offset_minutes):
        dt = naive.replace(microsecond=0, tzinfo=timezone(timedelta(minutes=offset_minutes)))
        tok = format_clf_timestamp(dt)
        back = parse_clf_timestamp(tok)
        assert back == dt and back.utcoffset() == dt.utcoffset()
        assert format_clf_timestamp(back) == tok


class TestErrors:
    def test_empty_line(self):
        with pytest.raises(ParseError) as ei:
            parse_line("")
        assert ei.value.reason == "missing fields"

    def test_blank_line(self):
        with pytest.raises(ParseError, match="missing fields"):
            parse_line("   \n")

    def test_short_line(self):
        with pytest.raises(ParseError, match="missing fields"):
            parse_line("128.82.7.3 - -")

    def test_unbalanced_quotes_in_request(self):
        line = '1.2.3.4 - - [07/Jul/2019:04:44:14 +0100] "GET /x HTTP/1.1 200 10'
        with pytest.raises(ParseError) as ei:
            parse_line(line)
        assert ei.value.reason == "unbalanced quotes"
        assert ei.value.offset == line.index('"')

    def test_unbalanced_brackets(self):
        with pytest.raises(ParseError, match="unbalanced brackets"):
            parse_line('1.2.3.4 - - [07/Jul/2019:04:44:14 +0100 "GET / HTTP/1.1" 200 1')

    def test_bad_status(self):
        with pytest.raises(ParseError):
            parse_line('1.2.3.4 - - [07/Jul/2019:04:44:14 +0100] "GET / HTTP/1.1" 2x0 1')

    def test_offset_is_in_bytes(self):
        # two-byte UTF-8 character before the bad timestamp
        line = '1.2.3.4 é - [07/Foo/2019:04:44:14 +0100] "GET / HTTP/1.1" 200 1 "-" "-"'
        with pytest.raises(ParseError) as ei:
            parse_line(line)
        char_offset = line.index("[") + 1
        assert ei.value.offset == char_offset + 1
        assert "byte" in str(ei.value)

    def test_strict_clf_rejects_extended_shapes(self, golden):
        for line in golden["browsing_speed"] + golden["ih_ratio"]:
            with pytest.raises(ParseError):
                parse_line(line, "clf")

    def test_unknown_hint(self):
        with pytest.raises(ValueError):
            parse_line(FIG1, "w3c")


class TestExtended:
    def test_vhost_and_four_head_tokens(self):
        line = '1.2.3.4 web.archive.org - alice [07/Feb/2019:00:46:30 +0000] "GET /web/2019/http://a.org/ HTTP/1.1" 200 5'
        e = parse_line(line)
        assert (e.vhost, e.ident, e.auth_user) == ("web.archive.org", "-", "alice")

    def test_missing_version_allowed(self):
        e = parse_line('1.2.3.4 - - [07/Feb/2019:00:46:30 +0000] "GET /web/2019/http://a.org/" 200 5 "-" "x"')
        assert e.http_version is None
        with pytest.raises(ParseError):
            parse_line('1.2.3.4 - - [07/Feb/2019:00:46:30 +0000] "GET /web/2019/http://a.org/" 200 5 "-" "x"', "clf")

    def test_trailing_fields_verbatim(self):
        tail = ' 0.087 MISS 0.088 "text/html; charset=utf-8" - "-" "-" "wwwb-app57" "-"'
        e = parse_line(FIG1 + tail)
        assert " ".join(e.extras) == tail.strip()

    def test_escaped_quote_in_agent(self):
        line = FIG1.replace("Firefox/48.0", 'Firefox/48.0 \\"quoted\\"')
        e = parse_line(line)
        assert e.user_agent.endswith('\\"quoted\\"')
        assert semantic(parse_line(format_line(e))) == semantic(e)

    def test_referrer_only(self):
        e = parse_line('1.2.3.4 - - [07/Feb/2019:00:46:30 +0000] "GET / HTTP/1.1" 200 5 "http://r/"')
        assert e.referrer == "http://r/" and e.user_agent is None


@settings(max_examples=400, deadline=None)
@given(st.text(max_size=200))
def test_totality_random_text(text):
    try:
        e = parse_line(text)
    except ParseError as exc:
        assert exc.offset >= 0
    else:
        assert isinstance(e, LogEntry) and e.client_token


_pieces = st.sampled_from([
    " ", '"', "[", "]", "-", "GET", "/web/", "20190101000000", "HTTP/1.1", "200", "404", "12",
    "07/Feb/2019:00:46:30 +0000", "1.2.3.4", "web.archive.org", "\\", "\x00", "é", "\udcff",
])


@settings(max_examples=400, deadline=None)
@given(st.lists(_pieces, max_size=25))
def test_totality_log_shaped_noise(parts):
    text = "".join(parts)
    for hint in ("auto", "clf", "clf_extended"):
        try:
            parse_line(text, hint)
        except ParseError:
            pass


def test_count_conservation(golden):
    lines = [x for xs in golden.values() for x in xs] + ["", "junk", FIG1[:40]]
    counts = ParseCounts()
    errors = []
    parsed = list(parse_lines(lines, counts=counts, on_error=lambda i, e: errors.append(i)))
    assert counts.lines_in == len(lines) == counts.parsed + counts.errors
    assert len(parsed) == counts.parsed and len(errors) == counts.errors == 3


def test_open_text_gzip_and_raw_bytes(tmp_path):
    raw = FIG1.replace("Firefox/48.0", "Firefox/48.0 \xff\xfe").encode("latin-1")
    plain = tmp_path / "a.log"
    plain.write_bytes(raw + b"\n")
    packed = tmp_path / "a.log.gz"
    with gzip.open(packed, "wb") as fh:
        fh.write(raw + b"\n")
    for p in (plain, packed):
        with open_text(str(p)) as fh:
            (line,) = list(fh)
        e = parse_line(line)
        # undecodable bytes survive and re-encode to the original octets
        assert format_line(e).encode("utf-8", "surrogateescape") == raw
