"""Walk a few raw access-log lines through parsing and path classification.

Run with ``python3 demos/01_parse_lines.py``.
"""
from archlog.archive import classify_path, classify_resource
from archlog.ingest import ParseError, format_line, parse_line

LINES = [
    # plain combined format, a memento with an explicit datetime
    '192.0.2.10 - - [07/Feb/2019:00:18:04 +0000] "GET /web/20091223000000/http://example.org/ HTTP/1.1" '
    '200 5120 "-" "Mozilla/5.0 (X11; Linux x86_64)"',
    # a TimeMap listing
    '192.0.2.10 - - [07/Feb/2019:00:18:09 +0000] "GET /web/*/http://example.org/ HTTP/1.1" '
    '200 812 "-" "Mozilla/5.0 (X11; Linux x86_64)"',
    # embedded image via the im_ modifier, HEAD request from a crawler
    '198.51.100.7 - - [07/Feb/2019:01:02:03 +0000] "HEAD /web/20150101000000im_/http://example.org/a.png HTTP/1.1" '
    '200 - "-" "ExampleBot/1.0 (+http://bot.example/)"',
    '198.51.100.7 - - [07/Feb/2019:01:02:05 +0000] "GET /robots.txt HTTP/1.1" 200 40 "-" "ExampleBot/1.0"',
    # broken: the quote around the request never closes
    '203.0.113.1 - - [07/Feb/2019:01:02:05 +0000] "GET /web/2019/http://x.org/ HTTP/1.1 200 10',
]

for i, line in enumerate(LINES):
    try:
        entry = parse_line(line)
    except ParseError as err:
        print(f"line {i}: rejected at byte {err.offset}: {err.reason}")
        continue
    req = classify_path(entry, "ia", seq=i)
    print(f"line {i}: {entry.method} {req.kind:<10} class={classify_resource(req):<6} "
          f"urir={req.uri_r} mdt={req.memento_datetime}")

# a parsed line formats back to an equivalent line
entry = parse_line(LINES[0])
assert parse_line(format_line(entry)) == entry
print("round trip ok")
