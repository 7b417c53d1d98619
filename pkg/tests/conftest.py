import os
from datetime import datetime, timezone

import pytest

from archlog.archive import classify_path
from archlog.ingest import format_clf_timestamp, parse_line

DATA = os.path.join(os.path.dirname(__file__), "data")
T0 = int(datetime(2019, 2, 7, 10, 0, tzinfo=timezone.utc).timestamp())


def golden_sections():
    """{section: [lines]} from tests/data/golden.log."""
    out = {}
    current = None
    with open(os.path.join(DATA, "golden.log"), encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                out[current] = []
            else:
                out[current].append(line)
    return out


def log_line(epoch=T0, ip="10.0.0.1", method="GET",
             path="/web/20190101000000/http://example.org/", status=200, nbytes="512",
             referrer="-", ua="Mozilla/5.0 (X11; Linux x86_64) Firefox/60.0", version="HTTP/1.1"):
    ts = format_clf_timestamp(datetime.fromtimestamp(epoch, timezone.utc))
    request = f"{method} {path} {version}" if version else f"{method} {path}"
    return f'{ip} - - [{ts}] "{request}" {status} {nbytes} "{referrer}" "{ua}"'


def make_request(seq=0, profile="auto", **kw):
    return classify_path(parse_line(log_line(**kw)), profile, seq)


@pytest.fixture
def golden():
    return golden_sections()


# -- acceptance summary -----------------------------------------------------

ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        ACCEPTANCE_RESULTS.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in ACCEPTANCE_RESULTS:
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}")
