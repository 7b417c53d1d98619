import random
from collections import Counter
from datetime import date, datetime, timezone

import pytest

from archlog._fmt import percent, pct_str
from archlog.bots import BotVerdict
from archlog.cleaning import CleaningStats
from archlog.patterns import PatternDistribution, classify_pattern
from archlog.report import (
    BUNDLE_FILES,
    BotTable,
    FeatureStats,
    ReportBundle,
    bundle_from_csv,
    bundle_json,
    emit_report,
    feature_stats,
    render_markdown,
)
from archlog.sessionize import Session, UserKey
from archlog.temporal import TemporalHistogram

from conftest import make_request


class TestPercent:
    def test_table_shares(self):
        assert pct_str(97_987_295, 99_173_542) == "98.80%"
        assert pct_str(84_512_394, 99_173_542) == "85.22%"

    def test_stage2_share_rounds_half_up(self):
        # 18.58604...%, so two-decimal half-up gives 18.59
        assert pct_str(18_432_398, 99_173_542) == "18.59%"

    def test_half_up(self):
        assert pct_str(1, 8) == "12.50%"
        assert pct_str(1, 800) == "0.13%"
        assert pct_str(1, 3) == "33.33%"
        assert pct_str(0, 0) == "0.00%"

    def test_against_integer_arithmetic(self):
        rng = random.Random(1)
        for _ in range(5000):
            d = rng.randint(1, 10**9)
            n = rng.randint(0, d)
            # hundredths of a percent, rounded half-up with integers only
            q, r = divmod(n * 10000, d)
            if 2 * r >= d:
                q += 1
            assert percent(n, d) == q / __import__("decimal").Decimal(100)


class TestFeatures:
    def test_empty(self):
        fs = feature_stats([])
        assert all(row["count"] == 0 and row["pct"] == "0.00%" for row in fs.rows())

    def test_one_head(self):
        fs = feature_stats([make_request(method="HEAD")])
        rows = {r["feature"]: r for r in fs.rows()}
        assert rows["HEAD"]["count"] == 1 and rows["HEAD"]["pct"] == "100.00%"
        assert rows["GET"]["count"] == 0 and rows["GET"]["pct"] == "0.00%"

    def test_counts(self):
        rs = [
            make_request(), make_request(status=302), make_request(status=404, referrer="http://x/"),
            make_request(status=503, ua="Googlebot/2.1"), make_request(method="POST", status=200),
            make_request(path="/web/20190101000000im_/http://a.org/x.png"),
            make_request(status=101),
        ]
        fs = feature_stats(rs)
        assert fs.total_requests == 7
        assert fs.methods == Counter({"GET": 6, "POST": 1})
        assert fs.status_classes == Counter({"2xx": 3, "3xx": 1, "4xx": 1, "5xx": 1})
        assert fs.embedded_resources == 1
        assert fs.null_referrer == 6
        assert fs.si_robots == 1
        assert sum(fs.status_classes.values()) <= fs.total_requests


def sample_bundle(seed=0):
    rng = random.Random(seed)
    rs = [make_request(seq=i, method=rng.choice(["GET", "HEAD"]), status=rng.choice([200, 302, 404]))
          for i in range(50)]
    bots = BotTable()
    dist = PatternDistribution()
    for i in range(0, 50, 5):
        s = Session.from_requests(UserKey("10.0.0.1", f"ua{i}"), rs[i:i + 5])
        v = BotVerdict(head_method=any(r.entry.method == "HEAD" for r in s.requests))
        v.request_counts = {h: len(s) for h in v.triggered}
        bots.add(s, v)
        dist.add(s, classify_pattern(s), v.is_robot)
    hists = {"human": TemporalHistogram(date(2019, 2, 7)), "robot": TemporalHistogram(date(2019, 2, 7))}
    for y in (2019, 2015, 2015, 2021):
        hists["robot"].add(datetime(y, 1, 1, tzinfo=timezone.utc))
    return ReportBundle(feature_stats(rs), CleaningStats(50, 40, 20), bots, dist, hists,
                        {"thresholds": {"bs": 0.5}, "profile": "ia_wayback"})


def test_bot_table_totals():
    b = sample_bundle().bot_table
    d = b.to_dict()
    rows = {r["heuristic"]: r for r in d["rows"]}
    assert rows["total_robots"]["sessions"] == b.robot_sessions
    assert rows["head_method"]["sessions"] <= b.total_sessions == 10
    assert BotTable.from_dict(d).to_dict() == d


def test_json_round_trip():
    bundle = sample_bundle()
    again = ReportBundle.from_dict(__import__("json").loads(bundle_json(bundle)))
    assert bundle_json(again) == bundle_json(bundle)


def test_csv_round_trip(tmp_path):
    bundle = sample_bundle()
    emit_report(bundle, str(tmp_path), ["csv"])
    assert bundle_json(bundle_from_csv(str(tmp_path))) == bundle_json(bundle)


def test_emit_all_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    emit_report(sample_bundle(), str(a))
    emit_report(sample_bundle(), str(b))
    assert sorted(p.name for p in a.iterdir()) == sorted(BUNDLE_FILES)
    for name in BUNDLE_FILES:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report(sample_bundle(), str(tmp_path), ["xml"])


def test_markdown_cleaning_row():
    bundle = ReportBundle.empty()
    bundle.cleaning_stats = CleaningStats(99_173_542, 84_512_394, 18_432_398)
    md = render_markdown(bundle)
    assert "| 99,173,542 | 84,512,394 (85.22%) |" in md


def test_percentages_recomputable():
    d = sample_bundle().to_dict()
    for row in d["features"]:
        assert row["pct"] == pct_str(row["count"], row["total"])
    for row in d["bots"]["rows"]:
        assert row["sessions_pct"] == pct_str(row["sessions"], row["total_sessions"])
        assert row["requests_pct"] == pct_str(row["requests"], row["total_requests"])
    for row in d["patterns"]:
        assert row["pct"] == pct_str(row["requests"], row["subdataset_requests"])


def test_empty_bundle_renders():
    md = render_markdown(ReportBundle.empty())
    assert "0 (0.00%)" in md and "reference date n/a" in md
    assert isinstance(FeatureStats(), FeatureStats)
