from datetime import date

import pytest

from archlog.archive import classify_path
from archlog.bots import KnownBotList, classify_session, flag_ua_per_ip
from archlog.cleaning import stage1_keep, stage2_keep
from archlog.ingest import ParseError, parse_line
from archlog.patterns import classify_pattern
from archlog.sessionize import build_sessions
from archlog.synth import Blueprint, BlueprintError, SynthSpec, generate_corpus

from synthspec import YEARS, full_spec

LOG_DATE = date(2019, 2, 7)


def spec_of(*bps, **kw):
    return SynthSpec(seed=kw.pop("seed", 1), log_date=LOG_DATE, blueprints=list(bps), **kw)


def read_requests(log_path, profile="auto"):
    out = []
    with open(log_path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            try:
                out.append(classify_path(parse_line(line), profile, i))
            except ParseError:
                pass
    return out


@pytest.mark.parametrize("bp,msg", [
    (Blueprint(1, "robot", "Skim", frozenset({"head_method"}), YEARS, size=1), "not realizable"),
    (Blueprint(1, "human", "Dip", frozenset(), YEARS, size=2), "not realizable"),
    (Blueprint(1, "human", "Dip", frozenset({"known_bot"}), YEARS), "cannot trigger"),
    (Blueprint(1, "robot", "Dip", frozenset(), YEARS), "at least one trigger"),
    (Blueprint(5, "robot", "Dip", frozenset({"ua_per_ip"}), YEARS), "ua_per_ip"),
    (Blueprint(1, "robot", "Dip", frozenset({"telepathy"}), YEARS), "unknown heuristics"),
    (Blueprint(1, "alien", "Dip", frozenset(), YEARS), "user_kind"),
    (Blueprint(1, "human", "Zigzag", frozenset(), YEARS), "unknown pattern"),
    (Blueprint(0, "human", "Dip", frozenset(), YEARS), "positive"),
])
def test_rejects_unrealizable(bp, msg):
    with pytest.raises(BlueprintError, match=msg):
        spec_of(bp).validate()


def test_rejects_bad_profile(tmp_path):
    with pytest.raises(BlueprintError):
        generate_corpus(spec_of(Blueprint(1, "human", "Dip", frozenset(), YEARS), archive_profile="x"),
                        str(tmp_path))


def test_from_dict_and_yaml(tmp_path):
    text = """
seed: 3
log_date: 2012-02-02
archive_profile: arquivo
blueprints:
  - {count: 2, user_kind: human, pattern: Slide, memento_years: {2010: 1}}
  - {count: 1, user_kind: robot, pattern: Dip, trigger_heuristics: [head_method], memento_years: {2011: 1}}
"""
    p = tmp_path / "spec.yaml"
    p.write_text(text)
    spec = SynthSpec.load(str(p))
    assert spec.log_date == date(2012, 2, 2) and spec.archive_profile == "arquivo"
    assert spec.blueprints[1].triggers == {"head_method"}
    spec.validate()


def test_deterministic(tmp_path):
    spec = full_spec(per_label=5, noise=50, malformed=5)
    a = generate_corpus(spec, str(tmp_path / "a"))
    b = generate_corpus(spec, str(tmp_path / "b"))
    for x, y in zip(a, b):
        assert open(x, "rb").read() == open(y, "rb").read()
    ga = generate_corpus(spec, str(tmp_path / "ga"), gzip_log=True)
    gb = generate_corpus(spec, str(tmp_path / "gb"), gzip_log=True)
    assert open(ga[0], "rb").read() == open(gb[0], "rb").read()
    c = generate_corpus(full_spec(per_label=5, noise=50, malformed=5, seed=8), str(tmp_path / "c"))
    assert open(a[0], "rb").read() != open(c[0], "rb").read()


def test_head_dip_robot(tmp_path):
    log, _ = generate_corpus(spec_of(Blueprint(1, "robot", "Dip", frozenset({"head_method"}), YEARS)),
                             str(tmp_path))
    rs = read_requests(log)
    heads = [r for r in rs if r.entry.method == "HEAD"]
    assert heads and all(r.kind == "memento" for r in heads)
    assert sum(1 for r in rs if stage2_keep(r)) == 1


def test_human_dive_slide_is_clean(tmp_path):
    log, _ = generate_corpus(spec_of(Blueprint(30, "human", "DiveSlide", frozenset(), YEARS)), str(tmp_path))
    rs = [r for r in read_requests(log) if stage1_keep(r)]
    known = KnownBotList.default()
    sessions = list(build_sessions(rs))
    assert len(sessions) == 30
    for s in sessions:
        v = classify_session(s, flag_ua_per_ip(rs), known)
        assert not v.is_robot, v.triggered
        assert s.image_count * 10 >= s.html_count
        assert s.duration == 0 or s.html_count / s.duration < 0.5
        core = s.filtered(stage2_keep)
        assert sum(1 for r in core.requests if r.kind == "memento") >= 3
        assert classify_pattern(core).label == "DiveSlide"


def test_every_line_parses_except_planted_malformed(tmp_path):
    spec = full_spec(per_label=3, noise=100, malformed=17, profile="arquivo")
    log, _ = generate_corpus(spec, str(tmp_path))
    bad = 0
    with open(log, encoding="utf-8") as fh:
        for line in fh:
            try:
                parse_line(line)
            except ParseError:
                bad += 1
    assert bad == 17
