import itertools

import pytest

from archlog.archive import OTHER, ROBOTS_TXT
from archlog.cleaning import CleaningStats, stage1_keep, stage2_keep

from conftest import make_request

MEMENTO_PATH = "/web/20190101000000/http://a.org/"


def test_stage1_examples():
    assert stage1_keep(make_request(path=MEMENTO_PATH))
    home = make_request(path="/")
    assert home.kind == OTHER and not stage1_keep(home)
    robots = make_request(path="/robots.txt")
    assert robots.kind == ROBOTS_TXT and stage1_keep(robots)
    assert stage1_keep(make_request(path="/web/*/http://a.org/"))


def test_stage2_examples():
    assert stage2_keep(make_request(path=MEMENTO_PATH))
    assert not stage2_keep(make_request(path=MEMENTO_PATH, status=302))
    assert not stage2_keep(make_request(path=MEMENTO_PATH, method="HEAD"))
    assert not stage2_keep(make_request(path=MEMENTO_PATH, method="POST"))
    assert stage2_keep(make_request(path=MEMENTO_PATH, status=404))
    assert stage2_keep(make_request(path=MEMENTO_PATH, status=503))
    assert not stage2_keep(make_request(path=MEMENTO_PATH, status=500))
    assert not stage2_keep(make_request(path="/web/20190101000000/http://a.org/a.png"))
    assert not stage2_keep(make_request(path="/robots.txt"))
    assert stage2_keep(make_request(path="/web/*/http://a.org/"))


def test_stage2_implies_stage1():
    paths = [MEMENTO_PATH, "/", "/robots.txt", "/web/*/http://a.org/",
             "/web/20190101000000/http://a.org/x.css", "/web/20190101000000im_/http://a.org/x"]
    for path, method, status in itertools.product(paths, ["GET", "HEAD", "POST"], [200, 302, 404, 500, 503]):
        r = make_request(path=path, method=method, status=status)
        if stage2_keep(r):
            assert stage1_keep(r)


def test_stats_percentages():
    s = CleaningStats(99_173_542, 84_512_394, 18_432_398)
    assert s.row()["stage1_pct"] == "85.22%"
    assert s.row()["raw"] == 99_173_542
    assert CleaningStats().row()["stage2_pct"] == "0.00%"


@pytest.mark.parametrize("counts", [(1, 2, 0), (5, 3, 4), (-1, 0, 0)])
def test_stats_reject_inconsistent(counts):
    with pytest.raises(ValueError):
        CleaningStats(*counts)
