import json
import os
import subprocess
import sys
from datetime import date

import pytest

from archlog.cli import main
from archlog.pipeline import PipelineConfig, PipelineError, run_pipeline
from archlog.report import BUNDLE_FILES
from archlog.synth import generate_corpus

from synthspec import full_spec


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    log, truth = generate_corpus(full_spec(per_label=6, noise=80, malformed=4), str(d))
    return log, truth


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_run_writes_bundle(corpus, tmp_path):
    log, _ = corpus
    assert main(["-q", "run", "--input", log, "--out", str(tmp_path), "--profile", "ia"]) == 0
    for name in BUNDLE_FILES:
        assert (tmp_path / name).exists(), name
    bundle = json.loads((tmp_path / "bundle.json").read_text())
    assert bundle["run_metadata"]["parse_counts"]["errors"] == 4
    assert bundle["cleaning"]["raw"] == bundle["run_metadata"]["parse_counts"]["parsed"]
    assert bundle["temporal"]["reference_date"] == "2019-02-07"


def test_manual_composition_equals_run(corpus, tmp_path):
    log, _ = corpus
    run_dir, man = tmp_path / "run", tmp_path / "manual"
    man.mkdir()
    assert main(["-q", "run", "--input", log, "--out", str(run_dir), "--profile", "ia"]) == 0

    def m(*argv):
        assert main(["-q", *argv]) == 0

    p = lambda name: str(man / name)
    m("parse", "--input", log, "--out", p("records.ndjson.gz"), "--profile", "ia",
      "--stats-out", p("parse.json"))
    m("clean", "--stage", "1", "--input", p("records.ndjson.gz"), "--out", p("s1.ndjson.gz"),
      "--stats-out", p("clean1.json"))
    m("sessionize", "--input", p("s1.ndjson.gz"), "--out", p("sessions.ndjson.gz"),
      "--stats-out", p("sessionize.json"))
    m("detect", "--input", p("sessions.ndjson.gz"), "--out", p("detected.ndjson.gz"),
      "--stats-out", p("detect.json"))
    m("clean", "--stage", "2", "--input", p("detected.ndjson.gz"), "--out", p("s2.ndjson.gz"),
      "--stats-out", p("clean2.json"))
    m("patterns", "--input", p("s2.ndjson.gz"), "--out", p("patterns.json"))
    m("temporal", "--input", p("s2.ndjson.gz"), "--out", p("temporal.json"))
    m("report", "--parts", str(man), "--out", str(man / "bundle"))

    for name in BUNDLE_FILES:
        assert read(man / "bundle" / name) == read(run_dir / name), name
    for stage in ("records", "detected"):
        assert read(man / f"{stage}.ndjson.gz") == read(run_dir / "stages" / f"{stage}.ndjson.gz")


def test_stage_commands_stream_through_stdio(corpus, tmp_path):
    log, _ = corpus
    recs = tmp_path / "r.ndjson"
    assert main(["-q", "parse", "--input", log, "--out", str(recs)]) == 0
    out = subprocess.run(
        [sys.executable, "-m", "archlog.cli", "-q", "clean", "--stage", "1", "--input", "-", "--out", "-"],
        stdin=open(recs), capture_output=True, text=True, check=True,
    ).stdout
    kept = [json.loads(x) for x in out.splitlines()]
    assert kept and {r["kind"] for r in kept} <= {"memento", "timemap", "robots_txt"}


def test_determinism_and_budget_independence(corpus, tmp_path):
    log, _ = corpus
    dirs = [tmp_path / x for x in ("a", "b", "c")]
    main(["-q", "run", "--input", log, "--out", str(dirs[0])])
    main(["-q", "run", "--input", log, "--out", str(dirs[1])])
    main(["-q", "run", "--input", log, "--out", str(dirs[2]), "--memory-budget", "64K",
          "--tmpdir", str(tmp_path)])
    for name in BUNDLE_FILES:
        assert read(dirs[0] / name) == read(dirs[1] / name) == read(dirs[2] / name), name


def test_config_file_and_flag_override(corpus, tmp_path):
    log, _ = corpus
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        f"input: {log}\nout: {tmp_path / 'out'}\nprofile: ia\nbs-threshold: 0.25\n"
        "timeout_minutes: 5\nemit: json\nreference_date: 2018-06-01\n"
    )
    assert main(["-q", "run", "--config", str(cfg), "--ih-threshold", "0.2"]) == 0
    bundle = json.loads((tmp_path / "out" / "bundle.json").read_text())
    meta = bundle["run_metadata"]
    assert meta["thresholds"] == {"bs": 0.25, "ih": 0.2, "ua_per_ip": 20}
    assert meta["timeout_seconds"] == 300 and meta["profile"] == "ia_wayback"
    assert bundle["temporal"]["reference_date"] == "2018-06-01"
    assert not (tmp_path / "out" / "report.md").exists()
    bad = tmp_path / "bad.yaml"
    bad.write_text("colour: blue\n")
    assert main(["-q", "run", "--config", str(bad)]) == 1


def test_resume(corpus, tmp_path, caplog):
    log, _ = corpus
    cfg = PipelineConfig(inputs=[log], out_dir=str(tmp_path))
    first = run_pipeline(cfg)
    before = read(tmp_path / "bundle.json")
    caplog.set_level("INFO")
    cfg.resume = True
    again = run_pipeline(cfg)
    assert "resume: skipping detect" in caplog.text
    assert read(tmp_path / "bundle.json") == before
    assert first.to_dict() == again.to_dict()
    # changed thresholds invalidate the saved stages
    caplog.clear()
    run_pipeline(PipelineConfig(inputs=[log], out_dir=str(tmp_path), bs_threshold=0.3, resume=True))
    assert "resume: skipping" not in caplog.text


def test_empty_input(tmp_path, caplog):
    empty = tmp_path / "empty.log"
    empty.write_text("")
    caplog.set_level("WARNING")
    assert main(["run", "--input", str(empty), "--out", str(tmp_path / "out")]) == 0
    assert "no input lines" in caplog.text or "no parseable" in caplog.text
    bundle = json.loads((tmp_path / "out" / "bundle.json").read_text())
    assert bundle["cleaning"] == {"raw": 0, "stage1": 0, "stage1_pct": "0.00%",
                                  "stage2": 0, "stage2_pct": "0.00%"}


def test_unreadable_input(tmp_path):
    missing = tmp_path / "nope.log"
    proc = subprocess.run(
        [sys.executable, "-m", "archlog.cli", "run", "--input", str(missing), "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode != 0
    assert str(missing) in proc.stderr
    with pytest.raises(PipelineError) as ei:
        run_pipeline(PipelineConfig(inputs=[str(missing)], out_dir=str(tmp_path / "o")))
    assert ei.value.stage == "parse"


def test_invalid_config():
    with pytest.raises(ValueError):
        PipelineConfig(inputs=["x"], out_dir="y", bs_threshold=-1)
    with pytest.raises(ValueError):
        PipelineConfig(inputs=["x"], out_dir="y", archive_profile="nowhere")


def test_errors_out(corpus, tmp_path):
    log, _ = corpus
    errs = tmp_path / "errors.tsv"
    main(["-q", "parse", "--input", log, "--out", str(tmp_path / "r.gz"), "--errors-out", str(errs)])
    rows = errs.read_text().splitlines()
    assert len(rows) == 4
    name, offset, reason, _ = rows[0].split("\t", 3)
    assert name.startswith("access.log:") and int(offset) >= 0 and reason


def test_synth_command(tmp_path):
    spec = tmp_path / "spec.yaml"
    spec.write_text(
        "seed: 1\nlog_date: 2019-02-07\nblueprints:\n"
        "  - {count: 3, user_kind: human, pattern: Dive, memento_years: {2018: 1}}\n"
    )
    assert main(["-q", "synth", "--spec", str(spec), "--out", str(tmp_path / "a"), "--seed", "9"]) == 0
    truth = json.loads((tmp_path / "a" / "truth.json").read_text())
    assert truth["seed"] == 9 and len(truth["sessions"]) == 3
    assert date.fromisoformat(truth["log_date"]) == date(2019, 2, 7)


def test_patterns_csv_output(corpus, tmp_path):
    log, _ = corpus
    main(["-q", "run", "--input", log, "--out", str(tmp_path / "run")])
    s2 = str(tmp_path / "run" / "stages" / "stage2.ndjson.gz")
    out = tmp_path / "p.csv"
    assert main(["-q", "patterns", "--input", s2, "--out", str(out), "--dive-window-hours", "1"]) == 0
    header = out.read_text().splitlines()[0]
    assert header.startswith("subdataset,label")
    assert os.path.getsize(out) > len(header)
