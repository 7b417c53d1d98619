"""Generate a small synthetic corpus, sessionize it and compare the robot
verdicts against the planted ground truth.

Run with ``python3 demos/02_sessions_and_robots.py``.
"""
import json
import os
import tempfile
from collections import Counter

from archlog.bots import KnownBotList, classify_session, flag_ua_per_ip
from archlog.cleaning import stage1_keep, stage2_keep
from archlog.ingest import open_text, parse_lines
from archlog.archive import classify_path
from archlog.patterns import classify_pattern
from archlog.sessionize import build_sessions
from archlog.synth import SynthSpec, generate_corpus

HERE = os.path.dirname(os.path.abspath(__file__))
out = tempfile.mkdtemp(prefix="archlog-demo-")
log, truth_path = generate_corpus(SynthSpec.load(os.path.join(HERE, "spec.yaml")), out)
truth = json.load(open(truth_path))["sessions"]
print(f"corpus in {out}: {len(truth)} planted sessions")

with open_text(log) as fh:
    requests = [classify_path(e, "ia", seq) for seq, e in enumerate(parse_lines(fh))]
kept = [r for r in requests if stage1_keep(r)]
print(f"{len(requests)} parsed, {len(kept)} survive stage 1")

# the UA-per-IP heuristic needs a pass over the whole corpus first
crowded = flag_ua_per_ip(kept)
known = KnownBotList.default()

confusion = Counter()
labels = Counter()
for s in build_sessions(kept):
    verdict = classify_session(s, crowded, known)
    planted = truth.get(s.session_id)
    if planted is None:
        continue  # background noise
    guess = "robot" if verdict.is_robot else "human"
    confusion[planted["user_kind"], guess] += 1
    core = s.filtered(stage2_keep)
    if core is not None:
        labels[guess, classify_pattern(core).label] += 1

print("\nplanted vs detected")
for (want, got), n in sorted(confusion.items()):
    print(f"  {want:>5} -> {got:<5} {n}")
print("\npatterns by detected kind")
for (kind, label), n in sorted(labels.items()):
    print(f"  {kind:<5} {label:<14} {n}")
