"""Run the whole pipeline on a synthetic corpus and print the markdown report.

Equivalent to ``archlog synth`` followed by ``archlog run``.
Run with ``python3 demos/03_full_run.py``.
"""
import os
import tempfile

from archlog.pipeline import PipelineConfig, run_pipeline
from archlog.report import render_markdown
from archlog.synth import SynthSpec, generate_corpus

HERE = os.path.dirname(os.path.abspath(__file__))
work = tempfile.mkdtemp(prefix="archlog-run-")
log, _ = generate_corpus(SynthSpec.load(os.path.join(HERE, "spec.yaml")), work)

# a small memory budget forces the out-of-core paths; results are identical
cfg = PipelineConfig(inputs=[log], out_dir=os.path.join(work, "report"),
                     archive_profile="ia", memory_budget="256K")
bundle = run_pipeline(cfg)
print(render_markdown(bundle))
print(f"bundle written to {cfg.out_dir}")
