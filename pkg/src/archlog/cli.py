"""``archlog`` command line.

Every stage is a subcommand that reads and writes the canonical record
stream, so a run can be taken apart and replayed one stage at a time::

    archlog parse --input access.log --out records.ndjson.gz --stats-out parts/parse.json
    archlog clean --stage 1 --input records.ndjson.gz --out s1.ndjson.gz --stats-out parts/clean1.json
    archlog sessionize --input s1.ndjson.gz --out sess.ndjson.gz --stats-out parts/sessionize.json
    archlog detect --input sess.ndjson.gz --out det.ndjson.gz --stats-out parts/detect.json
    archlog clean --stage 2 --input det.ndjson.gz --out s2.ndjson.gz --stats-out parts/clean2.json
    archlog patterns --input s2.ndjson.gz --out parts/patterns.json
    archlog temporal --input s2.ndjson.gz --out parts/temporal.json
    archlog report --parts parts --emit json,csv,markdown --out report/

``archlog run`` does all of the above in one go.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import date

from . import __version__
from .bots import Thresholds
from .pipeline import (
    PART_FILES,
    PipelineConfig,
    PipelineError,
    assemble_bundle,
    read_part,
    run_pipeline,
    stage_clean,
    stage_detect,
    stage_parse,
    stage_patterns,
    stage_sessionize,
    stage_temporal,
    write_part,
)
from .report import emit_report

logger = logging.getLogger("archlog")

_FORMAT_NAMES = {"auto": "auto", "clf": "clf", "clf-extended": "clf_extended", "clf_extended": "clf_extended"}


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a YYYY-MM-DD date: {text!r}")


def _emit_list(text: str) -> tuple[str, ...]:
    items = tuple(x.strip() for x in text.split(",") if x.strip())
    bad = set(items) - {"json", "csv", "markdown"}
    if bad or not items:
        raise argparse.ArgumentTypeError(f"--emit takes json,csv,markdown; got {text!r}")
    return items


def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _write_stats(path: str | None, part: dict) -> None:
    if path is None:
        return
    if path == "-":
        json.dump(part, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    if path.endswith(".csv"):
        _write_rows_csv(path, part)
    else:
        write_part(path, part)


def _write_rows_csv(path: str, part: dict) -> None:
    """Flatten a stage part into the CSV shape of its report table."""
    stage = part.get("stage")
    if stage == "patterns":
        rows = part["patterns"]
    elif stage == "temporal":
        rows = []
        for sub in ("human", "robot"):
            rows += part[sub]["buckets"]
            rows.append({"subdataset": sub, "years_prior": "future",
                         "count": part[sub]["discarded_future"]})
    elif stage == "parse":
        rows = part["features"]
    elif stage == "detect":
        rows = part["bots"]["rows"]
    else:
        rows = [{k: v for k, v in part.items() if not isinstance(v, (dict, list))}]
    header = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# -- subcommands ------------------------------------------------------------


def cmd_parse(args) -> int:
    part = stage_parse(args.input, args.out, args.profile, _FORMAT_NAMES[args.format], args.errors_out)
    _write_stats(args.stats_out, part)
    c = part["counts"]
    logger.info("parsed %d of %d lines (%d errors)", c["parsed"], c["lines_in"], c["errors"])
    return 0


def cmd_clean(args) -> int:
    part = stage_clean(args.input, args.out, args.stage)
    _write_stats(args.stats_out, part)
    logger.info("stage %d kept %d of %d requests", args.stage, part["out"], part["in"])
    return 0


def cmd_sessionize(args) -> int:
    part = stage_sessionize(args.input, args.out, int(args.timeout_minutes * 60),
                            args.memory_budget, args.tmpdir)
    _write_stats(args.stats_out, part)
    logger.info("%d sessions from %d requests", part["sessions"], part["requests"])
    return 0


def cmd_detect(args) -> int:
    thresholds = Thresholds(args.bs_threshold, args.ih_threshold, args.ua_ip_threshold)
    part = stage_detect(args.input, args.out, args.known_bots, thresholds, args.memory_budget, args.tmpdir)
    _write_stats(args.stats_out, part)
    return 0


def cmd_patterns(args) -> int:
    _write_stats(args.out, stage_patterns(args.input, args.dive_window_hours))
    return 0


def cmd_temporal(args) -> int:
    _write_stats(args.out, stage_temporal(args.input, args.reference_date, args.year_mode))
    return 0


def _collect_parts(paths: list[str]) -> dict[str, dict]:
    parts: dict[str, dict] = {}
    for p in paths:
        files = [os.path.join(p, n) for n in sorted(os.listdir(p)) if n.endswith(".json")] \
            if os.path.isdir(p) else [p]
        for f in files:
            part = read_part(f)
            if isinstance(part, dict) and part.get("stage") in PART_FILES:
                parts[part["stage"]] = part
    return parts


def cmd_report(args) -> int:
    bundle = assemble_bundle(_collect_parts(args.parts))
    for path in emit_report(bundle, args.out, args.emit):
        logger.info("wrote %s", path)
    return 0


def cmd_synth(args) -> int:
    from .synth import SynthSpec, generate_corpus

    spec = SynthSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    log_path, truth_path = generate_corpus(spec, args.out, gzip_log=args.gzip)
    logger.info("wrote %s and %s", log_path, truth_path)
    return 0


# flag name -> PipelineConfig field, for --config files
_CONFIG_KEYS = {
    "input": "inputs", "inputs": "inputs", "out": "out_dir", "out_dir": "out_dir",
    "profile": "archive_profile", "archive_profile": "archive_profile",
    "format": "format_hint", "format_hint": "format_hint",
    "timeout_minutes": "timeout_minutes", "timeout": "timeout",
    "bs_threshold": "bs_threshold", "ih_threshold": "ih_threshold",
    "ua_ip_threshold": "ua_per_ip_threshold", "ua_per_ip_threshold": "ua_per_ip_threshold",
    "dive_window_hours": "dive_window_hours", "known_bots": "known_bots",
    "memory_budget": "memory_budget", "tmpdir": "tmpdir",
    "reference_date": "reference_date", "year_mode": "year_mode", "threads": "threads",
    "emit": "emit", "resume": "resume", "errors_out": "errors_out",
}


def load_config_file(path: str) -> dict:
    """Read a YAML or JSON run configuration into PipelineConfig keywords."""
    import yaml

    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: configuration must be a mapping")
    out: dict = {}
    for key, value in raw.items():
        name = _CONFIG_KEYS.get(key.replace("-", "_"))
        if name is None:
            raise ValueError(f"{path}: unknown configuration key {key!r}")
        out[name] = value
    if "timeout_minutes" in out:
        out["timeout"] = int(float(out.pop("timeout_minutes")) * 60)
    if isinstance(out.get("inputs"), str):
        out["inputs"] = [out["inputs"]]
    if isinstance(out.get("emit"), str):
        out["emit"] = _emit_list(out["emit"])
    if isinstance(out.get("reference_date"), str):
        out["reference_date"] = date.fromisoformat(out["reference_date"])
    if "format_hint" in out:
        out["format_hint"] = _FORMAT_NAMES[out["format_hint"]]
    return out


def cmd_run(args) -> int:
    kw = load_config_file(args.config) if args.config else {}
    flags = {
        "inputs": args.input, "out_dir": args.out, "archive_profile": args.profile,
        "format_hint": _FORMAT_NAMES[args.format] if args.format else None,
        "timeout": int(args.timeout_minutes * 60) if args.timeout_minutes is not None else None,
        "bs_threshold": args.bs_threshold, "ih_threshold": args.ih_threshold,
        "ua_per_ip_threshold": args.ua_ip_threshold, "dive_window_hours": args.dive_window_hours,
        "known_bots": args.known_bots, "memory_budget": args.memory_budget, "tmpdir": args.tmpdir,
        "reference_date": args.reference_date, "year_mode": args.year_mode, "threads": args.threads,
        "emit": args.emit, "resume": args.resume or None, "errors_out": args.errors_out,
    }
    kw.update({k: v for k, v in flags.items() if v is not None})
    if not kw.get("inputs") or not kw.get("out_dir"):
        raise SystemExit("archlog run: --input and --out are required (flags or --config)")
    config = PipelineConfig(**kw)
    if config.threads > 1:
        logger.info("--threads %d: stages run single-threaded", config.threads)
    bundle = run_pipeline(config)
    c = bundle.run_metadata["parse_counts"]
    logger.info("done: %d lines, %d parse errors, %d sessions",
                c["lines_in"], c["errors"], bundle.run_metadata["sessions"])
    return 0


# -- argument parsing -------------------------------------------------------


def _add_io(p, stats=True):
    p.add_argument("--input", required=True, help="record stream ('-' for stdin)")
    p.add_argument("--out", required=True, help="output record stream (.gz to compress)")
    if stats:
        p.add_argument("--stats-out", help="write the stage statistics (JSON, or CSV by extension)")


def _add_threshold_flags(p, defaults: bool) -> None:
    d = Thresholds() if defaults else None
    p.add_argument("--known-bots", help="known-bot substring list (one per line, # comments)")
    p.add_argument("--bs-threshold", type=_positive_float, default=d and d.bs,
                   help="browsing speed threshold in requests/second (default 0.5)")
    p.add_argument("--ih-threshold", type=_positive_float, default=d and d.ih,
                   help="image-to-HTML ratio threshold (default 0.1)")
    p.add_argument("--ua-ip-threshold", type=_positive_int, default=d and d.ua_per_ip,
                   help="distinct user agents per client before flagging (default 20)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="archlog", description="Robot/human analysis of web-archive access logs.")
    ap.add_argument("--version", action="version", version=f"archlog {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("-q", "--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse raw logs into the record stream")
    p.add_argument("--input", nargs="+", required=True, help="log files (plain or gzip)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=sorted(_FORMAT_NAMES), default="auto")
    p.add_argument("--profile", choices=("ia", "arquivo", "auto"), default="auto")
    p.add_argument("--errors-out", help="write rejected lines with offset and reason")
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("clean", help="stage-1 or stage-2 filtering")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    _add_io(p)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("sessionize", help="group requests into sessions")
    _add_io(p)
    p.add_argument("--timeout-minutes", type=_positive_float, default=10.0)
    p.add_argument("--memory-budget", help="e.g. 512M; spill to disk beyond this")
    p.add_argument("--tmpdir", help="spill directory (default $ARCHLOG_TMPDIR or system temp)")
    p.set_defaults(func=cmd_sessionize)

    p = sub.add_parser("detect", help="label sessions robot or human")
    _add_io(p)
    _add_threshold_flags(p, defaults=True)
    p.add_argument("--memory-budget", help="spill the UA-per-client table to disk beyond this")
    p.add_argument("--tmpdir")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("patterns", help="access-pattern distribution")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default="-", help="JSON part, or CSV by extension (default stdout)")
    p.add_argument("--dive-window-hours", type=_positive_float, default=24.0)
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("temporal", help="years-prior histogram of requested mementos")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default="-", help="JSON part, or CSV by extension (default stdout)")
    p.add_argument("--reference-date", type=_date, help="default: modal request date")
    p.add_argument("--year-mode", choices=("calendar", "elapsed"), default="calendar")
    p.set_defaults(func=cmd_temporal)

    p = sub.add_parser("report", help="assemble stage statistics into the report bundle")
    p.add_argument("--parts", nargs="+", required=True, help="stage JSON files or directories")
    p.add_argument("--emit", type=_emit_list, default=("json", "csv", "markdown"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--spec", required=True, help="YAML or JSON blueprint file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--gzip", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="the whole pipeline")
    p.add_argument("--config", help="YAML or JSON file with the same keys as the flags")
    p.add_argument("--input", nargs="+")
    p.add_argument("--out")
    p.add_argument("--format", choices=sorted(_FORMAT_NAMES))
    p.add_argument("--profile", choices=("ia", "arquivo", "auto"))
    p.add_argument("--timeout-minutes", type=_positive_float)
    p.add_argument("--memory-budget")
    p.add_argument("--tmpdir")
    _add_threshold_flags(p, defaults=False)
    p.add_argument("--dive-window-hours", type=_positive_float)
    p.add_argument("--reference-date", type=_date)
    p.add_argument("--year-mode", choices=("calendar", "elapsed"))
    p.add_argument("--threads", type=_positive_int)
    p.add_argument("--emit", type=_emit_list)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--errors-out")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="archlog: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except PipelineError as exc:
        logger.error("%s", exc)
        return 1
    except (OSError, ValueError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
