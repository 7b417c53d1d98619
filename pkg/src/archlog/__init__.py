"""Robot and human access patterns in web-archive access logs.

The package turns raw archive access logs into sessions, labels each
session robot or human with six heuristics, tags its access pattern
(Dip, Slide, Dive, Skim and their hybrids) and aggregates everything into
report tables.
"""

from .archive import ArchiveRequest, classify_path, classify_resource
from .bots import BotVerdict, KnownBotList, Thresholds, classify_session
from .cleaning import CleaningStats, stage1_keep, stage2_keep
from .ingest import LogEntry, ParseError, parse_line
from .patterns import PatternDistribution, PatternLabel, classify_pattern
from .pipeline import PipelineConfig, PipelineError, run_pipeline
from .report import ReportBundle, emit_report, feature_stats
from .sessionize import Session, UserKey, build_sessions
from .synth import SynthSpec, generate_corpus
from .temporal import TemporalHistogram, temporal_histogram, years_prior

__version__ = "0.1.0"

__all__ = [
    "ArchiveRequest", "BotVerdict", "CleaningStats", "KnownBotList", "LogEntry",
    "ParseError", "PatternDistribution", "PatternLabel", "PipelineConfig",
    "PipelineError", "ReportBundle", "Session", "SynthSpec", "TemporalHistogram",
    "Thresholds", "UserKey", "build_sessions", "classify_path", "classify_pattern",
    "classify_resource", "classify_session", "emit_report", "feature_stats",
    "generate_corpus", "parse_line", "run_pipeline", "stage1_keep", "stage2_keep",
    "temporal_histogram", "years_prior",
]
