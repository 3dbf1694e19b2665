"""Log ingestion, feature derivation and the synthetic market generator."""

from .features import EmptyPortfolio, MarketInputs, MarketState, compute_vwaf, derive_features
from .ingest import (
    CANONICAL_COLUMNS,
    EmptyFile,
    IngestError,
    IngestResult,
    IngestSummary,
    MissingColumn,
    ParseError,
    SchemaConfig,
    format_log,
    ingest,
    ingest_text,
    nearest_arm,
    parse_timestamp,
    write_log,
)
from .synthetic import InvalidConfig, SyntheticConfig, SyntheticLog, generate_synthetic

__all__ = [
    "CANONICAL_COLUMNS", "EmptyFile", "EmptyPortfolio", "IngestError", "IngestResult",
    "IngestSummary", "InvalidConfig", "MarketInputs", "MarketState", "MissingColumn",
    "ParseError", "SchemaConfig", "SyntheticConfig", "SyntheticLog", "compute_vwaf",
    "derive_features", "format_log", "generate_synthetic", "ingest", "ingest_text",
    "nearest_arm", "parse_timestamp", "write_log",
]
