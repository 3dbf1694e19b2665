"""Delimited transaction-log ingestion and canonical log writing.

A log is a header row plus one request per line. Logical column names map
to file headers through :class:`SchemaConfig`. Rows are sorted by
timestamp (stable on file order) before any running feature is derived.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from ..domain import (
    ARMS,
    FEATURE_NAMES,
    ArmId,
    ArmQuotes,
    BookingRequest,
    ContextVector,
    LendBanditError,
    LogRecord,
    ValidationError,
    validate_request,
)
from .features import MarketInputs, MarketState, safe_ratio

ARM_COLUMNS: dict[ArmId, str] = {
    ArmId.OwnVwaf: "own_vwaf",
    ArmId.MlBased: "ml_rate",
    ArmId.MarketVwaf: "market_vwaf",
    ArmId.RuleBased: "rule_rate",
}
REQUIRED_COLUMNS = ("timestamp", "security_id", "bid", "quantity", "market_value")
RAW_COLUMNS = ("demand", "supply", "lender_supply", "market_supply", "alternative_supply")
OPTIONAL_COLUMNS = ("request_id", "bid_signal_scaled", "offered_rate", "accept_flag", "logged_arm")
CANONICAL_COLUMNS = (
    "request_id", "timestamp", "security_id", "bid", "quantity", "market_value",
    *ARM_COLUMNS.values(), *FEATURE_NAMES, "offered_rate", "accept_flag", "logged_arm",
)
ALL_LOGICAL = tuple(dict.fromkeys(REQUIRED_COLUMNS + tuple(ARM_COLUMNS.values())
                                  + FEATURE_NAMES + RAW_COLUMNS + OPTIONAL_COLUMNS))

# Raw columns that can stand in for a missing feature column.
_FEATURE_SOURCES: dict[str, tuple[str, ...]] = {
    "utilization": ("demand", "supply"),
    "market_share": ("lender_supply", "market_supply"),
    "alt_supply": ("alternative_supply", "market_supply"),
    "return_signal": ("return_signal",),
    "bid_signal_scaled": (),
}

FEE_SCALE = {"fraction": 1.0, "percent": 1e-2, "bp": 1e-4}


class IngestError(LendBanditError):
    pass


class ParseError(IngestError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingColumn(IngestError):
    def __init__(self, name: str) -> None:
        super().__init__(f"missing column {name!r}")
        self.column = name


class EmptyFile(IngestError):
    pass


@dataclass(frozen=True)
class SchemaConfig:
    """How to read a log file.

    ``columns`` maps logical names to file headers; unmapped names use the
    logical name itself.
    """

    columns: Mapping[str, str] = field(default_factory=dict)
    delimiter: str = ","
    fee_unit: str = "fraction"
    strict: bool = True
    filter_gc: bool = True
    gc_threshold: float = 0.01
    ewma_half_life: float = 20.0
    bias: bool = True

    def __post_init__(self) -> None:
        if self.fee_unit not in FEE_SCALE:
            raise ValueError(f"fee_unit must be one of {sorted(FEE_SCALE)}, got {self.fee_unit!r}")
        unknown = set(self.columns) - set(ALL_LOGICAL)
        if unknown:
            raise ValueError(f"unknown logical columns in schema: {sorted(unknown)}")

    def header(self, logical: str) -> str:
        return self.columns.get(logical, logical)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SchemaConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown schema config keys: {sorted(extra)}")
        return cls(**{k: (dict(v) if k == "columns" else v) for k, v in d.items()})

    @classmethod
    def load(cls, path: "str | Path") -> "SchemaConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class IngestSummary:
    rows_read: int = 0
    rows_accepted: int = 0
    rows_rejected: int = 0
    gc_filtered: int = 0
    reject_reasons: Counter = field(default_factory=Counter)
    clamp_counts: dict[str, int] = field(default_factory=dict)
    derived_own_vwaf: int = 0
    derived_features: int = 0
    derived_logged_arm: int = 0

    @property
    def total_clamps(self) -> int:
        return sum(self.clamp_counts.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "rows_rejected": self.rows_rejected,
            "gc_filtered": self.gc_filtered,
            "reject_reasons": dict(sorted(self.reject_reasons.items())),
            "clamp_counts": dict(sorted(self.clamp_counts.items())),
            "derived_own_vwaf": self.derived_own_vwaf,
            "derived_features": self.derived_features,
            "derived_logged_arm": self.derived_logged_arm,
        }


@dataclass
class IngestResult:
    records: list[LogRecord]
    summary: IngestSummary

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def parse_timestamp(value: str) -> int:
    """Epoch milliseconds from an integer string or an ISO-8601 datetime (UTC if naive)."""
    value = value.strip()
    try:
        return int(value)
    except ValueError:
        pass
    try:
        f = float(value)
    except ValueError:
        stamp = dt.datetime.fromisoformat(value.replace("Z", "+00:00"))
        if stamp.tzinfo is None:
            stamp = stamp.replace(tzinfo=dt.timezone.utc)
        return int(round(stamp.timestamp() * 1000))
    if not math.isfinite(f) or f != int(f):
        raise ValueError(f"timestamp {value!r} is not an integer millisecond count")
    return int(f)


def _float(value: str) -> float:
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {value!r}")
    return v


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "t", "yes", "y", "accept", "accepted"):
        return True
    if v in ("0", "false", "f", "no", "n", "reject", "rejected"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def nearest_arm(quotes: ArmQuotes, rate: float) -> ArmId:
    """Arm whose price is closest to ``rate``; ties go to the lower price."""
    return min(ARMS, key=lambda a: (abs(quotes.price(a) - rate), quotes.price(a), int(a)))


@dataclass
class _Row:
    line: int
    order: int
    cells: dict[str, str]
    timestamp: int


def _present(row: Mapping[str, str], name: str) -> bool:
    v = row.get(name)
    return v is not None and v.strip() != ""


def ingest_text(text: str, schema: Optional[SchemaConfig] = None) -> IngestResult:
    schema = schema or SchemaConfig()
    if not text.strip():
        raise EmptyFile("log file is empty")
    reader = csv.reader(io.StringIO(text), delimiter=schema.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyFile("log file is empty") from None
    index = {h: i for i, h in enumerate(header)}
    available = {name for name in ALL_LOGICAL if schema.header(name) in index}

    for name in REQUIRED_COLUMNS:
        if name not in available:
            raise MissingColumn(schema.header(name))
    for arm, name in ARM_COLUMNS.items():
        if name in available:
            continue
        # Own-book VWAF can be rebuilt from the log's own accepted bookings.
        if arm is ArmId.OwnVwaf and {"offered_rate", "accept_flag"} <= available:
            continue
        raise MissingColumn(schema.header(name))
    for name in FEATURE_NAMES:
        if name in available or {*_FEATURE_SOURCES[name]} <= available:
            continue
        raise MissingColumn(schema.header(name))

    summary = IngestSummary()
    rows: list[_Row] = []
    for order, cells in enumerate(reader):
        line = order + 2
        if not any(c.strip() for c in cells):
            continue
        summary.rows_read += 1
        if len(cells) != len(header):
            _reject(summary, schema, line, f"expected {len(header)} fields, got {len(cells)}",
                    "field_count")
            continue
        row = {name: cells[index[schema.header(name)]] for name in available}
        try:
            ts = parse_timestamp(row["timestamp"])
        except ValueError as exc:
            _reject(summary, schema, line, f"bad timestamp: {exc}", "timestamp")
            continue
        rows.append(_Row(line, order, row, ts))

    if summary.rows_read == 0:
        raise EmptyFile("log file has no data rows")

    rows.sort(key=lambda r: (r.timestamp, r.order))
    scale = FEE_SCALE[schema.fee_unit]
    state = MarketState(ewma_half_life=schema.ewma_half_life)
    records: list[LogRecord] = []
    for r in rows:
        try:
            rec = _build_record(r, schema, scale, state, summary)
        except (ValueError, ValidationError) as exc:
            reason = getattr(exc, "field", None) or type(exc).__name__
            _reject(summary, schema, r.line, str(exc), reason)
            continue
        if rec is None:
            continue
        records.append(rec)
    summary.rows_accepted = len(records)
    return IngestResult(records, summary)


def _reject(summary: IngestSummary, schema: SchemaConfig, line: int, message: str,
            reason: str) -> None:
    if schema.strict:
        raise ParseError(line, message)
    summary.rows_rejected += 1
    summary.reject_reasons[reason] += 1


def _build_record(r: _Row, schema: SchemaConfig, scale: float, state: MarketState,
                  summary: IngestSummary) -> Optional[LogRecord]:
    c = r.cells

    def num(name: str) -> float:
        try:
            return _float(c[name])
        except ValueError as exc:
            raise ValueError(f"column {schema.header(name)!r}: {exc}") from None

    def opt(name: str) -> Optional[float]:
        return num(name) if _present(c, name) else None

    bid = num("bid") * scale
    qty_f = num("quantity")
    if qty_f != int(qty_f):
        raise ValueError(f"quantity must be an integer, got {c['quantity']!r}")
    security = c["security_id"].strip()
    if not security:
        raise ValueError("empty security_id")
    offered = opt("offered_rate")
    offered = None if offered is None else offered * scale
    accept = _bool(c["accept_flag"]) if _present(c, "accept_flag") else None
    mv = num("market_value")

    # Own-book VWAF uses bookings strictly before this row.
    own = state.own_vwaf(security)
    # History includes filtered and rejected rows: they are still real bookings.
    if accept and offered is not None:
        state.record_booking(security, offered, mv)

    prices: dict[ArmId, float] = {}
    for arm, name in ARM_COLUMNS.items():
        v = opt(name)
        if v is not None:
            prices[arm] = v * scale
            continue
        if arm is ArmId.OwnVwaf and own is not None:
            summary.derived_own_vwaf += 1
            prices[arm] = own
            continue
        raise ValidationError(f"no price for arm {arm.name}", name)
    quotes = ArmQuotes.from_mapping(prices)

    if schema.filter_gc and quotes.price(ArmId.MarketVwaf) < schema.gc_threshold:
        summary.gc_filtered += 1
        return None

    logged_arm: Optional[ArmId] = None
    if _present(c, "logged_arm"):
        logged_arm = ArmId.parse(c["logged_arm"])
    elif offered is not None:
        logged_arm = nearest_arm(quotes, offered)
        summary.derived_logged_arm += 1

    req = validate_request(BookingRequest(
        request_id=c["request_id"].strip() if _present(c, "request_id") else f"L{r.line}",
        timestamp=r.timestamp,
        security_id=security,
        bid=bid,
        quantity=int(qty_f),
        market_value=mv,
        logged_arm=logged_arm,
        logged_status=accept,
    ))

    inputs = MarketInputs(
        demand=opt("demand"), supply=opt("supply"), lender_supply=opt("lender_supply"),
        market_supply=opt("market_supply"), alternative_supply=opt("alternative_supply"),
        return_signal=opt("return_signal"),
    )
    util = state.utilization(inputs)
    signal = state.bid_signal(security, bid)
    feats: dict[str, float] = {}
    for name in FEATURE_NAMES:
        v = opt(name)
        if v is None:
            if not all(_present(c, src) for src in _FEATURE_SOURCES[name]):
                if not (name == "utilization" and state.market_supply > 0):
                    raise ValidationError(f"missing feature {name}", name)
            if name == "utilization":
                v = util
            elif name == "market_share":
                v = safe_ratio(inputs.lender_supply, inputs.market_supply)
            elif name == "alt_supply":
                v = safe_ratio(inputs.alternative_supply, inputs.market_supply)
            else:
                v = signal
            if name != "bid_signal_scaled":
                summary.derived_features += 1
        feats[name] = v
    ctx = ContextVector.clamped(summary.clamp_counts, bias=schema.bias, **feats)
    extras = {"offered_rate": offered} if offered is not None else {}
    return LogRecord(req, ctx, quotes, extras)


def ingest(path: "str | Path", schema: Optional[SchemaConfig] = None) -> IngestResult:
    """Read a log file into time-ordered records plus an ingestion summary.

    Raises
    ------
    EmptyFile, MissingColumn, ParseError
        ``ParseError`` only in strict mode; lenient mode skips and counts.
    """
    text = Path(path).read_text(encoding="utf-8")
    return ingest_text(text, schema)


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def format_log(records: Iterable[LogRecord]) -> str:
    """Canonical, fully populated log text (fraction fees, default headers)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CANONICAL_COLUMNS)
    for rec in records:
        req, ctx, q = rec.request, rec.context, rec.quotes
        offered = rec.extras.get("offered_rate") if rec.extras else None
        w.writerow([
            req.request_id, req.timestamp, req.security_id, _fmt(req.bid), req.quantity,
            _fmt(req.market_value), *(_fmt(p) for p in q.prices),
            *(_fmt(v) for v in ctx.features()),
            _fmt(offered),
            "" if req.logged_status is None else int(req.logged_status),
            "" if req.logged_arm is None else req.logged_arm.name,
        ])
    return buf.getvalue()


def write_log(records: Sequence[LogRecord], path: "str | Path") -> None:
    Path(path).write_text(format_log(records), encoding="utf-8")
