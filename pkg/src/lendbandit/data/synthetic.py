"""Seeded synthetic securities-lending request log.

Stands in for proprietary exchange logs. Each security follows a latent
fair fee (mean-reverting in log space inside the specials band). Borrower
bids scatter around the fair fee with a premium that depends on the
context features, so a learner that reads the context can tell which of
the four strategy prices a bid is likely to clear. Regime shifts move the
feature means, which moves the bid premium and with it the best arm.

``return_signal`` is a noisy monotone transform of latent demand. It is a
stand-in, not a reconstruction of any proprietary signal.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..domain import (
    ARMS,
    FEATURE_NAMES,
    ArmId,
    ArmQuotes,
    BookingRequest,
    ContextVector,
    LendBanditError,
    LogRecord,
)
from .features import MarketState

DAY_MS = 86_400_000
# Per-arm price multipliers on the fair fee, least to most aggressive.
ARM_MARKUPS = (0.86, 0.97, 1.06, 1.22)
BID_INTERCEPT = 0.10
# Sensitivities of log(bid / fair fee) to the centred context features.
BID_LOADINGS = {"utilization": 0.45, "market_share": 0.30, "alt_supply": -0.30,
                "return_signal": 0.25}


class InvalidConfig(LendBanditError):
    pass


def _default_regimes() -> list[tuple[int, tuple[float, float, float, float]]]:
    # (first day, drift of utilization, market_share, alt_supply, return_signal)
    return [
        (0, (-0.15, -0.10, 0.10, -0.10)),
        (2, (0.20, 0.15, -0.15, 0.15)),
        (3, (-0.10, -0.05, 0.05, -0.05)),
        (5, (0.15, 0.10, -0.10, 0.10)),
        (6, (-0.05, 0.05, 0.0, 0.0)),
    ]


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 42
    n_securities: int = 20
    days: int = 7
    requests_per_day_range: tuple[int, int] = (250, 350)
    gc_floor: float = 0.0025
    specials_band: tuple[float, float] = (0.01, 0.10)
    regime_shift_schedule: tuple[tuple[int, tuple[float, ...]], ...] = field(
        default_factory=lambda: tuple(_default_regimes()))
    spoof_rate: float = 0.05
    delta: float = 0.85
    start_date: str = "2023-05-01"
    ewma_half_life: float = 20.0
    fee_mean_reversion: float = 0.7
    fee_volatility: float = 0.08
    bid_noise: float = 0.10
    feature_noise: float = 0.06

    def __post_init__(self) -> None:
        def bad(msg: str) -> None:
            raise InvalidConfig(msg)

        if self.n_securities < 1:
            bad("n_securities must be >= 1")
        if self.days < 1:
            bad("days must be >= 1")
        lo, hi = self.requests_per_day_range
        if not 1 <= lo <= hi:
            bad("requests_per_day_range must satisfy 1 <= low <= high")
        band_lo, band_hi = self.specials_band
        if not (0 < self.gc_floor < band_lo < band_hi):
            bad("fee bands must satisfy 0 < gc_floor < band low < band high")
        if not 0.0 <= self.spoof_rate <= 1.0:
            bad("spoof_rate must lie in [0, 1]")
        if not 0.0 < self.delta <= 1.0:
            bad("delta must lie in (0, 1]")
        if not 0.0 <= self.fee_mean_reversion < 1.0:
            bad("fee_mean_reversion must lie in [0, 1)")
        for name in ("fee_volatility", "bid_noise", "feature_noise"):
            if getattr(self, name) < 0:
                bad(f"{name} must be >= 0")
        if self.ewma_half_life <= 0:
            bad("ewma_half_life must be > 0")
        for day, drift in self.regime_shift_schedule:
            if len(drift) != 4:
                bad("each regime drift needs 4 components")
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError as exc:
            raise InvalidConfig(f"bad start_date: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "n_securities": self.n_securities,
            "days": self.days,
            "requests_per_day_range": list(self.requests_per_day_range),
            "gc_floor": self.gc_floor,
            "specials_band": list(self.specials_band),
            "regime_shift_schedule": [[d, list(v)] for d, v in self.regime_shift_schedule],
            "spoof_rate": self.spoof_rate,
            "delta": self.delta,
            "start_date": self.start_date,
            "ewma_half_life": self.ewma_half_life,
            "fee_mean_reversion": self.fee_mean_reversion,
            "fee_volatility": self.fee_volatility,
            "bid_noise": self.bid_noise,
            "feature_noise": self.feature_noise,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SyntheticConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidConfig(f"unknown synthetic config keys: {sorted(extra)}")
        kw = dict(d)
        try:
            for key in ("requests_per_day_range", "specials_band"):
                if key in kw:
                    kw[key] = tuple(kw[key])
            if "regime_shift_schedule" in kw:
                kw["regime_shift_schedule"] = tuple(
                    (int(day), tuple(float(v) for v in drift))
                    for day, drift in kw["regime_shift_schedule"])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from None

    @classmethod
    def load(cls, path: "str | Path") -> "SyntheticConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a JSON object")
        return cls.from_dict(raw)


@dataclass
class SyntheticLog:
    records: list[LogRecord]
    spoof_mask: list[bool]
    regime: list[int]
    fair_fee: list[float]
    config: SyntheticConfig

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _regime_at(schedule, day: int) -> tuple[int, np.ndarray]:
    idx, drift = -1, np.zeros(4)
    for i, (start, vec) in enumerate(sorted(schedule, key=lambda e: e[0])):
        if start <= day:
            idx, drift = i, np.asarray(vec, dtype=float)
    return idx, drift


def _r(v: float, nd: int) -> float:
    return float(round(float(v), nd))


def generate_synthetic(config: Optional[SyntheticConfig] = None) -> SyntheticLog:
    """Generate a complete, time-ordered synthetic log.

    Every record carries context, ordered arm prices, the historically
    offered arm (drawn uniformly, i.e. an exploration logging policy) and
    its realized accept flag. Output depends only on ``config``.
    """
    cfg = config or SyntheticConfig()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_securities
    band_lo, band_hi = cfg.specials_band
    # Keep the market VWAF (markup ~1.06) and the cheapest arm inside the band.
    fee_lo = band_lo / min(ARM_MARKUPS) * 1.1
    fee_hi = band_hi / max(ARM_MARKUPS) * 0.9
    log_mu = rng.uniform(np.log(fee_lo * 1.2), np.log(fee_hi * 0.6), size=n)
    log_fee = log_mu + rng.normal(0.0, cfg.fee_volatility, size=n)
    share_px = np.exp(rng.normal(np.log(40.0), 0.6, size=n))
    base = {
        "utilization": rng.uniform(0.25, 0.75, size=n),
        "market_share": rng.uniform(0.15, 0.85, size=n),
        "alt_supply": rng.uniform(0.15, 0.85, size=n),
        "return_signal": rng.uniform(0.3, 0.7, size=n),
    }
    start = dt.datetime.fromisoformat(cfg.start_date).replace(tzinfo=dt.timezone.utc)
    start_ms = int(start.timestamp() * 1000)
    state = MarketState(ewma_half_life=cfg.ewma_half_life)

    records: list[LogRecord] = []
    spoof_mask: list[bool] = []
    regimes: list[int] = []
    fair: list[float] = []
    lo, hi = cfg.requests_per_day_range
    for day in range(cfg.days):
        if day > 0:
            log_fee = log_mu + cfg.fee_mean_reversion * (log_fee - log_mu) \
                + rng.normal(0.0, cfg.fee_volatility, size=n)
        log_fee = np.clip(log_fee, np.log(fee_lo), np.log(fee_hi))
        regime, drift = _regime_at(cfg.regime_shift_schedule, day)
        day_level = {
            name: base[name] + drift[i] + rng.normal(0.0, cfg.feature_noise, size=n)
            for i, name in enumerate(("utilization", "market_share", "alt_supply", "return_signal"))
        }
        n_req = int(rng.integers(lo, hi + 1))
        # Requests arrive during a 13:30-20:00 UTC session.
        offsets = np.sort(rng.integers(48_600_000, 72_000_000, size=n_req))
        secs = rng.integers(0, n, size=n_req)
        for k in range(n_req):
            s = int(secs[k])
            f = float(np.exp(log_fee[s] + rng.normal(0.0, 0.02)))
            feats = {}
            for name in ("utilization", "market_share", "alt_supply"):
                feats[name] = _r(np.clip(day_level[name][s] + rng.normal(0.0, cfg.feature_noise),
                                         0.0, 1.0), 6)
            demand = feats["utilization"]
            feats["return_signal"] = _r(np.clip(
                0.5 * day_level["return_signal"][s] + 0.5 * demand
                + rng.normal(0.0, cfg.feature_noise), 0.0, 1.0), 6)
            premium = sum(BID_LOADINGS[k_] * (feats[k_] - 0.5) for k_ in BID_LOADINGS)
            raw = [f * m * float(np.exp(rng.normal(0.0, 0.015))) for m in ARM_MARKUPS]
            prices = np.maximum.accumulate(np.maximum(raw, cfg.gc_floor))
            prices = tuple(_r(p, 8) for p in prices)
            quotes = ArmQuotes(prices)  # type: ignore[arg-type]
            spoof = bool(rng.random() < cfg.spoof_rate)
            if spoof:
                bid = cfg.delta * quotes.price(ArmId.MarketVwaf) * float(rng.uniform(0.3, 0.95))
            else:
                bid = f * float(np.exp(BID_INTERCEPT + premium + rng.normal(0.0, cfg.bid_noise)))
            bid = _r(bid, 8)
            qty = int(rng.integers(1, 500)) * 100
            mv = _r(qty * share_px[s] * float(np.exp(rng.normal(0.0, 0.01))), 2)
            signal = state.bid_signal(f"S{s:03d}", bid)
            feats["bid_signal_scaled"] = _r(min(1.0, signal), 6)
            logged = ARMS[int(rng.integers(len(ARMS)))]
            offered = quotes.price(logged)
            accepted = bid >= offered and bid >= cfg.delta * quotes.price(ArmId.MarketVwaf)
            req = BookingRequest(
                request_id=f"D{day}R{k:05d}",
                timestamp=start_ms + day * DAY_MS + int(offsets[k]),
                security_id=f"S{s:03d}",
                bid=bid,
                quantity=qty,
                market_value=mv,
                logged_arm=logged,
                logged_status=bool(accepted),
            )
            ctx = ContextVector(**{name: feats[name] for name in FEATURE_NAMES})
            records.append(LogRecord(req, ctx, quotes, {"offered_rate": offered}))
            spoof_mask.append(spoof)
            regimes.append(regime)
            fair.append(f)
    return SyntheticLog(records, spoof_mask, regimes, fair, cfg)
