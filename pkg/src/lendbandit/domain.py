"""Core value types shared by every other module.

Fees are decimal fractions per annum throughout (0.02 means 2%/yr).
All types are frozen dataclasses and safe to share between threads.
"""

from __future__ import annotations

import enum
from functools import cached_property
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional

import numpy as np


class LendBanditError(Exception):
    """Base class for all package errors."""


class ValidationError(LendBanditError, ValueError):
    """A domain invariant was violated.

    ``field`` names the offending attribute.
    """

    def __init__(self, message: str, field: str) -> None:
        super().__init__(message)
        self.field = field


class NegativeBid(ValidationError):
    pass


class NonPositiveQuantity(ValidationError):
    pass


class NegativeMarketValue(ValidationError):
    pass


class NegativePrice(ValidationError):
    pass


class IncompleteArms(ValidationError):
    pass


class ArmId(enum.IntEnum):
    """Candidate pricing strategies, in fixed tie-break order."""

    OwnVwaf = 0
    MlBased = 1
    MarketVwaf = 2
    RuleBased = 3

    @classmethod
    def parse(cls, value: "str | int | ArmId") -> "ArmId":
        if isinstance(value, ArmId):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip()
        for arm in cls:
            if arm.name.lower() == key.lower():
                return arm
        if key.isdigit():
            return cls(int(key))
        raise ValueError(f"unknown arm {value!r}")


ARMS: tuple[ArmId, ...] = tuple(ArmId)
N_ARMS = len(ARMS)

FEATURE_NAMES: tuple[str, ...] = (
    "utilization",
    "market_share",
    "alt_supply",
    "return_signal",
    "bid_signal_scaled",
)


@dataclass(frozen=True)
class BookingRequest:
    """One logged borrower request."""

    request_id: str
    timestamp: int  # epoch milliseconds
    security_id: str
    bid: float
    quantity: int
    market_value: float
    logged_arm: Optional[ArmId] = None
    logged_status: Optional[bool] = None


def validate_request(req: BookingRequest) -> BookingRequest:
    """Return ``req`` unchanged if it satisfies the request invariants.

    Raises
    ------
    NegativeBid, NonPositiveQuantity, NegativeMarketValue
    """
    if not req.bid >= 0:
        raise NegativeBid(f"bid must be >= 0, got {req.bid}", "bid")
    if not req.quantity > 0:
        raise NonPositiveQuantity(f"quantity must be > 0, got {req.quantity}", "quantity")
    if not req.market_value >= 0:
        raise NegativeMarketValue(
            f"market_value must be >= 0, got {req.market_value}", "market_value"
        )
    return req


@dataclass(frozen=True)
class ContextVector:
    """The five market features, each in [0, 1], plus an optional bias."""

    utilization: float
    market_share: float
    alt_supply: float
    return_signal: float
    bid_signal_scaled: float
    bias: bool = True

    def __post_init__(self) -> None:
        for name in FEATURE_NAMES:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name}={v} outside [0, 1]", name)

    @classmethod
    def clamped(cls, counter: Optional[dict[str, int]] = None, bias: bool = True,
                **features: float) -> "ContextVector":
        """Build a context, clamping out-of-range features into [0, 1].

        Each clamp increments ``counter[feature]`` when a counter is given.
        """
        vals = {}
        for name in FEATURE_NAMES:
            v = float(features[name])
            c = min(1.0, max(0.0, v))
            if c != v and counter is not None:
                counter[name] = counter.get(name, 0) + 1
            vals[name] = c
        return cls(bias=bias, **vals)

    def features(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in FEATURE_NAMES)

    @cached_property
    def _array(self) -> np.ndarray:
        x = self.features()
        if self.bias:
            x = x + (1.0,)
        arr = np.array(x, dtype=float)
        arr.flags.writeable = False
        return arr

    def as_array(self) -> np.ndarray:
        """Feature vector (bias last); read-only and cached."""
        return self._array

    @property
    def dim(self) -> int:
        return len(FEATURE_NAMES) + int(self.bias)


@dataclass(frozen=True)
class ArmQuote:
    arm_id: ArmId
    price: float

    def __post_init__(self) -> None:
        if not self.price >= 0:
            raise NegativePrice(f"{self.arm_id.name} price must be >= 0", "price")


@dataclass(frozen=True)
class ArmQuotes:
    """The complete action set for one request: one price per arm."""

    prices: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.prices) != N_ARMS:
            raise IncompleteArms(f"expected {N_ARMS} arm prices, got {len(self.prices)}", "prices")
        for arm, p in zip(ARMS, self.prices):
            if p is None or not p >= 0:
                raise NegativePrice(f"{arm.name} price must be >= 0, got {p}", arm.name)

    @classmethod
    def from_mapping(cls, prices: Mapping["ArmId | str", float]) -> "ArmQuotes":
        by_arm = {ArmId.parse(k): float(v) for k, v in prices.items()}
        missing = [a.name for a in ARMS if a not in by_arm]
        if missing:
            raise IncompleteArms(f"missing arm prices: {', '.join(missing)}", missing[0])
        return cls(tuple(by_arm[a] for a in ARMS))  # type: ignore[arg-type]

    def price(self, arm: ArmId) -> float:
        return self.prices[int(arm)]

    def __iter__(self) -> Iterator[ArmQuote]:
        return (ArmQuote(a, p) for a, p in zip(ARMS, self.prices))

    def is_ordered(self) -> bool:
        """True when prices follow OwnVwaf <= MlBased <= MarketVwaf <= RuleBased."""
        p = self.prices
        return p[0] <= p[1] <= p[2] <= p[3]


@dataclass(frozen=True)
class RewardComponents:
    booking_preference: float
    booking_status: int
    revenue_propensity: float
    expected_revenue: float


class BenchmarkMode(str, enum.Enum):
    MarketVwaf = "market-vwaf"
    FixedValue = "fixed"


@dataclass(frozen=True)
class SpoofConfig:
    """Anti-spoofing threshold: bids below ``delta * benchmark`` never book."""

    delta: float = 0.85
    benchmark_mode: BenchmarkMode = BenchmarkMode.MarketVwaf
    fixed_value: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.delta <= 1.0:
            raise ValidationError(f"delta must lie in (0, 1], got {self.delta}", "delta")
        if self.fixed_value is not None and not self.fixed_value >= 0:
            raise ValidationError("fixed_value must be >= 0", "fixed_value")

    @classmethod
    def parse_benchmark(cls, spec: str, delta: float = 0.85) -> "SpoofConfig":
        """Parse ``market-vwaf`` or ``fixed:<fee>``."""
        spec = spec.strip()
        if spec == BenchmarkMode.MarketVwaf.value:
            return cls(delta=delta)
        if spec.startswith("fixed:"):
            return cls(delta=delta, benchmark_mode=BenchmarkMode.FixedValue,
                       fixed_value=float(spec.split(":", 1)[1]))
        raise ValueError(f"bad benchmark spec {spec!r}; use market-vwaf or fixed:<fee>")

    def to_dict(self) -> dict:
        return {"delta": self.delta, "benchmark_mode": self.benchmark_mode.value,
                "fixed_value": self.fixed_value}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SpoofConfig":
        return cls(delta=float(d.get("delta", 0.85)),
                   benchmark_mode=BenchmarkMode(d.get("benchmark_mode", "market-vwaf")),
                   fixed_value=d.get("fixed_value"))


@dataclass(frozen=True)
class LogRecord:
    """A request together with its context and the four candidate prices."""

    request: BookingRequest
    context: ContextVector
    quotes: ArmQuotes
    extras: Mapping[str, float] = field(default_factory=dict, compare=False)

    @property
    def timestamp(self) -> int:
        return self.request.timestamp
