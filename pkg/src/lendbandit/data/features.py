"""VWAF and context-feature derivation from running market aggregates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..domain import BookingRequest, ContextVector, LendBanditError


class EmptyPortfolio(LendBanditError):
    pass


def compute_vwaf(loans: Iterable[tuple[float, float]]) -> float:
    """Value-weighted average fee of ``(fee, notional)`` loans."""
    num = 0.0
    den = 0.0
    n = 0
    for fee, notional in loans:
        if not notional > 0:
            raise ValueError(f"loan notional must be > 0, got {notional}")
        num += fee * notional
        den += notional
        n += 1
    if n == 0:
        raise EmptyPortfolio("cannot compute VWAF of an empty portfolio")
    return num / den


def ewma_weight(half_life: float) -> float:
    """Per-observation smoothing weight for a half-life counted in observations."""
    if not half_life > 0:
        raise ValueError(f"half-life must be > 0, got {half_life}")
    return 1.0 - math.pow(0.5, 1.0 / half_life)


@dataclass
class MarketInputs:
    """Raw per-request supply/demand quantities used to build features.

    Any field may be ``None``; missing utilization inputs fall back to the
    market-wide running ratio.
    """

    demand: Optional[float] = None
    supply: Optional[float] = None
    lender_supply: Optional[float] = None
    market_supply: Optional[float] = None
    alternative_supply: Optional[float] = None
    return_signal: Optional[float] = None


@dataclass
class MarketState:
    """Running aggregates keyed by security: bid EWMA and own-book loans."""

    ewma_half_life: float = 20.0
    bid_ewma: dict[str, float] = field(default_factory=dict)
    market_demand: float = 0.0
    market_supply: float = 0.0
    own_loans: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def bid_signal(self, security_id: str, bid: float) -> float:
        """Raw ``bid / EWMA(bid)`` using the EWMA before this bid, then absorb it."""
        prev = self.bid_ewma.get(security_id, bid)
        w = ewma_weight(self.ewma_half_life)
        self.bid_ewma[security_id] = prev + w * (bid - prev)
        if prev <= 0:
            return 1.0 if bid <= 0 else math.inf
        return bid / prev

    def utilization(self, inputs: MarketInputs) -> float:
        if inputs.demand is not None and inputs.supply:
            self.market_demand += inputs.demand
            self.market_supply += inputs.supply
            return min(1.0, inputs.demand / inputs.supply)
        if self.market_supply > 0:
            return min(1.0, self.market_demand / self.market_supply)
        return 0.0

    def record_booking(self, security_id: str, fee: float, notional: float) -> None:
        if notional > 0:
            self.own_loans.setdefault(security_id, []).append((fee, notional))

    def own_vwaf(self, security_id: str) -> Optional[float]:
        loans = self.own_loans.get(security_id)
        return compute_vwaf(loans) if loans else None


def safe_ratio(num: Optional[float], den: Optional[float]) -> float:
    if num is None or not den:
        return 0.0
    return num / den


def derive_features(request: BookingRequest, market_state: MarketState, inputs: MarketInputs,
                    clamp_counter: Optional[dict[str, int]] = None,
                    bias: bool = True) -> ContextVector:
    """Build the context for ``request`` and advance ``market_state``.

    ``bid_signal_scaled`` is clamped at 1 like every other feature; clamps
    are tallied in ``clamp_counter``.
    """
    return ContextVector.clamped(
        clamp_counter,
        bias=bias,
        utilization=market_state.utilization(inputs),
        market_share=safe_ratio(inputs.lender_supply, inputs.market_supply),
        alt_supply=safe_ratio(inputs.alternative_supply, inputs.market_supply),
        return_signal=0.0 if inputs.return_signal is None else inputs.return_signal,
        bid_signal_scaled=market_state.bid_signal(request.security_id, request.bid),
    )
