"""Revenue-propensity reward, oracle arm and regret accounting.

The reward for quoting ``ask`` against a borrower ``bid`` is

    booking_preference = ask / bid  if bid >= ask  else 0
    booking_status     = 0 if preference == 0 or bid < delta * benchmark else 1
    revenue_propensity = booking_preference * booking_status

and the expected revenue of a quote is ``propensity * market_value * ask``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

from .domain import (
    ARMS,
    ArmId,
    ArmQuotes,
    BenchmarkMode,
    BookingRequest,
    LendBanditError,
    RewardComponents,
    SpoofConfig,
)


class NegativeRegretStep(LendBanditError):
    """A policy beat the oracle, which means the oracle is wrong."""


class MissingFixedValue(LendBanditError):
    pass


class _Counter:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.value = 0

    def incr(self) -> None:
        with self._lock:
            self.value += 1


# Times booking_preference hit the undefined bid == ask == 0 case.
both_zero_count = _Counter()


def booking_preference(bid: float, ask: float) -> float:
    """Preference for quoting ``ask`` to a borrower bidding ``bid``.

    Zero when the quote is above the bid, otherwise ``ask / bid`` so the
    value peaks at 1 when the quote equals the bid. ``bid == ask == 0`` has
    no economic match and returns 0.
    """
    if bid < ask:
        return 0.0
    if bid == 0.0:
        both_zero_count.incr()
        return 0.0
    return ask / bid


def booking_status(bid: float, ask: float, spoof: SpoofConfig, benchmark: float) -> int:
    if booking_preference(bid, ask) == 0.0 or bid < spoof.delta * benchmark:
        return 0
    return 1


def revenue_propensity(bid: float, ask: float, spoof: SpoofConfig, benchmark: float) -> float:
    bp = booking_preference(bid, ask)
    if bp == 0.0 or bid < spoof.delta * benchmark:
        return 0.0
    return bp


def expected_revenue(rp: float, market_value: float, price: float) -> float:
    return rp * market_value * price


def reward_components(bid: float, ask: float, market_value: float,
                      spoof: SpoofConfig, benchmark: float) -> RewardComponents:
    bp = booking_preference(bid, ask)
    status = 0 if bp == 0.0 or bid < spoof.delta * benchmark else 1
    rp = bp * status
    return RewardComponents(bp, status, rp, expected_revenue(rp, market_value, ask))


VwafSource = Union[Mapping[str, float], Callable[[str], Optional[float]], None]


def resolve_benchmark(security_id: str, spoof: SpoofConfig, vwaf_source: VwafSource = None) -> float:
    """Benchmark fee for the anti-spoofing threshold.

    In market-VWAF mode an unknown security yields 0, which disables the
    spoofing check for that request.
    """
    if spoof.benchmark_mode is BenchmarkMode.FixedValue:
        if spoof.fixed_value is None:
            raise MissingFixedValue("benchmark mode is fixed but no fixed_value is configured")
        return float(spoof.fixed_value)
    if vwaf_source is None:
        return 0.0
    if callable(vwaf_source):
        v = vwaf_source(security_id)
    else:
        v = vwaf_source.get(security_id)
    return 0.0 if v is None else float(v)


def oracle_arm(request: BookingRequest, quotes: ArmQuotes, spoof: SpoofConfig,
               benchmark: float) -> tuple[ArmId, float]:
    """Arm with the highest realized expected revenue.

    Ties go to the lowest price, then to the fixed arm order.
    """
    best: Optional[tuple[float, float, int]] = None
    best_arm = ARMS[0]
    for arm in ARMS:
        price = quotes.price(arm)
        rev = expected_revenue(
            revenue_propensity(request.bid, price, spoof, benchmark), request.market_value, price
        )
        key = (-rev, price, int(arm))
        if best is None or key < best:
            best, best_arm = key, arm
    assert best is not None
    return best_arm, -best[0]


@dataclass(frozen=True)
class RegretRecord:
    oracle_arm: ArmId
    chosen_arm: ArmId
    oracle_revenue: float
    chosen_revenue: float


@dataclass(frozen=True)
class RegretLedger:
    cumulative_regret: float = 0.0
    per_step_records: tuple[RegretRecord, ...] = field(default=())


def regret_step(ledger: RegretLedger, oracle_rev: float, chosen_rev: float,
                oracle: ArmId = ArmId.OwnVwaf, chosen: ArmId = ArmId.OwnVwaf) -> RegretLedger:
    """Return a new ledger with one more step appended."""
    if chosen_rev > oracle_rev:
        raise NegativeRegretStep(
            f"chosen revenue {chosen_rev} exceeds oracle revenue {oracle_rev}"
        )
    rec = RegretRecord(oracle, chosen, oracle_rev, chosen_rev)
    return RegretLedger(ledger.cumulative_regret + (oracle_rev - chosen_rev),
                        ledger.per_step_records + (rec,))


class RegretAccumulator:
    """Mutable regret ledger for long replays.

    ``regret_step`` copies its record tuple every step, which is quadratic
    over a replay; this keeps a list and snapshots on demand.
    """

    def __init__(self) -> None:
        self.cumulative_regret = 0.0
        self.records: list[RegretRecord] = []

    def add(self, oracle: ArmId, chosen: ArmId, oracle_rev: float, chosen_rev: float) -> None:
        if chosen_rev > oracle_rev:
            raise NegativeRegretStep(
                f"chosen revenue {chosen_rev} exceeds oracle revenue {oracle_rev}"
            )
        self.cumulative_regret += oracle_rev - chosen_rev
        self.records.append(RegretRecord(oracle, chosen, oracle_rev, chosen_rev))

    def ledger(self) -> RegretLedger:
        return RegretLedger(self.cumulative_regret, tuple(self.records))
