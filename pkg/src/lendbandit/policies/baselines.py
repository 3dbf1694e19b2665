"""Fixed pricing strategies that always quote their own price."""

from __future__ import annotations

from typing import Optional

from ..domain import ARMS, ArmId, LogRecord
from .base import Policy, PolicyDecision

BASELINE_NAMES = {
    ArmId.OwnVwaf: "OwnVWAF",
    ArmId.MlBased: "MLBased",
    ArmId.MarketVwaf: "MarketVWAF",
    ArmId.RuleBased: "RuleBased",
}


def baseline_select(policy_id: ArmId, quotes) -> PolicyDecision:
    """Quote the arm matching ``policy_id``; the context is never consulted."""
    arm = ArmId.parse(policy_id)
    return _DECISIONS[arm]


_DECISIONS = {arm: PolicyDecision(arm, tuple(1.0 if a == arm else 0.0 for a in ARMS))
              for arm in ARMS}


class BaselinePolicy(Policy):
    kind = "baseline"

    def __init__(self, arm: ArmId, name: Optional[str] = None) -> None:
        self.arm = ArmId.parse(arm)
        super().__init__(name or BASELINE_NAMES[self.arm])

    def select(self, record: LogRecord) -> PolicyDecision:
        return baseline_select(self.arm, record.quotes)
