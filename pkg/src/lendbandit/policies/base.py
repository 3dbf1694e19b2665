from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from ..domain import ARMS, ArmId, LendBanditError, LogRecord, RewardComponents

SNAPSHOT_FORMAT = "lendbandit.policy-state"
SNAPSHOT_VERSION = 1


class SnapshotError(LendBanditError):
    pass


@dataclass(frozen=True)
class PolicyDecision:
    chosen_arm: ArmId
    estimated_reward_per_arm: tuple[float, ...]
    explored: bool = False

    def estimate(self, arm: ArmId) -> float:
        return self.estimated_reward_per_arm[int(arm)]


def argmax_decision(scores: np.ndarray | list[float]) -> PolicyDecision:
    """Pick the highest score; ties go to the earliest arm in fixed order."""
    scores = [float(s) for s in scores]
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return PolicyDecision(ARMS[best], tuple(scores))


class Policy:
    """Common interface for every pricing policy.

    ``select`` must not mutate learned state; ``update`` receives the
    realized reward of one arm (partial feedback).
    """

    name: str = "policy"
    kind: str = "base"
    learns: bool = False

    def __init__(self, name: Optional[str] = None) -> None:
        if name is not None:
            self.name = name
        self.update_counts = [0] * len(ARMS)

    def select(self, record: LogRecord) -> PolicyDecision:
        raise NotImplementedError

    def update(self, record: LogRecord, arm: ArmId, outcome: RewardComponents) -> None:
        self.update_counts[int(arm)] += 1

    def state_dict(self) -> dict[str, Any]:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "policy": self.name,
            "kind": self.kind,
            "update_counts": list(self.update_counts),
        }

    def load_state_dict(self, state: dict[str, Any]) -> None:
        if state.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError(f"not a policy snapshot: format={state.get('format')!r}")
        if state.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {state.get('version')!r}")
        if state.get("kind") != self.kind:
            raise SnapshotError(f"snapshot kind {state.get('kind')!r} does not match {self.kind!r}")
        self.update_counts = [int(c) for c in state.get("update_counts", [0] * len(ARMS))]
