"""Pricing policies and a name-based factory."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from ..domain import ArmId, LendBanditError
from .base import Policy, PolicyDecision, SnapshotError, argmax_decision
from .baselines import BASELINE_NAMES, BaselinePolicy, baseline_select
from .linucb import LinUcbArmState, LinUcbPolicy, SingularMatrix, linucb_select, linucb_update
from .logistic import (
    EpsilonSchedule,
    EstimateMode,
    LogisticArmState,
    LogisticBanditPolicy,
    NoConvergence,
    cb_score_arm,
    eg_select,
    logistic_predict_mean,
    logistic_update,
    lructs_estimate_status,
    sigmoid,
)

CB_POLICIES = ("LinUCB", "LRUCB", "EG", "LRTS")
BASELINE_POLICIES = ("OwnVWAF", "MLBased", "MarketVWAF", "RuleBased")
DEFAULT_POLICIES = CB_POLICIES + BASELINE_POLICIES


class UnknownPolicy(LendBanditError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown policy {name!r}; known: {', '.join(DEFAULT_POLICIES)}")
        self.policy_name = name


@dataclass(frozen=True)
class PolicyConfig:
    """Named policy plus its hyperparameters.

    ``kind`` defaults to ``name``, so ``PolicyConfig("LRTS")`` is enough;
    a custom label can reuse a kind, e.g. ``PolicyConfig("LRUCB-a2", "LRUCB", {"alpha": 2})``.
    """

    name: str
    kind: Optional[str] = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind is None:
            object.__setattr__(self, "kind", self.name)

    @classmethod
    def parse(cls, spec: "str | Mapping[str, Any] | PolicyConfig") -> "PolicyConfig":
        if isinstance(spec, PolicyConfig):
            return spec
        if isinstance(spec, str):
            return cls(spec)
        return cls(spec["name"], spec.get("kind"), dict(spec.get("params", {})))

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "kind": self.kind, "params": dict(self.params)}


def _lookup(kind: str) -> str:
    for known in DEFAULT_POLICIES:
        if known.lower() == kind.lower():
            return known
    raise UnknownPolicy(kind)


def validate_policy_config(cfg: PolicyConfig) -> None:
    _lookup(cfg.kind or cfg.name)


def build_policy(cfg: "PolicyConfig | str | Mapping[str, Any]", d: int,
                 rng: Optional[np.random.Generator] = None) -> Policy:
    cfg = PolicyConfig.parse(cfg)
    kind = _lookup(cfg.kind or cfg.name)
    p = dict(cfg.params)
    if kind == "LinUCB":
        return LinUcbPolicy(d, alpha=float(p.get("alpha", 1.0)), name=cfg.name)
    if kind in ("LRUCB", "LRTS", "EG"):
        mode = {"LRUCB": EstimateMode.UCB, "LRTS": EstimateMode.TS, "EG": EstimateMode.Greedy}[kind]
        eps = None
        if kind == "EG":
            eps = EpsilonSchedule(float(p.get("epsilon0", 0.1)), str(p.get("decay", "constant")),
                                  float(p.get("floor", 0.0)))
        return LogisticBanditPolicy(
            d, mode, lam=float(p.get("lam", 1.0)), alpha=p.get("alpha", 1.0), epsilon=eps,
            q_init_as_variance=bool(p.get("q_init_as_variance", False)), rng=rng, name=cfg.name,
        )
    arm = {"OwnVWAF": ArmId.OwnVwaf, "MLBased": ArmId.MlBased,
           "MarketVWAF": ArmId.MarketVwaf, "RuleBased": ArmId.RuleBased}[kind]
    return BaselinePolicy(arm, name=cfg.name)


__all__ = [
    "BASELINE_NAMES", "BASELINE_POLICIES", "CB_POLICIES", "DEFAULT_POLICIES",
    "BaselinePolicy", "EpsilonSchedule", "EstimateMode", "LinUcbArmState", "LinUcbPolicy",
    "LogisticArmState", "LogisticBanditPolicy", "NoConvergence", "Policy", "PolicyConfig",
    "PolicyDecision", "SingularMatrix", "SnapshotError", "UnknownPolicy", "argmax_decision",
    "baseline_select", "build_policy", "cb_score_arm", "eg_select", "linucb_select",
    "linucb_update", "logistic_predict_mean", "logistic_update", "lructs_estimate_status",
    "sigmoid", "validate_policy_config",
]
