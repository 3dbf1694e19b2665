"""Offline replay of pricing policies over a time-ordered request log.

Every policy sees every request in order. The chosen arm's realized
reward is computed from the logged bid (the reward is a deterministic
function of bid and quoted price), then fed back through an update gate:

* ``FullFeedback`` updates the chosen arm on every request.
* ``ReplayMatch`` updates only when the chosen arm equals the logged arm.

Windows are day-aligned: ``train_days`` of learning followed by
``test_days`` whose revenue, regret and arm choices are reported.
"""

from __future__ import annotations

import enum
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import datetime as dt

import numpy as np

from .domain import (
    ARMS,
    ArmId,
    BookingRequest,
    LendBanditError,
    LogRecord,
    SpoofConfig,
)
from .policies import DEFAULT_POLICIES, Policy, PolicyConfig, PolicyDecision, build_policy
from .reward import RegretAccumulator, oracle_arm, resolve_benchmark, reward_components

DAY_MS = 86_400_000


class ReplayError(LendBanditError):
    pass


class EmptyWindow(ReplayError):
    pass


class InsufficientSpan(ReplayError):
    pass


class MissingLoggedArm(ReplayError):
    pass


class EmptySequence(ReplayError):
    pass


class ReplayMode(str, enum.Enum):
    FullFeedback = "full"
    ReplayMatch = "replay-match"


@dataclass(frozen=True)
class ReplayConfig:
    mode: ReplayMode = ReplayMode.FullFeedback
    train_days: int = 4
    test_days: int = 1
    spoof: SpoofConfig = field(default_factory=SpoofConfig)
    seed: int = 42
    policies: tuple[PolicyConfig, ...] = tuple(PolicyConfig(n) for n in DEFAULT_POLICIES)
    freeze_test: bool = False
    tz_offset_minutes: int = 0
    merge_rule_into_ml: bool = False

    def __post_init__(self) -> None:
        if self.train_days < 1 or self.test_days < 1:
            raise ValueError("train_days and test_days must both be >= 1")
        object.__setattr__(self, "mode", ReplayMode(self.mode))
        object.__setattr__(self, "policies",
                           tuple(PolicyConfig.parse(p) for p in self.policies))
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate policy names: {names}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "train_days": self.train_days,
            "test_days": self.test_days,
            "spoof": self.spoof.to_dict(),
            "seed": self.seed,
            "policies": [p.to_dict() for p in self.policies],
            "freeze_test": self.freeze_test,
            "tz_offset_minutes": self.tz_offset_minutes,
            "merge_rule_into_ml": self.merge_rule_into_ml,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReplayConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown replay config keys: {sorted(extra)}")
        kw = dict(d)
        if "spoof" in kw:
            kw["spoof"] = SpoofConfig.from_dict(kw["spoof"])
        if "policies" in kw:
            kw["policies"] = tuple(PolicyConfig.parse(p) for p in kw["policies"])
        return cls(**kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class PolicyReport:
    name: str
    revenue: float
    cumulative_regret: float
    selection_ratios: Mapping[ArmId, float]
    hit_rate: float
    match_rate: Optional[float]
    n_updates: int
    update_counts: tuple[int, ...]
    n_explored: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "revenue": self.revenue,
            "cumulative_regret": self.cumulative_regret,
            "selection_ratios": {a.name: self.selection_ratios[a] for a in ARMS},
            "hit_rate": self.hit_rate,
            "match_rate": self.match_rate,
            "n_updates": self.n_updates,
            "update_counts": list(self.update_counts),
            "n_explored": self.n_explored,
        }


@dataclass(frozen=True)
class ReplayReport:
    window_index: int
    start_date: str
    test_start_date: str
    end_date: str
    n_train: int
    n_test: int
    oracle_revenue: float
    policies: tuple[PolicyReport, ...]

    @property
    def label(self) -> str:
        return f"{self.start_date}..{self.end_date}"

    def policy(self, name: str) -> PolicyReport:
        for p in self.policies:
            if p.name == name:
                return p
        raise KeyError(name)

    def revenue(self) -> dict[str, float]:
        return {p.name: p.revenue for p in self.policies}

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_index": self.window_index,
            "label": self.label,
            "start_date": self.start_date,
            "test_start_date": self.test_start_date,
            "end_date": self.end_date,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "oracle_revenue": self.oracle_revenue,
            "policies": [p.to_dict() for p in self.policies],
        }


@dataclass
class WindowResult:
    report: ReplayReport
    policies: list[Policy]


def update_gate(mode: ReplayMode | str, decision: PolicyDecision, request: BookingRequest) -> bool:
    mode = ReplayMode(mode)
    if mode is ReplayMode.FullFeedback:
        return True
    if request.logged_arm is None:
        raise MissingLoggedArm(f"request {request.request_id} has no logged arm")
    return decision.chosen_arm == request.logged_arm


def compute_selection_ratios(decisions: Sequence[PolicyDecision | ArmId]) -> dict[ArmId, float]:
    """Frequency of each arm among ``decisions`` (zeros included)."""
    if not decisions:
        raise EmptySequence("no decisions to summarize")
    counts = [0] * len(ARMS)
    for d in decisions:
        arm = d.chosen_arm if isinstance(d, PolicyDecision) else ArmId.parse(d)
        counts[int(arm)] += 1
    n = len(decisions)
    return {a: counts[int(a)] / n for a in ARMS}


MERGED_ML_RULE = "MlBased/RuleBased"


def merge_rule_into_ml(ratios: Mapping[ArmId, float]) -> dict[str, float]:
    """Presentation-only view with the rule-based share folded into ML-based."""
    return {
        ArmId.OwnVwaf.name: ratios[ArmId.OwnVwaf],
        ArmId.MarketVwaf.name: ratios[ArmId.MarketVwaf],
        MERGED_ML_RULE: ratios[ArmId.MlBased] + ratios[ArmId.RuleBased],
    }


def day_index(timestamp_ms: int, tz_offset_minutes: int = 0) -> int:
    return (timestamp_ms + tz_offset_minutes * 60_000) // DAY_MS


def _date(day: int) -> str:
    return (dt.date(1970, 1, 1) + dt.timedelta(days=day)).isoformat()


def policy_rng(seed: int, window_index: int, policy_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, window_index, policy_index])


def make_policies(config: ReplayConfig, d: int, window_index: int = 0,
                  snapshots: Optional[Mapping[str, Mapping[str, Any]]] = None) -> list[Policy]:
    out = []
    for i, pc in enumerate(config.policies):
        p = build_policy(pc, d, policy_rng(config.seed, window_index, i))
        if snapshots and pc.name in snapshots:
            p.load_state_dict(dict(snapshots[pc.name]))
        out.append(p)
    return out


def run_window(log: Sequence[LogRecord], config: ReplayConfig, *, start_day: Optional[int] = None,
               window_index: int = 0,
               snapshots: Optional[Mapping[str, Mapping[str, Any]]] = None,
               policies: Optional[list[Policy]] = None) -> WindowResult:
    """Replay one train+test window and report on its test segment.

    ``log`` must be time ordered. Records outside
    ``[start_day, start_day + train_days + test_days)`` are ignored;
    ``start_day`` defaults to the day of the first record.
    """
    if not log:
        raise EmptyWindow("log is empty")
    tz = config.tz_offset_minutes
    if start_day is None:
        start_day = day_index(log[0].timestamp, tz)
    test_day = start_day + config.train_days
    end_day = test_day + config.test_days
    train: list[LogRecord] = []
    test: list[LogRecord] = []
    for rec in log:
        day = day_index(rec.timestamp, tz)
        if start_day <= day < test_day:
            train.append(rec)
        elif test_day <= day < end_day:
            test.append(rec)
    if not train:
        raise EmptyWindow(f"train segment starting {_date(start_day)} has no requests")
    if not test:
        raise EmptyWindow(f"test segment starting {_date(test_day)} has no requests")

    d = log[0].context.dim
    if policies is None:
        policies = make_policies(config, d, window_index, snapshots)
    k = len(policies)
    revenue = [0.0] * k
    regret = [RegretAccumulator() for _ in range(k)]
    chosen: list[list[PolicyDecision]] = [[] for _ in range(k)]
    hits = [0] * k
    matches = [0] * k
    n_updates = [0] * k
    start_counts = [list(p.update_counts) for p in policies]
    explored = [0] * k
    oracle_total = 0.0
    replay_match = config.mode is ReplayMode.ReplayMatch
    vwaf: dict[str, float] = {}

    for is_test, segment in ((False, train), (True, test)):
        for rec in segment:
            req = rec.request
            # The market VWAF arm is the security's current market VWAF.
            vwaf[req.security_id] = rec.quotes.price(ArmId.MarketVwaf)
            bench = resolve_benchmark(req.security_id, config.spoof, vwaf)
            outcomes = [reward_components(req.bid, rec.quotes.price(a), req.market_value,
                                          config.spoof, bench) for a in ARMS]
            if is_test:
                best_arm, best_rev = oracle_arm(req, rec.quotes, config.spoof, bench)
                oracle_total += best_rev
            for i, pol in enumerate(policies):
                dec = pol.select(rec)
                arm = dec.chosen_arm
                out = outcomes[int(arm)]
                gate = update_gate(config.mode, dec, req)
                if is_test:
                    revenue[i] += out.expected_revenue
                    regret[i].add(best_arm, arm, best_rev, out.expected_revenue)
                    chosen[i].append(dec)
                    hits[i] += out.booking_status
                    explored[i] += int(dec.explored)
                    if replay_match and gate:
                        matches[i] += 1
                if gate and not (is_test and config.freeze_test):
                    pol.update(rec, arm, out)
                    n_updates[i] += 1

    n_test = len(test)
    reports = []
    for i, pol in enumerate(policies):
        reports.append(PolicyReport(
            name=pol.name,
            revenue=revenue[i],
            cumulative_regret=regret[i].cumulative_regret,
            selection_ratios=compute_selection_ratios(chosen[i]),
            hit_rate=hits[i] / n_test,
            match_rate=matches[i] / n_test if replay_match else None,
            n_updates=n_updates[i],
            update_counts=tuple(c - s for c, s in zip(pol.update_counts, start_counts[i])),
            n_explored=explored[i],
        ))
    report = ReplayReport(
        window_index=window_index,
        start_date=_date(start_day),
        test_start_date=_date(test_day),
        end_date=_date(end_day - 1),
        n_train=len(train),
        n_test=n_test,
        oracle_revenue=oracle_total,
        policies=tuple(reports),
    )
    return WindowResult(report, policies)


def window_starts(log: Sequence[LogRecord], config: ReplayConfig) -> list[int]:
    """First day of every window, stepping one day at a time."""
    if not log:
        raise InsufficientSpan("log is empty")
    tz = config.tz_offset_minutes
    first = day_index(log[0].timestamp, tz)
    last = day_index(log[-1].timestamp, tz)
    span = last - first + 1
    width = config.train_days + config.test_days
    if span < width:
        raise InsufficientSpan(f"log spans {span} day(s); a window needs {width}")
    return [first + k for k in range(span - width + 1)]


def run_sliding(log: Sequence[LogRecord], config: ReplayConfig, *, threads: int = 1,
                snapshots: Optional[Mapping[str, Mapping[str, Any]]] = None) -> list[WindowResult]:
    """Replay every window from a cold (or snapshot) start.

    Windows are independent, so ``threads > 1`` runs them concurrently;
    results come back in window order either way.
    """
    starts = window_starts(log, config)

    def job(item: tuple[int, int]) -> WindowResult:
        k, start = item
        return run_window(log, config, start_day=start, window_index=k, snapshots=snapshots)

    items = list(enumerate(starts))
    if threads <= 1 or len(items) == 1:
        return [job(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, items))


def sliding_windows(log: Sequence[LogRecord], config: ReplayConfig, *, threads: int = 1,
                    snapshots: Optional[Mapping[str, Mapping[str, Any]]] = None) -> list[ReplayReport]:
    return [r.report for r in run_sliding(log, config, threads=threads, snapshots=snapshots)]
