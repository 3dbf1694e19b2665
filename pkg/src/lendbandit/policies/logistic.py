"""Regularized logistic regression backbone for booking-status estimation.

Each arm carries a diagonal Gaussian over logistic weights: means ``m`` and
per-coordinate precisions ``q`` (initialized to ``0`` and ``lam``).
Observations are absorbed with the online Laplace approximation: the new
mean is the MAP point of the current Gaussian prior times one logistic
likelihood term, and the precisions gain the curvature ``x_i^2 p (1-p)``.

Three estimators share the backbone:

* ``UCB``: ``sigmoid(m.x + alpha * sqrt(sum x_i^2 / q_i))``
* ``TS``: ``sigmoid(w.x)`` with ``w_i ~ N(m_i, 1/q_i)``
* ``Greedy``: ``sigmoid(m.x)``, wrapped by epsilon-greedy exploration.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from ..domain import ARMS, N_ARMS, ArmId, LendBanditError, LogRecord, RewardComponents
from ..reward import booking_preference
from .base import Policy, PolicyDecision, argmax_decision

log = logging.getLogger(__name__)

MAX_NEWTON_ITER = 20
NEWTON_TOL = 1e-6


class NoConvergence(LendBanditError):
    pass


class EstimateMode(str, enum.Enum):
    UCB = "ucb"
    TS = "ts"
    Greedy = "greedy"


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass
class LogisticArmState:
    m: np.ndarray
    q: np.ndarray
    alpha: float = 1.0
    lam: float = 1.0

    @classmethod
    def fresh(cls, d: int, lam: float = 1.0, alpha: float = 1.0,
              q_init_as_variance: bool = False) -> "LogisticArmState":
        if not lam > 0:
            raise ValueError(f"lambda must be > 0, got {lam}")
        # q is stored as a precision; the variance reading inverts the prior.
        q0 = 1.0 / lam if q_init_as_variance else lam
        return cls(np.zeros(d), np.full(d, q0), alpha, lam)

    def copy(self) -> "LogisticArmState":
        return LogisticArmState(self.m.copy(), self.q.copy(), self.alpha, self.lam)


def logistic_predict_mean(state: LogisticArmState, x: np.ndarray) -> float:
    return sigmoid(float(state.m @ x))


def lructs_estimate_status(state: LogisticArmState, x: np.ndarray, mode: EstimateMode | str,
                           rng: Optional[np.random.Generator] = None) -> float:
    mode = EstimateMode(mode)
    if mode is EstimateMode.Greedy:
        return sigmoid(float(state.m @ x))
    if mode is EstimateMode.UCB:
        width = math.sqrt(float(np.sum(x * x / state.q)))
        return min(1.0, max(0.0, sigmoid(float(state.m @ x) + state.alpha * width)))
    if rng is None:
        raise ValueError("Thompson sampling needs a random generator")
    w = rng.normal(state.m, 1.0 / np.sqrt(state.q))
    return sigmoid(float(w @ x))


def cb_score_arm(status_estimate: float, bid: float, price: float, market_value: float) -> float:
    """Estimated revenue of quoting ``price``: status x preference x value x fee."""
    return status_estimate * booking_preference(bid, price) * market_value * price


def _log1pexp(z: float) -> float:
    return z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))


def logistic_update(state: LogisticArmState, x: np.ndarray, y: int | bool,
                    strict: bool = False) -> LogisticArmState:
    """Absorb one labelled observation; returns a new state.

    Minimizes ``0.5 * sum q_i (w_i - m_i)^2 + log(1 + exp(-s w.x))`` with
    ``s = 2y - 1`` by damped Newton from ``w = m``. The Hessian is
    ``diag(q) + c x x^T``, so by Sherman-Morrison every Newton step is
    parallel to ``u = x / q`` and the iterates stay on ``w = m + t u``.
    The iteration is therefore carried out exactly on the scalar ``t``;
    the gradient norm is ``|t - s sigmoid(-s w.x)| * ||x||``.
    """
    s = 1.0 if y else -1.0
    m, q = state.m, state.q
    u = x / q
    a = float(m @ x)
    v = float(x @ u)
    xnorm = math.sqrt(float(x @ x))

    def objective(t: float) -> float:
        return 0.5 * t * t * v + _log1pexp(-s * (a + t * v))

    t = 0.0
    converged = False
    for _ in range(MAX_NEWTON_ITER + 1):
        sig_neg = sigmoid(-s * (a + t * v))
        g = t - s * sig_neg
        if abs(g) * xnorm < NEWTON_TOL:
            converged = True
            break
        c = sig_neg * (1.0 - sig_neg)
        step = g / (1.0 + c * v)
        f0 = objective(t)
        slope = g * step * v
        lr = 1.0
        while lr > 1e-10 and objective(t - lr * step) > f0 - 1e-4 * lr * slope:
            lr *= 0.5
        t -= lr * step
    if not converged:
        msg = f"logistic update did not converge in {MAX_NEWTON_ITER} Newton iterations"
        if strict:
            raise NoConvergence(msg)
        log.warning(msg)
    w = m + t * u
    p = sigmoid(float(w @ x))
    return LogisticArmState(w, q + x * x * p * (1.0 - p), state.alpha, state.lam)


@dataclass(frozen=True)
class EpsilonSchedule:
    epsilon0: float = 0.1
    decay: str = "constant"  # or "inverse_t"
    floor: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon0 <= 1.0:
            raise ValueError(f"epsilon0 must lie in (0, 1], got {self.epsilon0}")
        if not 0.0 <= self.floor < 1.0 or self.floor > self.epsilon0:
            raise ValueError(f"floor must lie in [0, epsilon0], got {self.floor}")
        if self.decay not in ("constant", "inverse_t"):
            raise ValueError(f"unknown epsilon decay {self.decay!r}")

    def epsilon(self, t: int) -> float:
        """Exploration rate at step ``t`` (1-based)."""
        if self.decay == "constant":
            return self.epsilon0
        return max(self.floor, self.epsilon0 / max(t, 1))


def eg_select(greedy_decision: PolicyDecision, epsilon: float,
              rng: np.random.Generator) -> PolicyDecision:
    if epsilon > 0.0 and rng.random() < epsilon:
        arm = ARMS[int(rng.integers(N_ARMS))]
        return PolicyDecision(arm, greedy_decision.estimated_reward_per_arm, explored=True)
    return greedy_decision


class LogisticBanditPolicy(Policy):
    """LRUCB, LRTS or EG depending on ``mode`` (EG is Greedy plus exploration)."""

    kind = "logistic"
    learns = True

    def __init__(self, d: int, mode: EstimateMode | str, *, lam: float = 1.0,
                 alpha: float | Sequence[float] = 1.0,
                 epsilon: Optional[EpsilonSchedule] = None,
                 q_init_as_variance: bool = False,
                 rng: Optional[np.random.Generator] = None,
                 name: Optional[str] = None) -> None:
        self.mode = EstimateMode(mode)
        default_names = {EstimateMode.UCB: "LRUCB", EstimateMode.TS: "LRTS",
                         EstimateMode.Greedy: "EG"}
        super().__init__(name or default_names[self.mode])
        alphas = [float(alpha)] * N_ARMS if np.isscalar(alpha) else [float(a) for a in alpha]
        if len(alphas) != N_ARMS:
            raise ValueError(f"need one alpha per arm, got {len(alphas)}")
        self.d = d
        self.lam = lam
        self.q_init_as_variance = q_init_as_variance
        fresh = [LogisticArmState.fresh(d, lam, a, q_init_as_variance) for a in alphas]
        self._set(fresh)
        self.epsilon = epsilon if epsilon is not None else (
            EpsilonSchedule() if self.mode is EstimateMode.Greedy else None)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.t = 0

    def _set(self, states: list[LogisticArmState]) -> None:
        # Per-arm states are views into stacked (arms, d) arrays.
        self._M = np.stack([st.m for st in states])
        self._Q = np.stack([st.q for st in states])
        self._alphas = np.array([st.alpha for st in states])
        self.states = [LogisticArmState(self._M[i], self._Q[i], st.alpha, st.lam)
                       for i, st in enumerate(states)]

    def _status_estimates(self, x: np.ndarray) -> list[float]:
        """All arms at once; same values as ``lructs_estimate_status`` per arm."""
        if self.mode is EstimateMode.TS:
            z = self.rng.normal(self._M, 1.0 / np.sqrt(self._Q)) @ x
        else:
            z = self._M @ x
            if self.mode is EstimateMode.UCB:
                z = z + self._alphas * np.sqrt((x * x / self._Q).sum(axis=1))
        return [sigmoid(float(v)) for v in z]

    def estimate(self, record: LogRecord) -> PolicyDecision:
        x = record.context.as_array()
        req = record.request
        status = self._status_estimates(x)
        return argmax_decision([
            cb_score_arm(st, req.bid, record.quotes.price(arm), req.market_value)
            for arm, st in zip(ARMS, status)
        ])

    def select(self, record: LogRecord) -> PolicyDecision:
        # TS draws and EG coin flips advance the policy's own generator only.
        self.t += 1
        decision = self.estimate(record)
        if self.epsilon is not None:
            decision = eg_select(decision, self.epsilon.epsilon(self.t), self.rng)
        return decision

    def update(self, record: LogRecord, arm: ArmId, outcome: RewardComponents) -> None:
        i = int(arm)
        new = logistic_update(self.states[i], record.context.as_array(), outcome.booking_status)
        self._M[i] = new.m
        self._Q[i] = new.q
        super().update(record, arm, outcome)

    def state_dict(self) -> dict[str, Any]:
        d = super().state_dict()
        d["params"] = {"d": self.d, "mode": self.mode.value, "lam": self.lam,
                       "q_init_as_variance": self.q_init_as_variance, "t": self.t}
        d["arms"] = [{"m": s.m.tolist(), "q": s.q.tolist(), "alpha": s.alpha, "lam": s.lam}
                     for s in self.states]
        return d

    def load_state_dict(self, state: dict[str, Any]) -> None:
        super().load_state_dict(state)
        if state["params"]["mode"] != self.mode.value:
            raise ValueError("snapshot estimator mode does not match policy")
        self.t = int(state["params"].get("t", 0))
        self._set([LogisticArmState(np.array(a["m"], dtype=float), np.array(a["q"], dtype=float),
                                    float(a["alpha"]), float(a["lam"]))
                   for a in state["arms"]])
