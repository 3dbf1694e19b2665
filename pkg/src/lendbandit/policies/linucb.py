"""Disjoint LinUCB with revenue as the reward.

Each arm keeps its own ridge regression ``A = I + sum x x^T``,
``b = sum r x`` and is scored by ``theta^T x + alpha * sqrt(x^T A^-1 x)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from ..domain import ARMS, ArmId, LendBanditError, LogRecord, RewardComponents
from .base import Policy, PolicyDecision, argmax_decision


class SingularMatrix(LendBanditError):
    """A ridge matrix stopped being positive definite (corrupted state)."""


@dataclass
class LinUcbArmState:
    A: np.ndarray
    b: np.ndarray
    alpha: float = 1.0

    @classmethod
    def fresh(cls, d: int, alpha: float = 1.0) -> "LinUcbArmState":
        return cls(np.eye(d), np.zeros(d), alpha)

    def score(self, x: np.ndarray) -> float:
        try:
            # Cholesky both checks positive definiteness and solves.
            L = np.linalg.cholesky(self.A)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrix(str(exc)) from exc
        rhs = np.column_stack((self.b, x))
        sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        theta, ainv_x = sol[:, 0], sol[:, 1]
        width = float(x @ ainv_x)
        return float(theta @ x) + self.alpha * np.sqrt(max(width, 0.0))


def _scores(A: np.ndarray, b: np.ndarray, alphas: np.ndarray, x: np.ndarray) -> np.ndarray:
    """UCB scores for stacked ``A`` (k, d, d) and ``b`` (k, d) via batched Cholesky."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc
    rhs = np.empty(b.shape + (2,))
    rhs[:, :, 0] = b
    rhs[:, :, 1] = x
    sol = np.linalg.solve(np.swapaxes(L, 1, 2), np.linalg.solve(L, rhs))
    theta, ainv_x = sol[:, :, 0], sol[:, :, 1]
    width = np.maximum(ainv_x @ x, 0.0)
    return theta @ x + alphas * np.sqrt(width)


def linucb_select(states: list[LinUcbArmState], x: np.ndarray) -> PolicyDecision:
    """Score every arm with one batched Cholesky factorization."""
    A = np.stack([s.A for s in states])
    b = np.stack([s.b for s in states])
    return argmax_decision(_scores(A, b, np.array([s.alpha for s in states]), x))


def linucb_update(state: LinUcbArmState, x: np.ndarray, reward: float) -> LinUcbArmState:
    """Rank-one ridge update, in place; returns ``state`` for chaining."""
    state.A += np.outer(x, x)
    state.b += reward * x
    return state


class LinUcbPolicy(Policy):
    kind = "linucb"
    learns = True

    def __init__(self, d: int, alpha: float = 1.0, name: Optional[str] = "LinUCB") -> None:
        super().__init__(name)
        self.d = d
        self.alpha = alpha
        self._set(np.stack([np.eye(d)] * len(ARMS)), np.zeros((len(ARMS), d)),
                  [alpha] * len(ARMS))

    def _set(self, A: np.ndarray, b: np.ndarray, alphas: list[float]) -> None:
        # Per-arm states are views into the stacked arrays.
        self._A, self._b = A, b
        self._alphas = np.array(alphas, dtype=float)
        self.states = [LinUcbArmState(A[i], b[i], alphas[i]) for i in range(len(ARMS))]

    def select(self, record: LogRecord) -> PolicyDecision:
        return argmax_decision(_scores(self._A, self._b, self._alphas, record.context.as_array()))

    def update(self, record: LogRecord, arm: ArmId, outcome: RewardComponents) -> None:
        linucb_update(self.states[int(arm)], record.context.as_array(), outcome.expected_revenue)
        super().update(record, arm, outcome)

    def state_dict(self) -> dict[str, Any]:
        d = super().state_dict()
        d["params"] = {"d": self.d, "alpha": self.alpha}
        d["arms"] = [{"A": s.A.tolist(), "b": s.b.tolist(), "alpha": s.alpha} for s in self.states]
        return d

    def load_state_dict(self, state: dict[str, Any]) -> None:
        super().load_state_dict(state)
        arms = state["arms"]
        self._set(np.array([a["A"] for a in arms], dtype=float),
                  np.array([a["b"] for a in arms], dtype=float),
                  [float(a["alpha"]) for a in arms])
