"""Belief representations for the tracking problems.

Two beliefs are used:

* a scalar ``b = Pr{X(t) = 1 | history}`` for the binary distortion problem,
  which depends on the history only through the buffered sample and its age;
* a vector ``b_i = Pr{AoII(t) = i | history}``, ``i = 0..N``, for the AoII
  problem.  Mass that would move past ``N`` is folded into the last bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import Action, ContractViolation

NORM_TOL = 1e-9


@dataclass
class _Diagnostics:
    renormalizations: int = 0


diagnostics = _Diagnostics()


@dataclass(frozen=True)
class DistortionFn:
    """Bounded penalty ``f(x, x_hat)`` stored as an ``M x M`` table."""

    table: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("distortion table must be square")
        if not np.all(np.isfinite(t)):
            raise ValueError("distortion values must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def __call__(self, x: int, x_hat: int) -> float:
        return float(self.table[x, x_hat])

    @property
    def M(self) -> int:
        return self.table.shape[0]

    @classmethod
    def real_time_error(cls, M: int = 2) -> DistortionFn:
        return cls(1.0 - np.eye(M), "real_time_error")

    @classmethod
    def weighted(cls, c1: float, c2: float) -> DistortionFn:
        """Binary penalty: ``c1`` when X=0 but the estimate is 1, ``c2`` when X=1 but the estimate is 0."""
        return cls(np.array([[0.0, c1], [c2, 0.0]]), "weighted")

    @classmethod
    def mse(cls, M: int) -> DistortionFn:
        s = np.arange(M, dtype=float)
        return cls((s[:, None] - s[None, :]) ** 2, "mse")

    def describe(self) -> dict:
        return {"name": self.name, "table": self.table.tolist()}


def g(n: int, p: float) -> float:
    """Probability that a binary symmetric source is back in its starting
    state after ``n`` steps; ``g(0) = 1`` by convention."""
    if n == 0:
        return 1.0
    return 0.5 * (1.0 + (2.0 * p - 1.0) ** n)


def belief_from_aoi(x_tilde: int, theta: int, p: float) -> float:
    """``Pr{X(t) = 1}`` given the buffered sample and its age ``theta``."""
    if theta < 1:
        raise ValueError(f"AoI must be >= 1, got {theta}")
    m = (2.0 * p - 1.0) ** theta
    return 0.5 * (1.0 + m) if x_tilde == 1 else 0.5 * (1.0 - m)


def belief_vector_from_aoi(model, x_tilde: int, theta: int) -> np.ndarray:
    """Distribution of X(t) for an M-state source: row ``x_tilde`` of ``P**theta``."""
    if theta < 1:
        raise ValueError(f"AoI must be >= 1, got {theta}")
    return model.n_step_matrix(theta)[x_tilde]


def belief_update_distortion(b: float, action, x_tilde_next: int, p: float) -> float:
    action = Action(action)
    if action == Action.SAMPLE:
        return p if x_tilde_next == 1 else 1.0 - p
    return b * p + (1.0 - b) * (1.0 - p)


def expected_distortion(b, x_hat: int, f: DistortionFn) -> float:
    """Expected penalty for estimate ``x_hat``.

    ``b`` is either the scalar ``Pr{X=1}`` of a binary source or a full
    probability vector over the source states.
    """
    if np.ndim(b) == 0:
        return float(b * f.table[1, x_hat] + (1.0 - b) * f.table[0, x_hat])
    return float(np.dot(b, f.table[:, x_hat]))


def expected_aoii(bel: np.ndarray) -> float:
    bel = np.asarray(bel)
    return float(np.dot(np.arange(bel.size), bel))


def _finish(out: np.ndarray) -> np.ndarray:
    s = out.sum()
    if abs(s - 1.0) > NORM_TOL:
        diagnostics.renormalizations += 1
        out /= s
    return out


def _shift(bel: np.ndarray, scale: float) -> np.ndarray:
    """``out[i] = scale * bel[i-1]`` for ``i >= 1`` with the tail folded into the last bin."""
    out = np.zeros_like(bel)
    out[1:] = scale * bel[:-1]
    out[-1] += scale * bel[-1]
    return out


def aoii_belief_update(bel, action, rho_next: int, p: float, rho: int | None = None) -> np.ndarray:
    """One-slot update of the AoII belief for a binary symmetric source.

    ``rho_next`` is 1 when the buffered sample differs from the monitor's
    estimate after the slot.  ``rho`` (the indicator before the slot) is
    optional and only used to reject a retransmission of a sample the monitor
    already holds.
    """
    bel = np.asarray(bel, dtype=float)
    action = Action(action)
    pb = 1.0 - p
    b0 = bel[0]
    if action == Action.RETRANSMIT and rho == 0:
        raise ContractViolation("retransmission requires a buffered sample that differs from the estimate")

    if action == Action.IDLE or (action == Action.RETRANSMIT and rho_next == 1):
        if action == Action.IDLE and rho is not None and rho_next != rho:
            raise ContractViolation("the indicator cannot change while idle")
        out = _shift(bel, p)
        out[1] += (pb - p) * b0
        out[0] = b0 * p + (1.0 - b0) * pb
    elif action == Action.RETRANSMIT:
        out = _shift(bel, pb)
        out[1] += (p - pb) * b0
        out[0] = b0 * pb + (1.0 - b0) * p
    elif rho_next == 0:
        out = np.zeros_like(bel)
        out[0] = p
        out[1] += pb
    else:
        # The fresh sample differed from the estimate, so AoII(t) >= 1 is
        # known; condition on it before propagating.
        tail = 1.0 - b0
        if tail <= 0.0:
            raise ContractViolation("a failed fresh transmission is impossible when AoII is surely zero")
        cond = bel.copy()
        cond[0] = 0.0
        cond /= tail
        out = _shift(cond, p)
        out[0] = pb
    return _finish(out)


def aoii_belief_perfect(theta: int, p: float, N: int) -> np.ndarray:
    """AoII belief under a perfect channel as a function of the AoI ``theta``."""
    if theta < 1:
        raise ValueError(f"AoI must be >= 1, got {theta}")
    if theta > N:
        raise ValueError(f"AoI {theta} exceeds the truncation bound {N}")
    out = np.zeros(N + 1)
    out[0] = g(theta, p)
    i = np.arange(1, theta + 1)
    gs = 0.5 * (1.0 + (2.0 * p - 1.0) ** (theta - i))
    gs[-1] = 1.0
    out[1:theta + 1] = gs * (1.0 - p) * p ** (i - 1)
    return out


def reset_belief(p: float, N: int) -> np.ndarray:
    out = np.zeros(N + 1)
    out[0] = p
    out[1] += 1.0 - p
    return out
