"""Markov source models and the monitor's estimation rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

STOCHASTIC_TOL = 1e-12


class UnsupportedRegimeError(ValueError):
    """The source parameters fall outside the regime where the monitor's
    maximum-likelihood estimate is the last received sample."""


@dataclass(frozen=True, eq=False)
class SourceModel:
    """Discrete-time Markov source.

    Use the constructors :meth:`binary`, :meth:`symmetric` and :meth:`general`
    rather than building the matrix by hand.  The instance is immutable; the
    matrix-power cache is filled lazily and is safe to share.
    """

    kind: str
    P: np.ndarray
    p: float | None = None
    _powers: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise ValueError(f"transition matrix must be square with M >= 2, got shape {P.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise ValueError("rows of the transition matrix must sum to 1")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        self._powers.append(np.eye(P.shape[0]))

    @classmethod
    def binary(cls, p: float) -> SourceModel:
        if not 0.5 < p <= 1.0:
            raise UnsupportedRegimeError(f"binary symmetric source requires 0.5 < p <= 1, got p={p}")
        return cls("binary", np.array([[p, 1 - p], [1 - p, p]]), p=float(p))

    @classmethod
    def symmetric(cls, M: int, p: float) -> SourceModel:
        """M-state chain with self-transition ``p`` and ``r = (1-p)/(M-1)`` to each other state."""
        if M < 2:
            raise ValueError("symmetric source needs at least two states")
        if M == 2:
            return cls.binary(p)
        r = (1 - p) / (M - 1)
        if not (0 <= p <= 1 and p > r):
            raise UnsupportedRegimeError(f"symmetric source requires p > r, got p={p}, r={r}")
        P = np.full((M, M), r)
        np.fill_diagonal(P, p)
        return cls("symmetric", P, p=float(p))

    @classmethod
    def general(cls, P) -> SourceModel:
        return cls("general", np.asarray(P, dtype=float))

    @property
    def M(self) -> int:
        return self.P.shape[0]

    @property
    def r(self) -> float | None:
        if self.p is None:
            return None
        return (1 - self.p) / (self.M - 1)

    @cached_property
    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.P, axis=1)
        c[:, -1] = 1.0
        return c

    def _check_state(self, x) -> int:
        if not (isinstance(x, (int, np.integer)) and 0 <= x < self.M):
            raise ValueError(f"invalid state index {x!r} for a {self.M}-state source")
        return int(x)

    def step(self, x: int, rng) -> int:
        """Draw the next state from row ``x``.

        ``rng`` is either a ``numpy.random.Generator`` or a uniform variate in
        [0, 1) (the simulator passes pre-drawn uniforms so that runs are
        reproducible across code paths).
        """
        x = self._check_state(x)
        u = rng if isinstance(rng, float) else rng.random()
        return int(np.searchsorted(self.cumulative[x], u, side="right"))

    def n_step_matrix(self, n: int) -> np.ndarray:
        """``P**n``; powers are memoized since the solvers ask for 1..N repeatedly."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        powers = self._powers
        while len(powers) <= n:
            powers.append(powers[-1] @ self.P)
        return powers[n]

    def ml_estimate(self, last_sample: int) -> int:
        """The monitor's estimate after receiving ``last_sample``.

        In every supported regime this is the sample itself.  General
        matrices are also mapped to the last sample (see README).
        """
        last_sample = self._check_state(last_sample)
        if self.kind == "binary" and not self.p > 0.5:
            raise UnsupportedRegimeError("binary source requires p > 0.5")
        if self.kind == "symmetric" and not self.p > self.r:
            raise UnsupportedRegimeError("symmetric source requires p > r")
        return last_sample

    def stationary(self) -> np.ndarray:
        w, v = np.linalg.eig(self.P.T)
        k = int(np.argmin(np.abs(w - 1.0)))
        pi = np.real(v[:, k])
        return pi / pi.sum()

    def describe(self) -> dict:
        d = {"kind": self.kind, "M": self.M}
        if self.p is not None:
            d["p"] = self.p
        if self.kind == "general":
            d["P"] = self.P.tolist()
            d["estimator"] = "last_received_sample"
        return d


# Three-state asymmetric chain used in the asymmetric-source sweep.
ASYMMETRIC_3 = np.array([
    [0.1, 0.6, 0.3],
    [0.4, 0.0, 0.6],
    [0.8, 0.1, 0.1],
])
