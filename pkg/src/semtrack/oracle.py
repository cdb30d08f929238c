"""Reference computations used to check the fast code paths.

Nothing here is tuned for speed.  The joint filter tracks the full
distribution of ``(X, AoII)`` given every observable quantity, using only
the generative model; the small-MDP solvers enumerate or linear-program
their way to the optimal gain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .actions import Action
from .mdp import FiniteMdp, policy_gain_exact


class ConditioningError(ValueError):
    """The observation has zero probability under the current filter."""


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class FilterObservation:
    """What the transmitter learns in a slot: the sampled value and the delivery flag."""

    sample: int | None = None
    delivered: bool | None = None


@dataclass(frozen=True)
class JointFilterState:
    """``table[x, d] = Pr{X = x, AoII = d | observations}`` with the AoII folded at N.

    ``x_tilde`` and ``x_hat`` are known to the transmitter and carried along.
    """

    table: np.ndarray
    x_tilde: int
    x_hat: int

    @classmethod
    def synced(cls, M: int, N: int, x: int = 0) -> JointFilterState:
        """Source, buffer and estimate all equal to ``x``; AoII zero."""
        t = np.zeros((M, N + 1))
        t[x, 0] = 1.0
        return cls(t, x, x)

    @property
    def N(self) -> int:
        return self.table.shape[1] - 1

    def delta_marginal(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def x_marginal(self) -> np.ndarray:
        return self.table.sum(axis=1)

    @property
    def rho(self) -> int:
        return int(self.x_tilde != self.x_hat)


def exact_filter_step(jf: JointFilterState, action, obs: FilterObservation, P, q: float) -> JointFilterState:
    """One Bayes predict/update step of the joint filter.

    ``P`` is the source transition matrix.  The AoII counter restarts at 0
    whenever the source equals the estimate; after a fresh sample is
    delivered it can only be 0 or 1 at the next slot since the source held the
    delivered value when it was sampled.
    """
    P = np.asarray(P, dtype=float)
    a = Action(action)
    table = jf.table.copy()
    M, n1 = table.shape
    x_tilde, x_hat = jf.x_tilde, jf.x_hat
    fresh = False
    if a == Action.SAMPLE:
        if obs.sample is None:
            raise ValueError("a sample observation must carry the sampled value")
        keep = np.zeros(M, dtype=bool)
        keep[obs.sample] = True
        table[~keep] = 0.0
        x_tilde = obs.sample
        sent = obs.sample != x_hat
    else:
        sent = a == Action.RETRANSMIT
    if sent:
        if obs.delivered is None:
            raise ValueError("a transmission needs the delivery flag")
        p_obs = q if obs.delivered else 1.0 - q
        if p_obs <= 0:
            raise ConditioningError("delivery outcome has zero probability")
        if obs.delivered:
            fresh = a == Action.SAMPLE and x_tilde != x_hat
            x_hat = x_tilde
    z = table.sum()
    if z <= 0:
        raise ConditioningError("observation has zero probability under the filter")
    table /= z

    out = np.zeros_like(table)
    for x2 in range(M):
        w = P[:, x2] @ table  # mass over the current AoII that moves the source to x2
        if x2 == x_hat:
            out[x2, 0] = w.sum()
        elif fresh:
            out[x2, 1] = w.sum()
        else:
            out[x2, 1:] += w[:-1]
            out[x2, -1] += w[-1]
    return JointFilterState(out, x_tilde, x_hat)


def x_marginal_after(P, x_sample: int, theta: int) -> np.ndarray:
    """Distribution of the source ``theta`` slots after observing ``x_sample``, by one-step propagation."""
    P = np.asarray(P, dtype=float)
    v = np.zeros(P.shape[0])
    v[x_sample] = 1.0
    for _ in range(theta):
        v = v @ P
    return v


def _policy_space(mdp: FiniteMdp):
    choices = [np.flatnonzero(mdp.feasible[s]) for s in range(mdp.n)]
    return choices, math.prod(len(c) for c in choices)


def brute_force_gain(mdp: FiniteMdp, max_states: int = 200, max_policies: int = 2_000_000):
    """Minimum gain over every deterministic stationary policy.

    Returns ``(gain, policy)``.  Each policy is scored with
    :func:`policy_gain_exact`; multichain policies are scored by their
    worst closed class.
    """
    import warnings

    from .mdp import MultichainWarning

    if mdp.n > max_states:
        raise InstanceTooLarge(f"{mdp.n} states exceed the limit of {max_states}")
    choices, count = _policy_space(mdp)
    if count > max_policies:
        raise InstanceTooLarge(f"{count} policies exceed the limit of {max_policies}")
    best, best_pol = np.inf, None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MultichainWarning)
        for combo in itertools.product(*choices):
            pol = np.array(combo)
            gain = policy_gain_exact(mdp, pol)
            if gain < best - 1e-13:
                best, best_pol = gain, pol
    return best, best_pol


def lp_gain(mdp: FiniteMdp) -> float:
    """Optimal gain from the occupation-measure linear program.

    Minimises the expected cost over stationary state-action frequencies
    subject to flow balance.  Used where exhaustive search is out of reach.
    """
    from scipy.optimize import linprog
    import scipy.sparse as sp

    pairs = [(s, a) for s in range(mdp.n) for a in range(3) if mdp.feasible[s, a]]
    n_var = len(pairs)
    rows, cols, vals = [], [], []
    for j, (s, a) in enumerate(pairs):
        rows.append(s)
        cols.append(j)
        vals.append(1.0)
        r = mdp.kernels[a].getrow(s)
        rows.extend(r.indices.tolist())
        cols.extend([j] * r.nnz)
        vals.extend((-r.data).tolist())
    A = sp.csr_matrix((vals, (rows, cols)), shape=(mdp.n, n_var))
    A = sp.vstack([A, sp.csr_matrix(np.ones((1, n_var)))])
    b = np.zeros(mdp.n + 1)
    b[-1] = 1.0
    cost = np.array([mdp.cost[s] for s, _ in pairs])
    res = linprog(cost, A_eq=A, b_eq=b, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if not res.success:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(res.fun)
