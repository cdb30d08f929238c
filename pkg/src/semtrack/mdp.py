"""Finite-state average-cost MDPs for the tracking problems and the RVI solver.

Three models are built here:

* ``distortion``: state ``(e, theta, x_tilde, x_hat)``; the belief about the
  source is a function of the buffered sample and its age ``theta``.
* ``aoii``: perfect channel only, state ``(e, theta)``.
* ``aoi``: monitor-AoI benchmark, state ``(e, Delta, theta)``.

All kernels are stored as one CSR matrix per action; rows of infeasible
actions are empty and flagged in ``feasible``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .actions import ACTIONS, Action
from .belief import DistortionFn, aoii_belief_perfect, expected_aoii, expected_distortion, g
from .source import ASYMMETRIC_3, SourceModel

log = logging.getLogger(__name__)

ROW_TOL = 1e-10


class ConfigError(ValueError):
    pass


class RviDivergenceError(RuntimeError):
    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = residuals


class MultichainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the tracking system.

    ``source`` selects the chain: ``binary`` (uses ``p``), ``symmetric``
    (uses ``M`` and ``p``) or ``general`` (uses ``matrix``; ``asym3`` is the
    built-in three-state asymmetric chain).  ``distortion`` is one of
    ``real_time_error``, ``weighted`` (with ``c1``/``c2``) or ``mse``.
    """

    p: float = 0.8
    q: float = 0.8
    mu: float = 0.5
    c_s: int = 1
    c_t: int = 1
    E: int = 10
    N: int = 30
    epsilon: float = 1e-3
    source: str = "binary"
    M: int = 2
    matrix: tuple | None = None
    distortion: str = "real_time_error"
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.matrix is not None and not isinstance(self.matrix, tuple):
            object.__setattr__(self, "matrix", tuple(tuple(float(v) for v in row) for row in self.matrix))
        self.validate()

    @property
    def c(self) -> int:
        return self.c_s + self.c_t

    def validate(self):
        errs = []
        if self.source in ("binary", "symmetric") and not 0 < self.p <= 1:
            errs.append(f"p={self.p} not in (0, 1]")
        if not 0 < self.q <= 1:
            errs.append(f"q={self.q} not in (0, 1]")
        if not 0 <= self.mu <= 1:
            errs.append(f"mu={self.mu} not in [0, 1]")
        for k in ("c_s", "c_t", "E", "N", "M"):
            if int(getattr(self, k)) != getattr(self, k):
                errs.append(f"{k} must be an integer")
        if self.c_s < 0 or self.c_t < 0:
            errs.append("costs must be nonnegative")
        if self.E < self.c:
            errs.append(f"battery capacity E={self.E} below c_s+c_t={self.c}")
        if self.N < 1:
            errs.append("N must be >= 1")
        if self.epsilon <= 0:
            errs.append("epsilon must be positive")
        if self.source not in ("binary", "symmetric", "general", "asym3"):
            errs.append(f"unknown source kind {self.source!r}")
        if self.distortion not in ("real_time_error", "weighted", "mse"):
            errs.append(f"unknown distortion {self.distortion!r}")
        if errs:
            raise ConfigError("; ".join(errs))

    def source_model(self) -> SourceModel:
        if self.source == "binary":
            return SourceModel.binary(self.p)
        if self.source == "symmetric":
            return SourceModel.symmetric(self.M, self.p)
        if self.source == "asym3":
            return SourceModel.general(ASYMMETRIC_3)
        if self.matrix is None:
            raise ConfigError("general source needs a transition matrix")
        return SourceModel.general(np.array(self.matrix))

    def n_states(self) -> int:
        if self.source == "binary":
            return 2
        if self.source == "asym3":
            return 3
        if self.source == "general":
            return len(self.matrix)
        return self.M

    def distortion_fn(self) -> DistortionFn:
        M = self.n_states()
        if self.distortion == "real_time_error":
            return DistortionFn.real_time_error(M)
        if self.distortion == "mse":
            return DistortionFn.mse(M)
        if M != 2:
            raise ConfigError("weighted distortion is defined for binary sources only")
        return DistortionFn.weighted(self.c1, self.c2)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["matrix"] is not None:
            d["matrix"] = [list(r) for r in d["matrix"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SystemConfig:
        d = dict(d)
        if d.get("matrix") is not None:
            d["matrix"] = tuple(tuple(r) for r in d["matrix"])
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_(self, **kw) -> SystemConfig:
        return replace(self, **kw)


def feasible_actions(e: int, c_s: int, c_t: int) -> tuple[Action, ...]:
    """Actions allowed by energy causality at battery level ``e``."""
    out = [Action.IDLE]
    if e >= c_t:
        out.append(Action.RETRANSMIT)
    if e >= c_s + c_t:
        out.append(Action.SAMPLE)
    return tuple(out)


@dataclass
class FiniteMdp:
    name: str
    fields: tuple[str, ...]
    states: np.ndarray
    cost: np.ndarray
    feasible: np.ndarray
    kernels: list
    caps: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {tuple(int(v) for v in s): i for i, s in enumerate(self.states)}

    @property
    def n(self) -> int:
        return len(self.states)

    def state_of(self, **components) -> int:
        return self.index[tuple(int(components[k]) for k in self.fields)]

    def transitions(self, s: int, a) -> list[tuple[int, float]]:
        row = self.kernels[int(a)].getrow(s)
        return list(zip(row.indices.tolist(), row.data.tolist()))

    def union_graph(self) -> sp.csr_matrix:
        G = self.kernels[0].copy()
        for K in self.kernels[1:]:
            G = G + K
        return (G > 0).astype(np.int8).tocsr()

    def restrict(self, keep) -> FiniteMdp:
        """Sub-MDP on the index set ``keep``, which must be closed under every action."""
        keep = np.asarray(keep)
        kernels = [K[keep][:, keep].tocsr() for K in self.kernels]
        for a, K in enumerate(kernels):
            rows = np.asarray(K.sum(axis=1)).ravel()
            bad = self.feasible[keep, a] & (np.abs(rows - 1) > ROW_TOL)
            if bad.any():
                raise ValueError("restriction set is not closed under the kernel")
        return FiniteMdp(self.name, self.fields, self.states[keep], self.cost[keep],
                         self.feasible[keep], kernels, dict(self.caps), dict(self.meta))


def _assemble(name, fields, states, cost, feasible, edges, caps, meta) -> FiniteMdp:
    n = len(states)
    kernels = []
    for a in ACTIONS:
        rows, cols, vals = edges[a]
        K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        K.sum_duplicates()
        kernels.append(K)
    return FiniteMdp(name, fields, np.asarray(states, dtype=np.int64), np.asarray(cost, dtype=float),
                     np.asarray(feasible, dtype=bool), kernels, caps, meta)


def _energy_split(e, spend, mu, E):
    """Battery after paying ``spend``: ``[(e', prob), ...]`` with arrivals capped at E."""
    out = []
    if mu > 0:
        out.append((min(e - spend + 1, E), mu))
    if mu < 1:
        out.append((min(e - spend, E), 1.0 - mu))
    return out


def build_distortion_mdp(config: SystemConfig, model: SourceModel | None = None,
                         f: DistortionFn | None = None, restrict: bool = True) -> FiniteMdp:
    """Distortion MDP on ``(e, theta, x_tilde, x_hat)``.

    The sampled value is drawn from the current belief (row ``x_tilde`` of
    ``P**theta``) and only transmitted when it differs from ``x_hat``.
    """
    model = model or config.source_model()
    f = f or config.distortion_fn()
    if f.M != model.M:
        raise ConfigError("distortion table does not match the number of source states")
    model.ml_estimate(0)
    E, N, M, q, mu = config.E, config.N, model.M, config.q, config.mu
    states = [(e, th, xt, xh) for e in range(E + 1) for th in range(1, N + 1)
              for xt in range(M) for xh in range(M)]
    index = {s: i for i, s in enumerate(states)}
    edges = {a: ([], [], []) for a in ACTIONS}
    cost = np.empty(len(states))
    feasible = np.zeros((len(states), 3), dtype=bool)

    def add(a, i, s2, pr):
        if pr > 0:
            r, c, v = edges[a]
            r.append(i)
            c.append(index[s2])
            v.append(pr)

    for i, (e, th, xt, xh) in enumerate(states):
        bvec = model.n_step_matrix(th)[xt]
        cost[i] = expected_distortion(bvec, xh, f)
        th_next = min(th + 1, N)
        for a in feasible_actions(e, config.c_s, config.c_t):
            feasible[i, a] = True
            if a == Action.IDLE:
                for e2, pe in _energy_split(e, 0, mu, E):
                    add(a, i, (e2, th_next, xt, xh), pe)
            elif a == Action.RETRANSMIT:
                outcomes = [(xt, 1.0)] if xt == xh else [(xt, q), (xh, 1.0 - q)]
                for e2, pe in _energy_split(e, config.c_t, mu, E):
                    for xh2, pq in outcomes:
                        add(a, i, (e2, th_next, xt, xh2), pe * pq)
            else:
                for x in range(M):
                    px = bvec[x]
                    if px <= 0:
                        continue
                    if x == xh:
                        spend, outcomes = config.c_s, [(xh, 1.0)]
                    else:
                        spend, outcomes = config.c, [(x, q), (xh, 1.0 - q)]
                    for e2, pe in _energy_split(e, spend, mu, E):
                        for xh2, pq in outcomes:
                            add(a, i, (e2, 1, x, xh2), px * pe * pq)

    meta = {"config": config.to_dict(), "source": model.describe(), "distortion": f.name}
    mdp = _assemble("distortion", ("e", "theta", "x_tilde", "x_hat"), states, cost, feasible,
                    edges, {"theta": N}, meta)
    return communicating_core(mdp) if restrict else mdp


def build_aoii_perfect_mdp(config: SystemConfig, restrict: bool = True) -> FiniteMdp:
    """AoII MDP on ``(e, theta)`` for a binary source over a perfect channel."""
    if config.q < 1:
        raise ConfigError("the finite AoII MDP exists only for a perfect channel (q = 1); "
                          "use the belief heuristic for q < 1")
    if config.source != "binary":
        raise ConfigError("the AoII MDP is defined for the binary symmetric source")
    E, N, p, mu = config.E, config.N, config.p, config.mu
    states = [(e, th) for e in range(E + 1) for th in range(1, N + 1)]
    index = {s: i for i, s in enumerate(states)}
    edges = {a: ([], [], []) for a in ACTIONS}
    cost = np.array([expected_aoii(aoii_belief_perfect(th, p, N)) for _, th in states])
    feasible = np.zeros((len(states), 3), dtype=bool)

    def add(a, i, s2, pr):
        if pr > 0:
            r, c, v = edges[a]
            r.append(i)
            c.append(index[s2])
            v.append(pr)

    for i, (e, th) in enumerate(states):
        feasible[i, Action.IDLE] = True
        for e2, pe in _energy_split(e, 0, mu, E):
            add(Action.IDLE, i, (e2, min(th + 1, N)), pe)
        if e >= config.c:
            feasible[i, Action.SAMPLE] = True
            g_th = g(th, p)
            for spend, pg in ((config.c, 1.0 - g_th), (config.c_s, g_th)):
                for e2, pe in _energy_split(e, spend, mu, E):
                    add(Action.SAMPLE, i, (e2, 1), pg * pe)

    meta = {"config": config.to_dict()}
    mdp = _assemble("aoii", ("e", "theta"), states, cost, feasible, edges, {"theta": N}, meta)
    return communicating_core(mdp) if restrict else mdp


def build_aoi_mdp(config: SystemConfig, restrict: bool = True) -> FiniteMdp:
    """Monitor-AoI benchmark on ``(e, Delta, theta)`` with ``theta <= Delta <= 2N``.

    A sample is always transmitted; a delivery sets the monitor AoI to the
    age of the delivered sample at the next slot.
    """
    E, N, q, mu = config.E, config.N, config.q, config.mu
    ND = 2 * N
    states = [(e, D, th) for e in range(E + 1) for D in range(1, ND + 1)
              for th in range(1, min(D, N) + 1)]
    index = {s: i for i, s in enumerate(states)}
    edges = {a: ([], [], []) for a in ACTIONS}
    cost = np.array([float(D) for _, D, _ in states])
    feasible = np.zeros((len(states), 3), dtype=bool)

    def add(a, i, s2, pr):
        if pr > 0:
            r, c, v = edges[a]
            r.append(i)
            c.append(index[s2])
            v.append(pr)

    for i, (e, D, th) in enumerate(states):
        D_next, th_next = min(D + 1, ND), min(th + 1, N)
        for a in feasible_actions(e, config.c_s, config.c_t):
            feasible[i, a] = True
            if a == Action.IDLE:
                for e2, pe in _energy_split(e, 0, mu, E):
                    add(a, i, (e2, D_next, th_next), pe)
            elif a == Action.RETRANSMIT:
                for e2, pe in _energy_split(e, config.c_t, mu, E):
                    add(a, i, (e2, min(th + 1, ND), th_next), pe * q)
                    add(a, i, (e2, D_next, th_next), pe * (1 - q))
            else:
                for e2, pe in _energy_split(e, config.c, mu, E):
                    add(a, i, (e2, 1, 1), pe * q)
                    add(a, i, (e2, D_next, 1), pe * (1 - q))

    meta = {"config": config.to_dict(), "delta_cap": ND}
    mdp = _assemble("aoi", ("e", "Delta", "theta"), states, cost, feasible, edges,
                    {"theta": N, "Delta": ND}, meta)
    return communicating_core(mdp) if restrict else mdp


def _closed_components(G) -> tuple[np.ndarray, list[int]]:
    ncomp, labels = connected_components(G, directed=True, connection="strong")
    coo = G.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_ = np.zeros(ncomp, dtype=bool)
    open_[labels[coo.row[leaving]]] = True
    return labels, [k for k in range(ncomp) if not open_[k]]


def closed_classes(mdp: FiniteMdp) -> list[np.ndarray]:
    """Strongly connected sets of the all-actions graph that no action can leave."""
    labels, closed = _closed_components(mdp.union_graph())
    return [np.flatnonzero(labels == k) for k in closed]


def check_communicating(mdp: FiniteMdp) -> bool:
    """True iff every state can reach every other under some deterministic policy."""
    ncomp, _ = connected_components(mdp.union_graph(), directed=True, connection="strong")
    return ncomp == 1


def check_weakly_accessible(mdp: FiniteMdp) -> bool:
    """True iff a single closed communicating class exists (so every state can reach it)."""
    return len(closed_classes(mdp)) == 1


def communicating_core(mdp: FiniteMdp) -> FiniteMdp:
    """Restrict ``mdp`` to its unique closed communicating class.

    States outside it (for example a full battery with a sample taken in the
    previous slot, which no transition can produce when sampling costs more
    than one unit) are dropped.
    """
    classes = closed_classes(mdp)
    if len(classes) != 1:
        raise ConfigError(f"{mdp.name} MDP has {len(classes)} closed classes; optimal cost "
                          "would depend on the initial state")
    keep = classes[0]
    if len(keep) == mdp.n:
        return mdp
    core = mdp.restrict(keep)
    core.meta["dropped_states"] = mdp.n - len(keep)
    return core


@dataclass
class RviSolution:
    gain: float
    bias: np.ndarray
    policy: np.ndarray
    iterations: int
    residual_span: float
    ref_state: int = 0
    epsilon: float = 1e-3


def _q_values(mdp: FiniteMdp, h: np.ndarray) -> np.ndarray:
    Q = np.full((mdp.n, 3), np.inf)
    for a in ACTIONS:
        ok = mdp.feasible[:, a]
        Q[ok, a] = mdp.cost[ok] + (mdp.kernels[a] @ h)[ok]
    return Q


def greedy(Q: np.ndarray, tie_tol: float = 1e-9) -> np.ndarray:
    """Argmin per row, preferring the lowest action code among near-ties."""
    best = Q.min(axis=1, keepdims=True)
    tol = tie_tol * np.maximum(1.0, np.abs(best))
    return np.argmax(Q <= best + tol, axis=1)


def rvi_solve(mdp: FiniteMdp, epsilon: float = 1e-3, ref_state: int = 0, max_iter: int = 100_000,
              aperiodicity: float = 1.0) -> RviSolution:
    """Relative value iteration.

    Iterates ``V = min_a (C + P_a h)`` and ``h = V - V[ref]`` until the
    largest change of ``h`` falls below ``epsilon``.  ``aperiodicity < 1``
    replaces every kernel by ``tau P + (1 - tau) I``, which leaves the gain and
    policy unchanged but makes periodic instances converge; the returned bias
    is rescaled to the original kernel.
    """
    if not 0 < aperiodicity <= 1:
        raise ValueError("aperiodicity must lie in (0, 1]")
    if not 0 <= ref_state < mdp.n:
        raise ValueError(f"reference state {ref_state} out of range")
    tau = aperiodicity
    if tau < 1:
        kernels = [tau * K + (1 - tau) * sp.diags(mdp.feasible[:, a].astype(float))
                   for a, K in enumerate(mdp.kernels)]
        work = replace(mdp, kernels=[K.tocsr() for K in kernels])
    else:
        work = mdp
    h = np.zeros(mdp.n)
    residuals = []
    for n in range(1, max_iter + 1):
        V = _q_values(work, h).min(axis=1)
        h_new = V - V[ref_state]
        span = float(np.max(np.abs(h_new - h)))
        h = h_new
        residuals.append(span)
        if span < epsilon:
            break
    else:
        raise RviDivergenceError(f"RVI did not converge in {max_iter} sweeps (last change {span:.3g})",
                                 residuals)
    Q = _q_values(work, h)
    V = Q.min(axis=1)
    gain = float(V[ref_state])
    log.debug("RVI %s: %d sweeps, gain %.6g", mdp.name, n, gain)
    return RviSolution(gain, tau * h, greedy(Q), n, span, ref_state, epsilon)


def bellman_residual(mdp: FiniteMdp, sol: RviSolution) -> float:
    Q = _q_values(mdp, sol.bias)
    return float(np.max(np.abs(sol.gain + sol.bias - Q.min(axis=1))))


def policy_matrix(mdp: FiniteMdp, policy) -> sp.csr_matrix:
    policy = np.asarray(policy)
    if not np.all(mdp.feasible[np.arange(mdp.n), policy]):
        raise ValueError("policy chooses an infeasible action")
    P = sp.csr_matrix((mdp.n, mdp.n))
    for a in ACTIONS:
        P = P + sp.diags((policy == a).astype(float)) @ mdp.kernels[a]
    return P.tocsr()


def _stationary(P, method: str, tol: float = 1e-12, max_iter: int = 10_000_000) -> np.ndarray:
    n = P.shape[0]
    if method == "direct":
        if not sp.issparse(P) or n <= 400:
            A = (P.toarray() if sp.issparse(P) else P).T - np.eye(n)
            A[0, :] = 1.0
            b = np.zeros(n)
            b[0] = 1.0
            pi = np.linalg.solve(A, b)
        else:
            from scipy.sparse.linalg import spsolve
            A = (P.T - sp.identity(n)).tolil()
            A[0, :] = 1.0
            b = np.zeros(n)
            b[0] = 1.0
            pi = spsolve(A.tocsc(), b)
        return pi / pi.sum()
    P = sp.csr_matrix(P)
    lazy = (0.5 * (P + sp.identity(n))).T.tocsr()
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = lazy @ pi
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise RuntimeError("power iteration did not converge")


def _dense_kernels(mdp: FiniteMdp) -> np.ndarray:
    cached = getattr(mdp, "_dense_cache", None)
    if cached is None:
        cached = np.stack([K.toarray() for K in mdp.kernels])
        mdp._dense_cache = cached
    return cached


def policy_gain_exact(mdp: FiniteMdp, policy, method: str = "direct") -> float:
    """Long-run average cost of a stationary deterministic policy.

    The stationary distribution of every closed class of the induced chain is
    computed (``direct`` linear solve or ``power`` iteration on the lazy
    chain).  With more than one closed class a :class:`MultichainWarning`
    carries the per-class gains and the largest is returned.
    """
    policy = np.asarray(policy)
    if not np.all(mdp.feasible[np.arange(mdp.n), policy]):
        raise ValueError("policy chooses an infeasible action")
    if mdp.n <= 400 and method == "direct":
        P = _dense_kernels(mdp)[policy, np.arange(mdp.n)]
    else:
        P = policy_matrix(mdp, policy)
    labels, closed = _closed_components(sp.csr_matrix(P))
    gains = []
    for k in closed:
        idx = np.flatnonzero(labels == k)
        pi = _stationary(P[idx][:, idx], method)
        gains.append(float(pi @ mdp.cost[idx]))
    if len(gains) > 1:
        warnings.warn(MultichainWarning(f"policy induces {len(gains)} closed classes with gains {gains}"))
    return max(gains)
