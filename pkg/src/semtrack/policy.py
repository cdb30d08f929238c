"""Decision rules: RVI tables, the opportunistic baseline and a myopic AoII heuristic.

Every policy maps an :class:`Observation` to an energy-feasible action.
Observations carry only what the transmitter knows; the true source state
and the true AoII are never exposed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .actions import Action
from .belief import aoii_belief_update, expected_aoii, reset_belief
from .mdp import FiniteMdp, RviSolution, SystemConfig, feasible_actions

SCHEMA = "semtrack.policy/1"


class PolicyLoadError(ValueError):
    pass


class ConfigMismatchError(PolicyLoadError):
    pass


@dataclass(frozen=True)
class Observation:
    e: int
    x_tilde: int = 0
    x_hat: int = 0
    theta: int = 1
    Delta: int | None = None
    aoii_belief: np.ndarray | None = field(default=None, compare=False)

    @property
    def rho(self) -> int:
        return int(self.x_tilde != self.x_hat)


def _feasible(obs: Observation, c_s: int, c_t: int) -> tuple[Action, ...]:
    acts = feasible_actions(obs.e, c_s, c_t)
    if obs.rho == 0:
        # nothing new to deliver: a retransmission would only waste energy
        acts = tuple(a for a in acts if a != Action.RETRANSMIT)
    return acts


class Policy:
    """Base class.  ``needs_belief`` policies receive an AoII belief in the observation."""

    name = "policy"
    needs_belief = False

    def decide(self, obs: Observation) -> Action:
        raise NotImplementedError

    def as_table(self, config: SystemConfig, M: int, n_delta: int) -> np.ndarray | None:
        """Dense table over ``(e, theta, x_tilde, x_hat, Delta)`` for the compiled simulator."""
        return None


def decide(policy: Policy, obs: Observation) -> Action:
    return policy.decide(obs)


class BaselinePolicy(Policy):
    """Sample whenever the battery covers a sample plus a transmission, otherwise idle."""

    name = "baseline"

    def __init__(self, c_s: int = 1, c_t: int = 1):
        self.c_s, self.c_t = c_s, c_t

    def decide(self, obs: Observation) -> Action:
        return Action.SAMPLE if obs.e >= self.c_s + self.c_t else Action.IDLE

    def as_table(self, config, M, n_delta):
        e = np.arange(config.E + 1)
        col = np.where(e >= self.c_s + self.c_t, Action.SAMPLE, Action.IDLE).astype(np.int8)
        return np.broadcast_to(col[:, None, None, None, None],
                               (config.E + 1, config.N + 1, M, M, n_delta + 1)).copy()


class ConstantPolicy(Policy):
    """Always play ``action`` when feasible, otherwise idle."""

    def __init__(self, action, c_s: int = 1, c_t: int = 1):
        self.action = Action(action)
        self.c_s, self.c_t = c_s, c_t
        self.name = f"always_{self.action.name.lower()}"

    def decide(self, obs):
        return self.action if self.action in _feasible(obs, self.c_s, self.c_t) else Action.IDLE

    def as_table(self, config, M, n_delta):
        t = np.zeros((config.E + 1, config.N + 1, M, M, n_delta + 1), dtype=np.int8)
        for e in range(config.E + 1):
            for xt in range(M):
                for xh in range(M):
                    t[e, :, xt, xh, :] = self.decide(Observation(e, xt, xh))
        return t


_TABLE_AXES = ("e", "theta", "x_tilde", "x_hat", "Delta")


class TabularPolicy(Policy):
    """Action lookup keyed by a subset of the observation fields.

    ``table`` is dense over the key components; ``-1`` marks keys outside the
    solved state space and raises ``KeyError`` on lookup.  AoI components are
    clamped at their truncation bound, mirroring the MDP.
    """

    def __init__(self, fields, table, caps=None, config: SystemConfig | None = None, metric: str = "",
                 meta: dict | None = None, name: str = "optimal"):
        self.fields = tuple(fields)
        self.table = np.asarray(table, dtype=np.int8)
        self.caps = dict(caps or {})
        self.config = config
        self.metric = metric
        self.meta = dict(meta or {})
        self.name = name
        if self.table.size == 0 or not np.any(self.table >= 0):
            raise PolicyLoadError("policy table is empty")
        if self.table.ndim != len(self.fields):
            raise PolicyLoadError("table rank does not match the key descriptor")
        if config is not None and "e" in self.fields:
            self._check_feasible(config)

    def _check_feasible(self, config):
        e_axis = self.fields.index("e")
        e = np.arange(self.table.shape[e_axis]).reshape([-1 if k == e_axis else 1 for k in range(self.table.ndim)])
        t = self.table
        bad = ((t == Action.RETRANSMIT) & (e < config.c_t)) | ((t == Action.SAMPLE) & (e < config.c))
        if bad.any():
            raise PolicyLoadError("table stores an energy-infeasible action")

    @classmethod
    def from_solution(cls, mdp: FiniteMdp, sol: RviSolution, config: SystemConfig, metric: str,
                      name: str = "optimal") -> TabularPolicy:
        shape = [int(mdp.states[:, k].max()) + 1 for k in range(len(mdp.fields))]
        table = np.full(shape, -1, dtype=np.int8)
        table[tuple(mdp.states.T)] = sol.policy
        meta = {"gain": sol.gain, "residual_span": sol.residual_span, "iterations": sol.iterations,
                "mdp": mdp.name}
        return cls(mdp.fields, table, mdp.caps, config, metric, meta, name)

    def key(self, obs: Observation) -> tuple[int, ...]:
        out = []
        for f in self.fields:
            v = getattr(obs, f)
            if v is None:
                raise KeyError(f"observation lacks {f!r}")
            if f in self.caps:
                v = min(v, self.caps[f])
            out.append(int(v))
        return tuple(out)

    def decide(self, obs: Observation) -> Action:
        k = self.key(obs)
        if any(v < 0 or v >= n for v, n in zip(k, self.table.shape)):
            raise KeyError(f"state {dict(zip(self.fields, k))} outside the policy table")
        a = int(self.table[k])
        if a < 0:
            raise KeyError(f"state {dict(zip(self.fields, k))} is not in the solved state space")
        return Action(a)

    def as_table(self, config, M, n_delta):
        full = (config.E + 1, config.N + 1, M, M, n_delta + 1)
        grids = np.indices(full)
        idx, outside = [], np.zeros(full, dtype=bool)
        for k, f in enumerate(self.fields):
            g = grids[_TABLE_AXES.index(f)]
            outside |= g >= self.table.shape[k]
            idx.append(np.minimum(g, self.table.shape[k] - 1))
        out = self.table[tuple(idx)]
        out[outside] = -1
        return out


class MyopicAoiiPolicy(Policy):
    """Finite-horizon lookahead on the AoII belief.

    Stand-in for a learned policy when the channel is unreliable.  Each
    feasible action is scored by the expected sum of next-slot expected AoII
    over ``horizon`` slots, expanding the belief recursion together with the
    energy arrival and channel outcomes exactly.  Ties go to idle.
    """

    name = "aoii_myopic"
    needs_belief = True

    def __init__(self, config: SystemConfig, horizon: int = 3, tol: float = 1e-12):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.config = config
        self.horizon = horizon
        self.tol = tol
        self._reset = self._key(reset_belief(config.p, config.N))
        self._value = lru_cache(maxsize=1_000_000)(self._value_uncached)
        self._branches = lru_cache(maxsize=1_000_000)(self._branches_uncached)
        self._decisions = {}

    @staticmethod
    def _key(bel) -> bytes:
        return np.round(np.asarray(bel, dtype=float), 13).tobytes()

    def decide(self, obs: Observation) -> Action:
        acts = _feasible(obs, self.config.c_s, self.config.c_t)
        if len(acts) == 1:
            return acts[0]
        bel = obs.aoii_belief
        if bel is None:
            raise ValueError("myopic AoII policy needs the AoII belief in the observation")
        key = (self._key(bel), obs.e, obs.rho)
        a = self._decisions.get(key)
        if a is None:
            a = self._decisions[key] = self._best(*key, self.horizon)[1]
        return a

    def _branches_uncached(self, key, rho, a):
        """Belief outcomes of action ``a``: ``[(prob, belief key, spend, rho', expected AoII), ...]``.

        Independent of the battery level, which only enters through ``spend``.
        """
        cfg = self.config
        bel = np.frombuffer(key)
        if a == Action.IDLE:
            raw = [(1.0, aoii_belief_update(bel, a, rho, cfg.p), 0, rho)]
        elif a == Action.RETRANSMIT:
            raw = [(cfg.q, aoii_belief_update(bel, a, 0, cfg.p, rho=rho), cfg.c_t, 0),
                   (1 - cfg.q, aoii_belief_update(bel, a, 1, cfg.p, rho=rho), cfg.c_t, 1)]
        else:
            b0 = bel[0]
            raw = [(b0, self._reset, cfg.c_s, 0), ((1 - b0) * cfg.q, self._reset, cfg.c, 0)]
            if b0 < 1 and cfg.q < 1:
                raw.append(((1 - b0) * (1 - cfg.q), aoii_belief_update(bel, a, 1, cfg.p), cfg.c, 1))
        out = []
        for pr, b2, spend, r2 in raw:
            if pr > 0:
                k2 = b2 if isinstance(b2, bytes) else self._key(b2)
                out.append((pr, k2, spend, r2, expected_aoii(np.frombuffer(k2))))
        return tuple(out)

    def _value_uncached(self, key, e, rho, h):
        return self._best(key, e, rho, h)[0]

    def _best(self, key, e, rho, h):
        cfg = self.config
        arrivals = [(pe, du) for pe, du in ((cfg.mu, 1), (1 - cfg.mu, 0)) if pe > 0]
        best_val, best_a = np.inf, Action.IDLE
        for a in _feasible(Observation(e, rho, 0), cfg.c_s, cfg.c_t):
            val = 0.0
            for pr, k2, spend, r2, cost in self._branches(key, rho, a):
                val += pr * cost
                if h > 1:
                    for pe, du in arrivals:
                        val += pr * pe * self._value(k2, min(e - spend + du, cfg.E), r2, h - 1)
            if val < best_val - self.tol:
                best_val, best_a = val, a
        return best_val, best_a


def save_policy(policy: TabularPolicy) -> dict:
    """JSON-ready document with the action of every solved state."""
    if policy.config is None:
        raise ValueError("only policies bound to a config can be saved")
    keys = np.argwhere(policy.table >= 0)
    return {
        "schema": SCHEMA,
        "name": policy.name,
        "metric": policy.metric,
        "config": policy.config.to_dict(),
        "config_hash": policy.config.hash(),
        "state": {"fields": list(policy.fields), "shape": list(policy.table.shape), "caps": policy.caps},
        "states": keys.tolist(),
        "actions": policy.table[tuple(keys.T)].tolist(),
        "gain": policy.meta.get("gain"),
        "residual": policy.meta.get("residual_span"),
        "iterations": policy.meta.get("iterations"),
        "meta": {k: v for k, v in policy.meta.items() if k not in ("gain", "residual_span", "iterations")},
    }


def load_policy(doc, config: SystemConfig | None = None) -> TabularPolicy:
    """Inverse of :func:`save_policy`.

    When ``config`` is given its hash must match the one stored in the
    document.  Accepts a dict, a JSON string or a path.
    """
    if isinstance(doc, str):
        doc = json.loads(doc) if doc.lstrip().startswith("{") else json.load(open(doc))
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise PolicyLoadError(f"expected schema {SCHEMA!r}, got {doc.get('schema') if isinstance(doc, dict) else doc!r}")
    try:
        stored = SystemConfig.from_dict(doc["config"])
        st = doc["state"]
        states = np.asarray(doc["states"], dtype=np.int64)
        actions = np.asarray(doc["actions"], dtype=np.int8)
    except (KeyError, TypeError) as exc:
        raise PolicyLoadError(f"malformed policy document: {exc}") from exc
    if stored.hash() != doc.get("config_hash"):
        raise ConfigMismatchError("stored config does not match its hash")
    if config is not None and config.hash() != doc["config_hash"]:
        raise ConfigMismatchError(f"policy was solved for config {doc['config_hash']}, not {config.hash()}")
    if len(states) == 0 or len(states) != len(actions):
        raise PolicyLoadError("policy table is empty or inconsistent")
    table = np.full(st["shape"], -1, dtype=np.int8)
    table[tuple(states.T)] = actions
    meta = dict(doc.get("meta") or {})
    meta.update(gain=doc.get("gain"), residual_span=doc.get("residual"), iterations=doc.get("iterations"))
    return TabularPolicy(st["fields"], table, st.get("caps"), stored, doc.get("metric", ""), meta,
                         doc.get("name", "optimal"))
