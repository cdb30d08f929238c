"""Slot-level simulator of the tracking system and Monte Carlo policy evaluation.

Within a slot, with the state holding the current source value ``X(t)``:

1. the policy picks an action from the observation;
2. a sample copies ``X(t)`` into the buffer and resets ``theta``; it is sent
   only if it differs from the monitor's estimate, a retransmission always
   sends the buffer;
3. a transmission succeeds with probability ``q`` and the sender learns the
   outcome at once;
4. the battery pays for the action and then receives the arrival, capped
   at ``E``;
5. the source moves to ``X(t+1)`` and the AoII and monitor AoI are updated.

Each seed spawns three independent uniform streams (source, channel,
energy), one draw per slot each, so that competing policies see the same
environment.  Policies with a dense table run in a compiled loop; belief
driven policies use :func:`step`.  Both paths produce identical traces.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .actions import Action, ContractViolation
from .belief import DistortionFn, aoii_belief_update
from .mdp import SystemConfig, feasible_actions
from .policy import Observation, Policy
from .source import SourceModel

TRACE_COLUMNS = ("t", "e", "X", "x_tilde", "x_hat", "theta", "delta", "Delta", "action",
                 "channel_outcome", "energy_arrival")
METRICS = ("real_time_error", "distortion", "aoii", "aoi")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class SystemState:
    e: int
    X: int
    x_tilde: int
    x_hat: int
    theta: int
    delta: int
    Delta: int
    t: int = 0
    last_seen: tuple = ()

    def observation(self, belief=None) -> Observation:
        return Observation(self.e, self.x_tilde, self.x_hat, self.theta, self.Delta, belief)


def initial_state(config: SystemConfig, M: int, x0: int = 0) -> SystemState:
    """Full battery, the monitor holding the current value, and an old sample."""
    seen = tuple(0 if x == x0 else -1 for x in range(M))
    return SystemState(config.E, x0, x0, x0, config.N, 0, config.N, 0, seen)


class SimRng:
    """Three independent uniform streams derived from one seed."""

    def __init__(self, seed: int):
        self.seed = seed
        src, ch, en = np.random.SeedSequence(seed).spawn(3)
        self.source = np.random.default_rng(src)
        self.channel = np.random.default_rng(ch)
        self.energy = np.random.default_rng(en)

    def draw(self) -> tuple[float, float, float]:
        return self.source.random(), self.channel.random(), self.energy.random()

    def block(self, T: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.source.random(T), self.channel.random(T), self.energy.random(T)


@dataclass
class StepInfo:
    action: int
    channel_outcome: int  # -1 nothing sent, 0 lost, 1 delivered
    energy_arrival: int
    overflow: bool


def step(state: SystemState, action, config: SystemConfig, rng, model: SourceModel | None = None):
    """Advance one slot.  ``rng`` is a :class:`SimRng` or a ``(u_src, u_ch, u_en)`` triple."""
    model = model or config.source_model()
    a = Action(action)
    if a not in feasible_actions(state.e, config.c_s, config.c_t):
        raise ContractViolation(f"action {a.name} infeasible at battery level {state.e}")
    u_src, u_ch, u_en = rng.draw() if isinstance(rng, SimRng) else rng
    xt, xh, theta = state.x_tilde, state.x_hat, state.theta + 1
    spend, sent = 0, False
    if a == Action.SAMPLE:
        xt, theta, spend = state.X, 1, config.c_s
        if state.X != xh:
            spend += config.c_t
            sent = True
    elif a == Action.RETRANSMIT:
        spend, sent = config.c_t, True
    outcome = -1
    if sent:
        outcome = int(u_ch < config.q)
        if outcome:
            xh = xt
    arrival = int(u_en < config.mu)
    level = state.e - spend + arrival
    e = min(level, config.E)
    X = model.step(state.X, float(u_src))
    t = state.t + 1
    seen = list(state.last_seen)
    seen[X] = t
    Delta = theta if outcome == 1 else state.Delta + 1
    new = SystemState(e, X, xt, xh, theta, t - seen[xh], Delta, t, tuple(seen))
    return new, StepInfo(int(a), outcome, arrival, level > config.E)


@dataclass
class RunStats:
    seed: int
    horizon: int
    burn_in: int
    slots: int = 0
    err_sum: float = 0.0
    dist_sum: float = 0.0
    aoii_sum: float = 0.0
    aoi_sum: float = 0.0
    aoii_max: int = 0
    actions: tuple = (0, 0, 0)
    overflows: int = 0
    transmissions: int = 0
    successes: int = 0
    trace_hash: str = ""

    def mean(self, metric: str) -> float:
        s = {"real_time_error": self.err_sum, "distortion": self.dist_sum,
             "aoii": self.aoii_sum, "aoi": self.aoi_sum}[metric]
        return s / self.slots

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actions"] = list(self.actions)
        d.update({f"mean_{m}": self.mean(m) for m in METRICS})
        return d


@numba.njit(cache=True)
def _kernel(cum, ftab, table, E, N, ND, c_s, c_t, q, mu, burn, us, uc, ue, s0, seen, trace, record):
    T = us.shape[0]
    e, X, xt, xh, theta, Delta = s0[0], s0[1], s0[2], s0[3], s0[4], s0[5]
    M = cum.shape[0]
    c = c_s + c_t
    sums = np.zeros(4)
    ints = np.zeros(8, dtype=np.int64)  # n, max aoii, idle, retx, sample, overflow, tx, success
    for t in range(T):
        delta = t - seen[xh]
        a = table[e, min(theta, N), xt, xh, min(Delta, ND)]
        if a < 0 or (a == 1 and e < c_t) or (a == 2 and e < c):
            return sums, ints, t, a
        if record:
            trace[t, 0] = t
            trace[t, 1] = e
            trace[t, 2] = X
            trace[t, 3] = xt
            trace[t, 4] = xh
            trace[t, 5] = theta
            trace[t, 6] = delta
            trace[t, 7] = Delta
        if t >= burn:
            ints[0] += 1
            sums[0] += X != xh
            sums[1] += ftab[X, xh]
            sums[2] += delta
            sums[3] += Delta
            if delta > ints[1]:
                ints[1] = delta
            ints[2 + a] += 1
        spend = 0
        sent = False
        if a == 2:
            xt = X
            theta = 1
            spend = c_s
            if X != xh:
                spend += c_t
                sent = True
        else:
            theta += 1
            if a == 1:
                spend = c_t
                sent = True
        outcome = -1
        if sent:
            outcome = 1 if uc[t] < q else 0
            if outcome == 1:
                xh = xt
        arrival = 1 if ue[t] < mu else 0
        level = e - spend + arrival
        if t >= burn:
            ints[5] += level > E
            if sent:
                ints[6] += 1
                ints[7] += outcome
        if record:
            trace[t, 8] = a
            trace[t, 9] = outcome
            trace[t, 10] = arrival
        e = min(level, E)
        row = cum[X]
        nx = 0
        while nx < M - 1 and row[nx] <= us[t]:
            nx += 1
        X = nx
        seen[X] = t + 1
        Delta = theta if outcome == 1 else Delta + 1
    return sums, ints, T, -2


def _table_for(policy: Policy, config: SystemConfig, M: int):
    return policy.as_table(config, M, 2 * config.N)


def simulate(policy: Policy, config: SystemConfig, T: int, seed: int, model: SourceModel | None = None,
             f: DistortionFn | None = None, record: bool = False, engine: str = "auto",
             burn_in: int | None = None):
    """Run one seed for ``T`` slots.  Returns ``(RunStats, trace or None)``.

    Metrics are averaged over the slots after ``burn_in`` (default
    ``min(10**4, T // 10)``).  The trace is an integer array with
    :data:`TRACE_COLUMNS` covering all ``T`` slots.
    """
    model = model or config.source_model()
    f = f or config.distortion_fn()
    M = model.M
    burn = min(10_000, T // 10) if burn_in is None else burn_in
    table = None if engine == "python" else _table_for(policy, config, M)
    if table is None and engine == "numba":
        raise ValueError(f"policy {policy.name} has no table form")
    rng = SimRng(seed)
    s0 = initial_state(config, M)
    if table is not None:
        us, uc, ue = rng.block(T)
        seen = np.array(s0.last_seen, dtype=np.int64)
        buf = np.zeros((T if record else 1, 11), dtype=np.int64)
        init = np.array([s0.e, s0.X, s0.x_tilde, s0.x_hat, s0.theta, s0.Delta], dtype=np.int64)
        sums, ints, stop, bad = _kernel(model.cumulative, f.table, table, config.E, config.N, 2 * config.N,
                                        config.c_s, config.c_t, config.q, config.mu, burn, us, uc, ue,
                                        init, seen, buf, record)
        if stop < T:
            raise KeyError(f"policy {policy.name} has no feasible action for the state reached at slot {stop}"
                           f" (table entry {bad})")
        trace = buf if record else None
        stats = RunStats(seed, T, burn, int(ints[0]), *map(float, sums), int(ints[1]),
                         tuple(int(v) for v in ints[2:5]), int(ints[5]), int(ints[6]), int(ints[7]))
    else:
        stats, trace = _simulate_python(policy, config, T, rng, model, f, burn, s0, record)
    if trace is not None:
        stats.trace_hash = hashlib.sha256(np.ascontiguousarray(trace).tobytes()).hexdigest()
    return stats, trace


def _simulate_python(policy, config, T, rng, model, f, burn, state, record):
    stats = RunStats(rng.seed, T, burn)
    acts = [0, 0, 0]
    rows = [] if record else None
    belief = None
    if policy.needs_belief:
        belief = np.zeros(config.N + 1)
        belief[0] = 1.0
    for t in range(T):
        a = Action(policy.decide(state.observation(belief)))
        if a not in feasible_actions(state.e, config.c_s, config.c_t):
            raise ContractViolation(f"policy {policy.name} chose infeasible {a.name} at e={state.e}")
        new, info = step(state, a, config, rng, model)
        if t >= burn:
            stats.slots += 1
            stats.err_sum += state.X != state.x_hat
            stats.dist_sum += f.table[state.X, state.x_hat]
            stats.aoii_sum += state.delta
            stats.aoi_sum += state.Delta
            stats.aoii_max = max(stats.aoii_max, state.delta)
            acts[a] += 1
            stats.overflows += info.overflow
            if info.channel_outcome >= 0:
                stats.transmissions += 1
                stats.successes += info.channel_outcome
        if record:
            rows.append((t, state.e, state.X, state.x_tilde, state.x_hat, state.theta, state.delta, state.Delta,
                         int(a), info.channel_outcome, info.energy_arrival))
        if belief is not None:
            rho_next = int(new.x_tilde != new.x_hat)
            belief = aoii_belief_update(belief, a, rho_next, config.p, rho=state.observation().rho)
        state = new
    stats.actions = tuple(acts)
    trace = np.array(rows, dtype=np.int64).reshape(-1, 11) if record else None
    return stats, trace


@dataclass
class Evaluation:
    policy: str
    runs: list
    means: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)

    def interval(self, metric: str) -> tuple[float, float]:
        return self.means[metric] - self.ci[metric], self.means[metric] + self.ci[metric]


def evaluate(policy: Policy, config: SystemConfig, T: int, seeds, model=None, f=None,
             engine: str = "auto") -> Evaluation:
    """Per-seed averages, their pooled mean and a normal 95% half-width."""
    seeds = list(seeds)
    runs = [simulate(policy, config, T, s, model, f, engine=engine)[0] for s in seeds]
    ev = Evaluation(policy.name, runs)
    for m in METRICS:
        vals = np.array([r.mean(m) for r in runs])
        ev.means[m] = float(vals.mean())
        ev.ci[m] = float(Z95 * vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else float("inf")
    return ev


def write_trace(trace: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        w.writerows(trace.tolist())


def read_trace(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError("unexpected trace header")
    return np.array(rows[1:], dtype=np.int64).reshape(-1, len(TRACE_COLUMNS))


def verify_aoii_incremental(trace) -> bool:
    """Recompute every AoII from its definition and compare with the tracked value.

    ``delta(t) = t - V(t)`` where ``V(t)`` is the latest slot ``t' <= t`` with
    ``X(t') = x_hat(t)``.  A slot whose estimate never appeared in the
    recorded history cannot be checked and counts as a mismatch.
    """
    trace = np.asarray(trace)
    t_col, X, xh, delta = (trace[:, TRACE_COLUMNS.index(k)] for k in ("t", "X", "x_hat", "delta"))
    for k in range(len(trace)):
        j = k
        while j >= 0 and X[j] != xh[k]:
            j -= 1
        if j < 0 or t_col[k] - t_col[j] != delta[k]:
            return False
    return True


__all__ = ["SystemState", "RunStats", "Evaluation", "SimRng", "StepInfo", "step", "simulate", "evaluate",
           "initial_state", "write_trace", "read_trace", "verify_aoii_incremental", "TRACE_COLUMNS",
           "METRICS"]
