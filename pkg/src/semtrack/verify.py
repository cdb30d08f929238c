"""Cross-checks of the closed-form beliefs and the solver against the oracles.

Used by ``semtrack verify`` and by the acceptance tests.
"""

from __future__ import annotations

import itertools
import time

import numpy as np

from .actions import Action
from .belief import aoii_belief_perfect, aoii_belief_update, belief_from_aoi, reset_belief
from .mdp import (SystemConfig, build_aoi_mdp, build_aoii_perfect_mdp, build_distortion_mdp, check_communicating,
                  rvi_solve)
from .oracle import (FilterObservation, InstanceTooLarge, JointFilterState, brute_force_gain, exact_filter_step,
                     lp_gain)


def filter_agreement(n_traj: int, length: int = 50, ps=(0.6, 0.7, 0.8, 0.9), qs=(0.5, 0.8, 1.0), N: int = 30,
                     seed: int = 0) -> dict:
    """Run random action/observation trajectories through the joint filter and the closed forms.

    Returns the largest deviation of the AoII belief from the filter's AoII
    marginal and of the AoI-based source belief from the filter's source
    marginal.
    """
    rng = np.random.default_rng(seed)
    combos = list(itertools.product(ps, qs))
    worst_delta = worst_x = 0.0
    steps = 0
    for k in range(n_traj):
        p, q = combos[k % len(combos)]
        P = np.array([[p, 1 - p], [1 - p, p]])
        X = int(rng.integers(2))
        jf = JointFilterState.synced(2, N, X)
        bel = np.zeros(N + 1)
        bel[0] = 1.0
        x_tilde = x_hat = X
        theta = None
        for _ in range(length):
            rho = int(x_tilde != x_hat)
            options = [Action.IDLE, Action.SAMPLE] + ([Action.RETRANSMIT] if rho else [])
            a = options[rng.integers(len(options))]
            obs = FilterObservation()
            if a == Action.SAMPLE:
                x_tilde, theta = X, 0
                if X != x_hat:
                    ok = bool(rng.random() < q)
                    obs = FilterObservation(X, ok)
                    x_hat = X if ok else x_hat
                else:
                    obs = FilterObservation(X, None)
            elif a == Action.RETRANSMIT:
                ok = bool(rng.random() < q)
                obs = FilterObservation(None, ok)
                x_hat = x_tilde if ok else x_hat
            jf = exact_filter_step(jf, a, obs, P, q)
            bel = aoii_belief_update(bel, a, int(x_tilde != x_hat), p, rho=rho)
            X = int(rng.random() >= p) ^ X
            worst_delta = max(worst_delta, float(np.max(np.abs(jf.delta_marginal() - bel))))
            if theta is not None:
                theta += 1
                if theta <= N:
                    b1 = belief_from_aoi(x_tilde, theta, p)
                    worst_x = max(worst_x, abs(jf.x_marginal()[1] - b1))
            steps += 1
    return {"aoii_belief": worst_delta, "source_belief": worst_x, "steps": steps}


def perfect_channel_agreement(ps=(0.6, 0.7, 0.8, 0.9), N: int = 30) -> dict:
    """Closed-form perfect-channel belief versus repeated idle updates from the reset belief."""
    worst_sum = worst_iter = 0.0
    for p in ps:
        bel = reset_belief(p, N)
        for theta in range(1, N + 1):
            if theta > 1:
                bel = aoii_belief_update(bel, Action.IDLE, 0, p)
            closed = aoii_belief_perfect(theta, p, N)
            worst_sum = max(worst_sum, abs(closed.sum() - 1.0))
            worst_iter = max(worst_iter, float(np.max(np.abs(closed - bel))))
    return {"sum": worst_sum, "iteration": worst_iter}


def small_instance_grid():
    """Configs with E <= 2 and N <= 3 for the exhaustive comparison."""
    out = []
    for (c_s, c_t), E, N, p, q, mu in itertools.product(((1, 1), (1, 0)), (1, 2), (1, 2, 3), (0.7, 0.9),
                                                         (0.6, 1.0), (0.3, 0.8)):
        if E < c_s + c_t:
            continue
        out.append(SystemConfig(p=p, q=q, mu=mu, c_s=c_s, c_t=c_t, E=E, N=N))
    return out


def small_instance_agreement(configs=None, max_policies: int = 20_000, epsilon: float = 1e-12) -> list[dict]:
    """RVI gain against exhaustive search (or the LP where the policy count is too large)."""
    rows = []
    for cfg in configs or small_instance_grid():
        builders = [("distortion", build_distortion_mdp)]
        if cfg.q == 1:
            builders.append(("aoii", build_aoii_perfect_mdp))
        for name, build in builders:
            mdp = build(cfg)
            sol = rvi_solve(mdp, epsilon)
            try:
                ref, _ = brute_force_gain(mdp, max_policies=max_policies)
                method = "exhaustive"
            except InstanceTooLarge:
                ref, method = lp_gain(mdp), "lp"
            rows.append({"config": cfg, "mdp": name, "rvi": sol.gain, "oracle": ref, "method": method,
                         "error": abs(sol.gain - ref)})
    return rows


def communicating_grid(ps=(0.6, 0.7, 0.8, 0.9), qs=(0.5, 0.8, 1.0), mus=(0.1, 0.5, 1.0), Es=(2, 5, 10), N=30):
    """Build every MDP over the grid; returns the list of builds that are not communicating."""
    bad = []
    n = 0
    for p, q, mu, E in itertools.product(ps, qs, mus, Es):
        cfg = SystemConfig(p=p, q=q, mu=mu, E=E, N=N)
        mdps = [build_distortion_mdp(cfg), build_aoi_mdp(cfg)]
        if q == 1:
            mdps.append(build_aoii_perfect_mdp(cfg))
        for m in mdps:
            n += 1
            if not check_communicating(m):
                bad.append((m.name, cfg))
    return bad, n


def run_checks(quick: bool = True):
    out = []
    t0 = time.perf_counter()
    r = filter_agreement(600 if quick else 10_000)
    ok = r["aoii_belief"] <= 1e-9 and r["source_belief"] <= 1e-9
    out.append(("belief vs joint filter", ok, f"{r} in {time.perf_counter() - t0:.1f} s"))
    r = perfect_channel_agreement()
    out.append(("perfect-channel closed form", r["sum"] <= 1e-12 and r["iteration"] <= 1e-12, str(r)))
    grid = small_instance_grid()
    rows = small_instance_agreement(grid[::6] if quick else grid)
    worst = max(x["error"] for x in rows)
    out.append(("RVI vs exhaustive/LP", worst <= 1e-8, f"{len(rows)} instances, worst {worst:.2e}"))
    bad, n = communicating_grid(qs=(0.5, 1.0), Es=(5,)) if quick else communicating_grid()
    out.append(("communicating", not bad, f"{n} MDPs, {len(bad)} failures"))
    return out
