from __future__ import annotations

import numpy as np
import pytest

from semtrack.mdp import FiniteMdp, SystemConfig, build_distortion_mdp, rvi_solve
from semtrack.policy import TabularPolicy


def make_mdp(cost, kernels, feasible=None, name="toy") -> FiniteMdp:
    """Hand-built MDP; ``kernels`` maps action code -> dense row-stochastic matrix."""
    import scipy.sparse as sp

    n = len(cost)
    feas = np.zeros((n, 3), dtype=bool)
    mats = []
    for a in range(3):
        if a in kernels:
            mats.append(sp.csr_matrix(np.asarray(kernels[a], dtype=float)))
            feas[:, a] = True if feasible is None else feasible[a]
        else:
            mats.append(sp.csr_matrix((n, n)))
    states = np.arange(n).reshape(-1, 1)
    return FiniteMdp(name, ("s",), states, np.asarray(cost, dtype=float), feas, mats)


@pytest.fixture
def cycle_mdp():
    return make_mdp([0.0, 1.0], {0: [[0, 1], [1, 0]]})


@pytest.fixture(scope="session")
def fig2_config():
    return SystemConfig(p=0.8, q=0.5, mu=0.2, E=10, N=30)


@pytest.fixture(scope="session")
def fig2_solution(fig2_config):
    mdp = build_distortion_mdp(fig2_config)
    sol = rvi_solve(mdp, fig2_config.epsilon)
    return mdp, sol


@pytest.fixture(scope="session")
def fig2_policy(fig2_config, fig2_solution):
    mdp, sol = fig2_solution
    return TabularPolicy.from_solution(mdp, sol, fig2_config, "real_time_error", name="rte_optimal")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
