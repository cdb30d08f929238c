"""Sweep definitions for the published experiment settings.

Fixed parameters come from the figure captions; sweep values are chosen to
span each axis since only the ranges are shown graphically.  Parameters not
stated in a caption take the defaults ``c_s = c_t = 1, E = 10, N = 30``.
"""

from __future__ import annotations

from .experiment import ExperimentSpec
from .mdp import SystemConfig

_ALL = ["optimal", "baseline", "aoi_optimal"]

# name -> (metric, fixed overrides, swept parameter, values, policies)
FIGURES = {
    "rte_vs_p": ("real_time_error", dict(mu=0.5, q=0.8, E=5), "p", [0.6, 0.7, 0.8, 0.9, 0.95], _ALL),
    "rte_vs_mu": ("real_time_error", dict(p=0.8, q=0.7, E=5), "mu", [0.1, 0.3, 0.5, 0.7, 0.9], _ALL),
    "rte_vs_q": ("real_time_error", dict(p=0.7, mu=0.5, E=5), "q", [0.2, 0.4, 0.6, 0.8, 1.0], _ALL),
    "rte_vs_E": ("real_time_error", dict(p=0.8, q=0.7, mu=0.5), "E", [2, 4, 6, 8, 10], _ALL),
    "rte_vs_ct": ("real_time_error", dict(p=0.8, q=0.7, mu=0.6, E=10, c_s=1), "c_t", [1, 2, 3, 4, 5], _ALL),
    "rte_vs_N": ("real_time_error", dict(p=0.7, mu=0.5, q=0.6, E=10), "N", [5, 10, 20, 30, 45, 60],
                 ["optimal"]),
    "aoii_vs_N": ("aoii", dict(p=0.7, mu=0.3, q=1.0, E=10), "N", [5, 10, 20, 30, 45, 60], ["optimal"]),
    "aoii_vs_p": ("aoii", dict(mu=0.5, q=1.0, E=5), "p", [0.6, 0.7, 0.8, 0.9, 0.95], _ALL + ["rte_optimal"]),
    "aoii_vs_mu": ("aoii", dict(p=0.7, q=1.0, E=5), "mu", [0.1, 0.3, 0.5, 0.7, 0.9], _ALL + ["rte_optimal"]),
    "aoii_vs_q": ("aoii", dict(p=0.7, mu=0.5, E=5), "q", [0.2, 0.4, 0.6, 0.8, 1.0], _ALL),
    "aoii_vs_cs": ("aoii", dict(p=0.7, mu=0.7, q=1.0, E=5), "c_s", [1, 2, 3], _ALL + ["rte_optimal"]),
    "aoii_vs_E": ("aoii", dict(p=0.8, mu=0.6, q=1.0), "E", [2, 3, 4, 6, 8, 10], _ALL + ["rte_optimal"]),
    "mse_vs_M": ("general_distortion", dict(p=0.8, q=0.5, mu=0.8, E=5, source="symmetric", distortion="mse"),
                 "M", [2, 3, 4, 5, 6], _ALL),
    "rte_vs_M": ("real_time_error", dict(p=0.8, q=0.9, mu=0.3, E=3, source="symmetric"), "M",
                 [2, 3, 4, 5, 6], _ALL),
    "mse_asym_vs_mu": ("general_distortion", dict(q=0.7, E=5, source="asym3", distortion="mse"), "mu",
                       [0.1, 0.3, 0.5, 0.7, 0.9], ["optimal", "baseline"]),
}

# depth 3 over-uses retransmissions when deliveries are rare
LOOKAHEAD = {"aoii_vs_q": 5}


def figure_spec(name: str, horizon: int = 10**6, seeds=range(5), out=None, policies=None,
                heuristic_horizon: int | None = 10**5) -> ExperimentSpec:
    metric, fixed, param, values, pols = FIGURES[name]
    return ExperimentSpec(metric, param, list(values), SystemConfig(**fixed), list(policies or pols), horizon,
                          list(seeds), out, heuristic_horizon=heuristic_horizon,
                          myopic_lookahead=LOOKAHEAD.get(name, 3))
