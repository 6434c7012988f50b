"""Worst-case optimality-gap certificates for learned optimization proxies.

Library layout:

- lp_core    dense bounded-variable revised simplex with duals
- milp       deterministic branch and bound over binary variables
- neural     small dense ReLU networks (forward, gradients, toy training)
- encodings  big-M MILP blocks for ReLU/clamp/max and layer bound tightening
- dcopf      DC optimal power flow family: value function, proxy, verifiers
- knapsack   binary knapsack family: greedy-repair proxy and exact MILP
- attack     projected-gradient attack guided by a cutting-plane value model
- verify     end-to-end certification pipeline and reports
- cli        command-line front end (also installed as `gapcert`)
"""

from . import attack, dcopf, encodings, knapsack, lp_core, milp, neural, \
    verify  # noqa: F401
from .verify import VerificationReport, true_gap  # noqa: F401

__version__ = "0.1.0"
