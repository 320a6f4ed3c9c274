"""Asynchronous stochastic successive convex approximation toolkit.

Library layout:

* ``asysca.problem``   -- stochastic composite problem oracles and geometry
* ``asysca.optimizer`` -- per-iteration math (surrogate mixing, subproblem solves)
* ``asysca.harness``   -- simulated multi-core coordinator/worker run modes
* ``asysca.wsn``       -- WSN linear precoding benchmark
* ``asysca.experiment``-- Monte Carlo orchestration and CSV emission
* ``asysca.cli``       -- command line front end
"""

__version__ = "0.1.0"
