"""Global optimisation through discounted optimal stabilisation.

The package solves the stationary Hamilton-Jacobi-Bellman equation
``lam * u + 0.5 * |Du|^2 = f`` on a grid, follows the steepest descent of the
value function toward the minimiser set of ``f`` and checks the predicted
exponential decay rates along the computed trajectories.
"""

__version__ = "0.1.0"
