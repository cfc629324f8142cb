"""Global minimization of bounded non-convex functions through optimal stabilization.

Modules: ``objectives`` (test functions, quasi-minimizer sets, gap function),
``hjb`` (grid solvers for the value function), ``control`` (trajectories,
cost, synthesis, certification), ``measures`` (occupation measures),
``analysis`` (inequality checks, parameter choice, scans) and ``cli``.
"""
from .cases import Case
from .reports import CheckReport

__version__ = "0.1.0"
__all__ = ["Case", "CheckReport", "__version__"]
