"""Deterministic multi-client collaborative-learning simulator.

Thin wrapper over the C++ core: synthetic task families, the alternating
collaboration-weight / model-update algorithm with baselines, and numeric
evaluation of the convergence bounds.
"""

from cobo._core import *  # noqa: F401,F403
from cobo._core import __version__  # noqa: F401
