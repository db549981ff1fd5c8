"""Transfer-learning Bayesian optimization with two-phase surrogate
combination, plus a benchmark harness and CLI.

Submodules:
    space     search spaces, sampling, numeric encoding
    gp        Gaussian-process base surrogate
    ranking   pairwise ranking loss and the simplex minimizer
    transfer  two-phase source/target surrogate combination
    bo        the sequential optimization loop and EI acquisition
    bench     tabular and synthetic benchmarks, protocols, metrics
"""

from . import bench, bo, gp, ranking, space, transfer
from .errors import FitError, ParseError, SolverError, TlboError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "bench",
    "bo",
    "gp",
    "ranking",
    "space",
    "transfer",
    "TlboError",
    "ValidationError",
    "FitError",
    "SolverError",
    "ParseError",
    "__version__",
]
