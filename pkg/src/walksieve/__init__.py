"""Leader-election sieves driven by increasing integer random walks.

Each round, the players sitting at positions ``R(1), R(2), ...`` of a fresh
walk stay in the game.  The package simulates the sieve, its Galton-Watson
dual, the limiting point patterns and their stability under thinning, and
ships a registry of seeded Monte Carlo checks for the limit laws.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateBinning,
    HypothesisError,
    IndexOverflow,
    InsufficientPoints,
    ResourceFault,
    WalkSieveError,
)
from .increments import IncrementLaw, Kind, law_from_dict
from .pointproc import (
    PointPattern,
    SelfSimilarProfile,
    cluster_stats,
    scale,
    stability_test,
    thin,
)
from .rng import substream
from .sieve import SieveState, WalkPath, run_sieve, time_to_extinction
from .stats import TestReport
from .suite import theorem_suite, verify_all

__all__ = [
    "ConfigError",
    "DegenerateBinning",
    "HypothesisError",
    "IncrementLaw",
    "IndexOverflow",
    "InsufficientPoints",
    "Kind",
    "PointPattern",
    "ResourceFault",
    "SelfSimilarProfile",
    "SieveState",
    "TestReport",
    "WalkPath",
    "WalkSieveError",
    "cluster_stats",
    "law_from_dict",
    "run_sieve",
    "scale",
    "stability_test",
    "substream",
    "theorem_suite",
    "thin",
    "time_to_extinction",
    "verify_all",
]
