"""CE-MADS: mesh adaptive direct search with a cross-entropy search step."""
from .blackbox import BoundBox, ConfigurationError, EvalOutput, Evaluation, Problem, UsageError, evaluate, from_functions, spawn_external
from .cache import Cache, CacheEntry, best, dominates, elites
from .ce import CeParams, CeSearch, ce_optimize
from .mads import MadsConfig, RunHistory, solve

__all__ = [
    "BoundBox",
    "Cache",
    "CacheEntry",
    "CeParams",
    "CeSearch",
    "ConfigurationError",
    "EvalOutput",
    "Evaluation",
    "MadsConfig",
    "Problem",
    "RunHistory",
    "UsageError",
    "best",
    "ce_optimize",
    "dominates",
    "elites",
    "evaluate",
    "from_functions",
    "solve",
    "spawn_external",
]

__version__ = "0.1.0"
