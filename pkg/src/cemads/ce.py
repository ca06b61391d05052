"""Cross-entropy sampling with a normal law, standalone and as a MADS search step."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .blackbox import BoundBox, Evaluation, Problem, UsageError, evaluate
from .cache import elites
from .mads import SearchStep
from .mesh import MeshState, project

logger = logging.getLogger(__name__)

NO, NORMAL, ESCAPE = "no", "normal", "escape"


@dataclass(frozen=True)
class CeParams:
    """Cross-entropy parameters.

    ``n_s=None`` means ``2n`` (at least ``n_e``).  ``rho=None`` means ``n_e / n_s``; it only
    drives the logged quantile of the standalone optimizer.
    """

    n_s: Optional[int] = None
    n_e: int = 4
    alpha: float = 0.7
    rho: Optional[float] = None
    sigma_stop: float = 1e-6
    stall_limit: int = 10

    def resolve(self, n: int) -> "CeParams":
        # elites come from the whole cache, so the default sample may not undercut n_e
        n_s = max(2 * n, self.n_e) if self.n_s is None else self.n_s
        rho = self.n_e / n_s if self.rho is None else self.rho
        out = replace(self, n_s=n_s, rho=rho)
        out.validate()
        return out

    def validate(self) -> None:
        if self.n_e < 1:
            raise UsageError("n_e must be positive")
        if self.n_s is not None and self.n_e > self.n_s:
            raise UsageError(f"n_e={self.n_e} exceeds n_s={self.n_s}")
        if not 0.0 < self.alpha <= 1.0:
            raise UsageError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.rho is not None and not 0.0 < self.rho <= 1.0:
            raise UsageError(f"rho must lie in (0, 1], got {self.rho}")


@dataclass(frozen=True)
class CeState:
    mu: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    sigma_p: Optional[np.ndarray] = None
    infeasible_stall: int = 0
    sigma_init: Optional[np.ndarray] = None

    @property
    def sigma_p_norm(self) -> float:
        return math.inf if self.sigma_p is None else float(np.linalg.norm(self.sigma_p))


def sample_truncated_normal(
    mu, sigma, b: BoundBox, rng: np.random.Generator, size: Optional[int] = None, max_tries: int = 100
) -> np.ndarray:
    """Draw from independent normals truncated to ``b``.

    Returns one point, or a ``(size, n)`` array of points.  Coordinates are
    resampled until they fall in the box; after ``max_tries`` the last draw
    is clamped to the nearest bound.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    shape = mu.shape if size is None else (size,) + mu.shape
    lo = np.broadcast_to(b.lower, shape)
    hi = np.broadcast_to(b.upper, shape)
    mu = np.broadcast_to(mu, shape)
    sigma = np.broadcast_to(sigma, shape)
    x = mu + sigma * rng.standard_normal(shape)
    todo = (x < lo) | (x > hi)
    for _ in range(max_tries - 1):
        k = int(np.count_nonzero(todo))
        if k == 0:
            break
        x[todo] = mu[todo] + sigma[todo] * rng.standard_normal(k)
        todo = (x < lo) | (x > hi)
    return np.minimum(np.maximum(x, lo), hi)


def quantile_gamma(fvals: Sequence[float], rho: float) -> float:
    """The ``ceil(rho * N)``-th smallest value of ``fvals``."""
    f = np.sort(np.asarray(fvals, dtype=float))
    if f.size == 0:
        raise UsageError("quantile of an empty sample")
    if not 0.0 < rho <= 1.0:
        raise UsageError(f"rho must lie in (0, 1], got {rho}")
    # round first: 0.7 * 10 is 7.000000000000001 in binary
    k = math.ceil(round(rho * f.size, 9))
    return float(f[min(max(k, 1), f.size) - 1])


def elite_stats(elite_xs) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and sample standard deviation (divisor ``N_e - 1``) of the elites."""
    X = np.asarray(elite_xs, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise UsageError("elite_stats needs at least one point")
    mu = X.mean(axis=0)
    if X.shape[0] == 1:
        return mu, np.zeros_like(mu)
    return mu, np.sqrt(np.sum((X - mu) ** 2, axis=0) / (X.shape[0] - 1))


def smooth(state: CeState, mu_tilde, sigma_tilde, alpha: float) -> CeState:
    """Convex combination of the fresh estimates with the previous ones."""
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    sigma_tilde = np.asarray(sigma_tilde, dtype=float)
    if state.mu is None:
        return replace(state, mu=mu_tilde.copy(), sigma=sigma_tilde.copy())
    return replace(
        state,
        mu=alpha * mu_tilde + (1.0 - alpha) * state.mu,
        sigma=alpha * sigma_tilde + (1.0 - alpha) * state.sigma,
    )


# -- standalone optimizer ---------------------------------------------------


@dataclass(frozen=True)
class CeIteration:
    iteration: int
    mu: np.ndarray
    sigma: np.ndarray
    gamma: float
    best_f: float
    best_h: float


@dataclass
class CeResult:
    best: Evaluation
    trace: List[CeIteration] = field(default_factory=list)
    evals: int = 0

    def write_trace(self, path) -> None:
        n = self.best.x.size
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["iter"] + [f"mu_{i + 1}" for i in range(n)] + [f"sigma_{i + 1}" for i in range(n)] + ["gamma", "best_f", "best_h"]
            )
            for it in self.trace:
                w.writerow(
                    [it.iteration]
                    + [repr(float(v)) for v in it.mu]
                    + [repr(float(v)) for v in it.sigma]
                    + [repr(it.gamma), repr(it.best_f), repr(it.best_h)]
                )


def ce_optimize(
    p: Problem,
    params: CeParams,
    mu0,
    sigma0,
    rng: np.random.Generator,
    budget: int,
    max_iter: Optional[int] = None,
) -> CeResult:
    """Cross-entropy minimization of ``p`` with a (truncated) normal law.

    Each iteration samples ``n_s`` points, keeps the ``n_e`` best by the Best
    ordering (so constraints are handled through ``h``, not a penalty),
    refits mean and standard deviation on them and smooths with ``alpha``.
    Stops when ``||sigma|| < sigma_stop``, the budget cannot pay for a full
    sample, or after ``max_iter`` iterations.
    """
    params = params.resolve(p.n)
    if budget < params.n_s:
        raise UsageError(f"budget {budget} cannot pay for one sample of {params.n_s} points")
    state = CeState(
        mu=np.broadcast_to(np.asarray(mu0, dtype=float), (p.n,)).copy(),
        sigma=np.broadcast_to(np.asarray(sigma0, dtype=float), (p.n,)).copy(),
    )
    best: Optional[Evaluation] = None
    best_k = None
    trace: List[CeIteration] = []
    evals = 0
    k = 0
    while evals + params.n_s <= budget and (max_iter is None or k < max_iter):
        if float(np.linalg.norm(state.sigma)) < params.sigma_stop:
            break
        k += 1
        sample = [evaluate(p, x) for x in sample_truncated_normal(state.mu, state.sigma, p.bounds, rng, params.n_s)]
        evals += params.n_s
        for i, e in enumerate(sample):
            key = (e.h, e.f, evals - params.n_s + i)
            if best_k is None or key < best_k:
                best, best_k = e, key
        gamma = quantile_gamma([e.f for e in sample], params.rho)
        order = sorted(range(len(sample)), key=lambda i: (sample[i].h, sample[i].f, i))
        mu_t, sigma_t = elite_stats([sample[i].x for i in order[: params.n_e]])
        state = smooth(state, mu_t, sigma_t, params.alpha)
        trace.append(CeIteration(k, state.mu.copy(), state.sigma.copy(), gamma, best.f, best.h))
    return CeResult(best, trace, evals)


# -- search step inside MADS ------------------------------------------------


def synth_bounds(b: BoundBox, center, Delta) -> BoundBox:
    """Finite sampling box: native bounds, completed by ``center -/+ 10 Delta``."""
    center = np.asarray(center, dtype=float)
    Delta = np.asarray(Delta, dtype=float)
    lo = np.where(np.isfinite(b.lower), b.lower, center - 10.0 * Delta)
    hi = np.where(np.isfinite(b.upper), b.upper, center + 10.0 * Delta)
    return BoundBox(lo, hi)


def cold_start(cache, n_e: int, center, synth: BoundBox) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and deviation for the search: elite statistics, or a wide default on a small cache."""
    if len(cache) < n_e:
        return np.asarray(center, dtype=float).copy(), 2.0 * (synth.upper - synth.lower)
    return elite_stats([e.x for e in elites(cache, n_e)])


def should_search(state: CeState, sigma_k_norm: float, feasible_found: bool, stall_limit: int) -> str:
    if not feasible_found and state.infeasible_stall >= stall_limit:
        return ESCAPE
    if sigma_k_norm < state.sigma_p_norm:
        return NORMAL
    return NO


def project_within(ms: MeshState, x, b: BoundBox) -> np.ndarray:
    """Nearest mesh point, moved one mesh step inward where rounding left the box."""
    y = project(ms, x)
    steps = (np.asarray(x, dtype=float) - ms.center) / ms.delta
    over = y > b.upper
    under = y < b.lower
    if np.any(over) or np.any(under):
        k = np.round(steps)
        k[over] = np.floor(steps[over])
        k[under] = np.ceil(steps[under])
        y = ms.center + ms.delta * k
    return y


@dataclass(frozen=True)
class CeStepResult:
    trials: List
    state: CeState
    mode: str
    sigma_norm: float
    sample_sigma: Optional[np.ndarray] = None


def ce_search_step(
    cache,
    ms: MeshState,
    state: CeState,
    params: CeParams,
    p: Problem,
    rng: np.random.Generator,
    budget_left: int,
    evaluate_batch: Optional[Callable[[List[np.ndarray]], List]] = None,
) -> CeStepResult:
    """One CE search: refit the law on the cache elites, sample, project, evaluate.

    ``evaluate_batch`` evaluates and caches a list of points and returns the
    resulting entries; by default points are evaluated directly and inserted
    into ``cache``.
    """
    params = params.resolve(p.n)
    synth = synth_bounds(p.bounds, ms.center, ms.Delta)
    mu_k, sigma_k = cold_start(cache, params.n_e, ms.center, synth)
    sigma_norm = float(np.linalg.norm(sigma_k))
    head = elites(cache, 1)
    feasible_found = bool(head) and head[0].h == 0.0
    if budget_left <= 0:
        return CeStepResult([], state, NO, sigma_norm)
    mode = should_search(state, sigma_norm, feasible_found, params.stall_limit)
    if mode == NO:
        return CeStepResult([], state, NO, sigma_norm)

    if state.sigma_init is None:
        state = replace(state, sigma_init=sigma_k.copy())
    if mode == ESCAPE:
        mean = head[0].x if head else ms.center
        draw_sigma = 2.0 * state.sigma_init
    else:
        mean = mu_k
        draw_sigma = 2.0 * sigma_k
    count = min(params.n_s, budget_left)
    points = [project_within(ms, x, p.bounds) for x in sample_truncated_normal(mean, draw_sigma, synth, rng, count)]

    if evaluate_batch is None:
        trials = []
        for x in points:
            if cache.lookup(x) is None:
                e = evaluate(p, x)
                cache.insert(e)
                trials.append(e)
    else:
        trials = evaluate_batch(points)

    # refit on the updated cache; sigma_p keeps the deviation that passed the
    # trigger, and escape searches (which bypass the trigger) leave it alone
    mu_t, sigma_t = cold_start(cache, params.n_e, ms.center, synth)
    new = smooth(replace(state, mu=mu_k, sigma=sigma_k), mu_t, sigma_t, params.alpha)
    if mode == NORMAL:
        new = replace(new, sigma_p=sigma_k.copy())
    return CeStepResult(trials, new, mode, sigma_norm, draw_sigma)


class CeSearch(SearchStep):
    """MADS search-step plugin running :func:`ce_search_step` every iteration."""

    name = "ce_search"

    def __init__(self, params: Optional[CeParams] = None):
        self.params = params or CeParams()
        self.state = CeState()
        self.rng = None

    def start(self, run) -> None:
        self.state = CeState()
        self.rng = run.rng_for(self.name)

    def search(self, run) -> bool:
        improved = []

        def batch(points):
            entries, better = run.evaluate_batch(points, self.name, opportunistic=False, require_mesh=True)
            improved.append(better)
            return entries

        before = self.state
        res = ce_search_step(run.cache, run.mesh, self.state, self.params, run.problem, self.rng, run.budget_left, batch)
        self.state = res.state
        if res.mode != NO:
            run.log_event(
                type="ce_activation",
                mode=res.mode,
                sigma_norm=res.sigma_norm,
                sigma_p_before=before.sigma_p_norm,
                sigma_p_after=res.state.sigma_p_norm,
                sample_sigma=[float(v) for v in res.sample_sigma],
                infeasible_stall=before.infeasible_stall,
                trials=len(res.trials),
            )
        return any(improved)

    def end_iteration(self, run, success: bool) -> None:
        stall = 0 if run.feasible_found else self.state.infeasible_stall + 1
        self.state = replace(self.state, infeasible_stall=stall)
