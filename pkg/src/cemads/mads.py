"""Mesh adaptive direct search with a simplified progressive barrier.

Each iteration runs the registered search steps in order; a search that
improves an incumbent skips the poll.  Otherwise the 2n poll points around
the frame center are evaluated, opportunistically by default.
"""
from __future__ import annotations

import json
import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .blackbox import Evaluation, Problem, UsageError, evaluate
from .cache import Cache, CacheEntry, best_key
from .mesh import FAILURE, SUCCESS, MeshState, init_mesh, on_mesh, poll_directions, poll_points, recenter, update_sizes

logger = logging.getLogger(__name__)

SEARCH_SUCCESS = "search_success"
POLL_SUCCESS = "poll_success"
ITER_FAILURE = "failure"


class SearchStep:
    """Base class for search-step plugins.

    ``search`` proposes mesh points and evaluates them through
    :meth:`MadsRun.evaluate_batch`; it returns True when an incumbent improved.
    """

    name = "search"

    def start(self, run: "MadsRun") -> None:
        pass

    def search(self, run: "MadsRun") -> bool:
        raise NotImplementedError

    def end_iteration(self, run: "MadsRun", success: bool) -> None:
        pass


@dataclass
class MadsConfig:
    budget: int
    seed: int = 0
    searches: List[SearchStep] = field(default_factory=list)
    h_max_init: float = math.inf
    opportunistic: bool = True
    stop_delta: float = 1e-9
    workers: int = 1


@dataclass(frozen=True)
class IterationOutcome:
    kind: str
    new_incumbent: Optional[CacheEntry] = None


@dataclass(frozen=True)
class Barrier:
    h_max: float = math.inf


@dataclass(frozen=True)
class EvalRecord:
    index: int
    x: np.ndarray
    f: float
    h: float
    source: str
    status: str = "ok"


@dataclass
class RunHistory:
    problem: str
    n: int
    m: int
    budget: int
    seed: int
    records: List[EvalRecord] = field(default_factory=list)
    events: List[Dict[str, Any]] = field(default_factory=list)
    best_feasible: Optional[EvalRecord] = None
    best_infeasible: Optional[EvalRecord] = None
    iterations: int = 0
    stop_reason: str = ""
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def best(self) -> Optional[EvalRecord]:
        return self.best_feasible if self.best_feasible is not None else self.best_infeasible

    def header(self) -> Dict[str, Any]:
        d = {
            "kind": "header",
            "problem": self.problem,
            "n": self.n,
            "m": self.m,
            "budget": self.budget,
            "seed": self.seed,
        }
        d.update(self.meta)
        return d

    def write_jsonl(self, fh: IO[str]) -> None:
        """One JSON object per line: a header, evaluations and search events."""
        fh.write(json.dumps(self.header()) + "\n")
        events = iter(self.events)
        pending = next(events, None)
        for r in self.records:
            while pending is not None and pending["evals"] <= r.index:
                fh.write(json.dumps(dict(pending, kind="event")) + "\n")
                pending = next(events, None)
            fh.write(json.dumps(_record_to_dict(r)) + "\n")
        while pending is not None:
            fh.write(json.dumps(dict(pending, kind="event")) + "\n")
            pending = next(events, None)
        footer = {"kind": "footer", "iterations": self.iterations, "stop_reason": self.stop_reason}
        fh.write(json.dumps(footer) + "\n")

    def save(self, path) -> None:
        with open(path, "w") as fh:
            self.write_jsonl(fh)

    @classmethod
    def load(cls, path) -> "RunHistory":
        with open(path) as fh:
            return cls.read_jsonl(fh)

    @classmethod
    def read_jsonl(cls, lines) -> "RunHistory":
        hist = None
        for line in lines:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            kind = d.pop("kind")
            if hist is None and kind != "header":
                raise ValueError("history stream must start with a header line")
            if kind == "header":
                core = {k: d.pop(k) for k in ("problem", "n", "m", "budget", "seed")}
                hist = cls(**core, meta=d)
            elif kind == "eval":
                hist.records.append(
                    EvalRecord(d["eval"], np.array(d["x"], dtype=float), d["f"], d["h"], d["source"], d.get("status", "ok"))
                )
            elif kind == "event":
                hist.events.append(d)
            elif kind == "footer":
                hist.iterations = d["iterations"]
                hist.stop_reason = d["stop_reason"]
        if hist is None:
            raise ValueError("history stream has no header")
        hist._recompute_incumbents()
        return hist

    def _recompute_incumbents(self) -> None:
        feas = infeas = None
        for r in self.records:
            if r.h == 0.0:
                if feas is None or r.f < feas.f:
                    feas = r
            elif infeas is None or (r.h, r.f) < (infeas.h, infeas.f):
                infeas = r
        self.best_feasible, self.best_infeasible = feas, infeas


def _record_to_dict(r: EvalRecord) -> Dict[str, Any]:
    return {
        "kind": "eval",
        "eval": r.index,
        "source": r.source,
        "x": [float(v) for v in r.x],
        "f": r.f,
        "h": r.h,
        "status": r.status,
    }


def _improves(e: CacheEntry, feas: Optional[CacheEntry], infeas: Optional[CacheEntry], h_max: float) -> Tuple[bool, bool]:
    """Return (new feasible incumbent, new infeasible incumbent) for entry ``e``."""
    if e.h == 0.0:
        return feas is None or e.f < feas.f, False
    if not math.isfinite(e.h) or e.h > h_max:
        return False, False
    return False, infeas is None or best_key(e) < best_key(infeas)


def barrier_update(barrier: Barrier, best_infeasible: Optional[CacheEntry]) -> Barrier:
    """Set the barrier threshold to the violation of the infeasible incumbent."""
    if best_infeasible is None or not math.isfinite(best_infeasible.h):
        return barrier
    return Barrier(best_infeasible.h)


class MadsRun:
    """Mutable state of one solve: cache, mesh, incumbents, barrier and history."""

    def __init__(self, p: Problem, cfg: MadsConfig):
        self.problem = p
        self.cfg = cfg
        self.cache = Cache()
        self.barrier = Barrier(cfg.h_max_init)
        self.best_feasible: Optional[CacheEntry] = None
        self.best_infeasible: Optional[CacheEntry] = None
        self.history = RunHistory(p.name, p.n, p.m, cfg.budget, cfg.seed)
        self.mesh: Optional[MeshState] = None
        self.iteration = 0
        self.last_step: Optional[np.ndarray] = None
        self.poll_rng = np.random.default_rng([cfg.seed, 0])
        workers = 1 if p.serial else max(1, int(cfg.workers))
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None

    # -- bookkeeping -----------------------------------------------------
    @property
    def evals(self) -> int:
        return len(self.history.records)

    @property
    def budget_left(self) -> int:
        return self.cfg.budget - self.evals

    @property
    def feasible_found(self) -> bool:
        return self.best_feasible is not None

    @property
    def poll_center(self) -> Optional[CacheEntry]:
        return self.best_feasible if self.best_feasible is not None else self.best_infeasible

    @property
    def best(self) -> Optional[CacheEntry]:
        return self.poll_center

    def rng_for(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, zlib.crc32(name.encode())])

    def log_event(self, **data) -> None:
        self.history.events.append(dict(data, evals=self.evals, iteration=self.iteration))

    def _commit(self, e: Evaluation, source: str) -> Tuple[CacheEntry, bool]:
        res = self.cache.insert(e)
        entry = self.cache[res.gen]
        rec = EvalRecord(self.evals, entry.x, entry.f, entry.h, source, entry.status)
        self.history.records.append(rec)
        new_feas, new_infeas = _improves(entry, self.best_feasible, self.best_infeasible, self.barrier.h_max)
        if self.best_feasible is None and self.best_infeasible is None and not (new_feas or new_infeas):
            # the very first point is an incumbent even if it failed
            new_infeas = entry.h > 0.0 and entry.h <= self.barrier.h_max
        if new_feas:
            self.best_feasible = entry
            self.history.best_feasible = rec
        if new_infeas:
            self.best_infeasible = entry
            self.history.best_infeasible = rec
        return entry, bool(new_feas or new_infeas)

    def evaluate_batch(
        self, points: Sequence[np.ndarray], source: str, opportunistic: bool = False, require_mesh: bool = False
    ) -> Tuple[List[CacheEntry], bool]:
        """Evaluate ``points`` in order and commit them to the cache.

        Points already cached are skipped without consuming budget.  With
        ``opportunistic`` the batch stops after the first point that improves
        an incumbent; results are committed in generation order, so parallel
        and serial evaluation give the same history.
        """
        fresh: List[np.ndarray] = []
        seen = set()
        for x in points:
            x = np.asarray(x, dtype=float)
            if require_mesh and self.mesh is not None and not on_mesh(self.mesh, x):
                raise ValueError(f"{source} trial point is not on the current mesh")
            k = (x + 0.0).tobytes()
            if k in seen or self.cache.lookup(x) is not None:
                continue
            seen.add(k)
            fresh.append(x)
        fresh = fresh[: max(self.budget_left, 0)]
        committed: List[CacheEntry] = []
        improved = False
        if self._pool is not None and len(fresh) > 1:
            results = list(self._pool.map(lambda x: evaluate(self.problem, x), fresh))
        else:
            results = None
        for i, x in enumerate(fresh):
            ev = results[i] if results is not None else evaluate(self.problem, x)
            entry, better = self._commit(ev, source)
            committed.append(entry)
            if better:
                improved = True
                if opportunistic:
                    break
        return committed, improved

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()


def poll_step(run: MadsRun) -> IterationOutcome:
    if run.budget_left <= 0:
        return IterationOutcome(ITER_FAILURE)
    dirs = poll_directions(run.mesh, run.poll_rng)
    if run.last_step is not None:
        # try directions closest to the last successful move first
        scaled = [d * run.mesh.delta for d in dirs]
        cos = [float(s @ run.last_step) / (np.linalg.norm(s) or 1.0) for s in scaled]
        dirs = [dirs[i] for i in sorted(range(len(dirs)), key=lambda i: -cos[i])]
    _, improved = run.evaluate_batch(poll_points(run.mesh, dirs), "poll", opportunistic=run.cfg.opportunistic)
    if improved:
        return IterationOutcome(POLL_SUCCESS, run.poll_center)
    return IterationOutcome(ITER_FAILURE)


def solve(p: Problem, x0, cfg: MadsConfig) -> RunHistory:
    """Minimize ``p`` from ``x0``; returns the full evaluation history."""
    if cfg.budget < 1:
        raise UsageError(f"budget must be at least 1, got {cfg.budget}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (p.n,):
        raise UsageError(f"starting point has shape {x0.shape}, expected ({p.n},)")
    run = MadsRun(p, cfg)
    try:
        run.mesh = init_mesh(p, x0)
        run.evaluate_batch([run.mesh.center], "initial")
        run.barrier = barrier_update(run.barrier, run.best_infeasible)
        for s in cfg.searches:
            s.start(run)
        stop = "budget"
        while run.budget_left > 0:
            if float(np.max(run.mesh.Delta)) < cfg.stop_delta:
                stop = "mesh"
                break
            run.iteration += 1
            outcome = IterationOutcome(ITER_FAILURE)
            for s in cfg.searches:
                if run.budget_left <= 0:
                    break
                if s.search(run):
                    outcome = IterationOutcome(SEARCH_SUCCESS, run.poll_center)
                    break
            if outcome.kind == ITER_FAILURE:
                outcome = poll_step(run)
            success = outcome.kind != ITER_FAILURE
            run.barrier = barrier_update(run.barrier, run.best_infeasible)
            run.mesh = update_sizes(run.mesh, SUCCESS if success else FAILURE)
            if run.poll_center is not None:
                step = run.poll_center.x - run.mesh.center
                if outcome.kind == POLL_SUCCESS and np.any(step):
                    run.last_step = step
                run.mesh = recenter(run.mesh, run.poll_center.x)
            for s in cfg.searches:
                s.end_iteration(run, success)
        run.history.iterations = run.iteration
        run.history.stop_reason = stop
    finally:
        run.close()
    return run.history
