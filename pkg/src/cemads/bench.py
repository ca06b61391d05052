"""Benchmark campaigns and data profiles.

A campaign runs every algorithm variant on every problem instance (random
start x seed) and stores one JSON-lines history per run.  Data profiles are
recomputed offline from those files.
"""
from __future__ import annotations

import configparser
import csv
import logging
import math
import re
import traceback
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import problems
from .blackbox import UsageError
from .ce import CeParams, CeSearch
from .mads import MadsConfig, RunHistory, solve

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_RULE = "1000(n+1)"

_RULE = re.compile(r"^\s*(\d+)\s*(?:\*?\s*\(\s*n\s*\+\s*1\s*\))?\s*$")


def budget_for(rule, n: int) -> int:
    """Evaluate a budget rule: an integer, or ``K(n+1)``."""
    if isinstance(rule, (int, np.integer)):
        return int(rule)
    m = _RULE.match(str(rule))
    if m is None:
        raise UsageError(f"bad budget rule {rule!r}; expected e.g. 1500 or 1000(n+1)")
    k = int(m.group(1))
    return k * (n + 1) if "n" in str(rule) else k


@dataclass(frozen=True)
class Instance:
    problem: str
    start: np.ndarray
    seed: int
    start_idx: int = 0

    def __post_init__(self):
        spec = problems.get(self.problem)
        start = np.asarray(self.start, dtype=float)
        b = spec.bounds
        if start.shape != (spec.n,) or np.any(start < b.lower) or np.any(start > b.upper):
            raise UsageError(f"start point for {self.problem} outside its bounds")
        object.__setattr__(self, "start", start)


def make_instances(names: Iterable[str], n_starts: int, seeds: Sequence[int], start_seed: int = 0) -> List[Instance]:
    """``n_starts`` random starting points per problem, each run with every seed.

    Starts are drawn uniformly in the problem's sampling box from a stream
    keyed on the problem name, so they do not depend on the problem list.
    """
    out = []
    for name in names:
        spec = problems.get(name)
        rng = np.random.default_rng([start_seed, zlib.crc32(spec.name.encode())])
        starts = [spec.random_start(rng) for _ in range(n_starts)]
        for i, x0 in enumerate(starts):
            for seed in seeds:
                out.append(Instance(spec.name, x0, int(seed), i))
    return out


@dataclass(frozen=True)
class Algorithm:
    name: str
    ce: bool = True
    params: CeParams = field(default_factory=CeParams)
    budget_rule: Optional[str] = None

    def config(self, budget: int, seed: int, workers: int = 1) -> MadsConfig:
        searches = [CeSearch(self.params)] if self.ce else []
        return MadsConfig(budget, seed, searches, workers=workers)


class RunKey(NamedTuple):
    algorithm: str
    problem: str
    start_idx: int
    seed: int


def history_path(root, key: RunKey) -> Path:
    return Path(root) / key.algorithm / key.problem / f"{key.start_idx}_{key.seed}.jsonl"


def _run_one(alg: Algorithm, inst: Instance, budget: int) -> RunHistory:
    spec = problems.get(inst.problem)
    meta = {"algorithm": alg.name, "start_idx": inst.start_idx, "x0": [float(v) for v in inst.start]}
    try:
        hist = solve(spec.make(), inst.start, alg.config(budget, inst.seed))
    except Exception as exc:  # one crashing run must not stop the campaign
        logger.error("%s on %s (start %d, seed %d) crashed: %s", alg.name, inst.problem, inst.start_idx, inst.seed, exc)
        logger.debug("%s", traceback.format_exc())
        hist = RunHistory(spec.name, spec.n, spec.m, budget, inst.seed, stop_reason="crash")
        meta["error"] = f"{type(exc).__name__}: {exc}"
    hist.meta.update(meta)
    return hist


def run_campaign(
    algorithms: Sequence[Algorithm],
    instances: Sequence[Instance],
    budget_rule=DEFAULT_BUDGET_RULE,
    out_dir=None,
    workers: int = 1,
) -> Dict[RunKey, RunHistory]:
    """Run every (algorithm, instance) pair; optionally persist each history."""
    if not algorithms or not instances:
        raise UsageError("campaign needs at least one algorithm and one instance")
    names = [a.name for a in algorithms]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate algorithm names: {names}")
    jobs = []
    for alg in algorithms:
        for inst in instances:
            n = problems.get(inst.problem).n
            budget = budget_for(alg.budget_rule or budget_rule, n)
            jobs.append((RunKey(alg.name, inst.problem, inst.start_idx, inst.seed), alg, inst, budget))

    def work(job):
        key, alg, inst, budget = job
        hist = _run_one(alg, inst, budget)
        if out_dir is not None:
            path = history_path(out_dir, key)
            path.parent.mkdir(parents=True, exist_ok=True)
            hist.save(path)
        return key, hist

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    return dict(results)


def load_histories(root) -> Dict[RunKey, RunHistory]:
    """Read a history store laid out as ``{algorithm}/{problem}/{start}_{seed}.jsonl``."""
    root = Path(root)
    if not root.is_dir():
        raise UsageError(f"history directory {root} does not exist")
    out = {}
    for path in sorted(root.glob("*/*/*.jsonl")):
        alg, prob = path.parent.parent.name, path.parent.name
        start, _, seed = path.stem.partition("_")
        try:
            key = RunKey(alg, prob, int(start), int(seed))
        except ValueError:
            logger.warning("skipping %s: name is not {start}_{seed}.jsonl", path)
            continue
        out[key] = RunHistory.load(path)
    return out


# -- data profiles ------------------------------------------------------------


def first_feasible(hist: RunHistory) -> Optional[float]:
    for r in hist.records:
        if r.h == 0.0:
            return r.f
    return None


def references(histories: Iterable[RunHistory]) -> Optional[Tuple[float, float]]:
    """``(f_fea, f_star)`` for one problem, or None when nothing is feasible.

    ``f_fea`` is the worst first-feasible value over all runs and ``f_star``
    the best feasible value found by any run.
    """
    firsts = []
    best = math.inf
    for hist in histories:
        ff = first_feasible(hist)
        if ff is None:
            continue
        firsts.append(ff)
        for r in hist.records:
            if r.h == 0.0 and r.f < best:
                best = r.f
    if not firsts:
        return None
    return max(firsts), best


def solved_at(hist: RunHistory, tau: float, f_fea: float, f_star: float) -> Optional[int]:
    """Number of evaluations after which the run passes the convergence test."""
    if not 0.0 < tau < 1.0:
        raise UsageError(f"tau must lie in (0, 1), got {tau}")
    target = (1.0 - tau) * (f_fea - f_star)
    best = math.inf
    for e, r in enumerate(hist.records, start=1):
        if r.h == 0.0 and r.f < best:
            best = r.f
        if best < math.inf and f_fea - best >= target:
            return e
    return None


@dataclass(frozen=True)
class ProfileCurve:
    points: Tuple[Tuple[int, float], ...]

    def fraction_at(self, t: int) -> float:
        frac = 0.0
        for tt, v in self.points:
            if tt > t:
                break
            frac = v
        return frac

    @property
    def final(self) -> float:
        return self.points[-1][1] if self.points else 0.0


@dataclass
class ProfileReport:
    tau: float
    curves: Dict[str, ProfileCurve]
    excluded: List[str]
    solved: Dict[RunKey, Optional[int]]

    def write_csv(self, fh, header: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["algorithm", "tau", "t", "fraction"])
        for alg in sorted(self.curves):
            for t, frac in self.curves[alg].points:
                w.writerow([alg, repr(self.tau), t, repr(frac)])


def profile_report(histories: Mapping[RunKey, RunHistory], tau: float, t_max: Optional[int] = None) -> ProfileReport:
    by_problem: Dict[str, List[RunKey]] = {}
    for key in histories:
        by_problem.setdefault(key.problem, []).append(key)
    dims = {}
    for prob, keys in by_problem.items():
        ns = {histories[k].n for k in keys}
        if len(ns) != 1:
            raise UsageError(f"histories for {prob} disagree on dimension: {sorted(ns)}")
        dims[prob] = ns.pop()

    excluded = []
    solved: Dict[RunKey, Optional[int]] = {}
    groups: Dict[RunKey, Optional[int]] = {}
    for prob in sorted(by_problem):
        keys = by_problem[prob]
        ref = references(histories[k] for k in keys)
        if ref is None:
            excluded.append(prob)
            logger.warning("%s: no feasible point in any run, excluded from profiles", prob)
            continue
        f_fea, f_star = ref
        for k in keys:
            e = solved_at(histories[k], tau, f_fea, f_star)
            solved[k] = e
            groups[k] = None if e is None else math.ceil(e / (dims[prob] + 1))

    if t_max is None:
        t_max = 0
        for k in groups:
            hist = histories[k]
            t_max = max(t_max, math.ceil(max(hist.budget, len(hist.records)) / (hist.n + 1)))

    algs = sorted({k.algorithm for k in histories})
    curves = {}
    for alg in algs:
        keys = [k for k in groups if k.algorithm == alg]
        total = len(keys)
        ts = [groups[k] for k in keys if groups[k] is not None]
        points = []
        for t in range(t_max + 1):
            count = sum(1 for g in ts if g <= t)
            points.append((t, count / total if total else 0.0))
        curves[alg] = ProfileCurve(tuple(points))
    return ProfileReport(tau, curves, excluded, solved)


def data_profile(histories: Mapping[RunKey, RunHistory], tau: float, t_max: Optional[int] = None) -> Dict[str, ProfileCurve]:
    """Fraction of (problem, instance) pairs solved within ``t`` groups of n+1 evaluations."""
    return profile_report(histories, tau, t_max).curves


# -- campaign configuration ---------------------------------------------------


@dataclass
class Campaign:
    problems: List[str]
    algorithms: List[Algorithm]
    starts: int = 20
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    budget: str = DEFAULT_BUDGET_RULE
    start_seed: int = 0
    workers: int = 1
    out_dir: Optional[str] = None
    taus: List[float] = field(default_factory=lambda: [1e-3])

    def instances(self) -> List[Instance]:
        return make_instances(self.problems, self.starts, self.seeds, self.start_seed)

    def run(self, out_dir=None) -> Dict[RunKey, RunHistory]:
        return run_campaign(self.algorithms, self.instances(), self.budget, out_dir or self.out_dir, self.workers)


def _split(value: str) -> List[str]:
    return [v for v in re.split(r"[,\s]+", value.strip()) if v]


def _parse_algorithm(name: str, sec: configparser.SectionProxy) -> Algorithm:
    n_s = sec.get("n_s")
    params = CeParams(
        n_s=int(n_s) if n_s else None,
        n_e=sec.getint("n_e", 4),
        alpha=sec.getfloat("alpha", 0.7),
        stall_limit=sec.getint("stall_limit", 10),
    )
    params.validate()
    return Algorithm(name, sec.getboolean("ce", True), params, sec.get("budget"))


def parse_campaign(text: str) -> Campaign:
    """Parse an INI-style campaign description.

    ``[campaign]`` holds problems, starts, seeds, budget, start_seed, workers,
    output and taus; each ``[algorithm NAME]`` section holds ``ce`` and the
    CE parameters n_e, n_s, alpha, stall_limit, plus an optional budget.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"bad campaign file: {exc}") from None
    if not cp.has_section("campaign"):
        raise UsageError("campaign file needs a [campaign] section")
    sec = cp["campaign"]
    try:
        names = _split(sec.get("problems", ""))
        for nm in names:
            problems.get(nm)
        algs = [
            _parse_algorithm(s.split(None, 1)[1].strip(), cp[s])
            for s in cp.sections()
            if s.startswith("algorithm ") and s.split(None, 1)[1].strip()
        ]
        camp = Campaign(
            problems=[problems.get(nm).name for nm in names],
            algorithms=algs,
            starts=sec.getint("starts", 20),
            seeds=[int(v) for v in _split(sec.get("seeds", "0 1 2"))],
            budget=sec.get("budget", DEFAULT_BUDGET_RULE),
            start_seed=sec.getint("start_seed", 0),
            workers=sec.getint("workers", 1),
            out_dir=sec.get("output"),
            taus=[float(v) for v in _split(sec.get("taus", "1e-3"))],
        )
    except (KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else exc
        raise UsageError(f"bad campaign file: {msg}") from None
    if not camp.problems or not camp.algorithms:
        raise UsageError("campaign needs at least one problem and one [algorithm NAME] section")
    budget_for(camp.budget, 1)
    return camp


def load_campaign(path) -> Campaign:
    return parse_campaign(Path(path).read_text())
