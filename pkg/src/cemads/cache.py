"""Evaluation cache, dominance and the Best ordering used for elite selection."""
from __future__ import annotations

import bisect
import csv
import heapq
import math
from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .blackbox import OK, Evaluation


@dataclass(frozen=True)
class CacheEntry:
    x: np.ndarray
    f: float
    h: float
    gen: int
    status: str = OK
    c: Optional[np.ndarray] = None

    @property
    def feasible(self) -> bool:
        return self.h == 0.0


class InsertResult(NamedTuple):
    inserted: bool
    gen: int


def _key(x: np.ndarray) -> bytes:
    # -0.0 and 0.0 differ bitwise; normalize so they share a key
    return (np.asarray(x, dtype=float) + 0.0).tobytes()


class Cache:
    """All points evaluated during a run, in insertion order.

    Points are deduplicated on exact coordinate equality.
    """

    def __init__(self, head_size: int = 16):
        self._entries: List[CacheEntry] = []
        self._index = {}
        # Best-ordered keys of the leading entries, kept for fast elite queries
        self._head: List[Tuple[float, float, int]] = []
        self._head_size = head_size

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[CacheEntry]:
        return iter(self._entries)

    def __getitem__(self, gen: int) -> CacheEntry:
        return self._entries[gen]

    @property
    def entries(self) -> Sequence[CacheEntry]:
        return tuple(self._entries)

    def lookup(self, x) -> Optional[CacheEntry]:
        gen = self._index.get(_key(x))
        return None if gen is None else self._entries[gen]

    def insert(self, e: Evaluation) -> InsertResult:
        k = _key(e.x)
        gen = self._index.get(k)
        if gen is not None:
            return InsertResult(False, gen)
        gen = len(self._entries)
        x = np.array(e.x, dtype=float)
        x.flags.writeable = False
        self._entries.append(CacheEntry(x, e.f, e.h, gen, e.status, e.c))
        self._index[k] = gen
        key = (e.h, e.f, gen)
        if len(self._head) < self._head_size:
            bisect.insort(self._head, key)
        elif key < self._head[-1]:
            bisect.insort(self._head, key)
            self._head.pop()
        return InsertResult(True, gen)

    def head(self, count: int) -> List[CacheEntry]:
        """The ``count`` Best-first entries."""
        if count > self._head_size:
            self._head_size = max(count, 2 * self._head_size)
            self._head = sorted(best_key(e) for e in self._entries)[: self._head_size]
        return [self._entries[k[2]] for k in self._head[:count]]

    def dump_csv(self, path) -> None:
        """Write ``gen, x_1..x_n, f, h, status`` rows."""
        n = self._entries[0].x.size if self._entries else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gen"] + [f"x_{i + 1}" for i in range(n)] + ["f", "h", "status"])
            for e in self._entries:
                w.writerow([e.gen] + [repr(float(v)) for v in e.x] + [repr(e.f), repr(e.h), e.status])

    @classmethod
    def load_csv(cls, path) -> "Cache":
        cache = cls()
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows)
            n = len(header) - 4
            for row in rows:
                x = np.array([float(v) for v in row[1 : 1 + n]])
                f, h = float(row[1 + n]), float(row[2 + n])
                cache.insert(Evaluation(x, f, h, np.zeros(0), row[3 + n]))
        return cache


def dominates(a, b) -> bool:
    """Progressive-barrier dominance of ``a`` over ``b``.

    Feasible points compare on ``f``; infeasible points compare on ``(f, h)``
    in the Pareto sense.  A feasible and an infeasible point never dominate
    each other, and at least one inequality must be strict.
    """
    if a.h == 0.0 and b.h == 0.0:
        return a.f < b.f
    if a.h > 0.0 and b.h > 0.0:
        return a.f <= b.f and a.h <= b.h and (a.f < b.f or a.h < b.h)
    return False


def best(a, b):
    """Return the better of two entries: dominance, then smaller ``h``, then the older one."""
    if dominates(a, b) or a.h < b.h:
        return a
    if dominates(b, a) or b.h < a.h:
        return b
    return a if a.gen <= b.gen else b


def best_key(e) -> Tuple[float, float, int]:
    """Sort key realizing :func:`best` as a total order.

    Under the dominance above, Best reduces to lexicographic ``(h, f)`` with
    the generation index as the final tiebreak.
    """
    return (e.h, e.f, e.gen)


def sort_by_best(entries) -> List:
    return sorted(entries, key=best_key)


def elites(cache, n_e: int) -> List[CacheEntry]:
    """The ``n_e`` first entries of the cache ordered by Best."""
    if n_e < 1:
        raise ValueError(f"elite count must be positive, got {n_e}")
    if isinstance(cache, Cache):
        return cache.head(n_e)
    entries = list(cache)
    if len(entries) <= n_e:
        return sort_by_best(entries)
    return heapq.nsmallest(n_e, entries, key=best_key)


def incumbents(cache, h_max: float = math.inf) -> Tuple[Optional[CacheEntry], Optional[CacheEntry]]:
    """Best feasible entry and Best-minimal infeasible entry with ``h <= h_max``."""
    feas = None
    infeas = None
    for e in cache:
        if e.h == 0.0:
            if feas is None or (e.f, e.gen) < (feas.f, feas.gen):
                feas = e
        elif e.h <= h_max:
            if infeas is None or best_key(e) < best_key(infeas):
                infeas = e
    return feas, infeas
