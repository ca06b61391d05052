"""A subset of classic analytical test problems for benchmarking.

Every entry records its dimension, constraint count, bounds, a standard
starting point and, where known, the best objective value together with how
that value was obtained (``analytic`` substitution or an ``oracle`` run).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .blackbox import OK, BoundBox, EvalOutput, Problem


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    n: int
    m: int
    bounds: BoundBox
    x0: np.ndarray
    objective: Callable[[np.ndarray], float]
    constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    reference_best: Optional[float] = None
    provenance: str = ""
    multimodal: bool = False
    # box for random starting points when the problem itself is unbounded
    start_box: Optional[BoundBox] = None

    @property
    def bounded(self) -> bool:
        return self.bounds.is_bounded

    @property
    def sampling_box(self) -> BoundBox:
        return self.start_box if self.start_box is not None else self.bounds

    def make(self) -> Problem:
        obj, cons, m = self.objective, self.constraints, self.m

        def evaluator(x):
            c = np.asarray(cons(x), dtype=float) if cons is not None else np.zeros(0)
            return EvalOutput(OK, float(obj(x)), c)

        return Problem(self.name, self.n, m, self.bounds, evaluator)

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        b = self.sampling_box
        return rng.uniform(b.lower, b.upper)


# -- unconstrained ------------------------------------------------------------


def rosenbrock(x):
    return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2


def rastrigin(x):
    return 10.0 * x.size + float(np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def griewank(x):
    i = np.arange(1, x.size + 1)
    return float(np.sum(x * x) / 4000.0 - np.prod(np.cos(x / np.sqrt(i))) + 1.0)


def branin(x):
    a, b, c = 1.0, 5.1 / (4.0 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8.0 * math.pi)
    return a * (x[1] - b * x[0] ** 2 + c * x[0] - r) ** 2 + s * (1.0 - t) * math.cos(x[0]) + s


def beale(x):
    x1, x2 = x
    return (1.5 - x1 + x1 * x2) ** 2 + (2.25 - x1 + x1 * x2**2) ** 2 + (2.625 - x1 + x1 * x2**3) ** 2


def arwhead(x):
    return float(np.sum(-4.0 * x[:-1] + 3.0) + np.sum((x[:-1] ** 2 + x[-1] ** 2) ** 2))


def bdqrtic(x):
    n = x.size
    total = 0.0
    for i in range(n - 4):
        q = x[i] ** 2 + 2 * x[i + 1] ** 2 + 3 * x[i + 2] ** 2 + 4 * x[i + 3] ** 2 + 5 * x[n - 1] ** 2
        total += (-4.0 * x[i] + 3.0) ** 2 + q**2
    return total


def powellsg(x):
    a, b, c, d = x[0::4], x[1::4], x[2::4], x[3::4]
    return float(np.sum((a + 10 * b) ** 2 + 5 * (c - d) ** 2 + (b - 2 * c) ** 4 + 10 * (a - d) ** 4))


def vardim(x):
    i = np.arange(1, x.size + 1)
    s = float(np.sum(i * (x - 1.0)))
    return float(np.sum((x - 1.0) ** 2)) + s**2 + s**4


def tridia(x):
    i = np.arange(2, x.size + 1)
    return (x[0] - 1.0) ** 2 + float(np.sum(i * (2.0 * x[1:] - x[:-1]) ** 2))


def srosenbr(x):
    odd, even = x[0::2], x[1::2]
    return float(np.sum(100.0 * (even - odd**2) ** 2 + (odd - 1.0) ** 2))


def woods(x):
    a, b, c, d = x[0::4], x[1::4], x[2::4], x[3::4]
    return float(
        np.sum(
            100 * (b - a**2) ** 2
            + (1 - a) ** 2
            + 90 * (d - c**2) ** 2
            + (1 - c) ** 2
            + 10 * (b + d - 2) ** 2
            + 0.1 * (b - d) ** 2
        )
    )


# -- constrained ----------------------------------------------------------------


def crescent_f(x):
    return x[-1]


def crescent_c(x):
    n = x.size
    return np.array([np.sum((x - 1.0) ** 2) - n**2, n**2 - np.sum((x + 1.0) ** 2)])


def disk_f(x):
    return float(np.sum(x))


def disk_c(x):
    return np.array([np.sum(x * x) - 3.0 * x.size])


def snake_f(x):
    return math.sqrt((x[0] - 20.0) ** 2 + (x[1] - 1.0) ** 2)


def snake_c(x):
    # feasible band sin(x1) - 0.1 <= x2 <= sin(x1)
    s = math.sin(x[0])
    return np.array([s - 0.1 - x[1], x[1] - s])


def hs19_f(x):
    return (x[0] - 10.0) ** 3 + (x[1] - 20.0) ** 3


def hs19_c(x):
    return np.array(
        [
            100.0 - (x[0] - 5.0) ** 2 - (x[1] - 5.0) ** 2,
            (x[1] - 5.0) ** 2 + (x[0] - 6.0) ** 2 - 82.81,
        ]
    )


def hs83_f(x):
    x1, x2, x3, x4, x5 = x
    return 5.3578547 * x3**2 + 0.8356891 * x1 * x5 + 37.293239 * x1 - 40792.141


def hs83_c(x):
    x1, x2, x3, x4, x5 = x
    a = 85.334407 + 0.0056858 * x2 * x5 + 0.0006262 * x1 * x4 - 0.0022053 * x3 * x5
    b = 80.51249 + 0.0071317 * x2 * x5 + 0.0029955 * x1 * x2 + 0.0021813 * x3**2
    c = 9.300961 + 0.0047026 * x3 * x5 + 0.0012547 * x1 * x3 + 0.0019085 * x3 * x4
    return np.array([-a, a - 92.0, 90.0 - b, b - 110.0, 20.0 - c, c - 25.0])


def g2_f(x):
    cos = np.cos(x)
    num = abs(float(np.sum(cos**4) - 2.0 * np.prod(cos**2)))
    den = math.sqrt(float(np.sum(np.arange(1, x.size + 1) * x * x)))
    return -num / den


def g2_c(x):
    return np.array([0.75 - float(np.prod(x)), float(np.sum(x)) - 7.5 * x.size])


def mezmontes_f(x):
    x1, x2 = x
    return -(math.sin(2 * math.pi * x1) ** 3) * math.sin(2 * math.pi * x2) / (x1**3 * (x1 + x2))


def mezmontes_c(x):
    x1, x2 = x
    return np.array([x1**2 - x2 + 1.0, 1.0 - x1 + (x2 - 4.0) ** 2])


# -- catalog ----------------------------------------------------------------------


def _box(n, lo, hi):
    return BoundBox.uniform(n, lo, hi)


def _free(n):
    return BoundBox.unbounded(n)


def _alternating(n, a, b):
    x = np.empty(n)
    x[0::2], x[1::2] = a, b
    return x


def _powellsg_start(n):
    return np.tile([3.0, -1.0, 0.0, 1.0], n // 4)


def _vardim_start(n):
    return 1.0 - np.arange(1, n + 1) / n


# Reference values tagged "oracle" come from a multi-start local solve
# (scipy SLSQP / BFGS, then Nelder-Mead polish); tests/oracles/reference_values.py
# recomputes them.  "analytic" values are exact substitutions at a known minimizer.
_SPECS: List[ProblemSpec] = [
    ProblemSpec("ROSENBROCK", 2, 0, BoundBox([-5.0, -5.0], [10.0, 10.0]), np.array([-1.2, 1.0]),
                rosenbrock, reference_best=0.0, provenance="analytic"),
    ProblemSpec("RASTRIGIN", 2, 0, _box(2, -5.12, 5.12), np.array([1.3, -2.7]),
                rastrigin, reference_best=0.0, provenance="analytic", multimodal=True),
    ProblemSpec("GRIEWANK", 10, 0, _box(10, -600.0, 600.0), np.full(10, 10.0),
                griewank, reference_best=0.0, provenance="analytic", multimodal=True),
    ProblemSpec("BRANIN", 2, 0, BoundBox([-5.0, 0.0], [10.0, 15.0]), np.array([0.0, 0.0]),
                branin, reference_best=0.39788735772973816, provenance="oracle", multimodal=True),
    ProblemSpec("BEALE", 2, 0, _free(2), np.array([1.0, 1.0]),
                beale, reference_best=0.0, provenance="analytic", start_box=_box(2, -4.5, 4.5)),
    ProblemSpec("ARWHEAD10", 10, 0, _free(10), np.ones(10),
                arwhead, reference_best=0.0, provenance="analytic", start_box=_box(10, -2.0, 2.0)),
    ProblemSpec("BDQRTIC10", 10, 0, _free(10), np.ones(10),
                bdqrtic, reference_best=18.28116175359354, provenance="oracle", start_box=_box(10, -2.0, 2.0)),
    ProblemSpec("POWELLSG4", 4, 0, _free(4), _powellsg_start(4),
                powellsg, reference_best=0.0, provenance="analytic", start_box=_box(4, -4.0, 5.0)),
    ProblemSpec("POWELLSG8", 8, 0, _free(8), _powellsg_start(8),
                powellsg, reference_best=0.0, provenance="analytic", start_box=_box(8, -4.0, 5.0)),
    ProblemSpec("POWELLSG12", 12, 0, _free(12), _powellsg_start(12),
                powellsg, reference_best=0.0, provenance="analytic", start_box=_box(12, -4.0, 5.0)),
    ProblemSpec("VARDIM10", 10, 0, _free(10), _vardim_start(10),
                vardim, reference_best=0.0, provenance="analytic", start_box=_box(10, -1.0, 2.0)),
    ProblemSpec("TRIDIA10", 10, 0, _free(10), np.ones(10),
                tridia, reference_best=0.0, provenance="analytic", start_box=_box(10, -2.0, 2.0)),
    ProblemSpec("SROSENBR6", 6, 0, _free(6), _alternating(6, -1.2, 1.0),
                srosenbr, reference_best=0.0, provenance="analytic", start_box=_box(6, -2.0, 2.0)),
    ProblemSpec("SROSENBR8", 8, 0, _free(8), _alternating(8, -1.2, 1.0),
                srosenbr, reference_best=0.0, provenance="analytic", start_box=_box(8, -2.0, 2.0)),
    ProblemSpec("SROSENBR10", 10, 0, _free(10), _alternating(10, -1.2, 1.0),
                srosenbr, reference_best=0.0, provenance="analytic", start_box=_box(10, -2.0, 2.0)),
    ProblemSpec("WOODS4", 4, 0, _free(4), np.array([-3.0, -1.0, -3.0, -1.0]),
                woods, reference_best=0.0, provenance="analytic", start_box=_box(4, -3.0, 3.0)),
    ProblemSpec("CRESCENT", 10, 2, _free(10), np.concatenate([[10.0], np.zeros(9)]),
                crescent_f, crescent_c, reference_best=-9.0, provenance="analytic",
                start_box=_box(10, -10.0, 10.0)),
    ProblemSpec("SNAKE", 2, 2, _free(2), np.array([0.0, -10.0]),
                snake_f, snake_c, reference_best=0.08097672506703178, provenance="oracle", multimodal=True,
                start_box=_box(2, -10.0, 10.0)),
    ProblemSpec("DISK", 10, 1, _free(10), np.zeros(10),
                disk_f, disk_c, reference_best=-10.0 * math.sqrt(3.0), provenance="analytic",
                start_box=_box(10, -10.0, 10.0)),
    ProblemSpec("HS19", 2, 2, BoundBox([13.0, 0.0], [100.0, 100.0]), np.array([20.1, 5.84]),
                hs19_f, hs19_c, reference_best=-6961.813875580135, provenance="analytic"),
    ProblemSpec("HS83", 5, 6, BoundBox([78.0, 33.0, 27.0, 27.0, 27.0], [102.0, 45.0, 45.0, 45.0, 45.0]),
                np.array([78.0, 33.0, 27.0, 27.0, 27.0]),
                hs83_f, hs83_c, reference_best=-30665.538672680275, provenance="oracle"),
    ProblemSpec("G2_10", 10, 2, _box(10, 0.0, 10.0), np.full(10, 5.0),
                g2_f, g2_c, multimodal=True),
    ProblemSpec("MEZMONTES", 2, 2, _box(2, 0.0, 10.0), np.array([1.5, 5.0]),
                mezmontes_f, mezmontes_c, reference_best=-0.09582504141803537, provenance="oracle",
                multimodal=True),
]

_BY_NAME: Dict[str, ProblemSpec] = {s.name: s for s in _SPECS}


def catalog() -> Tuple[ProblemSpec, ...]:
    return tuple(_SPECS)


def get(name: str) -> ProblemSpec:
    try:
        return _BY_NAME[name.upper()]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; valid names: {', '.join(sorted(_BY_NAME))}") from None


def make(name: str) -> Problem:
    return get(name).make()
