"""Problem abstraction, bound handling and the constraint violation function.

A blackbox returns an objective value ``f`` and ``m`` inequality constraint
values ``c_j`` (feasible when ``c_j <= 0``).  Points outside the bound box
and evaluations that fail are given an infinite violation.
"""
from __future__ import annotations

import logging
import math
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

OK = "ok"
FAILED = "failed"


class UsageError(ValueError):
    """Raised when an operation is called with invalid arguments."""


class ConfigurationError(RuntimeError):
    """Raised when a problem cannot be constructed from its description."""


@dataclass(frozen=True)
class BoundBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).copy()
        upper = np.asarray(self.upper, dtype=float).copy()
        if lower.shape != upper.shape or lower.ndim != 1:
            raise UsageError("lower and upper bounds must be 1-D vectors of equal length")
        if np.any(lower > upper):
            raise UsageError("lower bound exceeds upper bound")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unbounded(cls, n: int) -> "BoundBox":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def uniform(cls, n: int, lower: float, upper: float) -> "BoundBox":
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def finite(self) -> np.ndarray:
        """Mask of coordinates bounded on both sides."""
        return np.isfinite(self.lower) & np.isfinite(self.upper)

    @property
    def is_bounded(self) -> bool:
        return bool(np.any(np.isfinite(self.lower) | np.isfinite(self.upper)))

    def clip(self, x) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(x, dtype=float), self.lower), self.upper)


@dataclass(frozen=True)
class EvalOutput:
    """Raw output of a blackbox call."""

    status: str
    f: float
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def failed(cls, m: int) -> "EvalOutput":
        return cls(FAILED, math.inf, np.full(m, math.inf))


@dataclass(frozen=True)
class Evaluation:
    x: np.ndarray
    f: float
    h: float
    c: np.ndarray
    status: str = OK

    @property
    def feasible(self) -> bool:
        return self.h == 0.0


@dataclass(frozen=True)
class Problem:
    """A blackbox optimization problem ``min f(x)`` s.t. ``c(x) <= 0``, ``x`` in ``bounds``.

    ``evaluator`` maps a length-``n`` vector to an :class:`EvalOutput`.
    ``serial`` declares that the evaluator must not be called concurrently.
    """

    name: str
    n: int
    m: int
    bounds: BoundBox
    evaluator: Callable[[np.ndarray], EvalOutput]
    serial: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise UsageError(f"dimension must be positive, got {self.n}")
        if self.m < 0:
            raise UsageError(f"constraint count must be non-negative, got {self.m}")
        if self.bounds.n != self.n:
            raise UsageError(f"bounds have length {self.bounds.n}, expected {self.n}")


def violation(c, in_bounds: bool, status: str = OK) -> float:
    """Sum of squared positive parts of ``c``; infinite outside the box or on failure."""
    if not in_bounds or status != OK:
        return math.inf
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        return 0.0
    # fsum: correctly rounded, so h does not depend on summation order
    h = math.fsum(np.square(np.maximum(c, 0.0)).tolist())
    if h == 0.0 and (c > 0.0).any():
        # squares of tiny violations underflow; keep h > 0 for infeasible points
        return math.ulp(0.0)
    return h


def within_bounds(b: BoundBox, x) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != b.lower.shape:
        raise UsageError(f"point has shape {x.shape}, bounds have shape {b.lower.shape}")
    return bool((x >= b.lower).all() and (x <= b.upper).all())


def evaluate(p: Problem, x) -> Evaluation:
    """Evaluate ``p`` at ``x``.

    Never raises on blackbox trouble: exceptions, non-finite objective values
    and non-finite constraint values all produce a failed evaluation with
    ``f = h = inf``.
    """
    x = np.array(x, dtype=float)
    if x.shape != (p.n,):
        raise UsageError(f"expected a point of length {p.n}, got shape {x.shape}")
    x.flags.writeable = False
    try:
        # non-finite results are reported as failures below, not as warnings
        with np.errstate(all="ignore"):
            out = p.evaluator(x)
        f = float(out.f)
        c = np.asarray(out.c, dtype=float).reshape(-1)
        status = out.status
    except Exception as exc:  # a crashing blackbox is a hidden constraint
        logger.debug("evaluator raised at %s: %r", x, exc)
        status, f, c = FAILED, math.inf, np.full(p.m, math.inf)
    if status == OK and (c.size != p.m or not math.isfinite(f) or not np.isfinite(c).all()):
        status = FAILED
    if status != OK:
        return Evaluation(x, math.inf, math.inf, np.full(p.m, math.inf), FAILED)
    h = violation(c, within_bounds(p.bounds, x), status)
    return Evaluation(x, f, h, c, status)


def from_functions(
    name: str,
    objective: Callable[[np.ndarray], float],
    constraints: Optional[Callable[[np.ndarray], Sequence[float]]] = None,
    *,
    n: int,
    m: int = 0,
    bounds: Optional[BoundBox] = None,
) -> Problem:
    """Build a :class:`Problem` from plain Python callables."""

    def evaluator(x):
        f = objective(x)
        c = np.asarray(constraints(x), dtype=float) if constraints is not None else np.zeros(0)
        return EvalOutput(OK, f, c)

    return Problem(name, n, m, bounds if bounds is not None else BoundBox.unbounded(n), evaluator)


INPUT_PLACEHOLDER = "{input}"


def spawn_external(
    command: Sequence[str],
    *,
    n: int,
    m: int,
    bounds: Optional[BoundBox] = None,
    name: Optional[str] = None,
    timeout: Optional[float] = None,
    serial: bool = False,
) -> Problem:
    """Wrap an executable blackbox as a :class:`Problem`.

    Each call writes ``x`` to a temporary file (one value per line, ``repr``
    precision) and runs ``command``; the token ``{input}`` in any argument is
    replaced by the file path, or the path is appended when no argument
    contains it.  Standard output must hold ``1 + m`` whitespace separated
    reals: the objective followed by the constraints.  A nonzero exit status,
    a timeout or unparsable output yields a failed evaluation.
    """
    command = list(command)
    if not command:
        raise ConfigurationError("empty blackbox command")
    exe = command[0]
    resolved = shutil.which(exe)
    if resolved is None and not (os.path.isfile(exe) and os.access(exe, os.X_OK)):
        raise ConfigurationError(f"blackbox executable not found: {exe}")
    has_placeholder = any(INPUT_PLACEHOLDER in arg for arg in command)

    def evaluator(x):
        fd, path = tempfile.mkstemp(prefix="bb_", suffix=".txt")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write("".join(f"{float(v)!r}\n" for v in x))
            if has_placeholder:
                argv = [arg.replace(INPUT_PLACEHOLDER, path) for arg in command]
            else:
                argv = command + [path]
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
            except (subprocess.TimeoutExpired, OSError) as exc:
                logger.warning("blackbox run failed: %s", exc)
                return EvalOutput.failed(m)
        finally:
            os.unlink(path)
        if proc.returncode != 0:
            return EvalOutput.failed(m)
        tokens = proc.stdout.split()
        if len(tokens) < 1 + m:
            return EvalOutput.failed(m)
        try:
            values = [float(t) for t in tokens[: 1 + m]]
        except ValueError:
            return EvalOutput.failed(m)
        return EvalOutput(OK, values[0], np.array(values[1:], dtype=float))

    return Problem(
        name or os.path.basename(exe),
        n,
        m,
        bounds if bounds is not None else BoundBox.unbounded(n),
        evaluator,
        serial=serial,
    )
