"""Mesh and poll size vectors, mesh projection and poll directions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List

import numpy as np

from .blackbox import Problem

logger = logging.getLogger(__name__)

SUCCESS = "success"
FAILURE = "failure"


@dataclass(frozen=True)
class MeshState:
    """Per-coordinate mesh size ``delta``, poll size ``Delta`` and frame center.

    ``Delta_init`` caps the poll size on success; ``scale`` couples the mesh
    size to the poll size through ``delta = min(Delta, scale * Delta**2)``.
    """

    delta: np.ndarray
    Delta: np.ndarray
    center: np.ndarray
    Delta_init: np.ndarray
    scale: float = 1.0

    @property
    def n(self) -> int:
        return self.center.size


def _mesh_size(Delta: np.ndarray, scale: float) -> np.ndarray:
    return np.minimum(Delta, scale * Delta * Delta)


def init_mesh(p: Problem, x0, scale: float = 1.0) -> MeshState:
    x0 = np.asarray(x0, dtype=float)
    lower, upper = p.bounds.lower, p.bounds.upper
    clipped = np.minimum(np.maximum(x0, lower), upper)
    if not np.array_equal(clipped, x0):
        logger.warning("starting point outside bounds, clamped to %s", clipped)
    finite = p.bounds.finite
    Delta = np.ones(p.n)
    Delta[finite] = (upper[finite] - lower[finite]) / 10.0
    # degenerate (fixed) coordinates still need a positive size
    Delta[Delta <= 0] = 1.0
    return MeshState(_mesh_size(Delta, scale), Delta, clipped, Delta.copy(), scale)


def project(ms: MeshState, x) -> np.ndarray:
    """Round ``x`` to the nearest point of the mesh anchored at the frame center."""
    x = np.asarray(x, dtype=float)
    return ms.center + ms.delta * np.round((x - ms.center) / ms.delta)


def on_mesh(ms: MeshState, x) -> bool:
    return bool(np.array_equal(project(ms, x), np.asarray(x, dtype=float)))


def _householder_basis(ms: MeshState, rng: np.random.Generator) -> np.ndarray:
    n = ms.n
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    H = np.eye(n) - 2.0 * np.outer(v, v)
    ratio = ms.Delta / ms.delta
    cap = np.maximum(np.floor(ratio), 1.0)
    B = np.empty((n, n))
    for j in range(n):
        col = H[:, j]
        col = col / np.max(np.abs(col))
        d = np.round(col * ratio)
        # keep every poll point inside the frame
        d = np.clip(d, -cap, cap)
        if not np.any(d):
            d = np.zeros(n)
            d[j] = 1.0
        B[:, j] = d
    return B


def poll_directions(ms: MeshState, rng: np.random.Generator, max_tries: int = 10) -> List[np.ndarray]:
    """Return ``2n`` integer mesh directions: a basis and its negation.

    The basis comes from a random Householder matrix scaled to the frame and
    rounded to integers.  When rounding makes it singular the draw is
    repeated, then falls back to scaled coordinate directions.
    """
    n = ms.n
    for _ in range(max_tries):
        B = _householder_basis(ms, rng)
        if np.linalg.matrix_rank(B) == n:
            break
    else:
        B = np.diag(np.maximum(np.floor(ms.Delta / ms.delta), 1.0))
    cols = [B[:, j].copy() for j in range(n)]
    return cols + [-c for c in cols]


def poll_points(ms: MeshState, directions) -> List[np.ndarray]:
    return [ms.center + ms.delta * d for d in directions]


def update_sizes(ms: MeshState, outcome: str) -> MeshState:
    if outcome == SUCCESS:
        Delta = np.minimum(2.0 * ms.Delta, ms.Delta_init)
    elif outcome == FAILURE:
        Delta = ms.Delta / 2.0
    else:
        raise ValueError(f"unknown outcome {outcome!r}")
    return replace(ms, Delta=Delta, delta=_mesh_size(Delta, ms.scale))


def recenter(ms: MeshState, center) -> MeshState:
    return replace(ms, center=np.asarray(center, dtype=float).copy())
