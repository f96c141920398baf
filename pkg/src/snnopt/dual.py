"""Dual view of a solver network.

For ``W = A^T A`` and ``I = A^T b`` the potentials are ``u = A^T v`` where
``v`` in R^m charges at rate ``b`` and jumps by ``-alpha * A_j`` whenever
neuron ``j`` fires (``+alpha * A_j`` for a negative spike). Firing happens
exactly when ``v`` crosses a wall ``A_j^T v = eta`` of the polytope
``{v : ||A^T v||_inf <= eta}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_vector, wall_index, wall_values
from .problem import ProblemInstance


@dataclass(frozen=True)
class DualState:
    v: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class WallQuery:
    """Signed wall index (``-j`` for ``-A_j``) with slack ``eta - A_j^T v``."""

    wall: int
    slack: float


def dual_step(dual: DualState, instance: ProblemInstance, spikes, dt: float, alpha: float = 1.0) -> DualState:
    """Charge by ``b * dt`` then apply the step's spikes.

    ``spikes`` is the signed spike count per neuron accumulated over the
    step's cascade.
    """
    s = as_vector(spikes, instance.n, "spikes")
    v = dual.v + instance.b * dt
    v = v - alpha * (instance.A @ s)
    return DualState(v, dual.t + dt)


def dual_from_counts(instance: ProblemInstance, t: float, k_signed, alpha: float = 1.0) -> np.ndarray:
    """Integrated dual state ``b t - alpha A k``."""
    return instance.b * t - alpha * (instance.A @ np.asarray(k_signed, dtype=float))


def consistency_gap(u, v, A) -> float:
    """``||u - A^T v||_inf``."""
    return float(np.abs(np.asarray(u) - np.asarray(A).T @ np.asarray(v)).max(initial=0.0))


def wall_slacks(v, instance: ProblemInstance, eta: float = 1.0) -> list[WallQuery]:
    w = wall_values(instance.A, np.asarray(v, dtype=float))
    return [WallQuery(wall_index(p, instance.n), float(eta - w[p])) for p in range(w.size)]


def violated_walls(v, instance: ProblemInstance, eta: float = 1.0, one_sided: bool = False) -> set[int]:
    """Signed indices ``j`` with ``A_j^T v > eta``.

    One-sided networks only have the positive walls.
    """
    w = wall_values(instance.A, np.asarray(v, dtype=float))
    n = instance.n
    hits = {wall_index(p, n) for p in np.flatnonzero(w > eta)}
    if one_sided:
        hits = {j for j in hits if j > 0}
    return hits


def dual_objective(v, b) -> float:
    return float(np.dot(b, v))
