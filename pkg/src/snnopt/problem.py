"""Problem instances and the small worked instances used across the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .numerics import as_matrix, as_vector


@dataclass(frozen=True)
class ProblemInstance:
    """Optimization input: an ``m x n`` matrix ``A`` and a target ``b``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A)
        b = as_vector(self.b, name="b")
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
        if not np.all(np.isfinite(b)):
            raise DimensionError("b has non-finite entries")
        A = A.copy()
        b = b.copy()
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def figure6_instance() -> ProblemInstance:
    """2 x 3 instance with columns (1,0), (0,1), (2/3,2/3) and b = (0.1, 0.4).

    Its minimum-l1 solution is (0, 0.3, 0.15) with value 0.45 and dual
    optimum (0.5, 1).
    """
    A = np.array([[1.0, 0.0, 2.0 / 3.0], [0.0, 1.0, 2.0 / 3.0]])
    return ProblemInstance(A, np.array([0.1, 0.4]))


def figure7_instance() -> ProblemInstance:
    """Two walls A_1 = (0,-1), A_2 = (1,-1)/sqrt(2) with b = (1, 0)."""
    r = 1.0 / np.sqrt(2.0)
    A = np.array([[0.0, r], [-1.0, -r]])
    return ProblemInstance(A, np.array([1.0, 0.0]))


def rsm_instance(m: int, n: int, seed: int) -> ProblemInstance:
    """RSM matrix with a uniformly random unit target, both drawn from ``seed``."""
    from .niceness import rsm_sample

    A = rsm_sample(m, n, seed)
    rng = np.random.default_rng([seed, 1])
    b = rng.standard_normal(m)
    return ProblemInstance(A, b / np.linalg.norm(b))
