"""Niceness of a matrix and the random-sphere instance model.

A matrix ``A`` (m x n, m <= n) is gamma-nice when three margins are all at
least gamma:

1. every column of every m-column subset is at distance >= gamma from the
   span of the other columns of that subset;
2. distinct vertices are at distance >= gamma, a vertex being the solution
   of ``A_S^T v = s`` for an m-subset ``S`` and signs ``s in {-1, 1}^m``
   (vertices need not be feasible);
3. every coordinate of every vertex has magnitude >= gamma.

:func:`gamma_exact` enumerates everything; :func:`gamma_sampled` evaluates
the same minima over a random subset of (subset, sign) tuples, which gives
an upper bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapExceededError, DimensionError
from .numerics import as_matrix, project_onto_span

SUBSET_CAP = 5000
SIGN_CAP = 4096
DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class GammaReport:
    gamma_nondegen: float
    gamma_vertex_gap: float
    gamma_min_coord: float
    gamma: float
    exact: bool
    samples_used: int

    def as_dict(self) -> dict:
        return {
            "gamma_nondegen": self.gamma_nondegen,
            "gamma_vertex_gap": self.gamma_vertex_gap,
            "gamma_min_coord": self.gamma_min_coord,
            "gamma": self.gamma,
            "exact": self.exact,
            "samples_used": self.samples_used,
        }


def rsm_sample(m: int, n: int, seed: int) -> np.ndarray:
    """``m x n`` matrix with i.i.d. columns uniform on the unit sphere."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    G = np.random.default_rng(seed).standard_normal((m, n))
    return G / np.linalg.norm(G, axis=0)


def _sign_patterns(m: int) -> np.ndarray:
    """``m x 2^m`` matrix whose column ``k`` has entry ``-1`` where bit ``i`` of ``k`` is set."""
    k = np.arange(2**m)
    bits = (k[None, :] >> np.arange(m)[:, None]) & 1
    return 1.0 - 2.0 * bits


def _column_margins(A: np.ndarray, S: tuple) -> float:
    cols = [A[:, j] for j in S]
    best = np.inf
    for pos, j in enumerate(S):
        others = cols[:pos] + cols[pos + 1:]
        best = min(best, float(np.linalg.norm(A[:, j] - project_onto_span(others, A[:, j]))))
    return best


def _min_vertex_gap(V: np.ndarray) -> float:
    """Smallest distance between geometrically distinct rows of ``V``."""
    if V.shape[0] < 2:
        return np.inf
    tree = cKDTree(V)
    pairs = tree.query_pairs(DEDUP_TOL, output_type="ndarray")
    keep = np.ones(V.shape[0], dtype=bool)
    if pairs.size:
        # Union duplicates into their smallest index.
        parent = np.arange(V.shape[0])

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i, j in pairs:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        keep = np.array([find(i) == i for i in range(V.shape[0])])
    U = V[keep]
    if U.shape[0] < 2:
        return np.inf
    d, _ = cKDTree(U).query(U, k=2)
    return float(d[:, 1].min())


def _evaluate(A: np.ndarray, tuples: dict) -> tuple[float, float, float]:
    """Margins over ``{subset: sorted sign indices}``."""
    m = A.shape[0]
    patterns = _sign_patterns(m)
    c1 = np.inf
    c3 = np.inf
    blocks = []
    for S in sorted(tuples):
        margin = _column_margins(A, S)
        c1 = min(c1, margin)
        AS = A[:, list(S)]
        if margin <= 1e-12 or np.linalg.matrix_rank(AS) < m:
            continue
        signs = patterns[:, sorted(tuples[S])]
        V = np.linalg.solve(AS.T, signs).T
        blocks.append(V)
        c3 = min(c3, float(np.abs(V).min()))
    V = np.vstack(blocks) if blocks else np.zeros((0, m))
    c2 = _min_vertex_gap(V)
    return c1, c2, c3


def _report(c1, c2, c3, exact, used) -> GammaReport:
    # A margin with nothing to evaluate (e.g. no nonsingular subset) is inf.
    return GammaReport(c1, c2, c3, min(c1, c2, c3), exact, used)


def _check_shape(A: np.ndarray) -> None:
    m, n = A.shape
    if m > n:
        raise DimensionError(f"niceness needs m <= n, got {m} x {n}")


def gamma_exact(A, subset_cap: int = SUBSET_CAP, sign_cap: int = SIGN_CAP) -> GammaReport:
    """All three margins by full enumeration.

    Raises
    ------
    CapExceededError
        If ``C(n, m) > subset_cap`` or ``2^m > sign_cap``; use
        :func:`gamma_sampled` instead.
    """
    A = as_matrix(A)
    _check_shape(A)
    m, n = A.shape
    subsets = math.comb(n, m)
    if subsets > subset_cap or 2**m > sign_cap:
        raise CapExceededError(
            f"exact niceness needs C({n},{m}) = {subsets} subsets and 2^{m} sign patterns; "
            "use sampling"
        )
    all_signs = list(range(2**m))
    tuples = {S: all_signs for S in itertools.combinations(range(n), m)}
    c1, c2, c3 = _evaluate(A, tuples)
    return _report(c1, c2, c3, True, subsets * 2**m)


def _unrank_subset(rank: int, n: int, m: int) -> tuple:
    """The ``rank``-th m-subset of ``range(n)`` in lexicographic order."""
    out = []
    x = 0
    for k in range(m, 0, -1):
        while True:
            c = math.comb(n - x - 1, k - 1)
            if rank < c:
                break
            rank -= c
            x += 1
        out.append(x)
        x += 1
    return tuple(out)


def gamma_sampled(A, trials: int, seed: int) -> GammaReport:
    """Margins over ``trials`` distinct random (subset, sign) tuples.

    Tuples are drawn without replacement, so ``trials`` at least the size of
    the tuple space evaluates every tuple. The result is an upper bound on
    the exact value and is reported with ``exact = False``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    A = as_matrix(A)
    _check_shape(A)
    m, n = A.shape
    n_signs = 2**m
    total = math.comb(n, m) * n_signs
    rng = np.random.default_rng(seed)
    if trials >= total:
        picks = range(total)
    else:
        picks = sorted(int(p) for p in rng.choice(total, size=trials, replace=False))
    tuples: dict = {}
    for p in picks:
        S = _unrank_subset(p // n_signs, n, m)
        tuples.setdefault(S, []).append(p % n_signs)
    c1, c2, c3 = _evaluate(A, tuples)
    return _report(c1, c2, c3, False, len(picks))


@dataclass(frozen=True)
class ProbeCurve:
    """Residual norms of the first column against the greedily grown span.

    ``residuals[0]`` is ``||A_1||`` and ``residuals[r]`` the residual after
    bucket ``r``. ``correlations[r-1]`` is the squared correlation of the
    pick in bucket ``r`` and ``thresholds_met[r-1]`` whether it exceeded
    ``tau / (m - r + 1)``. ``slope`` is the least-squares slope of
    ``log(residual)`` against bucket index over the numerically nonzero
    entries, and ``gamma_upper`` the residual after ``m - 1`` buckets, which
    bounds the first niceness margin from above.
    """

    residuals: np.ndarray
    correlations: np.ndarray
    thresholds_met: np.ndarray
    bucket_size: int
    slope: float
    gamma_upper: float

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.residuals) < 0))


def probe_from_matrix(A: np.ndarray, tau: float) -> ProbeCurve:
    """Bucketed greedy projection of ``A_1`` onto the remaining columns."""
    m, n = A.shape
    k = (n - 1) // m
    if k < 1:
        raise DimensionError("need at least one column per bucket")
    a1 = A[:, 0]
    chosen: list[np.ndarray] = []
    res = [float(np.linalg.norm(a1))]
    corr, met = [], []
    r = a1.copy()
    for bucket in range(m):
        cols = A[:, 1 + bucket * k: 1 + (bucket + 1) * k]
        rn = np.linalg.norm(r)
        c2 = ((r / rn) @ cols) ** 2 if rn > 0 else np.zeros(cols.shape[1])
        best = int(np.argmax(c2))
        corr.append(float(c2[best]))
        met.append(bool(c2[best] > tau / (m - bucket)))
        chosen.append(cols[:, best])
        r = a1 - project_onto_span(chosen, a1)
        res.append(float(np.linalg.norm(r)))
    res_arr = np.array(res)
    live = res_arr > 1e-12 * res_arr[0]
    idx = np.flatnonzero(live)
    slope = float(np.polyfit(idx, np.log(res_arr[idx]), 1)[0]) if idx.size >= 2 else float("nan")
    return ProbeCurve(res_arr, np.array(corr), np.array(met), k, slope, float(res_arr[m - 1]))


def gamma_upper_probe(m: int, n: int, tau: float, seed: int) -> ProbeCurve:
    """Run the bucket probe on a seeded random-sphere matrix.

    The ``n - 1`` columns after the first are split into ``m`` buckets of
    ``floor((n - 1) / m)`` columns; each bucket contributes the column most
    correlated with the current residual of the first column.
    """
    if n < 2 * m:
        raise ValueError("need n >= 2m")
    if not 0 < tau <= m / 4:
        raise ValueError("tau must lie in (0, m/4]")
    return probe_from_matrix(rsm_sample(m, n, seed), tau)
