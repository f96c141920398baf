"""Reference solvers and optimality checks.

These routines are deliberately independent of the spiking dynamics: they
solve the two target problems directly and measure how far a candidate
solution is from optimal.

* :func:`nnls_solve` -- active-set (Lawson--Hanson) non-negative least squares.
* :func:`l1_solve_enum` -- minimum l1-norm solution of ``Ax = b`` by support
  enumeration, with a dual certificate when one can be built.
* :func:`kkt_check` -- violation magnitudes for the four KKT conditions.
* :func:`perturbation_bound_check` -- l1 error bound from a residual.
* :func:`epsilon_report` -- relative errors against the oracle optimum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import CapExceededError, ConvergenceError, DimensionError, InfeasibleError
from .numerics import as_matrix, as_vector, spectral_summary
from .problem import ProblemInstance

Kind = Literal["nnls", "l1"]

ENUM_CAP = 5000
EXACT_TOL = 1e-9
DEFAULT_EPS_GRID = (0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.001)


@dataclass(frozen=True)
class OracleSolution:
    """Result of an oracle solve.

    Attributes
    ----------
    x_opt : numpy.ndarray
        Optimal primal point.
    objective : float
        ``0.5 * ||b - Ax||^2`` for NNLS, ``||x||_1`` for l1.
    dual_certificate : numpy.ndarray or None
        For l1, a ``v`` with ``||A^T v||_inf <= 1`` and ``b^T v = objective``.
    method : str
        Solver tag.
    unique : bool or None
        For l1, whether no other exact solution attains the optimum.
    iterations : int
        Outer iterations (NNLS) or supports tried (l1).
    """

    x_opt: np.ndarray
    objective: float
    dual_certificate: np.ndarray | None = None
    method: str = ""
    unique: bool | None = None
    iterations: int = 0


def _check_ab(A, b):
    A = as_matrix(A)
    b = as_vector(b, name="b")
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
    return A, b


def nnls_solve(A, b, max_iter: int | None = None) -> OracleSolution:
    """Minimize ``0.5 * ||b - Ax||^2`` subject to ``x >= 0``.

    Classic Lawson--Hanson active-set method: move the coordinate with the
    largest positive gradient into the passive set, solve the unconstrained
    problem on the passive set, and step back toward feasibility whenever a
    passive coordinate would turn negative.

    Parameters
    ----------
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    max_iter : int, optional
        Cap on outer iterations, ``10 * n`` by default.

    Raises
    ------
    ConvergenceError
        If the cap is reached before the KKT conditions hold.
    """
    A, b = _check_ab(A, b)
    m, n = A.shape
    if max_iter is None:
        max_iter = 10 * n
    col_norm = float(np.linalg.norm(A, axis=0).max(initial=0.0))
    eps_scale = 10.0 * max(m, n) * np.finfo(float).eps * max(col_norm, 1.0)
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    it = 0

    def gradient_tol():
        # Rounding floor of A^T(b - Ax), which grows with the iterate.
        return eps_scale * (np.linalg.norm(b) + col_norm * np.abs(x).sum())

    while (~passive).any() and w[~passive].max(initial=-np.inf) > gradient_tol():
        if it >= max_iter:
            raise ConvergenceError(f"NNLS did not converge in {max_iter} iterations")
        it += 1
        cand = np.where(~passive, w, -np.inf)
        passive[int(np.argmax(cand))] = True
        while True:
            s = np.zeros(n)
            idx = np.flatnonzero(passive)
            s[idx], *_ = np.linalg.lstsq(A[:, idx], b, rcond=None)
            if s[idx].min() > 0:
                break
            neg = idx[s[idx] <= 0]
            step = np.min(x[neg] / (x[neg] - s[neg]))
            x = x + step * (s - x)
            passive &= x > eps_scale * max(1.0, np.abs(x).max())
            x[~passive] = 0.0
            if not passive.any():
                s = np.zeros(n)
                break
        x = s
        w = A.T @ (b - A @ x)
    r = b - A @ x
    return OracleSolution(x, 0.5 * float(r @ r), None, "lawson-hanson", None, it)


def least_squares_via_nnls(A, b) -> np.ndarray:
    """Unconstrained least squares through the doubled NNLS instance.

    Writing ``x = x_plus - x_minus`` with both parts non-negative turns
    ``min ||b - Ax||`` into NNLS over the columns ``[A, -A]``.
    """
    A, b = _check_ab(A, b)
    n = A.shape[1]
    sol = nnls_solve(np.hstack([A, -A]), b)
    return sol.x_opt[:n] - sol.x_opt[n:]


def _supports(n: int, m: int):
    for size in range(0, min(m, n) + 1):
        yield from itertools.combinations(range(n), size)


def l1_solve_enum(A, b, cap: int = ENUM_CAP) -> OracleSolution:
    """Minimum-l1 exact solution of ``Ax = b`` by enumerating supports.

    Every support of size at most ``m`` with full column rank is solved
    exactly; solutions whose residual exceeds ``1e-9 * max(1, ||b||)`` are
    discarded and the smallest l1 norm wins. A dual certificate ``v`` is
    built from the optimal support, padded with extra walls when the
    support has fewer than ``m`` columns.

    Raises
    ------
    CapExceededError
        If ``C(n, m)`` exceeds ``cap``.
    InfeasibleError
        If no support yields an exact solution.
    """
    A, b = _check_ab(A, b)
    m, n = A.shape
    if math.comb(n, min(m, n)) > cap:
        raise CapExceededError(f"C({n}, {m}) supports exceed the cap {cap}")
    thresh = EXACT_TOL * max(1.0, float(np.linalg.norm(b)))
    best_x, best_val, tried = None, np.inf, 0
    optima = []
    for S in _supports(n, m):
        tried += 1
        x = np.zeros(n)
        if S:
            AS = A[:, S]
            if np.linalg.matrix_rank(AS) < len(S):
                continue
            x[list(S)], *_ = np.linalg.lstsq(AS, b, rcond=None)
        if np.linalg.norm(A @ x - b) > thresh:
            continue
        val = float(np.abs(x).sum())
        optima.append((val, x))
        if val < best_val - 1e-12:
            best_x, best_val = x, val
    if best_x is None:
        raise InfeasibleError("Ax = b has no exact solution")
    close = [x for val, x in optima if val <= best_val + EXACT_TOL * max(1.0, best_val)]
    unique = all(np.max(np.abs(x - best_x)) <= EXACT_TOL * max(1.0, best_val) for x in close)
    cert = _l1_certificate(A, best_x)
    return OracleSolution(best_x, best_val, cert, "support-enumeration", unique, tried)


def _l1_certificate(A: np.ndarray, x: np.ndarray) -> np.ndarray | None:
    m, n = A.shape
    scale = max(1.0, float(np.abs(x).max(initial=0.0)))
    T = [i for i in range(n) if abs(x[i]) > 1e-12 * scale]
    if len(T) > m:
        return None
    rest = [i for i in range(n) if i not in T]
    need = m - len(T)
    for extra in itertools.combinations(rest, need):
        cols = T + list(extra)
        M = A[:, cols]
        if np.linalg.matrix_rank(M) < m:
            continue
        for signs in itertools.product((1.0, -1.0), repeat=need):
            rhs = np.concatenate([np.sign(x[T]), np.array(signs)])
            v = np.linalg.solve(M.T, rhs)
            if np.abs(A.T @ v).max() <= 1.0 + EXACT_TOL:
                return v
    return None


@dataclass(frozen=True)
class KKTReport:
    """Violation magnitudes for the four KKT conditions."""

    kind: str
    primal_feasibility: float
    dual_feasibility: float
    stationarity: float
    complementary_slackness: float
    tol: float
    gap: float = 0.0

    @property
    def violations(self) -> dict:
        return {
            "primal_feasibility": self.primal_feasibility,
            "dual_feasibility": self.dual_feasibility,
            "stationarity": self.stationarity,
            "complementary_slackness": self.complementary_slackness,
        }

    def passes(self, name: str) -> bool:
        return self.violations[name] <= self.tol

    @property
    def passed(self) -> bool:
        return all(val <= self.tol for val in self.violations.values())


def kkt_check(kind: Kind, A, b, x, v=None, tol: float = 1e-9) -> KKTReport:
    """Evaluate the KKT conditions for a candidate pair.

    Parameters
    ----------
    kind : {"nnls", "l1"}
        ``"nnls"``: ``min 0.5||b - Ax||^2, x >= 0`` with multipliers ``v`` in
        R^n (default ``A^T(Ax - b)``). ``"l1"``: ``min ||x||_1, Ax = b`` with
        dual vector ``v`` in R^m (required).
    tol : float
        Tolerance used by :attr:`KKTReport.passed`. Coordinates with
        ``|x_i| <= tol`` count as zero in the l1 subgradient test.
    """
    A, b = _check_ab(A, b)
    x = as_vector(x, A.shape[1], "x")
    if kind == "nnls":
        grad = A.T @ (A @ x - b)
        mu = grad if v is None else as_vector(v, A.shape[1], "multipliers")
        return KKTReport(
            "nnls",
            primal_feasibility=float(max(0.0, -x.min(initial=0.0))),
            dual_feasibility=float(max(0.0, -mu.min(initial=0.0))),
            stationarity=float(np.abs(grad - mu).max(initial=0.0)),
            complementary_slackness=float(np.abs(x * mu).max(initial=0.0)),
            tol=tol,
        )
    if kind != "l1":
        raise ValueError(f"unknown problem kind {kind!r}")
    if v is None:
        raise ValueError("the l1 check needs a dual vector v")
    v = as_vector(v, A.shape[0], "v")
    c = A.T @ v
    nz = np.abs(x) > tol
    stat_nz = np.abs(c[nz] - np.sign(x[nz])).max(initial=0.0)
    stat_z = np.maximum(np.abs(c[~nz]) - 1.0, 0.0).max(initial=0.0)
    xp, xm = np.maximum(x, 0.0), np.maximum(-x, 0.0)
    cs = (xp * np.abs(1.0 - c) + xm * np.abs(1.0 + c)).max(initial=0.0)
    return KKTReport(
        "l1",
        primal_feasibility=float(np.abs(A @ x - b).max(initial=0.0)),
        dual_feasibility=float(max(0.0, np.abs(c).max(initial=0.0) - 1.0)),
        stationarity=float(max(stat_nz, stat_z)),
        complementary_slackness=float(cs),
        tol=tol,
        gap=float(abs(np.abs(x).sum() - b @ v)),
    )


@dataclass(frozen=True)
class PerturbationReport:
    """Both sides of ``| ||x||_1 - OPT | <= sqrt(n / lambda_min) * residual``."""

    lhs: float
    rhs: float
    slack: float
    holds: bool
    v_norm: float
    v_norm_bound: float
    v_norm_holds: bool
    v_in_range: bool


def perturbation_bound_check(
    instance: ProblemInstance,
    x_ideal,
    v_ideal,
    opt_l1: float,
    scale: float = 1.0,
    tol: float = 1e-9,
    lambda_min: float | None = None,
) -> PerturbationReport:
    """Check the l1 error bound implied by a residual.

    ``v_ideal / scale`` must be feasible for the dual program, so ``scale``
    is the threshold used by the run (``eta``) and the norm check compares
    ``||v_ideal|| / scale`` against ``sqrt(n / lambda_min)``.
    """
    A, b = instance.A, instance.b
    x = as_vector(x_ideal, instance.n, "x_ideal")
    v = as_vector(v_ideal, instance.m, "v_ideal")
    if lambda_min is None:
        lambda_min = spectral_summary(A).lambda_min
    root = math.sqrt(instance.n / lambda_min)
    lhs = abs(float(np.abs(x).sum()) - opt_l1)
    rhs = root * float(np.linalg.norm(b - A @ x))
    vn = float(np.linalg.norm(v)) / scale
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    in_range = float(np.linalg.norm(A @ coef - v)) <= 1e-8 * max(1.0, np.linalg.norm(v))
    return PerturbationReport(
        lhs, rhs, rhs - lhs, lhs <= rhs + tol, vn, root, vn <= root + tol, bool(in_range)
    )


@dataclass(frozen=True)
class EpsReport:
    """Relative errors of a candidate solution.

    ``eps_l1`` is ``None`` for NNLS. When the l1 optimum is 0 the gap is
    reported in absolute terms and ``absolute_gap`` is set.
    """

    eps_l2: float
    eps_l1: float | None
    passes_at: dict = field(default_factory=dict)
    absolute_gap: bool = False


def epsilon_report(
    instance: ProblemInstance,
    x,
    kind: Kind,
    oracle: OracleSolution | None = None,
    grid=DEFAULT_EPS_GRID,
) -> EpsReport:
    """Relative error of ``x`` for the given problem kind.

    NNLS: ``||Ax - Ax*|| / ||b||``. l1: ``||b - Ax|| / ||b||`` and
    ``(||x||_1 - OPT) / OPT``. A precomputed ``oracle`` skips the solve.
    """
    A, b = instance.A, instance.b
    x = as_vector(x, instance.n, "x")
    bn = float(np.linalg.norm(b))
    denom = bn if bn > 0 else 1.0
    if kind == "nnls":
        if oracle is None:
            oracle = nnls_solve(A, b)
        e2 = float(np.linalg.norm(A @ x - A @ oracle.x_opt)) / denom
        return EpsReport(e2, None, {eps: e2 <= eps for eps in grid})
    if kind != "l1":
        raise ValueError(f"unknown problem kind {kind!r}")
    if oracle is None:
        oracle = l1_solve_enum(A, b)
    e2 = float(np.linalg.norm(b - A @ x)) / denom
    gap = float(np.abs(x).sum()) - oracle.objective
    absolute = oracle.objective == 0.0
    e1 = gap if absolute else gap / oracle.objective
    return EpsReport(e2, e1, {eps: (e2 <= eps and e1 <= eps) for eps in grid}, absolute)
