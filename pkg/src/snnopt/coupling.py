"""Ideal coupling diagnostics for the two-sided solver network.

For a dual point ``v`` and a shrink factor ``tau`` the ideal point
``v_ideal`` is the Euclidean projection of ``v`` onto the shrunken polytope
``{w : ||A^T w||_inf <= (1 - tau) eta}``. Equivalently
``v = v_ideal + sum_{j in G} z_j A_j`` with ``z >= 0``, where ``G`` is the
set of walls active at ``v_ideal``. While the network runs, ``v_ideal``
moves smoothly and does not jump when neurons fire, as long as the spike
strength is small compared with ``tau`` and the niceness of ``A``.

On top of the ideal point this module tracks

* the ideal solution: NNLS of ``b`` over the active walls, and its support
  (the super-active walls);
* the super point: ``v`` pulled back onto the shrunken walls of the
  super-active set only;
* an auxiliary bank of ``m - 1`` vectors, one per possible super-active
  set size, which drift with the residual and reset to the super point
  when that size is entered;
* the potential ``b^T (v_ideal + sum of auxiliary vectors)``.

:class:`CouplingDiagnostics` is a simulation probe that maintains all of
this along a run and records the worst violation of each structural
property; :func:`check_lemma_suite` turns those records into a report.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError, DegeneracyError, MissingDiagnosticsError
from .niceness import gamma_exact, gamma_sampled
from .numerics import project_onto_span, signed_columns, spectral_summary, wall_index, wall_values
from .oracles import nnls_solve, perturbation_bound_check
from .problem import ProblemInstance

ENUM_CAP = 2**15


@dataclass(frozen=True)
class CouplingConfig:
    """``tau`` in (0, 1); ``tolerance`` for decomposition and membership tests."""

    tau: float
    tolerance: float = 1e-9
    eta: float = 1.0
    enum_cap: int = ENUM_CAP

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")

    @property
    def level(self) -> float:
        return (1.0 - self.tau) * self.eta


TAU_CAP = 0.1


def estimate_gamma(A, trials: int = 10_000, seed: int = 0) -> float:
    """Exact niceness when enumeration is within its caps, else sampled."""
    try:
        return gamma_exact(A).gamma
    except CapExceededError:
        return gamma_sampled(A, trials, seed).gamma


def default_tau(A, gamma: float | None = None, factor: float = 1.0, cap: float = TAU_CAP) -> float:
    """``min(cap, factor * gamma / (n^2 lambda_max^2))``.

    ``lambda_max`` is the largest eigenvalue of ``A^T A``; ``gamma`` is
    estimated from ``A`` when not given.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    if gamma is None:
        gamma = estimate_gamma(A)
    lam = spectral_summary(A).lambda_max
    tau = min(cap, factor * gamma / (n**2 * lam**2))
    if not tau > 0:
        raise DegeneracyError("niceness is zero; no admissible tau")
    return tau


def default_alpha(tau: float, m: int, gamma: float, ratio_factor: float = 1.0, poly_factor: float = 1.0) -> float:
    """``min(ratio_factor * tau / m, poly_factor * tau^2 gamma^3)``."""
    alpha = min(ratio_factor * tau / m, poly_factor * tau**2 * gamma**3)
    if not alpha > 0:
        raise DegeneracyError("niceness is zero; no admissible alpha")
    return alpha


@dataclass(frozen=True)
class IdealPoint:
    """``v = v_ideal + signed_columns(A, gamma_set) @ cone_coords``."""

    v: np.ndarray
    v_ideal: np.ndarray
    gamma_set: tuple
    cone_coords: np.ndarray


@dataclass(frozen=True)
class IdealSolution:
    """NNLS fit over the active walls.

    ``x_ideal`` is the signed n-vector; ``super_set`` the walls with a
    coefficient above the tolerance; ``fit`` is ``A x_ideal``.
    """

    x_ideal: np.ndarray
    super_set: tuple
    fit: np.ndarray

    def residual(self, b) -> float:
        return float(np.linalg.norm(b - self.fit))


class _SupportCache:
    """Per active set: signed columns and the inverse Gram matrix (None if singular)."""

    def __init__(self, A: np.ndarray):
        self.A = A
        self.store: dict = {}

    def get(self, walls: tuple):
        hit = self.store.get(walls)
        if hit is None:
            M = signed_columns(self.A, walls)
            G = M.T @ M
            Ginv = None if walls and np.linalg.cond(G) > 1e12 else np.linalg.inv(G) if walls else G
            hit = (M, Ginv)
            self.store[walls] = hit
        return hit


def _try_support(cache: _SupportCache, v, walls, cfg: CouplingConfig):
    """``(v_ideal, z, wall values at v_ideal)`` if ``walls`` is a valid active set."""
    level, tol = cfg.level, cfg.tolerance
    if not walls:
        vi, z = v, np.zeros(0)
    else:
        M, Ginv = cache.get(walls)
        if Ginv is None:
            return None
        z = Ginv @ (M.T @ v - level)
        if z.min() < -tol:
            return None
        vi = v - M @ z
    wv = wall_values(cache.A, vi)
    if wv.max() > level + tol:
        return None
    return vi, z, wv


def _candidate_sets(walls, m):
    for size in range(0, min(m, len(walls)) + 1):
        for G in itertools.combinations(walls, size):
            mags = [abs(j) for j in G]
            if len(set(mags)) == len(mags):
                yield G


def ideal_decompose(v, instance: ProblemInstance, cfg: CouplingConfig, hint=None, cache=None) -> IdealPoint:
    """Split ``v`` into its ideal point and nonnegative cone coordinates.

    Candidate active sets are drawn first from walls with
    ``A_j^T v > (1 - tau) eta - tolerance`` and, if none of those works,
    from all walls (walls of an active set can sit below the level when the
    active columns are at an obtuse angle). ``hint`` is an active set to try
    before enumerating. When several candidates are valid they must agree on
    ``v_ideal``; the largest one is reported. ``cache`` (internal) reuses
    factorizations across calls on the same matrix.

    Raises
    ------
    DegeneracyError
        If no candidate satisfies the invariants, or valid candidates
        disagree.
    CapExceededError
        If the candidate count exceeds ``cfg.enum_cap``.
    """
    A = instance.A
    v = np.asarray(v, dtype=float)
    n = A.shape[1]
    if cache is None or cache.A is not A:
        cache = _SupportCache(A)
    if hint is not None:
        hint = tuple(hint)
        hit = _try_support(cache, v, hint, cfg)
        # Accept the hint only if no further wall is active at v_ideal;
        # otherwise a larger set is correct and enumeration finds it.
        if hit is not None and set(_active(hit[2], n, cfg)) <= set(hint):
            return IdealPoint(v, hit[0], hint, hit[1])
    wv = wall_values(A, v)
    near = [wall_index(p, n) for p in np.flatnonzero(wv > cfg.level - cfg.tolerance)]
    found = _enumerate(cache, v, near, cfg)
    if not found:
        everything = [wall_index(p, n) for p in range(2 * n)]
        found = _enumerate(cache, v, everything, cfg)
    if not found:
        raise DegeneracyError("no consistent active set for this dual point")
    found.sort(key=lambda item: (-len(item[0]), item[0]))
    G, vi, z = found[0]
    for _, other, _ in found[1:]:
        if np.abs(other - vi).max() > 1e3 * cfg.tolerance:
            raise DegeneracyError("active sets disagree on the ideal point")
    return IdealPoint(v, vi, G, z)


def _active(wv: np.ndarray, n: int, cfg: CouplingConfig) -> list:
    return [wall_index(p, n) for p in np.flatnonzero(wv > cfg.level - cfg.tolerance)]


def _enumerate(cache: _SupportCache, v, walls, cfg: CouplingConfig):
    m = cache.A.shape[0]
    count = sum(math.comb(len(walls), s) for s in range(0, min(m, len(walls)) + 1))
    if count > cfg.enum_cap:
        raise CapExceededError(f"{count} candidate active sets exceed the cap {cfg.enum_cap}")
    found = []
    for G in _candidate_sets(sorted(walls, key=lambda j: (abs(j), -j)), m):
        hit = _try_support(cache, v, G, cfg)
        if hit is not None:
            found.append((tuple(G), hit[0], hit[1]))
    return found


def ideal_solution(ip: IdealPoint, instance: ProblemInstance, tolerance: float = 1e-9) -> IdealSolution:
    """NNLS of ``b`` over the active walls; super-active walls have coefficient > tolerance."""
    return _solution_for(ip.gamma_set, instance, tolerance)


def _solution_for(walls: tuple, instance: ProblemInstance, tolerance: float) -> IdealSolution:
    A, b = instance.A, instance.b
    x = np.zeros(instance.n)
    if not walls:
        return IdealSolution(x, (), np.zeros(instance.m))
    M = signed_columns(A, walls)
    y = nnls_solve(M, b).x_opt
    for j, yj in zip(walls, y):
        x[abs(j) - 1] += np.sign(j) * yj
    sup = tuple(j for j, yj in zip(walls, y) if yj > tolerance)
    return IdealSolution(x, sup, M @ y)


def super_point(v, super_set, instance: ProblemInstance, cfg: CouplingConfig) -> np.ndarray:
    """``v - A_S z`` with ``A_j^T (v - A_S z) = (1 - tau) eta`` for ``j`` in ``S``.

    Raises
    ------
    DegeneracyError
        If the super-active columns are linearly dependent.
    """
    super_set = tuple(super_set)
    if not super_set:
        raise ValueError("super set must be nonempty")
    v = np.asarray(v, dtype=float)
    M = signed_columns(instance.A, super_set)
    G = M.T @ M
    if np.linalg.cond(G) > 1e12:
        raise DegeneracyError("super-active columns are linearly dependent")
    z = np.linalg.solve(G, M.T @ v - cfg.level)
    return v - M @ z


@dataclass(frozen=True)
class AuxiliaryBank:
    """``aux[d - 1]`` is the auxiliary vector for super-set size ``d``."""

    aux: np.ndarray
    last_size: int = 0

    @classmethod
    def empty(cls, m: int) -> "AuxiliaryBank":
        return cls(np.zeros((max(m - 1, 0), m)), 0)


def auxiliary_update(
    bank: AuxiliaryBank,
    prev: IdealSolution,
    cur: IdealSolution,
    super_pt,
    b,
    dt: float,
) -> AuxiliaryBank:
    """Advance the bank across ``dt`` of time.

    With ``d`` the current super-set size: if the size was already ``d`` the
    vector ``d`` drifts by ``(b - A x_ideal) dt`` using the previous fit; if
    the size just became ``d`` it is reset to ``super_pt`` (a vector, or a
    callable producing it); all other vectors are unchanged.
    """
    aux = bank.aux.copy()
    d_old, d_new = len(prev.super_set), len(cur.super_set)
    if 1 <= d_new <= aux.shape[0]:
        if d_old == d_new:
            aux[d_new - 1] += (np.asarray(b) - prev.fit) * dt
        else:
            aux[d_new - 1] = super_pt() if callable(super_pt) else super_pt
    return AuxiliaryBank(aux, d_new)


def potential(ip: IdealPoint, bank: AuxiliaryBank, b) -> float:
    """``b^T (v_ideal + sum_d aux_d)``."""
    return float(np.dot(b, ip.v_ideal + bank.aux.sum(axis=0)))


LEMMA_KEYS = {
    "a": "ideal point unchanged by spikes",
    "b": "ideal point drift between spikes",
    "c": "auxiliary jump improves the objective",
    "d": "potential growth rate",
    "e": "ideal solution identities",
    "f": "residual monotonicity",
}


@dataclass
class _Worst:
    value: float = 0.0
    at_time: float | None = None
    count: int = 0

    def update(self, violation: float, t: float) -> None:
        self.count += 1
        if violation > self.value:
            self.value, self.at_time = float(violation), float(t)


@dataclass
class _Record:
    step: int
    v: np.ndarray
    ip: IdealPoint
    sol: IdealSolution
    k: np.ndarray


@dataclass
class LemmaReport:
    """Per-property ``{pass, worst_violation, at_time}`` plus run metadata."""

    tolerance: float
    checks: dict
    contraction: dict
    decomposition_failures: int = 0
    transitions: int = 0
    evaluations: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.decomposition_failures == 0 and all(c["pass"] for c in self.checks.values())

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "tolerance": self.tolerance,
            "checks": self.checks,
            "distance_contraction": self.contraction,
            "decomposition_failures": self.decomposition_failures,
            "super_set_transitions": self.transitions,
            "evaluations": self.evaluations,
        }


class CouplingDiagnostics:
    """Simulation probe tracking the ideal coupling along a run.

    Attach to :func:`snnopt.sim.simulate`; every step with spikes and every
    snapshot is processed. Quiet stretches between spikes are handled in
    bulk: the active set is compared at both ends and the stretch is
    bisected down to single steps wherever it changes.

    Parameters
    ----------
    instance : ProblemInstance
    network : Network
        The simulated network; must carry the dual matrix and target.
    cfg : CouplingConfig
    dt : float
    opt_l1 : float, optional
        Optimal l1 value; enables the perturbation bound at each snapshot.
    """

    def __init__(self, instance, network, cfg: CouplingConfig, dt: float, opt_l1: float | None = None):
        if not network.has_dual:
            raise ValueError("network has no dual view")
        self.instance = instance
        self.D = network.dual_matrix
        self.b = instance.b
        self.alpha = network.spike_strength
        self.cfg = cfg
        self.dt = dt
        self.opt_l1 = opt_l1
        self.m = instance.m
        self.worst = {key: _Worst() for key in LEMMA_KEYS}
        self.contraction = _Worst()
        self.failures = 0
        self.transitions = 0
        self._solutions: dict = {}
        self._drifts: dict = {}
        self._lambda_min = None
        self._cache = _SupportCache(instance.A)
        k0 = np.zeros(self.D.shape[1], dtype=np.int64)
        v0 = np.zeros(self.m)
        ip0 = IdealPoint(v0, v0, (), np.zeros(0))
        self.bank = AuxiliaryBank.empty(self.m)
        self.rec = _Record(0, v0, ip0, self._solution(()), k0)
        self.phi = 0.0
        self._check_identities(self.rec, 0.0)

    # -- helpers -----------------------------------------------------------
    def _solution(self, walls: tuple) -> IdealSolution:
        sol = self._solutions.get(walls)
        if sol is None:
            sol = _solution_for(walls, self.instance, self.cfg.tolerance)
            self._solutions[walls] = sol
        return sol

    def _drift(self, walls: tuple) -> np.ndarray:
        d = self._drifts.get(walls)
        if d is None:
            M = signed_columns(self.instance.A, walls)
            d = self.b - project_onto_span(M, self.b)
            self._drifts[walls] = d
        return d

    def _record(self, step: int, k: np.ndarray, hint) -> _Record | None:
        t = step * self.dt
        v = self.b * t - self.alpha * (self.D @ k)
        try:
            ip = ideal_decompose(v, self.instance, self.cfg, hint, self._cache)
        except (DegeneracyError, CapExceededError):
            self.failures += 1
            return None
        return _Record(step, v, ip, self._solution(ip.gamma_set), k)

    def _check_identities(self, rec: _Record, t: float) -> None:
        b, fit = self.b, rec.sol.fit
        e1 = abs(b @ fit - fit @ fit)
        e2 = abs((b - fit) @ (b - fit) - (b @ b - fit @ fit))
        self.worst["e"].update(max(e1, e2), t)

    # -- transitions -------------------------------------------------------
    def _advance(self, a: _Record, c: _Record) -> None:
        """Account for the completed states from ``a`` (exclusive) to ``c``."""
        steps = c.step - a.step
        span = steps * self.dt
        t = c.step * self.dt
        b = self.b
        bank = self.bank
        d_old, d_new = len(a.sol.super_set), len(c.sol.super_set)
        reset_jump = None
        if d_old != d_new:
            self.transitions += 1
            if 1 <= d_new <= self.m - 1:
                old = bank.aux[d_new - 1].copy()
                sp = super_point(c.v, c.sol.super_set, self.instance, self.cfg)
                bank = auxiliary_update(bank, a.sol, c.sol, sp, b, span)
                reset_jump = float(b @ (bank.aux[d_new - 1] - old))
                self.worst["c"].update(max(0.0, -reset_jump), t)
            else:
                bank = AuxiliaryBank(bank.aux, d_new)
        else:
            bank = auxiliary_update(bank, a.sol, c.sol, None, b, span)
        self.bank = bank
        phi = float(b @ (c.ip.v_ideal + bank.aux.sum(axis=0)))
        res_a = a.sol.residual(b)
        growth = res_a**2 * span
        if d_old != d_new or a.ip.gamma_set != c.ip.gamma_set:
            theta = self._switch_fraction(a, c)
            if theta is not None:
                # The rate changes where the ideal point meets the new face.
                growth = (res_a**2 * theta + c.sol.residual(b) ** 2 * (1.0 - theta)) * span
        self.worst["d"].update(max(0.0, growth - (phi - self.phi)), t)
        self.phi = phi
        res_c = c.sol.residual(b)
        fit_a, fit_c = np.linalg.norm(a.sol.fit), np.linalg.norm(c.sol.fit)
        self.worst["f"].update(max(0.0, res_c - res_a, fit_a - fit_c), t)
        self._check_identities(c, t)

    def _switch_fraction(self, a: _Record, c: _Record) -> float | None:
        """Fraction of a single quiet step spent with the old active set.

        Between spikes ``v`` moves linearly, so the switch point is found by
        bisection on the segment. Returns None unless ``a`` and ``c`` are
        consecutive steps with the same spike counts.
        """
        if c.step - a.step != 1 or not np.array_equal(a.k, c.k):
            return None
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            try:
                ip = ideal_decompose(a.v + self.b * (mid * self.dt), self.instance, self.cfg,
                                     a.ip.gamma_set, self._cache)
            except (DegeneracyError, CapExceededError):
                return None
            if ip.gamma_set == a.ip.gamma_set:
                lo = mid
            else:
                hi = mid
        return lo

    def _check_drift(self, a: _Record, c: _Record) -> None:
        if a.ip.gamma_set != c.ip.gamma_set:
            return
        span = (c.step - a.step) * self.dt
        expect = self._drift(a.ip.gamma_set) * span
        dev = np.abs((c.ip.v_ideal - a.ip.v_ideal) - expect).max()
        self.worst["b"].update(dev, c.step * self.dt)

    def _segments(self, a: _Record, c: _Record, k: np.ndarray) -> list:
        """Records at every step in ``(a, c]`` where the active set changes."""
        if a.ip.gamma_set == c.ip.gamma_set or c.step - a.step <= 1:
            return [c]
        mid = self._record((a.step + c.step) // 2, k, a.ip.gamma_set)
        if mid is None:
            return [c]
        return self._segments(a, mid, k) + self._segments(mid, c, k)

    def _quiet(self, to_step: int, k: np.ndarray) -> None:
        a = self.rec
        if to_step <= a.step:
            return
        c = self._record(to_step, k, a.ip.gamma_set)
        if c is None:
            return
        for nxt in self._segments(a, c, k):
            self._check_drift(a, nxt)
            self._advance(a, nxt)
            a = nxt
        self.rec = a

    # -- probe hooks -------------------------------------------------------
    def on_cascade(self, step: int, t: float, k_before, k_after) -> None:
        # The charged state before the cascade ends the quiet stretch; the
        # cascade itself takes no time.
        self._quiet(step, k_before)
        pre = self.rec
        if pre.step != step:
            post = self._record(step, k_after, None)
            if post is not None:
                self.rec = post
            return
        post = self._record(step, k_after, pre.ip.gamma_set)
        if post is None:
            return
        self.worst["a"].update(np.abs(pre.ip.v_ideal - post.ip.v_ideal).max(), t)
        d_pre = np.linalg.norm(pre.v - pre.ip.v_ideal)
        d_post = np.linalg.norm(post.v - post.ip.v_ideal)
        self.contraction.update(max(0.0, d_post - d_pre), t)
        self._advance(pre, post)
        self.rec = post

    def on_snapshot(self, snap) -> dict:
        k = getattr(snap, "k", None)
        if k is None:
            raise MissingDiagnosticsError("snapshot carries no spike counts")
        self._quiet(snap.step, k)
        rec = self.rec
        out = {
            "v_ideal": rec.ip.v_ideal.copy(),
            "gamma_set": rec.ip.gamma_set,
            "super_set": rec.sol.super_set,
            "x_ideal": rec.sol.x_ideal.copy(),
            "residual": rec.sol.residual(self.b),
            "potential": self.phi,
        }
        if self.opt_l1 is not None:
            if self._lambda_min is None:
                self._lambda_min = spectral_summary(self.instance.A).lambda_min
            out["perturbation"] = perturbation_bound_check(
                self.instance, rec.sol.x_ideal, rec.ip.v_ideal, self.opt_l1,
                scale=(1.0 - self.cfg.tau) * self.cfg.eta, lambda_min=self._lambda_min,
            )
        return out

    def report(self, tolerance: float) -> LemmaReport:
        checks = {}
        for key, w in self.worst.items():
            checks[key] = {
                "name": LEMMA_KEYS[key],
                "pass": bool(w.value <= tolerance),
                "worst_violation": w.value,
                "at_time": w.at_time,
                "evaluations": w.count,
            }
        contraction = {
            "pass": bool(self.contraction.value <= tolerance),
            "worst_violation": self.contraction.value,
            "at_time": self.contraction.at_time,
        }
        return LemmaReport(tolerance, checks, contraction, self.failures, self.transitions)


def check_lemma_suite(trace, instance: ProblemInstance | None = None, cfg: CouplingConfig | None = None,
                      tolerance: float = 1e-6) -> LemmaReport:
    """Summarize the coupling checks recorded along ``trace``.

    The trace must come from a run with a :class:`CouplingDiagnostics`
    probe attached.

    Raises
    ------
    MissingDiagnosticsError
        If the trace was recorded without the probe.
    """
    probes = [p for p in getattr(trace, "probes", ()) if isinstance(p, CouplingDiagnostics)]
    if not probes:
        raise MissingDiagnosticsError("trace has no coupling diagnostics attached")
    return probes[0].report(tolerance)


def perturbation_series(trace, instance: ProblemInstance, cfg: CouplingConfig, opt_l1: float) -> list:
    """Ideal-solution error bound at every snapshot of a finished run.

    A lighter alternative to the full probe when only the bound is needed.
    Snapshots whose dual point cannot be decomposed are skipped.
    """
    lam = spectral_summary(instance.A).lambda_min
    cache = _SupportCache(instance.A)
    out = []
    for snap in trace.snapshots:
        if snap.v is None:
            raise MissingDiagnosticsError("snapshots carry no dual state")
        try:
            ip = ideal_decompose(snap.v, instance, cfg, cache=cache)
        except (DegeneracyError, CapExceededError):
            continue
        sol = ideal_solution(ip, instance, cfg.tolerance)
        out.append((snap.t, perturbation_bound_check(instance, sol.x_ideal, ip.v_ideal, opt_l1,
                                                     scale=cfg.level, lambda_min=lam)))
    return out
