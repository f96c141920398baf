"""Discrete-time integrate-and-fire simulation with instantaneous cascades.

A network of ``n`` neurons has a stored matrix ``W``, input current ``I``,
spike strength ``alpha`` and threshold ``eta``. A spike of neuron ``j``
changes the potential of neuron ``i`` by ``-alpha * W[j, i]``. For the
solver networks ``W = A^T A`` and ``I = A^T b``.

Each step advances time by ``dt``, charges every neuron by ``I * dt`` and
then resolves a cascade: all neurons above threshold fire together, their
spikes are applied, and this repeats until no neuron is above threshold.
Two-sided networks also fire negative spikes below ``-eta``.

Because the network is static, the potential after any number of steps is
the integrated form ``u = I * t - alpha * W^T k`` where ``k`` holds the
signed spike counts. The engine evaluates that form directly, so there is
no accumulated drift, and it can jump over quiet stretches to the next step
at which some neuron crosses threshold. The result is identical to applying
:func:`step` repeatedly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DimensionError, DivergenceError
from .numerics import as_matrix, as_vector, spectral_summary
from .problem import ProblemInstance


class Sidedness(str, Enum):
    ONE = "one-sided"
    TWO = "two-sided"


@dataclass(frozen=True)
class Network:
    """Static integrate-and-fire network.

    Attributes
    ----------
    connectivity : numpy.ndarray, shape (n, n)
        Stored matrix ``W``; a spike of ``j`` moves ``u_i`` by ``-alpha * W[j, i]``.
    input_current : numpy.ndarray, shape (n,)
    sidedness : Sidedness
    spike_strength : float
        ``alpha``.
    threshold : float
        ``eta``.
    dual_matrix : numpy.ndarray or None
        ``D`` (m x n) such that the dual state is ``v = b t - alpha D k``.
    target : numpy.ndarray or None
        ``b`` for networks built from an instance.
    mirrored : bool
        True for a one-sided network built by doubling a two-sided one; the
        signed rate of original neuron ``i`` is ``x[i] - x[i + n/2]``.
    """

    connectivity: np.ndarray
    input_current: np.ndarray
    sidedness: Sidedness = Sidedness.ONE
    spike_strength: float = 1.0
    threshold: float = 1.0
    dual_matrix: np.ndarray | None = None
    target: np.ndarray | None = None
    mirrored: bool = False

    def __post_init__(self):
        W = as_matrix(self.connectivity)
        I = as_vector(self.input_current, name="input_current")
        if W.shape[0] != W.shape[1] or W.shape[0] != I.shape[0]:
            raise DimensionError(f"connectivity {W.shape} does not match input of length {I.shape[0]}")
        if not (self.spike_strength > 0 and self.threshold > 0):
            raise ValueError("spike strength and threshold must be positive")
        object.__setattr__(self, "connectivity", W)
        object.__setattr__(self, "input_current", I)
        object.__setattr__(self, "sidedness", Sidedness(self.sidedness))

    @property
    def n(self) -> int:
        return self.input_current.shape[0]

    @property
    def two_sided(self) -> bool:
        return self.sidedness is Sidedness.TWO

    @property
    def has_dual(self) -> bool:
        return self.dual_matrix is not None and self.target is not None


def build_network(
    instance: ProblemInstance,
    sidedness: Sidedness | str = Sidedness.TWO,
    alpha: float = 1.0,
    eta: float = 1.0,
) -> Network:
    """Solver network ``W = A^T A``, ``I = A^T b`` for an instance."""
    A, b = instance.A, instance.b
    if not np.any(A):
        raise ValueError("A must be nonzero")
    return Network(A.T @ A, A.T @ b, Sidedness(sidedness), alpha, eta, A, b)


def two_sided_to_one_sided(net: Network) -> Network:
    """Simulate a two-sided network with a one-sided network of twice the size.

    Each neuron gets a mirror copy with negated input and negated couplings,
    ``W' = [[W, -W], [-W, W]]`` and ``I' = (I, -I)``.
    """
    if not net.two_sided:
        raise ValueError("network is already one-sided")
    W, I = net.connectivity, net.input_current
    W2 = np.block([[W, -W], [-W, W]])
    D = None if net.dual_matrix is None else np.hstack([net.dual_matrix, -net.dual_matrix])
    return Network(W2, np.concatenate([I, -I]), Sidedness.ONE, net.spike_strength, net.threshold, D, net.target, True)


def default_dt(net: Network) -> float:
    """``min(0.01, alpha / (10 * lambda_max))`` with ``lambda_max`` from ``W``."""
    lam = float(np.abs(np.linalg.eigvals(net.connectivity)).max())
    if lam == 0.0:
        return 0.01
    return min(0.01, net.spike_strength / (10.0 * lam))


@dataclass(frozen=True)
class SimConfig:
    """Discretization settings.

    ``cascade_cap`` defaults to ``10 * n`` rounds per step; ``probe_stride``
    is the number of steps between snapshots (default: about 1000
    snapshots per run).
    """

    dt: float
    horizon: float
    cascade_cap: int | None = None
    probe_stride: int | None = None

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0 and self.dt <= self.horizon):
            raise ValueError("need 0 < dt <= horizon")
        if self.cascade_cap is not None and self.cascade_cap < 1:
            raise ValueError("cascade_cap must be at least 1")
        if self.probe_stride is not None and self.probe_stride < 1:
            raise ValueError("probe_stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.horizon / self.dt + 1e-9))

    def stride(self) -> int:
        if self.probe_stride is not None:
            return self.probe_stride
        return max(1, self.n_steps // 1000)

    def cap(self, n: int) -> int:
        return self.cascade_cap if self.cascade_cap is not None else 10 * n


@dataclass(frozen=True)
class SimState:
    """State after a completed step; ``u`` is determined by ``step`` and the counts."""

    step: int
    t: float
    u: np.ndarray
    k_pos: np.ndarray
    k_neg: np.ndarray

    @property
    def k_signed(self) -> np.ndarray:
        return self.k_pos - self.k_neg


def initial_state(net: Network) -> SimState:
    z = np.zeros(net.n, dtype=np.int64)
    return SimState(0, 0.0, np.zeros(net.n), z, z.copy())


@dataclass
class Snapshot:
    """Record taken every ``probe_stride`` steps and at the end of a run."""

    step: int
    t: float
    u: np.ndarray
    x: np.ndarray
    v: np.ndarray | None = None
    payload: dict = field(default_factory=dict)
    k: np.ndarray | None = None


@dataclass
class SpikeTrace:
    """Everything a run produced.

    ``event_times``, ``event_neurons`` (0-based) and ``event_signs`` are
    parallel arrays sorted by time.
    """

    network: Network
    config: SimConfig
    event_times: np.ndarray
    event_neurons: np.ndarray
    event_signs: np.ndarray
    snapshots: list
    final_state: SimState
    cascades: int = 0
    max_rounds: int = 0
    probes: list = field(default_factory=list)

    @property
    def events(self):
        return list(zip(self.event_times.tolist(), self.event_neurons.tolist(), self.event_signs.tolist()))


class _Engine:
    """Mutable single-run simulator shared by :func:`step` and :func:`simulate`."""

    def __init__(self, net: Network, cfg: SimConfig, state: SimState | None = None):
        self.net = net
        self.dt = cfg.dt
        self.eta = net.threshold
        self.I = net.input_current
        self.scaled_T = net.spike_strength * net.connectivity.T
        self.cap = cfg.cap(net.n)
        self.two = net.two_sided
        state = state or initial_state(net)
        self.step = state.step
        self.k_pos = state.k_pos.astype(np.int64).copy()
        self.k_neg = state.k_neg.astype(np.int64).copy()
        self._refresh_offset()
        self.events: list[tuple[float, int, int]] = []
        self.cascades = 0
        self.max_rounds = 0

    def _refresh_offset(self):
        self.offset = self.scaled_T @ (self.k_pos - self.k_neg)

    def potential(self, step: int) -> np.ndarray:
        return self.I * (step * self.dt) - self.offset

    def _spikes(self, u: np.ndarray) -> np.ndarray:
        s = (u > self.eta).astype(np.int64)
        if self.two:
            s -= (u < -self.eta).astype(np.int64)
        return s

    def cascade(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        """Resolve all spikes at ``step``; returns signed counts before and after."""
        t = step * self.dt
        before = self.k_pos - self.k_neg
        u = self.potential(step)
        rounds = 0
        s = self._spikes(u)
        while s.any():
            rounds += 1
            if rounds > self.cap:
                raise DivergenceError(
                    f"cascade at t={t:.6g} exceeded {self.cap} rounds; spike strength too large"
                )
            fired = np.flatnonzero(s)
            for i in fired:
                self.events.append((t, int(i), int(s[i])))
            self.k_pos += s > 0
            self.k_neg += s < 0
            self._refresh_offset()
            u = self.potential(step)
            s = self._spikes(u)
        if rounds:
            self.cascades += 1
            self.max_rounds = max(self.max_rounds, rounds)
        return before, self.k_pos - self.k_neg

    def next_event(self, after: int, limit: int) -> int | None:
        """First step in ``(after, limit]`` at which some neuron crosses threshold."""
        rate = self.I * self.dt
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(self.I > 0, (self.eta + self.offset) / rate, np.inf)
            cand = up.min()
            if self.two:
                down = np.where(self.I < 0, (self.offset - self.eta) / rate, np.inf)
                cand = min(cand, down.min())
        if not np.isfinite(cand) or cand > limit + 2:
            return None
        # The crossing estimate is accurate to far better than a step; back
        # off two steps and confirm with the exact potential formula.
        s = max(after + 1, int(math.floor(cand)) - 2)
        while s <= limit:
            if self._spikes(self.potential(s)).any():
                return s
            s += 1
        return None

    def state(self, step: int) -> SimState:
        return SimState(step, step * self.dt, self.potential(step), self.k_pos.copy(), self.k_neg.copy())


def step(state: SimState, net: Network, cfg: SimConfig) -> SimState:
    """Advance one time step: charge by ``I * dt`` then resolve the cascade.

    Raises
    ------
    DivergenceError
        If the cascade needs more than ``cascade_cap`` rounds.
    """
    eng = _Engine(net, cfg, state)
    eng.cascade(state.step + 1)
    return eng.state(state.step + 1)


def simulate(net: Network, cfg: SimConfig, probes: Sequence[Any] = ()) -> SpikeTrace:
    """Run the network over ``cfg.horizon``.

    Parameters
    ----------
    probes : sequence
        Diagnostic hooks. A probe may define ``on_cascade(step, t,
        k_before, k_after)`` (called for every step with spikes) and
        ``on_snapshot(snapshot)`` returning a dict merged into the snapshot
        payload. Probes must not modify their arguments.

    Returns
    -------
    SpikeTrace
    """
    eng = _Engine(net, cfg)
    last = cfg.n_steps
    stride = cfg.stride()
    on_cascade = [p.on_cascade for p in probes if hasattr(p, "on_cascade")]
    on_snapshot = [p.on_snapshot for p in probes if hasattr(p, "on_snapshot")]
    alpha = net.spike_strength
    snapshots = []
    cur = 0
    next_probe = min(stride, last)
    while cur < last:
        ev = eng.next_event(cur, next_probe)
        cur = ev if ev is not None else next_probe
        if ev is not None:
            before, after = eng.cascade(cur)
            for hook in on_cascade:
                hook(cur, cur * cfg.dt, before, after)
        if cur == next_probe:
            t = cur * cfg.dt
            k = eng.k_pos - eng.k_neg
            snap = Snapshot(cur, t, eng.potential(cur), alpha * k / t, k=k.copy())
            if net.has_dual:
                snap.v = net.target * t - alpha * (net.dual_matrix @ k)
            for hook in on_snapshot:
                extra = hook(snap)
                if extra:
                    snap.payload.update(extra)
            snapshots.append(snap)
            next_probe = min(next_probe + stride, last)
    if eng.events:
        times, neurons, signs = (np.array(col) for col in zip(*eng.events))
    else:
        times, neurons, signs = np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return SpikeTrace(
        net, cfg, times, neurons.astype(np.int64), signs.astype(np.int64), snapshots,
        eng.state(last), eng.cascades, eng.max_rounds, list(probes),
    )


def firing_rate(source: SimState | SpikeTrace, t: float | None = None, alpha: float | None = None) -> np.ndarray:
    """Signed firing rate ``alpha * (k_pos - k_neg) / t``.

    For a :class:`SimState` the counts and time are taken from the state
    (``alpha`` must be supplied); for a :class:`SpikeTrace` the counts are
    those of events at times ``<= t`` (default: the end of the run).
    """
    if isinstance(source, SpikeTrace):
        alpha = source.network.spike_strength if alpha is None else alpha
        if t is None:
            t = source.final_state.t
        if t <= 0:
            raise ValueError("firing rate needs t > 0")
        mask = source.event_times <= t + 1e-12 * max(1.0, t)
        k = np.zeros(source.network.n)
        np.add.at(k, source.event_neurons[mask], source.event_signs[mask])
        return alpha * k / t
    if alpha is None:
        raise ValueError("alpha is required for a bare state")
    t = source.t if t is None else t
    if t <= 0:
        raise ValueError("firing rate needs t > 0")
    return alpha * (source.k_pos - source.k_neg) / t


def signed_rate(net: Network, x: np.ndarray) -> np.ndarray:
    """Fold a mirrored one-sided rate vector back to signed rates."""
    if not net.mirrored:
        return x
    h = x.shape[-1] // 2
    return x[..., :h] - x[..., h:]


def example1_network() -> Network:
    """Two one-sided neurons: neuron 1 is charged and excites neuron 2 by 0.1."""
    W = np.array([[1.0, -0.1], [0.0, 1.0]])
    return Network(W, np.array([0.1, 0.0]), Sidedness.ONE, 1.0, 1.0)


def write_events_csv(trace: SpikeTrace, path) -> None:
    """CSV with header ``time,neuron,sign``; neurons are 1-based."""
    with open(path, "w") as fh:
        fh.write("time,neuron,sign\n")
        for t, i, s in zip(trace.event_times.tolist(), trace.event_neurons.tolist(), trace.event_signs.tolist()):
            fh.write(f"{t!r},{i + 1},{s}\n")


def write_snapshots_csv(trace: SpikeTrace, path) -> None:
    """CSV with ``time,u_1..u_n,x_1..x_n`` and ``v_1..v_m`` when available."""
    n = trace.network.n
    cols = ["time"] + [f"u_{i + 1}" for i in range(n)] + [f"x_{i + 1}" for i in range(n)]
    has_v = bool(trace.snapshots) and trace.snapshots[0].v is not None
    if has_v:
        cols += [f"v_{i + 1}" for i in range(trace.snapshots[0].v.shape[0])]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for s in trace.snapshots:
            vals = [s.t, *s.u.tolist(), *s.x.tolist()]
            if has_v:
                vals += s.v.tolist()
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")
