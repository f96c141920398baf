import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from snnopt.dual import (
    DualState,
    consistency_gap,
    dual_from_counts,
    dual_objective,
    dual_step,
    violated_walls,
    wall_slacks,
)
from snnopt.problem import ProblemInstance, figure6_instance, rsm_instance
from snnopt.sim import SimConfig, build_network, default_dt, simulate

FIG6 = figure6_instance()


def test_pure_drift():
    d = dual_step(DualState(np.zeros(2)), FIG6, np.zeros(3), 0.01)
    assert np.allclose(d.v, [0.001, 0.004]) and d.t == pytest.approx(0.01)


def test_spike_moves_along_wall_normal():
    for j in range(3):
        s = np.zeros(3)
        s[j] = 1
        d = dual_step(DualState(np.array([0.3, 0.2])), FIG6, s, 0.0, alpha=0.05)
        assert np.allclose(d.v, np.array([0.3, 0.2]) - 0.05 * FIG6.A[:, j])
    d = dual_step(DualState(np.zeros(2)), FIG6, [0, -1, 0], 0.0, alpha=0.05)
    assert np.allclose(d.v, 0.05 * FIG6.A[:, 1])


def test_consistency_gap_examples():
    A = FIG6.A
    v = np.array([0.2, -0.7])
    assert consistency_gap(A.T @ v, v, A) <= 1e-10
    assert consistency_gap(np.array([0.5, 0.5]), np.array([0.501, 0.5]), np.eye(2)) == pytest.approx(1e-3)


def test_coupled_incremental_run_stays_consistent():
    net = build_network(FIG6, "two-sided", 0.01)
    dt = 0.001
    cfg = SimConfig(dt, 100.0)  # 1e5 steps
    tr = simulate(net, cfg)
    per_step = {}
    for t, i, s in tr.events:
        k = int(round(t / dt))
        per_step.setdefault(k, np.zeros(3))[i] += s
    dual = DualState(np.zeros(2))
    zero = np.zeros(3)
    for k in range(1, cfg.n_steps + 1):
        dual = dual_step(dual, FIG6, per_step.get(k, zero), dt, 0.01)
    assert consistency_gap(tr.final_state.u, dual.v, FIG6.A) <= 1e-7


def test_violated_walls_examples():
    inst = ProblemInstance(np.array([[0.5], [1.0]]), [1.0, 0.0])
    assert violated_walls([0.0, 1.2], inst) == {1}
    assert violated_walls([0.0, -1.2], inst) == {-1}
    assert violated_walls([0.0, -1.2], inst, one_sided=True) == set()
    assert violated_walls([0.1, 0.1], inst) == set()


def test_wall_slacks_signed():
    q = {w.wall: w.slack for w in wall_slacks(np.array([0.5, 1.0]), FIG6)}
    assert q[1] == pytest.approx(0.5) and q[-1] == pytest.approx(1.5)
    assert q[3] == pytest.approx(0.0) and q[-3] == pytest.approx(2.0)


def test_dual_objective_examples():
    assert dual_objective([0.5, 1.0], FIG6.b) == pytest.approx(0.45)
    assert dual_objective([0.0, 0.0], FIG6.b) == 0.0


@settings(max_examples=300, deadline=None)
@given(arrays(float, 2, elements=st.floats(-3, 3)))
def test_weak_duality_figure6(v):
    # Scale any point into the dual polytope; its objective never beats OPT.
    w = np.abs(FIG6.A.T @ v).max()
    if w == 0:
        return
    u = v / w
    assert dual_objective(u, FIG6.b) <= 0.45 + 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_run_identities_and_feasibility(seed):
    inst = rsm_instance(3, 6, seed)
    net = build_network(inst, "two-sided", 0.02)
    tr = simulate(net, SimConfig(default_dt(net), 30.0, probe_stride=500))
    for snap in tr.snapshots:
        assert not violated_walls(snap.v, inst)
        assert consistency_gap(snap.u, snap.v, inst.A) <= 1e-9
        ident = snap.t * (inst.b - inst.A @ snap.x)
        assert np.allclose(snap.v, ident, rtol=1e-8, atol=1e-8 * snap.t)
        assert np.allclose(snap.v, dual_from_counts(inst, snap.t, snap.k, 0.02), atol=1e-12)


def test_figure6_time_averaged_dual():
    net = build_network(FIG6, "two-sided", 0.01)
    tr = simulate(net, SimConfig(0.001, 2000.0))
    late = [s.v for s in tr.snapshots if s.t > 1500.0]
    assert np.abs(np.mean(late, axis=0) - [0.5, 1.0]).max() <= 0.1
    for s in tr.snapshots:
        assert dual_objective(s.v, FIG6.b) <= 0.45 + 1e-9
