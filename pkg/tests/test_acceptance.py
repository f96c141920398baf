"""End-to-end acceptance runs, one test per criterion.

Each test records a one-line verdict that is printed in the terminal
summary, then asserts every part of its criterion at the stated tolerance.
"""

import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from snnopt.cli import main
from snnopt.coupling import CouplingConfig, default_tau, perturbation_series
from snnopt.dual import consistency_gap
from snnopt.niceness import gamma_exact, gamma_sampled, gamma_upper_probe, rsm_sample
from snnopt.numerics import least_squares_solve, spectral_summary
from snnopt.oracles import (
    epsilon_report,
    kkt_check,
    l1_solve_enum,
    least_squares_via_nnls,
    nnls_solve,
)
from snnopt.problem import figure6_instance, rsm_instance
from snnopt.sim import SimConfig, build_network, default_dt, example1_network, firing_rate, simulate

pytestmark = pytest.mark.slow


def record(key, parts):
    """Store ``{name: (ok, text)}`` as one line and return the failed names."""
    ok = all(p[0] for p in parts.values())
    ACCEPTANCE[key] = (ok, "; ".join(f"{name} {'ok' if p[0] else 'FAIL'} ({p[1]})" for name, p in parts.items()))
    return [name for name, p in parts.items() if not p[0]]


def test_criterion_1_example1():
    t0 = time.perf_counter()
    tr = simulate(example1_network(), SimConfig(0.01, 500.0))
    elapsed = time.perf_counter() - t0
    rate = firing_rate(tr)
    isi1 = np.diff(tr.event_times[tr.event_neurons == 0])
    isi2 = np.diff(tr.event_times[tr.event_neurons == 1])
    target = np.array([0.1, 0.01])
    rel = np.abs(rate - target) / target
    parts = {
        "rate_1": (rel[0] <= 0.05, f"{rate[0]:.4g}"),
        "rate_2": (rel[1] <= 0.05, f"{rate[1]:.4g} vs 0.01, {int((tr.event_neurons == 1).sum())} spikes"),
        "isi_1": (isi1.size > 0 and np.all(np.abs(isi1 - 10.0) <= 0.01 + 1e-9), f"{isi1.min():.4g}..{isi1.max():.4g}"),
        "isi_2": (isi2.size > 0 and np.all(np.abs(isi2 - 100.0) <= 0.02 + 1e-9), f"{isi2.min():.4g}..{isi2.max():.4g}"),
        "runtime": (elapsed < 1.0, f"{elapsed:.2f}s"),
    }
    failed = record(1, parts)
    assert not failed, ACCEPTANCE[1][1]


def test_criterion_2_figure6():
    inst = figure6_instance()
    net = build_network(inst, "two-sided", 0.01)
    t0 = time.perf_counter()
    tr = simulate(net, SimConfig(0.001, 2000.0))
    elapsed = time.perf_counter() - t0
    x = firing_rate(tr)
    err = np.abs(x - [0.0, 0.3, 0.15]).max()
    late = np.array([s.v for s in tr.snapshots if s.t >= 1500.0])
    dual_err = np.abs(late.mean(axis=0) - [0.5, 1.0]).max()
    opt = l1_solve_enum(inst.A, inst.b).objective
    parts = {
        "x": (err <= 0.02, f"err {err:.3g}"),
        "dual_avg": (dual_err <= 0.1, f"err {dual_err:.3g}"),
        "oracle": (abs(opt - 0.45) <= 1e-9, f"{opt!r}"),
        "runtime": (elapsed < 10.0, f"{elapsed:.2f}s"),
    }
    failed = record(2, parts)
    assert not failed, ACCEPTANCE[2][1]


def test_criterion_3_identity():
    worst_u = worst_v = 0.0
    for seed in range(20):
        inst = rsm_instance(3, 6, seed)
        net = build_network(inst, "two-sided", 0.01)
        tr = simulate(net, SimConfig(default_dt(net), 50.0, probe_stride=200))
        for s in tr.snapshots:
            worst_u = max(worst_u, consistency_gap(s.u, s.v, inst.A))
            worst_v = max(worst_v, float(np.abs(s.v - s.t * (inst.b - inst.A @ s.x)).max()))
    parts = {
        "u_vs_Atv": (worst_u <= 1e-7, f"{worst_u:.2e}"),
        "v_vs_residual": (worst_v <= 1e-7, f"{worst_v:.2e}"),
    }
    failed = record(3, parts)
    assert not failed, ACCEPTANCE[3][1]


def _verify(tmp_path, name, extra):
    out = tmp_path / name
    rc = main(["verify", *extra, "--out", str(out)])
    rep = json.loads((out / "lemma_report.json").read_text())
    return rc, rep


def _bad_checks(rep):
    bad = [f"{k}={c['worst_violation']:.2g}" for k, c in rep["checks"].items() if not c["pass"]]
    if rep["decomposition_failures"]:
        bad.append(f"decomp={rep['decomposition_failures']}")
    return bad


def test_criterion_4_lemma_suite(tmp_path):
    # The figure6 instance with tau and alpha from the niceness-based defaults.
    rc, rep = _verify(tmp_path, "fig6", ["--builtin", "figure6", "--horizon", "8"])
    parts = {"figure6": (rc == 0 and rep["pass"], f"alpha {rep['params']['alpha']:.3g}, " +
                         (",".join(_bad_checks(rep)) or "all six"))}
    rsm_bad = {}
    for seed in range(10):
        rc, rep = _verify(tmp_path, f"rsm{seed}", ["--rsm", "3", "6", "--seed", str(seed),
                                                   "--tau", "0.1", "--alpha", "0.001", "--horizon", "20"])
        if rc != 0:
            rsm_bad[seed] = ",".join(_bad_checks(rep))
    parts["rsm"] = (not rsm_bad, f"{10 - len(rsm_bad)}/10 pass" +
                    "".join(f", seed {s}: {b}" for s, b in rsm_bad.items()))
    rc, rep = _verify(tmp_path, "neg", ["--builtin", "figure6", "--tau", "0.1", "--alpha", "0.5", "--horizon", "20"])
    a = rep["checks"]["a"]
    parts["negative_control"] = (rc == 4 and not a["pass"], f"(a) worst {a['worst_violation']:.3g}")
    failed = record(4, parts)
    assert not failed, ACCEPTANCE[4][1]


def test_criterion_5_nnls():
    alpha, horizon = 0.02, 400.0
    fitted, c_bad, slow, bound_bad = [], [], [], []
    for seed in range(20):
        inst = rsm_instance(3, 5, seed)
        net = build_network(inst, "one-sided", alpha)
        tr = simulate(net, SimConfig(default_dt(net), horizon))
        sol = nnls_solve(inst.A, inst.b)
        bplus = inst.A @ sol.x_opt
        ts = np.array([s.t for s in tr.snapshots])
        eps = np.array([epsilon_report(inst, s.x, "nnls", sol).eps_l2 for s in tr.snapshots])
        # Smallest C with eps <= C / t over the run, against the constant the
        # dual-norm bound implies: ||A(x - x*)|| t = ||v - t (b - A x*)||.
        sp = spectral_summary(inst.A)
        bound = np.sqrt(sp.lambda_max * inst.n) / sp.lambda_min
        C = float((ts * eps).max())
        C_th = bound / np.linalg.norm(inst.b)
        fitted.append(C)
        if C > C_th:
            c_bad.append(f"seed {seed} {C:.3g}>{C_th:.3g}")
        if not (eps <= 0.05).any():
            slow.append(seed)
        vplus = max(np.linalg.norm(s.v - s.t * (inst.b - bplus)) for s in tr.snapshots)
        if vplus > bound:
            bound_bad.append(f"seed {seed} {vplus:.3g}>{bound:.3g}")
    parts = {
        "C_over_t": (not c_bad, f"fitted C max {max(fitted):.3g}" +
                     "".join(f", {b}" for b in c_bad)),
        "reach_0.05": (not slow, f"{20 - len(slow)}/20" + (f", slow {slow}" if slow else "")),
        "dual_norm_bound": (not bound_bad, f"{20 - len(bound_bad)}/20" + "".join(f", {b}" for b in bound_bad)),
    }
    failed = record(5, parts)
    assert not failed, ACCEPTANCE[5][1]


def test_criterion_6_l1():
    alpha, horizon = 0.01, 200.0
    worst_e1 = worst_e2 = 0.0
    min_slack, probes, bound_bad = np.inf, 0, []
    for seed in range(10):
        inst = rsm_instance(3, 6, seed)
        net = build_network(inst, "two-sided", alpha)
        tr = simulate(net, SimConfig(default_dt(net), horizon))
        sol = l1_solve_enum(inst.A, inst.b)
        rep = epsilon_report(inst, tr.snapshots[-1].x, "l1", sol)
        worst_e1, worst_e2 = max(worst_e1, abs(rep.eps_l1)), max(worst_e2, rep.eps_l2)
        series = perturbation_series(tr, inst, CouplingConfig(default_tau(inst.A)), sol.objective)
        probes += len(series)
        if len(series) != len(tr.snapshots) or not all(r.holds for _, r in series):
            bound_bad.append(seed)
        min_slack = min([min_slack] + [r.slack for _, r in series])
    parts = {
        "eps_l1": (worst_e1 <= 0.1, f"max |eps_l1| {worst_e1:.3g}"),
        "eps_l2": (worst_e2 <= 0.05, f"max {worst_e2:.3g}"),
        "perturbation_bound": (not bound_bad, f"{probes} probes, min slack {min_slack:.3g}" +
                               (f", failing seeds {bound_bad}" if bound_bad else "")),
    }
    failed = record(6, parts)
    assert not failed, ACCEPTANCE[6][1]


def test_criterion_7_niceness():
    g = gamma_exact(np.eye(2))
    ident = (g.gamma_nondegen, g.gamma_vertex_gap, g.gamma_min_coord, g.gamma) == (1.0, 2.0, 1.0, 1.0)
    A = rsm_sample(2, 3, 0)
    dup = gamma_exact(np.column_stack([A, A[:, 0]])).gamma
    gammas = [gamma_exact(rsm_sample(3, 5, seed)).gamma for seed in range(20)]
    same = True
    for seed in range(20):
        A = rsm_sample(3, 5, seed)
        e, s = gamma_exact(A), gamma_sampled(A, 80, seed)
        same &= (e.gamma_nondegen, e.gamma_vertex_gap, e.gamma_min_coord) == (
            s.gamma_nondegen, s.gamma_vertex_gap, s.gamma_min_coord)
    parts = {
        "identity": (ident, f"{g.gamma_nondegen}, {g.gamma_vertex_gap}, {g.gamma_min_coord}"),
        "duplicate": (abs(dup) <= 1e-12, f"{dup:.2g}"),
        "rsm_positive": (min(gammas) > 0, f"min {min(gammas):.3g}"),
        "sampled_equals_exact": (same, "20 matrices"),
    }
    failed = record(7, parts)
    assert not failed, ACCEPTANCE[7][1]


def test_criterion_8_oracles():
    rng = np.random.default_rng(2024)
    kkt_worst = cert_worst = ls_worst = 0.0
    certs = 0
    for _ in range(50):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(m, 8))
        A, b = rng.standard_normal((m, n)), rng.standard_normal(m)
        x = nnls_solve(A, b).x_opt
        kkt_worst = max(kkt_worst, max(kkt_check("nnls", A, b, x, tol=1e-8).violations.values()))
        sol = l1_solve_enum(A, b)
        if sol.dual_certificate is not None:
            certs += 1
            cert_worst = max(cert_worst, abs(sol.objective - b @ sol.dual_certificate))
        ls_worst = max(ls_worst, float(np.abs(A @ least_squares_via_nnls(A, b) - A @ least_squares_solve(A, b)).max()))
    parts = {
        "nnls_kkt": (kkt_worst <= 1e-8, f"{kkt_worst:.2e}"),
        "l1_certificate": (cert_worst <= 1e-8, f"{certs} certificates, {cert_worst:.2e}"),
        "doubling": (ls_worst <= 1e-7, f"{ls_worst:.2e}"),
    }
    failed = record(8, parts)
    assert not failed, ACCEPTANCE[8][1]


def test_criterion_9_probe():
    bad = []
    slopes = []
    for seed in range(20):
        c = gamma_upper_probe(6, 60, 1.0, seed)
        slopes.append(c.slope)
        if not (c.strictly_decreasing() and c.slope < 0):
            bad.append(seed)
    parts = {"decay": (not bad, f"slopes {min(slopes):.3g}..{max(slopes):.3g}" + (f", bad {bad}" if bad else ""))}
    failed = record(9, parts)
    assert not failed, ACCEPTANCE[9][1]
