import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnopt.errors import CapExceededError, DimensionError
from snnopt.niceness import (
    gamma_exact,
    gamma_sampled,
    gamma_upper_probe,
    probe_from_matrix,
    rsm_sample,
)
from snnopt.oracles import l1_solve_enum
from snnopt.problem import figure6_instance

FIG6 = figure6_instance()


def brute_gamma(A):
    """Direct double loop over subsets, signs and vertex pairs."""
    m, n = A.shape
    c1, c3, verts = np.inf, np.inf, []
    for S in itertools.combinations(range(n), m):
        AS = A[:, S]
        for j in range(m):
            others = np.delete(AS, j, axis=1)
            if others.shape[1]:
                q, _ = np.linalg.qr(others)
                r = AS[:, j] - q @ (q.T @ AS[:, j])
            else:
                r = AS[:, j]
            c1 = min(c1, np.linalg.norm(r))
        for s in itertools.product((1.0, -1.0), repeat=m):
            v = np.linalg.solve(AS.T, np.array(s))
            verts.append(v)
            c3 = min(c3, np.abs(v).min())
    c2 = np.inf
    for a, b in itertools.combinations(verts, 2):
        d = np.linalg.norm(a - b)
        if d > 1e-9:
            c2 = min(c2, d)
    return c1, c2, c3


def test_identity():
    g = gamma_exact(np.eye(2))
    assert (g.gamma_nondegen, g.gamma_vertex_gap, g.gamma_min_coord, g.gamma) == (1.0, 2.0, 1.0, 1.0)
    assert g.exact and g.samples_used == 4


def test_figure6_by_hand():
    # Column 3 is 2/3 (1, 1): its distance to either axis is 2/3. The vertices
    # over {1, 3} are (s1, 1.5 s2 - s1), so (1, 0.5) sits 0.5 from (1, 1).
    g = gamma_exact(FIG6.A)
    assert g.gamma_nondegen == pytest.approx(2 / 3)
    assert g.gamma_vertex_gap == pytest.approx(0.5)
    assert g.gamma_min_coord == pytest.approx(0.5)
    assert g.gamma == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force(seed):
    A = rsm_sample(3, 5, seed)
    g = gamma_exact(A)
    assert np.allclose((g.gamma_nondegen, g.gamma_vertex_gap, g.gamma_min_coord), brute_gamma(A), rtol=1e-9)


def test_duplicated_and_antipodal_columns():
    A = rsm_sample(2, 3, 0)
    for dup in (A[:, 0], -A[:, 0]):
        B = np.column_stack([A, dup])
        g = gamma_exact(B)
        assert g.gamma_nondegen == pytest.approx(0.0, abs=1e-12) and g.gamma == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_rsm_samples_are_nice(seed):
    g = gamma_exact(rsm_sample(3, 5, seed))
    assert g.gamma > 0
    assert g.gamma <= min(g.gamma_nondegen, g.gamma_vertex_gap, g.gamma_min_coord)


@pytest.mark.parametrize("seed", range(5))
def test_nice_implies_unique_l1(seed):
    A = rsm_sample(3, 6, seed)
    b = np.random.default_rng(seed).standard_normal(3)
    assert gamma_exact(A).gamma > 0
    assert l1_solve_enum(A, b).unique


@pytest.mark.parametrize("seed", range(4))
def test_exhaustive_sampling_equals_exact(seed):
    A = rsm_sample(3, 5, seed)
    e, s = gamma_exact(A), gamma_sampled(A, 10**6, seed)
    assert (s.gamma_nondegen, s.gamma_vertex_gap, s.gamma_min_coord) == (
        e.gamma_nondegen, e.gamma_vertex_gap, e.gamma_min_coord)
    assert not s.exact and s.samples_used == 80


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 79))
def test_sampling_bounds_exact_from_above(seed, trials):
    A = rsm_sample(3, 5, seed)
    assert gamma_sampled(A, trials, seed).gamma >= gamma_exact(A).gamma - 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(5)))
def test_permutation_invariance(seed, perm):
    A = rsm_sample(3, 5, seed)
    a, b = gamma_exact(A), gamma_exact(A[:, list(perm)])
    for name in ("gamma_nondegen", "gamma_vertex_gap", "gamma_min_coord"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-9)


def test_caps_and_shapes():
    with pytest.raises(CapExceededError):
        gamma_exact(rsm_sample(6, 40, 0))
    with pytest.raises(DimensionError):
        gamma_exact(np.ones((3, 2)))
    with pytest.raises(ValueError):
        gamma_sampled(np.eye(2), 0, 0)
    g = gamma_sampled(rsm_sample(6, 40, 0), 2000, 1)
    assert g.samples_used == 2000 and g.gamma >= 0


def test_rsm_columns_unit_and_seeded():
    A = rsm_sample(4, 9, 3)
    assert np.allclose(np.linalg.norm(A, axis=0), 1.0)
    assert np.array_equal(A, rsm_sample(4, 9, 3))


@pytest.mark.parametrize("m", [3, 5])
def test_pairwise_inner_product_density(m):
    # Inner products of independent uniform unit vectors have density
    # proportional to (1 - c^2)^((m - 3) / 2) on [-1, 1].
    from scipy.integrate import quad

    f = lambda c: (1 - c * c) ** ((m - 3) / 2)
    expected = quad(lambda c: abs(c) * f(c), -1, 1)[0] / quad(f, -1, 1)[0]
    if m == 3:
        assert expected == pytest.approx(0.5, abs=1e-12)
    vals = []
    for seed in range(400):
        A = rsm_sample(m, 6, seed)
        G = np.abs(A.T @ A)[np.triu_indices(6, 1)]
        vals.append(G)
    vals = np.concatenate(vals)
    assert vals.mean() == pytest.approx(expected, abs=4 * vals.std() / np.sqrt(vals.size / 5))


@pytest.mark.parametrize("seed", range(20))
def test_probe_decays(seed):
    curve = gamma_upper_probe(6, 60, 1.0, seed)
    assert curve.bucket_size == 9 and curve.residuals.size == 7
    assert curve.residuals[0] == pytest.approx(1.0)
    assert curve.strictly_decreasing()
    assert curve.slope < 0
    assert curve.gamma_upper == curve.residuals[5]


def test_probe_orthonormal_exhausts():
    # With I_3 and copies of e_1..e_3 in the buckets the residual drops to 0.
    A = np.column_stack([np.eye(3)[:, 0], np.eye(3)[:, [0, 1]], np.eye(3)[:, [1, 2]], np.eye(3)[:, [2, 0]]])
    curve = probe_from_matrix(A, 0.5)
    assert curve.residuals[1] == pytest.approx(0.0, abs=1e-12)
    assert curve.correlations[0] == pytest.approx(1.0)


def test_probe_argument_checks():
    with pytest.raises(ValueError):
        gamma_upper_probe(6, 10, 1.0, 0)
    with pytest.raises(ValueError):
        gamma_upper_probe(6, 60, 2.0, 0)
