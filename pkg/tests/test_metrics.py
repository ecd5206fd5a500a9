import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from nltiso.baselines import LinearNodeState
from nltiso.estimator import NodeState
from nltiso.metrics import (AdjacencyEstimate, adjacency_from_state, ise, normalize_adjacency,
                            stack_lags, support_metrics, time_averaged_ise, unstack_lags)
from nltiso.synthgen import TrueGraph


def test_ise_values(rng):
    assert ise(3.0, 3.0) == 0.0
    assert ise(1.0, 3.0) == 4.0
    for a, b in rng.normal(size=(100, 2)):
        assert ise(a, b) == ise(b, a) >= 0


def _states(coeffs):
    return [NodeState(n, c) for n, c in enumerate(coeffs)]


def test_adjacency_of_zero_states():
    b = adjacency_from_state(_states(np.zeros((3, 2, 3, 4))))
    assert b.values.shape == (3, 3, 2) and not np.any(b.values)


def test_adjacency_single_group():
    coeffs = np.zeros((2, 1, 2, 2))
    coeffs[1, 0, 0] = [3.0, 4.0]
    b = adjacency_from_state(_states(coeffs))
    expected = np.zeros((2, 2, 1))
    expected[1, 0, 0] = 5.0
    assert np.array_equal(b.values, expected)


def test_adjacency_matches_brute_force(rng):
    n, p, w = 4, 3, 7
    coeffs = rng.normal(size=(n, p, n, w))
    b = adjacency_from_state(_states(coeffs))
    for target, src, lag in itertools.product(range(n), range(n), range(p)):
        flat = coeffs[target].reshape(-1)
        start = (lag * n + src) * w
        ref = np.sqrt(sum(v * v for v in flat[start:start + w]))
        assert b.values[target, src, lag] == pytest.approx(ref, rel=1e-14)


def test_adjacency_permutation_equivariant(rng):
    n, p, w = 4, 2, 5
    coeffs = rng.normal(size=(n, p, n, w))
    perm = rng.permutation(n)
    permuted = coeffs[perm][:, :, perm]
    b = adjacency_from_state(_states(coeffs)).values
    bp = adjacency_from_state(_states(permuted)).values
    assert np.allclose(bp, b[perm][:, perm], rtol=1e-14)


def test_adjacency_from_linear_states():
    states = [LinearNodeState(0, np.array([[1.0, -2.0]])), LinearNodeState(1, np.array([[0.0, 3.0]]))]
    b = adjacency_from_state(states)
    assert b.values[:, :, 0].tolist() == [[1.0, 2.0], [0.0, 3.0]]


def test_normalize():
    v = np.zeros((2, 2, 1))
    v[0, 1, 0] = 4.0
    v[1, 0, 0] = 1.0
    out = normalize_adjacency(AdjacencyEstimate(v)).values
    assert out[0, 1, 0] == 1.0 and out[1, 0, 0] == 0.25
    zero = AdjacencyEstimate(np.zeros((2, 2, 1)))
    assert normalize_adjacency(zero) is zero


@given(hnp.arrays(np.float64, (3, 3, 2), elements=st.floats(0, 1e6)))
def test_normalize_preserves_order(v):
    out = normalize_adjacency(AdjacencyEstimate(v)).values
    assert np.all(out >= 0) and np.all(out <= 1)
    flat_in, flat_out = v.ravel(), out.ravel()
    if flat_in.max() > 0:
        assert flat_out[np.argmax(flat_in)] == 1.0
        i, j = np.triu_indices(flat_in.size, 1)
        assert np.all(flat_out[i][flat_in[i] > flat_in[j]] >= flat_out[j][flat_in[i] > flat_in[j]])


def test_adjacency_estimate_validation():
    with pytest.raises(ValueError):
        AdjacencyEstimate(-np.ones((2, 2, 1)))
    with pytest.raises(ValueError):
        AdjacencyEstimate(np.ones((2, 3, 1)))


def test_stack_layout():
    v = np.arange(5 * 5 * 2, dtype=float).reshape(5, 5, 2)
    m = stack_lags(v)
    assert m.shape == (10, 5)
    assert m[5 + 2, 3] == v[2, 3, 1]
    assert np.array_equal(unstack_lags(m), v)


def test_support_perfect_recovery(rng):
    mask = rng.random((5, 5, 2)) < 0.3
    a = np.where(mask, rng.uniform(1, 2, (5, 5, 2)), 0.0)
    truth = TrueGraph(a, mask, 0)
    m = support_metrics(AdjacencyEstimate(np.abs(a) * 3.5), truth)
    assert m.precision == 1.0 and m.recall == 1.0
    assert m.k == truth.cross_edge_count()


def test_support_constant_estimate_ratio_one(rng):
    mask = rng.random((4, 4, 2)) < 0.4
    mask[0, 1, 0] = True
    mask[0, 2, 0] = False
    assert support_metrics(np.full((4, 4, 2), 0.7), mask).edge_ratio == pytest.approx(1.0, rel=1e-15)


def test_support_ignores_self_entries():
    mask = np.zeros((2, 2, 1), dtype=bool)
    mask[0, 1, 0] = True
    b = np.zeros((2, 2, 1))
    b[0, 0, 0] = b[1, 1, 0] = 100.0
    b[0, 1, 0] = 1.0
    m = support_metrics(b, mask)
    assert m.precision == 1.0 and m.recall == 1.0


def test_support_brute_force(rng):
    for _ in range(50):
        n, p = 4, 2
        mask = rng.random((n, n, p)) < 0.3
        b = rng.random((n, n, p))
        k = int(rng.integers(1, n * (n - 1) * p + 1))
        m = support_metrics(b, mask, k)
        cross = [(i, j, l) for i in range(n) for j in range(n) for l in range(p) if i != j]
        ranked = sorted(cross, key=lambda e: -b[e])[:k]
        true_set = {e for e in cross if mask[e]}
        hits = len(set(ranked) & true_set)
        assert m.precision == hits / k
        assert m.recall == (hits / len(true_set) if true_set else m.recall)
        on = [b[e] for e in cross if mask[e]]
        off = [b[e] for e in cross if not mask[e]]
        if on and off:
            assert m.edge_ratio == pytest.approx(np.mean(on) / np.mean(off), rel=1e-12)


def test_support_k_out_of_range():
    with pytest.raises(IndexError):
        support_metrics(np.ones((3, 3, 1)), np.ones((3, 3, 1), dtype=bool), 7)
    with pytest.raises(ValueError):
        support_metrics(np.ones((3, 3, 1)), np.ones((3, 3, 2), dtype=bool))


def test_time_averaged_ise(rng):
    assert np.all(time_averaged_ise(np.full((2, 10), 0.3), 4) == pytest.approx(0.3))
    with pytest.raises(IndexError):
        time_averaged_ise(np.ones((2, 10)), 10)
    trace = rng.random((3, 50))
    trace[:, :2] = np.nan
    out = time_averaged_ise(trace, 7)
    for n in range(3):
        assert out[n] == pytest.approx(sum(trace[n, 7:]) / 43, rel=1e-13)
    assert time_averaged_ise(trace, 0)[0] == pytest.approx(np.mean(trace[0, 2:]))
