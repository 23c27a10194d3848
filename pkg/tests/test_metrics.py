"""Trajectory metrics: RMSE, DTW distance, partial curve matching."""

import itertools

import numpy as np
import pytest

from kooplift.metrics import dtwd, normalize_scores, pcm, rmse


def brute_force_dtw(cost):
    """Minimum cumulative cost over all monotone alignment paths, by
    explicit path enumeration (no DP)."""
    n, m = cost.shape
    best = [np.inf]

    def walk(i, j, acc):
        acc += cost[i, j]
        if acc >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = acc
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


def segment(p0, p1, n):
    return np.linspace(p0, p1, n)


def test_rmse_identical():
    P = np.random.default_rng(0).standard_normal((10, 2))
    assert rmse(P, P) == 0.0


def test_rmse_constant_offset():
    P = np.random.default_rng(1).standard_normal((10, 2))
    Q = P.copy()
    Q[:, 0] += 0.75
    assert rmse(P, Q) == pytest.approx(0.75)


def test_rmse_matches_direct_sum():
    rng = np.random.default_rng(2)
    P, Q = rng.standard_normal((15, 3)), rng.standard_normal((15, 3))
    direct = np.sqrt(sum(np.sum((p - q) ** 2) for p, q in zip(P, Q)) / 15)
    assert rmse(P, Q) == pytest.approx(direct, rel=1e-12)


def test_rmse_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        rmse(np.zeros((3, 2)), np.zeros((4, 2)))


def test_dtwd_identical():
    P = np.random.default_rng(3).standard_normal((8, 2))
    assert dtwd(P, P) == 0.0


def test_dtwd_hand_example():
    # 2x2 grid: D(1,1)=|0-0|=0, best path adds min step to |1-2|=1
    assert dtwd(np.array([[0.0], [1.0]]), np.array([[0.0], [2.0]])) == 1.0


def test_dtwd_symmetry():
    rng = np.random.default_rng(4)
    P, Q = rng.standard_normal((6, 2)), rng.standard_normal((9, 2))
    assert dtwd(P, Q) == pytest.approx(dtwd(Q, P), rel=1e-12)


def test_dtwd_matches_exhaustive_alignment():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n, m = rng.integers(2, 7, size=2)
        P = rng.standard_normal((n, 2))
        Q = rng.standard_normal((m, 2))
        cost = np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=2))
        assert dtwd(P, Q) == pytest.approx(brute_force_dtw(cost), rel=1e-12)


def test_dtwd_repeated_point_bounded():
    rng = np.random.default_rng(6)
    P = rng.standard_normal((5, 2))
    Q = rng.standard_normal((5, 2))
    base = dtwd(P, Q)
    for k in range(5):
        P2 = np.insert(P, k, P[k], axis=0)
        # the duplicate re-pays the cost of whichever Q point the optimal
        # path aligns it with, so the increase is bounded by the worst pair
        extra = float(np.max(np.linalg.norm(Q - P[k], axis=1)))
        got = dtwd(P2, Q)
        assert base - 1e-12 <= got <= base + extra + 1e-12


def test_pcm_identical():
    P = segment([0.0, 0.0], [1.0, 2.0], 20)
    assert pcm(P, P) == pytest.approx(0.0, abs=1e-12)


def test_pcm_parallel_segments():
    L, h = 2.0, 0.3
    P = segment([0.0, 0.0], [L, 0.0], 10)
    Q = segment([0.0, h], [L, h], 7)
    assert pcm(P, Q) == pytest.approx(h * L, rel=1e-6)


def test_pcm_partial_overlap_slides():
    # a short segment lying exactly on a longer collinear one matches with
    # zero area at the right offset
    long_ = segment([0.0, 0.0], [4.0, 0.0], 40)
    short = segment([1.5, 0.0], [2.5, 0.0], 12)
    assert pcm(short, long_) < 1e-6


def test_pcm_matches_fine_grid():
    rng = np.random.default_rng(7)
    for _ in range(5):
        t = np.linspace(0, 1, 25)
        P = np.column_stack([t + 0.1 * np.sin(3 * t + rng.uniform(0, 2)),
                             0.2 * np.cos(5 * t + rng.uniform(0, 2))])
        s = np.linspace(0, 1, 60)
        Q = np.column_stack([2.5 * s, 0.3 * np.sin(4 * s + rng.uniform(0, 2))])
        coarse = pcm(P, Q, n_offsets=200)
        fine = pcm(P, Q, n_offsets=2000)
        assert coarse >= fine - 1e-12
        assert coarse <= fine * 1.05 + 1e-9


def test_pcm_symmetry_and_translation():
    rng = np.random.default_rng(8)
    P = rng.standard_normal((12, 2)).cumsum(axis=0)
    Q = rng.standard_normal((20, 2)).cumsum(axis=0)
    assert pcm(P, Q) == pytest.approx(pcm(Q, P), rel=1e-12)
    shift = np.array([3.0, -1.0])
    assert pcm(P + shift, Q + shift) == pytest.approx(pcm(P, Q), rel=1e-9)


def test_metrics_translation_invariance():
    rng = np.random.default_rng(9)
    P = rng.standard_normal((10, 2))
    Q = rng.standard_normal((10, 2))
    shift = np.array([5.0, -2.0])
    assert rmse(P + shift, Q + shift) == pytest.approx(rmse(P, Q), rel=1e-12)
    assert dtwd(P + shift, Q + shift) == pytest.approx(dtwd(P, Q), rel=1e-9)


def test_pcm_degenerate_curve_rejected():
    with pytest.raises(ValueError):
        pcm(np.zeros((5, 2)), segment([0.0, 0.0], [1.0, 0.0], 5))


def test_normalize_two_values():
    assert np.allclose(normalize_scores([2.0, 4.0]), [0.0, 1.0])


def test_normalize_degenerate():
    assert np.allclose(normalize_scores([3.0, 3.0, 3.0]), 0.0)


def test_normalize_affine_invariance():
    rng = np.random.default_rng(10)
    v = rng.standard_normal(9)
    assert np.allclose(normalize_scores(v), normalize_scores(2.5 * v + 7.0), atol=1e-12)


def test_nonnegative_metrics():
    rng = np.random.default_rng(11)
    for _ in range(10):
        P = rng.standard_normal((8, 2))
        Q = rng.standard_normal((8, 2))
        assert rmse(P, Q) >= 0.0
        assert dtwd(P, Q) >= 0.0
        assert pcm(P, Q) >= 0.0
