import numpy as np
import pytest

from zerosmooth.errors import DimensionError, RangeError, RankError
from zerosmooth.numerics import (
    channel_stats,
    checked,
    gaussian_solve,
    matmul,
    pseudo_inverse,
    softmax_rows,
)

from oracles import svd_pinv, two_pass_stats


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), m), m)

    def test_orthonormal_rows(self):
        a = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
        assert np.array_equal(matmul(a, a.T), np.eye(2))

    def test_hand_arithmetic(self):
        a = np.array([[0.5, 0.5], [0.0, 0.0]])
        b = np.array([[2.0], [4.0]])
        assert np.array_equal(matmul(a, b), np.array([[3.0], [0.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestPseudoInverse:
    def test_sampling_rows_give_transpose(self):
        a = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
        assert np.array_equal(pseudo_inverse(a), a.T)

    def test_left_interp_is_scaled_transpose(self):
        a = np.array([[0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5]])
        pinv = pseudo_inverse(a)
        assert np.allclose(pinv, 2.0 * a.T, atol=1e-14)
        assert np.abs(a @ pinv @ a - a).max() < 1e-10
        assert np.allclose(pinv, svd_pinv(a), atol=1e-12)

    def test_right_interp_hand_solved(self):
        a = np.array([[1.0, 0, 0, 0], [0, 0.5, 0.5, 0]])
        expected = np.array([[1.0, 0], [0, 1.0], [0, 1.0], [0, 0]])
        pinv = pseudo_inverse(a)
        assert np.allclose(pinv, expected, atol=1e-14)
        assert np.allclose(pinv, svd_pinv(a), atol=1e-12)

    def test_penrose_identities_random(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.standard_normal((3, 7))
            pinv = pseudo_inverse(a)
            assert np.abs(a @ pinv @ a - a).max() < 1e-10
            assert np.abs(pinv @ a @ pinv - pinv).max() < 1e-10
            proj = np.eye(7) - pinv @ a
            assert np.abs(proj @ proj - proj).max() < 1e-10
            assert np.allclose(pinv, svd_pinv(a), atol=1e-10)

    def test_rank_deficient_rejected(self):
        with pytest.raises(RankError):
            pseudo_inverse(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]))


class TestGaussianSolve:
    def test_random_system(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 6)) + 6 * np.eye(6)
        b = rng.standard_normal((6, 2))
        x = gaussian_solve(a, b)
        assert np.abs(a @ x - b).max() < 1e-10

    def test_needs_pivoting(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        b = np.array([2.0, 3.0])
        assert np.allclose(gaussian_solve(a, b), [3.0, 2.0])

    def test_singular(self):
        with pytest.raises(RankError):
            gaussian_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


class TestSoftmaxRows:
    def test_symmetry(self):
        assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_no_overflow_on_large_scores(self):
        out = softmax_rows(np.array([[1000.0, 1000.0]]))
        assert np.allclose(out, [[0.5, 0.5]])

    def test_closed_form(self):
        out = softmax_rows(np.array([[0.0, np.log(3.0)]]))
        assert np.allclose(out, [[0.25, 0.75]], atol=1e-14)

    def test_rows_sum_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((10, 6)) * 5
        out = softmax_rows(m)
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-12
        shifted = softmax_rows(m + rng.standard_normal((10, 1)) * 100)
        assert np.allclose(out, shifted, atol=1e-12)
        assert (out >= 0).all()


class TestChannelStats:
    def test_constant_frame(self):
        video = np.full((2, 3, 4, 4), 3.0)
        mean, std = channel_stats(video, 1)
        assert np.allclose(mean, 3.0) and np.allclose(std, 0.0)

    def test_two_pixel_plane(self):
        video = np.array([[[[0.0, 2.0]]]])
        mean, std = channel_stats(video, 0)
        assert mean[0] == 1.0 and std[0] == 1.0

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(4)
        video = rng.uniform(0, 1, (3, 2, 5, 6))
        mean, std = channel_stats(video, 2)
        for c in range(2):
            m, s = two_pass_stats(video[2, c])
            assert abs(mean[c] - m) < 1e-12
            assert abs(std[c] - s) < 1e-12

    def test_frame_out_of_range(self):
        with pytest.raises(IndexError):
            channel_stats(np.zeros((2, 1, 4, 4)), 5)


def test_checked_rejects_nonfinite():
    with pytest.raises(ValueError):
        checked([1.0, np.nan])
    with pytest.raises(ValueError):
        checked([np.inf])
    assert checked([1.0, 2.0]).dtype == np.float64
