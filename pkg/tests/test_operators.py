import numpy as np
import pytest

from zerosmooth.errors import ConfigError, DimensionError, UnsupportedVariantError
from zerosmooth.operators import (
    OperatorKind,
    apply_measurement,
    back_project,
    build_interp,
    build_sampling,
    extract_key_frames,
    interp_pair,
)

from oracles import min_singular_value, svd_pinv


class TestBuildSampling:
    def test_two_by_two_pattern(self):
        op = build_sampling(2, 2)
        assert np.array_equal(op.matrix, [[1, 0, 0, 0], [0, 0, 1, 0]])
        assert np.array_equal(op.pinv, op.matrix.T)

    def test_three_key_frames(self):
        op = build_sampling(3, 2)
        expected = np.zeros((3, 6))
        expected[[0, 1, 2], [0, 2, 4]] = 1.0
        assert np.array_equal(op.matrix, expected)
        assert op.key_indices == (0, 2, 4)

    def test_null_projector_is_diagonal(self):
        op = build_sampling(2, 2)
        assert np.array_equal(op.null_proj, np.diag([0.0, 1.0, 0.0, 1.0]))

    def test_rejects_small_scale(self):
        with pytest.raises(ConfigError):
            build_sampling(4, 1)
        with pytest.raises(ConfigError):
            build_sampling(1, 2)


class TestBuildInterp:
    def test_a1_display(self):
        op = build_interp(2, "a1")
        assert np.array_equal(op.matrix, [[0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5]])
        assert op.kind is OperatorKind.INTERP_LEFT

    def test_a2_display(self):
        op = build_interp(2, "a2")
        assert np.array_equal(op.matrix, [[1, 0, 0, 0], [0, 0.5, 0.5, 0]])
        # final frame column stays unobserved
        assert np.array_equal(op.matrix[:, -1], [0.0, 0.0])

    def test_full_row_rank_small_sizes(self):
        for t0 in range(2, 17):
            for variant in ("a1", "a2"):
                op = build_interp(t0, variant)
                assert min_singular_value(op.matrix) > 1e-8
                assert np.allclose(op.pinv, svd_pinv(op.matrix), atol=1e-10)

    def test_unsupported_scale(self):
        with pytest.raises(UnsupportedVariantError):
            build_interp(4, "a1", scale=3)
        with pytest.raises(UnsupportedVariantError):
            build_interp(4, "a3")

    def test_pair_is_memoized(self):
        a, b = interp_pair(6)
        a2, b2 = interp_pair(6)
        assert a is a2 and b is b2


class TestBackProject:
    def test_sampling_substitution(self):
        op = build_sampling(2, 2)
        h = np.arange(4.0).reshape(4, 1, 1) + 10
        hk = np.array([[[100.0]], [[200.0]]])
        out = back_project(h, hk, op)
        assert out[:, 0, 0].tolist() == [100.0, 11.0, 200.0, 13.0]

    def test_consistent_observation_is_fixed_point(self):
        rng = np.random.default_rng(0)
        for variant in ("a1", "a2"):
            op = build_interp(3, variant)
            h = rng.standard_normal((6, 2, 5))
            hk = apply_measurement(op, h)
            assert np.abs(back_project(h, hk, op) - h).max() < 1e-12

    def test_projection_reproduces_observation(self):
        rng = np.random.default_rng(1)
        op = build_interp(4, "a1")
        h = rng.standard_normal((8, 3, 2))
        hk = rng.standard_normal((4, 3, 2))
        out = back_project(h, hk, op)
        assert np.abs(apply_measurement(op, out) - hk).max() < 1e-10

    def test_key_frames_bitwise_and_idempotent(self):
        rng = np.random.default_rng(2)
        op = build_sampling(4, 2)
        for _ in range(100):
            h = rng.standard_normal((8, 2, 3))
            hk = rng.standard_normal((4, 2, 3))
            out = back_project(h, hk, op)
            assert out[list(op.key_indices)].tobytes() == hk.tobytes()
            again = back_project(out, hk, op)
            assert np.abs(again - out).max() < 1e-10

    def test_idempotence_interp(self):
        rng = np.random.default_rng(3)
        for variant in ("a1", "a2"):
            op = build_interp(5, variant)
            h = rng.standard_normal((10, 2))
            hk = rng.standard_normal((5, 2))
            once = back_project(h, hk, op)
            twice = back_project(once, hk, op)
            assert np.abs(twice - once).max() < 1e-10

    def test_shape_mismatch(self):
        op = build_sampling(2, 2)
        with pytest.raises(DimensionError):
            back_project(np.zeros((5, 2)), np.zeros((2, 2)), op)
        with pytest.raises(DimensionError):
            back_project(np.zeros((4, 2)), np.zeros((3, 2)), op)
        with pytest.raises(DimensionError):
            back_project(np.zeros((4, 2)), np.zeros((2, 3)), op)


def test_operator_identities_all_kinds():
    for t0 in (2, 4, 8, 16):
        ops = [build_sampling(t0, 2), build_interp(t0, "a1"), build_interp(t0, "a2")]
        for op in ops:
            a, pinv, proj = op.matrix, op.pinv, op.null_proj
            assert np.abs(a @ pinv @ a - a).max() < 1e-10
            assert np.abs(pinv @ a @ pinv - pinv).max() < 1e-10
            assert np.abs(proj @ proj - proj).max() < 1e-10


def test_extract_key_frames_requires_sampling():
    with pytest.raises(ConfigError):
        extract_key_frames(build_interp(2, "a1"), np.zeros((4, 1)))
    op = build_sampling(2, 3)
    video = np.arange(6.0).reshape(6, 1)
    assert np.array_equal(extract_key_frames(op, video), [[0.0], [3.0]])
