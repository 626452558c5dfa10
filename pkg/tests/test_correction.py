import math

import numpy as np
import pytest

from zerosmooth.correction import (
    ROLE_SPATIAL,
    ROLE_TEMPORAL,
    BranchSelector,
    CorrectionSchedule,
    HiddenCache,
    StageHooks,
    blend_output,
    correct_spatial_kv,
    correct_spatial_q,
    correct_temporal,
    fetch_hidden,
    record_hidden,
)
from zerosmooth.errors import CacheMissError, ConfigError
from zerosmooth.operators import apply_measurement, build_interp, build_sampling


class TestCorrectTemporal:
    def test_consistent_observation_is_identity(self):
        rng = np.random.default_rng(0)
        op = build_sampling(3, 2)
        h = rng.standard_normal((6, 4, 5))
        hk = h[[0, 2, 4]]
        assert np.array_equal(correct_temporal(h, hk, op), h)

    def test_interleave_pattern(self):
        op = build_sampling(2, 2)
        h = np.stack([np.full((1, 1), v) for v in (0.0, 1.0, 2.0, 3.0)])
        hk = np.stack([np.full((1, 1), v) for v in (10.0, 20.0)])
        out = correct_temporal(h, hk, op)
        assert out[:, 0, 0].tolist() == [10.0, 1.0, 20.0, 3.0]

    def test_observation_restored_100_trials(self):
        rng = np.random.default_rng(1)
        op = build_sampling(4, 2)
        for _ in range(100):
            h = rng.standard_normal((8, 3, 2))
            hk = rng.standard_normal((4, 3, 2))
            out = correct_temporal(h, hk, op)
            assert np.abs(apply_measurement(op, out) - hk).max() < 1e-10
            assert out[list(op.key_indices)].tobytes() == hk.tobytes()

    def test_requires_sampling_operator(self):
        with pytest.raises(ConfigError):
            correct_temporal(np.zeros((4, 1, 1)), np.zeros((2, 1, 1)),
                             build_interp(2, "a1"))


class TestCorrectSpatialQ:
    def test_already_consistent_rows_unchanged(self):
        rng = np.random.default_rng(2)
        op = build_sampling(2, 2)
        hk = rng.standard_normal((2, 3, 4))
        q = rng.standard_normal((4, 3, 4))
        q[[0, 2]] = hk  # key rows already equal Wq @ hk with Wq = I
        assert np.array_equal(correct_spatial_q(q, hk, np.eye(4), op), q)

    def test_zero_projection_zeroes_key_rows(self):
        rng = np.random.default_rng(3)
        op = build_sampling(2, 2)
        q = rng.standard_normal((4, 2, 3))
        out = correct_spatial_q(q, rng.standard_normal((2, 2, 3)),
                                np.zeros((3, 3)), op)
        assert np.abs(out[[0, 2]]).max() == 0.0
        assert np.array_equal(out[[1, 3]], q[[1, 3]])

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(4)
        op = build_sampling(3, 2)
        q = rng.standard_normal((6, 2, 5))
        hk = rng.standard_normal((3, 2, 5))
        wq = rng.standard_normal((5, 5))
        out = correct_spatial_q(q, hk, wq, op)
        ref = (np.tensordot(op.null_proj, q, axes=([1], [0]))
               + np.tensordot(op.pinv, hk @ wq.T, axes=([1], [0])))
        assert np.abs(out - ref).max() < 1e-12


class TestCorrectSpatialKV:
    def test_branch_selection_by_threshold(self):
        rng = np.random.default_rng(5)
        a1, a2 = build_interp(3, "a1"), build_interp(3, "a2")
        x = rng.standard_normal((6, 2, 4))
        hk = rng.standard_normal((3, 2, 4))
        w = rng.standard_normal((4, 4))
        hi = correct_spatial_kv(x, hk, w, 1.0, a1, a2)
        lo = correct_spatial_kv(x, hk, w, 0.0, a1, a2)
        target = hk @ w.T
        ref1 = (np.tensordot(a1.null_proj, x, axes=([1], [0]))
                + np.tensordot(a1.pinv, target, axes=([1], [0])))
        ref2 = (np.tensordot(a2.null_proj, x, axes=([1], [0]))
                + np.tensordot(a2.pinv, target, axes=([1], [0])))
        assert np.abs(hi - ref1).max() < 1e-12
        assert np.abs(lo - ref2).max() < 1e-12
        # boundary: p = 0.5 is NOT > 0.5, so the corner-pinned branch is used
        mid = correct_spatial_kv(x, hk, w, 0.5, a1, a2)
        assert np.abs(mid - ref2).max() < 1e-12

    def test_consistent_observation_fixed_point(self):
        rng = np.random.default_rng(6)
        for p in (1.0, 0.0):
            op = build_interp(4, "a1") if p > 0.5 else build_interp(4, "a2")
            x = rng.standard_normal((8, 2, 3))
            hk = apply_measurement(op, x)
            out = correct_spatial_kv(x, hk, np.eye(3), p)
            assert np.abs(out - x).max() < 1e-12

    def test_observation_restored_on_selected_branch(self):
        rng = np.random.default_rng(7)
        a1, a2 = build_interp(4, "a1"), build_interp(4, "a2")
        w = rng.standard_normal((3, 3))
        for _ in range(50):
            x = rng.standard_normal((8, 2, 3))
            hk = rng.standard_normal((4, 2, 3))
            out = correct_spatial_kv(x, hk, w, 2.0, a1, a2)
            assert np.abs(apply_measurement(a1, out) - hk @ w.T).max() < 1e-10

    def test_frame_repeated_context_is_invariant(self):
        # conditions repeated across frames are fixed points of both branches
        rng = np.random.default_rng(8)
        row = rng.standard_normal((1, 2, 3))
        x = np.repeat(row, 8, axis=0)
        hk = np.repeat(row, 4, axis=0)
        for p in (1.0, 0.0):
            out = correct_spatial_kv(x, hk, np.eye(3), p)
            assert np.abs(out - x).max() < 1e-12


class TestBlend:
    def test_endpoints_return_operands(self):
        sched = CorrectionSchedule(0.8, 1000)
        o = np.ones((2, 2))
        o_hat = np.zeros((2, 2))
        zero_sched = CorrectionSchedule(0.0, 1000)
        assert blend_output(o, o_hat, 500, zero_sched) is o
        one_sched = CorrectionSchedule(1.0, 1000)
        assert blend_output(o, o_hat, 1000, one_sched) is o_hat
        mixed = blend_output(o, o_hat, 1000, sched)
        assert np.allclose(mixed, 0.2)

    def test_quarter_horizon_weight(self):
        sched = CorrectionSchedule(0.8, 1000)
        assert sched.weight(250) == pytest.approx(0.4)
        assert sched.weight(1000) == pytest.approx(0.8)

    def test_weight_formula_many_points(self):
        sched = CorrectionSchedule(0.8, 1000)
        for t in range(0, 1001, 37):
            assert abs(sched.weight(t) - 0.8 * math.sqrt(t / 1000)) < 1e-15

    def test_monotone_non_decreasing(self):
        sched = CorrectionSchedule(0.8, 1000)
        ws = [sched.weight(t) for t in range(1001)]
        assert all(b >= a for a, b in zip(ws, ws[1:]))
        assert all(0.0 <= w <= 1.0 for w in ws)

    def test_invalid_coefficients(self):
        with pytest.raises(ConfigError):
            CorrectionSchedule(1.2, 1000)
        with pytest.raises(ConfigError):
            CorrectionSchedule(-0.1, 1000)
        with pytest.raises(ConfigError):
            CorrectionSchedule(0.8, 1000).weight(2000)


class TestHiddenCache:
    def test_record_fetch_bitwise(self):
        cache = HiddenCache()
        arr = np.random.default_rng(9).standard_normal((4, 2, 3))
        record_hidden(cache, 7, "block0.temporal_attn", ROLE_TEMPORAL, arr)
        out = fetch_hidden(cache, 7, "block0.temporal_attn", ROLE_TEMPORAL)
        assert out.tobytes() == arr.tobytes()

    def test_missing_key_names_coordinates(self):
        cache = HiddenCache()
        with pytest.raises(CacheMissError) as err:
            cache.fetch(3, "block1.spatial_attn", ROLE_SPATIAL)
        msg = str(err.value)
        assert "3" in msg and "block1.spatial_attn" in msg and ROLE_SPATIAL in msg

    def test_double_record_rejected(self):
        cache = HiddenCache()
        cache.record(0, "m", ROLE_SPATIAL, np.zeros(2))
        with pytest.raises(ConfigError):
            cache.record(0, "m", ROLE_SPATIAL, np.ones(2))

    def test_disk_roundtrip(self, tmp_path):
        cache = HiddenCache()
        rng = np.random.default_rng(10)
        cache.record(0, "block0.spatial_attn", ROLE_SPATIAL,
                     rng.standard_normal((2, 3, 4)).astype(np.float32))
        cache.record(1, "block0.temporal_attn", ROLE_TEMPORAL,
                     rng.standard_normal((2, 3, 4)).astype(np.float32))
        path = tmp_path / "cache.zswt"
        cache.save(path)
        loaded = HiddenCache.load(path)
        assert set(loaded.keys()) == set(cache.keys())
        for key in cache.keys():
            assert np.array_equal(loaded.fetch(*key), cache.fetch(*key))

    def test_full_base_run_cache_size(self, small_model, short_schedule):
        from zerosmooth.cascade import CascadeConfig, CascadeRunner

        cfg = CascadeConfig(stages=1, t0=4, sample_steps=50, dtype="float64",
                            color_correction=False)
        runner = CascadeRunner(cfg, small_model, short_schedule, seed=0)
        result = runner.run()[0]
        hooked = small_model.hooked_modules()
        assert len(result.cache) == 50 * len(hooked)
        for step in (0, 49):
            for module_id, kind in hooked:
                role = ROLE_SPATIAL if "spatial" in kind else ROLE_TEMPORAL
                assert result.cache.fetch(step, module_id, role) is not None


class TestBranchSelector:
    def test_gaussian_frequency_matches_threshold(self):
        selector = BranchSelector(0, 2, mode="gaussian")
        draws = np.array([selector.draw(i, "m") for i in range(100_000)])
        freq_a1 = float((draws > 0.5).mean())
        # P(N(0,1) > 0.5) = Phi(-0.5)
        expected = 0.5 * math.erfc(0.5 / math.sqrt(2))
        assert abs(freq_a1 - expected) < 0.01

    def test_uniform_mode_is_balanced(self):
        selector = BranchSelector(0, 2, mode="uniform")
        draws = np.array([selector.draw(i, "m") for i in range(100_000)])
        assert abs(float((draws > 0.5).mean()) - 0.5) < 0.01

    def test_deterministic_per_key(self):
        a = BranchSelector(3, 2).draw(10, "block0.spatial_attn")
        b = BranchSelector(3, 2).draw(10, "block0.spatial_attn")
        c = BranchSelector(3, 2).draw(11, "block0.spatial_attn")
        assert a == b and a != c

    def test_mode_validation(self):
        with pytest.raises(ConfigError):
            BranchSelector(0, 1, mode="coin")


class TestStageHooks:
    def test_recording_only_returns_none(self):
        cache = HiddenCache()
        hooks = StageHooks(cache_out=cache)
        hooks.begin_step(0, 1000)
        h = np.random.default_rng(11).standard_normal((4, 2, 3))
        assert hooks.temporal_input("m", h) is None
        assert hooks.spatial_qkv("s", h, h, h, h, (np.eye(3),) * 3) is None
        assert len(cache) == 2

    def test_correction_records_corrected_state(self):
        rng = np.random.default_rng(12)
        op = build_sampling(2, 2)
        cache_in = HiddenCache()
        hk = rng.standard_normal((2, 2, 3))
        cache_in.record(0, "m", ROLE_TEMPORAL, hk)
        cache_out = HiddenCache()
        hooks = StageHooks(cache_in=cache_in, cache_out=cache_out, sampling=op,
                           schedule=CorrectionSchedule(0.8, 1000),
                           selector=BranchSelector(0, 2))
        hooks.begin_step(0, 1000)
        h = rng.standard_normal((4, 2, 3))
        h_hat = hooks.temporal_input("m", h)
        assert np.array_equal(h_hat[[0, 2]], hk)
        assert np.array_equal(cache_out.fetch(0, "m", ROLE_TEMPORAL), h_hat)

    def test_missing_cache_entry_raises(self):
        op = build_sampling(2, 2)
        hooks = StageHooks(cache_in=HiddenCache(), cache_out=None, sampling=op,
                           schedule=CorrectionSchedule(0.8, 1000),
                           selector=BranchSelector(0, 2))
        hooks.begin_step(5, 900)
        with pytest.raises(CacheMissError):
            hooks.temporal_input("m", np.zeros((4, 1, 2)))

    def test_ccs_off_means_full_weight(self):
        op = build_sampling(2, 2)
        hooks = StageHooks(cache_in=HiddenCache(), cache_out=None, sampling=op,
                           selector=BranchSelector(0, 2), ccs=False)
        hooks.begin_step(0, 17)
        assert hooks.blend_weight() == 1.0
