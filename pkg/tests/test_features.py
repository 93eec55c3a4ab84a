import numpy as np
import pytest

from hapticauth import FEATURE_NAMES, FeatureSequence, differentiate, extract_features, pipeline
from hapticauth.errors import ShapeError
from hapticauth.signal import zscore_fit

from conftest import make_trace
from oracles import table1_features

RATE = 250.0


def assert_channelwise_close(impl, oracle, rtol=1e-4):
    # per-channel absolute floor tied to that channel's scale; "relative"
    # comparison that stays meaningful where single elements pass through zero
    assert impl.shape == oracle.shape
    for c in range(impl.shape[1]):
        scale = max(np.abs(oracle[:, c]).max(), 1e-8)
        np.testing.assert_allclose(impl[:, c], oracle[:, c], rtol=rtol, atol=rtol * scale)


class TestDifferentiate:
    def test_constant_is_zero(self):
        x = np.full((10, 3), 4.2, dtype=np.float32)
        np.testing.assert_array_equal(differentiate(x, RATE), np.zeros((9, 3), dtype=np.float32))

    def test_linear_gives_slope(self):
        k = 3.5
        t = np.arange(12) / RATE
        x = np.stack([k * t, 0 * t, -k * t], axis=1)
        out = differentiate(x, RATE)
        np.testing.assert_allclose(out[:, 0], k, rtol=1e-6)
        np.testing.assert_allclose(out[:, 2], -k, rtol=1e-6)

    def test_matches_index_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 3)).astype(np.float32)
        out = differentiate(x, RATE)
        for t in range(9):
            for c in range(3):
                assert out[t, c] == pytest.approx((x[t + 1, c] - x[t, c]) * RATE, rel=1e-6)

    def test_too_short(self):
        with pytest.raises(ShapeError):
            differentiate(np.zeros((1, 3)), RATE)


class TestExtractFeatures:
    def test_constant_force_all_zero(self):
        x = np.full((20, 3), 1.5, dtype=np.float32)
        out = extract_features(x, RATE)
        assert out.shape == (17, 13)
        np.testing.assert_array_equal(out, np.zeros_like(out))

    def test_linear_fz(self):
        # rate and slope chosen so every sample is exactly representable in
        # float32: the derivative cascade then has no rounding noise at all
        k, rate = 2.0, 256.0
        t = np.arange(16) / rate
        x = np.stack([0 * t, 0 * t, k * t], axis=1).astype(np.float32)
        out = extract_features(x, rate)
        np.testing.assert_array_equal(out[:, 3], np.float32(k))          # vz
        np.testing.assert_array_equal(out[:, 4], np.float32(abs(k)))     # |v|
        np.testing.assert_array_equal(out[:, 0], np.float32(abs(k) / rate))  # dF norm
        np.testing.assert_array_equal(out[:, 5:13], np.zeros((13, 8), dtype=np.float32))  # accel/jerk

    def test_matches_table1_oracle_small(self):
        rng = np.random.default_rng(1)
        x = rng.normal(0, 2, size=(8, 3)).astype(np.float32)
        assert_channelwise_close(extract_features(x, RATE), table1_features(x, RATE))

    def test_channel_count_and_names(self):
        assert len(FEATURE_NAMES) == 13
        assert FEATURE_NAMES[0] == "dF_norm"
        assert FEATURE_NAMES[4] == "v_norm" and FEATURE_NAMES[8] == "a_norm"

    def test_too_short(self):
        with pytest.raises(ShapeError):
            extract_features(np.zeros((3, 3)), RATE)

    def test_norm_consistency(self):
        rng = np.random.default_rng(2)
        out = extract_features(rng.normal(size=(50, 3)).astype(np.float32), RATE)
        for norm_c, vec in ((4, slice(1, 4)), (8, slice(5, 8)), (12, slice(9, 12))):
            norms = np.linalg.norm(out[:, vec], axis=1)
            np.testing.assert_allclose(out[:, norm_c], norms, rtol=1e-5, atol=1e-5)

    def test_df_norm_times_rate_equals_vnorm(self):
        rng = np.random.default_rng(3)
        out = extract_features(rng.normal(size=(40, 3)).astype(np.float32), RATE)
        np.testing.assert_allclose(out[:, 0] * RATE, out[:, 4], rtol=1e-4)

    def test_time_reversal(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(9, 3)).astype(np.float32)
        r = x[::-1].copy()
        v_f = differentiate(x, RATE)
        v_r = differentiate(r, RATE)
        np.testing.assert_allclose(v_r, -v_f[::-1], rtol=1e-5, atol=1e-5)
        a_f = differentiate(v_f, RATE)
        a_r = differentiate(v_r, RATE)
        np.testing.assert_allclose(a_r, a_f[::-1], rtol=1e-5, atol=1e-4)
        j_f = differentiate(a_f, RATE)
        j_r = differentiate(a_r, RATE)
        np.testing.assert_allclose(j_r, -j_f[::-1], rtol=1e-5, atol=1e-2)

    def test_scaling_equivariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(30, 3)).astype(np.float32)
        c = 2.0  # exactly representable, so float32 scaling is exact
        np.testing.assert_allclose(
            extract_features((c * x).astype(np.float32), RATE),
            c * extract_features(x, RATE), rtol=1e-5, atol=1e-3,
        )


class TestPipeline:
    def test_output_lengths(self):
        rng = np.random.default_rng(6)
        tr = make_trace(rng, n=1000)
        assert pipeline(tr, 64, label=2).values.shape == (64, 13)
        assert pipeline(tr, 512, label=2).values.shape == (512, 13)

    def test_constant_trace_zero_features(self):
        tr_forces = np.full((100, 3), 2.0, dtype=np.float32)
        from hapticauth import ForceTrace
        tr = ForceTrace(timestamps=(np.arange(100) / RATE).astype(np.float32),
                        forces=tr_forces, user_id="u", task_id="a", trial_index=0)
        for L in (16, 64):
            np.testing.assert_array_equal(pipeline(tr, L).values, np.zeros((L, 13), dtype=np.float32))

    def test_label_and_source_carried(self):
        rng = np.random.default_rng(7)
        tr = make_trace(rng, n=32, user="u07", task="c", trial=5)
        fs = pipeline(tr, 16, label=3)
        assert fs.label == 3
        assert fs.source == ("u07", "c", 5, "raw")

    def test_normalization_stage(self):
        rng = np.random.default_rng(8)
        tr = make_trace(rng, n=200)
        plain = pipeline(tr, 32)
        stats = zscore_fit([plain.values])
        normed = pipeline(tr, 32, stats=stats)
        assert np.abs(normed.values.mean(axis=0)).max() < 1e-4

    def test_feature_sequence_rejects_nonfinite(self):
        with pytest.raises(ShapeError):
            FeatureSequence(np.full((4, 13), np.nan), 0, ("u", "a", 0, "raw"))

    def test_too_short_trace_propagates(self):
        from hapticauth import ForceTrace
        tr = ForceTrace(timestamps=np.float32([0.0, 0.004, 0.008]),
                        forces=np.zeros((3, 3), dtype=np.float32),
                        user_id="u", task_id="a", trial_index=0)
        with pytest.raises(ShapeError):
            pipeline(tr, 16)
