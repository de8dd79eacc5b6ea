"""Span mask sampling, forcing, and downsampling through the conv stack."""

import numpy as np
import pytest

from phonemix.masking import (SpanMaskConfig, conv_out_len, downsample_mask,
                              sample_span_mask, union_mask_fraction)


class TestSampling:
    def test_shape_and_dtype(self):
        mask = sample_span_mask(50, SpanMaskConfig(), np.random.default_rng(0))
        assert mask.shape == (50,)
        assert mask.dtype == bool

    def test_spans_are_contiguous_runs(self):
        # with one planted start, the mask is exactly one span
        cfg = SpanMaskConfig(start_prob=1e-9, span_len=4)
        mask = sample_span_mask(30, cfg, np.random.default_rng(0), force=True)
        runs = np.flatnonzero(mask)
        assert mask.sum() == 4
        assert np.array_equal(runs, np.arange(runs[0], runs[0] + 4))

    def test_forcing_plants_span_at_zero(self):
        # start_prob so small both draws come up empty
        cfg = SpanMaskConfig(start_prob=1e-12, span_len=5)
        mask = sample_span_mask(40, cfg, np.random.default_rng(0), force=True)
        assert mask[:5].all()
        assert not mask[5:].any()

    def test_force_true_never_empty(self):
        cfg = SpanMaskConfig(start_prob=0.01, span_len=3)
        rng = np.random.default_rng(0)
        for _ in range(200):
            assert sample_span_mask(5, cfg, rng, force=True).any()

    def test_force_false_can_be_empty(self):
        cfg = SpanMaskConfig(start_prob=1e-12, span_len=3)
        mask = sample_span_mask(10, cfg, np.random.default_rng(0), force=False)
        assert not mask.any()

    def test_truncation_at_end(self):
        cfg = SpanMaskConfig(start_prob=1e-12, span_len=10)
        mask = sample_span_mask(4, cfg, np.random.default_rng(0), force=True)
        assert mask.all()  # span truncated to sequence length

    def test_empirical_fraction_matches_analytic(self):
        cfg = SpanMaskConfig(start_prob=0.07, span_len=10)
        rng = np.random.default_rng(0)
        fractions = [sample_span_mask(2000, cfg, rng, force=False).mean()
                     for _ in range(200)]
        analytic = union_mask_fraction(0.07, 10)
        assert abs(analytic - 0.5160) < 1e-3
        assert 0.45 <= np.mean(fractions) <= 0.58

    def test_validation(self):
        with pytest.raises(ValueError):
            sample_span_mask(0, SpanMaskConfig())
        with pytest.raises(ValueError):
            SpanMaskConfig(start_prob=0.0).validate()
        with pytest.raises(ValueError):
            SpanMaskConfig(span_len=0).validate()


def brute_force_downsample(mask, n_layers=2, kernel=3, stride=2, pad=1):
    """Independent oracle: track every input index contributing to each
    output position through the stacked convolutions."""
    contributors = [{i} for i in range(len(mask))]
    for _ in range(n_layers):
        in_len = len(contributors)
        out_len = (in_len + 2 * pad - kernel) // stride + 1
        nxt = []
        for o in range(out_len):
            s = set()
            for k in range(kernel):
                j = o * stride - pad + k
                if 0 <= j < in_len:
                    s |= contributors[j]
            nxt.append(s)
        contributors = nxt
    return np.array([any(mask[i] for i in s) for s in contributors])


class TestDownsampling:
    def test_length_matches_conv_arithmetic(self):
        for T in (1, 2, 3, 7, 16, 33):
            t1 = conv_out_len(T)
            t2 = conv_out_len(t1)
            assert len(downsample_mask(np.zeros(T, dtype=bool))) == t2

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_receptive_field_oracle(self, seed):
        rng = np.random.default_rng(seed)
        T = int(rng.integers(4, 60))
        mask = rng.random(T) < 0.3
        got = downsample_mask(mask)
        want = brute_force_downsample(mask)
        assert np.array_equal(got, want)

    def test_all_masked_stays_all_masked(self):
        assert downsample_mask(np.ones(20, dtype=bool)).all()

    def test_none_masked_stays_empty(self):
        assert not downsample_mask(np.zeros(20, dtype=bool)).any()

    def test_single_frame_propagates(self):
        mask = np.zeros(17, dtype=bool)
        mask[8] = True
        lat = downsample_mask(mask)
        assert lat.any()
