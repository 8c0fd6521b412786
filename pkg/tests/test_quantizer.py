import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoquant.quantizer import (
    ScaleParams,
    dequantize_tensor,
    quantize_tensor,
    quantize_unit,
    scale_bucket,
    theoretical_bits,
    theoretical_ratio,
)
from evoquant.tensors import WeightTensor


def nearest_grid_bruteforce(x: np.ndarray, bits: int) -> np.ndarray:
    """Independent oracle: scan every grid point, ties resolved downward."""
    points = np.arange((1 << bits) + 1, dtype=np.float64) / (1 << bits)
    dists = np.abs(x[:, None] - points[None, :])
    return dists.argmin(axis=1)  # argmin takes the first (lower) index on ties


def nearest_grid_closed_form(x: np.ndarray, bits: int) -> np.ndarray:
    """Second oracle: nearest integer to x*2^b with ties down is ceil(t - 0.5)."""
    t = x * (1 << bits)
    return np.clip(np.ceil(t - 0.5), 0, 1 << bits).astype(np.int64)


class TestScaleBucket:
    def test_min_max_example(self):
        scaled, params = scale_bucket([2.0, 4.0, 6.0])
        assert np.allclose(scaled, [0.0, 0.5, 1.0])
        assert params == ScaleParams(2.0, 4.0)

    def test_constant_bucket_degenerates(self):
        scaled, params = scale_bucket([5.0, 5.0, 5.0])
        assert np.all(scaled == 0.0)
        assert params.span == 0.0
        assert params.offset == 5.0

    def test_random_bucket_hits_unit_range_exactly(self):
        rng = np.random.default_rng(42)
        v = rng.uniform(-3, 3, size=1000)
        scaled, params = scale_bucket(v)
        assert params.offset == v.min()
        assert params.span == v.max() - v.min()
        assert scaled.min() == 0.0
        assert scaled.max() == 1.0
        assert np.all((scaled >= 0.0) & (scaled <= 1.0))

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            scale_bucket([])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            scale_bucket([1.0, np.inf])


class TestQuantizeUnit:
    def test_hand_example_round_down(self):
        # 0.3 * 4 = 1.2, fraction 0.2 <= 0.5 -> stays at 1/4
        grid, code = quantize_unit(0.3, 2)
        assert (grid, code) == (0.25, 1)

    def test_hand_example_round_up(self):
        # 0.9 * 4 = 3.6, fraction 0.6 > 0.5 -> bumps to 4/4
        grid, code = quantize_unit(0.9, 2)
        assert (grid, code) == (1.0, 4)

    def test_grid_point_is_fixed_point(self):
        grid, code = quantize_unit(0.5, 1)
        assert (grid, code) == (0.5, 1)

    def test_tie_rounds_down(self):
        # 0.125 * 4 = 0.5 exactly: strict > keeps the floor
        grid, code = quantize_unit(0.125, 2)
        assert (grid, code) == (0.0, 0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            quantize_unit(1.5, 4)
        with pytest.raises(ValueError, match="outside"):
            quantize_unit(-0.1, 4)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 1, size=4000)
        for b in (1, 2, 3, 5, 8):
            _, codes = quantize_unit(x, b)
            assert np.array_equal(codes, nearest_grid_bruteforce(x, b))

    def test_matches_closed_form_oracle_high_bits(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 1, size=4000)
        for b in (10, 13, 16):
            _, codes = quantize_unit(x, b)
            assert np.array_equal(codes, nearest_grid_closed_form(x, b))

    @settings(max_examples=300, deadline=None)
    @given(x=st.floats(min_value=0.0, max_value=1.0), b=st.integers(min_value=1, max_value=16))
    def test_error_bound_and_idempotence(self, x, b):
        grid, code = quantize_unit(x, b)
        assert abs(grid - x) <= 2.0 ** -(b + 1)
        again, code2 = quantize_unit(grid, b)
        assert again == grid and code2 == code

    @settings(max_examples=200, deadline=None)
    @given(
        x=st.floats(min_value=0.0, max_value=1.0),
        y=st.floats(min_value=0.0, max_value=1.0),
        b=st.integers(min_value=1, max_value=12),
    )
    def test_monotone(self, x, y, b):
        if x > y:
            x, y = y, x
        gx, _ = quantize_unit(x, b)
        gy, _ = quantize_unit(y, b)
        assert gx <= gy

    def test_bound_shrinks_with_bits(self):
        x = np.random.default_rng(3).uniform(0, 1, 2000)
        prev = None
        for b in (1, 2, 4, 8, 12):
            grid, _ = quantize_unit(x, b)
            worst = np.abs(grid - x).max()
            assert worst <= 2.0 ** -(b + 1)
            if prev is not None:
                assert worst < prev
            prev = worst


class TestQuantizeTensor:
    def test_three_value_example(self):
        qt = quantize_tensor(WeightTensor("w", (3,), np.array([2.0, 4.0, 6.0])), 2, 3)
        assert qt.scales == (ScaleParams(2.0, 4.0),)
        assert qt.codes.tolist() == [0, 2, 4]
        assert dequantize_tensor(qt).values.tolist() == [2.0, 4.0, 6.0]

    def test_constant_tensor_reconstructs_exactly(self):
        for b, k in ((2, 2), (8, 4), (16, 256)):
            t = WeightTensor("c", (10,), np.full(10, 0.375))
            qt = quantize_tensor(t, b, k)
            assert dequantize_tensor(qt).values.tolist() == [0.375] * 10

    def test_degenerate_bucket_reconstruction(self):
        qt = quantize_tensor(WeightTensor("w", (4,), np.full(4, 7.0)), 4, 4)
        assert qt.scales[0].span == 0.0
        assert np.all(qt.codes == 0)
        assert dequantize_tensor(qt).values.tolist() == [7.0] * 4

    def test_reconstruction_bound_against_bruteforce(self):
        rng = np.random.default_rng(11)
        v = rng.uniform(-2, 2, size=10_000).astype(np.float32).astype(np.float64)
        t = WeightTensor("w", (10_000,), v)
        qt = quantize_tensor(t, 8, 256)
        recon = dequantize_tensor(qt).values
        for j, params in enumerate(qt.scales):
            sl = slice(j * 256, min((j + 1) * 256, 10_000))
            assert np.all(np.abs(recon[sl] - v[sl]) <= params.span * 2.0**-9)
            # codes agree with an independent nearest-grid scan of the scaled bucket
            scaled = (v[sl] - params.offset) / params.span
            assert np.array_equal(qt.codes[sl], nearest_grid_bruteforce(scaled, 8))

    def test_partial_last_bucket_scaled_independently(self):
        v = np.concatenate([np.linspace(0, 1, 8), np.array([100.0, 200.0, 300.0])])
        qt = quantize_tensor(WeightTensor("w", (11,), v), 4, 8)
        assert qt.bucket_count == 2
        assert qt.scales[1].offset == pytest.approx(100.0)
        recon = dequantize_tensor(qt).values
        assert np.all(np.abs(recon - v) <= np.array([qt.scales[0].span] * 8 + [qt.scales[1].span] * 3) * 2.0**-5)

    def test_requantize_is_idempotent(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal(500)
        qt = quantize_tensor(WeightTensor("w", (500,), v), 4, 64)
        recon = dequantize_tensor(qt)
        qt2 = quantize_tensor(recon, 4, 64)
        assert np.array_equal(qt.codes, qt2.codes)

    def test_bad_bucket_size(self):
        with pytest.raises(ValueError, match="bucket"):
            quantize_tensor(WeightTensor("w", (3,), np.ones(3)), 4, 1)

    def test_code_out_of_range_rejected(self):
        qt = quantize_tensor(WeightTensor("w", (3,), np.array([2.0, 4.0, 6.0])), 2, 3)
        with pytest.raises(ValueError, match="out of range"):
            type(qt)(qt.name, qt.shape, qt.bit_width, qt.bucket_size, qt.scales, np.array([0, 2, 5]))


class TestStorageAccounting:
    def test_ratio_examples(self):
        assert theoretical_ratio(256, 32, 8) == pytest.approx(8192 / 2112, abs=1e-12)
        assert theoretical_ratio(512, 32, 4) == pytest.approx(16384 / 2112, abs=1e-12)

    def test_ratio_asymptote(self):
        assert theoretical_ratio(10**9, 32, 8) == pytest.approx(4.0, abs=1e-6)

    def test_bits_examples(self):
        assert theoretical_bits(1024, 8, 256, 32) == 8448
        assert theoretical_bits(2048, 4, 512, 32) == 8448
        for b, k, f in ((2, 2, 32), (8, 256, 32), (16, 64, 64)):
            assert theoretical_bits(1, b, k, f) == b + 2 * f

    def test_compression_condition(self):
        # b < f - 2f/k implies fewer bits than full precision
        for n in (10, 1000, 4096):
            for b, k, f in ((8, 256, 32), (4, 16, 32), (2, 8, 16)):
                if b < f - 2 * f / k:
                    assert theoretical_bits(n, b, k, f) < f * n
