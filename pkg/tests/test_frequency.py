import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqveil.datagen import SynthesisSpec, generate_synthetic
from freqveil.frequency import (
    TransformConfig,
    TransformError,
    decompose,
    energy_split,
    reconstruct,
)

ALL_CONFIGS = [
    TransformConfig(family=f, axis=a, levels=l, boundary=b)
    for f in ("haar", "db2")
    for a in ("temporal", "spatial", "spatiotemporal")
    for l in (1, 2)
    for b in ("periodic", "symmetric")
]


def rand_clip(rng, shape=(8, 16, 16, 2), dtype=np.float64):
    return rng.standard_normal(shape).astype(dtype)


class TestHaarStep:
    def test_pair_formula(self):
        # x = [1, 0] per pixel: low = high = 1/sqrt(2)
        x = np.zeros((2, 1, 1, 1))
        x[0] = 1.0
        pair = decompose(x, TransformConfig())
        assert pair.low.shape == (1, 1, 1, 1)
        assert pair.high[0].shape == (1, 1, 1, 1)
        assert pair.low.ravel()[0] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
        assert pair.high[0].ravel()[0] == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_constant_clip_annihilated(self):
        x = np.full((6, 3, 3, 1), 0.3)
        pair = decompose(x, TransformConfig())
        assert np.all(pair.high[0] == 0.0)
        assert np.allclose(pair.low, 0.3 * math.sqrt(2), atol=1e-12)

    def test_mixed_pairs_formula(self):
        rng = np.random.default_rng(4)
        x = rand_clip(rng, (4, 2, 2, 1))
        pair = decompose(x, TransformConfig())
        assert np.allclose(pair.low, (x[0::2] + x[1::2]) / math.sqrt(2))
        assert np.allclose(pair.high[0], (x[0::2] - x[1::2]) / math.sqrt(2))

    def test_zero_high_band_gives_pairwise_means(self):
        rng = np.random.default_rng(5)
        x = rand_clip(rng, (6, 2, 2, 1))
        pair = decompose(x, TransformConfig())
        pair.high[0][:] = 0.0
        r = reconstruct(pair)
        expected = np.repeat((x[0::2] + x[1::2]) / 2.0, 2, axis=0)
        assert np.allclose(r, expected, atol=1e-12)


class TestReconstruction:
    @pytest.mark.parametrize("cfg", ALL_CONFIGS,
                             ids=lambda c: f"{c.family}-{c.axis}-L{c.levels}-{c.boundary}")
    def test_perfect_reconstruction_fp64(self, cfg):
        rng = np.random.default_rng(0)
        x = rand_clip(rng)
        r = reconstruct(decompose(x, cfg))
        assert r.shape == x.shape
        assert np.abs(r - x).max() <= 1e-10

    def test_perfect_reconstruction_fp32(self):
        rng = np.random.default_rng(1)
        x = rand_clip(rng, (16, 32, 32, 1), np.float32)
        for cfg in (TransformConfig(), TransformConfig(family="db2"),
                    TransformConfig(boundary="symmetric")):
            r = reconstruct(decompose(x, cfg))
            assert r.dtype == np.float32
            assert np.abs(r - x).max() <= 1e-5

    def test_zero_maps_to_zero(self):
        x = np.zeros((4, 4, 4, 1))
        assert np.all(reconstruct(decompose(x, TransformConfig())) == 0.0)

    def test_reconstruct_shape_mismatch_raises(self):
        rng = np.random.default_rng(2)
        pair = decompose(rand_clip(rng, (8, 4, 4, 1)), TransformConfig())
        pair.high[0] = pair.high[0][:-1]
        with pytest.raises(TransformError, match="shape"):
            reconstruct(pair)


class TestLinearity:
    @given(a=st.floats(-4, 4, allow_nan=False), b=st.floats(-4, 4, allow_nan=False),
           seed=st.integers(0, 2**16))
    @settings(max_examples=25, deadline=None)
    def test_decompose_linear(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x, y = rand_clip(rng, (4, 4, 4, 1)), rand_clip(rng, (4, 4, 4, 1))
        cfg = TransformConfig(family="db2", boundary="symmetric")
        lhs = decompose(a * x + b * y, cfg)
        px, py = decompose(x, cfg), decompose(y, cfg)
        assert np.allclose(lhs.low, a * px.low + b * py.low, atol=1e-9)
        for l, hx, hy in zip(lhs.high, px.high, py.high):
            assert np.allclose(l, a * hx + b * hy, atol=1e-9)

    def test_spec_example_scalars(self):
        rng = np.random.default_rng(3)
        x, y = rand_clip(rng), rand_clip(rng)
        cfg = TransformConfig()
        lhs = decompose(2.0 * x - 3.0 * y, cfg)
        px, py = decompose(x, cfg), decompose(y, cfg)
        assert np.allclose(lhs.low, 2 * px.low - 3 * py.low, atol=1e-10)
        assert np.allclose(lhs.high[0], 2 * px.high[0] - 3 * py.high[0], atol=1e-10)


class TestEnergy:
    def test_constant_clip_zero_high_energy(self):
        pair = decompose(np.full((4, 4, 4, 1), 0.7), TransformConfig())
        low_e, high_e = energy_split(pair)
        assert high_e == 0.0
        assert low_e > 0.0

    @pytest.mark.parametrize("family", ["haar", "db2"])
    @pytest.mark.parametrize("axis", ["temporal", "spatial", "spatiotemporal"])
    def test_parseval_periodic(self, family, axis):
        rng = np.random.default_rng(11)
        x = rand_clip(rng)
        cfg = TransformConfig(family=family, axis=axis, boundary="periodic")
        low_e, high_e = energy_split(decompose(x, cfg))
        total = float(np.sum(x ** 2))
        assert abs(low_e + high_e - total) / total <= 1e-4

    def test_expression_amplitude_monotone_in_high_energy(self):
        # with zero noise, detail-band energy grows with the oscillation
        # amplitude of the expression factor
        energies = []
        for amp in (0.0, 0.05, 0.1, 0.2):
            spec = SynthesisSpec(num_identities=2, num_expressions=2,
                                 clips_per_pair=1, frames=8, height=8, width=8,
                                 channels=1, noise_std=0.0,
                                 expression_amplitude=amp, seed=3)
            ds = generate_synthetic(spec)
            _, high_e = energy_split(
                decompose(ds.clips[1].frames.astype(np.float64), TransformConfig())
            )
            energies.append(high_e)
        assert energies[0] == 0.0
        assert all(b > a for a, b in zip(energies, energies[1:]))


class TestValidation:
    def test_odd_temporal_extent_periodic_rejected(self):
        x = np.zeros((5, 4, 4, 1))
        with pytest.raises(TransformError, match="even extent"):
            decompose(x, TransformConfig())

    def test_levels_too_deep_reports_max(self):
        x = np.zeros((4, 4, 4, 1))
        with pytest.raises(TransformError, match="max admissible levels is 2"):
            decompose(x, TransformConfig(levels=3))

    def test_unknown_family_rejected(self):
        with pytest.raises(TransformError, match="family"):
            TransformConfig(family="sym4")

    def test_symmetric_odd_extent_allowed(self):
        x = np.random.default_rng(0).standard_normal((6, 5, 5, 1))
        cfg = TransformConfig(axis="spatial", boundary="symmetric")
        r = reconstruct(decompose(x, cfg))
        assert np.abs(r - x).max() <= 1e-10

    def test_band_keys_describe_orientations(self):
        x = np.zeros((4, 8, 8, 1))
        pair = decompose(x, TransformConfig(axis="spatial", levels=2))
        assert pair.band_keys == [(1, "HH"), (1, "HL"), (1, "LH"),
                                  (2, "HH"), (2, "HL"), (2, "LH")]
        assert len(pair.high) == 6
