import numpy as np
import pytest
from conftest import random_paths
from numpy.testing import assert_allclose

from otfsbl.grid import DelayDopplerPath, OtfsGrid, effective_dd_channel
from otfsbl.modem import (
    MimoChannel,
    MimoConfig,
    apply_td_channel,
    mimo_block_channel,
    otfs_demodulate,
    otfs_modulate,
    sample_level_oracle,
    simulate_frame,
    simulate_mimo_frame,
)
from otfsbl.precoding import DdFrame, make_precoders, pilot_block, superimpose
from otfsbl.util import complex_noise


class TestChain:
    """Modulation, channel and demodulation."""

    def test_modulation_round_trip(self, grid, rng):
        frame = complex_noise(rng, grid.shape, 1.0)
        assert_allclose(otfs_demodulate(otfs_modulate(frame, grid), grid), frame, atol=1e-12)

    def test_modulation_preserves_energy(self, grid, rng):
        frame = complex_noise(rng, grid.shape, 1.0)
        assert np.linalg.norm(otfs_modulate(frame, grid)) == pytest.approx(np.linalg.norm(frame))

    def test_single_tap_shifts_columns(self, grid, rng):
        signal = complex_noise(rng, grid.shape, 1.0)
        received = apply_td_channel(signal, [DelayDopplerPath(1, 0, 1)], grid, 0.0, rng)
        assert_allclose(received, np.roll(signal, 1, axis=0))

    def test_matches_sample_level_recursion(self, grid, rng):
        paths = [DelayDopplerPath(0, 0.0, 0.8), DelayDopplerPath(2, 1.3, 0.2 + 0.5j)]
        signal = complex_noise(rng, grid.shape, 1.0)
        received = apply_td_channel(signal, paths, grid, 0.0, rng)
        for n in range(grid.doppler_bins):
            assert_allclose(
                received[:, n], sample_level_oracle(signal[:, n], paths, grid, n), atol=1e-10
            )

    def test_dd_matrix_model(self, grid, support, rng):
        paths = random_paths(rng, support)
        frame = complex_noise(rng, grid.shape, 1.0)
        transmitted = apply_td_channel(otfs_modulate(frame, grid), paths, grid, 0.0, rng)
        assert_allclose(
            otfs_demodulate(transmitted, grid),
            effective_dd_channel(grid, paths) @ frame,
            atol=1e-10,
        )

    def test_noise_variance(self, rng):
        wide = OtfsGrid.rectangular(8, 512, 15000)
        noise = apply_td_channel(np.zeros(wide.shape, dtype=complex), [], wide, 0.5, rng)
        assert np.mean(np.abs(noise) ** 2) == pytest.approx(0.25, rel=0.05)

    def test_rejects_wrong_shape(self, grid):
        with pytest.raises(ValueError):
            otfs_modulate(np.zeros((8, 4)), grid)


def _frames(rng, count, grid, pilot_columns=2):
    return [
        DdFrame(
            complex_noise(rng, (grid.delay_bins, grid.doppler_bins - pilot_columns), np.sqrt(0.5)),
            pilot_block(rng, grid.delay_bins, pilot_columns, 0.5),
            0.5,
            0.5,
        )
        for _ in range(count)
    ]


class TestFrames:
    """Whole-frame simulation in one and several antennas."""

    def test_decoupled_data(self, grid, support, rng):
        pc = make_precoders(8, 2)
        paths = random_paths(rng, support)
        frame = _frames(rng, 1, grid)[0]
        received = simulate_frame(frame, pc, paths, grid, 0.0, rng)
        channel = effective_dd_channel(grid, paths)
        assert_allclose(received @ pc.data, channel @ frame.data, atol=1e-10)
        assert_allclose(received @ pc.pilot, channel @ frame.pilot, atol=1e-10)

    def test_mimo_block_matrix(self, grid, rng):
        mimo = MimoConfig(2, 3)
        channel = MimoChannel(
            np.array([0, 1, 2]), np.array([0.0, 1.0, 2.0]), complex_noise(rng, (3, 2, 3), 1.0)
        )
        frames = _frames(rng, 2, grid)
        pc = make_precoders(8, 2)
        received = simulate_mimo_frame(frames, pc, channel, grid, mimo, 0.0, rng)
        stacked = np.vstack([superimpose(frame, pc) for frame in frames])
        block = mimo_block_channel(channel, grid)
        assert block.shape == (24, 16)
        assert_allclose(received, block @ stacked, atol=1e-10)
        assert_allclose(
            block[8:16, 8:16], effective_dd_channel(grid, channel.paths(1, 1)), atol=1e-12
        )

    def test_mimo_shape_mismatch(self, grid, rng):
        channel = MimoChannel(np.array([0]), np.array([0.0]), np.ones((2, 2, 1)))
        with pytest.raises(ValueError, match="Expected 2 frames"):
            simulate_mimo_frame(
                _frames(rng, 1, grid), make_precoders(8, 2), channel, grid, MimoConfig(2, 2), 0.0, rng
            )

    def test_mimo_gain_shape(self):
        with pytest.raises(ValueError, match="do not match"):
            MimoChannel(np.array([0, 1]), np.array([0.0, 1.0]), np.ones((2, 2, 3)))

    def test_antenna_counts(self):
        with pytest.raises(ValueError, match="positive"):
            MimoConfig(0, 1)
