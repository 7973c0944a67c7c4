"""The OTFS transmit/receive chain for single and multiple antennas."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft

from otfsbl.grid import DelayDopplerPath, OtfsGrid, effective_dd_channel, td_channel_matrix
from otfsbl.precoding import DdFrame, PrecoderPair, superimpose
from otfsbl.util import complex_noise


@dataclass(frozen=True)
class MimoConfig:
    transmit_antennas: int = 1
    receive_antennas: int = 1

    def __post_init__(self):
        if self.transmit_antennas < 1 or self.receive_antennas < 1:
            raise ValueError(
                f"Antenna counts must be positive, got {self.transmit_antennas}x{self.receive_antennas}"
            )


@dataclass(frozen=True, eq=False)
class MimoChannel:
    """Paths sharing one delay/Doppler support with per-antenna-pair gains.

    ``gains`` has shape (receive antennas, transmit antennas, paths).
    """

    delay_taps: np.ndarray
    doppler_indices: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        if self.gains.ndim != 3 or self.gains.shape[2] != len(self.delay_taps):
            raise ValueError(
                f"Gains of shape {self.gains.shape} do not match {len(self.delay_taps)} paths"
            )
        if len(self.delay_taps) != len(self.doppler_indices):
            raise ValueError("Every path needs both a delay tap and a Doppler index")

    @property
    def config(self) -> MimoConfig:
        return MimoConfig(self.gains.shape[1], self.gains.shape[0])

    def paths(self, receive: int, transmit: int) -> list[DelayDopplerPath]:
        return [
            DelayDopplerPath(int(tap), float(doppler), complex(gain))
            for tap, doppler, gain in zip(
                self.delay_taps, self.doppler_indices, self.gains[receive, transmit]
            )
        ]


def _check_frame(matrix: np.ndarray, grid: OtfsGrid):
    if matrix.shape != grid.shape:
        raise ValueError(f"Expected a {grid.shape} frame, got {matrix.shape}")


def otfs_modulate(frame: np.ndarray, grid: OtfsGrid) -> np.ndarray:
    _check_frame(frame, grid)
    # X F_N^H with the unitary DFT is an orthonormal inverse FFT along Doppler
    return grid.tx_pulse[:, None] * scipy.fft.ifft(frame, axis=1, norm="ortho")


def otfs_demodulate(received: np.ndarray, grid: OtfsGrid) -> np.ndarray:
    _check_frame(received, grid)
    return grid.rx_pulse[:, None] * scipy.fft.fft(received, axis=1, norm="ortho")


def apply_td_channel(
    signal: np.ndarray,
    paths: Sequence[DelayDopplerPath],
    grid: OtfsGrid,
    noise_std: float,
    rng: np.random.Generator,
) -> np.ndarray:
    _check_frame(signal, grid)
    noise = complex_noise(rng, signal.shape, noise_std)
    return td_channel_matrix(grid, paths) @ signal + noise


def sample_level_oracle(
    column: np.ndarray, paths: Sequence[DelayDopplerPath], grid: OtfsGrid, column_index: int
) -> np.ndarray:
    """Evaluate one received column sample by sample, without the matrix model."""
    size, frame = grid.delay_bins, grid.delay_bins * grid.doppler_bins
    output = np.zeros(size, dtype=complex)
    for p in range(size):
        for path in paths:
            shift = p - path.delay_tap
            output[p] += (
                path.gain
                * np.exp(2j * np.pi * path.doppler_index * shift / frame)
                * column[shift % size]
            )
    return output


def simulate_frame(
    frame: DdFrame,
    pc: PrecoderPair,
    paths: Sequence[DelayDopplerPath],
    grid: OtfsGrid,
    noise_std: float,
    rng: np.random.Generator,
) -> np.ndarray:
    transmitted = otfs_modulate(superimpose(frame, pc), grid)
    return otfs_demodulate(apply_td_channel(transmitted, paths, grid, noise_std, rng), grid)


def mimo_block_channel(channel: MimoChannel, grid: OtfsGrid) -> np.ndarray:
    """Stacked DD channel with block (r, t) equal to that pair's effective channel."""
    config = channel.config
    return np.block(
        [
            [effective_dd_channel(grid, channel.paths(r, t)) for t in range(config.transmit_antennas)]
            for r in range(config.receive_antennas)
        ]
    )


def simulate_mimo_frame(
    frames: Sequence[DdFrame],
    pc: PrecoderPair,
    channel: MimoChannel,
    grid: OtfsGrid,
    mimo: MimoConfig,
    noise_std: float,
    rng: np.random.Generator,
) -> np.ndarray:
    if len(frames) != mimo.transmit_antennas or channel.config != mimo:
        raise ValueError(
            f"Expected {mimo.transmit_antennas} frames and a {mimo.receive_antennas}x"
            f"{mimo.transmit_antennas} channel, got {len(frames)} frames and a "
            f"{channel.config.receive_antennas}x{channel.config.transmit_antennas} channel"
        )
    transmitted = [otfs_modulate(superimpose(frame, pc), grid) for frame in frames]
    outputs = []
    for r in range(mimo.receive_antennas):
        received = complex_noise(rng, grid.shape, noise_std)
        for t, signal in enumerate(transmitted):
            received = td_channel_matrix(grid, channel.paths(r, t)) @ signal + received
        outputs.append(otfs_demodulate(received, grid))
    return np.vstack(outputs)
