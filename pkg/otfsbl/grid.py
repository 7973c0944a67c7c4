"""Delay-Doppler grid geometry and the elementary channel basis matrices."""

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class OtfsGrid:
    delay_bins: int
    doppler_bins: int
    subcarrier_spacing: float
    symbol_duration: float
    tx_pulse: np.ndarray = field(repr=False)
    rx_pulse: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.delay_bins < 2 or self.doppler_bins < 2:
            raise ValueError(
                f"Grid needs at least 2x2 bins, got {self.delay_bins}x{self.doppler_bins}"
            )
        if abs(self.subcarrier_spacing * self.symbol_duration - 1) > 1e-12:
            raise ValueError("Symbol duration must be the inverse of the subcarrier spacing")
        for name in ("tx_pulse", "rx_pulse"):
            pulse = np.asarray(getattr(self, name), dtype=complex)
            if pulse.shape != (self.delay_bins,):
                raise ValueError(
                    f"{name} must have exactly {self.delay_bins} samples, got shape {pulse.shape}"
                )
            object.__setattr__(self, name, pulse)

    @classmethod
    def rectangular(cls, delay_bins: int, doppler_bins: int, subcarrier_spacing: float):
        return cls(
            delay_bins,
            doppler_bins,
            subcarrier_spacing,
            1 / subcarrier_spacing,
            np.ones(delay_bins, dtype=complex),
            np.ones(delay_bins, dtype=complex),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.delay_bins, self.doppler_bins

    @property
    def frame_duration(self) -> float:
        return self.doppler_bins * self.symbol_duration

    @property
    def omega(self) -> complex:
        return np.exp(2j * np.pi / (self.delay_bins * self.doppler_bins))


@dataclass(frozen=True)
class DelayDopplerPath:
    delay_tap: int
    doppler_index: float
    gain: complex

    def validate(self, grid: OtfsGrid):
        if not 0 <= self.delay_tap < grid.delay_bins:
            raise ValueError(
                f"Delay tap {self.delay_tap} outside [0, {grid.delay_bins})"
            )
        if not abs(self.doppler_index) < grid.doppler_bins / 2:
            raise ValueError(
                f"Doppler index {self.doppler_index} outside (-{grid.doppler_bins / 2}, {grid.doppler_bins / 2})"
            )


@dataclass(frozen=True)
class ChannelSupport:
    max_delay: int
    doppler_grid_points: int
    max_doppler: int

    def __post_init__(self):
        if min(self.max_delay, self.doppler_grid_points, self.max_doppler) < 1:
            raise ValueError("Support dimensions must be positive")
        if self.doppler_grid_points < self.max_doppler:
            raise ValueError(
                f"Doppler grid ({self.doppler_grid_points}) is coarser than the Doppler spread ({self.max_doppler})"
            )

    def check(self, grid: OtfsGrid):
        if self.max_delay > grid.delay_bins or self.max_doppler > grid.doppler_bins:
            raise ValueError(
                f"Support {self.max_delay}x{self.max_doppler} does not fit a "
                f"{grid.delay_bins}x{grid.doppler_bins} grid"
            )

    @property
    def size(self) -> int:
        return self.max_delay * self.doppler_grid_points

    def doppler_exponent(self, j: int) -> float:
        if not 0 <= j < self.doppler_grid_points:
            raise ValueError(f"Doppler grid index {j} outside [0, {self.doppler_grid_points})")
        return j * self.max_doppler / self.doppler_grid_points

    def cells(self) -> Iterator[tuple[int, int, float]]:
        """Yield (delay tap, Doppler grid index, Doppler exponent), delay-major."""
        for i in range(self.max_delay):
            for j in range(self.doppler_grid_points):
                yield i, j, self.doppler_exponent(j)

    def index(self, i: int, j: int) -> int:
        return i * self.doppler_grid_points + j


def permutation_matrix(size: int) -> np.ndarray:
    if size < 1:
        raise ValueError(f"Permutation order must be positive, got {size}")
    return np.roll(np.eye(size), 1, axis=0)


def delta_phases(grid: OtfsGrid, delay_tap: int) -> np.ndarray:
    """Signed phases of the diagonal of the delay-dependent Doppler matrix."""
    size = grid.delay_bins
    if not 0 <= delay_tap < size:
        raise ValueError(f"Delay tap {delay_tap} outside [0, {size})")
    exponents = np.arange(size, dtype=float)
    if delay_tap:
        exponents[size - delay_tap :] -= size
    return 2 * np.pi * exponents / (size * grid.doppler_bins)


def delta_matrix(grid: OtfsGrid, delay_tap: int) -> np.ndarray:
    return np.diag(np.exp(1j * delta_phases(grid, delay_tap)))


def _shifted_doppler(grid: OtfsGrid, delay_tap: int, doppler: float, pulse: np.ndarray):
    # Pi^l diag(d) is diag(d) with its rows rolled by l
    phases = np.exp(1j * doppler * delta_phases(grid, delay_tap))
    return np.roll(np.diag(phases * pulse), delay_tap, axis=0)


def basis_matrix(grid: OtfsGrid, delay_tap: int, doppler: float) -> np.ndarray:
    return grid.rx_pulse[:, None] * _shifted_doppler(grid, delay_tap, doppler, grid.tx_pulse)


def doppler_grid_value(j: int, support: ChannelSupport, grid: OtfsGrid) -> float:
    """Doppler shift in Hz of grid point ``j``."""
    return support.doppler_exponent(j) / grid.frame_duration


def td_channel_matrix(grid: OtfsGrid, paths: Sequence[DelayDopplerPath]) -> np.ndarray:
    ones = np.ones(grid.delay_bins)
    channel = np.zeros((grid.delay_bins, grid.delay_bins), dtype=complex)
    for path in paths:
        path.validate(grid)
        channel += path.gain * _shifted_doppler(grid, path.delay_tap, path.doppler_index, ones)
    return channel


def effective_dd_channel(grid: OtfsGrid, paths: Sequence[DelayDopplerPath]) -> np.ndarray:
    return grid.rx_pulse[:, None] * td_channel_matrix(grid, paths) * grid.tx_pulse[None, :]
