"""Dictionaries that linearize the DD channel in its grid coefficients.

Every dictionary shares the delay-major column enumeration of
:meth:`ChannelSupport.cells`, so one coefficient vector indexes the pilot,
data and joint dictionaries as well as the reconstruction matrix. Multi-antenna
dictionaries concatenate one block of columns per transmit antenna.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from otfsbl.grid import ChannelSupport, DelayDopplerPath, OtfsGrid, basis_matrix


def basis_stack(grid: OtfsGrid, support: ChannelSupport) -> np.ndarray:
    """Basis matrices of every grid cell, shape (cells, M, M)."""
    support.check(grid)
    return np.stack([basis_matrix(grid, i, k) for i, _, k in support.cells()])


def apply_basis(basis: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    if symbols.ndim != 2 or symbols.shape[0] != basis.shape[2]:
        raise ValueError(
            f"Symbol block must have {basis.shape[2]} rows, got shape {symbols.shape}"
        )
    # column k is vec(B_k X), vectorized column-major
    products = basis @ symbols
    return products.transpose(0, 2, 1).reshape(basis.shape[0], -1).T


def pilot_dictionary(pilots: np.ndarray, grid: OtfsGrid, support: ChannelSupport) -> np.ndarray:
    return apply_basis(basis_stack(grid, support), pilots)


def data_dictionary(data: np.ndarray, grid: OtfsGrid, support: ChannelSupport) -> np.ndarray:
    return apply_basis(basis_stack(grid, support), data)


def joint_dictionary(data: np.ndarray, pilot: np.ndarray) -> np.ndarray:
    if data.shape[1] != pilot.shape[1]:
        raise ValueError(
            f"Data and pilot dictionaries have {data.shape[1]} and {pilot.shape[1]} columns"
        )
    return np.vstack([data, pilot])


def _mimo_dictionary(blocks: Sequence[np.ndarray], grid, support, transmit_antennas):
    if len(blocks) != transmit_antennas:
        raise ValueError(f"Expected {transmit_antennas} symbol blocks, got {len(blocks)}")
    basis = basis_stack(grid, support)
    return np.hstack([apply_basis(basis, block) for block in blocks])


def mimo_pilot_dictionary(
    pilots: Sequence[np.ndarray], grid: OtfsGrid, support: ChannelSupport, transmit_antennas: int
) -> np.ndarray:
    return _mimo_dictionary(pilots, grid, support, transmit_antennas)


def mimo_data_dictionary(
    data: Sequence[np.ndarray], grid: OtfsGrid, support: ChannelSupport, transmit_antennas: int
) -> np.ndarray:
    return _mimo_dictionary(data, grid, support, transmit_antennas)


def zeta_matrix(grid: OtfsGrid, support: ChannelSupport) -> np.ndarray:
    basis = basis_stack(grid, support)
    return basis.transpose(0, 2, 1).reshape(basis.shape[0], -1).T


def grid_coefficients(
    paths: Sequence[DelayDopplerPath], support: ChannelSupport
) -> np.ndarray:
    """Coefficient vector with each path gain placed on its nearest grid cell."""
    coefficients = np.zeros(support.size, dtype=complex)
    spacing = support.max_doppler / support.doppler_grid_points
    for path in paths:
        if not (
            0 <= path.delay_tap < support.max_delay and 0 <= path.doppler_index < support.max_doppler
        ):
            raise ValueError(
                f"Path at delay {path.delay_tap}, Doppler {path.doppler_index} lies outside the support"
            )
        j = min(int(round(path.doppler_index / spacing)), support.doppler_grid_points - 1)
        coefficients[support.index(path.delay_tap, j)] += path.gain
    return coefficients


@dataclass(eq=False)
class DictionarySet:
    pilot: np.ndarray
    data: np.ndarray | None = None

    @property
    def joint(self) -> np.ndarray:
        if self.data is None:
            raise ValueError("The data dictionary is not known yet")
        return joint_dictionary(self.data, self.pilot)

    @property
    def columns(self) -> int:
        return self.pilot.shape[1]
