from dataclasses import dataclass, field
from enum import Enum
from functools import cache

import numpy as np
import scipy.linalg

from otfsbl.util import NumericalError, check_finite, psd_sqrt


class DetectorRule(Enum):
    ZF_UNCERTAINTY = "zf_uncertainty"
    LMMSE_UNCERTAINTY = "lmmse_uncertainty"


class Modulation(Enum):
    PSK4 = "psk4"
    QAM16 = "qam16"
    QAM64 = "qam64"


@dataclass(frozen=True, eq=False)
class Constellation:
    name: Modulation
    points: np.ndarray = field(repr=False)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(len(self.points)))

    @classmethod
    @cache
    def of(cls, modulation: Modulation) -> "Constellation":
        """Gray-mapped square constellation with unit average power.

        The upper half of the symbol bits selects the in-phase level and the
        lower half the quadrature level; adjacent levels differ in one bit.
        """
        bits = {Modulation.PSK4: 2, Modulation.QAM16: 4, Modulation.QAM64: 6}[modulation]
        levels = 2 ** (bits // 2)
        positions = np.arange(levels)
        gray = positions ^ (positions >> 1)
        amplitude = np.empty(levels)
        amplitude[gray] = 2 * positions - (levels - 1)
        in_phase = amplitude[np.arange(2**bits) >> (bits // 2)]
        quadrature = amplitude[np.arange(2**bits) & (levels - 1)]
        points = in_phase + 1j * quadrature
        return cls(modulation, points / np.sqrt(np.mean(np.abs(points) ** 2)))

    def modulate(self, indices: np.ndarray) -> np.ndarray:
        return self.points[indices]

    def random_indices(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, len(self.points), size=shape)


def demap(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest-point indices; ties go to the lowest index."""
    distances = np.abs(symbols[..., None] - constellation.points) ** 2
    return np.argmin(distances, axis=-1)


def _solve(matrix: np.ndarray, rhs: np.ndarray, name: str) -> np.ndarray:
    check_finite(name, matrix, rhs)
    try:
        return scipy.linalg.solve(matrix, rhs, assume_a="pos")
    except np.linalg.LinAlgError as error:
        raise NumericalError(f"{name} is singular") from error


def _noise_matrix(noise_cov: np.ndarray) -> np.ndarray:
    return np.diag(noise_cov) if noise_cov.ndim == 1 else noise_cov


def lmmse_detect(
    received: np.ndarray, channel: np.ndarray, noise_cov: np.ndarray, data_power: float
) -> np.ndarray:
    """LMMSE detection with known channel; ``noise_cov`` may be a diagonal vector."""
    if received.shape[0] != channel.shape[0]:
        raise ValueError(
            f"Received block has {received.shape[0]} rows, channel has {channel.shape[0]}"
        )
    noise = _noise_matrix(noise_cov)
    try:
        whitened = scipy.linalg.solve(noise, channel, assume_a="pos")
    except np.linalg.LinAlgError as error:
        raise NumericalError("Noise covariance is singular") from error
    adjoint = whitened.conj().T
    normal = adjoint @ channel + np.eye(channel.shape[1]) / data_power
    return _solve(normal, adjoint @ received, "LMMSE normal matrix")


def zf_uncertainty_detect(
    received: np.ndarray, estimate: np.ndarray, uncertainty: np.ndarray
) -> np.ndarray:
    """Least squares on the channel estimate stacked over the uncertainty square root."""
    stacked = np.vstack([estimate, psd_sqrt(uncertainty)])
    rhs = np.vstack([received, np.zeros((uncertainty.shape[0], received.shape[1]))])
    check_finite("zero-forcing system", stacked, rhs)
    solution, _, rank, _ = scipy.linalg.lstsq(stacked, rhs)
    if rank < estimate.shape[1]:
        raise NumericalError("Zero-forcing normal matrix is singular")
    return solution


def lmmse_uncertainty_detect(
    received: np.ndarray,
    estimate: np.ndarray,
    uncertainty: np.ndarray,
    noise_var: float,
    data_power: float,
    rx_pulse: np.ndarray,
) -> np.ndarray:
    """LMMSE detection that folds the channel uncertainty into the receive covariance.

    ``rx_pulse`` is the receive pulse diagonal, tiled over receive antennas for
    stacked channels.
    """
    if rx_pulse.shape[0] != estimate.shape[0]:
        raise ValueError(
            f"Receive pulse of length {rx_pulse.shape[0]} does not match {estimate.shape[0]} rows"
        )
    covariance = (
        estimate @ estimate.conj().T
        + uncertainty
        + np.diag(noise_var / data_power * np.abs(rx_pulse) ** 2)
    )
    return estimate.conj().T @ _solve(covariance, received, "LMMSE receive covariance")
