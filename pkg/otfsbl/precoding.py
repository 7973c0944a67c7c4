"""Semi-orthogonal pilot/data precoders, frame superposition and decoupling."""

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
from scipy.stats import unitary_group

ORTHOGONALITY_TOLERANCE = 1e-10


class UnitarySource(Enum):
    FOURIER = "fourier"
    IDENTITY = "identity"
    RANDOM = "random"


@dataclass(frozen=True, eq=False)
class PrecoderPair:
    pilot: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if self.pilot.shape[0] != self.data.shape[0]:
            raise ValueError(
                f"Precoders disagree on frame length: {self.pilot.shape[0]} and {self.data.shape[0]}"
            )
        if self.pilot_columns + self.data_columns != self.frame_columns:
            raise ValueError("Pilot and data precoders must together span the frame")
        identities = (
            (self.pilot.conj().T @ self.pilot, np.eye(self.pilot_columns)),
            (self.data.conj().T @ self.data, np.eye(self.data_columns)),
            (self.pilot.conj().T @ self.data, 0),
        )
        for product, expected in identities:
            if np.linalg.norm(product - expected) >= ORTHOGONALITY_TOLERANCE:
                raise ValueError("Precoders are not semi-orthogonal")

    @property
    def frame_columns(self) -> int:
        return self.pilot.shape[0]

    @property
    def pilot_columns(self) -> int:
        return self.pilot.shape[1]

    @property
    def data_columns(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class DdFrame:
    data: np.ndarray
    pilot: np.ndarray
    data_power: float
    pilot_power: float

    def __post_init__(self):
        if self.data.shape[0] != self.pilot.shape[0]:
            raise ValueError(
                f"Data and pilot blocks have different delay sizes: {self.data.shape[0]} and {self.pilot.shape[0]}"
            )
        if abs(self.data_power + self.pilot_power - 1) > 1e-9:
            raise ValueError(
                f"Data and pilot powers must sum to one, got {self.data_power} + {self.pilot_power}"
            )

    @property
    def mean_power(self) -> float:
        """Average per-entry power of the superimposed frame."""
        data_columns, pilot_columns = self.data.shape[1], self.pilot.shape[1]
        return (data_columns * self.data_power + pilot_columns * self.pilot_power) / (
            data_columns + pilot_columns
        )


def unitary_matrix(size: int, source: UnitarySource, rng: np.random.Generator | None = None):
    match source:
        case UnitarySource.FOURIER:
            return scipy.linalg.dft(size, scale="sqrtn")
        case UnitarySource.IDENTITY:
            return np.eye(size, dtype=complex)
        case UnitarySource.RANDOM:
            return unitary_group.rvs(size, random_state=rng if rng is not None else 0)


def make_precoders(
    columns: int,
    pilot_columns: int,
    source: UnitarySource = UnitarySource.FOURIER,
    rng: np.random.Generator | None = None,
) -> PrecoderPair:
    if not 1 <= pilot_columns < columns:
        raise ValueError(f"Pilot columns must lie in [1, {columns}), got {pilot_columns}")
    unitary = unitary_matrix(columns, source, rng)
    return PrecoderPair(unitary[:, :pilot_columns], unitary[:, pilot_columns:])


def pilot_block(rng: np.random.Generator, rows: int, columns: int, power: float):
    """Unit-modulus 4-PSK pilots scaled to ``power``."""
    phases = rng.integers(0, 4, size=(rows, columns))
    return np.sqrt(power) * np.exp(1j * np.pi * (2 * phases + 1) / 4)


def superimpose(frame: DdFrame, pc: PrecoderPair) -> np.ndarray:
    if frame.data.shape[1] != pc.data_columns or frame.pilot.shape[1] != pc.pilot_columns:
        raise ValueError(
            f"Frame blocks {frame.data.shape} and {frame.pilot.shape} do not match precoders "
            f"with {pc.data_columns} data and {pc.pilot_columns} pilot columns"
        )
    return frame.data @ pc.data.conj().T + frame.pilot @ pc.pilot.conj().T


def decouple(received: np.ndarray, precoder: np.ndarray) -> np.ndarray:
    if received.shape[1] != precoder.shape[0]:
        raise ValueError(
            f"Cannot decouple a {received.shape} frame with a {precoder.shape} precoder"
        )
    return received @ precoder
