"""Bayesian Cramer-Rao bounds on the mean squared error of the DD channel."""

from dataclasses import dataclass

import numpy as np

from otfsbl.util import hermitian_inverse, weighted_adjoint


@dataclass(frozen=True, eq=False)
class BcrbInput:
    dictionary: np.ndarray
    noise_cov: np.ndarray
    hyperparameters: np.ndarray
    zeta: np.ndarray
    transmit_antennas: int = 1
    receive_antennas: int = 1

    def __post_init__(self):
        cells = self.zeta.shape[1]
        if self.hyperparameters.shape != (cells,):
            raise ValueError(
                f"Expected {cells} hyperparameters, got shape {self.hyperparameters.shape}"
            )
        if self.dictionary.shape[1] != cells * self.transmit_antennas:
            raise ValueError(
                f"Dictionary has {self.dictionary.shape[1]} columns, expected "
                f"{cells * self.transmit_antennas}"
            )
        if np.any(self.hyperparameters <= 0):
            raise ValueError("Hyperparameters must be positive")


def _inverse_information(bound: BcrbInput) -> np.ndarray:
    adjoint = weighted_adjoint(bound.dictionary, bound.noise_cov)
    prior = np.tile(1 / bound.hyperparameters, bound.transmit_antennas)
    return hermitian_inverse(adjoint @ bound.dictionary + np.diag(prior), "Fisher information")


def bcrb_siso(bound: BcrbInput) -> float:
    inverse = _inverse_information(bound)
    return float(np.real(np.trace(bound.zeta @ inverse @ bound.zeta.conj().T)))


def bcrb_mimo(bound: BcrbInput) -> float:
    # Tr{(I kron zeta)(I_Nr kron J^-1)(I kron zeta)^H} = N_r * sum_t Tr{zeta J^-1[t, t] zeta^H}
    inverse = _inverse_information(bound)
    cells = bound.zeta.shape[1]
    gram = bound.zeta.conj().T @ bound.zeta
    total = sum(
        np.trace(inverse[t * cells : (t + 1) * cells, t * cells : (t + 1) * cells] @ gram)
        for t in range(bound.transmit_antennas)
    )
    return float(bound.receive_antennas * np.real(total))


def true_hyperparameters(coefficients: np.ndarray, floor: float) -> np.ndarray:
    """Second moment of each grid coefficient, averaged over antenna pairs, floored.

    ``coefficients`` is a vector, or a (pairs, cells) array for multiple antennas.
    """
    power = np.abs(np.atleast_2d(coefficients)) ** 2
    return np.maximum(power.mean(axis=0), floor)
