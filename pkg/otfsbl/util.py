import numpy as np
import scipy.linalg


class NumericalError(Exception):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return matrix.reshape(-1, order="F")


def unvec(vector: np.ndarray, rows: int) -> np.ndarray:
    if vector.size % rows:
        raise ValueError(f"Cannot reshape {vector.size} entries into {rows} rows")
    return vector.reshape(rows, -1, order="F")


def complex_noise(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Circular complex Gaussian samples with per-entry variance ``std**2``."""
    if std < 0:
        raise ValueError(f"Noise standard deviation must be nonnegative, got {std}")
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def noise_diagonal(noise_var: float, rx_pulse: np.ndarray, blocks: int) -> np.ndarray:
    """Diagonal of sigma^2 (I_blocks kron P_rx P_rx^H) for a diagonal P_rx."""
    return noise_var * np.tile(np.abs(rx_pulse) ** 2, blocks)


def check_finite(name: str, *arrays: np.ndarray):
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NumericalError(f"Non-finite values encountered in {name}")


def weighted_adjoint(omega: np.ndarray, noise_cov: np.ndarray) -> np.ndarray:
    """Return Omega^H R^-1. ``noise_cov`` is either a diagonal vector or a full matrix."""
    if noise_cov.ndim == 1:
        if np.any(noise_cov <= 0):
            raise NumericalError("Noise covariance must be positive definite")
        return omega.conj().T / noise_cov
    try:
        return scipy.linalg.solve(noise_cov, omega, assume_a="pos").conj().T
    except np.linalg.LinAlgError as error:
        raise NumericalError("Noise covariance is not positive definite") from error


def hermitian_inverse(matrix: np.ndarray, name: str) -> np.ndarray:
    """Inverse of a Hermitian positive definite matrix through its Cholesky factor."""
    check_finite(name, matrix)
    try:
        factor = scipy.linalg.cho_factor(matrix)
    except np.linalg.LinAlgError as error:
        raise NumericalError(f"{name} is not positive definite") from error
    inverse = scipy.linalg.cho_solve(factor, np.eye(matrix.shape[0], dtype=matrix.dtype))
    return (inverse + inverse.conj().T) / 2


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Hermitian square root with negative eigenvalues clamped to zero."""
    values, vectors = scipy.linalg.eigh((matrix + matrix.conj().T) / 2)
    return (vectors * np.sqrt(np.clip(values, 0, None))) @ vectors.conj().T
