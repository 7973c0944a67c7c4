"""Channel estimators: conventional MMSE and the pilot-aided and data-aided
Bayesian learning EM iterations, with their single- and multi-antenna forms.

All estimators share one EM core. Observations are arranged as a matrix with
one column per receive antenna and the coefficients of every transmit antenna
are stacked antenna-major, so the single-antenna case is the 1x1 special case
of the same code. One hyperparameter per grid cell is shared across all
antenna pairs, which is what couples the antenna pairs into a row group.
"""

from dataclasses import dataclass, field
from enum import Enum
from logging import getLogger
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from otfsbl.detection import (
    Constellation,
    DetectorRule,
    demap,
    lmmse_uncertainty_detect,
    zf_uncertainty_detect,
)
from otfsbl.dictionary import DictionarySet, apply_basis, basis_stack, zeta_matrix
from otfsbl.grid import ChannelSupport, OtfsGrid
from otfsbl.util import (
    NumericalError,
    check_finite,
    hermitian_inverse,
    noise_diagonal,
    unvec,
    weighted_adjoint,
)

logger = getLogger("estimators")


class EmSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tolerance: float = Field(1e-6, gt=0)
    max_iterations: int = Field(50, ge=1)
    hyperparameter_floor: float = Field(1e-12, gt=0)


class UncertaintySide(Enum):
    # E[H^H H] - Hhat^H Hhat, acting on transmitted symbols
    INPUT = "input"
    # E[H H^H] - Hhat Hhat^H, acting on received samples
    OUTPUT = "output"


@dataclass(eq=False)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray
    hyperparameters: np.ndarray
    iterations: int = 0
    converged: bool = False
    history: list[float] = field(default_factory=list)
    # posterior mean after every iteration, oldest first
    estimates: list[np.ndarray] = field(default_factory=list)

    @property
    def transmit_antennas(self) -> int:
        return self.covariance.shape[0] // self.hyperparameters.size


@dataclass(eq=False)
class EstimationOutput:
    coefficients: np.ndarray
    channel: np.ndarray
    uncertainty: np.ndarray
    iterations: int
    posterior: GaussianPosterior
    detected: list[np.ndarray] | None = None
    pilot_fallback: bool = False


def lmmse_channel_estimate(
    observations: np.ndarray,
    dictionary: np.ndarray,
    noise_cov: np.ndarray,
    prior_cov: np.ndarray | None = None,
) -> np.ndarray:
    adjoint = weighted_adjoint(dictionary, noise_cov)
    prior_precision = (
        np.eye(dictionary.shape[1])
        if prior_cov is None
        else hermitian_inverse(prior_cov, "channel prior covariance")
    )
    precision = adjoint @ dictionary + prior_precision
    return hermitian_inverse(precision, "LMMSE precision") @ (adjoint @ observations)


def _expectation(adjoint, dictionary, observations, prior_precision):
    covariance = hermitian_inverse(
        adjoint @ dictionary + np.diag(prior_precision), "posterior precision"
    )
    mean = covariance @ (adjoint @ observations)
    check_finite("posterior mean", mean)
    return mean, covariance


def _maximization(mean, covariance, cells: int, floor: float) -> np.ndarray:
    transmit = covariance.shape[0] // cells
    power = (np.abs(mean) ** 2).reshape(transmit, cells, -1).mean(axis=(0, 2))
    spread = np.real(np.diag(covariance)).reshape(transmit, cells).mean(axis=0)
    return np.maximum(spread + power, floor)


class _EmLoop:
    """Bookkeeping for the hyperparameter iteration and its stopping rule."""

    def __init__(self, settings: EmSettings, hyperparameters: np.ndarray):
        self.settings = settings
        self.hyperparameters = hyperparameters
        self.history: list[float] = []

    def __iter__(self):
        for iteration in range(1, self.settings.max_iterations + 1):
            yield iteration
            if self.converged:
                break

    @property
    def converged(self) -> bool:
        return bool(self.history) and self.history[-1] < self.settings.tolerance

    def update(self, hyperparameters: np.ndarray):
        change = float(np.sum((hyperparameters - self.hyperparameters) ** 2))
        if not np.isfinite(change):
            raise NumericalError("Hyperparameter update diverged")
        logger.debug("EM iteration %d: hyperparameter change %.3e", len(self.history) + 1, change)
        self.history.append(change)
        self.hyperparameters = hyperparameters


def _initial_hyperparameters(cells: int, initial: np.ndarray | None) -> np.ndarray:
    if initial is None:
        return np.ones(cells)
    if initial.shape != (cells,) or np.any(initial <= 0):
        raise ValueError(f"Initial hyperparameters must be {cells} positive values")
    return initial.astype(float)


def _pilot_aided(observations, dictionary, noise_cov, settings, transmit, initial):
    if dictionary.shape[1] % transmit:
        raise ValueError(
            f"Dictionary width {dictionary.shape[1]} is not a multiple of {transmit} antennas"
        )
    if observations.shape[0] != dictionary.shape[0]:
        raise ValueError(
            f"Observations have {observations.shape[0]} rows, dictionary has {dictionary.shape[0]}"
        )
    cells = dictionary.shape[1] // transmit
    adjoint = weighted_adjoint(dictionary, noise_cov)
    loop = _EmLoop(settings, _initial_hyperparameters(cells, initial))
    estimates = []
    for _ in loop:
        mean, covariance = _expectation(
            adjoint, dictionary, observations, np.tile(1 / loop.hyperparameters, transmit)
        )
        estimates.append(mean)
        loop.update(
            _maximization(mean, covariance, cells, settings.hyperparameter_floor)
        )
    return GaussianPosterior(
        mean,
        covariance,
        loop.hyperparameters,
        len(loop.history),
        loop.converged,
        loop.history,
        estimates,
    )


def pa_bl_siso(
    observations: np.ndarray,
    dictionary: np.ndarray,
    noise_cov: np.ndarray,
    settings: EmSettings = EmSettings(),
    initial: np.ndarray | None = None,
) -> GaussianPosterior:
    posterior = _pilot_aided(observations[:, None], dictionary, noise_cov, settings, 1, initial)
    posterior.mean = posterior.mean[:, 0]
    posterior.estimates = [estimate[:, 0] for estimate in posterior.estimates]
    return posterior


def pa_bl_mimo(
    observations: np.ndarray,
    dictionary: np.ndarray,
    noise_cov: np.ndarray,
    settings: EmSettings,
    transmit_antennas: int,
    receive_antennas: int,
    initial: np.ndarray | None = None,
) -> GaussianPosterior:
    if observations.ndim != 2 or observations.shape[1] != receive_antennas:
        raise ValueError(
            f"Expected one observation column per receive antenna ({receive_antennas}), "
            f"got shape {observations.shape}"
        )
    return _pilot_aided(
        observations, dictionary, noise_cov, settings, transmit_antennas, initial
    )


def stack_blocks(blocks: np.ndarray) -> np.ndarray:
    """Arrange (receive, transmit, M, M) blocks into one (M N_r, M N_t) matrix."""
    receive, transmit, rows, columns = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(receive * rows, transmit * columns)


def reconstruct_dd_channel(
    coefficients: np.ndarray, grid: OtfsGrid, support: ChannelSupport
) -> np.ndarray:
    """Rebuild the DD channel from grid coefficients.

    A coefficient vector gives one M x M matrix. A (cells * N_t, N_r) matrix
    gives an array of shape (N_r, N_t, M, M) holding every antenna pair.
    """
    basis = basis_stack(grid, support)
    cells = support.size
    if coefficients.ndim == 1:
        if coefficients.size != cells:
            raise ValueError(f"Expected {cells} coefficients, got {coefficients.size}")
        return np.einsum("k,kmn->mn", coefficients, basis)
    if coefficients.shape[0] % cells:
        raise ValueError(
            f"Coefficient rows {coefficients.shape[0]} are not a multiple of {cells} cells"
        )
    receive = coefficients.shape[1]
    per_pair = coefficients.T.reshape(receive, -1, cells)
    return np.einsum("rtk,kmn->rtmn", per_pair, basis)


def xi_matrix(
    covariance: np.ndarray,
    zeta: np.ndarray,
    delay_bins: int,
    receive_antennas: int = 1,
    side: UncertaintySide = UncertaintySide.INPUT,
) -> np.ndarray:
    """Block-trace compression of the DD channel error covariance.

    ``covariance`` is the coefficient covariance shared by every receive
    antenna. The INPUT side has one M x M block per pair of transmit antennas;
    the OUTPUT side is block diagonal over receive antennas.
    """
    cells = zeta.shape[1]
    transmit = covariance.shape[0] // cells
    hermitian = (covariance + covariance.conj().T) / 2
    eigenvalues = np.linalg.eigvalsh(hermitian)
    if eigenvalues.min() < -1e-8 * max(np.real(np.trace(hermitian)), 0):
        raise NumericalError("Posterior covariance is not positive semidefinite")
    # basis[c, m, k] is entry (m, c) of the k-th basis matrix
    basis = zeta.reshape(delay_bins, delay_bins, cells)

    def block(t: int, u: int) -> np.ndarray:
        return hermitian[t * cells : (t + 1) * cells, u * cells : (u + 1) * cells]

    match side:
        case UncertaintySide.INPUT:
            # block (t, u) holds sum_m E[conj(e_t[m, p]) e_u[m, q]]
            blocks = [
                [
                    receive_antennas
                    * np.einsum(
                        "qmk,kl,pml->pq", basis, block(u, t), basis.conj(), optimize=True
                    )
                    for u in range(transmit)
                ]
                for t in range(transmit)
            ]
            uncertainty = np.block(blocks)
        case UncertaintySide.OUTPUT:
            per_antenna = sum(
                np.einsum("cak,kl,cbl->ab", basis, block(t, t), basis.conj(), optimize=True)
                for t in range(transmit)
            )
            uncertainty = np.kron(np.eye(receive_antennas), per_antenna)
    return (uncertainty + uncertainty.conj().T) / 2


def _uncertainty_side(rule: DetectorRule) -> UncertaintySide:
    return (
        UncertaintySide.INPUT
        if rule == DetectorRule.ZF_UNCERTAINTY
        else UncertaintySide.OUTPUT
    )


def estimation_output(
    posterior: GaussianPosterior,
    grid: OtfsGrid,
    support: ChannelSupport,
    receive_antennas: int = 1,
    side: UncertaintySide = UncertaintySide.OUTPUT,
) -> EstimationOutput:
    channel = reconstruct_dd_channel(posterior.mean, grid, support)
    if posterior.mean.ndim == 2:
        channel = stack_blocks(channel)
    uncertainty = xi_matrix(
        posterior.covariance, zeta_matrix(grid, support), grid.delay_bins, receive_antennas, side
    )
    return EstimationOutput(posterior.mean, channel, uncertainty, posterior.iterations, posterior)


def _stack_received(received_data: np.ndarray, delay_bins: int) -> np.ndarray:
    """Turn per-antenna data observation columns into a (M N_r, K_1) block."""
    return np.vstack(
        [unvec(received_data[:, r], delay_bins) for r in range(received_data.shape[1])]
    )


def _detect(rule, received, estimate, grid, data_power, noise_var, receive_antennas):
    match rule:
        case DetectorRule.ZF_UNCERTAINTY:
            return zf_uncertainty_detect(received, estimate.channel, estimate.uncertainty)
        case DetectorRule.LMMSE_UNCERTAINTY:
            return lmmse_uncertainty_detect(
                received,
                estimate.channel,
                estimate.uncertainty,
                noise_var,
                data_power,
                np.tile(grid.rx_pulse, receive_antennas),
            )


def _slice(detected, constellation, data_power, delay_bins):
    """Hard decisions per transmit antenna, as (indices, symbol blocks)."""
    indices = demap(detected / np.sqrt(data_power), constellation)
    blocks = np.split(indices, detected.shape[0] // delay_bins, axis=0)
    return blocks, [np.sqrt(data_power) * constellation.modulate(block) for block in blocks]


def initial_data_estimate(
    received_data: np.ndarray,
    posterior: GaussianPosterior,
    grid: OtfsGrid,
    support: ChannelSupport,
    data_power: float,
    noise_var: float,
    constellation: Constellation,
    receive_antennas: int = 1,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Detect data with the pilot-aided estimate to seed the data-aided iteration.

    ``received_data`` holds one vectorized data observation per receive antenna
    column. Returns per-antenna symbol indices and the matching symbol blocks.
    """
    estimate = estimation_output(posterior, grid, support, receive_antennas)
    detected = lmmse_uncertainty_detect(
        _stack_received(received_data, grid.delay_bins),
        estimate.channel,
        estimate.uncertainty,
        noise_var,
        data_power,
        np.tile(grid.rx_pulse, receive_antennas),
    )
    return _slice(detected, constellation, data_power, grid.delay_bins)


def _data_noise_scale(observations, dictionary, noise, mean, covariance, fitted: bool) -> float:
    """Estimate of the data-row noise level, as a multiple of the thermal level.

    Wrong symbol decisions leave a model mismatch in the data rows that acts as
    extra noise; the scale never drops below one. A ``fitted`` posterior has
    already seen these rows and gives the EM update; otherwise its spread is
    part of the prediction error and is taken out.
    """
    residual = observations - dictionary @ mean
    spread = np.real(np.sum((dictionary @ covariance) * dictionary.conj(), axis=1))
    receive = observations.shape[1]
    power = np.sum(np.abs(residual) ** 2, axis=1)
    power = power + receive * spread if fitted else power - receive * spread
    return max(1.0, float(np.mean(power / noise)) / receive)


def log_evidence(observations, dictionary, noise, prior_variances, mean) -> float:
    """Log marginal likelihood of the observations, up to a constant.

    ``mean`` is the posterior mean under the same model, so that no
    observation-sized matrix is factored: the determinant lemma gives the
    log-determinant and y^H C^-1 y reduces to y^H R^-1 (y - Phi mu).
    """
    precision = weighted_adjoint(dictionary, noise) @ dictionary + np.diag(1 / prior_variances)
    try:
        factor = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as error:
        raise NumericalError("Posterior precision is not positive definite") from error
    precision_logdet = 2 * np.sum(np.log(np.real(np.diag(factor))))
    log_det = np.sum(np.log(noise)) + np.sum(np.log(prior_variances)) + precision_logdet
    residual = observations - dictionary @ mean
    quadratic = np.real(np.sum(observations.conj() * residual / noise[:, None]))
    return float(-observations.shape[1] * log_det - quadratic)


def _data_aided(
    observations: np.ndarray,
    pilot_dictionary: np.ndarray,
    initial_data: Sequence[np.ndarray],
    rule: DetectorRule,
    grid: OtfsGrid,
    support: ChannelSupport,
    settings: EmSettings,
    data_power: float,
    noise_var: float,
    constellation: Constellation,
    prior: GaussianPosterior,
    receive_antennas: int,
) -> EstimationOutput:
    delay_bins = grid.delay_bins
    side = _uncertainty_side(rule)
    data_columns = initial_data[0].shape[1]
    if data_columns == 0:
        return estimation_output(prior, grid, support, receive_antennas, side)

    transmit = len(initial_data)
    cells = support.size
    data_rows = delay_bins * data_columns
    pilot_columns = pilot_dictionary.shape[0] // delay_bins
    if observations.shape[0] != data_rows + pilot_dictionary.shape[0]:
        raise ValueError(
            f"Stacked observations have {observations.shape[0]} rows, expected "
            f"{data_rows} data rows and {pilot_dictionary.shape[0]} pilot rows"
        )
    basis = basis_stack(grid, support)
    thermal = noise_diagonal(noise_var, grid.rx_pulse, data_columns + pilot_columns)
    received = _stack_received(observations[:data_rows], delay_bins)
    data = list(initial_data)
    indices: list[np.ndarray] = []

    def data_block(blocks):
        return np.hstack([apply_basis(basis, block) for block in blocks])

    scale = _data_noise_scale(
        observations[:data_rows],
        data_block(data),
        thermal[:data_rows],
        prior.mean.reshape(transmit * cells, -1),
        prior.covariance,
        fitted=False,
    )
    loop = _EmLoop(settings, prior.hyperparameters.copy())
    estimates = []
    evidence = []
    for _ in loop:
        dictionary = DictionarySet(pilot_dictionary, data_block(data)).joint
        noise = thermal.copy()
        noise[:data_rows] *= scale
        variances = np.tile(loop.hyperparameters, transmit)
        mean, covariance = _expectation(
            weighted_adjoint(dictionary, noise), dictionary, observations, 1 / variances
        )
        estimates.append(mean)
        evidence.append(log_evidence(observations, dictionary, noise, variances, mean))
        loop.update(_maximization(mean, covariance, cells, settings.hyperparameter_floor))
        scale = _data_noise_scale(
            observations[:data_rows],
            dictionary[:data_rows],
            thermal[:data_rows],
            mean,
            covariance,
            fitted=True,
        )
        logger.debug("Data-aided evidence %.4f, data noise scale %.3f", evidence[-1], scale)
        estimate = estimation_output(
            GaussianPosterior(
                mean,
                covariance,
                loop.hyperparameters,
                len(loop.history),
                loop.converged,
                loop.history,
                estimates,
            ),
            grid,
            support,
            receive_antennas,
            side,
        )
        detected = _detect(rule, received, estimate, grid, data_power, noise_var, receive_antennas)
        indices, data = _slice(detected, constellation, data_power, delay_bins)

    # the first E-step runs on the pilot-aided hyperparameters and initial decisions
    if evidence[-1] < evidence[0]:
        logger.debug(
            "Data-aided evidence fell from %.4f to %.4f; keeping the pilot-aided estimate",
            evidence[0],
            evidence[-1],
        )
        estimate = estimation_output(prior, grid, support, receive_antennas, side)
        detected = _detect(rule, received, estimate, grid, data_power, noise_var, receive_antennas)
        indices, _ = _slice(detected, constellation, data_power, delay_bins)
        estimate.pilot_fallback = True

    estimate.detected = indices
    return estimate


def da_bl_siso(
    observations: np.ndarray,
    pilot_dictionary: np.ndarray,
    initial_data: np.ndarray,
    rule: DetectorRule,
    grid: OtfsGrid,
    support: ChannelSupport,
    settings: EmSettings,
    data_power: float,
    noise_var: float,
    constellation: Constellation,
    prior: GaussianPosterior,
) -> EstimationOutput:
    """Data-aided estimation from the stacked observation [y_data; y_pilot].

    ``prior`` is the completed pilot-aided posterior whose hyperparameters seed
    the iteration; ``initial_data`` is the symbol block detected with it.
    """
    output = _data_aided(
        observations[:, None],
        pilot_dictionary,
        [initial_data],
        rule,
        grid,
        support,
        settings,
        data_power,
        noise_var,
        constellation,
        prior,
        1,
    )
    if output.coefficients.ndim == 2:
        output.coefficients = output.posterior.mean = output.coefficients[:, 0]
        output.posterior.estimates = [estimate[:, 0] for estimate in output.posterior.estimates]
    if output.detected is not None:
        output.detected = output.detected[0]
    return output


def da_bl_mimo(
    observations: np.ndarray,
    pilot_dictionary: np.ndarray,
    initial_data: Sequence[np.ndarray],
    grid: OtfsGrid,
    support: ChannelSupport,
    settings: EmSettings,
    data_power: float,
    noise_var: float,
    constellation: Constellation,
    prior: GaussianPosterior,
    receive_antennas: int,
    rule: DetectorRule = DetectorRule.LMMSE_UNCERTAINTY,
) -> EstimationOutput:
    """Row-group data-aided estimation; ``observations`` has one column per receive antenna."""
    if observations.ndim != 2 or observations.shape[1] != receive_antennas:
        raise ValueError(
            f"Expected one observation column per receive antenna ({receive_antennas}), "
            f"got shape {observations.shape}"
        )
    return _data_aided(
        observations,
        pilot_dictionary,
        initial_data,
        rule,
        grid,
        support,
        settings,
        data_power,
        noise_var,
        constellation,
        prior,
        receive_antennas,
    )
