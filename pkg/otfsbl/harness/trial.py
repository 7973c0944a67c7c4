from dataclasses import dataclass, field
from functools import cached_property
from logging import getLogger

import numpy as np

from otfsbl.bcrb import BcrbInput, bcrb_mimo, bcrb_siso, true_hyperparameters
from otfsbl.config import ExperimentConfig, Scheme
from otfsbl.detection import DetectorRule, demap, lmmse_detect
from otfsbl.dictionary import (
    DictionarySet,
    data_dictionary,
    grid_coefficients,
    mimo_data_dictionary,
    mimo_pilot_dictionary,
    pilot_dictionary,
    zeta_matrix,
)
from otfsbl.estimators import (
    EstimationOutput,
    GaussianPosterior,
    da_bl_mimo,
    da_bl_siso,
    initial_data_estimate,
    lmmse_channel_estimate,
    pa_bl_mimo,
    pa_bl_siso,
    reconstruct_dd_channel,
    stack_blocks,
)
from otfsbl.grid import effective_dd_channel
from otfsbl.harness.channels import generate_channel
from otfsbl.harness.metrics import nmse, ser
from otfsbl.modem import MimoChannel, mimo_block_channel, simulate_frame, simulate_mimo_frame
from otfsbl.precoding import DdFrame, decouple, make_precoders, pilot_block
from otfsbl.util import NumericalError, noise_diagonal, vec

logger = getLogger("harness")

DATA_AIDED_RULES = {
    Scheme.DA_BL_ZF: DetectorRule.ZF_UNCERTAINTY,
    Scheme.DA_BL_LMMSE: DetectorRule.LMMSE_UNCERTAINTY,
}


@dataclass
class TrialResult:
    snr_db: float
    snr_index: int
    trial_index: int
    master_seed: int
    nmse: dict[Scheme, float] = field(default_factory=dict)
    mse: dict[Scheme, float] = field(default_factory=dict)
    ser: dict[Scheme, float] = field(default_factory=dict)
    iterations: dict[Scheme, int] = field(default_factory=dict)
    nmse_trajectory: dict[Scheme, list[float]] = field(default_factory=dict)
    bcrb: float = float("nan")
    bcrb_normalized: float = float("nan")
    failures: dict[str, str] = field(default_factory=dict)


def trial_rng(master_seed: int, snr_index: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, snr_index, trial_index]))


class Trial:
    """One channel and frame realization together with everything derived from it."""

    def __init__(self, config: ExperimentConfig, snr_index: int, trial_index: int):
        self.config = config
        self.snr_db = config.snr_db[snr_index]
        self.noise_var = config.noise_variance(self.snr_db)
        self.grid = config.grid
        self.support = config.support
        rng = trial_rng(config.master_seed, snr_index, trial_index)

        self.precoders = make_precoders(
            config.doppler_bins, config.pilot_columns, config.precoder, rng
        )
        self.channel = generate_channel(config, rng)
        constellation = config.constellation
        self.indices = [
            constellation.random_indices(rng, (config.delay_bins, config.data_width))
            for _ in range(config.transmit_antennas)
        ]
        self.frames = [
            DdFrame(
                np.sqrt(config.data_power) * constellation.modulate(indices),
                pilot_block(rng, config.delay_bins, config.pilot_columns, config.pilot_power),
                config.data_power,
                config.pilot_power,
            )
            for indices in self.indices
        ]
        noise_std = np.sqrt(self.noise_var)
        if isinstance(self.channel, MimoChannel):
            self.received = simulate_mimo_frame(
                self.frames, self.precoders, self.channel, self.grid, config.mimo, noise_std, rng
            )
            self.truth = mimo_block_channel(self.channel, self.grid)
        else:
            self.received = simulate_frame(
                self.frames[0], self.precoders, self.channel, self.grid, noise_std, rng
            )
            self.truth = effective_dd_channel(self.grid, self.channel)

        rows = config.delay_bins
        per_antenna = [
            self.received[r * rows : (r + 1) * rows] for r in range(config.receive_antennas)
        ]
        self.pilot_observations = np.column_stack(
            [vec(decouple(block, self.precoders.pilot)) for block in per_antenna]
        )
        self.data_observations = np.column_stack(
            [vec(decouple(block, self.precoders.data)) for block in per_antenna]
        )
        self.received_data = np.vstack(
            [decouple(block, self.precoders.data) for block in per_antenna]
        )
        self.pilot_noise = noise_diagonal(self.noise_var, self.grid.rx_pulse, config.pilot_columns)
        self.data_noise = noise_diagonal(self.noise_var, self.grid.rx_pulse, config.receive_antennas)

    @cached_property
    def pilot_dictionary(self) -> np.ndarray:
        pilots = [frame.pilot for frame in self.frames]
        if self.config.is_mimo:
            return mimo_pilot_dictionary(
                pilots, self.grid, self.support, self.config.transmit_antennas
            )
        return pilot_dictionary(pilots[0], self.grid, self.support)

    @cached_property
    def pilot_posterior(self) -> GaussianPosterior:
        config = self.config
        if config.is_mimo:
            return pa_bl_mimo(
                self.pilot_observations,
                self.pilot_dictionary,
                self.pilot_noise,
                config.em,
                config.transmit_antennas,
                config.receive_antennas,
            )
        return pa_bl_siso(
            self.pilot_observations[:, 0], self.pilot_dictionary, self.pilot_noise, config.em
        )

    @property
    def true_indices(self) -> np.ndarray:
        return np.vstack(self.indices)

    def channel_estimate(self, coefficients: np.ndarray) -> np.ndarray:
        channel = reconstruct_dd_channel(coefficients, self.grid, self.support)
        return stack_blocks(channel) if coefficients.ndim == 2 else channel

    def detect_indices(self, channel: np.ndarray) -> np.ndarray:
        detected = lmmse_detect(
            self.received_data, channel, self.data_noise, self.config.data_power
        )
        return demap(detected / np.sqrt(self.config.data_power), self.config.constellation)

    def conventional(self) -> np.ndarray:
        observations = self.pilot_observations
        if not self.config.is_mimo:
            observations = observations[:, 0]
        return lmmse_channel_estimate(observations, self.pilot_dictionary, self.pilot_noise)

    def data_aided(
        self, rule: DetectorRule, initial: list[np.ndarray] | None = None
    ) -> EstimationOutput:
        """Data-aided estimate, seeded by default with symbols detected from the pilot-aided one."""
        config = self.config
        prior = self.pilot_posterior
        if initial is None:
            _, initial = initial_data_estimate(
                self.data_observations,
                prior,
                self.grid,
                self.support,
                config.data_power,
                self.noise_var,
                config.constellation,
                config.receive_antennas,
            )
        stacked = np.vstack([self.data_observations, self.pilot_observations])
        if config.is_mimo:
            return da_bl_mimo(
                stacked,
                self.pilot_dictionary,
                initial,
                self.grid,
                self.support,
                config.em,
                config.data_power,
                self.noise_var,
                config.constellation,
                prior,
                config.receive_antennas,
                rule,
            )
        return da_bl_siso(
            stacked[:, 0],
            self.pilot_dictionary,
            initial[0],
            rule,
            self.grid,
            self.support,
            config.em,
            config.data_power,
            self.noise_var,
            config.constellation,
            prior,
        )

    def true_coefficients(self) -> np.ndarray:
        """Grid coefficients of the true channel, one row per antenna pair."""
        if isinstance(self.channel, MimoChannel):
            config = self.config
            return np.stack(
                [
                    grid_coefficients(self.channel.paths(r, t), self.support)
                    for r in range(config.receive_antennas)
                    for t in range(config.transmit_antennas)
                ]
            )
        return grid_coefficients(self.channel, self.support)

    def bound(self) -> float:
        """BCRB with the true data symbols known, as the data-aided estimator's benchmark."""
        config = self.config
        data = [frame.data for frame in self.frames]
        if config.is_mimo:
            data_block = mimo_data_dictionary(
                data, self.grid, self.support, config.transmit_antennas
            )
        else:
            data_block = data_dictionary(data[0], self.grid, self.support)
        bound = BcrbInput(
            DictionarySet(self.pilot_dictionary, data_block).joint,
            noise_diagonal(self.noise_var, self.grid.rx_pulse, config.doppler_bins),
            true_hyperparameters(self.true_coefficients(), config.em.hyperparameter_floor),
            zeta_matrix(self.grid, self.support),
            config.transmit_antennas,
            config.receive_antennas,
        )
        return bcrb_mimo(bound) if config.is_mimo else bcrb_siso(bound)


def _record_estimate(result: TrialResult, trial: Trial, scheme: Scheme, channel: np.ndarray):
    result.nmse[scheme] = nmse(channel, trial.truth)
    result.mse[scheme] = float(np.linalg.norm(channel - trial.truth) ** 2)


def _record_trajectory(
    result: TrialResult, trial: Trial, scheme: Scheme, posterior: GaussianPosterior
):
    result.nmse_trajectory[scheme] = [
        nmse(trial.channel_estimate(mean), trial.truth) for mean in posterior.estimates
    ]


def _run_scheme(result: TrialResult, trial: Trial, scheme: Scheme):
    match scheme:
        case Scheme.MMSE:
            channel = trial.channel_estimate(trial.conventional())
            _record_estimate(result, trial, scheme, channel)
            detected = trial.detect_indices(channel)
        case Scheme.PA_BL:
            posterior = trial.pilot_posterior
            channel = trial.channel_estimate(posterior.mean)
            _record_estimate(result, trial, scheme, channel)
            result.iterations[scheme] = posterior.iterations
            _record_trajectory(result, trial, scheme, posterior)
            detected = trial.detect_indices(channel)
        case Scheme.DA_BL_ZF | Scheme.DA_BL_LMMSE:
            output = trial.data_aided(DATA_AIDED_RULES[scheme])
            _record_estimate(result, trial, scheme, output.channel)
            result.iterations[scheme] = output.iterations
            _record_trajectory(result, trial, scheme, output.posterior)
            detected = (
                np.vstack(output.detected)
                if isinstance(output.detected, list)
                else output.detected
            )
        case Scheme.PERFECT_CSI:
            detected = trial.detect_indices(trial.truth)
    result.ser[scheme] = ser(detected, trial.true_indices)


def run_trial(config: ExperimentConfig, snr_index: int, trial_index: int) -> TrialResult:
    """Simulate one frame at the indexed SNR and evaluate every configured scheme.

    A numerical failure in one scheme is recorded and leaves that scheme's
    metrics as NaN; the remaining schemes still run.
    """
    trial = Trial(config, snr_index, trial_index)
    result = TrialResult(trial.snr_db, snr_index, trial_index, config.master_seed)
    for scheme in config.schemes:
        try:
            _run_scheme(result, trial, scheme)
        except NumericalError as error:
            logger.warning(
                "Scheme %s failed at %g dB, trial %d: %s",
                scheme.value,
                trial.snr_db,
                trial_index,
                error.message,
            )
            result.failures[scheme.value] = error.message
            result.nmse_trajectory.pop(scheme, None)
            for metrics in (result.nmse, result.mse, result.ser, result.iterations):
                metrics[scheme] = float("nan")
    try:
        result.bcrb = trial.bound()
        result.bcrb_normalized = result.bcrb / float(np.linalg.norm(trial.truth) ** 2)
    except NumericalError as error:
        logger.warning("BCRB failed at %g dB, trial %d: %s", trial.snr_db, trial_index, error.message)
        result.failures["bcrb"] = error.message
    return result
