"""Deterministic invariant checks run on the sizes of an experiment config."""

from dataclasses import dataclass
from logging import getLogger
from typing import Callable

import numpy as np

from otfsbl.config import ExperimentConfig
from otfsbl.dictionary import (
    data_dictionary,
    grid_coefficients,
    joint_dictionary,
    mimo_pilot_dictionary,
    pilot_dictionary,
    zeta_matrix,
)
from otfsbl.estimators import UncertaintySide, reconstruct_dd_channel, xi_matrix
from otfsbl.grid import DelayDopplerPath, effective_dd_channel, permutation_matrix
from otfsbl.modem import (
    MimoChannel,
    apply_td_channel,
    mimo_block_channel,
    otfs_modulate,
    sample_level_oracle,
    simulate_frame,
    simulate_mimo_frame,
)
from otfsbl.precoding import DdFrame, decouple, make_precoders, pilot_block, superimpose
from otfsbl.util import complex_noise, vec

logger = getLogger("validation")

TOLERANCE = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _relative(actual: np.ndarray, expected: np.ndarray) -> float:
    return float(np.linalg.norm(actual - expected) / max(np.linalg.norm(expected), 1.0))


def _compare(name: str, actual: np.ndarray, expected: np.ndarray, tolerance=TOLERANCE):
    error = _relative(actual, expected)
    return CheckResult(name, error < tolerance, f"error {error:.3g} (tolerance {tolerance:g})")


class _Fixture:
    """Random frame and on-grid channel shared by the checks."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.grid = config.grid
        self.support = config.support
        self.rng = np.random.default_rng(config.master_seed)
        self.precoders = make_precoders(
            config.doppler_bins, config.pilot_columns, config.precoder, self.rng
        )
        self.frame = self.random_frame()
        cells = self.rng.choice(self.support.size, size=min(3, self.support.size), replace=False)
        self.paths = [
            DelayDopplerPath(
                int(cell // self.support.doppler_grid_points),
                self.support.doppler_exponent(int(cell % self.support.doppler_grid_points)),
                complex(complex_noise(self.rng, (), 1.0)),
            )
            for cell in cells
        ]
        self.channel = effective_dd_channel(self.grid, self.paths)

    def random_frame(self) -> DdFrame:
        config = self.config
        data = np.sqrt(config.data_power) * config.constellation.modulate(
            config.constellation.random_indices(self.rng, (config.delay_bins, config.data_width))
        )
        pilot = pilot_block(self.rng, config.delay_bins, config.pilot_columns, config.pilot_power)
        return DdFrame(data, pilot, config.data_power, config.pilot_power)

    def received(self) -> np.ndarray:
        return simulate_frame(self.frame, self.precoders, self.paths, self.grid, 0.0, self.rng)


def check_frame_timing(fixture: _Fixture) -> CheckResult:
    product = fixture.grid.symbol_duration * fixture.grid.subcarrier_spacing
    return CheckResult("T * subcarrier spacing = 1", abs(product - 1) < 1e-12, f"product {product!r}")


def check_permutation_order(fixture: _Fixture) -> CheckResult:
    size = fixture.grid.delay_bins
    power = np.linalg.matrix_power(permutation_matrix(size), size)
    return _compare("cyclic shift of order M", power, np.eye(size))


def check_precoders(fixture: _Fixture) -> CheckResult:
    pc = fixture.precoders
    errors = [
        _relative(pc.pilot.conj().T @ pc.pilot, np.eye(pc.pilot_columns)),
        _relative(pc.data.conj().T @ pc.data, np.eye(pc.data_columns)),
        float(np.linalg.norm(pc.pilot.conj().T @ pc.data)),
    ]
    return CheckResult(
        "precoder semi-orthogonality", max(errors) < TOLERANCE, f"max error {max(errors):.3g}"
    )


def check_decoupling(fixture: _Fixture) -> CheckResult:
    received = fixture.received()
    frame, pc = fixture.frame, fixture.precoders
    error = max(
        _relative(decouple(received, pc.data), fixture.channel @ frame.data),
        _relative(decouple(received, pc.pilot), fixture.channel @ frame.pilot),
    )
    return CheckResult("pilot and data decoupling", error < TOLERANCE, f"error {error:.3g}")


def check_pipeline(fixture: _Fixture) -> CheckResult:
    expected = fixture.channel @ superimpose(fixture.frame, fixture.precoders)
    return _compare("modem chain matches the DD matrix model", fixture.received(), expected)


def check_sample_level(fixture: _Fixture) -> CheckResult:
    signal = otfs_modulate(superimpose(fixture.frame, fixture.precoders), fixture.grid)
    received = apply_td_channel(signal, fixture.paths, fixture.grid, 0.0, fixture.rng)
    expected = np.column_stack(
        [
            sample_level_oracle(signal[:, n], fixture.paths, fixture.grid, n)
            for n in range(signal.shape[1])
        ]
    )
    return _compare("time-domain channel matches the sample recursion", received, expected)


def check_dictionaries(fixture: _Fixture) -> CheckResult:
    grid, support, frame = fixture.grid, fixture.support, fixture.frame
    coefficients = grid_coefficients(fixture.paths, support)
    pilot = pilot_dictionary(frame.pilot, grid, support)
    data = data_dictionary(frame.data, grid, support)
    received = fixture.received()
    error = max(
        _relative(pilot @ coefficients, vec(decouple(received, fixture.precoders.pilot))),
        _relative(data @ coefficients, vec(decouple(received, fixture.precoders.data))),
        _relative(
            joint_dictionary(data, pilot) @ coefficients,
            np.concatenate([vec(fixture.channel @ frame.data), vec(fixture.channel @ frame.pilot)]),
        ),
    )
    return CheckResult("dictionaries match the simulated outputs", error < TOLERANCE, f"error {error:.3g}")


def check_reconstruction(fixture: _Fixture) -> CheckResult:
    coefficients = grid_coefficients(fixture.paths, fixture.support)
    zeta = zeta_matrix(fixture.grid, fixture.support)
    rebuilt = reconstruct_dd_channel(coefficients, fixture.grid, fixture.support)
    error = max(
        _relative(rebuilt, fixture.channel), _relative(zeta @ coefficients, vec(fixture.channel))
    )
    return CheckResult("grid coefficients rebuild the channel", error < TOLERANCE, f"error {error:.3g}")


def check_uncertainty(fixture: _Fixture) -> CheckResult:
    config = fixture.config
    cells = fixture.support.size * config.transmit_antennas
    factor = complex_noise(fixture.rng, (cells, cells), 1.0)
    covariance = factor @ factor.conj().T / cells
    zeta = zeta_matrix(fixture.grid, fixture.support)
    worst = 0.0
    for side in UncertaintySide:
        xi = xi_matrix(covariance, zeta, config.delay_bins, config.receive_antennas, side)
        scale = max(np.linalg.norm(xi), 1.0)
        asymmetry = np.linalg.norm(xi - xi.conj().T) / scale
        negativity = max(-np.linalg.eigvalsh(xi).min(), 0.0) / scale
        worst = max(worst, asymmetry, negativity)
    return CheckResult("uncertainty matrices are Hermitian PSD", worst < 1e-9, f"worst {worst:.3g}")


def check_mimo(fixture: _Fixture) -> CheckResult:
    config, grid, support, rng = fixture.config, fixture.grid, fixture.support, fixture.rng
    transmit, receive = config.transmit_antennas, config.receive_antennas
    paths = len(fixture.paths)
    channel = MimoChannel(
        np.array([path.delay_tap for path in fixture.paths]),
        np.array([path.doppler_index for path in fixture.paths]),
        complex_noise(rng, (receive, transmit, paths), 1.0),
    )
    frames = [fixture.random_frame() for _ in range(transmit)]
    received = simulate_mimo_frame(frames, fixture.precoders, channel, grid, config.mimo, 0.0, rng)
    block = mimo_block_channel(channel, grid)
    stacked_data = np.vstack([frame.data for frame in frames])
    stacked_pilot = np.vstack([frame.pilot for frame in frames])
    dictionary = mimo_pilot_dictionary([frame.pilot for frame in frames], grid, support, transmit)
    observed = decouple(received, fixture.precoders.pilot)
    rows = config.delay_bins
    dictionary_error = max(
        _relative(
            dictionary
            @ np.concatenate(
                [grid_coefficients(channel.paths(r, t), support) for t in range(transmit)]
            ),
            vec(observed[r * rows : (r + 1) * rows]),
        )
        for r in range(receive)
    )
    error = max(
        _relative(decouple(received, fixture.precoders.data), block @ stacked_data),
        _relative(observed, block @ stacked_pilot),
        dictionary_error,
    )
    return CheckResult("multi-antenna decoupling and dictionary", error < TOLERANCE, f"error {error:.3g}")


CHECKS: list[Callable[[_Fixture], CheckResult]] = [
    check_frame_timing,
    check_permutation_order,
    check_precoders,
    check_decoupling,
    check_pipeline,
    check_sample_level,
    check_dictionaries,
    check_reconstruction,
    check_uncertainty,
]


def run_invariant_suite(config: ExperimentConfig) -> list[CheckResult]:
    fixture = _Fixture(config)
    checks = CHECKS + [check_mimo] if config.is_mimo else CHECKS
    results = []
    for check in checks:
        result = check(fixture)
        (logger.debug if result.passed else logger.error)("%s: %s", result.name, result.detail)
        results.append(result)
    return results
