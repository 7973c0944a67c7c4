from dataclasses import dataclass
from typing import Sequence

import numpy as np

from otfsbl.config import ExperimentConfig


def nmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    if estimate.shape != truth.shape:
        raise ValueError(f"Estimate {estimate.shape} and truth {truth.shape} differ in shape")
    reference = np.linalg.norm(truth) ** 2
    if reference == 0:
        raise ValueError("NMSE is undefined for an all-zero channel")
    return float(np.linalg.norm(estimate - truth) ** 2 / reference)


def ser(detected: np.ndarray, truth: np.ndarray) -> float:
    if detected.shape != truth.shape:
        raise ValueError(f"Detected {detected.shape} and true {truth.shape} symbols differ in shape")
    return float(np.mean(detected != truth))


@dataclass(frozen=True)
class Efficiency:
    ap_sip: float
    ep_siso: float
    ep_mimo: float
    transmit_antennas: int


def efficiency(config: ExperimentConfig, transmit_antennas: int | None = None) -> Efficiency:
    """Share of a frame carrying data, for superimposed and embedded pilots.

    The embedded-pilot figures assume an integer Doppler grid with guard
    regions sized by the delay and Doppler spreads.
    """
    antennas = transmit_antennas or config.transmit_antennas
    frame = config.delay_bins * config.doppler_bins
    doppler_guard = 2 * config.max_doppler + 1
    return Efficiency(
        ap_sip=config.data_width / config.doppler_bins,
        ep_siso=1 - (2 * config.max_delay + 1) * doppler_guard / frame,
        ep_mimo=1
        - (antennas * config.max_delay + config.max_delay + antennas)
        * doppler_guard
        / (frame * antennas),
        transmit_antennas=antennas,
    )


def nmse_by_iteration(trajectories: Sequence[Sequence[float]]) -> np.ndarray:
    """Mean NMSE after each EM iteration across trials.

    A run that stopped early holds its final value for the remaining
    iterations; failed runs (empty or NaN trajectories) are skipped.
    """
    usable = [list(trajectory) for trajectory in trajectories if len(trajectory)]
    if not usable:
        return np.empty(0)
    length = max(len(trajectory) for trajectory in usable)
    padded = np.array(
        [trajectory + trajectory[-1:] * (length - len(trajectory)) for trajectory in usable]
    )
    return np.nanmean(padded, axis=0)
