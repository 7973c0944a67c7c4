import numpy as np

from otfsbl.config import ChannelSource, ExperimentConfig
from otfsbl.grid import DelayDopplerPath
from otfsbl.modem import MimoChannel
from otfsbl.util import complex_noise


def _random_taps(config: ExperimentConfig, rng: np.random.Generator, fractional: bool):
    support = config.support
    cells = rng.choice(support.size, size=config.paths, replace=False)
    delays, grid_indices = np.divmod(cells, support.doppler_grid_points)
    dopplers = grid_indices * support.max_doppler / support.doppler_grid_points
    if fractional:
        dopplers = dopplers + rng.uniform(0, 1, size=cells.size) * (
            support.max_doppler / support.doppler_grid_points
        )
    return delays, dopplers.astype(float)


def generate_channel(
    config: ExperimentConfig, rng: np.random.Generator
) -> list[DelayDopplerPath] | MimoChannel:
    """Draw the channel of one trial; multi-antenna configs share the support across pairs."""
    match config.channel_source:
        case ChannelSource.FIXED_PROFILE:
            delays, dopplers = config.profile_taps()
            powers = np.asarray(config.profile_powers) / np.sum(config.profile_powers)
        case ChannelSource.RANDOM_ON_GRID | ChannelSource.RANDOM_FRACTIONAL:
            delays, dopplers = _random_taps(
                config, rng, config.channel_source == ChannelSource.RANDOM_FRACTIONAL
            )
            powers = np.full(delays.size, 1 / delays.size)
    shape = (config.receive_antennas, config.transmit_antennas, delays.size)
    gains = complex_noise(rng, shape, 1.0) * np.sqrt(powers)
    channel = MimoChannel(delays, dopplers, gains)
    if config.is_mimo:
        return channel
    return channel.paths(0, 0)
