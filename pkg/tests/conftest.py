from pathlib import Path

import numpy as np
import pytest

from otfsbl.config import ExperimentConfig, load_config, parse_experiment
from otfsbl.grid import ChannelSupport, DelayDopplerPath, OtfsGrid
from otfsbl.util import complex_noise

CONFIGS = Path(__file__).parent.parent / "configs"

TINY_CONFIG = """\
# small enough for a sweep inside a unit test
delay_bins = 8
doppler_bins = 4
subcarrier_spacing_hz = 15000
pilot_columns = 1
max_delay = 2
max_doppler = 2

channel_source = random_on_grid
paths = 2

snr_db = 10, 20
trials = 3
schemes = mmse, pa_bl, da_bl_zf, da_bl_lmmse, perfect_csi
em__max_iterations = 10
master_seed = 11
"""


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def grid() -> OtfsGrid:
    return OtfsGrid.rectangular(8, 8, 15000)


@pytest.fixture
def support() -> ChannelSupport:
    return ChannelSupport(max_delay=3, doppler_grid_points=3, max_doppler=3)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return parse_experiment(TINY_CONFIG)


@pytest.fixture
def tiny_config_file(tmp_path: Path) -> Path:
    path = tmp_path / "tiny.conf"
    path.write_text(TINY_CONFIG, encoding="utf-8")
    return path


def preset(name: str, **overrides) -> ExperimentConfig:
    return load_config(CONFIGS / f"{name}.conf", **overrides)


def random_paths(
    rng: np.random.Generator, support: ChannelSupport, count: int = 3
) -> list[DelayDopplerPath]:
    """Paths on distinct grid cells of ``support``."""
    cells = rng.choice(support.size, size=count, replace=False)
    return [
        DelayDopplerPath(
            int(cell // support.doppler_grid_points),
            support.doppler_exponent(int(cell % support.doppler_grid_points)),
            complex(complex_noise(rng, (), 1.0)),
        )
        for cell in cells
    ]
