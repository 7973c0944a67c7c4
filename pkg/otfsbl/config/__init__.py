from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Annotated, Self

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from otfsbl.config.parser import ConfigError, parse_config
from otfsbl.detection import Constellation, Modulation
from otfsbl.estimators import EmSettings
from otfsbl.grid import ChannelSupport, OtfsGrid
from otfsbl.modem import MimoConfig
from otfsbl.precoding import UnitarySource

logger = getLogger("config")


class Scheme(Enum):
    MMSE = "mmse"
    PA_BL = "pa_bl"
    DA_BL_ZF = "da_bl_zf"
    DA_BL_LMMSE = "da_bl_lmmse"
    PERFECT_CSI = "perfect_csi"


class ChannelSource(Enum):
    FIXED_PROFILE = "fixed_profile"
    RANDOM_ON_GRID = "random_on_grid"
    RANDOM_FRACTIONAL = "random_fractional"


class PulseShape(Enum):
    RECTANGULAR = "rectangular"
    CUSTOM = "custom"


def _as_list(value):
    return [value] if isinstance(value, (str, int, float)) else value


FloatList = Annotated[list[float], BeforeValidator(_as_list)]
SchemeList = Annotated[list[Scheme], BeforeValidator(_as_list)]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    delay_bins: int = Field(ge=2)
    doppler_bins: int = Field(ge=2)
    subcarrier_spacing_hz: float = Field(gt=0)
    pilot_columns: int = Field(1, ge=1)
    data_columns: int | None = None
    max_delay: int = Field(ge=1)
    max_doppler: int = Field(ge=1)
    doppler_grid_points: int | None = None
    transmit_antennas: int = Field(1, ge=1)
    receive_antennas: int = Field(1, ge=1)
    modulation: Modulation = Modulation.PSK4
    data_power: float = Field(0.5, gt=0, le=1)
    pilot_power: float = Field(0.5, gt=0, le=1)
    pulse_shape: PulseShape = PulseShape.RECTANGULAR
    tx_pulse: FloatList | None = None
    rx_pulse: FloatList | None = None
    precoder: UnitarySource = UnitarySource.FOURIER
    channel_source: ChannelSource = ChannelSource.RANDOM_ON_GRID
    paths: int | None = Field(None, ge=1)
    profile_delays_us: FloatList = []
    profile_dopplers_hz: FloatList = []
    profile_powers: FloatList = []
    fractional_doppler: bool = False
    snr_db: FloatList = Field(min_length=1)
    trials: int = Field(1, ge=1)
    schemes: SchemeList = [Scheme.MMSE, Scheme.PA_BL, Scheme.DA_BL_LMMSE]
    em: EmSettings = EmSettings()
    master_seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_consistency(self) -> Self:
        if self.pilot_columns >= self.doppler_bins:
            raise ValueError(
                f"pilot_columns ({self.pilot_columns}) must be smaller than doppler_bins ({self.doppler_bins})"
            )
        if self.data_columns is not None and self.data_columns + self.pilot_columns != self.doppler_bins:
            raise ValueError("data_columns + pilot_columns must equal doppler_bins")
        if abs(self.data_power + self.pilot_power - 1) > 1e-9:
            raise ValueError("data_power + pilot_power must equal 1")
        if self.max_delay > self.delay_bins:
            raise ValueError("max_delay cannot exceed delay_bins")
        if 2 * self.max_doppler > self.doppler_bins:
            raise ValueError("max_doppler must be at most half of doppler_bins")
        if self.grid_points < self.max_doppler:
            raise ValueError("doppler_grid_points cannot be smaller than max_doppler")
        if self.pulse_shape == PulseShape.CUSTOM:
            for name in ("tx_pulse", "rx_pulse"):
                pulse = getattr(self, name)
                if pulse is None or len(pulse) != self.delay_bins:
                    raise ValueError(f"{name} needs exactly {self.delay_bins} samples")
        elif self.tx_pulse is not None or self.rx_pulse is not None:
            raise ValueError("tx_pulse and rx_pulse require pulse_shape = custom")
        match self.channel_source:
            case ChannelSource.FIXED_PROFILE:
                lengths = {
                    len(self.profile_delays_us),
                    len(self.profile_dopplers_hz),
                    len(self.profile_powers),
                }
                if len(lengths) != 1 or 0 in lengths:
                    raise ValueError(
                        "profile_delays_us, profile_dopplers_hz and profile_powers need equal nonzero lengths"
                    )
                if any(power <= 0 for power in self.profile_powers):
                    raise ValueError("profile_powers must be positive")
                delays, dopplers = self.profile_taps()
                if np.any(delays < 0) or np.any(delays >= self.max_delay):
                    raise ValueError(
                        f"profile delay taps {delays.tolist()} fall outside max_delay {self.max_delay}"
                    )
                if np.any(dopplers < 0) or np.any(dopplers >= self.max_doppler):
                    raise ValueError(
                        f"profile Doppler indices {dopplers.tolist()} fall outside max_doppler {self.max_doppler}"
                    )
            case ChannelSource.RANDOM_ON_GRID | ChannelSource.RANDOM_FRACTIONAL:
                if self.paths is None:
                    raise ValueError(f"channel_source = {self.channel_source.value} requires paths")
                if self.paths > self.max_delay * self.grid_points:
                    raise ValueError("paths exceeds the number of grid cells")
        return self

    def profile_taps(self) -> tuple[np.ndarray, np.ndarray]:
        """Map the fixed profile in microseconds and Hz onto delay taps and Doppler indices."""
        delays = np.rint(
            np.asarray(self.profile_delays_us) * 1e-6 * self.delay_bins * self.subcarrier_spacing_hz
        ).astype(int)
        dopplers = np.asarray(self.profile_dopplers_hz) * self.doppler_bins / self.subcarrier_spacing_hz
        if not self.fractional_doppler:
            dopplers = np.rint(dopplers)
        return delays, dopplers

    @property
    def grid_points(self) -> int:
        return self.doppler_grid_points if self.doppler_grid_points is not None else self.max_doppler

    @property
    def data_width(self) -> int:
        return self.doppler_bins - self.pilot_columns

    @property
    def grid(self) -> OtfsGrid:
        if self.pulse_shape == PulseShape.CUSTOM:
            return OtfsGrid(
                self.delay_bins,
                self.doppler_bins,
                self.subcarrier_spacing_hz,
                1 / self.subcarrier_spacing_hz,
                np.asarray(self.tx_pulse, dtype=complex),
                np.asarray(self.rx_pulse, dtype=complex),
            )
        return OtfsGrid.rectangular(self.delay_bins, self.doppler_bins, self.subcarrier_spacing_hz)

    @property
    def support(self) -> ChannelSupport:
        return ChannelSupport(self.max_delay, self.grid_points, self.max_doppler)

    @property
    def mimo(self) -> MimoConfig:
        return MimoConfig(self.transmit_antennas, self.receive_antennas)

    @property
    def is_mimo(self) -> bool:
        return self.transmit_antennas > 1 or self.receive_antennas > 1

    @property
    def constellation(self) -> Constellation:
        return Constellation.of(self.modulation)

    @property
    def mean_power(self) -> float:
        """Average per-entry DD transmit power of one antenna's frame."""
        return (self.data_width * self.data_power + self.pilot_columns * self.pilot_power) / self.doppler_bins

    def noise_variance(self, snr_db: float) -> float:
        return self.mean_power * 10 ** (-snr_db / 10)


def _describe(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in item['loc']) or 'config'}: {item['msg']}"
        for item in error.errors()
    )


def parse_experiment(text: str, **overrides) -> ExperimentConfig:
    values = parse_config(text)
    values.update(overrides)
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as error:
        raise ConfigError(_describe(error)) from error


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"Cannot read config {path}: {error.strerror}") from error
    config = parse_experiment(text, **overrides)
    logger.debug("Loaded %s: %s", path, config)
    return config
