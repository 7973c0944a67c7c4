import asyncio
import csv
from pathlib import Path

import numpy as np
import pytest
from conftest import preset

from otfsbl.config import ConfigError, Scheme
from otfsbl.detection import DetectorRule
from otfsbl.estimators import lmmse_channel_estimate, reconstruct_dd_channel
from otfsbl.grid import DelayDopplerPath
from otfsbl.harness import (
    Trial,
    collect_trials,
    efficiency,
    generate_channel,
    nmse,
    nmse_by_iteration,
    run_sweep,
    run_trial,
    ser,
    trial_rng,
)
from otfsbl.harness.sweep import CSV_HEADER, aggregate
from otfsbl.modem import simulate_frame
from otfsbl.precoding import DdFrame, make_precoders, pilot_block, superimpose


class TestProfiles:
    def test_system1_taps(self):
        delays, dopplers = preset("system1").profile_taps()
        assert delays.tolist() == [1, 2, 3, 4, 5]
        assert dopplers.tolist() == [0, 1, 2, 4, 6]

    def test_system2_taps(self):
        delays, dopplers = preset("system2").profile_taps()
        assert delays.tolist() == [1, 2, 3, 4, 5]
        assert dopplers.tolist() == [0, 1, 2, 3, 4]

    def test_fractional_doppler_kept(self):
        _, dopplers = preset("system1", fractional_doppler=True).profile_taps()
        assert dopplers[1] == pytest.approx(470 * 32 / 15000)
        assert dopplers[1] == pytest.approx(1.0027, abs=1e-4)

    def test_profile_outside_support(self):
        with pytest.raises(ConfigError, match="max_delay"):
            preset("system1", max_delay=4)
        with pytest.raises(ConfigError, match="max_doppler"):
            preset("system1", max_doppler=6)

    def test_fixed_profile_powers_normalized(self, rng):
        config = preset("system1")
        draws = [
            sum(abs(path.gain) ** 2 for path in generate_channel(config, rng)) for _ in range(4000)
        ]
        assert np.mean(draws) == pytest.approx(1.0, rel=0.05)


class TestRandomChannels:
    def test_on_grid_cells_are_distinct(self, rng):
        config = preset("system1-small", paths=5)
        for _ in range(50):
            paths = generate_channel(config, rng)
            assert len(paths) == 5
            assert len({(path.delay_tap, path.doppler_index) for path in paths}) == 5
            for path in paths:
                assert 0 <= path.delay_tap < config.max_delay
                assert float(path.doppler_index).is_integer()

    def test_on_grid_unit_average_power(self, rng):
        config = preset("system1-small", paths=5)
        draws = [
            sum(abs(path.gain) ** 2 for path in generate_channel(config, rng)) for _ in range(10_000)
        ]
        assert np.mean(draws) == pytest.approx(1.0, rel=0.05)

    def test_fractional_stays_inside_support(self, rng):
        config = preset("system3")
        for _ in range(20):
            for path in generate_channel(config, rng):
                assert 0 <= path.doppler_index < config.max_doppler

    def test_mimo_pairs_share_support(self, rng):
        config = preset("system1-small-mimo")
        channel = generate_channel(config, rng)
        assert channel.gains.shape == (2, 2, config.paths)
        first = channel.paths(0, 0)
        other = channel.paths(1, 0)
        assert [p.delay_tap for p in first] == [p.delay_tap for p in other]
        assert not np.allclose([p.gain for p in first], [p.gain for p in other])


class TestMetrics:
    def test_nmse(self):
        truth = np.eye(2)
        assert nmse(2 * truth, truth) == pytest.approx(1.0)
        assert nmse(truth, truth) == 0.0

    def test_nmse_rejects_zero_truth(self):
        with pytest.raises(ValueError, match="all-zero"):
            nmse(np.ones((2, 2)), np.zeros((2, 2)))

    def test_nmse_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            nmse(np.ones((2, 2)), np.ones((2, 3)))

    def test_ser(self):
        assert ser(np.array([[0, 1], [2, 3]]), np.array([[0, 1], [2, 0]])) == 0.25

    def test_ser_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            ser(np.zeros(3), np.zeros(4))

    def test_nmse_by_iteration_holds_final_value(self):
        curve = nmse_by_iteration([[4.0, 2.0, 1.0], [2.0], [], [6.0, 3.0]])
        assert curve == pytest.approx([4.0, 7 / 3, 2.0])
        assert nmse_by_iteration([[], []]).size == 0

    @pytest.mark.parametrize(
        "name, ap_sip, ep_siso, ep_mimo",
        [
            ("system1-mimo", 0.9688, 0.7178, 0.7842),
            ("system2-mimo", 0.9375, 0.4355, 0.5684),
            ("system3-mimo", 0.9688, 0.7178, 0.8174),
        ],
    )
    def test_efficiency(self, name, ap_sip, ep_siso, ep_mimo):
        result = efficiency(preset(name))
        assert round(result.ap_sip, 4) == ap_sip
        assert round(result.ep_siso, 4) == ep_siso
        assert round(result.ep_mimo, 4) == ep_mimo

    def test_superimposed_beats_embedded(self):
        for name in ("system1", "system2", "system3"):
            result = efficiency(preset(name))
            assert result.ap_sip > result.ep_siso


class TestTrial:
    def test_rng_streams_differ_per_index(self):
        draws = {
            (s, t): trial_rng(5, s, t).standard_normal()
            for s in range(2)
            for t in range(2)
        }
        assert len(set(draws.values())) == 4
        assert trial_rng(5, 1, 1).standard_normal() == draws[(1, 1)]

    def test_deterministic(self, tiny_config):
        first = run_trial(tiny_config, 1, 2)
        second = run_trial(tiny_config, 1, 2)
        for field in ("nmse", "ser", "iterations"):
            assert getattr(first, field) == pytest.approx(getattr(second, field), nan_ok=True)
        assert first.bcrb == second.bcrb

    def test_reports_every_scheme(self, tiny_config):
        result = run_trial(tiny_config, 0, 0)
        assert set(result.ser) == set(tiny_config.schemes)
        assert Scheme.PERFECT_CSI not in result.nmse
        assert Scheme.MMSE not in result.iterations
        assert result.bcrb_normalized > 0

    def test_mmse_matches_direct_estimate(self, tiny_config):
        trial = Trial(tiny_config, 1, 0)
        coefficients = lmmse_channel_estimate(
            trial.pilot_observations[:, 0], trial.pilot_dictionary, trial.pilot_noise
        )
        expected = nmse(
            reconstruct_dd_channel(coefficients, tiny_config.grid, tiny_config.support), trial.truth
        )
        assert run_trial(tiny_config, 1, 0).nmse[Scheme.MMSE] == pytest.approx(expected)

    def test_nmse_trajectory(self, tiny_config):
        result = run_trial(tiny_config, 1, 0)
        assert Scheme.MMSE not in result.nmse_trajectory
        for scheme in (Scheme.PA_BL, Scheme.DA_BL_ZF, Scheme.DA_BL_LMMSE):
            trajectory = result.nmse_trajectory[scheme]
            assert len(trajectory) == result.iterations[scheme]
            assert trajectory[-1] == pytest.approx(result.nmse[scheme])

    def test_mimo_trial(self, tiny_config):
        config = tiny_config.model_copy(
            update={
                "transmit_antennas": 2,
                "receive_antennas": 2,
                "schemes": [Scheme.MMSE, Scheme.PA_BL, Scheme.DA_BL_LMMSE, Scheme.PERFECT_CSI],
            }
        )
        result = run_trial(config, 1, 0)
        assert set(result.ser) == set(config.schemes)
        trial = Trial(config, 1, 0)
        assert trial.truth.shape == (16, 16)
        assert trial.true_indices.shape == (16, config.data_width)

    def test_snr_bookkeeping(self):
        config = preset("system1-small")
        grid = config.grid
        identity = [DelayDopplerPath(0, 0.0, 1.0)]
        rng = np.random.default_rng(3)
        precoders = make_precoders(config.doppler_bins, config.pilot_columns, config.precoder, rng)
        for snr_db in (0.0, 15.0):
            noise_std = np.sqrt(config.noise_variance(snr_db))
            signal_power = noise_power = 0.0
            for _ in range(1000):
                frame = DdFrame(
                    np.sqrt(config.data_power)
                    * config.constellation.modulate(
                        config.constellation.random_indices(rng, (config.delay_bins, config.data_width))
                    ),
                    pilot_block(rng, config.delay_bins, config.pilot_columns, config.pilot_power),
                    config.data_power,
                    config.pilot_power,
                )
                transmitted = superimpose(frame, precoders)
                received = simulate_frame(frame, precoders, identity, grid, noise_std, rng)
                signal_power += np.mean(abs(transmitted) ** 2)
                noise_power += np.mean(abs(received - transmitted) ** 2)
            measured = 10 * np.log10(signal_power / noise_power)
            assert measured == pytest.approx(snr_db, abs=0.2)


class TestSweep:
    def test_rows_and_csv(self, tiny_config, tmp_path: Path):
        output = tmp_path / "out" / "tiny.csv"
        rows = run_sweep(tiny_config, threads=1, output=output)
        assert len(rows) == len(tiny_config.snr_db) * (len(tiny_config.schemes) + 1)
        assert [row.scheme for row in rows[:6]] == [
            "mmse",
            "pa_bl",
            "da_bl_zf",
            "da_bl_lmmse",
            "perfect_csi",
            "bcrb",
        ]
        with output.open(newline="", encoding="utf-8") as file:
            records = list(csv.reader(file))
        assert tuple(records[0]) == CSV_HEADER
        assert output.read_text(encoding="utf-8").splitlines()[0] == (
            "snr_db,scheme,metric,value,n_trials,master_seed"
        )
        body = records[1:]
        assert len(body) == 2 * (4 + 5 + 5 + 5 + 2 + 2)
        assert {record[2] for record in body} == {
            "nmse_mean",
            "nmse_median",
            "ser_mean",
            "em_iters_mean",
            "bcrb",
            "failures",
        }
        assert all(record[4] == "3" and record[5] == "11" for record in body)
        assert [record[0] for record in body[:3]] == ["10", "10", "10"]

    def test_identical_across_thread_counts(self, tiny_config, tmp_path: Path):
        single, pooled = tmp_path / "single.csv", tmp_path / "pooled.csv"
        run_sweep(tiny_config, threads=1, output=single)
        run_sweep(tiny_config, threads=3, output=pooled)
        assert single.read_bytes() == pooled.read_bytes()

    def test_aggregate_skips_failed_trials(self, tiny_config):
        results = [[run_trial(tiny_config, s, t) for t in range(2)] for s in range(2)]
        results[0][0].nmse[Scheme.PA_BL] = float("nan")
        rows = aggregate(tiny_config, results)
        pa_bl = next(row for row in rows if row.scheme == "pa_bl")
        assert pa_bl.metrics["nmse_mean"] == pytest.approx(results[0][1].nmse[Scheme.PA_BL])

    def test_failures_are_counted(self, tiny_config):
        results = [[run_trial(tiny_config, s, t) for t in range(3)] for s in range(2)]
        results[0][0].failures["pa_bl"] = "posterior precision is not positive definite"
        results[0][2].failures["pa_bl"] = "hyperparameter update diverged"
        results[1][1].failures["bcrb"] = "singular information matrix"
        rows = aggregate(tiny_config, results)
        counts = {(row.snr_db, row.scheme): row.metrics["failures"] for row in rows}
        assert counts[(10, "pa_bl")] == 2
        assert counts[(20, "pa_bl")] == 0
        assert counts[(20, "bcrb")] == 1
        assert counts[(10, "mmse")] == 0


def _medians(rows, snr_db: float) -> dict[str, float]:
    return {
        row.scheme: row.metrics["nmse_median"]
        for row in rows
        if row.snr_db == snr_db and "nmse_median" in row.metrics
    }


@pytest.mark.slow
def test_pilot_only_error_falls_with_snr():
    config = preset("system1-small", trials=30, snr_db=[0, 15], schemes=["pa_bl"])
    rows = run_sweep(config, threads=4)
    assert _medians(rows, 15)["pa_bl"] < _medians(rows, 0)["pa_bl"]


@pytest.mark.slow
@pytest.mark.parametrize("name", ["system1-small", "system1-small-mimo"])
def test_scheme_ordering(name):
    config = preset(
        name, snr_db=[0, 5, 10, 15], schemes=["mmse", "pa_bl", "da_bl_lmmse"], trials=200
    )
    rows = run_sweep(config, threads=4)
    for snr_db in config.snr_db:
        medians = _medians(rows, snr_db)
        assert medians["da_bl_lmmse"] <= medians["pa_bl"] <= medians["mmse"], snr_db


@pytest.mark.slow
def test_perfect_csi_error_free_at_high_snr():
    config = preset("system1-small", snr_db=[40], schemes=["perfect_csi"], trials=200)
    (point,) = asyncio.run(collect_trials(config, 4))
    error_free = np.mean([result.ser[Scheme.PERFECT_CSI] == 0 for result in point])
    assert error_free >= 0.99


@pytest.mark.slow
def test_data_aided_support_recovery():
    config = preset("system1-small", snr_db=[30])
    recovered = 0
    for trial_index in range(200):
        trial = Trial(config, 0, trial_index)
        output = trial.data_aided(DetectorRule.LMMSE_UNCERTAINTY)
        active = np.flatnonzero(trial.true_coefficients())
        strongest = np.argsort(output.posterior.hyperparameters)[-active.size :]
        recovered += set(strongest.tolist()) == set(active.tolist())
    assert recovered >= 190


@pytest.mark.slow
def test_data_aided_error_respects_bound():
    config = preset(
        "system1-small", snr_db=[0, 5, 10, 15], schemes=["da_bl_lmmse"], trials=100
    )
    gaps = []
    for point in asyncio.run(collect_trials(config, 4)):
        mse = np.nanmean([result.mse[Scheme.DA_BL_LMMSE] for result in point])
        bound = np.nanmean([result.bcrb for result in point])
        assert mse >= 0.8 * bound
        gaps.append(mse / bound)
    assert gaps[-1] < gaps[0]


@pytest.mark.slow
def test_data_aided_ser_tracks_perfect_csi():
    # 420 frames of 16 x 15 data symbols give just over 1e5 decisions per point
    config = preset(
        "system1-small",
        snr_db=[8, 10, 12, 14],
        schemes=["da_bl_lmmse", "perfect_csi"],
        trials=420,
    )
    rows = run_sweep(config, threads=4)
    rates = {
        (row.snr_db, row.scheme): row.metrics["ser_mean"]
        for row in rows
        if "ser_mean" in row.metrics
    }
    snr_db = min(
        config.snr_db,
        key=lambda snr: abs(np.log10(max(rates[(snr, "perfect_csi")], 1e-9)) + 2),
    )
    assert rates[(snr_db, "da_bl_lmmse")] <= 3 * rates[(snr_db, "perfect_csi")]
