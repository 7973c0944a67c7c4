import numpy as np
import pytest
from numpy.testing import assert_allclose

from otfsbl.precoding import (
    DdFrame,
    PrecoderPair,
    UnitarySource,
    decouple,
    make_precoders,
    pilot_block,
    superimpose,
)
from otfsbl.util import complex_noise


def _frame(rng, rows=8, data_columns=6, pilot_columns=2) -> DdFrame:
    return DdFrame(
        complex_noise(rng, (rows, data_columns), np.sqrt(0.5)),
        pilot_block(rng, rows, pilot_columns, 0.5),
        0.5,
        0.5,
    )


class TestPrecoders:
    """Semi-orthogonal precoder construction."""

    @pytest.mark.parametrize("source", list(UnitarySource))
    def test_semi_orthogonal(self, source, rng):
        pc = make_precoders(8, 2, source, rng)
        assert_allclose(pc.pilot.conj().T @ pc.pilot, np.eye(2), atol=1e-12)
        assert_allclose(pc.data.conj().T @ pc.data, np.eye(6), atol=1e-12)
        assert_allclose(pc.pilot.conj().T @ pc.data, 0, atol=1e-12)
        assert (pc.pilot_columns, pc.data_columns, pc.frame_columns) == (2, 6, 8)

    def test_pilot_takes_leading_columns(self):
        pc = make_precoders(4, 1, UnitarySource.IDENTITY)
        assert_allclose(pc.pilot[:, 0], [1, 0, 0, 0])

    @pytest.mark.parametrize("pilot_columns", [0, 8])
    def test_rejects_pilot_width(self, pilot_columns):
        with pytest.raises(ValueError, match="Pilot columns"):
            make_precoders(8, pilot_columns)

    def test_rejects_overlapping_precoders(self):
        unitary = np.eye(4)
        with pytest.raises(ValueError, match="semi-orthogonal"):
            PrecoderPair(unitary[:, :1], unitary[:, :3])


class TestFrame:
    """Frame superposition and decoupling."""

    def test_power_split_must_sum_to_one(self, rng):
        with pytest.raises(ValueError, match="sum to one"):
            DdFrame(np.zeros((4, 3)), np.zeros((4, 1)), 0.6, 0.6)

    def test_pilot_block_power(self, rng):
        pilots = pilot_block(rng, 8, 2, 0.25)
        assert_allclose(np.abs(pilots), 0.5)

    def test_decoupling_recovers_blocks(self, rng):
        pc = make_precoders(8, 2, UnitarySource.RANDOM, rng)
        frame = _frame(rng)
        transmitted = superimpose(frame, pc)
        assert_allclose(decouple(transmitted, pc.data), frame.data, atol=1e-10)
        assert_allclose(decouple(transmitted, pc.pilot), frame.pilot, atol=1e-10)

    def test_pilot_does_not_leak_into_data(self, rng):
        pc = make_precoders(8, 2)
        for _ in range(100):
            channel = complex_noise(rng, (8, 8), 1.0)
            pilots = pilot_block(rng, 8, 2, 0.5)
            leak = decouple(channel @ pilots @ pc.pilot.conj().T, pc.data)
            assert np.linalg.norm(leak) < 1e-9

    def test_shape_mismatch(self, rng):
        pc = make_precoders(8, 1)
        with pytest.raises(ValueError, match="do not match precoders"):
            superimpose(_frame(rng), pc)
